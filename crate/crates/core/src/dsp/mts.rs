// SPDX-License-Identifier: Apache-2.0
//! Multi-tile synchronization: converter latency per tile.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, tag};

/// Largest latency offset, in DAC samples, of an unaligned tile.
pub const MAX_UNSYNCED_OFFSET: u32 = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLatency {
    /// Per-tile offset in DAC sample periods.
    pub offsets: Vec<u32>,
    pub mts_enabled: bool,
}

impl TileLatency {
    pub fn aligned(tiles: usize) -> Self {
        TileLatency {
            offsets: vec![0; tiles],
            mts_enabled: true,
        }
    }

    pub fn offset(&self, tile: usize) -> u32 {
        self.offsets.get(tile).copied().unwrap_or(0)
    }

    pub fn is_aligned(&self) -> bool {
        self.offsets.windows(2).all(|w| w[0] == w[1])
    }
}

/// Enabled: every tile at offset 0. Disabled: each tile gets a seeded
/// offset in `0..=3` samples.
pub fn apply_mts(tiles: &TileLatency, enable: bool, seed: u64) -> TileLatency {
    let n = tiles.offsets.len();
    if enable {
        return TileLatency::aligned(n);
    }
    let mut rng = stream(seed, &[tag::MTS]);
    TileLatency {
        offsets: (0..n).map(|_| rng.random_range(0..=MAX_UNSYNCED_OFFSET)).collect(),
        mts_enabled: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn enabled_aligns_everything() {
        let t = TileLatency {
            offsets: vec![3, 1, 2, 0],
            mts_enabled: false,
        };
        let a = apply_mts(&t, true, 99);
        assert_eq!(a.offsets, vec![0, 0, 0, 0]);
        assert!(a.mts_enabled && a.is_aligned());
    }

    #[test]
    fn disabled_is_reproducible_and_sometimes_unequal() {
        let t = TileLatency::aligned(4);
        assert_eq!(apply_mts(&t, false, 5), apply_mts(&t, false, 5));
        let unequal = (0..20).filter(|&s| !apply_mts(&t, false, s).is_aligned()).count();
        assert!(unequal > 0);
    }

    proptest! {
        #[test]
        fn offsets_bounded(seed in any::<u64>(), n in 1usize..16) {
            let t = apply_mts(&TileLatency::aligned(n), false, seed);
            prop_assert_eq!(t.offsets.len(), n);
            prop_assert!(t.offsets.iter().all(|&o| o <= MAX_UNSYNCED_OFFSET));
        }
    }
}
