// SPDX-License-Identifier: Apache-2.0
//! Logical channels and where they live.
//!
//! Each board exposes six interpolated generators (ids 0–5, drive), six
//! full-speed generators (6–11, flux, each paired with DC channel `id − 6`)
//! and one multiplexed generator (12) feeding the readout line, with a
//! matching multiplexed readout (0).

use serde::{Deserialize, Serialize};

use super::experiment::ChannelKind;
use crate::dsp::GenKind;
use crate::qpu::{QpuTopology, COLS, N_QUBITS};
use crate::tproc::SyncModel;

pub const INTERPOLATED_GENS: std::ops::Range<u16> = 0..6;
pub const FULLSPEED_GENS: std::ops::Range<u16> = 6..12;
pub const MUX_GEN: u16 = 12;
pub const MUX_READOUT: u16 = 0;
pub const GENERATORS_PER_BOARD: usize = 13;
/// Generators per converter tile.
pub const GENS_PER_TILE: u16 = 4;
pub const TILES_PER_BOARD: usize = 4;

pub fn generator_kind(gen: u16) -> Option<GenKind> {
    if INTERPOLATED_GENS.contains(&gen) {
        Some(GenKind::Interpolated)
    } else if FULLSPEED_GENS.contains(&gen) {
        Some(GenKind::FullSpeed)
    } else if gen == MUX_GEN {
        Some(GenKind::Multiplexed { tones: crate::dsp::MAX_MUX_TONES })
    } else {
        None
    }
}

pub fn generator_tile(gen: u16) -> usize {
    (gen / GENS_PER_TILE) as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoardSpec {
    pub name: String,
    /// Cable skew of this board's whole clock tree.
    #[serde(default)]
    pub skew_ps: f64,
    /// RMS jitter on the DAC sample clock.
    #[serde(default)]
    pub jitter_ps: f64,
    #[serde(default = "yes")]
    pub mts: bool,
    #[serde(default)]
    pub sync_model: SyncModel,
}

fn yes() -> bool {
    true
}

impl BoardSpec {
    pub fn named(name: &str) -> Self {
        BoardSpec {
            name: name.into(),
            skew_ps: 0.0,
            jitter_ps: 0.0,
            mts: true,
            sync_model: SyncModel::Modified,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    pub board: String,
    pub kind: ChannelKind,
    pub generator: u16,
    /// Readout channels: the multiplexed tone/PFB slot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<u8>,
    pub qubit: usize,
    /// Flux channels: static bias in volts.
    #[serde(default)]
    pub dc_bias_v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardMap {
    pub boards: Vec<BoardSpec>,
    pub channels: Vec<ChannelSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MapError {
    #[error("`{path}`: {reason}")]
    Invalid { path: String, reason: String },
    #[error("generator {generator} on board `{board}` assigned to both `{first}` and `{second}`")]
    DoubleAssigned {
        board: String,
        generator: u16,
        first: String,
        second: String,
    },
    #[error("{count} readout tones on feedline {feedline} (at most 8)")]
    TooManyTones { feedline: String, count: usize },
}

impl BoardMap {
    /// Two boards, five qubits each: row 0 on board A (feedline 1), row 1 on
    /// board B (feedline 2). Qubit `q` uses drive generator `q mod 5`, flux
    /// generator `6 + q mod 5` and readout slot `q mod 5`.
    pub fn ladder_default(dc_bias: &[f64]) -> Self {
        let boards = vec![BoardSpec::named("A"), BoardSpec::named("B")];
        let mut channels = Vec::new();
        for q in 0..N_QUBITS {
            let board = if q < COLS { "A" } else { "B" }.to_string();
            let local = (q % COLS) as u16;
            channels.push(ChannelSpec {
                name: format!("q{q}.drive"),
                board: board.clone(),
                kind: ChannelKind::Drive,
                generator: local,
                slot: None,
                qubit: q,
                dc_bias_v: 0.0,
            });
            channels.push(ChannelSpec {
                name: format!("q{q}.flux"),
                board: board.clone(),
                kind: ChannelKind::Flux,
                generator: FULLSPEED_GENS.start + local,
                slot: None,
                qubit: q,
                dc_bias_v: dc_bias.get(q).copied().unwrap_or(0.0),
            });
            channels.push(ChannelSpec {
                name: format!("q{q}.ro"),
                board,
                kind: ChannelKind::Readout,
                generator: MUX_GEN,
                slot: Some(local as u8),
                qubit: q,
                dc_bias_v: 0.0,
            });
        }
        BoardMap { boards, channels }
    }

    /// Everything moved onto one board named `name`.
    pub fn single_board(&self, name: &str) -> Self {
        let mut boards = vec![self.boards.first().cloned().unwrap_or_else(|| BoardSpec::named(name))];
        boards[0].name = name.into();
        let channels = self
            .channels
            .iter()
            .map(|c| ChannelSpec { board: name.into(), ..c.clone() })
            .collect();
        BoardMap { boards, channels }
    }

    pub fn board_index(&self, name: &str) -> Option<usize> {
        self.boards.iter().position(|b| b.name == name)
    }

    pub fn channel(&self, name: &str) -> Option<(usize, &ChannelSpec)> {
        self.channels.iter().enumerate().find(|(_, c)| c.name == name)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let bad = |path: String, reason: String| Err(MapError::Invalid { path, reason });
        if self.boards.is_empty() {
            return bad("boards".into(), "at least one board is required".into());
        }
        for (i, b) in self.boards.iter().enumerate() {
            if self.boards[..i].iter().any(|o| o.name == b.name) {
                return bad(format!("boards[{i}].name"), format!("duplicate board `{}`", b.name));
            }
            if !(b.jitter_ps >= 0.0 && b.jitter_ps.is_finite()) {
                return bad(format!("boards[{i}].jitter_ps"), "must be finite and non-negative".into());
            }
            if !b.skew_ps.is_finite() {
                return bad(format!("boards[{i}].skew_ps"), "must be finite".into());
            }
        }
        let mut used: Vec<(usize, u16, Option<u8>, usize)> = Vec::new();
        for (i, c) in self.channels.iter().enumerate() {
            let path = |f: &str| format!("channels[{i}].{f}");
            if self.channels[..i].iter().any(|o| o.name == c.name) {
                return bad(path("name"), format!("duplicate channel `{}`", c.name));
            }
            let Some(b) = self.board_index(&c.board) else {
                return bad(path("board"), format!("unknown board `{}`", c.board));
            };
            if c.qubit >= N_QUBITS {
                return bad(path("qubit"), format!("qubit {} out of range", c.qubit));
            }
            let ok = match c.kind {
                ChannelKind::Drive => INTERPOLATED_GENS.contains(&c.generator),
                ChannelKind::Flux => FULLSPEED_GENS.contains(&c.generator),
                ChannelKind::Readout => c.generator == MUX_GEN,
            };
            if !ok {
                return bad(
                    path("generator"),
                    format!("generator {} cannot serve a {:?} channel", c.generator, c.kind),
                );
            }
            match (c.kind, c.slot) {
                (ChannelKind::Readout, None) => return bad(path("slot"), "readout channels need a slot".into()),
                (ChannelKind::Readout, Some(s)) if s as usize >= crate::dsp::MAX_MUX_TONES => {
                    return bad(path("slot"), format!("slot {s} out of range"));
                }
                (ChannelKind::Readout, _) => {}
                (_, Some(_)) => return bad(path("slot"), "only readout channels take a slot".into()),
                _ => {}
            }
            if !c.dc_bias_v.is_finite() {
                return bad(path("dc_bias_v"), "must be finite".into());
            }
            if let Some(&(_, _, _, first)) = used
                .iter()
                .find(|&&(ub, g, s, _)| ub == b && g == c.generator && s == c.slot)
            {
                return Err(MapError::DoubleAssigned {
                    board: c.board.clone(),
                    generator: c.generator,
                    first: self.channels[first].name.clone(),
                    second: c.name.clone(),
                });
            }
            used.push((b, c.generator, c.slot, i));
        }
        for line in [1u8, 2] {
            let count = self
                .channels
                .iter()
                .filter(|c| c.kind == ChannelKind::Readout && QpuTopology::feedline(c.qubit) == line)
                .count();
            if count > crate::qpu::MAX_TONES_PER_FEEDLINE {
                return Err(MapError::TooManyTones {
                    feedline: line.to_string(),
                    count,
                });
            }
        }
        Ok(())
    }
}
