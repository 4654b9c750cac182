// SPDX-License-Identifier: Apache-2.0
//! Exact Nyquist-zone arithmetic.

use num_rational::Ratio;

use crate::timebase::Frequency;

fn freq(r: Ratio<u128>) -> Frequency {
    Frequency::from_ratio(*r.numer(), *r.denom()).expect("reduced ratio has non-zero denominator")
}

/// 1-based zone: `floor(f / (fs/2)) + 1`.
pub fn nyquist_zone(f: Frequency, fs: Frequency) -> u32 {
    assert!(!fs.is_zero(), "sample rate must be positive");
    let half = fs.ratio() / Ratio::from_integer(2);
    let z = (f.ratio() / half).floor().to_integer();
    u32::try_from(z + 1).expect("zone index overflow")
}

/// Apparent frequency after sampling, in [0, fs/2].
pub fn alias_freq(f: Frequency, fs: Frequency) -> Frequency {
    assert!(!fs.is_zero(), "sample rate must be positive");
    let fsr = fs.ratio();
    let q = (f.ratio() / fsr).floor();
    let r = f.ratio() - q * fsr;
    if r * Ratio::from_integer(2) > fsr {
        freq(fsr - r)
    } else {
        freq(r)
    }
}

/// Frequency in `zone` whose alias is `alias` (which must lie in [0, fs/2]).
pub fn image_freq(alias: Frequency, zone: u32, fs: Frequency) -> Frequency {
    assert!(zone >= 1, "zones are 1-based");
    let k = Ratio::from_integer((zone / 2) as u128) * fs.ratio();
    if zone % 2 == 1 {
        freq(k + alias.ratio())
    } else {
        freq(k - alias.ratio())
    }
}

/// Analog frequency and phase of the `zone` image of the digital sequence
/// `cos(2π·digital·i/fs + phase)`. Mirrored images carry the negated phase.
pub fn zone_image(digital: Frequency, phase: f64, zone: u32, fs: Frequency) -> (Frequency, f64) {
    let a = alias_freq(digital, fs);
    let fsr = fs.ratio();
    let r = digital.ratio() - (digital.ratio() / fsr).floor() * fsr;
    let folded = r * Ratio::from_integer(2) > fsr;
    let sign = if folded { -1.0 } else { 1.0 };
    let f = image_freq(a, zone, fs);
    let mirrored = zone.is_multiple_of(2);
    (f, if mirrored { -sign * phase } else { sign * phase })
}
