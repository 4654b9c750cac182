// SPDX-License-Identifier: Apache-2.0
//! Windowed-sinc low-pass, the standard DDC readout and window integration.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use num_complex::Complex64;

use super::{DspError, Nco};
use crate::timebase::Frequency;

pub const FIR_TAPS: usize = 64;
pub const DECIMATION: usize = 8;

/// Hamming-windowed sinc with `n` taps and cutoff in cycles per sample,
/// normalised to unity DC gain.
pub fn lowpass_taps(n: usize, cutoff: f64) -> Vec<f64> {
    assert!(n >= 2 && cutoff > 0.0 && cutoff < 0.5);
    let mid = (n - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..n)
        .map(|k| {
            let x = k as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * cutoff
            } else {
                (TAU * cutoff * x).sin() / (PI * x)
            };
            let w = 0.54 - 0.46 * (TAU * k as f64 / (n - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// The 64-tap prototype with cutoff `fs/16`, shared by the DDC and the PFB.
pub(crate) fn prototype() -> &'static [f64] {
    static TAPS: OnceLock<Vec<f64>> = OnceLock::new();
    TAPS.get_or_init(|| lowpass_taps(FIR_TAPS, 1.0 / 16.0))
}

/// Causal FIR with zero initial state; output has the input's length.
pub fn fir_complex(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    (0..x.len())
        .map(|n| {
            taps.iter()
                .enumerate()
                .take(n + 1)
                .map(|(j, &h)| x[n - j] * h)
                .sum()
        })
        .collect()
}

/// Mix by `e^{-i2π·ddc_freq·n/adc_rate}`, low-pass, keep every 8th sample.
/// Output length is `floor(len/8)`; sample `m` is the filter output at input
/// index `8m`.
pub fn ddc_decimate(samples: &[f64], ddc_freq: f64, adc_rate: Frequency) -> Vec<Complex64> {
    let nco = Nco::from_normalized(ddc_freq / adc_rate.to_f64(), 0.0);
    let mixed: Vec<Complex64> = samples
        .iter()
        .enumerate()
        .map(|(n, &x)| nco.mixer_at(n as u64) * x)
        .collect();
    let h = prototype();
    (0..samples.len() / DECIMATION)
        .map(|m| {
            let n = m * DECIMATION;
            h.iter()
                .enumerate()
                .take(n + 1)
                .map(|(j, &c)| mixed[n - j] * c)
                .sum()
        })
        .collect()
}

/// Mean of the first `window` samples.
pub fn integrate(iq: &[Complex64], window: usize) -> Result<Complex64, DspError> {
    if window == 0 {
        return Err(DspError::EmptyWindow);
    }
    if window > iq.len() {
        return Err(DspError::WindowTooLong {
            window,
            len: iq.len(),
        });
    }
    Ok(iq[..window].iter().sum::<Complex64>() / window as f64)
}
