// SPDX-License-Identifier: Apache-2.0
//! Critically sampled 8-channel polyphase filter bank.
//!
//! Input is the complex IQ stream of an ADC tile in IQ mode. Channel `k` is
//! centred at `k·fs/8` and decimated by 8.

use std::f64::consts::TAU;

use num_complex::Complex64;

use super::filter::prototype;
use super::{DspError, Nco, DECIMATION};
use crate::timebase::Frequency;

pub const PFB_CHANNELS: usize = 8;

/// `y_k[m] = Σ_j h[j]·x[8m−j]·e^{+i2πkj/8}`, evaluated branch-wise with an
/// 8-point DFT.
pub fn pfb_channelize(samples: &[Complex64]) -> Result<Vec<Vec<Complex64>>, DspError> {
    if !samples.len().is_multiple_of(PFB_CHANNELS) {
        return Err(DspError::LengthNotMultiple {
            len: samples.len(),
            multiple: PFB_CHANNELS,
        });
    }
    let h = prototype();
    let m_out = samples.len() / DECIMATION;
    let twiddle: Vec<Complex64> = (0..PFB_CHANNELS)
        .map(|p| Complex64::from_polar(1.0, TAU * p as f64 / PFB_CHANNELS as f64))
        .collect();
    let mut out = (0..PFB_CHANNELS).map(|_| Vec::with_capacity(m_out)).collect::<Vec<_>>();
    let mut branch = [Complex64::new(0.0, 0.0); PFB_CHANNELS];
    for m in 0..m_out {
        let n = m * DECIMATION;
        for (p, b) in branch.iter_mut().enumerate() {
            *b = Complex64::new(0.0, 0.0);
            let mut j = p;
            while j < h.len() && j <= n {
                *b += samples[n - j] * h[j];
                j += PFB_CHANNELS;
            }
        }
        for (k, ch) in out.iter_mut().enumerate() {
            let y: Complex64 = branch
                .iter()
                .enumerate()
                .map(|(p, b)| b * twiddle[(k * p) % PFB_CHANNELS])
                .sum();
            ch.push(y);
        }
    }
    Ok(out)
}

/// Shift a tone at `offset_hz` from the subband centre down to DC.
/// `channel_rate` is the decimated stream rate, `fs/8`.
pub fn fine_demod(stream: &[Complex64], offset_hz: f64, channel_rate: Frequency) -> Vec<Complex64> {
    let nco = Nco::from_normalized(offset_hz / channel_rate.to_f64(), 0.0);
    stream
        .iter()
        .enumerate()
        .map(|(m, &y)| y * nco.mixer_at(m as u64))
        .collect()
}
