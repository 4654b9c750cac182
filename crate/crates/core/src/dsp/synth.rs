// SPDX-License-Identifier: Apache-2.0
//! DDS generators: full-speed, ×16 interpolated and multiplexed.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{DspError, Waveform};
use crate::timebase::Frequency;

pub const INTERPOLATION: usize = 16;
pub const MAX_MUX_TONES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToneConfig {
    /// Digital frequency, below the sample rate.
    pub freq: Frequency,
    pub phase: f64,
    pub gain: f64,
}

impl ToneConfig {
    pub fn new(freq: Frequency, phase: f64, gain: f64) -> Self {
        ToneConfig { freq, phase, gain }
    }

    fn check(&self, rate: Frequency) -> Result<(), DspError> {
        if self.freq >= rate {
            return Err(DspError::ToneOutOfRange {
                freq: self.freq,
                rate,
            });
        }
        if !(0.0..=1.0).contains(&self.gain) {
            return Err(DspError::GainOutOfRange(self.gain));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    FullSpeed,
    Interpolated,
    Multiplexed { tones: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenConfig {
    pub kind: GenKind,
    pub dac_rate: Frequency,
    pub tile: usize,
}

impl GenConfig {
    pub fn new(kind: GenKind, dac_rate: Frequency, tile: usize) -> Result<Self, DspError> {
        if let GenKind::Multiplexed { tones } = kind {
            if tones > MAX_MUX_TONES {
                return Err(DspError::TooManyTones(tones));
            }
        }
        Ok(GenConfig {
            kind,
            dac_rate,
            tile,
        })
    }

    /// Rate at which envelope samples are consumed.
    pub fn envelope_rate(&self) -> Frequency {
        match self.kind {
            GenKind::Interpolated => self.dac_rate.div_int(INTERPOLATION as u64),
            _ => self.dac_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReadoutKind {
    Standard { ddc_freq: f64 },
    /// Fine DDS offset per PFB subband, in hertz.
    Multiplexed { fine: Vec<(usize, f64)> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutConfig {
    pub kind: ReadoutKind,
    pub adc_rate: Frequency,
}

/// Phase accumulator oscillator with a 64-bit tuning word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Nco {
    ftw: u64,
    phase0: u64,
}

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

impl Nco {
    /// Exact tuning word `round(freq / rate · 2^64)` where the rationals allow it.
    pub fn new(freq: Frequency, rate: Frequency, phase: f64) -> Self {
        let q = freq.ratio() / rate.ratio();
        let (num, den) = (*q.numer(), *q.denom());
        let ftw = if num < den && num < (1u128 << 64) {
            (((num << 64) + den / 2) / den) as u64
        } else {
            Self::word_from_f64(freq.to_f64() / rate.to_f64())
        };
        Nco {
            ftw,
            phase0: Self::word_from_f64(phase / TAU),
        }
    }

    /// `cycles_per_sample` may be negative or exceed one; it wraps.
    pub fn from_normalized(cycles_per_sample: f64, phase: f64) -> Self {
        Nco {
            ftw: Self::word_from_f64(cycles_per_sample),
            phase0: Self::word_from_f64(phase / TAU),
        }
    }

    fn word_from_f64(cycles: f64) -> u64 {
        let frac = cycles - cycles.floor();
        let w = (frac * TWO_POW_64).round();
        if w >= TWO_POW_64 {
            0
        } else {
            w as u64
        }
    }

    pub fn tuning_word(&self) -> u64 {
        self.ftw
    }

    /// Phase in radians at sample `i`, in [0, 2π).
    pub fn phase_at(&self, i: u64) -> f64 {
        let acc = self.phase0.wrapping_add(self.ftw.wrapping_mul(i));
        acc as f64 / TWO_POW_64 * TAU
    }

    pub fn cos_at(&self, i: u64) -> f64 {
        self.phase_at(i).cos()
    }

    /// `e^{-iφ(i)}`, the downconversion mixer.
    pub fn mixer_at(&self, i: u64) -> Complex64 {
        let p = self.phase_at(i);
        Complex64::new(p.cos(), -p.sin())
    }
}

fn modulate(env: &[f64], tone: &ToneConfig, dac_rate: Frequency) -> Vec<f64> {
    let nco = Nco::new(tone.freq, dac_rate, tone.phase);
    env.iter()
        .enumerate()
        .map(|(i, e)| tone.gain * e * nco.cos_at(i as u64))
        .collect()
}

/// `s[i] = gain · env[i] · cos(2π·freq·i/dac_rate + phase)`.
pub fn synth_fullspeed(
    env: &Waveform,
    tone: &ToneConfig,
    dac_rate: Frequency,
) -> Result<Vec<f64>, DspError> {
    if env.sample_rate() != dac_rate {
        return Err(DspError::RateMismatch {
            expected: dac_rate,
            got: env.sample_rate(),
        });
    }
    tone.check(dac_rate)?;
    Ok(modulate(env.samples(), tone, dac_rate))
}

/// Linear ×16 upsampling to `16·len` samples. The final segment continues
/// the last slope and is clamped to [-1, 1].
pub fn interpolate16(env: &[f64]) -> Vec<f64> {
    let n = env.len();
    let mut out = Vec::with_capacity(n * INTERPOLATION);
    for k in 0..n {
        let slope = if k + 1 < n {
            env[k + 1] - env[k]
        } else if n >= 2 {
            env[k] - env[k - 1]
        } else {
            0.0
        };
        for j in 0..INTERPOLATION {
            let v = env[k] + slope * j as f64 / INTERPOLATION as f64;
            out.push(v.clamp(-1.0, 1.0));
        }
    }
    out
}

/// Envelope at `dac_rate/16`, upsampled ×16 and modulated at `dac_rate`.
pub fn synth_interpolated(
    env: &Waveform,
    tone: &ToneConfig,
    dac_rate: Frequency,
) -> Result<Vec<f64>, DspError> {
    let expected = dac_rate.div_int(INTERPOLATION as u64);
    if env.sample_rate() != expected {
        return Err(DspError::RateMismatch {
            expected,
            got: env.sample_rate(),
        });
    }
    tone.check(dac_rate)?;
    Ok(modulate(&interpolate16(env.samples()), tone, dac_rate))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuxOutput {
    pub samples: Vec<f64>,
    /// Samples that had to be clipped to [-1, 1].
    pub clipped: usize,
}

/// Sum of rectangular-gated tones.
pub fn synth_mux(
    tones: &[ToneConfig],
    length: usize,
    dac_rate: Frequency,
) -> Result<MuxOutput, DspError> {
    if tones.len() > MAX_MUX_TONES {
        return Err(DspError::TooManyTones(tones.len()));
    }
    for t in tones {
        t.check(dac_rate)?;
    }
    let ncos: Vec<(Nco, f64)> = tones
        .iter()
        .map(|t| (Nco::new(t.freq, dac_rate, t.phase), t.gain))
        .collect();
    let mut clipped = 0;
    let samples = (0..length as u64)
        .map(|i| {
            let v: f64 = ncos.iter().map(|(n, g)| g * n.cos_at(i)).sum();
            if v.abs() > 1.0 {
                clipped += 1;
                v.clamp(-1.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    Ok(MuxOutput { samples, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::default_dac_rate;
    use proptest::prelude::*;
    use rustfft::FftPlanner;

    fn fft_mag(x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<rustfft::num_complex::Complex<f64>> =
            x.iter().map(|&v| rustfft::num_complex::Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        buf.iter().map(|c| c.norm()).collect()
    }

    fn tone(freq: Frequency, phase: f64, gain: f64) -> ToneConfig {
        ToneConfig::new(freq, phase, gain)
    }

    #[test]
    fn dc_carrier_is_constant() {
        let fs = default_dac_rate();
        let env = Waveform::constant(1.0, 64, fs).unwrap();
        let s = synth_fullspeed(&env, &tone(Frequency::ZERO, 0.0, 1.0), fs).unwrap();
        assert!(s.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn quarter_rate_pattern() {
        let fs = default_dac_rate();
        let env = Waveform::constant(1.0, 16, fs).unwrap();
        let nco = Nco::new(fs.div_int(4), fs, 0.0);
        assert_eq!(nco.tuning_word(), 1u64 << 62);
        let s = synth_fullspeed(&env, &tone(fs.div_int(4), 0.0, 1.0), fs).unwrap();
        let pattern = [1.0, 0.0, -1.0, 0.0];
        for (i, v) in s.iter().enumerate() {
            assert!((v - pattern[i % 4]).abs() < 1e-12, "{i}: {v}");
        }
    }

    #[test]
    fn second_zone_tone_lands_on_digital_image() {
        let fs = default_dac_rate();
        let n = 5898;
        let env = Waveform::gaussian(n, n as f64 / 6.0, fs).unwrap();
        let f = Frequency::from_hz(4_500_000_000);
        let s = synth_fullspeed(&env, &tone(f, 0.0, 1.0), fs).unwrap();
        let mag = fft_mag(&s);
        let peak = (0..n / 2).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
        let bin_hz = fs.to_f64() / n as f64;
        let expected = 5_898_240_000.0 - 4_500_000_000.0;
        assert!((peak as f64 * bin_hz - expected).abs() <= bin_hz, "peak at {}", peak as f64 * bin_hz);
    }

    #[test]
    fn rate_and_range_errors() {
        let fs = default_dac_rate();
        let env = Waveform::constant(1.0, 4, fs.div_int(16)).unwrap();
        let t = tone(Frequency::from_hz(1_000_000), 0.0, 1.0);
        assert!(matches!(synth_fullspeed(&env, &t, fs), Err(DspError::RateMismatch { .. })));
        let env_fs = Waveform::constant(1.0, 4, fs).unwrap();
        assert!(matches!(synth_interpolated(&env_fs, &t, fs), Err(DspError::RateMismatch { .. })));
        assert!(matches!(
            synth_fullspeed(&env_fs, &tone(fs, 0.0, 1.0), fs),
            Err(DspError::ToneOutOfRange { .. })
        ));
        assert_eq!(
            synth_fullspeed(&env_fs, &tone(Frequency::ZERO, 0.0, 1.5), fs),
            Err(DspError::GainOutOfRange(1.5))
        );
        assert_eq!(synth_mux(&[t; 9], 8, fs), Err(DspError::TooManyTones(9)));
        assert_eq!(
            GenConfig::new(GenKind::Multiplexed { tones: 9 }, fs, 0),
            Err(DspError::TooManyTones(9))
        );
    }

    #[test]
    fn interpolated_constant_matches_fullspeed() {
        let fs = default_dac_rate();
        let t = tone(Frequency::from_hz(1_234_560_000), 0.3, 0.7);
        let slow = Waveform::constant(0.8, 10, fs.div_int(16)).unwrap();
        let fast = Waveform::constant(0.8, 160, fs).unwrap();
        assert_eq!(
            synth_interpolated(&slow, &t, fs).unwrap(),
            synth_fullspeed(&fast, &t, fs).unwrap()
        );
    }

    #[test]
    fn interpolated_ramp_is_exact() {
        let env: Vec<f64> = (0..20).map(|k| k as f64 / 40.0).collect();
        let up = interpolate16(&env);
        assert_eq!(up.len(), 320);
        for (i, v) in up.iter().enumerate() {
            assert!((v - i as f64 / 640.0).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolated_gaussian_error_below_two_percent() {
        // 100 ns record, sigma 25 ns.
        let fs = default_dac_rate();
        let env_rate = fs.to_f64() / 16.0;
        let n_env = (100e-9 * env_rate).ceil() as usize;
        let centre = 50e-9;
        let g = |t: f64| (-0.5 * ((t - centre) / 25e-9).powi(2)).exp();
        let env: Vec<f64> = (0..n_env).map(|k| g(k as f64 / env_rate)).collect();
        let up = interpolate16(&env);
        let ideal: Vec<f64> = (0..up.len()).map(|i| g(i as f64 / fs.to_f64())).collect();
        let rms = (up.iter().zip(&ideal).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / up.len() as f64).sqrt();
        assert!(rms < 0.02, "rms {rms}");
    }

    #[test]
    fn mux_single_tone_reduces_to_fullspeed() {
        let fs = default_dac_rate();
        let t = tone(Frequency::from_hz(7_500_000_000 - 5_898_240_000), 1.0, 0.5);
        let env = Waveform::constant(1.0, 256, fs).unwrap();
        let mux = synth_mux(&[t], 256, fs).unwrap();
        assert_eq!(mux.samples, synth_fullspeed(&env, &t, fs).unwrap());
        assert_eq!(mux.clipped, 0);
    }

    #[test]
    fn mux_eight_tones_show_eight_peaks() {
        let fs = default_dac_rate();
        let n = 4096;
        let bin = fs.div_int(n as u64);
        let bins = [100usize, 300, 500, 700, 900, 1100, 1300, 1500];
        let tones: Vec<ToneConfig> = bins
            .iter()
            .enumerate()
            .map(|(k, &b)| tone(bin.times(b as u64), k as f64, 1.0 / 8.0))
            .collect();
        let out = synth_mux(&tones, n, fs).unwrap();
        assert_eq!(out.clipped, 0);
        let mag = fft_mag(&out.samples);
        let mut idx: Vec<usize> = (1..n / 2).collect();
        idx.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]));
        let mut top: Vec<usize> = idx[..8].to_vec();
        top.sort();
        assert_eq!(top, bins.to_vec());
    }

    #[test]
    fn mux_opposite_phases_cancel() {
        let fs = default_dac_rate();
        let f = Frequency::from_hz(100_000_000);
        let out = synth_mux(
            &[tone(f, 0.0, 0.5), tone(f, std::f64::consts::PI, 0.5)],
            512,
            fs,
        )
        .unwrap();
        assert!(out.samples.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn mux_reports_clipping() {
        let fs = default_dac_rate();
        let out = synth_mux(&[tone(Frequency::ZERO, 0.0, 0.8); 2], 10, fs).unwrap();
        assert_eq!(out.clipped, 10);
        assert!(out.samples.iter().all(|&v| v == 1.0));
    }

    proptest! {
        #[test]
        fn bandlimited_envelopes_agree(
            f1 in 1.0e6f64..40e6, f2 in 1.0e6f64..40e6, a in 0.1f64..0.45, p in 0.0f64..std::f64::consts::TAU,
        ) {
            // Content below dac_rate/32 (184 MHz); test well inside that band.
            let fs = default_dac_rate();
            let env_rate = fs.to_f64() / 16.0;
            let e = |t: f64| 0.5 + a * (std::f64::consts::TAU * f1 * t).sin() * (std::f64::consts::TAU * f2 * t + p).cos();
            let n_env = 256;
            let slow: Vec<f64> = (0..n_env).map(|k| e(k as f64 / env_rate)).collect();
            let fast: Vec<f64> = (0..n_env * 16).map(|i| e(i as f64 / fs.to_f64())).collect();
            let t = tone(Frequency::from_hz(4_500_000_000), 0.0, 1.0);
            let a_out = synth_interpolated(&Waveform::new(slow, fs.div_int(16)).unwrap(), &t, fs).unwrap();
            let b_out = synth_fullspeed(&Waveform::new(fast, fs).unwrap(), &t, fs).unwrap();
            // Compare over all but the extrapolated final segment.
            let m = 16 * (n_env - 1);
            let rms = (a_out[..m].iter().zip(&b_out[..m]).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / m as f64).sqrt();
            prop_assert!(rms < 0.02, "rms {}", rms);
        }

        #[test]
        fn nco_matches_direct_cosine(k in 0u64..1_000_000, fnum in 1u64..5_898_239_999) {
            let fs = default_dac_rate();
            let f = Frequency::from_hz(fnum);
            let nco = Nco::new(f, fs, 0.0);
            let cycles = (fnum as u128 * k as u128 % 5_898_240_000u128) as f64 / 5_898_240_000.0;
            let direct = (TAU * cycles).cos();
            prop_assert!((nco.cos_at(k) - direct).abs() < 1e-9);
        }
    }
}
