// SPDX-License-Identifier: Apache-2.0
//! Analog path from DAC to ADC.
//!
//! Each generator output is reconstructed through an ideal filter that keeps
//! its configured Nyquist image, so a tone is described by its envelope,
//! analog carrier and start time. The channel applies gain, delay and
//! additive white Gaussian noise before sampling at the ADC.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{zone_image, DspError, ToneConfig, Waveform};
use crate::timebase::{Frequency, SimTime, FS_PER_SECOND};

#[derive(Clone, Debug, PartialEq)]
pub struct AnalogTone {
    /// Unmodulated envelope; `None` is a rectangular gate of `gate` length.
    pub envelope: Option<Waveform>,
    pub gate: SimTime,
    pub carrier_hz: f64,
    pub phase: f64,
    pub gain: f64,
    pub start: SimTime,
}

impl AnalogTone {
    /// The `zone` image of a digital tone with envelope `env`.
    pub fn from_digital(
        env: Waveform,
        tone: &ToneConfig,
        zone: u32,
        dac_rate: Frequency,
        start: SimTime,
    ) -> Self {
        let (f, phase) = zone_image(tone.freq, tone.phase, zone, dac_rate);
        let gate = SimTime(env.sample_rate().ticks_to_fs(env.len() as u64));
        AnalogTone {
            envelope: Some(env),
            gate,
            carrier_hz: f.to_f64(),
            phase,
            gain: tone.gain,
            start,
        }
    }

    pub fn value_at(&self, t: SimTime) -> f64 {
        let dt = t - self.start;
        if dt.0 < 0 || dt.0 >= self.gate.0 {
            return 0.0;
        }
        let secs = dt.0 as f64 / FS_PER_SECOND as f64;
        let env = match &self.envelope {
            Some(w) => w.value_at(secs * w.sample_rate().to_f64()),
            None => 1.0,
        };
        // Carrier phase as whole femtoseconds times frequency, reduced mod one cycle.
        let cycles = self.carrier_hz * secs;
        self.gain * env * (TAU * (cycles - cycles.floor()) + self.phase).cos()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalogChannel {
    pub gain: f64,
    pub delay: SimTime,
    pub noise_rms: f64,
}

impl Default for AnalogChannel {
    fn default() -> Self {
        AnalogChannel {
            gain: 1.0,
            delay: SimTime::ZERO,
            noise_rms: 0.0,
        }
    }
}

impl AnalogChannel {
    /// `n` ADC samples starting at `t0`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        tones: &[AnalogTone],
        adc_rate: Frequency,
        t0: SimTime,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>, DspError> {
        let noise = if self.noise_rms > 0.0 {
            Some(Normal::new(0.0, self.noise_rms).map_err(|e| DspError::Format(e.to_string()))?)
        } else {
            None
        };
        Ok((0..n as u64)
            .map(|k| {
                let t = t0 + SimTime(adc_rate.ticks_to_fs(k)) - self.delay;
                let v: f64 = tones.iter().map(|tone| tone.value_at(t)).sum();
                let w = noise.as_ref().map_or(0.0, |d| d.sample(rng));
                self.gain * v + w
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{alias_freq, ddc_decimate, default_adc_rate, default_dac_rate, integrate, synth_fullspeed};
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn reconstruction_agrees_with_dac_samples() {
        let fs = default_dac_rate();
        let env = Waveform::gaussian(400, 60.0, fs).unwrap();
        let tone = ToneConfig::new(Frequency::from_hz(4_500_000_000), 0.7, 0.9);
        let digital = synth_fullspeed(&env, &tone, fs).unwrap();
        let analog = AnalogTone::from_digital(env, &tone, 2, fs, SimTime::ZERO);
        // At DAC sample instants the chosen image equals the digital samples.
        for (i, &d) in digital.iter().enumerate() {
            let t = SimTime(fs.ticks_to_fs(i as u64));
            assert!((analog.value_at(t) - d).abs() < 1e-3, "{i}");
        }
    }

    #[test]
    fn delay_gain_and_noise() {
        let adc = default_adc_rate();
        let gate = AnalogTone {
            envelope: None,
            gate: SimTime::from_ps(10_000),
            carrier_hz: 0.0,
            phase: 0.0,
            gain: 0.5,
            start: SimTime::ZERO,
        };
        let ch = AnalogChannel {
            gain: 2.0,
            delay: SimTime::from_ps(4_000),
            noise_rms: 0.0,
        };
        let mut rng = stream(1, &[]);
        let s = ch.sample(std::slice::from_ref(&gate), adc, SimTime::ZERO, 40, &mut rng).unwrap();
        // 4 ns delay = 9.83 ADC samples, 10 ns gate = 24.6 samples.
        assert_eq!(s[9], 0.0);
        assert_eq!(s[10], 1.0);
        assert_eq!(s[34], 1.0);
        assert_eq!(s[35], 0.0);
        let noisy = AnalogChannel { noise_rms: 0.1, ..ch };
        let a = noisy.sample(std::slice::from_ref(&gate), adc, SimTime::ZERO, 4000, &mut stream(3, &[])).unwrap();
        let b = noisy.sample(&[gate], adc, SimTime::ZERO, 4000, &mut stream(3, &[])).unwrap();
        assert_eq!(a, b);
        let var = a[100..].iter().map(|v| v * v).sum::<f64>() / 3900.0;
        assert!((var.sqrt() - 0.1).abs() < 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn loopback_recovers_amplitude(f_mhz in 2950u64..5890, a in 0.2f64..1.0, phase in 0.0f64..6.0) {
            let dac = default_dac_rate();
            let adc = default_adc_rate();
            let f = Frequency::from_hz(f_mhz * 1_000_000);
            let alias = alias_freq(f, adc).to_f64();
            // The DDC filter cannot separate a tone from its own mirror when
            // the alias sits within ~110 MHz of DC or of fs/2.
            prop_assume!(alias > 120e6 && alias < adc.to_f64() / 2.0 - 120e6);
            let len = 6000;
            let env = Waveform::constant(1.0, len, dac).unwrap();
            let tone = ToneConfig::new(f, phase, a);
            prop_assert_eq!(crate::dsp::nyquist_zone(f, dac), 2);
            let analog = AnalogTone::from_digital(env, &tone, 2, dac, SimTime::ZERO);
            let samples = AnalogChannel::default()
                .sample(&[analog], adc, SimTime::ZERO, 2400, &mut stream(0, &[]))
                .unwrap();
            let y = ddc_decimate(&samples, alias, adc);
            let m = 2.0 * integrate(&y[16..], 260).unwrap().norm();
            prop_assert!((m - a).abs() < 0.02 * a, "f {} alias {} got {} want {}", f_mhz, alias, m, a);
        }
    }
}
