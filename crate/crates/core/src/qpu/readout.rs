// SPDX-License-Identifier: Apache-2.0
//! From a per-shot control record to readout IQ values.
//!
//! Populations are classical mixtures over {0, 1, 2} per qubit, evolved in
//! time order: drive pulses rotate 0↔1, flux pulses on the high qubit of a
//! coupled pair move |11⟩ to |20⟩ along the chevron. Readout is the
//! population-weighted Lorentzian response of each qubit's own resonator.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::physics::{chevron_transfer, dressed_resonator_freq, qubit_freq, rabi_transfer, s21_magnitude};
use super::{QpuError, QpuParams, MAX_TONES_PER_FEEDLINE, N_QUBITS};

/// Times are seconds from the shot origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxPulse {
    pub qubit: usize,
    pub start: f64,
    pub duration: f64,
    /// Plateau voltage above the DC level, after the bias tee.
    pub excursion_v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivePulse {
    pub qubit: usize,
    pub start: f64,
    pub duration: f64,
    pub freq_hz: f64,
    /// Amplitude × envelope integral, in seconds.
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutTone {
    pub qubit: usize,
    pub freq_hz: f64,
    pub amp: f64,
    pub start: f64,
    pub duration: f64,
    pub acq_start: f64,
    pub acq_window: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    /// DC voltage on each flux line.
    pub dc_volts: Vec<f64>,
    pub flux_pulses: Vec<FluxPulse>,
    pub drive_pulses: Vec<DrivePulse>,
    pub readouts: Vec<ReadoutTone>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitPopulation(pub [f64; 3]);

impl Default for QubitPopulation {
    fn default() -> Self {
        QubitPopulation([1.0, 0.0, 0.0])
    }
}

impl QubitPopulation {
    pub fn excited(&self) -> f64 {
        self.0[1]
    }
}

fn check(params: &QpuParams, rec: &ControlRecord) -> Result<Vec<f64>, QpuError> {
    let qubits = rec
        .flux_pulses
        .iter()
        .map(|p| p.qubit)
        .chain(rec.drive_pulses.iter().map(|p| p.qubit))
        .chain(rec.readouts.iter().map(|p| p.qubit));
    for q in qubits {
        if q >= N_QUBITS {
            return Err(QpuError::UnknownQubit(q));
        }
    }
    for line in [1u8, 2] {
        let count = rec
            .readouts
            .iter()
            .filter(|r| params.resonators[r.qubit].feedline == line)
            .count();
        if count > MAX_TONES_PER_FEEDLINE {
            return Err(QpuError::TooManyTones { feedline: line, count });
        }
    }
    let mut lines = rec.dc_volts.clone();
    lines.resize(N_QUBITS, 0.0);
    Ok(params.flux_at_qubits(&lines))
}

enum Step<'a> {
    Drive(&'a DrivePulse),
    Flux(&'a FluxPulse),
}

/// Populations after every drive and flux pulse in the record.
pub fn populations(params: &QpuParams, rec: &ControlRecord) -> Result<Vec<QubitPopulation>, QpuError> {
    let flux = check(params, rec)?;
    let mut pop = vec![QubitPopulation::default(); N_QUBITS];
    // Drives act at their start, flux pulses at their end, with all drives
    // already begun counted in.
    let mut steps: Vec<(f64, u8, usize, Step)> = Vec::new();
    for (i, d) in rec.drive_pulses.iter().enumerate() {
        steps.push((d.start, 0, i, Step::Drive(d)));
    }
    for (i, f) in rec.flux_pulses.iter().enumerate() {
        steps.push((f.start + f.duration, 1, i, Step::Flux(f)));
    }
    steps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    for (_, _, _, step) in steps {
        match step {
            Step::Drive(d) => {
                let q = &params.qubits[d.qubit];
                let mut v = flux[d.qubit];
                let mid = d.start + d.duration / 2.0;
                for f in rec.flux_pulses.iter().filter(|f| f.qubit == d.qubit) {
                    if mid >= f.start && mid < f.start + f.duration {
                        v += f.excursion_v;
                    }
                }
                let theta = PI * d.area / q.pi_area;
                let p = rabi_transfer(theta, d.duration, d.freq_hz - qubit_freq(q, v));
                let [p0, p1, p2] = pop[d.qubit].0;
                pop[d.qubit] = QubitPopulation([p0 * (1.0 - p) + p1 * p, p1 * (1.0 - p) + p0 * p, p2]);
            }
            Step::Flux(f) => {
                for c in params.couplings.iter().filter(|c| c.pair.0 == f.qubit) {
                    let (h, l) = c.pair;
                    let end = f.start + f.duration;
                    let mut t0 = f.start;
                    for d in rec.drive_pulses.iter().filter(|d| d.qubit == h || d.qubit == l) {
                        if d.start < end {
                            t0 = t0.max(d.start + d.duration);
                        }
                    }
                    let mut t1 = end;
                    for r in rec.readouts.iter().filter(|r| r.qubit == h || r.qubit == l) {
                        if r.start >= f.start {
                            t1 = t1.min(r.start);
                        }
                    }
                    let t_eff = (t1 - t0).max(0.0);
                    let amp = (flux[h] - params.qubits[h].v0 + f.excursion_v).abs();
                    let moved = pop[h].0[1] * pop[l].0[1] * chevron_transfer(t_eff, amp - c.a_res_v, c);
                    pop[h].0[1] -= moved;
                    pop[h].0[2] += moved;
                    pop[l].0[1] -= moved;
                    pop[l].0[0] += moved;
                }
            }
        }
    }
    Ok(pop)
}

/// Noise-free IQ per readout tone, in record order.
pub fn expected_response(params: &QpuParams, rec: &ControlRecord) -> Result<Vec<Complex64>, QpuError> {
    let flux = check(params, rec)?;
    let pop = populations(params, rec)?;
    let ro = &params.readout;
    rec.readouts
        .iter()
        .map(|r| {
            let q = &params.qubits[r.qubit];
            let res = &params.resonators[r.qubit];
            let f0 = dressed_resonator_freq(res, q, flux[r.qubit])?;
            let overlap = (r.start + r.duration).min(r.acq_start + r.acq_window) - r.start.max(r.acq_start);
            let gate = if r.acq_window > 0.0 {
                (overlap / r.acq_window).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let m: f64 = pop[r.qubit]
                .0
                .iter()
                .enumerate()
                .map(|(n, p)| p * s21_magnitude(r.freq_hz, f0 + n as f64 * ro.chi_hz, res.kappa_hz, ro.dip_depth))
                .sum();
            Ok(Complex64::new(r.amp * gate * m, 0.0))
        })
        .collect()
}

pub fn simulate_shot<R: Rng + ?Sized>(
    params: &QpuParams,
    rec: &ControlRecord,
    rng: &mut R,
) -> Result<Vec<Complex64>, QpuError> {
    let mean = expected_response(params, rec)?;
    Ok(add_noise(mean, params.readout.noise_sigma, rng))
}

pub(crate) fn add_noise<R: Rng + ?Sized>(mut iq: Vec<Complex64>, sigma: f64, rng: &mut R) -> Vec<Complex64> {
    if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        for v in &mut iq {
            *v += Complex64::new(n.sample(rng), n.sample(rng));
        }
    }
    iq
}

/// `[shot][tone]` IQ values for `shots` repetitions of the same record.
pub fn simulate_readout<R: Rng + ?Sized>(
    params: &QpuParams,
    rec: &ControlRecord,
    shots: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Complex64>>, QpuError> {
    let mean = expected_response(params, rec)?;
    Ok((0..shots)
        .map(|_| add_noise(mean.clone(), params.readout.noise_sigma, rng))
        .collect())
}
