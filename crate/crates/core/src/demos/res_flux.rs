// SPDX-License-Identifier: Apache-2.0
//! Resonator flux spectroscopy on all ten qubits at once: one multiplexed
//! probe tone per resonator swept in real time around its bare frequency,
//! with every flux line's DC bias stepped from the host.

use std::sync::Arc;

use serde::Serialize;

use crate::orchestrator::boardmap::BoardMap;
use crate::orchestrator::experiment::{
    Acquisition, Averaging, ChannelKind, Experiment, PulseSpec, Shape, SweepParam, SweepSpec, SyncPolicy,
};
use crate::orchestrator::{run_experiment, Plan, ResultSet, RunError, SimContext};
use crate::qpu::{QpuParams, N_QUBITS};

use super::stats::Range;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResFluxConfig {
    /// Probe offset from each bare resonator frequency, Hz.
    pub freq: Range,
    /// DC bias applied to every flux line, V.
    pub bias: Range,
    pub nshots: usize,
    pub readout_amp: f64,
    pub readout_ns: f64,
    pub relax_ns: f64,
    pub seed: u64,
}

impl Default for ResFluxConfig {
    fn default() -> Self {
        ResFluxConfig {
            freq: Range {
                start: -1e6,
                stop: 2.5e6,
                step: 25e3,
            },
            bias: Range {
                start: -2.0,
                stop: 2.0,
                step: 0.05,
            },
            nshots: 32,
            readout_amp: 0.12,
            readout_ns: 2000.0,
            relax_ns: 10_000.0,
            seed: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ResFluxError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("readout amplitude {0} must be in (0, 1/8]")]
    Amplitude(f64),
    #[error("at least one shot is required")]
    NoShots,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweetSpot {
    pub qubit: usize,
    pub table_v: f64,
    pub extracted_v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Periodicity {
    pub qubit: usize,
    /// `V_period` in bias steps.
    pub shift: usize,
    /// Column pairs compared; zero when the bias range is shorter than a
    /// period.
    pub pairs: usize,
    pub rms_diff: f64,
    /// `3·√2·σ/√nshots`.
    pub tolerance: f64,
}

impl Periodicity {
    pub fn holds(&self) -> bool {
        self.rms_diff <= self.tolerance
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResFluxReport {
    pub offsets_hz: Vec<f64>,
    pub bias_v: Vec<f64>,
    pub f_bare_hz: Vec<f64>,
    /// `[qubit][freq][bias]` response magnitude.
    pub magnitude: Vec<Vec<Vec<f64>>>,
    /// `[qubit][bias]` dip frequency.
    pub dip_hz: Vec<Vec<f64>>,
    pub sweet_spots: Vec<SweetSpot>,
    pub periodicity: Vec<Periodicity>,
    #[serde(skip)]
    pub plan: Arc<Plan>,
    #[serde(skip)]
    pub result: ResultSet,
}

impl ResFluxReport {
    /// `freq_hz,bias_v,magnitude` for one qubit.
    pub fn write_qubit_csv<W: std::io::Write>(&self, q: usize, mut w: W) -> std::io::Result<()> {
        writeln!(w, "freq_hz,bias_v,magnitude")?;
        for (i, off) in self.offsets_hz.iter().enumerate() {
            for (j, v) in self.bias_v.iter().enumerate() {
                writeln!(w, "{},{},{}", self.f_bare_hz[q] + off, v, self.magnitude[q][i][j])?;
            }
        }
        Ok(())
    }

    /// `qubit,table_v,extracted_v`.
    pub fn write_sweet_spots_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "qubit,table_v,extracted_v")?;
        for s in &self.sweet_spots {
            writeln!(w, "{},{},{}", s.qubit, s.table_v, s.extracted_v)?;
        }
        Ok(())
    }
}

pub fn spectroscopy_experiment(params: &QpuParams, cfg: &ResFluxConfig) -> Experiment {
    let mut exp = Experiment {
        nshots: cfg.nshots,
        sync_policy: SyncPolicy::PerShot,
        averaging: Averaging::Averaged,
        relax_ns: cfg.relax_ns,
        ..Experiment::default()
    };
    for q in 0..N_QUBITS {
        exp.pulses.push(PulseSpec {
            id: format!("ro{q}"),
            channel: format!("q{q}.ro"),
            kind: Some(ChannelKind::Readout),
            shape: Shape::Square,
            start_ns: 0.0,
            duration_ns: cfg.readout_ns,
            freq_hz: params.resonators[q].f_bare_hz,
            amp: cfg.readout_amp,
            phase: 0.0,
        });
        exp.acquisitions.push(Acquisition {
            channel: format!("q{q}.ro"),
            start_ns: 0.0,
            window_ns: cfg.readout_ns,
        });
    }
    exp.sweeps.push(SweepSpec {
        parameter: SweepParam::Frequency,
        targets: (0..N_QUBITS).map(|q| format!("ro{q}")).collect(),
        start: cfg.freq.start,
        stop: cfg.freq.stop,
        step: cfg.freq.step,
        offset: true,
        mode: None,
    });
    exp.sweeps.push(SweepSpec {
        parameter: SweepParam::DcBias,
        targets: (0..N_QUBITS).map(|q| format!("q{q}.flux")).collect(),
        start: cfg.bias.start,
        stop: cfg.bias.stop,
        step: cfg.bias.step,
        offset: false,
        mode: None,
    });
    exp
}

/// Dip frequency of one column: centroid of `m_max − m` over the points
/// within half depth of the minimum, repeated on a window re-centred on the
/// previous estimate, then a parabola over the half-width around it.
pub fn dip_centroid(freqs: &[f64], mags: &[f64]) -> f64 {
    let top = mags.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (imin, bottom) = mags
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty column");
    if freqs.len() < 3 || top <= bottom {
        return freqs[imin];
    }
    let half = (top + bottom) / 2.0;
    let mut center = freqs[imin];
    let fwhm = {
        let below: Vec<f64> = freqs.iter().zip(mags).filter(|(_, &m)| m < half).map(|(f, _)| *f).collect();
        let lo = below.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = below.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo).max(freqs[1] - freqs[0])
    };
    let mut width = fwhm;
    for _ in 0..4 {
        let (mut wsum, mut fsum) = (0.0, 0.0);
        for (f, m) in freqs.iter().zip(mags) {
            if (f - center).abs() <= width {
                let w = (top - m).max(0.0);
                wsum += w;
                fsum += w * f;
            }
        }
        if wsum <= 0.0 {
            break;
        }
        center = fsum / wsum;
        width *= 0.75;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = freqs
        .iter()
        .zip(mags)
        .filter(|(f, _)| (*f - center).abs() <= fwhm / 2.0)
        .map(|(f, m)| (*f, *m))
        .unzip();
    match parabola_vertex(&xs, &ys) {
        Some(v) if (v - center).abs() <= fwhm / 2.0 => v,
        _ => center,
    }
}

/// Vertex of the least-squares parabola through `(x, y)`.
pub fn parabola_vertex(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 3 {
        return None;
    }
    let x0 = x.iter().sum::<f64>() / n;
    // Normal equations for y = a + b·u + c·u², u = x − x0.
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi - x0;
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                t[k] += p * yi;
            }
            p *= u;
        }
    }
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    if d.abs() < 1e-300 {
        return None;
    }
    let col = |k: usize| {
        let mut mk = m;
        for r in 0..3 {
            mk[r][k] = t[r];
        }
        det(mk) / d
    };
    let (b, c) = (col(1), col(2));
    (c != 0.0).then(|| x0 - b / (2.0 * c))
}

/// Sweet spot from the dip-frequency curve: among the columns within 10% of
/// the curve's range of its maximum, take the cluster nearest 0 V and refine
/// its peak with a parabola over the two neighbours on each side.
pub fn extract_sweet_spot(bias: &[f64], dip: &[f64]) -> f64 {
    let hi = dip.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = dip.iter().copied().fold(f64::INFINITY, f64::min);
    if bias.len() < 3 || hi <= lo {
        return bias[bias.len() / 2];
    }
    let cut = hi - 0.1 * (hi - lo);
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    for (j, &d) in dip.iter().enumerate() {
        if d >= cut {
            match clusters.last_mut() {
                Some((_, end)) if *end + 1 == j => *end = j,
                _ => clusters.push((j, j)),
            }
        }
    }
    let peak_of = |(a, b): (usize, usize)| (a..=b).max_by(|&i, &k| dip[i].total_cmp(&dip[k])).unwrap_or(a);
    let peak = clusters
        .iter()
        .map(|&c| peak_of(c))
        .min_by(|&i, &k| bias[i].abs().total_cmp(&bias[k].abs()))
        .unwrap_or(0);
    let a = peak.saturating_sub(2);
    let b = (peak + 2).min(bias.len() - 1);
    match parabola_vertex(&bias[a..=b], &dip[a..=b]) {
        Some(v) if v >= bias[a] && v <= bias[b] => v,
        _ => bias[peak],
    }
}

pub fn res_flux(params: &QpuParams, cfg: &ResFluxConfig) -> Result<ResFluxReport, ResFluxError> {
    if !(cfg.readout_amp > 0.0 && cfg.readout_amp <= 0.125) {
        return Err(ResFluxError::Amplitude(cfg.readout_amp));
    }
    if cfg.nshots == 0 {
        return Err(ResFluxError::NoShots);
    }
    let exp = spectroscopy_experiment(params, cfg);
    let map = BoardMap::ladder_default(&[]);
    let ctx = SimContext::new(cfg.seed, params.clone());
    let (plan, result) = run_experiment(&exp, &map, &ctx)?;

    let offsets_hz = plan.axes[0].values.clone();
    let bias_v = plan.axes[1].values.clone();
    let nf = offsets_hz.len();
    let nb = bias_v.len();
    let mut magnitude = Vec::with_capacity(N_QUBITS);
    let mut dip_hz = Vec::with_capacity(N_QUBITS);
    let mut sweet_spots = Vec::with_capacity(N_QUBITS);
    let mut periodicity = Vec::with_capacity(N_QUBITS);
    let sigma_avg = params.readout.noise_sigma / (cfg.nshots as f64).sqrt();
    for q in 0..N_QUBITS {
        let grid: Vec<Vec<f64>> = (0..nf)
            .map(|i| (0..nb).map(|j| result.get(i, j, 0, q).norm()).collect())
            .collect();
        let dips: Vec<f64> = (0..nb)
            .map(|j| {
                let col: Vec<f64> = (0..nf).map(|i| grid[i][j]).collect();
                dip_centroid(&offsets_hz, &col)
            })
            .collect();
        sweet_spots.push(SweetSpot {
            qubit: q,
            table_v: params.qubits[q].v0,
            extracted_v: extract_sweet_spot(&bias_v, &dips),
        });
        let shift = (params.qubits[q].v_period / cfg.bias.step).round() as usize;
        let mut sq = 0.0;
        let mut pairs = 0;
        for j in 0..nb.saturating_sub(shift) {
            for row in &grid {
                let d = row[j] - row[j + shift];
                sq += d * d;
            }
            pairs += 1;
        }
        let rms = if pairs > 0 { (sq / (pairs * nf) as f64).sqrt() } else { 0.0 };
        periodicity.push(Periodicity {
            qubit: q,
            shift,
            pairs,
            rms_diff: rms,
            tolerance: 3.0 * std::f64::consts::SQRT_2 * sigma_avg,
        });
        magnitude.push(grid);
        dip_hz.push(dips.iter().map(|d| params.resonators[q].f_bare_hz + d).collect());
    }
    Ok(ResFluxReport {
        offsets_hz,
        bias_v,
        f_bare_hz: params.resonators.iter().map(|r| r.f_bare_hz).collect(),
        magnitude,
        dip_hz,
        sweet_spots,
        periodicity,
        plan,
        result,
    })
}
