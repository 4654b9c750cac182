// SPDX-License-Identifier: Apache-2.0
//! Cross-board CZ chevron: π pulses on both qubits of a coupled pair, then a
//! square flux pulse on the high-frequency qubit swept in amplitude and
//! duration. The low qubit's readout, normalized between its ground and
//! excited references, tracks the |11⟩ population.

use std::sync::Arc;

use serde::Serialize;

use crate::afe::DEFAULT_RF_FULLSCALE;
use crate::dsp::default_dac_rate;
use crate::orchestrator::boardmap::BoardMap;
use crate::orchestrator::experiment::{
    Acquisition, Averaging, ChannelKind, Experiment, PulseSpec, Shape, SweepParam, SweepSpec, SyncPolicy,
};
use crate::orchestrator::{run_experiment, Plan, RunError, SimContext};
use crate::qpu::{dressed_resonator_freq, qubit_freq, QpuError, QpuParams, QpuTopology, COLS, N_QUBITS};

use super::res_flux::parabola_vertex;
use super::stats::Range;

const DRIVE_NS: f64 = 40.0;
const DRIVE_SIGMA_NS: f64 = 10.0;
/// Flux pulse start; the drives have ended by then.
const FLUX_START_NS: f64 = 50.0;
/// Readout starts this long after the longest flux pulse.
const READOUT_GAP_NS: f64 = 20.0;
const READOUT_NS: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChevronConfig {
    pub high: usize,
    pub low: usize,
    /// Flux excursion in volts; `None` centres 41 points on the resonance
    /// with ±50 mV span.
    pub amp: Option<Range>,
    /// Flux pulse duration in ns; snapped to DAC samples.
    pub dur: Range,
    pub nshots: usize,
    pub readout_amp: f64,
    pub relax_ns: f64,
    pub seed: u64,
    pub allow_same_board: bool,
}

impl Default for ChevronConfig {
    fn default() -> Self {
        ChevronConfig {
            high: 2,
            low: 7,
            amp: None,
            dur: Range {
                start: 0.0,
                stop: 60.0,
                step: 0.17,
            },
            nshots: 64,
            readout_amp: 0.1,
            relax_ns: 100_000.0,
            seed: 1,
            allow_same_board: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChevronError {
    #[error("qubit {0} does not exist")]
    NoQubit(usize),
    #[error("q{0} and q{1} are not neighbours on the ladder")]
    NotAdjacent(usize, usize),
    #[error("q{high} is not the high-frequency qubit of the pair (q{low} is)")]
    Orientation { high: usize, low: usize },
    #[error("q{0} and q{1} sit on the same board (pass allow_same_board to run anyway)")]
    SameBoard(usize, usize),
    #[error(transparent)]
    Qpu(#[from] QpuError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("at least one shot is required")]
    NoShots,
    #[error("flux excursion {0} V outside the RF full scale")]
    Amplitude(f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct ChevronReport {
    pub high: usize,
    pub low: usize,
    pub a_res_v: f64,
    pub g_qq_hz: f64,
    pub durations_ns: Vec<f64>,
    pub amplitudes_v: Vec<f64>,
    /// `[amplitude][duration]`, 1 at the excited reference and 0 at ground.
    pub norm: Vec<Vec<f64>>,
    pub ground_ref: f64,
    pub excited_ref: f64,
    /// Amplitude row nearest the resonance.
    pub center_row: usize,
    /// Spread of `norm` over the grid.
    pub contrast: f64,
    /// RMS of the difference between rows mirrored about `center_row`,
    /// divided by `contrast`.
    pub asymmetry: f64,
    pub first_min_ns: Option<f64>,
    pub duration_step_ns: f64,
    #[serde(skip)]
    pub plan: Arc<Plan>,
}

impl ChevronReport {
    /// `duration_ns,amplitude_v,norm_mag`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "duration_ns,amplitude_v,norm_mag")?;
        for (i, a) in self.amplitudes_v.iter().enumerate() {
            for (j, d) in self.durations_ns.iter().enumerate() {
                writeln!(w, "{d},{a},{}", self.norm[i][j])?;
            }
        }
        Ok(())
    }
}

fn board_of(q: usize) -> usize {
    q / COLS
}

fn pulse(id: &str, channel: String, kind: ChannelKind, shape: Shape, start_ns: f64, duration_ns: f64) -> PulseSpec {
    PulseSpec {
        id: id.into(),
        channel,
        kind: Some(kind),
        shape,
        start_ns,
        duration_ns,
        freq_hz: 0.0,
        amp: 0.0,
        phase: 0.0,
    }
}

/// π pulses on both qubits, an optional flux pulse on the high qubit and a
/// readout of the low qubit after `readout_ns`.
fn base_experiment(params: &QpuParams, cfg: &ChevronConfig, readout_ns: f64) -> Experiment {
    let mut exp = Experiment {
        nshots: cfg.nshots,
        sync_policy: SyncPolicy::PerShot,
        averaging: Averaging::Averaged,
        relax_ns: cfg.relax_ns,
        ..Experiment::default()
    };
    let env_area = DRIVE_SIGMA_NS * 1e-9 * (2.0 * std::f64::consts::PI).sqrt();
    for q in [cfg.high, cfg.low] {
        let m = &params.qubits[q];
        let mut p = pulse(
            &format!("x{q}"),
            format!("q{q}.drive"),
            ChannelKind::Drive,
            Shape::Gaussian {
                sigma_ns: DRIVE_SIGMA_NS,
            },
            0.0,
            DRIVE_NS,
        );
        p.freq_hz = qubit_freq(m, m.v0);
        p.amp = m.pi_area / env_area;
        exp.pulses.push(p);
    }
    let l = cfg.low;
    let mut ro = pulse("ro", format!("q{l}.ro"), ChannelKind::Readout, Shape::Square, readout_ns, READOUT_NS);
    ro.freq_hz = dressed_resonator_freq(&params.resonators[l], &params.qubits[l], params.qubits[l].v0)
        .expect("dispersive table");
    ro.amp = cfg.readout_amp;
    exp.pulses.push(ro);
    exp.acquisitions.push(Acquisition {
        channel: format!("q{l}.ro"),
        start_ns: readout_ns,
        window_ns: READOUT_NS,
    });
    exp
}

pub fn chevron_experiment(params: &QpuParams, cfg: &ChevronConfig, amps: &Range) -> Experiment {
    let readout_ns = FLUX_START_NS + cfg.dur.stop + READOUT_GAP_NS;
    let mut exp = base_experiment(params, cfg, readout_ns);
    let h = cfg.high;
    let mut cz = pulse("cz", format!("q{h}.flux"), ChannelKind::Flux, Shape::Square, FLUX_START_NS, cfg.dur.start);
    cz.amp = amps.start / DEFAULT_RF_FULLSCALE;
    exp.pulses.push(cz);
    exp.sweeps.push(SweepSpec {
        parameter: SweepParam::Amplitude,
        targets: vec!["cz".into()],
        start: amps.start / DEFAULT_RF_FULLSCALE,
        stop: amps.stop / DEFAULT_RF_FULLSCALE,
        step: amps.step / DEFAULT_RF_FULLSCALE,
        offset: false,
        mode: None,
    });
    exp.sweeps.push(SweepSpec {
        parameter: SweepParam::Duration,
        targets: vec!["cz".into()],
        start: cfg.dur.start,
        stop: cfg.dur.stop,
        step: cfg.dur.step,
        offset: false,
        mode: None,
    });
    exp
}

/// Ground (drive gain 0) and excited (π) references of the low qubit's
/// readout.
fn reference_experiment(params: &QpuParams, cfg: &ChevronConfig) -> Experiment {
    let mut exp = base_experiment(params, cfg, FLUX_START_NS + cfg.dur.stop + READOUT_GAP_NS);
    for q in [cfg.high, cfg.low] {
        let id = format!("x{q}");
        let amp = exp.pulses.iter().find(|p| p.id == id).map_or(0.0, |p| p.amp);
        exp.sweeps.push(SweepSpec {
            parameter: SweepParam::Amplitude,
            targets: vec![id],
            start: 0.0,
            stop: amp,
            step: amp,
            offset: false,
            mode: None,
        });
    }
    exp
}

fn check_pair(params: &QpuParams, cfg: &ChevronConfig) -> Result<(), ChevronError> {
    let (h, l) = (cfg.high, cfg.low);
    for q in [h, l] {
        if q >= N_QUBITS {
            return Err(ChevronError::NoQubit(q));
        }
    }
    if !QpuTopology::adjacent(h, l) {
        return Err(ChevronError::NotAdjacent(h, l));
    }
    if params.coupling(h, l).is_none() {
        return Err(ChevronError::Orientation { high: h, low: l });
    }
    if board_of(h) == board_of(l) && !cfg.allow_same_board {
        return Err(ChevronError::SameBoard(h, l));
    }
    if cfg.nshots == 0 {
        return Err(ChevronError::NoShots);
    }
    Ok(())
}

/// First minimum of `y(x)`: the dip between the first fall below and the
/// next rise above the midpoint, located by a parabola over the middle half
/// of that dip. Falls back to the lowest sample when the dip is not closed.
pub fn first_minimum(x: &[f64], y: &[f64]) -> Option<f64> {
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let mid = (hi + lo) / 2.0;
    let down = y.iter().position(|&v| v < mid)?;
    let up = y[down..].iter().position(|&v| v > mid).map(|k| down + k);
    let imin = (down..up.unwrap_or(y.len())).min_by(|&a, &b| y[a].total_cmp(&y[b]))?;
    let (Some(up), true) = (up, down > 0) else {
        return Some(x[imin]);
    };
    let cross = |i: usize| x[i - 1] + (mid - y[i - 1]) / (y[i] - y[i - 1]) * (x[i] - x[i - 1]);
    let (t0, t1) = (cross(down), cross(up));
    let (c, half) = ((t0 + t1) / 2.0, (t1 - t0) / 4.0);
    let idx: Vec<usize> = (down..up).filter(|&i| (x[i] - c).abs() <= half).collect();
    if idx.len() < 3 {
        return Some(x[imin]);
    }
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    match parabola_vertex(&xs, &ys) {
        Some(v) if v >= t0 && v <= t1 => Some(v),
        _ => Some(x[imin]),
    }
}

/// RMS of `norm[c − k] − norm[c + k]` over all mirrored rows and columns.
pub fn mirror_rms(norm: &[Vec<f64>], center: usize) -> f64 {
    let mut sq = 0.0;
    let mut n = 0usize;
    for k in 1..=center.min(norm.len().saturating_sub(center + 1)) {
        for (a, b) in norm[center - k].iter().zip(&norm[center + k]) {
            sq += (a - b) * (a - b);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (sq / n as f64).sqrt()
    }
}

pub fn cz_chevron(params: &QpuParams, cfg: &ChevronConfig) -> Result<ChevronReport, ChevronError> {
    check_pair(params, cfg)?;
    let c = params.coupling(cfg.high, cfg.low).expect("checked").clone();
    let amps = cfg.amp.unwrap_or(Range {
        start: c.a_res_v - 0.05,
        stop: c.a_res_v + 0.05,
        step: 0.0025,
    });
    for v in [amps.start, amps.stop] {
        if v.abs() > DEFAULT_RF_FULLSCALE {
            return Err(ChevronError::Amplitude(v));
        }
    }
    let map = BoardMap::ladder_default(&params.sweet_spots());
    let ctx = SimContext::new(cfg.seed, params.clone());

    let (_, refs) = run_experiment(&reference_experiment(params, cfg), &map, &ctx)?;
    let ground_ref = refs.get(0, 0, 0, 0).norm();
    let excited_ref = refs.get(1, 1, 0, 0).norm();

    let (plan, result) = run_experiment(&chevron_experiment(params, cfg, &amps), &map, &ctx)?;
    let amplitudes_v: Vec<f64> = plan.axes[0].values.iter().map(|g| g * DEFAULT_RF_FULLSCALE).collect();
    let durations_ns = plan.axes[1].values.clone();
    let span = excited_ref - ground_ref;
    let norm: Vec<Vec<f64>> = (0..amplitudes_v.len())
        .map(|i| {
            (0..durations_ns.len())
                .map(|j| (result.get(i, j, 0, 0).norm() - ground_ref) / span)
                .collect()
        })
        .collect();
    let center_row = amplitudes_v
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - c.a_res_v).abs().total_cmp(&(b.1 - c.a_res_v).abs()))
        .map_or(0, |(i, _)| i);
    let hi = norm.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = norm.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let contrast = hi - lo;
    let asymmetry = if contrast > 0.0 { mirror_rms(&norm, center_row) / contrast } else { 0.0 };
    let first_min_ns = first_minimum(&durations_ns, &norm[center_row]);
    let sample_ns = 1e9 / default_dac_rate().to_f64();
    let step_samples = plan.axes[1]
        .samples
        .as_ref()
        .and_then(|s| (s.len() > 1).then(|| s[1] - s[0]))
        .unwrap_or(1);
    Ok(ChevronReport {
        high: cfg.high,
        low: cfg.low,
        a_res_v: c.a_res_v,
        g_qq_hz: c.g_qq_hz,
        durations_ns,
        amplitudes_v,
        norm,
        ground_ref,
        excited_ref,
        center_row,
        contrast,
        asymmetry,
        first_min_ns,
        duration_step_ns: step_samples as f64 * sample_ns,
        plan,
    })
}
