// SPDX-License-Identifier: Apache-2.0
//! Lowering of an [`Experiment`] onto per-board programs.
//!
//! Every board gets the same loop skeleton, so shots and sweep points line
//! up across boards:
//!
//! ```text
//!         SET    r1, 0              ; real-time point index
//!         SET    r2, NPTS
//! point:  SET    r3, NSHOTS
//! shot:   WAITT  @PERIOD            ; relaxation (per-shot policy)
//!         SYNC
//!         ADD    r5, r1, BASE       ; swept entry
//!         TRIG   chN, p[r5], @LEAD+t
//!         ...
//!         LOOPNZ r3, shot
//!         ADD    r1, r1, 1
//!         LOOPNZ r2, point
//!         END
//! ```
//!
//! Under the once policy the SYNC moves to the top and each shot is placed
//! at `r4 + LEAD + t`, with `r4` advanced by the shot period.
//!
//! Real-time sweeps index a per-point table of pulse entries (waveform,
//! carrier, gain, sub-tick padding, start delay). Host-loop sweeps produce
//! one [`CompiledBundle`] per host point that differs only in entries and DC
//! codes.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use super::boardmap::{generator_kind, generator_tile, BoardMap, BoardSpec, MapError, FULLSPEED_GENS, MUX_GEN};
use super::coverage::check_sync_coverage;
use super::experiment::{Averaging, ChannelKind, Experiment, Shape, SweepMode, SweepParam, SyncPolicy};
use super::sweep::{build_axis, Axis, SweepError};
use crate::afe::{code_to_voltage, flux_plateau, voltage_to_code, DAC_CHANNELS, DEFAULT_RF_FULLSCALE, MIDSCALE};
use crate::dsp::{
    alias_freq, default_adc_rate, default_dac_rate, nyquist_zone, DspError, GenConfig, GenKind, ReadoutConfig,
    ReadoutKind, ToneConfig, Waveform, INTERPOLATION, PFB_CHANNELS,
};
use crate::qpu::{QpuTopology, MAX_TONES_PER_FEEDLINE, N_QUBITS};
use crate::timebase::{Frequency, FS_PER_SECOND};
use crate::tproc::{Instruction, Reg, Src, SyncModel, TProcProgram, TimeOperand, TICKS_PER_CYCLE};

/// DAC samples per `time_clock` tick.
pub const TICK_SAMPLES: u64 = 16;
/// Tone ports of the multiplexed generator start here.
pub const MUX_PORT_BASE: u16 = MUX_GEN;
/// Highest analog carrier accepted, in Hz.
pub const MAX_CARRIER_HZ: f64 = 10e9;

const R_POINT: usize = 1;
const R_POINTS_LEFT: usize = 2;
const R_SHOTS_LEFT: usize = 3;
const R_TIME: usize = 4;
const R_ENTRY: usize = 5;
/// Cycles of slack between the barrier and the first timed instruction,
/// on top of the shot body.
const LEAD_SLACK_CYCLES: u64 = 6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("`{path}`: channel `{channel}` is not in the board map")]
    UnmappedChannel { path: String, channel: String },
    #[error("`{path}`: {reason}")]
    Invalid { path: String, reason: String },
    #[error("{count} readout tones on feedline {feedline} (at most {MAX_TONES_PER_FEEDLINE})")]
    TooManyTones { feedline: u8, count: usize },
    #[error("pulses `{first}` and `{second}` overlap on channel `{channel}` (host point {host}, point {point})")]
    Overlap {
        channel: String,
        first: String,
        second: String,
        host: usize,
        point: usize,
    },
    #[error("`sweeps[{index}]`: {source}")]
    Sweep {
        index: usize,
        #[source]
        source: SweepError,
    },
    #[error("at most two sweep axes (got {0})")]
    TooManySweeps(usize),
    #[error("`sweeps[{index}].targets`: unknown target `{target}`")]
    UnknownTarget { index: usize, target: String },
    #[error("once-policy timeline needs {ticks} ticks, beyond the 32-bit time register")]
    TimelineOverflow { ticks: u64 },
    #[error("board {board}: timed instruction at pc {pc} is not guarded by SYNC")]
    SyncCoverage { board: String, pc: usize },
    #[error("board {board}: {source}")]
    Dsp {
        board: String,
        #[source]
        source: DspError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum EntrySource {
    Pulse(usize),
    Acquire(usize),
}

/// One row of a board's pulse/readout parameter table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Entry {
    pub source: EntrySource,
    /// Real-time point for swept entries.
    pub point: Option<u32>,
    pub waveform: Option<u32>,
    /// Leading zero DAC samples inside the first tick.
    pub pad: u32,
    /// Added to the instruction's time operand.
    pub delay_ticks: u32,
    /// Envelope length in DAC samples, padding excluded.
    pub length: u64,
    pub freq_hz: f64,
    pub zone: u32,
    /// Programmed first-zone frequency.
    pub digital_hz: f64,
    pub phase: f64,
    pub gain: f64,
    /// Drive: gain × envelope integral, seconds.
    pub area_s: f64,
    /// Flux: plateau after the bias tee, volts.
    pub excursion_v: f64,
    /// Acquisitions: integration window.
    pub window_fs: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelInfo {
    pub name: String,
    pub kind: ChannelKind,
    pub qubit: usize,
    pub board: usize,
    pub generator: u16,
    pub slot: Option<u8>,
}

impl ChannelInfo {
    /// tproc channel number used by TRIG (pulses) or ACQ (readouts).
    pub fn port(&self) -> u16 {
        match self.kind {
            ChannelKind::Readout => MUX_PORT_BASE + self.slot.unwrap_or(0) as u16,
            _ => self.generator,
        }
    }

    pub fn acq_port(&self) -> u16 {
        self.slot.unwrap_or(0) as u16
    }

    pub fn tile(&self) -> usize {
        generator_tile(self.generator)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcqInfo {
    pub channel: usize,
    /// Result column name.
    pub name: String,
}

/// Experiment layout shared by every batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plan {
    pub axes: Vec<Axis>,
    pub rt_axes: Vec<usize>,
    pub host_axes: Vec<usize>,
    pub rt_points: usize,
    pub host_points: usize,
    pub nshots: usize,
    pub policy: SyncPolicy,
    pub averaging: Averaging,
    pub lead_ticks: u64,
    pub period_ticks: u64,
    pub boards: Vec<BoardSpec>,
    pub channels: Vec<ChannelInfo>,
    /// Channel of each pulse.
    pub pulse_channels: Vec<usize>,
    pub pulse_ids: Vec<String>,
    pub acquisitions: Vec<AcqInfo>,
    #[serde(skip)]
    pub dac_rate: Frequency,
}

impl Plan {
    /// Indices along `[axis1, axis2]` of real-time point `point` in batch `host`.
    pub fn axis_indices(&self, host: usize, point: usize) -> [usize; 2] {
        let mut idx = [0usize; 2];
        let mut unpack = |axes: &[usize], mut flat: usize| {
            for &a in axes.iter().rev() {
                let n = self.axes[a].len();
                idx[a] = flat % n;
                flat /= n;
            }
        };
        unpack(&self.rt_axes, point);
        unpack(&self.host_axes, host);
        idx
    }

    pub fn axis_len(&self, a: usize) -> usize {
        self.axes.get(a).map_or(1, Axis::len)
    }

    pub fn total_shots(&self) -> u64 {
        (self.rt_points * self.nshots) as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoardProgram {
    /// Position in the bundle.
    pub board: usize,
    /// Index in the board map.
    pub map_board: usize,
    pub name: String,
    pub sync_model: SyncModel,
    pub program: TProcProgram,
    pub waveforms: Arc<Vec<Waveform>>,
    pub entries: Arc<Vec<Entry>>,
    pub generators: Vec<(u16, GenConfig)>,
    pub mux_tones: Vec<(u8, ToneConfig)>,
    pub readout: Option<ReadoutConfig>,
    pub dc_codes: [u16; DAC_CHANNELS],
}

/// Everything needed to run one host-loop point.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledBundle {
    pub plan: Arc<Plan>,
    pub host_point: usize,
    pub boards: Vec<BoardProgram>,
    /// DC level of each qubit's flux line after code quantization.
    pub dc_volts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompiledExperiment {
    pub plan: Arc<Plan>,
    pub batches: Vec<CompiledBundle>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Resolved {
    /// Start and length in DAC samples.
    start: u64,
    len: u64,
    /// Envelope samples.
    env_len: u64,
    freq: f64,
    amp: f64,
    phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum WaveKey {
    Square { len: u64, pad: u64, interp: bool },
    Gaussian { len: u64, pad: u64, interp: bool, sigma_bits: u64 },
}

#[derive(Clone, Copy, Debug)]
struct Item {
    source: EntrySource,
    port: u16,
    acq: bool,
    varying: bool,
    tick: u64,
}

/// Validated experiment with its layout fixed; batches are produced on demand.
pub struct Compiler {
    exp: Experiment,
    plan: Arc<Plan>,
    /// Boards included in the bundle (map indices).
    boards: Vec<usize>,
    items: Vec<Vec<Item>>,
    waves: Vec<(Arc<Vec<Waveform>>, HashMap<WaveKey, u32>)>,
    pulse_varying: Vec<bool>,
    /// Start tick and window length in ticks of each acquisition.
    acq_ticks: Vec<(u64, u64)>,
    /// Configured DC bias of each map channel.
    dc_bias: Vec<f64>,
}

fn envelope_samples(kind: ChannelKind) -> u64 {
    match kind {
        ChannelKind::Flux => 1,
        _ => INTERPOLATION as u64,
    }
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> CompileError {
    CompileError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Compile every host-loop point on every board of the map.
pub fn compile(exp: &Experiment, map: &BoardMap) -> Result<CompiledExperiment, CompileError> {
    Compiler::new(exp, map, None)?.compile_all()
}

/// Direct path for experiments that live on one board: only that board is
/// programmed.
pub fn compile_single_board(
    exp: &Experiment,
    map: &BoardMap,
    board: &str,
) -> Result<CompiledExperiment, CompileError> {
    let b = map
        .board_index(board)
        .ok_or_else(|| invalid("boards", format!("unknown board `{board}`")))?;
    Compiler::new(exp, map, Some(b))?.compile_all()
}

impl Compiler {
    pub fn new(exp: &Experiment, map: &BoardMap, only_board: Option<usize>) -> Result<Self, CompileError> {
        map.validate()?;
        let dac_rate = default_dac_rate();
        let ts_ns = 1e9 / dac_rate.to_f64();
        let sample_ns = |k: ChannelKind| envelope_samples(k) as f64 * ts_ns;

        if exp.nshots == 0 || exp.nshots > i32::MAX as usize {
            return Err(invalid("nshots", "must be a positive 32-bit count"));
        }
        if !(exp.relax_ns >= 0.0 && exp.relax_ns.is_finite()) {
            return Err(invalid("relax_ns", "must be finite and non-negative"));
        }
        if exp.sweeps.len() > 2 {
            return Err(CompileError::TooManySweeps(exp.sweeps.len()));
        }

        let channels: Vec<ChannelInfo> = map
            .channels
            .iter()
            .map(|c| ChannelInfo {
                name: c.name.clone(),
                kind: c.kind,
                qubit: c.qubit,
                board: map.board_index(&c.board).expect("validated"),
                generator: c.generator,
                slot: c.slot,
            })
            .collect();
        let find_channel = |path: String, name: &str| {
            map.channel(name).map(|(i, _)| i).ok_or(CompileError::UnmappedChannel {
                path,
                channel: name.into(),
            })
        };

        let mut pulse_channels = Vec::new();
        for (i, p) in exp.pulses.iter().enumerate() {
            let path = |f: &str| format!("pulses[{i}].{f}");
            if exp.pulses[..i].iter().any(|o| o.id == p.id) {
                return Err(invalid(path("id"), format!("duplicate pulse id `{}`", p.id)));
            }
            let ch = find_channel(path("channel"), &p.channel)?;
            let kind = channels[ch].kind;
            if let Some(k) = p.kind {
                if k != kind {
                    return Err(invalid(path("kind"), format!("{k:?} pulse on {kind:?} channel `{}`", p.channel)));
                }
            }
            if !(p.start_ns >= 0.0 && p.start_ns.is_finite()) {
                return Err(invalid(path("start_ns"), "must be finite and non-negative"));
            }
            if !(p.duration_ns >= 0.0 && p.duration_ns.is_finite()) {
                return Err(invalid(path("duration_ns"), "must be finite and non-negative"));
            }
            if let Shape::Gaussian { sigma_ns } = p.shape {
                if !(sigma_ns > 0.0 && sigma_ns.is_finite()) {
                    return Err(invalid(path("shape.gaussian.sigma_ns"), "must be positive"));
                }
            }
            if !p.phase.is_finite() {
                return Err(invalid(path("phase"), "must be finite"));
            }
            check_amp(kind, p.amp, &path("amp"))?;
            if kind != ChannelKind::Flux {
                check_freq(p.freq_hz, &path("freq_hz"))?;
            }
            if only_board.is_some_and(|b| channels[ch].board != b) {
                return Err(invalid(path("channel"), format!("`{}` is not on the selected board", p.channel)));
            }
            pulse_channels.push(ch);
        }

        let mut acquisitions = Vec::new();
        for (i, a) in exp.acquisitions.iter().enumerate() {
            let path = |f: &str| format!("acquisitions[{i}].{f}");
            let ch = find_channel(path("channel"), &a.channel)?;
            if channels[ch].kind != ChannelKind::Readout {
                return Err(invalid(path("channel"), format!("`{}` is not a readout channel", a.channel)));
            }
            if !(a.start_ns >= 0.0 && a.start_ns.is_finite()) {
                return Err(invalid(path("start_ns"), "must be finite and non-negative"));
            }
            if !(a.window_ns > 0.0 && a.window_ns.is_finite()) {
                return Err(invalid(path("window_ns"), "must be positive"));
            }
            if only_board.is_some_and(|b| channels[ch].board != b) {
                return Err(invalid(path("channel"), format!("`{}` is not on the selected board", a.channel)));
            }
            let seen = acquisitions.iter().filter(|x: &&AcqInfo| x.channel == ch).count();
            let name = if seen == 0 { a.channel.clone() } else { format!("{}#{}", a.channel, seen + 1) };
            acquisitions.push(AcqInfo { channel: ch, name });
        }

        // Readout tones in use per feedline.
        let mut used: Vec<usize> = pulse_channels
            .iter()
            .chain(acquisitions.iter().map(|a| &a.channel))
            .copied()
            .filter(|&c| channels[c].kind == ChannelKind::Readout)
            .collect();
        used.sort_unstable();
        used.dedup();
        for line in [1u8, 2] {
            let count = used.iter().filter(|&&c| QpuTopology::feedline(channels[c].qubit) == line).count();
            if count > MAX_TONES_PER_FEEDLINE {
                return Err(CompileError::TooManyTones { feedline: line, count });
            }
        }

        let mut axes = Vec::new();
        for (i, s) in exp.sweeps.iter().enumerate() {
            if s.targets.is_empty() {
                return Err(invalid(format!("sweeps[{i}].targets"), "no targets"));
            }
            let mut envelope_ns = None;
            for t in &s.targets {
                let unknown = || CompileError::UnknownTarget {
                    index: i,
                    target: t.clone(),
                };
                if s.parameter == SweepParam::DcBias {
                    let (_, spec) = map.channel(t).ok_or_else(unknown)?;
                    if spec.kind != ChannelKind::Flux {
                        return Err(invalid(format!("sweeps[{i}].targets"), format!("`{t}` is not a flux channel")));
                    }
                } else {
                    let p = exp.pulses.iter().position(|p| &p.id == t).ok_or_else(unknown)?;
                    let ns = sample_ns(channels[pulse_channels[p]].kind);
                    if s.parameter == SweepParam::Duration {
                        match envelope_ns {
                            Some(e) if e != ns => {
                                return Err(invalid(
                                    format!("sweeps[{i}].targets"),
                                    "duration targets must share one sample period",
                                ))
                            }
                            _ => envelope_ns = Some(ns),
                        }
                    }
                }
            }
            if s.parameter == SweepParam::DcBias && s.mode() == SweepMode::RealTime {
                return Err(invalid(format!("sweeps[{i}].mode"), "dc_bias sweeps run in the host loop"));
            }
            let axis = build_axis(s, envelope_ns).map_err(|source| CompileError::Sweep { index: i, source })?;
            axes.push(axis);
        }
        let rt_axes: Vec<usize> = (0..axes.len()).filter(|&a| axes[a].mode == SweepMode::RealTime).collect();
        let host_axes: Vec<usize> = (0..axes.len()).filter(|&a| axes[a].mode == SweepMode::HostLoop).collect();
        let rt_points: usize = rt_axes.iter().map(|&a| axes[a].len()).product();
        let host_points: usize = host_axes.iter().map(|&a| axes[a].len()).product();
        if rt_points > i32::MAX as usize {
            return Err(invalid("sweeps", "too many real-time points"));
        }

        let boards: Vec<usize> = match only_board {
            Some(b) => vec![b],
            None => (0..map.boards.len()).collect(),
        };

        let mut plan = Plan {
            axes,
            rt_axes,
            host_axes,
            rt_points,
            host_points,
            nshots: exp.nshots,
            policy: exp.sync_policy,
            averaging: exp.averaging,
            lead_ticks: 0,
            period_ticks: 0,
            boards: boards.iter().map(|&b| map.boards[b].clone()).collect(),
            channels,
            pulse_channels,
            pulse_ids: exp.pulses.iter().map(|p| p.id.clone()).collect(),
            acquisitions,
            dac_rate,
        };

        let pulse_varying: Vec<bool> = exp
            .pulses
            .iter()
            .map(|p| {
                plan.rt_axes
                    .iter()
                    .any(|&a| plan.axes[a].parameter != SweepParam::DcBias && plan.axes[a].targets.contains(&p.id))
            })
            .collect();

        let mut c = Compiler {
            exp: exp.clone(),
            plan: Arc::new(plan.clone()),
            boards,
            items: Vec::new(),
            waves: Vec::new(),
            pulse_varying,
            acq_ticks: Vec::new(),
            dc_bias: map.channels.iter().map(|c| c.dc_bias_v).collect(),
        };

        // Resolve every point once: ranges, overlaps, base ticks, shot length.
        let n_pulses = exp.pulses.len();
        let mut min_tick = vec![u64::MAX; n_pulses];
        let mut shot_end_ticks = 0u64;
        for h in 0..host_points {
            for p in 0..rt_points {
                let res = c.resolve(h, p)?;
                c.check_overlaps(&res, h, p)?;
                for (i, r) in res.iter().enumerate() {
                    min_tick[i] = min_tick[i].min(r.start / TICK_SAMPLES);
                    shot_end_ticks = shot_end_ticks.max((r.start + r.len).div_ceil(TICK_SAMPLES));
                }
            }
        }
        let tick_fs = dac_rate.period_fs() * num_rational::Ratio::from_integer(TICK_SAMPLES as u128);
        let acq_ticks: Vec<(u64, u64)> = exp
            .acquisitions
            .iter()
            .map(|a| {
                let start = round_ratio(a.start_ns * 1e6, tick_fs);
                let win = ceil_ratio(a.window_ns * 1e6, tick_fs);
                (start, win)
            })
            .collect();
        for &(s, w) in &acq_ticks {
            shot_end_ticks = shot_end_ticks.max(s + w);
        }

        // Per-board timed items, in time order.
        for &b in &c.boards {
            let mut items = Vec::new();
            for (i, &ch) in plan.pulse_channels.iter().enumerate() {
                let info = &plan.channels[ch];
                if info.board == b {
                    items.push(Item {
                        source: EntrySource::Pulse(i),
                        port: info.port(),
                        acq: false,
                        varying: c.pulse_varying[i],
                        tick: min_tick[i],
                    });
                }
            }
            for (i, a) in plan.acquisitions.iter().enumerate() {
                let info = &plan.channels[a.channel];
                if info.board == b {
                    items.push(Item {
                        source: EntrySource::Acquire(i),
                        port: info.acq_port(),
                        acq: true,
                        varying: false,
                        tick: acq_ticks[i].0,
                    });
                }
            }
            items.sort_by_key(|it| (it.tick, it.acq, it.port, it.source_index()));
            c.items.push(items);
        }

        // Sized by the whole experiment so the period does not depend on
        // how channels are split across boards.
        let body: u64 = c.items.iter().flatten().map(|it| 1 + it.varying as u64).sum();
        let lead = TICKS_PER_CYCLE * (body + LEAD_SLACK_CYCLES);
        let relax_ticks = round_ratio(exp.relax_ns * 1e6, tick_fs);
        let period = lead + shot_end_ticks + relax_ticks;
        if period > u32::MAX as u64 / 2 {
            return Err(invalid("relax_ns", "shot period exceeds the time operand range"));
        }
        if exp.sync_policy == SyncPolicy::Once {
            let ticks = (c.plan.total_shots() + 1) * period;
            if ticks > i32::MAX as u64 {
                return Err(CompileError::TimelineOverflow { ticks });
            }
        }
        plan.lead_ticks = lead;
        plan.period_ticks = period;
        c.plan = Arc::new(plan);
        c.acq_ticks = acq_ticks;

        c.build_waveforms(map)?;
        Ok(c)
    }

    pub fn plan(&self) -> &Arc<Plan> {
        &self.plan
    }

    pub fn compile_all(&self) -> Result<CompiledExperiment, CompileError> {
        let batches = (0..self.plan.host_points)
            .map(|h| self.batch(h))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CompiledExperiment {
            plan: self.plan.clone(),
            batches,
        })
    }
}

impl Item {
    fn source_index(&self) -> usize {
        match self.source {
            EntrySource::Pulse(i) | EntrySource::Acquire(i) => i,
        }
    }
}

fn round_ratio(fs: f64, unit: num_rational::Ratio<u128>) -> u64 {
    let unit = *unit.numer() as f64 / *unit.denom() as f64;
    (fs / unit).round().max(0.0) as u64
}

fn ceil_ratio(fs: f64, unit: num_rational::Ratio<u128>) -> u64 {
    let unit = *unit.numer() as f64 / *unit.denom() as f64;
    (fs / unit - 1e-9).ceil().max(0.0) as u64
}

fn check_amp(kind: ChannelKind, amp: f64, path: &str) -> Result<(), CompileError> {
    let ok = match kind {
        ChannelKind::Flux => (-1.0..=1.0).contains(&amp),
        _ => (0.0..=1.0).contains(&amp),
    };
    if ok {
        Ok(())
    } else {
        Err(invalid(path, format!("amplitude {amp} outside the generator's range")))
    }
}

fn check_freq(f: f64, path: &str) -> Result<(), CompileError> {
    if f > 0.0 && f <= MAX_CARRIER_HZ {
        Ok(())
    } else {
        Err(invalid(path, format!("carrier {f} Hz outside (0, {MAX_CARRIER_HZ}]")))
    }
}

fn reg(i: usize) -> Reg {
    Reg::new(i).expect("fixed register")
}

impl Compiler {
    fn resolve(&self, h: usize, p: usize) -> Result<Vec<Resolved>, CompileError> {
        let plan = &self.plan;
        let idx = plan.axis_indices(h, p);
        let ts_ns = 1e9 / plan.dac_rate.to_f64();
        self.exp
            .pulses
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let kind = plan.channels[plan.pulse_channels[i]].kind;
                let spe = envelope_samples(kind);
                let t_env = spe as f64 * ts_ns;
                let (mut start, mut freq, mut amp, mut phase) = (spec.start_ns, spec.freq_hz, spec.amp, spec.phase);
                let mut env_len = None;
                for (a, axis) in plan.axes.iter().enumerate() {
                    if axis.parameter == SweepParam::DcBias || !axis.targets.contains(&spec.id) {
                        continue;
                    }
                    let v = axis.values[idx[a]];
                    let set = |base: f64| if axis.offset { base + v } else { v };
                    match axis.parameter {
                        SweepParam::Frequency => freq = set(freq),
                        SweepParam::Amplitude => amp = set(amp),
                        SweepParam::Phase => phase = set(phase),
                        SweepParam::StartTime => start = set(start),
                        SweepParam::Duration => env_len = axis.samples.as_ref().map(|s| s[idx[a]]),
                        SweepParam::DcBias => unreachable!(),
                    }
                }
                let path = format!("pulses[{i}] at host point {h}, point {p}");
                check_amp(kind, amp, &path)?;
                if kind != ChannelKind::Flux {
                    check_freq(freq, &path)?;
                }
                if !(start >= 0.0) {
                    return Err(invalid(path, format!("start {start} ns is negative")));
                }
                let start_env = (start / t_env).round() as u64;
                let env_len = env_len.unwrap_or((spec.duration_ns / t_env).round() as u64);
                Ok(Resolved {
                    start: start_env * spe,
                    len: env_len * spe,
                    env_len,
                    freq,
                    amp,
                    phase,
                })
            })
            .collect()
    }

    fn check_overlaps(&self, res: &[Resolved], h: usize, p: usize) -> Result<(), CompileError> {
        let mut by_channel: HashMap<usize, Vec<(u64, u64, usize)>> = HashMap::new();
        for (i, r) in res.iter().enumerate() {
            if r.len > 0 {
                by_channel
                    .entry(self.plan.pulse_channels[i])
                    .or_default()
                    .push((r.start, r.start + r.len, i));
            }
        }
        let mut keys: Vec<_> = by_channel.keys().copied().collect();
        keys.sort_unstable();
        for ch in keys {
            let v = by_channel.get_mut(&ch).expect("key");
            v.sort_unstable();
            for w in v.windows(2) {
                if w[1].0 < w[0].1 {
                    return Err(CompileError::Overlap {
                        channel: self.plan.channels[ch].name.clone(),
                        first: self.exp.pulses[w[0].2].id.clone(),
                        second: self.exp.pulses[w[1].2].id.clone(),
                        host: h,
                        point: p,
                    });
                }
            }
        }
        Ok(())
    }

    fn wave_key(&self, i: usize, r: &Resolved) -> WaveKey {
        let kind = self.plan.channels[self.plan.pulse_channels[i]].kind;
        let interp = kind != ChannelKind::Flux;
        let pad = r.start % TICK_SAMPLES;
        match self.exp.pulses[i].shape {
            Shape::Square => WaveKey::Square { len: r.env_len, pad, interp },
            Shape::Gaussian { sigma_ns } => WaveKey::Gaussian {
                len: r.env_len,
                pad,
                interp,
                sigma_bits: sigma_ns.to_bits(),
            },
        }
    }

    fn envelope(&self, key: WaveKey) -> Result<Waveform, DspError> {
        let dac = self.plan.dac_rate;
        let (len, pad, interp) = match key {
            WaveKey::Square { len, pad, interp } | WaveKey::Gaussian { len, pad, interp, .. } => (len, pad, interp),
        };
        let rate = if interp { dac.div_int(INTERPOLATION as u64) } else { dac };
        let w = match key {
            WaveKey::Square { .. } => Waveform::constant(1.0, len as usize, rate)?,
            WaveKey::Gaussian { sigma_bits, .. } => {
                let t_env_ns = 1e9 / rate.to_f64();
                Waveform::gaussian(len as usize, f64::from_bits(sigma_bits) / t_env_ns, rate)?
            }
        };
        Ok(if pad > 0 { w.padded_front(pad as usize) } else { w })
    }

    fn build_waveforms(&mut self, map: &BoardMap) -> Result<(), CompileError> {
        let mut tables: Vec<(Vec<Waveform>, HashMap<WaveKey, u32>)> = vec![(Vec::new(), HashMap::new()); self.boards.len()];
        for h in 0..self.plan.host_points {
            for p in 0..self.plan.rt_points {
                if p > 0 && !self.pulse_varying.iter().any(|&v| v) {
                    break;
                }
                let res = self.resolve(h, p)?;
                for (i, r) in res.iter().enumerate() {
                    if r.env_len == 0 || (p > 0 && !self.pulse_varying[i]) {
                        continue;
                    }
                    let b = self.plan.channels[self.plan.pulse_channels[i]].board;
                    let bi = self.boards.iter().position(|&x| x == b).expect("board included");
                    let key = self.wave_key(i, r);
                    if tables[bi].1.contains_key(&key) {
                        continue;
                    }
                    let w = self.envelope(key).map_err(|source| CompileError::Dsp {
                        board: map.boards[b].name.clone(),
                        source,
                    })?;
                    let id = tables[bi].0.len() as u32;
                    tables[bi].0.push(w);
                    tables[bi].1.insert(key, id);
                }
            }
        }
        self.waves = tables.into_iter().map(|(w, k)| (Arc::new(w), k)).collect();
        Ok(())
    }

    fn entry(&self, bi: usize, i: usize, r: &Resolved, item_tick: u64, point: Option<u32>) -> Entry {
        let plan = &self.plan;
        let kind = plan.channels[plan.pulse_channels[i]].kind;
        let waveform = (r.env_len > 0).then(|| self.waves[bi].1[&self.wave_key(i, r)]);
        let (zone, digital_hz) = if kind == ChannelKind::Flux {
            (1, 0.0)
        } else {
            let f = Frequency::from_hz(r.freq.round() as u64);
            (nyquist_zone(f, plan.dac_rate), alias_freq(f, plan.dac_rate).to_f64())
        };
        let env: &[f64] = match waveform {
            Some(id) => {
                let w = &self.waves[bi].0[id as usize];
                &w.samples()[(w.len() as u64 - r.env_len) as usize..]
            }
            None => &[],
        };
        let t_env_s = envelope_samples(kind) as f64 / plan.dac_rate.to_f64();
        let area_s = if kind == ChannelKind::Drive { r.amp * env.iter().sum::<f64>() * t_env_s } else { 0.0 };
        let excursion_v = if kind == ChannelKind::Flux && !env.is_empty() {
            let scaled: Vec<f64> = env.iter().map(|s| s * r.amp).collect();
            flux_plateau(&scaled, (plan.period_ticks * TICK_SAMPLES) as usize, DEFAULT_RF_FULLSCALE)
        } else {
            0.0
        };
        Entry {
            source: EntrySource::Pulse(i),
            point,
            waveform,
            pad: (r.start % TICK_SAMPLES) as u32,
            delay_ticks: (r.start / TICK_SAMPLES - item_tick) as u32,
            length: r.len,
            freq_hz: if kind == ChannelKind::Flux { 0.0 } else { r.freq },
            zone,
            digital_hz,
            phase: r.phase,
            gain: r.amp,
            area_s,
            excursion_v,
            window_fs: 0,
        }
    }

    /// The bundle for host-loop point `h`.
    pub fn batch(&self, h: usize) -> Result<CompiledBundle, CompileError> {
        let plan = &self.plan;
        let any_varying = self.pulse_varying.iter().any(|&v| v);
        let npts = if any_varying { plan.rt_points } else { 1 };
        let resolved = (0..npts).map(|p| self.resolve(h, p)).collect::<Result<Vec<_>, _>>()?;
        let idx = plan.axis_indices(h, 0);

        // DC levels, host sweeps applied.
        let mut dc_volts = vec![0.0; N_QUBITS];
        let mut dc_by_channel: HashMap<usize, u16> = HashMap::new();
        for (c, info) in plan.channels.iter().enumerate() {
            if info.kind != ChannelKind::Flux || !self.boards.contains(&info.board) {
                continue;
            }
            let mut v = self.dc_bias[c];
            for (a, axis) in plan.axes.iter().enumerate() {
                if axis.parameter == SweepParam::DcBias && axis.targets.contains(&info.name) {
                    let x = axis.values[idx[a]];
                    v = if axis.offset { v + x } else { x };
                }
            }
            let code = voltage_to_code(v);
            dc_by_channel.insert(c, code);
            if info.qubit < N_QUBITS {
                dc_volts[info.qubit] = code_to_voltage(code);
            }
        }

        let mut boards = Vec::new();
        for (bi, &b) in self.boards.iter().enumerate() {
            let spec = &self.map_board(b);
            let mut entries = Vec::new();
            let mut bases = Vec::new();
            for it in &self.items[bi] {
                bases.push(entries.len() as u32);
                match it.source {
                    EntrySource::Pulse(i) => {
                        if it.varying {
                            for (p, res) in resolved.iter().enumerate() {
                                entries.push(self.entry(bi, i, &res[i], it.tick, Some(p as u32)));
                            }
                        } else {
                            entries.push(self.entry(bi, i, &resolved[0][i], it.tick, None));
                        }
                    }
                    EntrySource::Acquire(a) => {
                        let window_fs = (self.exp.acquisitions[a].window_ns * 1e6).round() as i64;
                        entries.push(Entry {
                            source: it.source,
                            point: None,
                            waveform: None,
                            pad: 0,
                            delay_ticks: 0,
                            length: 0,
                            freq_hz: 0.0,
                            zone: 0,
                            digital_hz: 0.0,
                            phase: 0.0,
                            gain: 0.0,
                            area_s: 0.0,
                            excursion_v: 0.0,
                            window_fs,
                        });
                    }
                }
            }
            let program = self.emit_program(&self.items[bi], &bases);
            if let Err(pc) = check_sync_coverage(&program, plan.policy) {
                return Err(CompileError::SyncCoverage {
                    board: spec.name.clone(),
                    pc,
                });
            }

            let dsp_err = |source| CompileError::Dsp {
                board: spec.name.clone(),
                source,
            };
            let mut generators: Vec<(u16, GenConfig)> = Vec::new();
            let mut mux_tones: Vec<(u8, ToneConfig)> = Vec::new();
            for (i, &ch) in plan.pulse_channels.iter().enumerate() {
                let info = &plan.channels[ch];
                if info.board != b {
                    continue;
                }
                if !generators.iter().any(|(g, _)| *g == info.generator) {
                    let kind = generator_kind(info.generator).expect("validated generator");
                    generators.push((
                        info.generator,
                        GenConfig::new(kind, plan.dac_rate, info.tile()).map_err(dsp_err)?,
                    ));
                }
                if let (ChannelKind::Readout, Some(slot)) = (info.kind, info.slot) {
                    if !mux_tones.iter().any(|(s, _)| *s == slot) {
                        let r = &resolved[0][i];
                        let f = alias_freq(Frequency::from_hz(r.freq.round() as u64), plan.dac_rate);
                        mux_tones.push((slot, ToneConfig::new(f, r.phase, r.amp)));
                    }
                }
            }
            generators.sort_by_key(|g| g.0);
            mux_tones.sort_by_key(|t| t.0);
            if let Some(t) = generators.iter().find(|(g, _)| *g == MUX_GEN) {
                debug_assert!(matches!(t.1.kind, GenKind::Multiplexed { .. }));
            }

            let readout = self.readout_config(b, &resolved[0]);
            let mut dc_codes = [MIDSCALE; DAC_CHANNELS];
            for (&c, &code) in &dc_by_channel {
                let info = &plan.channels[c];
                if info.board == b {
                    dc_codes[(info.generator - FULLSPEED_GENS.start) as usize] = code;
                }
            }
            boards.push(BoardProgram {
                board: bi,
                map_board: b,
                name: spec.name.clone(),
                sync_model: spec.sync_model,
                program,
                waveforms: self.waves[bi].0.clone(),
                entries: Arc::new(entries),
                generators,
                mux_tones,
                readout,
                dc_codes,
            });
        }
        Ok(CompiledBundle {
            plan: plan.clone(),
            host_point: h,
            boards,
            dc_volts,
        })
    }

    fn map_board(&self, b: usize) -> &BoardSpec {
        let bi = self.boards.iter().position(|&x| x == b).expect("board included");
        &self.plan.boards[bi]
    }

    fn readout_config(&self, b: usize, res: &[Resolved]) -> Option<ReadoutConfig> {
        let plan = &self.plan;
        let adc = default_adc_rate();
        let bin = adc.to_f64() / PFB_CHANNELS as f64;
        let mut fine = Vec::new();
        for a in &plan.acquisitions {
            let info = &plan.channels[a.channel];
            if info.board != b {
                continue;
            }
            let tone = plan
                .pulse_channels
                .iter()
                .position(|&c| c == a.channel)
                .map_or(0.0, |i| res[i].freq);
            let alias = alias_freq(Frequency::from_hz(tone.round() as u64), adc).to_f64();
            let k = (alias / bin).round() as usize % PFB_CHANNELS;
            fine.push((k, alias - k as f64 * bin));
        }
        (!fine.is_empty()).then_some(ReadoutConfig {
            kind: ReadoutKind::Multiplexed { fine },
            adc_rate: adc,
        })
    }

    fn emit_program(&self, items: &[Item], bases: &[u32]) -> TProcProgram {
        let plan = &self.plan;
        let mut ins = Vec::new();
        if plan.policy == SyncPolicy::Once {
            ins.push(Instruction::Sync);
            ins.push(Instruction::Set { rd: reg(R_TIME), imm: 0 });
        }
        ins.push(Instruction::Set { rd: reg(R_POINT), imm: 0 });
        ins.push(Instruction::Set {
            rd: reg(R_POINTS_LEFT),
            imm: plan.rt_points as i32,
        });
        let point_top = ins.len();
        ins.push(Instruction::Set {
            rd: reg(R_SHOTS_LEFT),
            imm: plan.nshots as i32,
        });
        let shot_top = ins.len();
        if plan.policy == SyncPolicy::PerShot {
            ins.push(Instruction::WaitT {
                time: TimeOperand::at(plan.period_ticks as u32),
            });
            ins.push(Instruction::Sync);
        }
        for (it, &base) in items.iter().zip(bases) {
            let entry = if it.varying {
                ins.push(Instruction::Add {
                    rd: reg(R_ENTRY),
                    ra: reg(R_POINT),
                    src: Src::Imm(base as i32),
                });
                Src::Reg(reg(R_ENTRY))
            } else {
                Src::Imm(base as i32)
            };
            let offset = (plan.lead_ticks + it.tick) as u32;
            let time = match plan.policy {
                SyncPolicy::PerShot => TimeOperand::at(offset),
                SyncPolicy::Once => TimeOperand::reg_plus(reg(R_TIME), offset),
            };
            ins.push(if it.acq {
                Instruction::Acq { ch: it.port, entry, time }
            } else {
                Instruction::Trig { ch: it.port, entry, time }
            });
        }
        if plan.policy == SyncPolicy::Once {
            ins.push(Instruction::Add {
                rd: reg(R_TIME),
                ra: reg(R_TIME),
                src: Src::Imm(plan.period_ticks as i32),
            });
            ins.push(Instruction::WaitT {
                time: TimeOperand::reg_plus(reg(R_TIME), 0),
            });
        }
        ins.push(Instruction::LoopNz {
            rs: reg(R_SHOTS_LEFT),
            target: shot_top,
        });
        ins.push(Instruction::Add {
            rd: reg(R_POINT),
            ra: reg(R_POINT),
            src: Src::Imm(1),
        });
        ins.push(Instruction::LoopNz {
            rs: reg(R_POINTS_LEFT),
            target: point_top,
        });
        ins.push(Instruction::End);
        TProcProgram::new(ins)
    }
}

pub(crate) fn fs_to_secs(fs: i64) -> f64 {
    fs as f64 / FS_PER_SECOND as f64
}
