// SPDX-License-Identifier: Apache-2.0
//! Running a compiled bundle: clock tree, lockstep boards, shot assembly,
//! device response, and aggregation into a [`ResultSet`].
//!
//! Event times handed to the device model are measured from a shot origin
//! on board 0 (its barrier release, plus the lead time). Differences are
//! taken in DAC samples before conversion, so the same experiment gives the
//! same record whichever board a channel lives on.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::boardmap::TILES_PER_BOARD;
use super::compile::{fs_to_secs, CompiledBundle, EntrySource, Plan, TICK_SAMPLES};
use super::experiment::{Averaging, ChannelKind, SyncPolicy};
use super::result::{batch_axes, ResultSet};
use crate::dsp::{apply_mts, TileLatency};
use crate::lockstep::{run_collect, write_trace_csv, EventSink, Lockstep, LockstepConfig, LockstepError};
use crate::qpu::{expected_response, ControlRecord, DrivePulse, FluxPulse, QpuError, QpuParams, ReadoutTone};
use crate::rng::{derive_seed, stream, tag, SimRng};
use crate::timebase::{ClockTree, Frequency, SimTime, DAC_SAMPLE};
use crate::tproc::{TimedEvent, TICKS_PER_CYCLE};

/// Simulation settings that are not part of the experiment.
#[derive(Clone, Debug)]
pub struct SimContext {
    pub seed: u64,
    pub qpu: Arc<QpuParams>,
    pub lockstep: LockstepConfig,
}

impl SimContext {
    pub fn new(seed: u64, qpu: QpuParams) -> Self {
        SimContext {
            seed,
            qpu: Arc::new(qpu),
            lockstep: LockstepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("sync timeout at cycle {cycle}: {}", describe(.stuck))]
    SyncTimeout { cycle: u64, stuck: Vec<(String, usize, bool)> },
    #[error("board `{board}`: {source}")]
    Core {
        board: String,
        #[source]
        source: crate::tproc::TProcError,
    },
    #[error(transparent)]
    Lockstep(LockstepError),
    #[error(transparent)]
    Qpu(#[from] QpuError),
    #[error("acquisition `{channel}` at point {point}: expected {expected} shots, got {got}")]
    ShotMismatch {
        channel: String,
        point: usize,
        expected: usize,
        got: usize,
    },
    #[error("bundle has no boards")]
    NoBoards,
}

fn describe(stuck: &[(String, usize, bool)]) -> String {
    stuck
        .iter()
        .map(|(b, pc, halted)| {
            let what = if *halted { "halted without reaching SYNC" } else { "never reached SYNC" };
            format!("board `{b}` {what} (pc {pc})")
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Clock tree of a bundle: per-board skew and DAC jitter from the board
/// specs.
pub fn build_clocks(bundle: &CompiledBundle) -> ClockTree {
    let mut tree = ClockTree::standard(bundle.boards.len());
    for (b, spec) in bundle.plan.boards.iter().enumerate() {
        let clocks = &mut tree.boards[b];
        clocks.set_skew(SimTime((spec.skew_ps * 1e3).round() as i64));
        clocks.set_jitter(DAC_SAMPLE, SimTime((spec.jitter_ps * 1e3).round() as i64));
    }
    tree
}

/// Converter tile latencies of each board.
pub fn tile_latencies(bundle: &CompiledBundle, seed: u64) -> Vec<TileLatency> {
    bundle
        .plan
        .boards
        .iter()
        .enumerate()
        .map(|(b, spec)| {
            apply_mts(
                &TileLatency::aligned(TILES_PER_BOARD),
                spec.mts,
                derive_seed(seed, &[tag::MTS, b as u64]),
            )
        })
        .collect()
}

/// Raw IQ of the acquisitions one board owns, `[point][shot][local]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoardAcquisitions {
    pub board: String,
    /// Indices into the plan's acquisition list.
    pub acquisitions: Vec<usize>,
    /// Recorded shots per point.
    pub shots: Vec<usize>,
    pub data: Vec<Complex64>,
}

struct Placed {
    board: usize,
    entry: u32,
    global_tick: u64,
}

/// Collects events into shots and turns each finished shot into a control
/// record. Consecutive identical records of a point are kept once with a
/// count.
struct ShotAssembler<'a> {
    bundle: &'a CompiledBundle,
    plan: &'a Plan,
    dac: Frequency,
    phase_fs: Vec<i64>,
    tiles: Vec<TileLatency>,
    jitter: Vec<Option<(Normal<f64>, SimRng)>>,
    resumes: Vec<Vec<u64>>,
    open: BTreeMap<u64, Vec<Placed>>,
    finished_below: u64,
    records: Vec<Vec<(ControlRecord, usize)>>,
}

impl<'a> ShotAssembler<'a> {
    fn new(bundle: &'a CompiledBundle, tree: &ClockTree, tiles: Vec<TileLatency>, seed: u64) -> Self {
        let plan = &*bundle.plan;
        let jitter = tree
            .boards
            .iter()
            .enumerate()
            .map(|(b, c)| {
                let rms = c.dac_sample().jitter_rms.0;
                (rms > 0).then(|| {
                    (
                        Normal::new(0.0, rms as f64).expect("finite jitter"),
                        stream(seed, &[tag::CLOCK_JITTER, bundle.host_point as u64, b as u64]),
                    )
                })
            })
            .collect();
        ShotAssembler {
            bundle,
            plan,
            dac: plan.dac_rate,
            phase_fs: tree.boards.iter().map(|c| c.dac_sample().phase_offset.0).collect(),
            tiles,
            jitter,
            resumes: vec![Vec::new(); bundle.boards.len()],
            open: BTreeMap::new(),
            finished_below: 0,
            records: vec![Vec::new(); plan.rt_points],
        }
    }

    fn shot_of(&self, board: usize, ev: &TimedEvent) -> u64 {
        match self.plan.policy {
            SyncPolicy::PerShot => self.resumes[board].len().saturating_sub(1) as u64,
            SyncPolicy::Once => ev.tick / self.plan.period_ticks,
        }
    }

    /// Time-clock tick on board 0 at which shot `k` starts.
    fn origin_tick(&self, k: u64) -> u64 {
        let lead = self.plan.lead_ticks;
        match self.plan.policy {
            SyncPolicy::PerShot => self.resumes[0].get(k as usize).map_or(0, |c| c * TICKS_PER_CYCLE) + lead,
            SyncPolicy::Once => {
                self.resumes[0].first().map_or(0, |c| c * TICKS_PER_CYCLE) + k * self.plan.period_ticks + lead
            }
        }
    }

    /// Seconds from the shot origin (DAC sample `origin` on board 0) to DAC
    /// sample `sample` on `board`.
    fn rel_secs(&mut self, board: usize, sample: u64, origin: u64) -> f64 {
        let diff = sample as i128 - origin as i128;
        let mag = self.dac.ticks_to_fs(diff.unsigned_abs() as u64);
        let mut fs = if diff < 0 { -mag } else { mag };
        fs += self.phase_fs[board] - self.phase_fs[0];
        if let Some((n, rng)) = &mut self.jitter[board] {
            fs += n.sample(rng).round() as i64;
        }
        fs_to_secs(fs)
    }

    fn finish(&mut self, k: u64) {
        let events = self.open.remove(&k).unwrap_or_default();
        let plan = self.plan;
        let ts = 1.0 / self.dac.to_f64();
        let origin = self.origin_tick(k) * TICK_SAMPLES;
        let mut rec = ControlRecord {
            dc_volts: self.bundle.dc_volts.clone(),
            ..ControlRecord::default()
        };
        let mut readout_pulses: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
        let mut acqs: Vec<(usize, f64, f64)> = Vec::new();
        for e in &events {
            let bp = &self.bundle.boards[e.board];
            let entry = &bp.entries[e.entry as usize];
            match entry.source {
                EntrySource::Pulse(i) => {
                    let info = &plan.channels[plan.pulse_channels[i]];
                    let sample = (e.global_tick + entry.delay_ticks as u64) * TICK_SAMPLES
                        + entry.pad as u64
                        + self.tiles[e.board].offset(info.tile()) as u64;
                    let start = self.rel_secs(e.board, sample, origin);
                    let duration = entry.length as f64 * ts;
                    if entry.length == 0 {
                        continue;
                    }
                    match info.kind {
                        ChannelKind::Flux => rec.flux_pulses.push(FluxPulse {
                            qubit: info.qubit,
                            start,
                            duration,
                            excursion_v: entry.excursion_v,
                        }),
                        ChannelKind::Drive => rec.drive_pulses.push(DrivePulse {
                            qubit: info.qubit,
                            start,
                            duration,
                            freq_hz: entry.freq_hz,
                            area: entry.area_s,
                        }),
                        ChannelKind::Readout => {
                            readout_pulses.push((plan.pulse_channels[i], start, duration, entry.freq_hz, entry.gain))
                        }
                    }
                }
                EntrySource::Acquire(a) => {
                    let sample = e.global_tick * TICK_SAMPLES;
                    let start = self.rel_secs(e.board, sample, origin);
                    acqs.push((a, start, fs_to_secs(entry.window_fs)));
                }
            }
        }
        acqs.sort_by_key(|a| a.0);
        for (a, acq_start, acq_window) in acqs {
            let ch = plan.acquisitions[a].channel;
            let overlap = |p: &(usize, f64, f64, f64, f64)| {
                (p.1 + p.2).min(acq_start + acq_window) - p.1.max(acq_start)
            };
            let tone = readout_pulses
                .iter()
                .filter(|p| p.0 == ch)
                .max_by(|x, y| overlap(x).total_cmp(&overlap(y)));
            let (start, duration, freq_hz, amp) = tone.map_or((acq_start, 0.0, 0.0, 0.0), |p| (p.1, p.2, p.3, p.4));
            rec.readouts.push(ReadoutTone {
                qubit: plan.channels[ch].qubit,
                freq_hz,
                amp,
                start,
                duration,
                acq_start,
                acq_window,
            });
        }
        let key = |s: f64, q: usize, d: f64| (s, q, d);
        rec.flux_pulses.sort_by(|a, b| {
            let (x, y) = (key(a.start, a.qubit, a.duration), key(b.start, b.qubit, b.duration));
            x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.total_cmp(&y.2))
        });
        rec.drive_pulses.sort_by(|a, b| {
            a.start
                .total_cmp(&b.start)
                .then(a.qubit.cmp(&b.qubit))
                .then(a.duration.total_cmp(&b.duration))
        });

        let point = (k as usize / plan.nshots).min(plan.rt_points.saturating_sub(1));
        let list = &mut self.records[point];
        match list.last_mut() {
            Some((last, n)) if *last == rec => *n += 1,
            _ => list.push((rec, 1)),
        }
        self.finished_below = self.finished_below.max(k + 1);
    }

    fn finish_below(&mut self, limit: u64) {
        while let Some((&k, _)) = self.open.first_key_value() {
            if k >= limit {
                break;
            }
            self.finish(k);
        }
    }
}

impl EventSink for ShotAssembler<'_> {
    fn on_event(&mut self, board: usize, _cycle: u64, ev: &TimedEvent) -> Result<(), String> {
        let k = self.shot_of(board, ev);
        if k < self.finished_below {
            return Err(format!(
                "board {board}: event for shot {k} arrived after the shot was closed"
            ));
        }
        self.open.entry(k).or_default().push(Placed {
            board,
            entry: ev.entry,
            global_tick: ev.global_tick,
        });
        self.finish_below(k.saturating_sub(1));
        Ok(())
    }

    fn on_resume(&mut self, board: usize, epoch_cycle: u64) -> Result<(), String> {
        self.resumes[board].push(epoch_cycle);
        Ok(())
    }
}

fn lockstep_error(bundle: &CompiledBundle, e: LockstepError) -> ExecError {
    let name = |b: usize| bundle.boards.get(b).map_or_else(|| b.to_string(), |p| p.name.clone());
    match e {
        LockstepError::SyncTimeout { cycle, stuck, .. } => ExecError::SyncTimeout {
            cycle,
            stuck: stuck.into_iter().map(|s| (name(s.board), s.pc, s.halted)).collect(),
        },
        LockstepError::Core { board, source } => ExecError::Core {
            board: name(board),
            source,
        },
        other => ExecError::Lockstep(other),
    }
}

/// Run the boards of `bundle` and return each board's acquisitions.
pub fn run_boards(bundle: &CompiledBundle, ctx: &SimContext) -> Result<Vec<BoardAcquisitions>, ExecError> {
    if bundle.boards.is_empty() {
        return Err(ExecError::NoBoards);
    }
    let plan = &*bundle.plan;
    let tree = build_clocks(bundle);
    let tiles = tile_latencies(bundle, ctx.seed);
    let mut sink = ShotAssembler::new(bundle, &tree, tiles, ctx.seed);
    let programs = bundle.boards.iter().map(|b| &b.program).collect();
    let models = bundle.boards.iter().map(|b| b.sync_model).collect();
    Lockstep::new(programs, models, tree.board(0).pl_refclk(), ctx.lockstep.clone())
        .run(&mut sink)
        .map_err(|e| lockstep_error(bundle, e))?;
    sink.finish_below(u64::MAX);
    let records = sink.records;

    if plan.acquisitions.is_empty() {
        return Ok(Vec::new());
    }
    let host = bundle.host_point as u64;
    let nacq = plan.acquisitions.len();
    // [point] -> ([acq][shot], shots)
    let per_point: Vec<(Vec<Vec<Complex64>>, usize)> = records
        .into_par_iter()
        .enumerate()
        .map(|(p, runs)| {
            let mut rngs: Vec<SimRng> = (0..nacq)
                .map(|a| stream(ctx.seed, &[tag::READOUT_NOISE, host, p as u64, a as u64]))
                .collect();
            let sigma = ctx.qpu.readout.noise_sigma;
            let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
            let mut out = vec![Vec::new(); nacq];
            let mut shots = 0;
            for (rec, n) in &runs {
                let mean = expected_response(&ctx.qpu, rec)?;
                for (a, rng) in rngs.iter_mut().enumerate() {
                    let m = mean.get(a).copied().unwrap_or_default();
                    for _ in 0..*n {
                        out[a].push(m + draw(noise.as_ref(), rng));
                    }
                }
                shots += n;
            }
            Ok((out, shots))
        })
        .collect::<Result<_, QpuError>>()?;

    let mut parts = Vec::new();
    for bp in &bundle.boards {
        let owned: Vec<usize> = (0..nacq)
            .filter(|&a| plan.channels[plan.acquisitions[a].channel].board == bp.map_board)
            .collect();
        if owned.is_empty() {
            continue;
        }
        let mut data = Vec::new();
        let mut shots = Vec::new();
        for (iq, n) in &per_point {
            shots.push(*n);
            for s in 0..*n {
                for &a in &owned {
                    data.push(iq[a][s]);
                }
            }
        }
        parts.push(BoardAcquisitions {
            board: bp.name.clone(),
            acquisitions: owned,
            shots,
            data,
        });
    }
    Ok(parts)
}

fn draw<R: Rng + ?Sized>(n: Option<&Normal<f64>>, rng: &mut R) -> Complex64 {
    match n {
        Some(n) => Complex64::new(n.sample(rng), n.sample(rng)),
        None => Complex64::new(0.0, 0.0),
    }
}

/// Reorder board acquisitions into declaration order, check shot counts and
/// apply the averaging mode.
pub fn aggregate(plan: &Plan, host: usize, parts: &[BoardAcquisitions]) -> Result<ResultSet, ExecError> {
    let channels: Vec<String> = plan.acquisitions.iter().map(|a| a.name.clone()).collect();
    let mut out = ResultSet::zeros(batch_axes(plan, host), channels, plan.averaging, plan.nshots);
    let mut seen = vec![false; plan.acquisitions.len()];
    for part in parts {
        let width = part.acquisitions.len();
        let mut offset = 0;
        for p in 0..plan.rt_points {
            let got = part.shots.get(p).copied().unwrap_or(0);
            if got != plan.nshots {
                return Err(ExecError::ShotMismatch {
                    channel: plan.acquisitions[part.acquisitions[0]].name.clone(),
                    point: p,
                    expected: plan.nshots,
                    got,
                });
            }
            let idx = plan.axis_indices(host, p);
            let at = |axis: usize| if plan.host_axes.contains(&axis) { 0 } else { idx[axis] };
            for (local, &a) in part.acquisitions.iter().enumerate() {
                seen[a] = true;
                let shot = |s: usize| part.data[offset + s * width + local];
                match plan.averaging {
                    Averaging::Binned => {
                        for s in 0..got {
                            let i = out.index(at(0), at(1), s, a);
                            out.data[i] = shot(s);
                        }
                    }
                    Averaging::Averaged => {
                        let sum: Complex64 = (0..got).map(shot).sum();
                        let i = out.index(at(0), at(1), 0, a);
                        out.data[i] = sum / got as f64;
                    }
                }
            }
            offset += got * width;
        }
    }
    if let Some(a) = seen.iter().position(|s| !s) {
        return Err(ExecError::ShotMismatch {
            channel: plan.acquisitions[a].name.clone(),
            point: 0,
            expected: plan.nshots,
            got: 0,
        });
    }
    Ok(out)
}

/// Run one host-loop batch.
/// Run the bundle's programs and write their event trace as CSV (see
/// [`write_trace_csv`]).
pub fn trace<W: std::io::Write>(bundle: &CompiledBundle, ctx: &SimContext, w: W) -> Result<std::io::Result<()>, ExecError> {
    if bundle.boards.is_empty() {
        return Err(ExecError::NoBoards);
    }
    let tree = build_clocks(bundle);
    let programs: Vec<_> = bundle.boards.iter().map(|b| &b.program).collect();
    let models: Vec<_> = bundle.boards.iter().map(|b| b.sync_model).collect();
    let (sink, _) = run_collect(&programs, &models, tree.board(0).pl_refclk(), ctx.lockstep.clone())
        .map_err(|e| lockstep_error(bundle, e))?;
    let clocks: Vec<_> = (0..bundle.boards.len()).map(|b| tree.board(b).time_clock()).collect();
    Ok(write_trace_csv(w, &sink.events, &clocks))
}

pub fn execute(bundle: &CompiledBundle, ctx: &SimContext) -> Result<ResultSet, ExecError> {
    let parts = run_boards(bundle, ctx)?;
    aggregate(&bundle.plan, bundle.host_point, &parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::boardmap::BoardMap;
    use crate::orchestrator::compile::{compile, compile_single_board};
    use crate::orchestrator::experiment::{Acquisition, Experiment, PulseSpec, Shape, SweepParam, SweepSpec};
    use crate::qpu::{dressed_resonator_freq, qubit_freq};
    use crate::tproc::{Instruction, Reg};

    fn pulse(id: &str, channel: &str, start_ns: f64, duration_ns: f64, freq_hz: f64, amp: f64) -> PulseSpec {
        PulseSpec {
            id: id.into(),
            channel: channel.into(),
            kind: None,
            shape: Shape::Square,
            start_ns,
            duration_ns,
            freq_hz,
            amp,
            phase: 0.0,
        }
    }

    fn ro_freq(params: &QpuParams, q: usize) -> f64 {
        dressed_resonator_freq(&params.resonators[q], &params.qubits[q], 0.0).unwrap()
    }

    /// π pulse and readout on `qubits`.
    fn pi_and_read(params: &QpuParams, qubits: &[usize], nshots: usize) -> Experiment {
        let mut exp = Experiment {
            nshots,
            relax_ns: 1000.0,
            ..Experiment::default()
        };
        for &q in qubits {
            let amp = params.qubits[q].pi_area / 40e-9;
            let fq = qubit_freq(&params.qubits[q], 0.0);
            exp.pulses.push(pulse(&format!("x{q}"), &format!("q{q}.drive"), 0.0, 40.0, fq, amp));
            exp.pulses.push(pulse(&format!("ro{q}"), &format!("q{q}.ro"), 60.0, 1000.0, ro_freq(params, q), 0.1));
            exp.acquisitions.push(Acquisition {
                channel: format!("q{q}.ro"),
                start_ns: 60.0,
                window_ns: 1000.0,
            });
        }
        exp
    }

    /// Row-0 channels only; `split` moves q3 and q4 to board B.
    fn row_map(split: bool) -> BoardMap {
        let mut map = BoardMap::ladder_default(&[]);
        map.channels.retain(|c| c.qubit < 5);
        if split {
            for c in &mut map.channels {
                if c.qubit >= 3 {
                    c.board = "B".into();
                }
            }
        }
        map
    }

    fn ctx(params: &QpuParams) -> SimContext {
        SimContext::new(11, params.clone())
    }

    #[test]
    fn pi_pulse_moves_the_readout() {
        let params = QpuParams::default_table();
        let map = BoardMap::ladder_default(&[]);
        let mut exp = pi_and_read(&params, &[0], 20);
        let excited = execute(&compile(&exp, &map).unwrap().batches[0], &ctx(&params)).unwrap();
        exp.pulses[0].amp = 0.0;
        let ground = execute(&compile(&exp, &map).unwrap().batches[0], &ctx(&params)).unwrap();
        assert_eq!(excited.shape(), [1, 1, 20, 1]);
        let (e, g) = (excited.mean(0, 0, 0).norm(), ground.mean(0, 0, 0).norm());
        // Probing the ground-state resonance: the dip sits under the tone
        // only when the qubit is in |0⟩.
        assert!(g < 0.1 * (1.0 - 0.8) + 0.005, "ground {g}");
        assert!(e > g + 0.02, "excited {e} vs ground {g}");
    }

    #[test]
    fn board_split_does_not_change_results() {
        let params = QpuParams::default_table();
        let exp = pi_and_read(&params, &[1, 3], 5);
        let one = compile_single_board(&exp, &row_map(false), "A").unwrap();
        let two = compile(&exp, &row_map(true)).unwrap();
        assert_eq!(two.batches[0].boards.len(), 2);
        let r1 = execute(&one.batches[0], &ctx(&params)).unwrap();
        let r2 = execute(&two.batches[0], &ctx(&params)).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn sync_policies_agree() {
        let params = QpuParams::default_table();
        let map = BoardMap::ladder_default(&[]);
        let mut exp = pi_and_read(&params, &[0, 6], 4);
        let a = execute(&compile(&exp, &map).unwrap().batches[0], &ctx(&params)).unwrap();
        exp.sync_policy = SyncPolicy::Once;
        let b = execute(&compile(&exp, &map).unwrap().batches[0], &ctx(&params)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn averaged_is_the_shot_mean() {
        let params = QpuParams::default_table();
        let map = BoardMap::ladder_default(&[]);
        let mut exp = pi_and_read(&params, &[0], 8);
        let binned = execute(&compile(&exp, &map).unwrap().batches[0], &ctx(&params)).unwrap();
        exp.averaging = Averaging::Averaged;
        let avg = execute(&compile(&exp, &map).unwrap().batches[0], &ctx(&params)).unwrap();
        assert_eq!(avg.shape(), [1, 1, 1, 1]);
        assert!((avg.get(0, 0, 0, 0) - binned.mean(0, 0, 0)).norm() < 1e-12);
    }

    #[test]
    fn missing_sync_times_out_naming_the_board() {
        let params = QpuParams::default_table();
        let map = BoardMap::ladder_default(&[]);
        // Board B only runs the loop skeleton; losing its SYNC leaves A
        // waiting at the first barrier.
        let exp = pi_and_read(&params, &[0], 2);
        let mut bundle = compile(&exp, &map).unwrap().batches.remove(0);
        let prog = &mut bundle.boards[1].program;
        for ins in &mut prog.instructions {
            if *ins == Instruction::Sync {
                *ins = Instruction::Set {
                    rd: Reg::new(20).unwrap(),
                    imm: 0,
                };
            }
        }
        let mut c = ctx(&params);
        c.lockstep.sync_timeout_cycles = 100_000;
        match execute(&bundle, &c) {
            Err(e @ ExecError::SyncTimeout { .. }) => {
                let text = e.to_string();
                assert!(text.contains("board `B`"), "{text}");
            }
            other => panic!("expected a sync timeout, got {other:?}"),
        }
    }

    #[test]
    fn no_acquisitions_gives_an_empty_result() {
        let params = QpuParams::default_table();
        let map = BoardMap::ladder_default(&[]);
        let mut exp = pi_and_read(&params, &[0], 3);
        exp.acquisitions.clear();
        let r = execute(&compile(&exp, &map).unwrap().batches[0], &ctx(&params)).unwrap();
        assert!(r.channels.is_empty());
        assert!(r.data.is_empty());
    }

    #[test]
    fn aggregate_rejects_short_boards() {
        let params = QpuParams::default_table();
        let map = BoardMap::ladder_default(&[]);
        let exp = pi_and_read(&params, &[0, 6], 3);
        let bundle = compile(&exp, &map).unwrap().batches.remove(0);
        let mut parts = run_boards(&bundle, &ctx(&params)).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[1].acquisitions, vec![1]);
        // Declaration order survives any board order.
        parts.reverse();
        let r = aggregate(&bundle.plan, 0, &parts).unwrap();
        assert_eq!(r, execute(&bundle, &ctx(&params)).unwrap());
        parts[0].shots[0] = 2;
        assert!(matches!(
            aggregate(&bundle.plan, 0, &parts),
            Err(ExecError::ShotMismatch { expected: 3, got: 2, .. })
        ));
    }

    #[test]
    fn host_batches_merge_in_order() {
        let params = QpuParams::default_table();
        let map = BoardMap::ladder_default(&[]);
        let mut exp = pi_and_read(&params, &[0], 2);
        exp.pulses[0].amp = 0.0;
        exp.sweeps.push(SweepSpec {
            parameter: SweepParam::DcBias,
            targets: vec!["q0.flux".into()],
            start: 0.0,
            stop: 0.2,
            step: 0.1,
            offset: false,
            mode: None,
        });
        exp.sweeps.push(SweepSpec {
            parameter: SweepParam::Frequency,
            targets: vec!["ro0".into()],
            start: -1e6,
            stop: 1e6,
            step: 1e6,
            offset: true,
            mode: None,
        });
        let c = compile(&exp, &map).unwrap();
        let parts: Vec<_> = c.batches.iter().map(|b| execute(b, &ctx(&params)).unwrap()).collect();
        assert_eq!(parts[0].shape(), [1, 3, 2, 1]);
        let full = crate::orchestrator::merge_batches(&c.plan, &parts);
        assert_eq!(full.shape(), [3, 3, 2, 1]);
        for h in 0..3 {
            for p in 0..3 {
                assert_eq!(full.get(h, p, 1, 0), parts[h].get(0, p, 1, 0));
            }
        }
    }
}
