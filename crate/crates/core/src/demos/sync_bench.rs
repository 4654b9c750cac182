// SPDX-License-Identifier: Apache-2.0
//! Cross-board skew bench: every board runs filler of some length, a SYNC,
//! and a square pulse on one generator per DAC tile at a fixed counter
//! time. Pulse starts are measured on a simulated scope at the 50% crossing.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::dsp::{apply_mts, TileLatency, INTERPOLATION};
use crate::lockstep::{run_collect, LockstepConfig, LockstepError};
use crate::orchestrator::boardmap::{generator_tile, TILES_PER_BOARD};
use crate::rng::{derive_seed, stream, tag};
use crate::timebase::{ClockTree, SimTime};
use crate::tproc::{EventKind, Instruction, Reg, Src, SyncModel, TProcProgram, TimeOperand};

use super::stats::SkewSummary;

/// Counter time of the measured pulses, in time-clock ticks.
pub const PULSE_TICK: u32 = 30;
/// Scope sample spacing.
pub const SCOPE_STEP_FS: i64 = 20_000;
/// Generator whose cross-board skew is reported.
pub const PRIMARY_GEN: u16 = 6;
/// One pulsed generator per DAC tile.
pub const TILE_GENS: [u16; TILES_PER_BOARD] = [2, PRIMARY_GEN, 10, 12];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LengthMode {
    /// Each board draws a filler length in `1..=max_filler` every rep.
    Random,
    /// Rep `r` gives board 0 `r + 1` filler instructions; the other boards
    /// keep `max_filler`.
    Sweep,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyncBenchConfig {
    pub boards: usize,
    pub reps: usize,
    pub jitter_ps: f64,
    pub legacy: bool,
    pub mts: bool,
    pub seed: u64,
    pub max_filler: usize,
    pub lengths: LengthMode,
}

impl Default for SyncBenchConfig {
    fn default() -> Self {
        SyncBenchConfig {
            boards: 2,
            reps: 1000,
            jitter_ps: 0.0,
            legacy: false,
            mts: true,
            seed: 1,
            max_filler: 60,
            lengths: LengthMode::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SyncBenchError {
    #[error("at least 2 boards are required, got {0}")]
    TooFewBoards(usize),
    #[error("at least one rep is required")]
    NoReps,
    #[error("max filler length must be at least 1")]
    NoFiller,
    #[error("jitter must be finite and non-negative, got {0} ps")]
    BadJitter(f64),
    #[error("rep {rep}: {source}")]
    Lockstep {
        rep: usize,
        #[source]
        source: LockstepError,
    },
    #[error("rep {rep}: board {board} emitted {got} pulses, expected {expected}")]
    MissingPulse {
        rep: usize,
        board: usize,
        got: usize,
        expected: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyncRep {
    pub lengths: Vec<usize>,
    /// Barrier release cycle of each board minus the earliest one.
    pub resume_offsets: Vec<u64>,
    /// 50% crossing of the primary-generator pulse per board.
    pub crossings_fs: Vec<f64>,
    /// Spread of `crossings_fs`.
    pub skew_fs: f64,
    /// Largest crossing spread across the tiles of any one board.
    pub tile_skew_fs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyncBenchReport {
    pub config: SyncBenchConfig,
    pub tiles: Vec<TileLatency>,
    pub reps: Vec<SyncRep>,
    pub summary: SkewSummary,
    pub tile_summary: SkewSummary,
    pub offset_set: BTreeSet<u64>,
}

impl SyncBenchReport {
    /// `rep,skew_fs,resume_offset_cycles,tile_skew_fs`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "rep,skew_fs,resume_offset_cycles,tile_skew_fs")?;
        for (i, r) in self.reps.iter().enumerate() {
            let off = r.resume_offsets.iter().max().copied().unwrap_or(0);
            writeln!(w, "{i},{},{off},{}", r.skew_fs, r.tile_skew_fs)?;
        }
        Ok(())
    }
}

/// Filler of `len` register ops, a barrier, one pulse per tile, END.
pub fn bench_program<R: Rng + ?Sized>(len: usize, rng: &mut R) -> TProcProgram {
    let mut ins = Vec::with_capacity(len + TILES_PER_BOARD + 2);
    let r = |i| Reg::new(i).expect("register in range");
    for _ in 0..len {
        let rd = r(rng.random_range(1..8));
        if rng.random_bool(0.5) {
            ins.push(Instruction::Set {
                rd,
                imm: rng.random_range(-1000..1000),
            });
        } else {
            ins.push(Instruction::Add {
                rd,
                ra: r(rng.random_range(1..8)),
                src: Src::Imm(rng.random_range(-10..10)),
            });
        }
    }
    ins.push(Instruction::Sync);
    for ch in TILE_GENS {
        ins.push(Instruction::Trig {
            ch,
            entry: Src::Imm(0),
            time: TimeOperand::at(PULSE_TICK),
        });
    }
    ins.push(Instruction::End);
    TProcProgram::new(ins)
}

/// 50% crossing of a unit step with a linear edge of `rise_fs` starting at
/// `start_fs`, sampled every `SCOPE_STEP_FS` and interpolated linearly.
pub fn scope_crossing(start_fs: i64, rise_fs: i64) -> f64 {
    let level = |t: i64| ((t - start_fs) as f64 / rise_fs as f64).clamp(0.0, 1.0);
    let mut k = start_fs.div_euclid(SCOPE_STEP_FS);
    while level(k * SCOPE_STEP_FS) < 0.5 {
        k += 1;
    }
    let (t1, v1) = (k * SCOPE_STEP_FS, level(k * SCOPE_STEP_FS));
    let (t0, v0) = (t1 - SCOPE_STEP_FS, level(t1 - SCOPE_STEP_FS));
    t0 as f64 + (0.5 - v0) / (v1 - v0) * SCOPE_STEP_FS as f64
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

pub fn sync_bench(cfg: &SyncBenchConfig) -> Result<SyncBenchReport, SyncBenchError> {
    if cfg.boards < 2 {
        return Err(SyncBenchError::TooFewBoards(cfg.boards));
    }
    if cfg.reps == 0 {
        return Err(SyncBenchError::NoReps);
    }
    if cfg.max_filler == 0 {
        return Err(SyncBenchError::NoFiller);
    }
    if !(cfg.jitter_ps.is_finite() && cfg.jitter_ps >= 0.0) {
        return Err(SyncBenchError::BadJitter(cfg.jitter_ps));
    }
    let tree = ClockTree::standard(cfg.boards);
    let refclk = tree.board(0).pl_refclk();
    let dac = tree.board(0).dac_sample().clone();
    let rise_fs = dac.nominal_edge(1).fs();
    let model = if cfg.legacy { SyncModel::Legacy } else { SyncModel::Modified };
    let models = vec![model; cfg.boards];
    let tiles: Vec<TileLatency> = (0..cfg.boards)
        .map(|b| {
            apply_mts(
                &TileLatency::aligned(TILES_PER_BOARD),
                cfg.mts,
                derive_seed(cfg.seed, &[tag::MTS, b as u64]),
            )
        })
        .collect();
    let jitter_fs = cfg.jitter_ps * 1e3;
    let normal = (jitter_fs > 0.0).then(|| Normal::new(0.0, jitter_fs).expect("finite jitter"));
    let lockstep_cfg = LockstepConfig {
        max_cycles: 1 << 20,
        sync_timeout_cycles: 1 << 16,
        propagation_delay: SimTime::ZERO,
        fast_forward: true,
    };

    let mut reps = Vec::with_capacity(cfg.reps);
    for rep in 0..cfg.reps {
        let mut prog_rng = stream(cfg.seed, &[tag::PROGRAM_LENGTH, rep as u64]);
        let lengths: Vec<usize> = (0..cfg.boards)
            .map(|b| match cfg.lengths {
                LengthMode::Random => prog_rng.random_range(1..=cfg.max_filler),
                LengthMode::Sweep if b == 0 => rep % cfg.max_filler + 1,
                LengthMode::Sweep => cfg.max_filler,
            })
            .collect();
        let programs: Vec<TProcProgram> = lengths.iter().map(|&l| bench_program(l, &mut prog_rng)).collect();
        let refs: Vec<&TProcProgram> = programs.iter().collect();
        let (sink, _) = run_collect(&refs, &models, refclk, lockstep_cfg.clone())
            .map_err(|source| SyncBenchError::Lockstep { rep, source })?;

        let resumes: Vec<u64> = sink.resumes.iter().map(|r| r.first().copied().unwrap_or(0)).collect();
        let first = resumes.iter().copied().min().unwrap_or(0);
        let mut crossings = vec![0.0; cfg.boards];
        let mut tile_skew: f64 = 0.0;
        for b in 0..cfg.boards {
            // One clock edge per board per rep; every tile sees the same jitter.
            let j = match &normal {
                Some(n) => {
                    let mut rng = stream(cfg.seed, &[tag::CLOCK_JITTER, rep as u64, b as u64]);
                    n.sample(&mut rng).round() as i64
                }
                None => 0,
            };
            let pulses: Vec<_> = sink
                .events
                .iter()
                .filter(|e| e.board == b && e.event.kind == EventKind::PulseStart)
                .collect();
            if pulses.len() != TILES_PER_BOARD {
                return Err(SyncBenchError::MissingPulse {
                    rep,
                    board: b,
                    got: pulses.len(),
                    expected: TILES_PER_BOARD,
                });
            }
            let mut per_tile = Vec::with_capacity(TILES_PER_BOARD);
            for e in pulses {
                let tile = generator_tile(e.event.channel);
                let sample = e.event.global_tick * INTERPOLATION as u64 + tiles[b].offset(tile) as u64;
                let start = tree.board(b).dac_sample().nominal_edge(sample).fs() + j;
                let x = scope_crossing(start, rise_fs);
                if e.event.channel == PRIMARY_GEN {
                    crossings[b] = x;
                }
                per_tile.push(x);
            }
            tile_skew = tile_skew.max(spread(&per_tile));
        }
        reps.push(SyncRep {
            lengths,
            resume_offsets: resumes.iter().map(|r| r - first).collect(),
            skew_fs: spread(&crossings),
            crossings_fs: crossings,
            tile_skew_fs: tile_skew,
        });
    }
    let skews: Vec<f64> = reps.iter().map(|r| r.skew_fs).collect();
    let tile_skews: Vec<f64> = reps.iter().map(|r| r.tile_skew_fs).collect();
    let offset_set = reps.iter().flat_map(|r| r.resume_offsets.iter().copied()).collect();
    Ok(SyncBenchReport {
        config: cfg.clone(),
        tiles,
        summary: SkewSummary::from_values(&skews),
        tile_summary: SkewSummary::from_values(&tile_skews),
        reps,
        offset_set,
    })
}
