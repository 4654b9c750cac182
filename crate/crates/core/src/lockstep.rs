// SPDX-License-Identifier: Apache-2.0
//! Multi-board lockstep scheduler: every board's core and Sync IP advance on
//! the same `pl_refclk` edge, with the shared bus updated two-phase.
//!
//! Stretches where every core is stalled (WAITT or SYNC wait) and the bus
//! cannot change are skipped in one jump.

use crate::syncbus::{SyncBus, SyncBusError};
use crate::timebase::{ClockDomain, SimTime};
use crate::tproc::{step_with, StepKind, SyncModel, TProcError, TProcProgram, TProcState, TimedEvent};

#[derive(Clone, Debug)]
pub struct LockstepConfig {
    /// Hard cap on simulated core cycles.
    pub max_cycles: u64,
    /// A board waiting at a barrier longer than this is a sync timeout.
    pub sync_timeout_cycles: u64,
    pub propagation_delay: SimTime,
    pub fast_forward: bool,
}

impl Default for LockstepConfig {
    fn default() -> Self {
        LockstepConfig {
            max_cycles: 1 << 40,
            sync_timeout_cycles: 1 << 24,
            propagation_delay: SimTime::ZERO,
            fast_forward: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StuckBoard {
    pub board: usize,
    pub pc: usize,
    pub halted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LockstepError {
    #[error("sync timeout at cycle {cycle}: boards {waiting:?} wait at a barrier; {}", describe_stuck(.stuck))]
    SyncTimeout {
        cycle: u64,
        waiting: Vec<usize>,
        stuck: Vec<StuckBoard>,
    },
    #[error("board {board}: {source}")]
    Core {
        board: usize,
        #[source]
        source: TProcError,
    },
    #[error("watchdog: exceeded {0} cycles")]
    Watchdog(u64),
    #[error(transparent)]
    Bus(#[from] SyncBusError),
    #[error("{0}")]
    Sink(String),
}

fn describe_stuck(stuck: &[StuckBoard]) -> String {
    stuck
        .iter()
        .map(|s| {
            let what = if s.halted { "halted without reaching SYNC" } else { "never reached SYNC" };
            format!("board {} {what} (pc {})", s.board, s.pc)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Receives events in emission order: by cycle, then by board.
pub trait EventSink {
    fn on_event(&mut self, board: usize, cycle: u64, event: &TimedEvent) -> Result<(), String>;

    /// `epoch_cycle` is the cycle at which the board's counter reads zero.
    fn on_resume(&mut self, _board: usize, _epoch_cycle: u64) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoardEvent {
    pub board: usize,
    pub cycle: u64,
    pub event: TimedEvent,
}

/// Sink that keeps everything.
#[derive(Clone, Debug, Default)]
pub struct CollectSink {
    pub events: Vec<BoardEvent>,
    /// Per board, the epoch cycle of each barrier release.
    pub resumes: Vec<Vec<u64>>,
}

impl EventSink for CollectSink {
    fn on_event(&mut self, board: usize, cycle: u64, event: &TimedEvent) -> Result<(), String> {
        self.events.push(BoardEvent {
            board,
            cycle,
            event: *event,
        });
        Ok(())
    }

    fn on_resume(&mut self, board: usize, epoch_cycle: u64) -> Result<(), String> {
        if self.resumes.len() <= board {
            self.resumes.resize(board + 1, Vec::new());
        }
        self.resumes[board].push(epoch_cycle);
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LockstepResult {
    pub states: Vec<TProcState>,
    pub cycles: u64,
    pub skipped_cycles: u64,
}

pub struct Lockstep<'a> {
    programs: Vec<&'a TProcProgram>,
    models: Vec<SyncModel>,
    refclk: &'a ClockDomain,
    cfg: LockstepConfig,
}

impl<'a> Lockstep<'a> {
    /// `refclk` is the shared `pl_refclk` that clocks every Sync IP.
    pub fn new(
        programs: Vec<&'a TProcProgram>,
        models: Vec<SyncModel>,
        refclk: &'a ClockDomain,
        cfg: LockstepConfig,
    ) -> Self {
        assert_eq!(programs.len(), models.len(), "one sync model per board");
        Lockstep {
            programs,
            models,
            refclk,
            cfg,
        }
    }

    pub fn run(&self, sink: &mut dyn EventSink) -> Result<LockstepResult, LockstepError> {
        let n = self.programs.len();
        let mut bus = SyncBus::new(n, self.cfg.propagation_delay)?;
        let mut states = vec![TProcState::new(); n];
        let mut wait_since: Vec<Option<u64>> = vec![None; n];
        let mut cycle = 0u64;
        let mut skipped = 0u64;

        loop {
            if states.iter().all(|s| s.halted) {
                break;
            }
            if cycle >= self.cfg.max_cycles {
                return Err(LockstepError::Watchdog(self.cfg.max_cycles));
            }
            if self.cfg.fast_forward {
                if let Some(jump) = self.quiet_jump(&states, &bus, cycle)? {
                    for s in states.iter_mut().filter(|s| !s.halted) {
                        s.skip_cycles(jump);
                    }
                    cycle += jump;
                    skipped += jump;
                    self.check_timeout(&states, &wait_since, cycle)?;
                    continue;
                }
            }

            let edge = self.refclk.nominal_edge(cycle);
            let flags = bus.clock_fsms(edge);
            for b in 0..n {
                if states[b].halted {
                    continue;
                }
                let out = step_with(self.models[b], &mut states[b], self.programs[b], flags[b])
                    .map_err(|source| LockstepError::Core { board: b, source })?;
                if let Some(ev) = out.event {
                    sink.on_event(b, cycle, &ev).map_err(LockstepError::Sink)?;
                }
                match out.kind {
                    StepKind::SyncFetched => {
                        bus.assert_ready(b, edge);
                        wait_since[b] = Some(cycle);
                    }
                    StepKind::Resumed => {
                        wait_since[b] = None;
                        sink.on_resume(b, states[b].epoch_cycle)
                            .map_err(LockstepError::Sink)?;
                    }
                    _ => {}
                }
            }
            bus.sample(edge);
            cycle += 1;
            self.check_timeout(&states, &wait_since, cycle)?;
        }
        Ok(LockstepResult {
            states,
            cycles: cycle,
            skipped_cycles: skipped,
        })
    }

    /// Number of cycles that can be skipped from `cycle`, or `None` when some
    /// board does real work this cycle.
    fn quiet_jump(
        &self,
        states: &[TProcState],
        bus: &SyncBus,
        cycle: u64,
    ) -> Result<Option<u64>, LockstepError> {
        if !bus.quiescent() {
            return Ok(None);
        }
        let mut wake = u64::MAX;
        let mut any_waiting = false;
        for (b, s) in states.iter().enumerate() {
            if s.halted {
                continue;
            }
            if s.waiting_sync() {
                if s.legacy_flush.is_some() {
                    return Ok(None);
                }
                any_waiting = true;
                continue;
            }
            match s.waitt_wake_cycle(self.programs[b]) {
                Some(w) => wake = wake.min(w),
                None => return Ok(None),
            }
        }
        if wake == u64::MAX {
            // Only barrier waiters and halted boards remain: nobody can release.
            if any_waiting {
                return Err(self.timeout_error(states, cycle));
            }
            return Ok(None);
        }
        let target = wake.min(self.cfg.max_cycles);
        Ok((target > cycle).then(|| target - cycle))
    }

    fn check_timeout(
        &self,
        states: &[TProcState],
        wait_since: &[Option<u64>],
        cycle: u64,
    ) -> Result<(), LockstepError> {
        let expired = wait_since
            .iter()
            .any(|w| matches!(w, Some(t) if cycle - t > self.cfg.sync_timeout_cycles));
        // A legacy board counting down its flush already holds the flag.
        let blocked = |s: &TProcState| s.waiting_sync() && s.legacy_flush.is_none();
        let dead = states.iter().any(blocked)
            && states.iter().all(|s| s.halted || blocked(s))
            && states.iter().any(|s| s.halted);
        if expired || dead {
            return Err(self.timeout_error(states, cycle));
        }
        Ok(())
    }

    fn timeout_error(&self, states: &[TProcState], cycle: u64) -> LockstepError {
        let waiting = (0..states.len()).filter(|&b| states[b].waiting_sync()).collect();
        let stuck = states
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.waiting_sync())
            .map(|(board, s)| StuckBoard {
                board,
                pc: s.pc,
                halted: s.halted,
            })
            .collect();
        LockstepError::SyncTimeout {
            cycle,
            waiting,
            stuck,
        }
    }
}

/// Convenience wrapper collecting every event.
pub fn run_collect(
    programs: &[&TProcProgram],
    models: &[SyncModel],
    refclk: &ClockDomain,
    cfg: LockstepConfig,
) -> Result<(CollectSink, LockstepResult), LockstepError> {
    let mut sink = CollectSink {
        events: Vec::new(),
        resumes: vec![Vec::new(); programs.len()],
    };
    let res = Lockstep::new(programs.to_vec(), models.to_vec(), refclk, cfg).run(&mut sink)?;
    Ok((sink, res))
}

/// Write `board,cycle,event_kind,channel,time_fs` rows; times are nominal
/// `time_clock` edges of each event's board.
pub fn write_trace_csv<W: std::io::Write>(
    mut w: W,
    events: &[BoardEvent],
    time_clocks: &[&ClockDomain],
) -> std::io::Result<()> {
    writeln!(w, "board,cycle,event_kind,channel,time_fs")?;
    for e in events {
        let t = time_clocks[e.board].nominal_edge(e.event.global_tick);
        writeln!(
            w,
            "{},{},{},{},{}",
            e.board,
            e.cycle,
            e.event.kind.as_str(),
            e.event.channel,
            t.fs()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timebase::{ClockTree, Frequency, PL_REFCLK, REFERENCE_HZ};
    use crate::tproc::{assemble, EventKind, Instruction, Reg, Src, TimeOperand};
    use proptest::prelude::*;

    fn refclk() -> ClockDomain {
        ClockDomain::derived(PL_REFCLK, Frequency::from_hz(REFERENCE_HZ), 16).unwrap()
    }

    fn filler_then_sync(n: usize, tail: &str) -> TProcProgram {
        let mut text = "ADD r1, r1, 1\n".repeat(n);
        text.push_str("SYNC\n");
        text.push_str(tail);
        text.push_str("\nEND\n");
        assemble(&text).unwrap()
    }

    fn run(programs: &[&TProcProgram], model: SyncModel, ff: bool) -> Result<CollectSink, LockstepError> {
        let clk = refclk();
        let cfg = LockstepConfig {
            fast_forward: ff,
            ..Default::default()
        };
        run_collect(programs, &vec![model; programs.len()], &clk, cfg).map(|(s, _)| s)
    }

    #[test]
    fn different_lengths_resume_together() {
        let a = filler_then_sync(37, "TRIG ch0, p0, @5");
        let b = filler_then_sync(81, "TRIG ch0, p0, @5");
        let sink = run(&[&a, &b], SyncModel::Modified, true).unwrap();
        assert_eq!(sink.resumes[0], sink.resumes[1]);
        // Board b is ready on cycle 81, so the flag is on 82 and the counter is zero on 83.
        assert_eq!(sink.resumes[0], vec![83]);
        let ticks: Vec<u64> = sink.events.iter().map(|e| e.event.global_tick).collect();
        assert_eq!(ticks, vec![3 * 83 + 5, 3 * 83 + 5]);
    }

    #[test]
    fn legacy_resume_disparity_matches_phase() {
        // Phases 0 and 2.
        let a = filler_then_sync(60, "");
        let b = filler_then_sync(62, "");
        let sink = run(&[&a, &b], SyncModel::Legacy, true).unwrap();
        assert_eq!(sink.resumes[1][0] - sink.resumes[0][0], 2);
        let clk = ClockTree::standard(1).boards[0].pl_refclk().clone();
        let dt = clk.nominal_edge(sink.resumes[1][0]) - clk.nominal_edge(sink.resumes[0][0]);
        assert_eq!(dt.fs(), 16_276_042);
    }

    #[test]
    fn per_shot_sync_count() {
        let p = assemble(
            "SET r1, 3\nshot: WAITT @400\nSYNC\nTRIG ch0, p0, @10\nLOOPNZ r1, shot\nEND",
        )
        .unwrap();
        let sink = run(&[&p, &p], SyncModel::Modified, true).unwrap();
        assert_eq!(sink.resumes[0].len(), 3);
        assert_eq!(sink.resumes[1].len(), 3);
        assert_eq!(sink.events.len(), 6);
    }

    #[test]
    fn missing_sync_is_a_timeout_naming_the_board() {
        let good = assemble("SET r1, 2\nshot: SYNC\nTRIG ch0, p0, @10\nLOOPNZ r1, shot\nEND").unwrap();
        let bad = assemble("SET r1, 2\nshot: TRIG ch0, p0, @10\nLOOPNZ r1, shot\nEND").unwrap();
        let err = run(&[&good, &bad], SyncModel::Modified, true).unwrap_err();
        match &err {
            LockstepError::SyncTimeout { waiting, stuck, .. } => {
                assert_eq!(waiting, &vec![0]);
                assert_eq!(stuck.len(), 1);
                assert_eq!(stuck[0].board, 1);
                assert!(stuck[0].halted);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("board 1"));
    }

    #[test]
    fn runaway_loop_hits_watchdog() {
        let p = assemble("l: JMP l").unwrap();
        let clk = refclk();
        let cfg = LockstepConfig {
            max_cycles: 1000,
            ..Default::default()
        };
        let err = run_collect(&[&p], &[SyncModel::Modified], &clk, cfg).unwrap_err();
        assert_eq!(err, LockstepError::Watchdog(1000));
    }

    #[test]
    fn mixed_sequence_schedule() {
        // Board A: flux on ch6, drive on ch0. Board B: flux on ch6, readout on ch0.
        let a = assemble(
            "SYNC\nTRIG ch6, p0, @10\nTRIG ch0, p1, @40\nTRIG ch6, p2, @70\nEND",
        )
        .unwrap();
        let b = assemble(
            "SET r1, 0\nSET r2, 0\nSYNC\nTRIG ch6, p0, @10\nTRIG ch6, p2, @70\nACQ ch0, p0, @100\nEND",
        )
        .unwrap();
        let sink = run(&[&a, &b], SyncModel::Modified, true).unwrap();
        let epoch = sink.resumes[0][0];
        assert_eq!(sink.resumes[1][0], epoch);
        let mut got: Vec<(u64, usize, EventKind, u16)> = sink
            .events
            .iter()
            .map(|e| (e.event.global_tick - 3 * epoch, e.board, e.event.kind, e.event.channel))
            .collect();
        got.sort();
        let expected = vec![
            (10, 0, EventKind::PulseStart, 6),
            (10, 1, EventKind::PulseStart, 6),
            (40, 0, EventKind::PulseStart, 0),
            (70, 0, EventKind::PulseStart, 6),
            (70, 1, EventKind::PulseStart, 6),
            (100, 1, EventKind::AcquireStart, 0),
        ];
        assert_eq!(got, expected);
        let tree = ClockTree::standard(2);
        let tc: Vec<&ClockDomain> = tree.boards.iter().map(|b| b.time_clock()).collect();
        let mut csv = Vec::new();
        write_trace_csv(&mut csv, &sink.events, &tc).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("board,cycle,event_kind,channel,time_fs\n"));
        assert_eq!(text.lines().count(), 7);
    }

    fn random_program(n_before: usize, body: Vec<(u16, u32)>, waits: bool) -> TProcProgram {
        let r = |i| Reg::new(i).unwrap();
        let mut ins = vec![Instruction::Add { rd: r(1), ra: r(1), src: Src::Imm(1) }; n_before];
        if waits {
            ins.push(Instruction::WaitT { time: TimeOperand::at(500) });
        }
        ins.push(Instruction::Sync);
        for (ch, t) in body {
            ins.push(Instruction::Trig { ch, entry: Src::Imm(0), time: TimeOperand::at(t + 100) });
        }
        ins.push(Instruction::End);
        TProcProgram::new(ins)
    }

    proptest! {
        #[test]
        fn post_sync_times_equal_for_equal_schedules(
            na in 0usize..120, nb in 0usize..120,
            times in prop::collection::vec(0u32..5000, 1..6),
        ) {
            let mut sorted = times.clone();
            sorted.sort();
            let body: Vec<(u16, u32)> = sorted.iter().map(|&t| (0, t)).collect();
            let a = random_program(na, body.clone(), na % 2 == 0);
            let b = random_program(nb, body, nb % 3 == 0);
            let sink = run(&[&a, &b], SyncModel::Modified, true).unwrap();
            let ta: Vec<u64> = sink.events.iter().filter(|e| e.board == 0).map(|e| e.event.global_tick).collect();
            let tb: Vec<u64> = sink.events.iter().filter(|e| e.board == 1).map(|e| e.event.global_tick).collect();
            prop_assert_eq!(ta, tb);
        }

        #[test]
        fn legacy_disparity_is_bounded(na in 1usize..120, nb in 1usize..120) {
            let a = random_program(na, vec![(0, 0)], false);
            let b = random_program(nb, vec![(0, 0)], false);
            let sink = run(&[&a, &b], SyncModel::Legacy, true).unwrap();
            let d = sink.resumes[0][0].abs_diff(sink.resumes[1][0]);
            prop_assert!(d <= 2);
        }

        #[test]
        fn fast_forward_is_transparent(
            na in 0usize..40, nb in 0usize..40, w in 0u32..3000, shots in 1i32..4,
        ) {
            let text = |n: usize| format!(
                "SET r1, {shots}\n{}shot: WAITT @{w}\nSYNC\nTRIG ch0, p0, @r2+7\nACQ ch1, p0, @r2+50\nWAITT @r2+900\nLOOPNZ r1, shot\nEND",
                "SET r3, 0\n".repeat(n)
            );
            let a = assemble(&text(na)).unwrap();
            let b = assemble(&text(nb)).unwrap();
            for model in [SyncModel::Modified, SyncModel::Legacy] {
                let slow = run(&[&a, &b], model, false).unwrap();
                let fast = run(&[&a, &b], model, true).unwrap();
                prop_assert_eq!(&slow.events, &fast.events);
                prop_assert_eq!(&slow.resumes, &fast.resumes);
            }
        }
    }
}
