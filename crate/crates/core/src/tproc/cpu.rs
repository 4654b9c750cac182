// SPDX-License-Identifier: Apache-2.0
//! Cycle-accurate core.
//!
//! One call to [`step`] is one `pl_refclk` cycle. Every instruction costs one
//! cycle; WAITT and SYNC may additionally stall. The time counter runs at
//! three ticks per core cycle and is reset when a SYNC releases, so the first
//! instruction after a barrier sees `time_counter == 0`.

use serde::{Deserialize, Serialize};

use super::isa::{Instruction, Src, TProcProgram, TimeOperand, NUM_REGS, TICKS_PER_CYCLE};
use crate::syncbus::PinState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SyncModel {
    /// Flag sampled directly; every board resumes on the flag edge plus one.
    #[default]
    Modified,
    /// Original core: the polling branch flushes the pipeline, so the flag is
    /// seen 0, 1 or 2 cycles late depending on the SYNC's position.
    Legacy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    PulseStart,
    AcquireStart,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PulseStart => "pulse_start",
            EventKind::AcquireStart => "acquire_start",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimedEvent {
    pub kind: EventKind,
    pub channel: u16,
    pub entry: u32,
    /// Ticks since the last counter reset.
    pub tick: u64,
    /// Ticks since the simulation epoch; `3 * epoch_cycle + tick`.
    pub global_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TProcError {
    #[error("schedule violation at pc {pc}, cycle {cycle}: event at tick {tick} but counter is already {time_counter}")]
    ScheduleViolation {
        pc: usize,
        cycle: u64,
        tick: u64,
        time_counter: u64,
    },
    #[error("negative time operand at pc {pc}")]
    NegativeTime { pc: usize },
    #[error("negative entry index at pc {pc}")]
    NegativeEntry { pc: usize },
    #[error("pc {pc} is outside the program")]
    PcOutOfRange { pc: usize },
    #[error("core is halted")]
    Halted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CycleStats {
    pub instructions: u64,
    pub stall_cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TProcState {
    pub pc: usize,
    pub regs: [i32; NUM_REGS],
    pub time_counter: u64,
    pub core_cycle: u64,
    /// Cycle at which the time counter last read zero.
    pub epoch_cycle: u64,
    pub fetch_en: bool,
    pub ready_pin: PinState,
    pub halted: bool,
    /// Remaining flush cycles of the legacy core after it latched the flag.
    pub legacy_flush: Option<u8>,
    pub stats: CycleStats,
}

impl Default for TProcState {
    fn default() -> Self {
        TProcState {
            pc: 0,
            regs: [0; NUM_REGS],
            time_counter: 0,
            core_cycle: 0,
            epoch_cycle: 0,
            fetch_en: true,
            ready_pin: PinState::DrivenLow,
            halted: false,
            legacy_flush: None,
            stats: CycleStats::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Executed,
    /// WAITT not yet satisfied.
    Stalled,
    /// SYNC fetched this cycle; ready pin released.
    SyncFetched,
    /// Waiting for the release flag (or flushing, in the legacy model).
    SyncWait,
    /// The barrier released on this cycle; the next cycle executes the
    /// instruction after SYNC with the counter at zero.
    Resumed,
    Halted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub kind: StepKind,
    pub event: Option<TimedEvent>,
}

impl TProcState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn waiting_sync(&self) -> bool {
        !self.fetch_en && !self.halted
    }

    /// Cycle at which a WAITT at the current pc will execute, if the core is
    /// stalled on one.
    pub fn waitt_wake_cycle(&self, program: &TProcProgram) -> Option<u64> {
        if self.halted || !self.fetch_en {
            return None;
        }
        match program.instructions.get(self.pc) {
            Some(Instruction::WaitT { time }) => {
                let target = self.resolve_time(*time).ok()?;
                if target <= self.time_counter {
                    None
                } else {
                    let cycles = (target - self.time_counter).div_ceil(TICKS_PER_CYCLE);
                    Some(self.core_cycle + cycles)
                }
            }
            _ => None,
        }
    }

    /// Advance `n` cycles during which the core only stalls (WAITT or SYNC
    /// wait). The caller guarantees nothing observable happens meanwhile.
    pub fn skip_cycles(&mut self, n: u64) {
        self.core_cycle += n;
        self.time_counter += TICKS_PER_CYCLE * n;
        self.stats.stall_cycles += n;
    }

    fn resolve_time(&self, t: TimeOperand) -> Result<u64, TProcError> {
        let base = t.reg.map_or(0i64, |r| self.regs[r.index()] as i64);
        let v = base + t.offset as i64;
        if v < 0 {
            Err(TProcError::NegativeTime { pc: self.pc })
        } else {
            Ok(v as u64)
        }
    }

    fn read(&self, s: Src) -> i32 {
        match s {
            Src::Imm(v) => v,
            Src::Reg(r) => self.regs[r.index()],
        }
    }

    fn tick_clock(&mut self) {
        self.core_cycle += 1;
        self.time_counter += TICKS_PER_CYCLE;
    }

    fn resume(&mut self) {
        self.fetch_en = true;
        self.ready_pin = PinState::DrivenLow;
        self.legacy_flush = None;
        self.pc += 1;
        self.core_cycle += 1;
        self.epoch_cycle = self.core_cycle;
        self.time_counter = 0;
        self.stats.stall_cycles += 1;
    }
}

/// Flush phase of the legacy core for a SYNC at `sync_pc`.
pub fn legacy_flush_phase(sync_pc: usize) -> u8 {
    (sync_pc % 3) as u8
}

/// One cycle of the modified core.
pub fn step(
    state: &mut TProcState,
    program: &TProcProgram,
    ext_flag: bool,
) -> Result<StepOutcome, TProcError> {
    step_with(SyncModel::Modified, state, program, ext_flag)
}

/// One cycle of the legacy core.
pub fn step_legacy(
    state: &mut TProcState,
    program: &TProcProgram,
    ext_flag: bool,
) -> Result<StepOutcome, TProcError> {
    step_with(SyncModel::Legacy, state, program, ext_flag)
}

pub fn step_with(
    model: SyncModel,
    state: &mut TProcState,
    program: &TProcProgram,
    ext_flag: bool,
) -> Result<StepOutcome, TProcError> {
    if state.halted {
        return Err(TProcError::Halted);
    }
    let quiet = |kind| Ok(StepOutcome { kind, event: None });

    if !state.fetch_en {
        match model {
            SyncModel::Modified => {
                if ext_flag {
                    state.resume();
                    return quiet(StepKind::Resumed);
                }
            }
            SyncModel::Legacy => {
                let flush = match state.legacy_flush {
                    Some(n) => Some(n - 1),
                    None if ext_flag => Some(legacy_flush_phase(state.pc)),
                    None => None,
                };
                match flush {
                    Some(0) => {
                        state.resume();
                        return quiet(StepKind::Resumed);
                    }
                    other => state.legacy_flush = other,
                }
            }
        }
        state.tick_clock();
        state.stats.stall_cycles += 1;
        return quiet(StepKind::SyncWait);
    }

    let pc = state.pc;
    let ins = *program
        .instructions
        .get(pc)
        .ok_or(TProcError::PcOutOfRange { pc })?;
    let mut event = None;
    let mut next_pc = pc + 1;
    let mut kind = StepKind::Executed;
    match ins {
        Instruction::Set { rd, imm } => state.regs[rd.index()] = imm,
        Instruction::Add { rd, ra, src } => {
            state.regs[rd.index()] = state.regs[ra.index()].wrapping_add(state.read(src));
        }
        Instruction::Jmp { target } => next_pc = target,
        Instruction::Bnz { rs, target } => {
            if state.regs[rs.index()] != 0 {
                next_pc = target;
            }
        }
        Instruction::LoopNz { rs, target } => {
            let r = &mut state.regs[rs.index()];
            *r = r.wrapping_sub(1);
            if *r != 0 {
                next_pc = target;
            }
        }
        Instruction::Trig { ch, entry, time } | Instruction::Acq { ch, entry, time } => {
            let tick = state.resolve_time(time)?;
            if tick < state.time_counter {
                return Err(TProcError::ScheduleViolation {
                    pc,
                    cycle: state.core_cycle,
                    tick,
                    time_counter: state.time_counter,
                });
            }
            let entry = state.read(entry);
            if entry < 0 {
                return Err(TProcError::NegativeEntry { pc });
            }
            let ev_kind = if matches!(ins, Instruction::Trig { .. }) {
                EventKind::PulseStart
            } else {
                EventKind::AcquireStart
            };
            event = Some(TimedEvent {
                kind: ev_kind,
                channel: ch,
                entry: entry as u32,
                tick,
                global_tick: TICKS_PER_CYCLE * state.epoch_cycle + tick,
            });
        }
        Instruction::WaitT { time } => {
            let target = state.resolve_time(time)?;
            if state.time_counter < target {
                state.tick_clock();
                state.stats.stall_cycles += 1;
                return quiet(StepKind::Stalled);
            }
        }
        Instruction::Sync => {
            state.fetch_en = false;
            state.ready_pin = PinState::Released;
            kind = StepKind::SyncFetched;
            // pc stays on the SYNC until release.
            next_pc = pc;
        }
        Instruction::End => {
            state.halted = true;
            kind = StepKind::Halted;
            next_pc = pc;
        }
    }
    state.pc = next_pc;
    state.stats.instructions += 1;
    state.tick_clock();
    Ok(StepOutcome { kind, event })
}
