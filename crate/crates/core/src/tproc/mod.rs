// SPDX-License-Identifier: Apache-2.0
//! Timing processor: instruction set, assembler and cycle-accurate core.

mod asm;
mod cpu;
mod isa;

pub use asm::{assemble, disassemble, AsmError, AsmErrorKind};
pub use cpu::{
    legacy_flush_phase, step, step_legacy, step_with, CycleStats, EventKind, StepKind, StepOutcome,
    SyncModel, TProcError, TProcState, TimedEvent,
};
pub use isa::{Instruction, Opcode, Reg, Src, TProcProgram, TimeOperand, NUM_REGS, TICKS_PER_CYCLE};
