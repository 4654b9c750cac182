// SPDX-License-Identifier: Apache-2.0
//! Instruction set of the timing processor.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const NUM_REGS: usize = 32;
/// Time-clock ticks per core cycle.
pub const TICKS_PER_CYCLE: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reg(u8);

impl Reg {
    pub fn new(index: usize) -> Option<Reg> {
        (index < NUM_REGS).then_some(Reg(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Immediate or register source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Src {
    Imm(i32),
    Reg(Reg),
}

/// `reg + offset` in time-clock ticks, measured from the last counter reset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeOperand {
    pub reg: Option<Reg>,
    pub offset: u32,
}

impl TimeOperand {
    pub fn at(offset: u32) -> Self {
        TimeOperand { reg: None, offset }
    }

    pub fn reg_plus(reg: Reg, offset: u32) -> Self {
        TimeOperand {
            reg: Some(reg),
            offset,
        }
    }
}

impl fmt::Display for TimeOperand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.reg, self.offset) {
            (None, o) => write!(f, "@{o}"),
            (Some(r), 0) => write!(f, "@{r}"),
            (Some(r), o) => write!(f, "@{r}+{o}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    Set,
    Add,
    Jmp,
    Bnz,
    LoopNz,
    Trig,
    Acq,
    WaitT,
    Sync,
    End,
}

impl Opcode {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Set => "SET",
            Opcode::Add => "ADD",
            Opcode::Jmp => "JMP",
            Opcode::Bnz => "BNZ",
            Opcode::LoopNz => "LOOPNZ",
            Opcode::Trig => "TRIG",
            Opcode::Acq => "ACQ",
            Opcode::WaitT => "WAITT",
            Opcode::Sync => "SYNC",
            Opcode::End => "END",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Some(match s.to_ascii_uppercase().as_str() {
            "SET" => Opcode::Set,
            "ADD" => Opcode::Add,
            "JMP" => Opcode::Jmp,
            "BNZ" => Opcode::Bnz,
            "LOOPNZ" => Opcode::LoopNz,
            "TRIG" => Opcode::Trig,
            "ACQ" => Opcode::Acq,
            "WAITT" => Opcode::WaitT,
            "SYNC" => Opcode::Sync,
            "END" => Opcode::End,
            _ => return None,
        })
    }
}

/// Branch targets are resolved instruction indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    Set { rd: Reg, imm: i32 },
    /// `rd = ra + src`, wrapping.
    Add { rd: Reg, ra: Reg, src: Src },
    Jmp { target: usize },
    /// Branch when `rs != 0`.
    Bnz { rs: Reg, target: usize },
    /// Decrement `rs`, then branch when the result is non-zero.
    LoopNz { rs: Reg, target: usize },
    /// Start the pulse described by parameter entry `entry` on generator `ch`.
    Trig { ch: u16, entry: Src, time: TimeOperand },
    /// Open an acquisition window with readout entry `entry` on readout `ch`.
    Acq { ch: u16, entry: Src, time: TimeOperand },
    /// Stall until the time counter reaches `time`.
    WaitT { time: TimeOperand },
    Sync,
    End,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Set { .. } => Opcode::Set,
            Instruction::Add { .. } => Opcode::Add,
            Instruction::Jmp { .. } => Opcode::Jmp,
            Instruction::Bnz { .. } => Opcode::Bnz,
            Instruction::LoopNz { .. } => Opcode::LoopNz,
            Instruction::Trig { .. } => Opcode::Trig,
            Instruction::Acq { .. } => Opcode::Acq,
            Instruction::WaitT { .. } => Opcode::WaitT,
            Instruction::Sync => Opcode::Sync,
            Instruction::End => Opcode::End,
        }
    }

    pub fn branch_target(&self) -> Option<usize> {
        match *self {
            Instruction::Jmp { target }
            | Instruction::Bnz { target, .. }
            | Instruction::LoopNz { target, .. } => Some(target),
            _ => None,
        }
    }

    /// Control-flow successors of the instruction at `pc`.
    pub fn successors(&self, pc: usize) -> Vec<usize> {
        match *self {
            Instruction::Jmp { target } => vec![target],
            Instruction::Bnz { target, .. } | Instruction::LoopNz { target, .. } => {
                if target == pc + 1 {
                    vec![target]
                } else {
                    vec![pc + 1, target]
                }
            }
            Instruction::End => vec![],
            _ => vec![pc + 1],
        }
    }

    pub fn is_timed(&self) -> bool {
        matches!(self, Instruction::Trig { .. } | Instruction::Acq { .. })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TProcProgram {
    pub instructions: Vec<Instruction>,
}

impl TProcProgram {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        TProcProgram { instructions }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn count(&self, op: Opcode) -> usize {
        self.instructions.iter().filter(|i| i.opcode() == op).count()
    }
}
