// SPDX-License-Identifier: Apache-2.0
//! Text assembler and disassembler.
//!
//! ```text
//! ; comment (also `#`)
//! start:
//!     SET    r1, 5
//!     ADD    r2, r2, -1        ; or ADD r2, r2, r3
//!     TRIG   ch0, p3, @100     ; pulse entry 3 at tick 100
//!     TRIG   ch0, p[r4], @r5+16
//!     ACQ    ch0, p0, @r5
//!     WAITT  @400
//!     LOOPNZ r1, start
//!     BNZ    r2, start
//!     JMP    start
//!     SYNC
//!     END
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::isa::{Instruction, Opcode, Reg, Src, TProcProgram, TimeOperand, NUM_REGS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmErrorKind {
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("operand out of range: {0}")]
    OperandOutOfRange(String),
    #[error("{opcode} expects {expected} operand(s), got {got}")]
    OperandCount {
        opcode: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("syntax error: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

fn err(line: usize, kind: AsmErrorKind) -> AsmError {
    AsmError { line, kind }
}

struct Pending<'a> {
    line: usize,
    opcode: Opcode,
    operands: Vec<&'a str>,
}

pub fn assemble(text: &str) -> Result<TProcProgram, AsmError> {
    let mut labels: HashMap<&str, usize> = HashMap::new();
    let mut pending = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut line = raw.split([';', '#']).next().unwrap_or("").trim();
        while let Some(colon) = line.find(':') {
            let name = line[..colon].trim();
            if !is_ident(name) {
                return Err(err(line_no, AsmErrorKind::Syntax(format!("bad label `{name}`"))));
            }
            if labels.insert(name, pending.len()).is_some() {
                return Err(err(line_no, AsmErrorKind::DuplicateLabel(name.to_string())));
            }
            line = line[colon + 1..].trim();
        }
        if line.is_empty() {
            continue;
        }
        let (mnemonic, rest) = match line.find(char::is_whitespace) {
            Some(p) => (&line[..p], line[p..].trim()),
            None => (line, ""),
        };
        let opcode = Opcode::from_mnemonic(mnemonic)
            .ok_or_else(|| err(line_no, AsmErrorKind::UnknownOpcode(mnemonic.to_string())))?;
        let operands: Vec<&str> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',').map(str::trim).collect()
        };
        pending.push(Pending {
            line: line_no,
            opcode,
            operands,
        });
    }

    let instructions = pending
        .iter()
        .map(|p| build(p, &labels))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TProcProgram { instructions })
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn build(p: &Pending<'_>, labels: &HashMap<&str, usize>) -> Result<Instruction, AsmError> {
    let line = p.line;
    let expect = |n: usize| {
        if p.operands.len() == n {
            Ok(())
        } else {
            Err(err(
                line,
                AsmErrorKind::OperandCount {
                    opcode: p.opcode.mnemonic(),
                    expected: n,
                    got: p.operands.len(),
                },
            ))
        }
    };
    let ops = &p.operands;
    let label = |s: &str| {
        labels
            .get(s)
            .copied()
            .ok_or_else(|| err(line, AsmErrorKind::UndefinedLabel(s.to_string())))
    };
    Ok(match p.opcode {
        Opcode::Set => {
            expect(2)?;
            Instruction::Set {
                rd: parse_reg(ops[0], line)?,
                imm: parse_imm(ops[1], line)?,
            }
        }
        Opcode::Add => {
            expect(3)?;
            Instruction::Add {
                rd: parse_reg(ops[0], line)?,
                ra: parse_reg(ops[1], line)?,
                src: parse_src(ops[2], line)?,
            }
        }
        Opcode::Jmp => {
            expect(1)?;
            Instruction::Jmp {
                target: label(ops[0])?,
            }
        }
        Opcode::Bnz => {
            expect(2)?;
            Instruction::Bnz {
                rs: parse_reg(ops[0], line)?,
                target: label(ops[1])?,
            }
        }
        Opcode::LoopNz => {
            expect(2)?;
            Instruction::LoopNz {
                rs: parse_reg(ops[0], line)?,
                target: label(ops[1])?,
            }
        }
        Opcode::Trig | Opcode::Acq => {
            expect(3)?;
            let ch = parse_channel(ops[0], line)?;
            let entry = parse_entry(ops[1], line)?;
            let time = parse_time(ops[2], line)?;
            if p.opcode == Opcode::Trig {
                Instruction::Trig { ch, entry, time }
            } else {
                Instruction::Acq { ch, entry, time }
            }
        }
        Opcode::WaitT => {
            expect(1)?;
            Instruction::WaitT {
                time: parse_time(ops[0], line)?,
            }
        }
        Opcode::Sync => {
            expect(0)?;
            Instruction::Sync
        }
        Opcode::End => {
            expect(0)?;
            Instruction::End
        }
    })
}

fn parse_int(s: &str, line: usize) -> Result<i64, AsmError> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16)
    } else {
        body.parse::<i64>()
    }
    .map_err(|_| err(line, AsmErrorKind::Syntax(format!("expected integer, got `{s}`"))))?;
    Ok(if neg { -v } else { v })
}

fn parse_imm(s: &str, line: usize) -> Result<i32, AsmError> {
    let v = parse_int(s, line)?;
    i32::try_from(v)
        .map_err(|_| err(line, AsmErrorKind::OperandOutOfRange(format!("immediate {v} does not fit 32 bits"))))
}

fn parse_reg(s: &str, line: usize) -> Result<Reg, AsmError> {
    let idx = s
        .strip_prefix(['r', 'R'])
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| err(line, AsmErrorKind::Syntax(format!("expected register, got `{s}`"))))?;
    Reg::new(idx).ok_or_else(|| {
        err(
            line,
            AsmErrorKind::OperandOutOfRange(format!("register r{idx} (have {NUM_REGS})")),
        )
    })
}

fn parse_src(s: &str, line: usize) -> Result<Src, AsmError> {
    if s.starts_with(['r', 'R']) {
        Ok(Src::Reg(parse_reg(s, line)?))
    } else {
        Ok(Src::Imm(parse_imm(s, line)?))
    }
}

fn parse_channel(s: &str, line: usize) -> Result<u16, AsmError> {
    let n = s
        .strip_prefix("ch")
        .ok_or_else(|| err(line, AsmErrorKind::Syntax(format!("expected channel `chN`, got `{s}`"))))?;
    let v = parse_int(n, line)?;
    u16::try_from(v).map_err(|_| err(line, AsmErrorKind::OperandOutOfRange(format!("channel {v}"))))
}

fn parse_entry(s: &str, line: usize) -> Result<Src, AsmError> {
    let body = s
        .strip_prefix('p')
        .ok_or_else(|| err(line, AsmErrorKind::Syntax(format!("expected entry `pN` or `p[rN]`, got `{s}`"))))?;
    if let Some(inner) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
        return Ok(Src::Reg(parse_reg(inner.trim(), line)?));
    }
    let v = parse_int(body, line)?;
    if !(0..=i32::MAX as i64).contains(&v) {
        return Err(err(line, AsmErrorKind::OperandOutOfRange(format!("entry {v}"))));
    }
    Ok(Src::Imm(v as i32))
}

fn parse_time(s: &str, line: usize) -> Result<TimeOperand, AsmError> {
    let body = s
        .strip_prefix('@')
        .ok_or_else(|| err(line, AsmErrorKind::Syntax(format!("expected time `@...`, got `{s}`"))))?
        .trim();
    let offset = |t: &str| -> Result<u32, AsmError> {
        let v = parse_int(t, line)?;
        if !(0..=i32::MAX as i64).contains(&v) {
            return Err(err(
                line,
                AsmErrorKind::OperandOutOfRange(format!("time offset {v} must be in 0..=2^31-1")),
            ));
        }
        Ok(v as u32)
    };
    if body.starts_with(['r', 'R']) {
        let (reg, off) = match body.find('+') {
            Some(p) => (&body[..p], offset(&body[p + 1..])?),
            None => (body, 0),
        };
        Ok(TimeOperand::reg_plus(parse_reg(reg.trim(), line)?, off))
    } else {
        Ok(TimeOperand::at(offset(body)?))
    }
}

fn fmt_src(s: Src) -> String {
    match s {
        Src::Imm(v) => v.to_string(),
        Src::Reg(r) => r.to_string(),
    }
}

fn fmt_entry(s: Src) -> String {
    match s {
        Src::Imm(v) => format!("p{v}"),
        Src::Reg(r) => format!("p[{r}]"),
    }
}

/// Canonical listing; branch targets become `L<index>` labels.
pub fn disassemble(program: &TProcProgram) -> String {
    let targets: BTreeSet<usize> = program
        .instructions
        .iter()
        .filter_map(Instruction::branch_target)
        .collect();
    let mut out = String::new();
    let n = program.instructions.len();
    for (pc, ins) in program.instructions.iter().enumerate() {
        if targets.contains(&pc) {
            let _ = writeln!(out, "L{pc}:");
        }
        let mn = ins.opcode().mnemonic();
        let body = match *ins {
            Instruction::Set { rd, imm } => format!("{rd}, {imm}"),
            Instruction::Add { rd, ra, src } => format!("{rd}, {ra}, {}", fmt_src(src)),
            Instruction::Jmp { target } => format!("L{target}"),
            Instruction::Bnz { rs, target } | Instruction::LoopNz { rs, target } => {
                format!("{rs}, L{target}")
            }
            Instruction::Trig { ch, entry, time } | Instruction::Acq { ch, entry, time } => {
                format!("ch{ch}, {}, {time}", fmt_entry(entry))
            }
            Instruction::WaitT { time } => time.to_string(),
            Instruction::Sync | Instruction::End => String::new(),
        };
        if body.is_empty() {
            let _ = writeln!(out, "    {mn}");
        } else {
            let _ = writeln!(out, "    {mn:<6} {body}");
        }
    }
    // A branch may target one past the last instruction.
    if targets.contains(&n) {
        let _ = writeln!(out, "L{n}:");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_program() {
        let p = assemble("SET r1, 5\nEND").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(
            p.instructions[0],
            Instruction::Set {
                rd: Reg::new(1).unwrap(),
                imm: 5
            }
        );
        assert_eq!(p.instructions[1], Instruction::End);
    }

    #[test]
    fn undefined_label_is_named() {
        let e = assemble("SET r1, 1\nBNZ r1, nowhere\nEND").unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(e.kind, AsmErrorKind::UndefinedLabel("nowhere".into()));
        assert!(e.to_string().contains("nowhere"));
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(
            assemble("FOO r1").unwrap_err().kind,
            AsmErrorKind::UnknownOpcode(_)
        ));
        assert!(matches!(
            assemble("SET r32, 1").unwrap_err().kind,
            AsmErrorKind::OperandOutOfRange(_)
        ));
        assert!(matches!(
            assemble("TRIG ch0, p0, @-1").unwrap_err().kind,
            AsmErrorKind::OperandOutOfRange(_)
        ));
        assert!(matches!(
            assemble("SET r1, 4294967296").unwrap_err().kind,
            AsmErrorKind::OperandOutOfRange(_)
        ));
        assert!(matches!(
            assemble("a:\na:\nEND").unwrap_err().kind,
            AsmErrorKind::DuplicateLabel(_)
        ));
        assert!(matches!(
            assemble("SYNC r1").unwrap_err().kind,
            AsmErrorKind::OperandCount { .. }
        ));
    }

    #[test]
    fn operand_forms() {
        let p = assemble(
            "top: TRIG ch3, p[r4], @r5+16 ; inline label\n ACQ ch0, p2, @r7\n WAITT @0x10\n LOOPNZ r1, top\n END",
        )
        .unwrap();
        assert_eq!(
            p.instructions[0],
            Instruction::Trig {
                ch: 3,
                entry: Src::Reg(Reg::new(4).unwrap()),
                time: TimeOperand::reg_plus(Reg::new(5).unwrap(), 16)
            }
        );
        assert_eq!(
            p.instructions[2],
            Instruction::WaitT {
                time: TimeOperand::at(16)
            }
        );
        assert_eq!(
            p.instructions[3],
            Instruction::LoopNz {
                rs: Reg::new(1).unwrap(),
                target: 0
            }
        );
    }

    #[test]
    fn cz_sequence_round_trips() {
        let text = "
            SET r1, 3
        shot:
            WAITT @36900
            SYNC
            TRIG ch0, p0, @8
            TRIG ch6, p[r2], @24
            ACQ ch0, p1, @r3+40
            LOOPNZ r1, shot
            END";
        let p = assemble(text).unwrap();
        let again = assemble(&disassemble(&p)).unwrap();
        assert_eq!(p, again);
    }

    fn arb_reg() -> impl Strategy<Value = Reg> {
        (0usize..NUM_REGS).prop_map(|i| Reg::new(i).unwrap())
    }

    fn arb_src() -> impl Strategy<Value = Src> {
        prop_oneof![any::<i32>().prop_map(Src::Imm), arb_reg().prop_map(Src::Reg)]
    }

    fn arb_time() -> impl Strategy<Value = TimeOperand> {
        (proptest::option::of(arb_reg()), 0u32..=i32::MAX as u32)
            .prop_map(|(reg, offset)| TimeOperand { reg, offset })
    }

    fn arb_program() -> impl Strategy<Value = TProcProgram> {
        (1usize..40).prop_flat_map(|n| {
            let ins = prop_oneof![
                (arb_reg(), any::<i32>()).prop_map(|(rd, imm)| Instruction::Set { rd, imm }),
                (arb_reg(), arb_reg(), arb_src()).prop_map(|(rd, ra, src)| Instruction::Add { rd, ra, src }),
                (0..=n).prop_map(|target| Instruction::Jmp { target }),
                (arb_reg(), 0..=n).prop_map(|(rs, target)| Instruction::Bnz { rs, target }),
                (arb_reg(), 0..=n).prop_map(|(rs, target)| Instruction::LoopNz { rs, target }),
                (any::<u16>(), prop_oneof![(0..=i32::MAX).prop_map(Src::Imm), arb_reg().prop_map(Src::Reg)], arb_time())
                    .prop_map(|(ch, entry, time)| Instruction::Trig { ch, entry, time }),
                (any::<u16>(), (0..1000i32).prop_map(Src::Imm), arb_time())
                    .prop_map(|(ch, entry, time)| Instruction::Acq { ch, entry, time }),
                arb_time().prop_map(|time| Instruction::WaitT { time }),
                Just(Instruction::Sync),
                Just(Instruction::End),
            ];
            proptest::collection::vec(ins, n).prop_map(TProcProgram::new)
        })
    }

    proptest! {
        #[test]
        fn assemble_disassemble_round_trip(p in arb_program()) {
            let text = disassemble(&p);
            let back = assemble(&text).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
