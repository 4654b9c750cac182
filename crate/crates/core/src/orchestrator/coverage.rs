// SPDX-License-Identifier: Apache-2.0
//! Static check that barriers guard every timed instruction.
//!
//! With SYNC nodes removed from the control-flow graph, no TRIG/ACQ may be
//! reachable from the entry (both policies), and under per-shot sync none
//! may lie on a SYNC-free cycle.

use super::experiment::SyncPolicy;
use crate::tproc::{Instruction, TProcProgram};

/// `Err(pc)` names the first unguarded timed instruction.
pub fn check_sync_coverage(program: &TProcProgram, policy: SyncPolicy) -> Result<(), usize> {
    let ins = &program.instructions;
    let n = ins.len();
    let succ = |pc: usize| -> Vec<usize> {
        ins[pc].successors(pc).into_iter().filter(|&s| s < n).collect()
    };
    let is_sync = |pc: usize| matches!(ins[pc], Instruction::Sync);

    // Reachable from `from` without passing through a SYNC (`from` itself
    // excluded unless revisited).
    let sync_free_reach = |from: usize, include_start: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = Vec::new();
        if include_start {
            if n > 0 && !is_sync(from) {
                seen[from] = true;
                stack.push(from);
            }
        } else {
            for s in succ(from) {
                if !is_sync(s) && !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        while let Some(pc) = stack.pop() {
            for s in succ(pc) {
                if !is_sync(s) && !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        seen
    };

    if n == 0 {
        return Ok(());
    }
    let from_entry = sync_free_reach(0, true);
    if let Some(pc) = (0..n).find(|&pc| from_entry[pc] && ins[pc].is_timed()) {
        return Err(pc);
    }
    if policy == SyncPolicy::PerShot {
        for pc in (0..n).filter(|&pc| ins[pc].is_timed()) {
            if sync_free_reach(pc, false)[pc] {
                return Err(pc);
            }
        }
    }
    Ok(())
}
