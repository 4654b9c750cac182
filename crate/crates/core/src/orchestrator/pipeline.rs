// SPDX-License-Identifier: Apache-2.0
//! Two-stage pipeline over host-loop batches: batch `k + 1` is prepared
//! while batch `k` executes. The only shared structure is a bounded,
//! ordered hand-off queue, so results come back in submission order.

use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::thread;

use super::boardmap::BoardMap;
use super::compile::{CompileError, Compiler, Plan};
use super::execute::{execute, ExecError, SimContext};
use super::experiment::Experiment;
use super::result::{merge_batches, ResultSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StageError<A, B> {
    #[error("batch {batch}: {source}")]
    First { batch: usize, source: A },
    #[error("batch {batch}: {source}")]
    Second { batch: usize, source: B },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("batch {batch}: {source}")]
    CompileBatch { batch: usize, source: CompileError },
    #[error("batch {batch}: {source}")]
    Exec { batch: usize, source: ExecError },
}

impl From<StageError<CompileError, ExecError>> for RunError {
    fn from(e: StageError<CompileError, ExecError>) -> Self {
        match e {
            StageError::First { batch, source } => RunError::CompileBatch { batch, source },
            StageError::Second { batch, source } => RunError::Exec { batch, source },
        }
    }
}

/// Run `first` on a worker thread and `second` on the caller's, one item of
/// lookahead. Stops at the first error in submission order.
pub fn pipeline<I, M, O, EA, EB, FA, FB>(items: Vec<I>, first: FA, mut second: FB) -> Result<Vec<O>, StageError<EA, EB>>
where
    I: Send,
    M: Send,
    EA: Send,
    FA: Fn(I) -> Result<M, EA> + Send,
    FB: FnMut(M) -> Result<O, EB>,
{
    let (tx, rx) = sync_channel::<Result<M, EA>>(1);
    thread::scope(|s| {
        s.spawn(move || {
            for item in items {
                let r = first(item);
                let failed = r.is_err();
                if tx.send(r).is_err() || failed {
                    break;
                }
            }
        });
        let mut out = Vec::new();
        for (batch, r) in rx.into_iter().enumerate() {
            let m = r.map_err(|source| StageError::First { batch, source })?;
            out.push(second(m).map_err(|source| StageError::Second { batch, source })?);
        }
        Ok(out)
    })
}

/// Compile each host-loop batch ahead of executing the previous one.
pub fn execute_pipelined(compiler: &Compiler, ctx: &SimContext) -> Result<Vec<ResultSet>, RunError> {
    let n = compiler.plan().host_points;
    Ok(pipeline(
        (0..n).collect(),
        |h| compiler.batch(h),
        |bundle| execute(&bundle, ctx),
    )?)
}

/// The same batches one after another, for comparison.
pub fn execute_serial(compiler: &Compiler, ctx: &SimContext) -> Result<Vec<ResultSet>, RunError> {
    (0..compiler.plan().host_points)
        .map(|h| {
            let bundle = compiler.batch(h).map_err(|source| RunError::CompileBatch { batch: h, source })?;
            execute(&bundle, ctx).map_err(|source| RunError::Exec { batch: h, source })
        })
        .collect()
}

/// Compile, run every batch through the pipeline and merge.
pub fn run_experiment(exp: &Experiment, map: &BoardMap, ctx: &SimContext) -> Result<(Arc<Plan>, ResultSet), RunError> {
    let compiler = Compiler::new(exp, map, None)?;
    let parts = execute_pipelined(&compiler, ctx)?;
    let plan = compiler.plan().clone();
    let merged = merge_batches(&plan, &parts);
    Ok((plan, merged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::experiment::{Acquisition, PulseSpec, Shape, SweepParam, SweepSpec};
    use crate::qpu::QpuParams;
    use std::time::{Duration, Instant};

    #[test]
    fn order_and_errors() {
        let out: Result<Vec<_>, StageError<String, String>> =
            pipeline((0..20).collect(), |x: i32| Ok(x * 2), |y| Ok(y + 1));
        assert_eq!(out.unwrap(), (0..20).map(|x| x * 2 + 1).collect::<Vec<_>>());

        let out: Result<Vec<i32>, _> = pipeline(
            (0..5).collect(),
            |x: i32| if x == 3 { Err("bad") } else { Ok(x) },
            Ok::<_, &str>,
        );
        assert_eq!(out, Err(StageError::First { batch: 3, source: "bad" }));

        let out: Result<Vec<i32>, _> = pipeline(
            (0..5).collect(),
            |x: i32| Ok::<_, &str>(x),
            |y| if y == 2 { Err("late") } else { Ok(y) },
        );
        assert_eq!(out, Err(StageError::Second { batch: 2, source: "late" }));
    }

    #[test]
    fn overlap_matches_the_latency_formula() {
        let (d, e, n) = (Duration::from_millis(40), Duration::from_millis(60), 6u32);
        let t0 = Instant::now();
        let out: Result<Vec<_>, StageError<(), ()>> = pipeline(
            (0..n).collect(),
            |x| {
                thread::sleep(d);
                Ok(x)
            },
            |x| {
                thread::sleep(e);
                Ok(x)
            },
        );
        let took = t0.elapsed().as_secs_f64();
        assert_eq!(out.unwrap().len(), n as usize);
        let expect = (d + d.max(e) * (n - 1) + e).as_secs_f64();
        assert!((took - expect).abs() <= 0.2 * expect, "took {took}, expected {expect}");
    }

    #[test]
    fn pipelined_equals_serial() {
        let params = QpuParams::default_table();
        let map = BoardMap::ladder_default(&[]);
        let exp = Experiment {
            pulses: vec![PulseSpec {
                id: "ro".into(),
                channel: "q5.ro".into(),
                kind: None,
                shape: Shape::Square,
                start_ns: 0.0,
                duration_ns: 500.0,
                freq_hz: params.resonators[5].f_bare_hz,
                amp: 0.1,
                phase: 0.0,
            }],
            acquisitions: vec![Acquisition {
                channel: "q5.ro".into(),
                start_ns: 0.0,
                window_ns: 500.0,
            }],
            sweeps: vec![SweepSpec {
                parameter: SweepParam::DcBias,
                targets: vec!["q5.flux".into()],
                start: -0.5,
                stop: 0.5,
                step: 0.25,
                offset: false,
                mode: None,
            }],
            nshots: 3,
            relax_ns: 500.0,
            ..Experiment::default()
        };
        let ctx = SimContext::new(5, params);
        let compiler = Compiler::new(&exp, &map, None).unwrap();
        let a = execute_pipelined(&compiler, &ctx).unwrap();
        let b = execute_serial(&compiler, &ctx).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, b);
        let (_, merged) = run_experiment(&exp, &map, &ctx).unwrap();
        assert_eq!(merged.shape(), [5, 1, 3, 1]);
    }
}
