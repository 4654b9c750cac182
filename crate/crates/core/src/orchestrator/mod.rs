// SPDX-License-Identifier: Apache-2.0
//! Experiment description, compilation onto boards, and execution.

pub mod boardmap;
pub mod compile;
pub mod config;
pub mod coverage;
pub mod execute;
pub mod experiment;
pub mod pipeline;
pub mod result;
pub mod sweep;

pub use boardmap::{BoardMap, BoardSpec, ChannelSpec, MapError};
pub use compile::{compile, compile_single_board, CompileError, CompiledBundle, CompiledExperiment, Compiler, Plan};
pub use experiment::{
    Acquisition, Averaging, ChannelKind, Experiment, PulseSpec, Shape, SweepMode, SweepParam, SweepSpec, SyncPolicy,
};
pub use sweep::{Axis, SweepError};
pub use execute::{aggregate, execute, run_boards, trace, BoardAcquisitions, ExecError, SimContext};
pub use result::{merge_batches, sha256_hex, ResultAxis, ResultSet, RunMeta, RESULT_RAW_MAGIC, RESULT_RAW_VERSION};
pub use pipeline::{execute_pipelined, execute_serial, pipeline, run_experiment, RunError, StageError};
pub use config::{ConfigError, ExperimentConfig, QpuSource};
