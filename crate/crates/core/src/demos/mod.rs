// SPDX-License-Identifier: Apache-2.0
//! Demo experiments behind the CLI commands.

pub mod chevron;
pub mod res_flux;
pub mod stats;
pub mod sync_bench;

pub use chevron::{cz_chevron, ChevronConfig, ChevronError, ChevronReport};
pub use res_flux::{res_flux, ResFluxConfig, ResFluxError, ResFluxReport};
pub use stats::{percentile, Range, RangeError, SkewSummary};
pub use sync_bench::{sync_bench, LengthMode, SyncBenchConfig, SyncBenchError, SyncBenchReport, SyncRep};
