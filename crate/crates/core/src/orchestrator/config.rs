// SPDX-License-Identifier: Apache-2.0
//! JSON experiment files.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "nshots": 100,
//!   "sync_policy": "per_shot",
//!   "averaging": "averaged",
//!   "relax_ns": 2000,
//!   "boards": [{ "name": "A" }, { "name": "B", "skew_ps": 0, "jitter_ps": 0 }],
//!   "channels": [
//!     { "name": "q0.drive", "board": "A", "kind": "drive", "generator": 0, "qubit": 0 },
//!     { "name": "q0.ro", "board": "A", "kind": "readout", "generator": 12, "slot": 0, "qubit": 0 }
//!   ],
//!   "pulses": [
//!     { "id": "x0", "channel": "q0.drive", "shape": { "gaussian": { "sigma_ns": 10 } },
//!       "start_ns": 0, "duration_ns": 40, "freq_hz": 4.8e9, "amp": 0.5 }
//!   ],
//!   "sweeps": [
//!     { "parameter": "amplitude", "targets": ["x0"], "start": 0, "stop": 1, "step": 0.1 }
//!   ],
//!   "acquire": [{ "channel": "q0.ro", "start_ns": 60, "window_ns": 1000 }],
//!   "qpu": "default"
//! }
//! ```
//!
//! `qpu` is `"default"`, `{"seeded": N}`, `{"file": "path.json"}` (relative
//! to the config file) or `{"params": {...}}` inline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::boardmap::{BoardMap, BoardSpec, ChannelSpec};
use super::experiment::{
    Acquisition, Averaging, Experiment, PulseSpec, SweepSpec, SyncPolicy, DEFAULT_RELAX_NS,
};
use crate::qpu::{QpuError, QpuParams};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum QpuSource {
    #[default]
    Default,
    Seeded(u64),
    File(PathBuf),
    Params(Box<QpuParams>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub nshots: usize,
    #[serde(default)]
    pub sync_policy: SyncPolicy,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default = "default_relax")]
    pub relax_ns: f64,
    pub boards: Vec<BoardSpec>,
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub pulses: Vec<PulseSpec>,
    #[serde(default)]
    pub sweeps: Vec<SweepSpec>,
    #[serde(default)]
    pub acquire: Vec<Acquisition>,
    #[serde(default)]
    pub qpu: QpuSource,
}

fn one() -> usize {
    1
}

fn default_relax() -> f64 {
    DEFAULT_RELAX_NS
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("`{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("qpu parameters: {0}")]
    Qpu(#[from] QpuError),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            pulses: self.pulses.clone(),
            acquisitions: self.acquire.clone(),
            sweeps: self.sweeps.clone(),
            nshots: self.nshots,
            sync_policy: self.sync_policy,
            averaging: self.averaging,
            relax_ns: self.relax_ns,
        }
    }

    pub fn board_map(&self) -> BoardMap {
        BoardMap {
            boards: self.boards.clone(),
            channels: self.channels.clone(),
        }
    }

    /// `base` resolves relative `file` sources.
    pub fn qpu_params(&self, base: &Path) -> Result<QpuParams, ConfigError> {
        let params = match &self.qpu {
            QpuSource::Default => QpuParams::default_table(),
            QpuSource::Seeded(s) => QpuParams::seeded_table(*s),
            QpuSource::Params(p) => (**p).clone(),
            QpuSource::File(f) => {
                let path = base.join(f);
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path, source })?;
                QpuParams::from_json(&text)?
            }
        };
        params.validate()?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"{
        "boards": [{"name": "A"}],
        "channels": [{"name": "q0.ro", "board": "A", "kind": "readout", "generator": 12, "slot": 0, "qubit": 0}],
        "acquire": [{"channel": "q0.ro", "start_ns": 0, "window_ns": 100}]
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ExperimentConfig::from_json(MIN).unwrap();
        assert_eq!(c.nshots, 1);
        assert_eq!(c.relax_ns, DEFAULT_RELAX_NS);
        assert_eq!(c.qpu, QpuSource::Default);
        assert!(c.board_map().validate().is_ok());
        assert_eq!(c.experiment().acquisitions.len(), 1);
    }

    #[test]
    fn errors_carry_paths() {
        let e = ExperimentConfig::from_json(r#"{"channels": []}"#).unwrap_err();
        assert!(e.to_string().contains("boards"), "{e}");

        let bad = MIN.replace(r#""slot": 0"#, r#""slot": 0, "colour": 1"#);
        match ExperimentConfig::from_json(&bad).unwrap_err() {
            ConfigError::Schema { path, message } => {
                assert_eq!(path, "channels[0].colour");
                assert!(message.contains("colour"));
            }
            e => panic!("{e}"),
        }

        let bad = MIN.replace(r#""kind": "readout""#, r#""kind": "bogus""#);
        match ExperimentConfig::from_json(&bad).unwrap_err() {
            ConfigError::Schema { path, .. } => assert_eq!(path, "channels[0].kind"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn qpu_sources() {
        let c = ExperimentConfig::from_json(&MIN.replace("\"acquire\"", "\"qpu\": {\"seeded\": 3}, \"acquire\"")).unwrap();
        assert_eq!(c.qpu_params(Path::new(".")).unwrap(), QpuParams::seeded_table(3));

        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("q.json"), QpuParams::default_table().to_json()).unwrap();
        let c = ExperimentConfig::from_json(&MIN.replace("\"acquire\"", "\"qpu\": {\"file\": \"q.json\"}, \"acquire\"")).unwrap();
        assert_eq!(c.qpu_params(dir.path()).unwrap(), QpuParams::default_table());
    }
}
