// SPDX-License-Identifier: Apache-2.0
//! Declarative experiment description.

use serde::{Deserialize, Serialize};

/// Default relaxation before each barrier, in ns.
pub const DEFAULT_RELAX_NS: f64 = 100_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Drive,
    Flux,
    Readout,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Square,
    Gaussian { sigma_ns: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub id: String,
    pub channel: String,
    /// Checked against the channel when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ChannelKind>,
    pub shape: Shape,
    pub start_ns: f64,
    pub duration_ns: f64,
    /// Analog carrier; ignored on flux lines.
    #[serde(default)]
    pub freq_hz: f64,
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acquisition {
    pub channel: String,
    pub start_ns: f64,
    pub window_ns: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Frequency,
    Amplitude,
    Phase,
    StartTime,
    Duration,
    DcBias,
}

impl SweepParam {
    pub fn default_mode(self) -> SweepMode {
        match self {
            SweepParam::DcBias => SweepMode::HostLoop,
            _ => SweepMode::RealTime,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Frequency => "frequency",
            SweepParam::Amplitude => "amplitude",
            SweepParam::Phase => "phase",
            SweepParam::StartTime => "start_time",
            SweepParam::Duration => "duration",
            SweepParam::DcBias => "dc_bias",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    RealTime,
    HostLoop,
}

/// Units follow the parameter: Hz, gain, rad, ns, ns, V.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    /// Pulse ids, or flux channel names for `dc_bias`.
    pub targets: Vec<String>,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// Values are added to each target's nominal value.
    #[serde(default)]
    pub offset: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SweepMode>,
}

impl SweepSpec {
    pub fn mode(&self) -> SweepMode {
        self.mode.unwrap_or(self.parameter.default_mode())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SyncPolicy {
    Once,
    #[default]
    PerShot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Binned,
    Averaged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub pulses: Vec<PulseSpec>,
    pub acquisitions: Vec<Acquisition>,
    pub sweeps: Vec<SweepSpec>,
    pub nshots: usize,
    pub sync_policy: SyncPolicy,
    pub averaging: Averaging,
    pub relax_ns: f64,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            pulses: Vec::new(),
            acquisitions: Vec::new(),
            sweeps: Vec::new(),
            nshots: 1,
            sync_policy: SyncPolicy::PerShot,
            averaging: Averaging::Binned,
            relax_ns: DEFAULT_RELAX_NS,
        }
    }
}
