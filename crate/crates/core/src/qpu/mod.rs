// SPDX-License-Identifier: Apache-2.0
//! Mock physics of a 10-qubit flux-tunable transmon ladder.
//!
//! Two rows of five qubits. Row 0 (q0–q4) is read out on feedline 1, row 1
//! (q5–q9) on feedline 2. Maximum qubit frequencies alternate in a
//! checkerboard so every ladder edge joins a ~4.8 GHz and a ~4.2 GHz qubit.

mod physics;
mod readout;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use physics::{
    chevron_p11, dressed_resonator_freq, qubit_freq, qubit_slope, rabi_transfer, s21_magnitude,
    DEFAULT_DIP_DEPTH, DISPERSIVE_RATIO,
};
pub use readout::{
    expected_response, simulate_readout, simulate_shot, ControlRecord, DrivePulse, FluxPulse,
    QubitPopulation, ReadoutTone,
};

use crate::rng::{stream, tag};

pub const ROWS: usize = 2;
pub const COLS: usize = 5;
pub const N_QUBITS: usize = ROWS * COLS;
pub const MAX_TONES_PER_FEEDLINE: usize = 8;
/// Seed of the built-in parameter table.
pub const DEFAULT_TABLE_SEED: u64 = 20_240_601;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitModel {
    pub f_max_hz: f64,
    /// Negative for a transmon.
    pub anharmonicity_hz: f64,
    /// Sweet-spot flux bias.
    pub v0: f64,
    pub v_period: f64,
    pub g_rq_hz: f64,
    /// Drive amplitude × seconds of envelope that yields a π rotation.
    pub pi_area: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorModel {
    pub f_bare_hz: f64,
    pub kappa_hz: f64,
    /// 1 or 2.
    pub feedline: u8,
}

/// `pair.0` is the flux-pulsed high-frequency qubit that visits |2⟩.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingModel {
    pub pair: (usize, usize),
    pub g_qq_hz: f64,
    pub eta_hz_per_v: f64,
    pub a_res_v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutParams {
    #[serde(default = "default_depth")]
    pub dip_depth: f64,
    /// Resonator pull per qubit excitation; state 2 pulls twice as far.
    #[serde(default = "default_chi")]
    pub chi_hz: f64,
    /// Per-shot Gaussian noise, per IQ component.
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
}

fn default_depth() -> f64 {
    DEFAULT_DIP_DEPTH
}
fn default_chi() -> f64 {
    -0.5e6
}
fn default_noise() -> f64 {
    0.002
}

impl Default for ReadoutParams {
    fn default() -> Self {
        ReadoutParams {
            dip_depth: default_depth(),
            chi_hz: default_chi(),
            noise_sigma: default_noise(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpuError {
    #[error("qubit within {DISPERSIVE_RATIO} g of its resonator (detuning {detuning_hz} Hz, g {g_hz} Hz)")]
    NearDegenerate { detuning_hz: f64, g_hz: f64 },
    #[error("{count} readout tones on feedline {feedline}; at most {MAX_TONES_PER_FEEDLINE}")]
    TooManyTones { feedline: u8, count: usize },
    #[error("qubit index {0} out of range")]
    UnknownQubit(usize),
    #[error("invalid parameter `{path}`: {reason}")]
    Invalid { path: String, reason: String },
    #[error("parameter file: {0}")]
    Parse(String),
}

/// Ladder connectivity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QpuTopology;

impl QpuTopology {
    pub fn position(q: usize) -> (usize, usize) {
        (q / COLS, q % COLS)
    }

    pub fn feedline(q: usize) -> u8 {
        (q / COLS) as u8 + 1
    }

    /// Along each row and across each rung.
    pub fn edges() -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for row in 0..ROWS {
            for col in 0..COLS - 1 {
                e.push((row * COLS + col, row * COLS + col + 1));
            }
        }
        for col in 0..COLS {
            e.push((col, col + COLS));
        }
        e
    }

    pub fn adjacent(a: usize, b: usize) -> bool {
        let (lo, hi) = (a.min(b), a.max(b));
        Self::edges().contains(&(lo, hi))
    }

    pub fn high_frequency(q: usize) -> bool {
        let (r, c) = Self::position(q);
        (r + c) % 2 == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpuParams {
    pub qubits: Vec<QubitModel>,
    pub resonators: Vec<ResonatorModel>,
    pub couplings: Vec<CouplingModel>,
    /// `v_q = Σ_j M[q][j]·V_j`; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crosstalk: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub readout: ReadoutParams,
}

impl QpuParams {
    /// Built-in table from [`DEFAULT_TABLE_SEED`].
    pub fn default_table() -> Self {
        Self::seeded_table(DEFAULT_TABLE_SEED)
    }

    /// f_max 4.8/4.2 GHz checkerboard, resonators 7.40–7.60 GHz in 50 MHz
    /// steps per feedline, κ = 1 MHz, g_rq = 50 MHz, g_qq = 10 MHz. V0 is
    /// uniform in [−0.4, 0.4] V on a 10 mV grid and V_period is a multiple of
    /// 50 mV in [1.0, 3.0] V.
    pub fn seeded_table(seed: u64) -> Self {
        let mut rng = stream(seed, &[tag::QPU_TABLE]);
        let qubits: Vec<QubitModel> = (0..N_QUBITS)
            .map(|q| {
                let v0 = rng.random_range(-40i32..=40) as f64 / 100.0;
                let v_period = rng.random_range(20u32..=60) as f64 * 0.05;
                QubitModel {
                    f_max_hz: if QpuTopology::high_frequency(q) { 4.8e9 } else { 4.2e9 },
                    anharmonicity_hz: -200e6,
                    v0,
                    v_period,
                    g_rq_hz: 50e6,
                    // A 40 ns Gaussian with sigma 10 ns at amplitude 0.5.
                    pi_area: 0.5 * 10e-9 * (2.0 * std::f64::consts::PI).sqrt(),
                }
            })
            .collect();
        let resonators = (0..N_QUBITS)
            .map(|q| ResonatorModel {
                f_bare_hz: 7.40e9 + (q % COLS) as f64 * 50e6,
                kappa_hz: 1e6,
                feedline: QpuTopology::feedline(q),
            })
            .collect();
        let couplings = QpuTopology::edges()
            .into_iter()
            .map(|(a, b)| {
                let (h, l) = if qubits[a].f_max_hz >= qubits[b].f_max_hz { (a, b) } else { (b, a) };
                derive_coupling(&qubits, h, l, 10e6)
            })
            .collect();
        QpuParams {
            qubits,
            resonators,
            couplings,
            crosstalk: None,
            readout: ReadoutParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, QpuError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let p: QpuParams = serde_path_to_error::deserialize(de)
            .map_err(|e| QpuError::Parse(format!("{} at `{}`", e.inner(), e.path())))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }

    pub fn validate(&self) -> Result<(), QpuError> {
        let bad = |path: String, reason: &str| {
            Err(QpuError::Invalid {
                path,
                reason: reason.into(),
            })
        };
        if self.qubits.len() != N_QUBITS {
            return bad("qubits".into(), "expected 10 qubits");
        }
        if self.resonators.len() != N_QUBITS {
            return bad("resonators".into(), "expected one resonator per qubit");
        }
        for (i, q) in self.qubits.iter().enumerate() {
            if !(q.f_max_hz > 0.0) {
                return bad(format!("qubits[{i}].f_max_hz"), "must be positive");
            }
            if !(q.v_period > 0.0) {
                return bad(format!("qubits[{i}].v_period"), "must be positive");
            }
            if !(q.g_rq_hz >= 0.0) {
                return bad(format!("qubits[{i}].g_rq_hz"), "must be non-negative");
            }
            if !(q.pi_area > 0.0) {
                return bad(format!("qubits[{i}].pi_area"), "must be positive");
            }
        }
        for (i, r) in self.resonators.iter().enumerate() {
            if !(r.kappa_hz > 0.0) {
                return bad(format!("resonators[{i}].kappa_hz"), "must be positive");
            }
            if r.feedline != QpuTopology::feedline(i) {
                return bad(format!("resonators[{i}].feedline"), "does not match the ladder row");
            }
        }
        for (i, c) in self.couplings.iter().enumerate() {
            if !QpuTopology::adjacent(c.pair.0, c.pair.1) {
                return bad(format!("couplings[{i}].pair"), "not a ladder edge");
            }
            if !(c.g_qq_hz > 0.0) {
                return bad(format!("couplings[{i}].g_qq_hz"), "must be positive");
            }
        }
        if let Some(m) = &self.crosstalk {
            if m.len() != N_QUBITS || m.iter().any(|row| row.len() != N_QUBITS) {
                return bad("crosstalk".into(), "must be 10 × 10");
            }
        }
        if !(self.readout.noise_sigma >= 0.0) {
            return bad("readout.noise_sigma".into(), "must be non-negative");
        }
        Ok(())
    }

    pub fn coupling(&self, high: usize, low: usize) -> Option<&CouplingModel> {
        self.couplings.iter().find(|c| c.pair == (high, low))
    }

    /// Effective flux seen by each qubit given per-line voltages.
    pub fn flux_at_qubits(&self, line_volts: &[f64]) -> Vec<f64> {
        match &self.crosstalk {
            None => line_volts.to_vec(),
            Some(m) => m
                .iter()
                .map(|row| row.iter().zip(line_volts).map(|(a, v)| a * v).sum())
                .collect(),
        }
    }

    pub fn sweet_spots(&self) -> Vec<f64> {
        self.qubits.iter().map(|q| q.v0).collect()
    }
}

/// |1_H 1_L⟩ meets |2_H 0_L⟩ when `f_H = f_L − α_H`. The flux-pulse
/// amplitude (relative to the sweet spot) that tunes H there, and the local
/// slope of the detuning.
pub fn derive_coupling(qubits: &[QubitModel], high: usize, low: usize, g_qq_hz: f64) -> CouplingModel {
    let h = &qubits[high];
    let target = qubits[low].f_max_hz - h.anharmonicity_hz;
    let ratio = (target / h.f_max_hz).powi(2).min(1.0);
    let a_res = h.v_period / std::f64::consts::PI * ratio.acos();
    CouplingModel {
        pair: (high, low),
        g_qq_hz,
        eta_hz_per_v: qubit_slope(h, h.v0 + a_res),
        a_res_v: a_res,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_shape() {
        let e = QpuTopology::edges();
        assert_eq!(e.len(), 13);
        assert!(QpuTopology::adjacent(2, 7));
        assert!(QpuTopology::adjacent(3, 2));
        assert!(!QpuTopology::adjacent(4, 5));
        for (a, b) in e {
            assert_ne!(QpuTopology::high_frequency(a), QpuTopology::high_frequency(b));
        }
        assert!(QpuTopology::high_frequency(2));
        assert!(!QpuTopology::high_frequency(7));
        assert_eq!(QpuTopology::feedline(4), 1);
        assert_eq!(QpuTopology::feedline(5), 2);
    }

    #[test]
    fn default_table_ranges() {
        let p = QpuParams::default_table();
        p.validate().unwrap();
        assert_eq!(p, QpuParams::seeded_table(DEFAULT_TABLE_SEED));
        for q in &p.qubits {
            assert!((-0.4..=0.4).contains(&q.v0));
            assert!((1.0..=3.0 + 1e-12).contains(&q.v_period));
            let steps = q.v_period / 0.05;
            assert!((steps - steps.round()).abs() < 1e-9);
        }
        let f: Vec<f64> = p.resonators[..5].iter().map(|r| r.f_bare_hz).collect();
        assert_eq!(f, vec![7.40e9, 7.45e9, 7.50e9, 7.55e9, 7.60e9]);
        assert_eq!(p.couplings.len(), 13);
        assert!(p.coupling(2, 7).is_some());
    }

    #[test]
    fn derived_coupling_hits_resonance() {
        let p = QpuParams::default_table();
        let c = p.coupling(2, 7).unwrap();
        let h = &p.qubits[2];
        let f = qubit_freq(h, h.v0 + c.a_res_v);
        assert!((f - 4.4e9).abs() < 1.0, "{f}");
        // A_res ≈ 0.1824 V_period.
        assert!((c.a_res_v / h.v_period - 0.1824).abs() < 1e-3);
        let numeric = (qubit_freq(h, h.v0 + c.a_res_v - 1e-6) - qubit_freq(h, h.v0 + c.a_res_v + 1e-6)) / 2e-6;
        assert!((numeric - c.eta_hz_per_v).abs() < 1e-4 * c.eta_hz_per_v);
    }

    #[test]
    fn json_round_trip_and_errors() {
        let p = QpuParams::default_table();
        let back = QpuParams::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let err = QpuParams::from_json(r#"{"qubits": [], "resonators": [], "couplings": [], "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let mut bad = p.clone();
        bad.couplings[0].pair = (0, 9);
        assert!(matches!(bad.validate(), Err(QpuError::Invalid { path, .. }) if path == "couplings[0].pair"));
        let mut neg = p;
        neg.qubits[3].v_period = -1.0;
        assert!(matches!(neg.validate(), Err(QpuError::Invalid { path, .. }) if path == "qubits[3].v_period"));
    }

    #[test]
    fn crosstalk_mixes_lines() {
        let mut p = QpuParams::default_table();
        let mut m = vec![vec![0.0; 10]; 10];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m[0][1] = 0.1;
        p.crosstalk = Some(m);
        let v = p.flux_at_qubits(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[1], 1.0);
    }
}
