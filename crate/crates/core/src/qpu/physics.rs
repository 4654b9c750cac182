// SPDX-License-Identifier: Apache-2.0
//! Closed-form single-qubit, resonator and two-qubit responses.

use std::f64::consts::PI;

use super::{CouplingModel, QpuError, QubitModel, ResonatorModel};

/// Minimum |f_q − f_bare| in units of `g_rq` for the dispersive formula.
pub const DISPERSIVE_RATIO: f64 = 10.0;
pub const DEFAULT_DIP_DEPTH: f64 = 0.8;

/// `f_max·√|cos(π(V−V0)/V_period)|`.
pub fn qubit_freq(q: &QubitModel, v_flux: f64) -> f64 {
    let x = PI * (v_flux - q.v0) / q.v_period;
    q.f_max_hz * x.cos().abs().sqrt()
}

/// `|df/dV|` at `v_flux`.
pub fn qubit_slope(q: &QubitModel, v_flux: f64) -> f64 {
    let x = PI * (v_flux - q.v0) / q.v_period;
    let c = x.cos().abs();
    if c == 0.0 {
        return f64::INFINITY;
    }
    q.f_max_hz * x.sin().abs() * PI / (2.0 * q.v_period * c.sqrt())
}

/// Dispersively dressed resonator: level repulsion pushes the resonator away
/// from the qubit, `f_bare + g²/(f_bare − f_q)`.
pub fn dressed_resonator_freq(
    r: &ResonatorModel,
    q: &QubitModel,
    v_flux: f64,
) -> Result<f64, QpuError> {
    let fq = qubit_freq(q, v_flux);
    let detuning = fq - r.f_bare_hz;
    if q.g_rq_hz > 0.0 && detuning.abs() < DISPERSIVE_RATIO * q.g_rq_hz {
        return Err(QpuError::NearDegenerate {
            detuning_hz: detuning,
            g_hz: q.g_rq_hz,
        });
    }
    if q.g_rq_hz == 0.0 {
        return Ok(r.f_bare_hz);
    }
    Ok(r.f_bare_hz - q.g_rq_hz * q.g_rq_hz / detuning)
}

/// Lorentzian transmission dip.
pub fn s21_magnitude(f_probe: f64, f_res: f64, kappa: f64, depth: f64) -> f64 {
    let hw = kappa / 2.0;
    let d = f_probe - f_res;
    1.0 - depth * hw * hw / (d * d + hw * hw)
}

/// Probability of remaining in |11⟩ after an interaction of length `t` at
/// flux-pulse amplitude `amp`.
pub fn chevron_p11(t: f64, amp: f64, c: &CouplingModel) -> f64 {
    1.0 - chevron_transfer(t, amp - c.a_res_v, c)
}

pub(crate) fn chevron_transfer(t: f64, dv: f64, c: &CouplingModel) -> f64 {
    let g2 = 4.0 * c.g_qq_hz * c.g_qq_hz;
    let delta = c.eta_hz_per_v * dv;
    let omega2 = g2 + delta * delta;
    g2 / omega2 * (PI * omega2.sqrt() * t).sin().powi(2)
}

/// Population moved |0⟩→|1⟩ by a drive of rotation `theta` (radians at zero
/// detuning) spread over `duration`, detuned by `detuning` Hz.
pub fn rabi_transfer(theta: f64, duration: f64, detuning: f64) -> f64 {
    if duration <= 0.0 {
        return 0.0;
    }
    let omega = theta / (2.0 * PI * duration);
    let w2 = omega * omega + detuning * detuning;
    if w2 == 0.0 {
        return 0.0;
    }
    omega * omega / w2 * (PI * w2.sqrt() * duration).sin().powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qpu::QpuParams;
    use proptest::prelude::*;

    fn qubit(f_max: f64, v0: f64, vp: f64) -> QubitModel {
        QubitModel {
            f_max_hz: f_max,
            anharmonicity_hz: -200e6,
            v0,
            v_period: vp,
            g_rq_hz: 50e6,
            pi_area: 1e-8,
        }
    }

    fn res(f: f64) -> ResonatorModel {
        ResonatorModel {
            f_bare_hz: f,
            kappa_hz: 1e6,
            feedline: 1,
        }
    }

    fn coupling() -> CouplingModel {
        CouplingModel {
            pair: (2, 7),
            g_qq_hz: 10e6,
            eta_hz_per_v: 2e9,
            a_res_v: 0.3,
        }
    }

    #[test]
    fn qubit_freq_examples() {
        let q = qubit(4.8e9, 0.13, 1.7);
        assert_eq!(qubit_freq(&q, 0.13), 4.8e9);
        assert!((qubit_freq(&q, 0.13 + 1.7) - 4.8e9).abs() < 1e-3);
        let v = qubit_freq(&q, 0.13 + 1.7 / 6.0) / 4.8e9;
        assert!((v - 0.930605).abs() < 1e-6, "{v}");
    }

    #[test]
    fn dressed_shift_example() {
        let q = qubit(4.8e9, 0.0, 2.0);
        let f = dressed_resonator_freq(&res(7.5e9), &q, 0.0).unwrap();
        // g²/|Δ| = (50 MHz)² / 2.7 GHz.
        assert!((f - 7.5e9 - 925_925.925_9).abs() < 1e-3, "{}", f - 7.5e9);
        let bare = QubitModel { g_rq_hz: 0.0, ..q };
        assert_eq!(dressed_resonator_freq(&res(7.5e9), &bare, 0.0).unwrap(), 7.5e9);
        let close = qubit(7.2e9, 0.0, 2.0);
        assert!(matches!(
            dressed_resonator_freq(&res(7.5e9), &close, 0.0),
            Err(QpuError::NearDegenerate { .. })
        ));
    }

    #[test]
    fn dressed_argmax_is_sweet_spot() {
        let p = QpuParams::default_table();
        for (q, r) in p.qubits.iter().zip(&p.resonators) {
            let grid: Vec<f64> = (-600..=600).map(|k| q.v0 + k as f64 * 1e-3).collect();
            let best = grid
                .iter()
                .copied()
                .max_by(|a, b| {
                    let fa = dressed_resonator_freq(r, q, *a).unwrap();
                    let fb = dressed_resonator_freq(r, q, *b).unwrap();
                    fa.total_cmp(&fb)
                })
                .unwrap();
            assert!((best - q.v0).abs() < 1e-9, "{} vs {}", best, q.v0);
        }
    }

    #[test]
    fn s21_examples() {
        assert!((s21_magnitude(7.5e9, 7.5e9, 1e6, 0.8) - 0.2).abs() < 1e-12);
        assert!((s21_magnitude(7.5e9 + 0.5e6, 7.5e9, 1e6, 0.8) - 0.6).abs() < 1e-12);
        assert!(s21_magnitude(7.6e9, 7.5e9, 1e6, 0.8) > 0.9999);
    }

    #[test]
    fn chevron_examples() {
        let c = coupling();
        assert!(chevron_p11(1.0 / (4.0 * c.g_qq_hz), c.a_res_v, &c).abs() < 1e-12);
        assert_eq!(chevron_p11(0.0, 0.31, &c), 1.0);
        // Δ = 2g√3 bounds the transfer by 1/4.
        let dv = 2.0 * c.g_qq_hz * 3f64.sqrt() / c.eta_hz_per_v;
        let worst = (0..2000)
            .map(|k| 1.0 - chevron_p11(k as f64 * 1e-10, c.a_res_v + dv, &c))
            .fold(0.0, f64::max);
        assert!(worst <= 0.25 + 1e-12 && worst > 0.2499, "{worst}");
    }

    #[test]
    fn on_resonance_period_and_first_minimum() {
        let c = coupling();
        // Population period 1/(2g) = 50 ns; minimum at 25 ns on a 0.1 ns grid.
        let ts: Vec<f64> = (0..600).map(|k| k as f64 * 1e-10).collect();
        let p: Vec<f64> = ts.iter().map(|&t| chevron_p11(t, c.a_res_v, &c)).collect();
        let first_min = (1..p.len() - 1).find(|&i| p[i] <= p[i - 1] && p[i] < p[i + 1]).unwrap();
        assert!((ts[first_min] - 25e-9).abs() <= 1e-10);
        assert!((chevron_p11(50e-9, c.a_res_v, &c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rabi_pi_rotation() {
        assert!((rabi_transfer(PI, 40e-9, 0.0) - 1.0).abs() < 1e-12);
        assert!((rabi_transfer(PI / 2.0, 40e-9, 0.0) - 0.5).abs() < 1e-12);
        assert!(rabi_transfer(PI, 40e-9, 300e6) < 0.01);
        assert_eq!(rabi_transfer(PI, 0.0, 0.0), 0.0);
    }

    proptest! {
        #[test]
        fn qubit_freq_periodic(v0 in -0.4f64..0.4, vp in 1.0f64..3.0, v in -3.0f64..3.0, k in -3i32..3) {
            let q = qubit(4.2e9, v0, vp);
            let a = qubit_freq(&q, v);
            let b = qubit_freq(&q, v + k as f64 * vp);
            prop_assert!((a - b).abs() < 1e3, "{} vs {}", a, b);
            prop_assert!(a <= 4.2e9);
        }

        #[test]
        fn chevron_symmetric(t in 0.0f64..100e-9, d in 0.0f64..0.1) {
            let c = coupling();
            let a = chevron_p11(t, c.a_res_v + d, &c);
            let b = chevron_p11(t, c.a_res_v - d, &c);
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn s21_in_unit_interval(fp in 7.0e9f64..8.0e9, fr in 7.0e9f64..8.0e9, k in 1e5f64..1e7) {
            let s = s21_magnitude(fp, fr, k, DEFAULT_DIP_DEPTH);
            prop_assert!((0.2 - 1e-12..=1.0).contains(&s));
        }
    }
}
