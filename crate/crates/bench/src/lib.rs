// SPDX-License-Identifier: Apache-2.0
//! Fixtures shared by the benchmarks.

use rfsync_core::orchestrator::{Acquisition, BoardMap, Experiment, PulseSpec, Shape, SweepParam, SweepSpec};
use rfsync_core::qpu::{dressed_resonator_freq, QpuParams};

/// Readout on all ten qubits with an `n`-point frequency sweep, split over
/// the default two boards.
pub fn readout_sweep(params: &QpuParams, n: usize, nshots: usize) -> (Experiment, BoardMap) {
    let mut exp = Experiment {
        nshots,
        relax_ns: 2000.0,
        ..Experiment::default()
    };
    for (q, (r, qb)) in params.resonators.iter().zip(&params.qubits).enumerate() {
        exp.pulses.push(PulseSpec {
            id: format!("ro{q}"),
            channel: format!("q{q}.ro"),
            kind: None,
            shape: Shape::Square,
            start_ns: 0.0,
            duration_ns: 1000.0,
            freq_hz: dressed_resonator_freq(r, qb, 0.0).expect("dispersive"),
            amp: 0.1,
            phase: 0.0,
        });
        exp.acquisitions.push(Acquisition {
            channel: format!("q{q}.ro"),
            start_ns: 0.0,
            window_ns: 1000.0,
        });
    }
    exp.sweeps.push(SweepSpec {
        parameter: SweepParam::Frequency,
        targets: (0..params.resonators.len()).map(|q| format!("ro{q}")).collect(),
        start: -1e6,
        stop: -1e6 + 10e3 * (n as f64 - 1.0),
        step: 10e3,
        offset: true,
        mode: None,
    });
    (exp, BoardMap::ladder_default(&[]))
}
