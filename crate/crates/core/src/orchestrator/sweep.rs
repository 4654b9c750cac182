// SPDX-License-Identifier: Apache-2.0
//! Sweep axes and their sample-grid snapping.

use serde::{Deserialize, Serialize};

use super::experiment::{SweepMode, SweepParam, SweepSpec};

/// Slack for floating-point range endpoints.
const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub parameter: SweepParam,
    pub mode: SweepMode,
    pub targets: Vec<String>,
    pub offset: bool,
    /// Swept values in the parameter's unit; duration axes hold the snapped
    /// durations in ns.
    pub values: Vec<f64>,
    /// Duration axes only: length of each point in envelope samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<u64>>,
}

impl Axis {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("step must be positive and finite (got {0})")]
    BadStep(f64),
    #[error("stop {stop} is below start {start}")]
    Reversed { start: f64, stop: f64 },
    #[error("duration step {step_ns} ns is below one sample period ({sample_ns} ns)")]
    DurationStep { step_ns: f64, sample_ns: f64 },
    #[error("duration sweeps take absolute values")]
    DurationOffset,
    #[error("negative duration {0} ns")]
    NegativeDuration(f64),
}

fn check_range(spec: &SweepSpec) -> Result<(), SweepError> {
    if !(spec.step > 0.0 && spec.step.is_finite()) {
        return Err(SweepError::BadStep(spec.step));
    }
    if !(spec.stop >= spec.start) || !spec.start.is_finite() || !spec.stop.is_finite() {
        return Err(SweepError::Reversed {
            start: spec.start,
            stop: spec.stop,
        });
    }
    Ok(())
}

/// `floor((stop − start)/step) + 1` points at `start + k·step`.
pub fn linear_points(spec: &SweepSpec) -> Result<Vec<f64>, SweepError> {
    check_range(spec)?;
    let n = ((spec.stop - spec.start) / spec.step + EPS).floor() as usize + 1;
    Ok((0..n).map(|k| spec.start + k as f64 * spec.step).collect())
}

/// Duration grid on envelope samples of period `sample_ns`: the first point
/// is `ceil(start)`, the step is `round(step)` samples, and the count is
/// `floor((stop − start)/snapped_step) + 1`.
pub fn duration_points(spec: &SweepSpec, sample_ns: f64) -> Result<Vec<u64>, SweepError> {
    check_range(spec)?;
    if spec.offset {
        return Err(SweepError::DurationOffset);
    }
    if spec.start < 0.0 {
        return Err(SweepError::NegativeDuration(spec.start));
    }
    if spec.step < sample_ns * (1.0 - EPS) {
        return Err(SweepError::DurationStep {
            step_ns: spec.step,
            sample_ns,
        });
    }
    let first = (spec.start / sample_ns - EPS).ceil().max(0.0) as u64;
    let step = (spec.step / sample_ns).round().max(1.0) as u64;
    let n = ((spec.stop - spec.start) / (step as f64 * sample_ns) + EPS).floor() as u64 + 1;
    Ok((0..n).map(|k| first + k * step).collect())
}

pub fn build_axis(spec: &SweepSpec, envelope_ns: Option<f64>) -> Result<Axis, SweepError> {
    let (values, samples) = match (spec.parameter, envelope_ns) {
        (SweepParam::Duration, Some(t)) => {
            let s = duration_points(spec, t)?;
            (s.iter().map(|&n| n as f64 * t).collect(), Some(s))
        }
        _ => (linear_points(spec)?, None),
    };
    Ok(Axis {
        parameter: spec.parameter,
        mode: spec.mode(),
        targets: spec.targets.clone(),
        offset: spec.offset,
        values,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::default_dac_rate;

    fn spec(p: SweepParam, start: f64, stop: f64, step: f64) -> SweepSpec {
        SweepSpec {
            parameter: p,
            targets: vec!["x".into()],
            start,
            stop,
            step,
            offset: false,
            mode: None,
        }
    }

    #[test]
    fn duration_grid_snaps_to_samples() {
        let ts = 1e9 / default_dac_rate().to_f64();
        let s = duration_points(&spec(SweepParam::Duration, 10.0, 20.0, 0.17), ts).unwrap();
        assert_eq!(s.len(), 59);
        assert_eq!(s[0], 59);
        assert!(s.windows(2).all(|w| w[1] - w[0] == 1));
        // First point is the first sample multiple at or above 10 ns.
        assert!((s[0] as f64 * ts - 10.0030).abs() < 1e-4);
    }

    #[test]
    fn duration_step_below_one_sample_is_rejected() {
        let ts = 1e9 / default_dac_rate().to_f64();
        let e = duration_points(&spec(SweepParam::Duration, 10.0, 20.0, 0.1), ts).unwrap_err();
        assert!(matches!(e, SweepError::DurationStep { .. }));
    }

    #[test]
    fn linear_counts_include_endpoint() {
        let v = linear_points(&spec(SweepParam::DcBias, -2.0, 2.0, 0.05)).unwrap();
        assert_eq!(v.len(), 81);
        assert!((v[80] - 2.0).abs() < 1e-12);
        assert_eq!(linear_points(&spec(SweepParam::Phase, 1.0, 1.0, 0.5)).unwrap(), vec![1.0]);
        assert!(linear_points(&spec(SweepParam::Phase, 1.0, 0.0, 0.5)).is_err());
        assert!(linear_points(&spec(SweepParam::Phase, 0.0, 1.0, 0.0)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn duration_points_are_on_grid_and_in_range(
            start in 0.0f64..50.0, span in 0.0f64..50.0, k in 1u32..20,
        ) {
            let ts = 1e9 / default_dac_rate().to_f64();
            let step = k as f64 * ts * 1.0001;
            let s = duration_points(&spec(SweepParam::Duration, start, start + span, step), ts).unwrap();
            proptest::prop_assert!(s[0] as f64 * ts >= start - 1e-6);
            proptest::prop_assert!((s[0] as f64 - 1.0) * ts < start);
            for w in s.windows(2) {
                proptest::prop_assert_eq!(w[1] - w[0], k as u64);
            }
            proptest::prop_assert!((s.len() as f64 - 1.0) * k as f64 * ts <= span + 1e-6);
        }
    }
}
