// SPDX-License-Identifier: Apache-2.0
//! Small numeric helpers shared by the demos.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Nearest-rank percentile of sorted data, `p` in `[0, 100]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64 - 1e-9).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewSummary {
    pub count: usize,
    pub max_fs: f64,
    pub rms_fs: f64,
    pub p50_fs: f64,
    pub p99_fs: f64,
    pub p999_fs: f64,
}

impl SkewSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let mut sorted: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        sorted.sort_by(f64::total_cmp);
        let rms = if sorted.is_empty() {
            0.0
        } else {
            (sorted.iter().map(|v| v * v).sum::<f64>() / sorted.len() as f64).sqrt()
        };
        SkewSummary {
            count: sorted.len(),
            max_fs: sorted.last().copied().unwrap_or(0.0),
            rms_fs: rms,
            p50_fs: percentile(&sorted, 50.0),
            p99_fs: percentile(&sorted, 99.0),
            p999_fs: percentile(&sorted, 99.9),
        }
    }
}

/// Inclusive `start:stop:step` range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RangeError {
    #[error("expected START:STOP:STEP or a single value, got `{0}`")]
    Syntax(String),
    #[error("range {0}: step must be positive and stop >= start")]
    Empty(String),
}

impl Range {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self, RangeError> {
        let r = Range { start, stop, step };
        let ok = start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start;
        if ok {
            Ok(r)
        } else {
            Err(RangeError::Empty(r.to_string()))
        }
    }

    pub fn single(v: f64) -> Self {
        Range {
            start: v,
            stop: v,
            step: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

impl FromStr for Range {
    type Err = RangeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| RangeError::Syntax(s.into()));
        match parts.as_slice() {
            [v] => Ok(Range::single(num(v)?)),
            [a, b, c] => Range::new(num(a)?, num(b)?, num(c)?),
            _ => Err(RangeError::Syntax(s.into())),
        }
    }
}
