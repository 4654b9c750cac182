// SPDX-License-Identifier: Apache-2.0
//! Result arrays `[axis1][axis2][shot][channel]` and their file formats.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::compile::Plan;
use super::experiment::{Averaging, SweepParam};

pub const RESULT_RAW_MAGIC: &[u8; 4] = b"QRES";
pub const RESULT_RAW_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultAxis {
    pub parameter: SweepParam,
    pub targets: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultSet {
    /// At most two; a missing axis has length 1 in [`ResultSet::shape`].
    pub axes: Vec<ResultAxis>,
    pub channels: Vec<String>,
    pub averaging: Averaging,
    /// Shots per point in the experiment.
    pub nshots: usize,
    pub data: Vec<Complex64>,
}

/// Provenance written next to a result CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_sha256: String,
    pub version: String,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    seed: u64,
    config_sha256: &'a str,
    version: &'a str,
    averaging: Averaging,
    nshots: usize,
    shape: [usize; 4],
    axes: &'a [ResultAxis],
    channels: &'a [String],
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ResultSet {
    /// An all-zero result laid out for `axes` and `channels`.
    pub fn zeros(axes: Vec<ResultAxis>, channels: Vec<String>, averaging: Averaging, nshots: usize) -> Self {
        let mut r = ResultSet {
            axes,
            channels,
            averaging,
            nshots,
            data: Vec::new(),
        };
        let [a, b, s, c] = r.shape();
        r.data = vec![Complex64::new(0.0, 0.0); a * b * s * c];
        r
    }

    /// `[axis1, axis2, shots, channels]`; averaged results keep one shot.
    pub fn shape(&self) -> [usize; 4] {
        let len = |a: usize| self.axes.get(a).map_or(1, |x| x.values.len());
        let shots = match self.averaging {
            Averaging::Binned => self.nshots,
            Averaging::Averaged => 1,
        };
        [len(0), len(1), shots, self.channels.len()]
    }

    pub fn index(&self, i1: usize, i2: usize, shot: usize, ch: usize) -> usize {
        let [_, b, s, c] = self.shape();
        ((i1 * b + i2) * s + shot) * c + ch
    }

    pub fn get(&self, i1: usize, i2: usize, shot: usize, ch: usize) -> Complex64 {
        self.data[self.index(i1, i2, shot, ch)]
    }

    /// Mean over the stored shots.
    pub fn mean(&self, i1: usize, i2: usize, ch: usize) -> Complex64 {
        let s = self.shape()[2];
        let sum: Complex64 = (0..s).map(|k| self.get(i1, i2, k, ch)).sum();
        sum / s as f64
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// `axis1,axis2,shot,channel,i,q` with axis indices and shortest
    /// round-trip floats.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "axis1,axis2,shot,channel,i,q")?;
        let [a, b, s, c] = self.shape();
        for i1 in 0..a {
            for i2 in 0..b {
                for k in 0..s {
                    for ch in 0..c {
                        let v = self.get(i1, i2, k, ch);
                        writeln!(w, "{i1},{i2},{k},{},{},{}", self.channels[ch], v.re, v.im)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Binary dump: magic, version, the four shape dimensions as `u64`, then
    /// `i, q` pairs as little-endian `f64` in [`ResultSet::index`] order.
    pub fn write_raw<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(RESULT_RAW_MAGIC)?;
        w.write_all(&RESULT_RAW_VERSION.to_le_bytes())?;
        for d in self.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_sidecar<W: Write>(&self, w: W, meta: &RunMeta) -> io::Result<()> {
        let car = Sidecar {
            seed: meta.seed,
            config_sha256: &meta.config_sha256,
            version: &meta.version,
            averaging: self.averaging,
            nshots: self.nshots,
            shape: self.shape(),
            axes: &self.axes,
            channels: &self.channels,
        };
        serde_json::to_writer_pretty(w, &car).map_err(io::Error::other)
    }
}

/// Axes of batch `host`: real-time axes in full, host axes reduced to the
/// batch's value.
pub fn batch_axes(plan: &Plan, host: usize) -> Vec<ResultAxis> {
    let idx = plan.axis_indices(host, 0);
    plan.axes
        .iter()
        .enumerate()
        .map(|(a, axis)| ResultAxis {
            parameter: axis.parameter,
            targets: axis.targets.clone(),
            values: if plan.host_axes.contains(&a) {
                vec![axis.values[idx[a]]]
            } else {
                axis.values.clone()
            },
        })
        .collect()
}

/// Stitch per-batch results (in host order) into the full array.
pub fn merge_batches(plan: &Plan, parts: &[ResultSet]) -> ResultSet {
    let axes: Vec<ResultAxis> = plan
        .axes
        .iter()
        .map(|a| ResultAxis {
            parameter: a.parameter,
            targets: a.targets.clone(),
            values: a.values.clone(),
        })
        .collect();
    let Some(first) = parts.first() else {
        return ResultSet::zeros(axes, Vec::new(), plan.averaging, plan.nshots);
    };
    let mut out = ResultSet::zeros(axes, first.channels.clone(), first.averaging, first.nshots);
    for (h, part) in parts.iter().enumerate() {
        let idx = plan.axis_indices(h, 0);
        let [a, b, s, c] = part.shape();
        let place = |axis: usize, i: usize| if plan.host_axes.contains(&axis) { idx[axis] } else { i };
        for i1 in 0..a {
            for i2 in 0..b {
                for k in 0..s {
                    for ch in 0..c {
                        let dst = out.index(place(0, i1), place(1, i2), k, ch);
                        out.data[dst] = part.get(i1, i2, k, ch);
                    }
                }
            }
        }
    }
    out
}
