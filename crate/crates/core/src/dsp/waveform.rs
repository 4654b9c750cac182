// SPDX-License-Identifier: Apache-2.0
//! Sampled envelopes and their file formats.

use std::io::{BufRead, Read, Write};

use num_rational::Ratio;

use super::DspError;
use crate::timebase::Frequency;

pub const RAW_MAGIC: &[u8; 4] = b"QWAV";
pub const RAW_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: Frequency,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: Frequency) -> Result<Self, DspError> {
        if samples.is_empty() {
            return Err(DspError::EmptyWaveform);
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.abs() <= 1.0))
        {
            return Err(DspError::SampleOutOfRange { index, value });
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn constant(value: f64, len: usize, sample_rate: Frequency) -> Result<Self, DspError> {
        Waveform::new(vec![value; len], sample_rate)
    }

    /// Unit-peak Gaussian of `len` samples centred in the record, `sigma` in samples.
    pub fn gaussian(len: usize, sigma: f64, sample_rate: Frequency) -> Result<Self, DspError> {
        let mid = (len as f64 - 1.0) / 2.0;
        let s = (0..len)
            .map(|i| (-0.5 * ((i as f64 - mid) / sigma).powi(2)).exp())
            .collect();
        Waveform::new(s, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> Frequency {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Prepend `pad` zero samples.
    pub fn padded_front(&self, pad: usize) -> Waveform {
        let mut s = vec![0.0; pad];
        s.extend_from_slice(&self.samples);
        Waveform {
            samples: s,
            sample_rate: self.sample_rate,
        }
    }

    /// Linear interpolation at fractional sample position `x`, zero outside the record.
    pub fn value_at(&self, x: f64) -> f64 {
        if !(x >= 0.0) {
            return 0.0;
        }
        let i = x.floor() as usize;
        let n = self.samples.len();
        if i + 1 < n {
            let f = x - i as f64;
            self.samples[i] + (self.samples[i + 1] - self.samples[i]) * f
        } else if i + 1 == n && x <= i as f64 + 1.0 {
            self.samples[i]
        } else {
            0.0
        }
    }
}

/// `index,value` rows with a header line.
pub fn write_csv<W: Write>(mut w: W, wf: &Waveform) -> std::io::Result<()> {
    writeln!(w, "index,value")?;
    for (i, v) in wf.samples.iter().enumerate() {
        writeln!(w, "{i},{v}")?;
    }
    Ok(())
}

/// The CSV format carries no rate, so the caller supplies it.
pub fn read_csv<R: BufRead>(r: R, sample_rate: Frequency) -> Result<Waveform, DspError> {
    let mut samples = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| DspError::Format(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("index")) {
            continue;
        }
        let (idx, val) = line
            .split_once(',')
            .ok_or_else(|| DspError::Format(format!("line {}: expected index,value", n + 1)))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| DspError::Format(format!("line {}: bad index", n + 1)))?;
        if idx != samples.len() {
            return Err(DspError::Format(format!("line {}: index {idx} out of order", n + 1)));
        }
        let val: f64 = val
            .trim()
            .parse()
            .map_err(|_| DspError::Format(format!("line {}: bad value", n + 1)))?;
        samples.push(val);
    }
    Waveform::new(samples, sample_rate)
}

/// Header: magic, u32 version, u64 rate numerator, u64 rate denominator,
/// u64 length; then `length` little-endian f32 samples.
pub fn write_raw<W: Write>(mut w: W, wf: &Waveform) -> Result<(), DspError> {
    let rate = wf.sample_rate.ratio();
    let num = u64::try_from(*rate.numer()).map_err(|_| DspError::Format("rate too large".into()))?;
    let den = u64::try_from(*rate.denom()).map_err(|_| DspError::Format("rate too large".into()))?;
    let io = |e: std::io::Error| DspError::Format(e.to_string());
    w.write_all(RAW_MAGIC).map_err(io)?;
    w.write_all(&RAW_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&num.to_le_bytes()).map_err(io)?;
    w.write_all(&den.to_le_bytes()).map_err(io)?;
    w.write_all(&(wf.len() as u64).to_le_bytes()).map_err(io)?;
    for &v in &wf.samples {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

pub fn read_raw<R: Read>(mut r: R) -> Result<Waveform, DspError> {
    let io = |e: std::io::Error| DspError::Format(e.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != RAW_MAGIC {
        return Err(DspError::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(io)?;
    let version = u32::from_le_bytes(b4);
    if version != RAW_VERSION {
        return Err(DspError::Format(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    let mut next = |r: &mut R| -> Result<u64, DspError> {
        r.read_exact(&mut b8).map_err(io)?;
        Ok(u64::from_le_bytes(b8))
    };
    let num = next(&mut r)?;
    let den = next(&mut r)?;
    let len = next(&mut r)? as usize;
    if den == 0 {
        return Err(DspError::Format("zero rate denominator".into()));
    }
    let mut bytes = vec![0u8; len.checked_mul(4).ok_or_else(|| DspError::Format("length overflow".into()))?];
    r.read_exact(&mut bytes).map_err(io)?;
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let rate = Ratio::new(num as u128, den as u128);
    let rate = Frequency::from_ratio(*rate.numer(), *rate.denom())
        .map_err(|e| DspError::Format(e.to_string()))?;
    Waveform::new(samples, rate)
}
