// SPDX-License-Identifier: Apache-2.0
//! Clock tree model: shared low-frequency reference, per-board conditioner
//! outputs and the fabric/converter domains derived from them.
//!
//! Frequencies are exact rationals and time is integer femtoseconds. Periods
//! are never stored rounded; an edge time is computed exactly as
//! `tick / f` and rounded once, at emission.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub};

use num_rational::Ratio;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const FS_PER_SECOND: i64 = 1_000_000_000_000_000;

/// Reference distributed to every board by the shared clock generator.
pub const REFERENCE_HZ: u64 = 7_680_000;

pub const DAC_REF: &str = "dac_ref";
pub const ADC_REF: &str = "adc_ref";
pub const FPGA_CLK: &str = "fpga";
pub const SYSREF: &str = "sysref";
pub const PL_REFCLK: &str = "pl_refclk";
pub const AXI_ACLK: &str = "axi_aclk";
pub const AXIS_ACLK: &str = "axis_aclk";
pub const TIME_CLOCK: &str = "time_clock";
pub const DAC_SAMPLE: &str = "dac_sample";
pub const ADC_SAMPLE: &str = "adc_sample";

/// (name, multiplier over the reference) for the standard board tree.
pub const STANDARD_DOMAINS: [(&str, u64); 10] = [
    (DAC_REF, 32),
    (ADC_REF, 32),
    (FPGA_CLK, 16),
    (SYSREF, 1),
    (PL_REFCLK, 16),
    (AXI_ACLK, 16),
    (AXIS_ACLK, 48),
    (TIME_CLOCK, 48),
    (DAC_SAMPLE, 768),
    (ADC_SAMPLE, 320),
];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TimebaseError {
    #[error("frequency denominator must be non-zero")]
    ZeroDenominator,
    #[error("clock domain `{0}` must have a positive frequency")]
    NonPositive(String),
    #[error("multiplier must be at least 1")]
    ZeroMultiplier,
}

/// Exact non-negative frequency in hertz.
///
/// Zero is representable so that DC carriers and alias results can share the
/// type; clock domains reject it on construction.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frequency(Ratio<u128>);

impl Frequency {
    pub const ZERO: Frequency = Frequency(Ratio::new_raw(0, 1));

    pub fn from_hz(hz: u64) -> Self {
        Frequency(Ratio::from_integer(hz as u128))
    }

    pub fn from_ratio(num: u128, den: u128) -> Result<Self, TimebaseError> {
        if den == 0 {
            return Err(TimebaseError::ZeroDenominator);
        }
        Ok(Frequency(Ratio::new(num, den)))
    }

    /// Parse a decimal number of hertz (e.g. `"5898240000"` or `"127.2e6"`)
    /// exactly. Only finite decimal expansions are accepted.
    pub fn from_decimal_hz(text: &str) -> Option<Self> {
        let text = text.trim();
        let (mantissa, exp) = match text.find(['e', 'E']) {
            Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
            None => (text, 0),
        };
        let (int_part, frac_part) = match mantissa.find('.') {
            Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        let digits: String = format!("{int_part}{frac_part}");
        if !digits.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let num: u128 = digits.parse().ok()?;
        let scale = exp - frac_part.len() as i32;
        let ratio = if scale >= 0 {
            Ratio::from_integer(num.checked_mul(10u128.checked_pow(scale as u32)?)?)
        } else {
            Ratio::new(num, 10u128.checked_pow((-scale) as u32)?)
        };
        Some(Frequency(ratio))
    }

    pub fn ratio(&self) -> Ratio<u128> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        *self.0.numer() == 0
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn times(&self, multiplier: u64) -> Frequency {
        Frequency(self.0 * Ratio::from_integer(multiplier as u128))
    }

    pub fn div_int(&self, divisor: u64) -> Frequency {
        Frequency(self.0 / Ratio::from_integer(divisor as u128))
    }

    /// `Some(k)` when `self == k × reference` for a positive integer `k`.
    pub fn integer_multiple_of(&self, reference: Frequency) -> Option<u64> {
        if reference.is_zero() || self.is_zero() {
            return None;
        }
        let q = self.0 / reference.0;
        if q.is_integer() {
            u64::try_from(q.to_integer()).ok()
        } else {
            None
        }
    }

    /// Round `ticks / f` (seconds) to the nearest femtosecond.
    pub fn ticks_to_fs(&self, ticks: u64) -> i64 {
        assert!(!self.is_zero(), "period of a zero frequency");
        let num = *self.0.numer() as i128;
        let den = *self.0.denom() as i128;
        let scaled = ticks as i128 * FS_PER_SECOND as i128 * den;
        ((2 * scaled + num) / (2 * num)) as i64
    }

    /// Exact period in femtoseconds.
    pub fn period_fs(&self) -> Ratio<u128> {
        Ratio::from_integer(FS_PER_SECOND as u128) / self.0
    }
}

impl fmt::Debug for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frequency({} Hz)", self.0)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hz = self.to_f64();
        if hz >= 1e9 {
            write!(f, "{} GHz", hz / 1e9)
        } else if hz >= 1e6 {
            write!(f, "{} MHz", hz / 1e6)
        } else {
            write!(f, "{hz} Hz")
        }
    }
}

impl Add for Frequency {
    type Output = Frequency;
    fn add(self, rhs: Frequency) -> Frequency {
        Frequency(self.0 + rhs.0)
    }
}

/// Multiply a reference by an integer. Total: `ref × multiplier`, exact.
pub fn derive_clock(reference: Frequency, multiplier: u64) -> Result<Frequency, TimebaseError> {
    if multiplier == 0 {
        return Err(TimebaseError::ZeroMultiplier);
    }
    Ok(reference.times(multiplier))
}

/// Signed femtoseconds since the simulation epoch.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub i64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_ps(ps: i64) -> Self {
        SimTime(ps * 1000)
    }

    pub fn from_ns_f64(ns: f64) -> Self {
        SimTime((ns * 1e6).round() as i64)
    }

    pub fn fs(self) -> i64 {
        self.0
    }

    pub fn as_ns(self) -> f64 {
        self.0 as f64 * 1e-6
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 * 1e-15
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Neg for SimTime {
    type Output = SimTime;
    fn neg(self) -> SimTime {
        SimTime(-self.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} fs", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClockDomain {
    pub name: String,
    pub freq: Frequency,
    /// Claimed multiplier over the reference; checked by [`validate_tree`].
    pub ratio_to_ref: u64,
    /// Deterministic skew of this board's edges (cable mismatch and the like).
    pub phase_offset: SimTime,
    /// RMS of the white Gaussian jitter added to each sampled edge.
    pub jitter_rms: SimTime,
}

impl ClockDomain {
    pub fn derived(
        name: impl Into<String>,
        reference: Frequency,
        ratio: u64,
    ) -> Result<Self, TimebaseError> {
        let name = name.into();
        if reference.is_zero() {
            return Err(TimebaseError::NonPositive(name));
        }
        let freq = derive_clock(reference, ratio)?;
        Ok(ClockDomain {
            name,
            freq,
            ratio_to_ref: ratio,
            phase_offset: SimTime::ZERO,
            jitter_rms: SimTime::ZERO,
        })
    }

    /// A domain declared by frequency. Its ratio is the integer part of
    /// `freq / reference`, so a non-multiple shows up in validation.
    pub fn with_frequency(
        name: impl Into<String>,
        freq: Frequency,
        reference: Frequency,
    ) -> Result<Self, TimebaseError> {
        let name = name.into();
        if freq.is_zero() || reference.is_zero() {
            return Err(TimebaseError::NonPositive(name));
        }
        let ratio = (freq.ratio() / reference.ratio()).to_integer() as u64;
        Ok(ClockDomain {
            name,
            freq,
            ratio_to_ref: ratio,
            phase_offset: SimTime::ZERO,
            jitter_rms: SimTime::ZERO,
        })
    }

    pub fn with_phase_offset(mut self, offset: SimTime) -> Self {
        self.phase_offset = offset;
        self
    }

    pub fn with_jitter(mut self, rms: SimTime) -> Self {
        assert!(rms.0 >= 0, "jitter_rms must be non-negative");
        self.jitter_rms = rms;
        self
    }

    /// Time of edge number `tick`. Deterministic when `rng` is `None`.
    pub fn edge_time<R: Rng + ?Sized>(&self, tick: u64, rng: Option<&mut R>) -> SimTime {
        let mut t = self.freq.ticks_to_fs(tick) + self.phase_offset.0;
        if let Some(rng) = rng {
            if self.jitter_rms.0 > 0 {
                let normal = Normal::new(0.0, self.jitter_rms.0 as f64).expect("finite sigma");
                t += normal.sample(rng).round() as i64;
            }
        }
        SimTime(t)
    }

    pub fn nominal_edge(&self, tick: u64) -> SimTime {
        self.edge_time::<rand_chacha::ChaCha8Rng>(tick, None)
    }

    /// Smallest tick whose nominal edge is at or after `t`.
    pub fn first_edge_at_or_after(&self, t: SimTime) -> u64 {
        let rel = t.0 - self.phase_offset.0;
        if rel <= 0 {
            return 0;
        }
        let num = *self.freq.ratio().numer();
        let den = *self.freq.ratio().denom();
        let approx = (rel as u128 * num).div_ceil(FS_PER_SECOND as u128 * den) as u64;
        let mut k = approx.saturating_sub(1);
        while self.nominal_edge(k) < t {
            k += 1;
        }
        while k > 0 && self.nominal_edge(k - 1) >= t {
            k -= 1;
        }
        k
    }
}

/// The clock set of one board: conditioner outputs, fabric domains and the
/// converter sample clocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoardClocks {
    pub domains: Vec<ClockDomain>,
}

impl BoardClocks {
    pub fn standard(reference: Frequency) -> Self {
        let domains = STANDARD_DOMAINS
            .iter()
            .map(|&(name, ratio)| ClockDomain::derived(name, reference, ratio).expect("valid"))
            .collect();
        BoardClocks { domains }
    }

    pub fn domain(&self, name: &str) -> Option<&ClockDomain> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn domain_mut(&mut self, name: &str) -> Option<&mut ClockDomain> {
        self.domains.iter_mut().find(|d| d.name == name)
    }

    fn expect(&self, name: &str) -> &ClockDomain {
        self.domain(name)
            .unwrap_or_else(|| panic!("board clock tree has no `{name}` domain"))
    }

    pub fn pl_refclk(&self) -> &ClockDomain {
        self.expect(PL_REFCLK)
    }

    pub fn time_clock(&self) -> &ClockDomain {
        self.expect(TIME_CLOCK)
    }

    pub fn dac_sample(&self) -> &ClockDomain {
        self.expect(DAC_SAMPLE)
    }

    pub fn adc_sample(&self) -> &ClockDomain {
        self.expect(ADC_SAMPLE)
    }

    /// Shift every domain on this board (the whole tree sits behind one cable).
    pub fn set_skew(&mut self, offset: SimTime) {
        for d in &mut self.domains {
            d.phase_offset = offset;
        }
    }

    pub fn set_jitter(&mut self, domain: &str, rms: SimTime) -> bool {
        match self.domain_mut(domain) {
            Some(d) => {
                d.jitter_rms = rms;
                true
            }
            None => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClockTree {
    pub reference: Frequency,
    pub boards: Vec<BoardClocks>,
}

impl ClockTree {
    pub fn standard(n_boards: usize) -> Self {
        let reference = Frequency::from_hz(REFERENCE_HZ);
        ClockTree {
            reference,
            boards: (0..n_boards).map(|_| BoardClocks::standard(reference)).collect(),
        }
    }

    pub fn empty(reference: Frequency) -> Self {
        ClockTree {
            reference,
            boards: Vec::new(),
        }
    }

    pub fn board(&self, i: usize) -> &BoardClocks {
        &self.boards[i]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainRatio {
    pub board: usize,
    pub name: String,
    /// `None` when the domain is not an integer multiple of the reference.
    pub ratio: Option<u64>,
    pub ok: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub entries: Vec<DomainRatio>,
    /// `board<N>/<domain>: reason`, one per offending domain.
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn ratio_set(&self) -> BTreeSet<u64> {
        self.entries.iter().filter_map(|e| e.ratio).collect()
    }

    pub fn offending_domains(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| !e.ok)
            .map(|e| e.name.as_str())
            .collect()
    }
}

/// Check that every domain is an exact integer multiple of the reference and
/// that its declared ratio matches, with SYSREF at ratio 1.
pub fn validate_tree(tree: &ClockTree) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (b, board) in tree.boards.iter().enumerate() {
        for d in &board.domains {
            let ratio = d.freq.integer_multiple_of(tree.reference);
            let before = report.violations.len();
            match ratio {
                None => report.violations.push(format!(
                    "board{b}/{}: {} is not an integer multiple of {}",
                    d.name, d.freq, tree.reference
                )),
                Some(k) if k != d.ratio_to_ref => report.violations.push(format!(
                    "board{b}/{}: declared ratio {} but frequency gives {k}",
                    d.name, d.ratio_to_ref
                )),
                Some(k) if d.name == SYSREF && k != 1 => report
                    .violations
                    .push(format!("board{b}/{}: SYSREF ratio must be 1, got {k}", d.name)),
                Some(_) => {}
            }
            report.entries.push(DomainRatio {
                board: b,
                name: d.name.clone(),
                ratio,
                ok: report.violations.len() == before,
            });
        }
    }
    report
}
