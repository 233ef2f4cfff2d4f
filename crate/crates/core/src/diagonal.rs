//! Diagonal sequences, Kadison's invariants `a` and `b`, and the feasibility
//! verdict.
//!
//! A [`DiagonalSpec`] is a finite prefix followed by an optional infinite
//! tail. Tail sums are evaluated symbolically when they diverge and to
//! absolute accuracy `1e-12` otherwise.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for `a − b ∈ ℤ`.
pub const INTEGRALITY_TOL: f64 = 1e-9;

/// Power tails are evaluated term by term over at most this many leading
/// entries at or above 1/2.
const MAX_POWER_HEAD: f64 = 1e12;

/// Terms summed directly before switching to the Euler-Maclaurin remainder.
const DIRECT_TERMS: u64 = 10_000;

/// Nonnegative real that may be `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::Infinite => None,
        }
    }
}

impl std::ops::Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(x), ExtReal::Finite(y)) => ExtReal::Finite(x + y),
            _ => ExtReal::Infinite,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => s.serialize_f64(*x),
            ExtReal::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(ExtReal::Finite(x)),
            Raw::Str(s) if s == "inf" => Ok(ExtReal::Infinite),
            Raw::Str(s) => Err(de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

/// Multiplicity of trivial entries; infinite for constant 0/1 tails.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Count {
    Finite(usize),
    Infinite,
}

impl Count {
    fn plus(self, k: usize) -> Count {
        match self {
            Count::Finite(n) => Count::Finite(n + k),
            Count::Infinite => Count::Infinite,
        }
    }
}

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Count::Finite(n) => s.serialize_u64(*n as u64),
            Count::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Count {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(Count::Finite(n as usize)),
            Raw::Str(s) if s == "inf" => Ok(Count::Infinite),
            Raw::Str(s) => Err(de::Error::custom(format!("expected count or \"inf\", got {s:?}"))),
        }
    }
}

/// Infinite continuation of a diagonal after its prefix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Tail {
    /// `dᵢ = c` for every tail position.
    Constant { c: f64 },
    /// `dᵢ = min(c·(i + shift)^(−p), 1)` for tail positions `i = 1, 2, …`.
    Power {
        c: f64,
        p: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        shift: u64,
    },
}

fn is_zero(x: &u64) -> bool {
    *x == 0
}

impl Tail {
    pub fn power(c: f64, p: f64) -> Tail {
        Tail::Power { c, p, shift: 0 }
    }

    /// Value at 1-based tail position `i`.
    pub fn value(&self, i: u64) -> f64 {
        match *self {
            Tail::Constant { c } => c,
            Tail::Power { c, p, shift } => power_term(c, p, i + shift),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Tail::Constant { c } => {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::InvalidTail(format!("constant {c} outside [0, 1]")));
                }
            }
            Tail::Power { c, p, .. } => {
                if !(c.is_finite() && c > 0.0 && p.is_finite() && p > 0.0) {
                    return Err(Error::InvalidTail(format!(
                        "power tail needs c > 0 and p > 0, got c = {c}, p = {p}"
                    )));
                }
                if (2.0 * c).powf(1.0 / p) > MAX_POWER_HEAD {
                    return Err(Error::InvalidTail(format!(
                        "power tail c = {c}, p = {p} has more than {MAX_POWER_HEAD:e} entries above 1/2"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn power_term(c: f64, p: f64, j: u64) -> f64 {
    (c * (j as f64).powf(-p)).min(1.0)
}

/// A diagonal `{dᵢ}`: finite prefix plus optional tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct DiagonalSpec {
    prefix: Vec<f64>,
    tail: Option<Tail>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    prefix: Vec<f64>,
    #[serde(default)]
    tail: Option<Tail>,
}

impl TryFrom<RawSpec> for DiagonalSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        DiagonalSpec::new(raw.prefix, raw.tail)
    }
}

impl From<DiagonalSpec> for RawSpec {
    fn from(s: DiagonalSpec) -> Self {
        RawSpec { prefix: s.prefix, tail: s.tail }
    }
}

impl DiagonalSpec {
    pub fn new(prefix: Vec<f64>, tail: Option<Tail>) -> Result<Self> {
        for (index, &value) in prefix.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfRange { index, value });
            }
        }
        if let Some(t) = &tail {
            t.validate()?;
        }
        Ok(Self { prefix, tail })
    }

    pub fn finite(prefix: Vec<f64>) -> Result<Self> {
        Self::new(prefix, None)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    pub fn tail(&self) -> Option<&Tail> {
        self.tail.as_ref()
    }

    pub fn is_finite(&self) -> bool {
        self.tail.is_none()
    }

    /// Number of entries, `None` when the tail is infinite.
    pub fn len(&self) -> Option<usize> {
        self.tail.is_none().then_some(self.prefix.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    /// Entry at 0-based global index `i`.
    pub fn term(&self, i: usize) -> Option<f64> {
        if i < self.prefix.len() {
            return Some(self.prefix[i]);
        }
        self.tail
            .as_ref()
            .map(|t| t.value((i - self.prefix.len()) as u64 + 1))
    }

    /// First `n` entries (fewer if the sequence is finite and shorter).
    pub fn materialize(&self, n: usize) -> Vec<f64> {
        (0..n).map_while(|i| self.term(i)).collect()
    }

    /// `dᵢ ↦ 1 − dᵢ`. Power tails have no complement of the same shape.
    pub fn complement(&self) -> Result<Self> {
        let prefix = self.prefix.iter().map(|d| 1.0 - d).collect();
        let tail = match self.tail {
            None => None,
            Some(Tail::Constant { c }) => Some(Tail::Constant { c: 1.0 - c }),
            Some(Tail::Power { .. }) => {
                return Err(Error::InvalidTail("a power tail cannot be complemented".into()))
            }
        };
        Self::new(prefix, tail)
    }
}

/// Feasibility verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// `a, b < ∞` and `a − b ∈ ℤ`.
    CaseI,
    /// `a = ∞` or `b = ∞`.
    CaseII,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KadisonReport {
    pub a: ExtReal,
    pub b: ExtReal,
    /// `a − b` when both are finite; the witness for an infeasible verdict.
    pub a_minus_b: Option<f64>,
    pub num_zeros: Count,
    pub num_ones: Count,
    pub verdict: Verdict,
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Distance from `x` to the nearest integer.
pub fn integrality_gap(x: f64) -> f64 {
    (x.round() - x).abs()
}

/// Contribution of the tail to `a` and `b`.
pub fn tail_sums(spec: &DiagonalSpec) -> (ExtReal, ExtReal) {
    match spec.tail {
        None => (ExtReal::Finite(0.0), ExtReal::Finite(0.0)),
        Some(Tail::Constant { c }) => {
            if c == 0.0 || c == 1.0 {
                (ExtReal::Finite(0.0), ExtReal::Finite(0.0))
            } else if c < 0.5 {
                (ExtReal::Infinite, ExtReal::Finite(0.0))
            } else {
                (ExtReal::Finite(0.0), ExtReal::Infinite)
            }
        }
        Some(Tail::Power { c, p, shift }) => power_tail_sums(c, p, shift),
    }
}

/// Largest `j ≥ 0` with `power_term(c, p, j) ≥ threshold` (0 if none).
pub(crate) fn last_index_at_least(c: f64, p: f64, threshold: f64) -> u64 {
    let guess = (c / threshold).powf(1.0 / p).floor().max(0.0) as u64;
    let mut j = guess;
    while power_term(c, p, j + 1) >= threshold {
        j += 1;
    }
    while j >= 1 && power_term(c, p, j) < threshold {
        j -= 1;
    }
    j
}

fn power_tail_sums(c: f64, p: f64, shift: u64) -> (ExtReal, ExtReal) {
    let first = shift + 1;
    let last_one = last_index_at_least(c, p, 1.0);
    let last_half = last_index_at_least(c, p, 0.5);

    // b: entries in [1/2, 1) contribute 1 − dᵢ; clamped ones contribute 0.
    let lo = first.max(last_one + 1);
    let b = if lo <= last_half {
        let count = (last_half - lo + 1) as f64;
        count - power_range_sum(c, p, lo, Some(last_half))
    } else {
        0.0
    };

    let lo = first.max(last_half + 1);
    let a = if p <= 1.0 {
        ExtReal::Infinite
    } else {
        ExtReal::Finite(power_range_sum(c, p, lo, None))
    };
    (a, ExtReal::Finite(b.max(0.0)))
}

/// `Σ_{j=lo}^{hi} c·j^(−p)` without clamping; `hi = None` means `∞` and
/// requires `p > 1`.
fn power_range_sum(c: f64, p: f64, lo: u64, hi: Option<u64>) -> f64 {
    let direct_end = match hi {
        Some(h) => h.min(lo + DIRECT_TERMS - 1),
        None => lo + DIRECT_TERMS - 1,
    };
    let head = compensated_sum((lo..=direct_end).rev().map(|j| c * (j as f64).powf(-p)));
    let rest_lo = direct_end + 1;
    match hi {
        Some(h) if rest_lo > h => head,
        Some(h) => head + em_finite(c, p, rest_lo as f64, h as f64),
        None => head + em_infinite(c, p, rest_lo as f64),
    }
}

/// Odd derivatives of `f(x) = c·x^(−p)` at `x`: (f', f''', f⁽⁵⁾).
fn odd_derivatives(c: f64, p: f64, x: f64) -> (f64, f64, f64) {
    let d1 = -p * c * x.powf(-p - 1.0);
    let d3 = -p * (p + 1.0) * (p + 2.0) * c * x.powf(-p - 3.0);
    let d5 = -p * (p + 1.0) * (p + 2.0) * (p + 3.0) * (p + 4.0) * c * x.powf(-p - 5.0);
    (d1, d3, d5)
}

/// Euler-Maclaurin for `Σ_{j=n}^{∞} c·j^(−p)`, `p > 1`, `n ≥ 10⁴`.
fn em_infinite(c: f64, p: f64, n: f64) -> f64 {
    let integral = c * n.powf(1.0 - p) / (p - 1.0);
    let f = c * n.powf(-p);
    let (d1, d3, d5) = odd_derivatives(c, p, n);
    integral + f / 2.0 - d1 / 12.0 + d3 / 720.0 - d5 / 30240.0
}

/// Euler-Maclaurin for `Σ_{j=lo}^{hi} c·j^(−p)`.
fn em_finite(c: f64, p: f64, lo: f64, hi: f64) -> f64 {
    let integral = if (p - 1.0).abs() < 1e-15 {
        c * (hi / lo).ln()
    } else {
        c * (hi.powf(1.0 - p) - lo.powf(1.0 - p)) / (1.0 - p)
    };
    let f = |x: f64| c * x.powf(-p);
    let (l1, l3, l5) = odd_derivatives(c, p, lo);
    let (h1, h3, h5) = odd_derivatives(c, p, hi);
    integral + (f(lo) + f(hi)) / 2.0 + (h1 - l1) / 12.0 - (h3 - l3) / 720.0 + (h5 - l5) / 30240.0
}

fn prefix_sums(prefix: &[f64]) -> (f64, f64) {
    let a = compensated_sum(prefix.iter().copied().filter(|&d| d < 0.5));
    let b = compensated_sum(prefix.iter().copied().filter(|&d| d >= 0.5).map(|d| 1.0 - d));
    (a, b)
}

fn trivial_counts(spec: &DiagonalSpec) -> (Count, Count) {
    let zeros = spec.prefix.iter().filter(|&&d| d == 0.0).count();
    let ones = spec.prefix.iter().filter(|&&d| d == 1.0).count();
    match spec.tail {
        None => (Count::Finite(zeros), Count::Finite(ones)),
        Some(Tail::Constant { c: 0.0 }) => (Count::Infinite, Count::Finite(ones)),
        Some(Tail::Constant { c: 1.0 }) => (Count::Finite(zeros), Count::Infinite),
        Some(Tail::Constant { .. }) => (Count::Finite(zeros), Count::Finite(ones)),
        Some(Tail::Power { c, p, shift }) => {
            let tail_ones = last_index_at_least(c, p, 1.0).saturating_sub(shift) as usize;
            (Count::Finite(zeros), Count::Finite(ones).plus(tail_ones))
        }
    }
}

/// Computes `a`, `b` and the verdict.
pub fn classify(spec: &DiagonalSpec) -> KadisonReport {
    let (pa, pb) = prefix_sums(&spec.prefix);
    let (ta, tb) = tail_sums(spec);
    let a = ExtReal::Finite(pa) + ta;
    let b = ExtReal::Finite(pb) + tb;
    let (num_zeros, num_ones) = trivial_counts(spec);
    let a_minus_b = match (a, b) {
        (ExtReal::Finite(x), ExtReal::Finite(y)) => Some(x - y),
        _ => None,
    };
    let verdict = match a_minus_b {
        None => Verdict::CaseII,
        Some(diff) if integrality_gap(diff) <= INTEGRALITY_TOL => Verdict::CaseI,
        Some(_) => Verdict::Infeasible,
    };
    KadisonReport { a, b, a_minus_b, num_zeros, num_ones, verdict }
}

/// Removes entries equal to 0 or 1, keeping the order of the rest.
///
/// Constant 0/1 tails are dropped entirely and counted as infinite; leading
/// ones of a power tail are absorbed by shifting the tail.
pub fn strip_trivial(spec: &DiagonalSpec) -> (DiagonalSpec, Count, Count) {
    let (num_zeros, num_ones) = trivial_counts(spec);
    let prefix: Vec<f64> = spec
        .prefix
        .iter()
        .copied()
        .filter(|&d| d != 0.0 && d != 1.0)
        .collect();
    let tail = match spec.tail {
        Some(Tail::Constant { c }) if c == 0.0 || c == 1.0 => None,
        Some(Tail::Power { c, p, shift }) => {
            let last_one = last_index_at_least(c, p, 1.0);
            Some(Tail::Power { c, p, shift: shift.max(last_one) })
        }
        other => other,
    };
    (DiagonalSpec { prefix, tail }, num_zeros, num_ones)
}
