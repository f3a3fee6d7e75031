//! Numeric plumbing: the two cell-value representations, report scalars
//! that are exact whenever the computation allowed it, and rational
//! exponents.

use std::cmp::Ordering;
use std::fmt::{self, Debug};
use std::ops::{Add, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Cell-value representation used by the grid algorithms.
///
/// Fixed-point grids use `i128` numerators. A mean over any dyadic cube of
/// such a grid is an integer over the grid-wide denominator
/// `D = denom * 2^(L n)`; those integers are the "mean units" every
/// comparison runs in. Float grids use `f64` directly and `D = 1`.
pub trait Sample:
    Copy
    + Default
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
{
    const EXACT: bool;

    /// Mean over `2^cells_log2` cells given the raw sum, in mean units.
    fn mean_of_sum(sum: Self, cells_log2: u32, leaf_log2: u32) -> Self;

    /// Real value of `x / (denom_units * 2^extra_log2)`.
    fn to_scalar(x: Self, denom_units: i128, extra_log2: u32) -> Scalar;

    /// Threshold `t` with `x > level * D * 2^extra  <=>  x > t` for every
    /// representable mean-unit sum `x` (and the same for `<=`).
    fn threshold(level: &BigRational, denom_units: i128, extra_log2: u32) -> Self;

    fn to_f64(self) -> f64;

    fn to_big(self) -> Option<BigInt>;

    /// Significant bits of the magnitude (0 for floats, which never overflow).
    fn magnitude_bits(self) -> u32;

    /// Divide every value and the denominator by their common factor.
    fn reduce(cells: &mut [Self], denom: &mut i128);

    #[inline]
    fn zero() -> Self {
        Self::default()
    }

    #[inline]
    fn larger(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    #[inline]
    fn positive_part(self) -> Self {
        self.larger(Self::zero())
    }

    #[inline]
    fn magnitude(self) -> Self {
        if self < Self::zero() {
            Self::zero() - self
        } else {
            self
        }
    }
}

impl Sample for i128 {
    const EXACT: bool = true;

    #[inline]
    fn mean_of_sum(sum: i128, cells_log2: u32, leaf_log2: u32) -> i128 {
        sum << (leaf_log2 - cells_log2)
    }

    fn to_scalar(x: i128, denom_units: i128, extra_log2: u32) -> Scalar {
        let den = BigInt::from(denom_units) << extra_log2;
        Scalar::Exact(BigRational::new(BigInt::from(x), den))
    }

    fn threshold(level: &BigRational, denom_units: i128, extra_log2: u32) -> i128 {
        let scaled = level * BigRational::from_integer(BigInt::from(denom_units) << extra_log2);
        let fl = scaled.floor().to_integer();
        fl.to_i128().unwrap_or(if fl.is_negative() {
            i128::MIN
        } else {
            i128::MAX
        })
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn to_big(self) -> Option<BigInt> {
        Some(BigInt::from(self))
    }

    fn magnitude_bits(self) -> u32 {
        128 - self.unsigned_abs().leading_zeros()
    }

    fn reduce(cells: &mut [i128], denom: &mut i128) {
        let g = gcd_all(cells.iter(), *denom);
        if g > 1 {
            cells.iter_mut().for_each(|v| *v /= g);
            *denom /= g;
        }
    }
}

impl Sample for f64 {
    const EXACT: bool = false;

    #[inline]
    fn mean_of_sum(sum: f64, cells_log2: u32, _leaf_log2: u32) -> f64 {
        sum / pow2(cells_log2)
    }

    fn to_scalar(x: f64, _denom_units: i128, extra_log2: u32) -> Scalar {
        Scalar::Float(x / pow2(extra_log2))
    }

    fn threshold(level: &BigRational, _denom_units: i128, extra_log2: u32) -> f64 {
        rational_to_f64(level) * pow2(extra_log2)
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    fn to_big(self) -> Option<BigInt> {
        None
    }

    fn magnitude_bits(self) -> u32 {
        0
    }

    fn reduce(_cells: &mut [f64], _denom: &mut i128) {}
}

#[inline]
pub(crate) fn pow2(e: u32) -> f64 {
    (2.0f64).powi(e as i32)
}

/// A reported quantity: exact rational when every input to it was exact.
#[derive(Clone, PartialEq)]
pub enum Scalar {
    Exact(BigRational),
    Float(f64),
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::Exact(BigRational::zero())
    }

    pub fn from_int(v: i64) -> Self {
        Scalar::Exact(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            Scalar::Exact(r) => Some(r),
            Scalar::Float(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(r) => rational_to_f64(r),
            Scalar::Float(x) => *x,
        }
    }

    pub fn add(&self, o: &Scalar) -> Scalar {
        match (self, o) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a + b),
            _ => Scalar::Float(self.to_f64() + o.to_f64()),
        }
    }

    pub fn sub(&self, o: &Scalar) -> Scalar {
        match (self, o) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a - b),
            _ => Scalar::Float(self.to_f64() - o.to_f64()),
        }
    }

    pub fn mul(&self, o: &Scalar) -> Scalar {
        match (self, o) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a * b),
            _ => Scalar::Float(self.to_f64() * o.to_f64()),
        }
    }

    /// Division; a zero exact divisor degrades to a float infinity.
    pub fn div(&self, o: &Scalar) -> Scalar {
        match (self, o) {
            (Scalar::Exact(a), Scalar::Exact(b)) if !b.is_zero() => Scalar::Exact(a / b),
            _ => Scalar::Float(self.to_f64() / o.to_f64()),
        }
    }

    pub fn max(self, o: Scalar) -> Scalar {
        if o.partial_cmp(&self) == Some(Ordering::Greater) {
            o
        } else {
            self
        }
    }

    /// `self^p`; stays exact for an exact base and an integer exponent.
    pub fn pow(&self, p: &Exponent) -> Scalar {
        match (self, p.integer()) {
            (Scalar::Exact(r), Some(k)) => Scalar::Exact(pow_rational(r, k)),
            _ => Scalar::Float(self.to_f64().powf(p.to_f64())),
        }
    }

    /// `self <= other`, with a relative slack applied only when either side
    /// is floating.
    pub fn le_tol(&self, other: &Scalar, rel: f64) -> bool {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a <= b,
            _ => {
                let (a, b) = (self.to_f64(), other.to_f64());
                a <= b || a - b <= rel * a.abs().max(b.abs())
            }
        }
    }

    pub fn decimal(&self) -> String {
        format_f64(self.to_f64())
    }

    pub fn exact_string(&self) -> Option<String> {
        self.as_exact().map(|r| r.to_string())
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Some(a.cmp(b)),
            _ => self.to_f64().partial_cmp(&other.to_f64()),
        }
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(r) => write!(f, "{r}"),
            Scalar::Float(x) => write!(f, "{x:e}"),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(r) => write!(f, "{} ({r})", self.decimal()),
            Scalar::Float(_) => write!(f, "{}", self.decimal()),
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let exact = self.exact_string();
        let mut st = s.serialize_struct("Scalar", if exact.is_some() { 2 } else { 1 })?;
        st.serialize_field("decimal", &self.decimal())?;
        if let Some(e) = exact {
            st.serialize_field("exact", &e)?;
        }
        st.end()
    }
}

/// Shortest round-trip decimal, with a stable spelling for non-finite values.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

pub fn pow_rational(r: &BigRational, k: u32) -> BigRational {
    BigRational::new_raw(
        num_traits::pow(r.numer().clone(), k as usize),
        num_traits::pow(r.denom().clone(), k as usize),
    )
}

/// Natural log of a positive big integer without overflowing `f64`.
pub fn ln_big(x: &BigInt) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `(num/den)^(1/p)` for a nonnegative rational that may not fit an `f64`.
pub fn rational_root(r: &BigRational, p: f64) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    ((ln_big(r.numer()) - ln_big(r.denom())) / p).exp()
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    match r.to_f64() {
        Some(x) if x.is_finite() && (x != 0.0 || r.is_zero()) => x,
        _ => {
            let sign = if r.is_negative() { -1.0 } else { 1.0 };
            let a = r.abs();
            sign * (ln_big(a.numer()) - ln_big(a.denom())).exp()
        }
    }
}

/// Exact conversion of a finite float to a rational.
pub fn f64_to_rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x)
        .ok_or_else(|| Error::InvalidParams(format!("non-finite value {x}")))
}

/// Parse `a/b`, an integer, or a finite decimal such as `1.25` or `1e-3`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::InvalidParams(format!("cannot parse `{s}` as a rational"));
    if let Some((a, b)) = s.split_once('/') {
        let a = BigInt::from_str(a.trim()).map_err(|_| bad())?;
        let b = BigInt::from_str(b.trim()).map_err(|_| bad())?;
        if b.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(a, b));
    }
    if let Ok(i) = BigInt::from_str(s) {
        return Ok(BigRational::from_integer(i));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits = format!("{int_part}{frac_part}");
    if digits.is_empty() || digits == "-" || digits == "+" {
        return Err(bad());
    }
    let num = BigInt::from_str(&digits).map_err(|_| bad())?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    Ok(if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    })
}

/// A rational exponent `p > 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Exponent(BigRational);

impl Exponent {
    pub fn new(p: BigRational) -> Result<Self> {
        if p <= BigRational::one() {
            return Err(Error::InvalidExponent(p.to_string()));
        }
        Ok(Exponent(p))
    }

    pub fn integer(&self) -> Option<u32> {
        if self.0.is_integer() {
            self.0.to_integer().to_u32()
        } else {
            None
        }
    }

    pub fn ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.0)
    }

    /// Conjugate exponent `q = p/(p-1)`.
    pub fn conjugate(&self) -> BigRational {
        &self.0 / (&self.0 - BigRational::one())
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Exponent::new(parse_rational(s)?)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

#[cfg(test)]
pub(crate) fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Greatest common divisor of all values, never zero.
pub(crate) fn gcd_all<'a>(vals: impl Iterator<Item = &'a i128>, start: i128) -> i128 {
    let mut g = start.abs();
    for v in vals {
        if g == 1 {
            break;
        }
        g = g.gcd(v);
    }
    Ord::max(g, 1)
}
