//! Numeric scalar abstraction used by capacity arithmetic, accounting and
//! the decision pipeline.
//!
//! Everything that adds, subtracts or compares resource quantities is generic
//! over [`Scalar`]. `f64` is the everyday choice; [`Rational`] gives exact
//! arithmetic, which makes conservation checks and oracle comparisons free of
//! rounding noise.

use std::fmt::{Debug, Display};

use num_rational::Ratio;
use num_traits::{Num, Signed};

/// Exact rational scalar.
pub type Rational = Ratio<i64>;

/// A signed, ordered number usable as a resource quantity.
pub trait Scalar:
    Num + Signed + PartialOrd + Copy + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts a decimal quantity read from a document. Returns `None` when
    /// the value is not finite or does not fit the representation.
    fn from_f64(value: f64) -> Option<Self>;

    fn to_f64(self) -> f64;

    fn from_count(count: u64) -> Self;

    /// Like [`Scalar::from_f64`] for values already known to be finite and in
    /// range (validated descriptors, scenario fields).
    fn of(value: f64) -> Self {
        Self::from_f64(value)
            .unwrap_or_else(|| panic!("quantity {value} is not representable as a scalar"))
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

/// Serde adapter for a bare scalar field: written as a JSON number, read
/// back through [`Scalar::from_f64`].
pub mod as_f64 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use super::Scalar;

    pub fn serialize<S: Scalar, Ser: Serializer>(v: &S, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        s.serialize_f64(v.to_f64())
    }

    pub fn deserialize<'de, S: Scalar, D: Deserializer<'de>>(d: D) -> Result<S, D::Error> {
        let v = f64::deserialize(d)?;
        S::from_f64(v).ok_or_else(|| D::Error::custom(format!("{v} is not representable")))
    }
}

impl Scalar for f64 {
    fn from_f64(value: f64) -> Option<Self> {
        value.is_finite().then_some(value)
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn from_count(count: u64) -> Self {
        count as f64
    }
}

impl Scalar for f32 {
    fn from_f64(value: f64) -> Option<Self> {
        let narrowed = value as f32;
        narrowed.is_finite().then_some(narrowed)
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn from_count(count: u64) -> Self {
        count as f32
    }
}

impl Scalar for Rational {
    /// Uses the shortest round-trip decimal form of the float, so `0.9`
    /// becomes exactly `9/10` rather than the nearest binary fraction.
    fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() {
            return None;
        }
        let text = format!("{value}");
        let (negative, digits) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text.as_str()),
        };
        let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
        let mut numer: i64 = whole.parse().ok()?;
        let mut denom: i64 = 1;
        for ch in frac.chars() {
            let digit = ch.to_digit(10)? as i64;
            numer = numer.checked_mul(10)?.checked_add(digit)?;
            denom = denom.checked_mul(10)?;
        }
        if negative {
            numer = -numer;
        }
        Some(Ratio::new(numer, denom))
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }

    fn from_count(count: u64) -> Self {
        Ratio::from_integer(count as i64)
    }
}
