//! Four-dimensional resource quantities.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::de::Deserializer;
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// One capacity dimension. Latency and jitter are link QoS attributes and are
/// deliberately not dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Vcpu,
    Memory,
    Storage,
    Bandwidth,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Vcpu,
        Dimension::Memory,
        Dimension::Storage,
        Dimension::Bandwidth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Vcpu => "vcpu",
            Dimension::Memory => "memory",
            Dimension::Storage => "storage",
            Dimension::Bandwidth => "bandwidth",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == name)
    }

    pub fn kind(self) -> ResourceKind {
        match self {
            Dimension::Vcpu | Dimension::Memory => ResourceKind::Compute,
            Dimension::Storage => ResourceKind::Storage,
            Dimension::Bandwidth => ResourceKind::Network,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Virtual resource type handled by a VIM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Compute,
    Storage,
    Network,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 3] = [
        ResourceKind::Compute,
        ResourceKind::Storage,
        ResourceKind::Network,
    ];

    pub fn dimensions(self) -> &'static [Dimension] {
        match self {
            ResourceKind::Compute => &[Dimension::Vcpu, Dimension::Memory],
            ResourceKind::Storage => &[Dimension::Storage],
            ResourceKind::Network => &[Dimension::Bandwidth],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResourceKind::Compute => "compute",
            ResourceKind::Storage => "storage",
            ResourceKind::Network => "network",
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// vCPU count, memory (GiB), storage (GiB) and bandwidth (Mbit/s).
///
/// Stored quantities are non-negative; differences between two vectors (for
/// example the net effect of a level change) may be signed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CapacityVector<S = f64> {
    pub vcpu: S,
    pub memory: S,
    pub storage: S,
    pub bandwidth: S,
}

impl<S: Scalar> CapacityVector<S> {
    pub fn new(vcpu: S, memory: S, storage: S, bandwidth: S) -> Self {
        Self {
            vcpu,
            memory,
            storage,
            bandwidth,
        }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero(), S::zero())
    }

    pub fn from_f64s(vcpu: f64, memory: f64, storage: f64, bandwidth: f64) -> Self {
        Self::new(S::of(vcpu), S::of(memory), S::of(storage), S::of(bandwidth))
    }

    pub fn splat(value: S) -> Self {
        Self::new(value, value, value, value)
    }

    pub fn get(&self, dim: Dimension) -> S {
        match dim {
            Dimension::Vcpu => self.vcpu,
            Dimension::Memory => self.memory,
            Dimension::Storage => self.storage,
            Dimension::Bandwidth => self.bandwidth,
        }
    }

    pub fn set(&mut self, dim: Dimension, value: S) {
        match dim {
            Dimension::Vcpu => self.vcpu = value,
            Dimension::Memory => self.memory = value,
            Dimension::Storage => self.storage = value,
            Dimension::Bandwidth => self.bandwidth = value,
        }
    }

    pub fn with(mut self, dim: Dimension, value: S) -> Self {
        self.set(dim, value);
        self
    }

    pub fn map(self, f: impl Fn(S) -> S) -> Self {
        Self::new(f(self.vcpu), f(self.memory), f(self.storage), f(self.bandwidth))
    }

    pub fn scale(self, factor: S) -> Self {
        self.map(|v| v * factor)
    }

    pub fn is_zero(&self) -> bool {
        Dimension::ALL.iter().all(|&d| self.get(d).is_zero())
    }

    pub fn is_nonnegative(&self) -> bool {
        Dimension::ALL.iter().all(|&d| self.get(d) >= S::zero())
    }

    /// Componentwise `self <= other`.
    pub fn fits_within(&self, other: &Self) -> bool {
        self.first_excess(other).is_none()
    }

    /// First dimension (in canonical order) where `self` exceeds `other`.
    pub fn first_excess(&self, other: &Self) -> Option<Dimension> {
        Dimension::ALL
            .into_iter()
            .find(|&d| self.get(d) > other.get(d))
    }

    /// Positive part, componentwise.
    pub fn positive_part(self) -> Self {
        self.map(|v| v.max_of(S::zero()))
    }

    /// Keeps only the dimensions belonging to `kind`.
    pub fn restrict(self, kind: ResourceKind) -> Self {
        let mut out = Self::zero();
        for &d in kind.dimensions() {
            out.set(d, self.get(d));
        }
        out
    }

    /// Weighted sum `Σ w_d · self_d`.
    pub fn dot(&self, weights: &Self) -> S {
        Dimension::ALL
            .iter()
            .fold(S::zero(), |acc, &d| acc + self.get(d) * weights.get(d))
    }

    pub fn to_f64(self) -> CapacityVector<f64> {
        CapacityVector::new(
            self.vcpu.to_f64(),
            self.memory.to_f64(),
            self.storage.to_f64(),
            self.bandwidth.to_f64(),
        )
    }
}

impl<S: Scalar> Add for CapacityVector<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(
            self.vcpu + rhs.vcpu,
            self.memory + rhs.memory,
            self.storage + rhs.storage,
            self.bandwidth + rhs.bandwidth,
        )
    }
}

impl<S: Scalar> Sub for CapacityVector<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(
            self.vcpu - rhs.vcpu,
            self.memory - rhs.memory,
            self.storage - rhs.storage,
            self.bandwidth - rhs.bandwidth,
        )
    }
}

impl<S: Scalar> Neg for CapacityVector<S> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

impl<S: Scalar> AddAssign for CapacityVector<S> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<S: Scalar> SubAssign for CapacityVector<S> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<S: Scalar> std::iter::Sum for CapacityVector<S> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl<S: Scalar> fmt::Display for CapacityVector<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(vcpu {}, memory {}, storage {}, bandwidth {})",
            self.vcpu, self.memory, self.storage, self.bandwidth
        )
    }
}

// Serialized as a plain JSON object of numbers regardless of the scalar type.
impl<S: Scalar> Serialize for CapacityVector<S> {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        let mut map = serializer.serialize_map(Some(4))?;
        for d in Dimension::ALL {
            map.serialize_entry(d.name(), &self.get(d).to_f64())?;
        }
        map.end()
    }
}

impl<'de, S: Scalar> Deserialize<'de> for CapacityVector<S> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            #[serde(default)]
            vcpu: f64,
            #[serde(default)]
            memory: f64,
            #[serde(default)]
            storage: f64,
            #[serde(default)]
            bandwidth: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        let conv = |v: f64, name: &str| {
            S::from_f64(v).ok_or_else(|| {
                serde::de::Error::custom(format!("{name} value {v} is not representable"))
            })
        };
        Ok(Self::new(
            conv(raw.vcpu, "vcpu")?,
            conv(raw.memory, "memory")?,
            conv(raw.storage, "storage")?,
            conv(raw.bandwidth, "bandwidth")?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use proptest::prelude::*;

    fn vec_strategy() -> impl Strategy<Value = CapacityVector<Rational>> {
        (-1000i64..1000, -1000i64..1000, -1000i64..1000, -1000i64..1000).prop_map(|(a, b, c, d)| {
            CapacityVector::new(
                Rational::from_integer(a),
                Rational::new(b, 4),
                Rational::from_integer(c),
                Rational::new(d, 10),
            )
        })
    }

    proptest! {
        #[test]
        fn add_sub_inverse(a in vec_strategy(), b in vec_strategy()) {
            prop_assert_eq!((a + b) - b, a);
            prop_assert_eq!(a - a, CapacityVector::zero());
            prop_assert_eq!(-(a - b), b - a);
        }

        #[test]
        fn fits_within_matches_componentwise(a in vec_strategy(), b in vec_strategy()) {
            let manual = Dimension::ALL.iter().all(|&d| a.get(d) <= b.get(d));
            prop_assert_eq!(a.fits_within(&b), manual);
        }
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let v: CapacityVector = serde_json::from_str(r#"{"vcpu": 32, "memory": 64}"#).unwrap();
        assert_eq!(v, CapacityVector::new(32.0, 64.0, 0.0, 0.0));
        let text = serde_json::to_string(&v).unwrap();
        assert_eq!(text, r#"{"vcpu":32.0,"memory":64.0,"storage":0.0,"bandwidth":0.0}"#);
        let exact: CapacityVector<Rational> = serde_json::from_str(&text).unwrap();
        assert_eq!(exact.vcpu, Rational::from_integer(32));
    }

    #[test]
    fn restrict_and_excess() {
        let v = CapacityVector::new(8.0, 16.0, 100.0, 50.0);
        assert_eq!(v.restrict(ResourceKind::Compute), CapacityVector::new(8.0, 16.0, 0.0, 0.0));
        assert_eq!(v.restrict(ResourceKind::Network), CapacityVector::new(0.0, 0.0, 0.0, 50.0));
        let cap = CapacityVector::new(8.0, 8.0, 500.0, 500.0);
        assert_eq!(v.first_excess(&cap), Some(Dimension::Memory));
        assert!(v.restrict(ResourceKind::Storage).fits_within(&cap));
    }

    #[test]
    fn dot_product() {
        let v = CapacityVector::new(2.0, 4.0, 0.0, 100.0);
        let w = CapacityVector::new(1.0, 0.5, 3.0, 0.01);
        assert_eq!(v.dot(&w), 2.0 + 2.0 + 0.0 + 1.0);
    }
}
