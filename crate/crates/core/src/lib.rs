//! Instantiation-level based scaling of network services: descriptors,
//! monitoring rules, resource inventory, the scaling decision and a
//! deterministic simulator of the management workflow.
//!
//! Capacity arithmetic is generic over [`scalar::Scalar`]; the aliases below
//! pick the common instantiations.

pub mod capacity;
pub mod descriptor;
pub mod monitoring;
pub mod scalar;
pub mod inventory;
pub mod drpa;
pub mod sim;

pub use scalar::{Rational, Scalar};

/// Capacity in `f64`, the default used by the simulator and the CLI.
pub type Capacity = capacity::CapacityVector<f64>;
/// Capacity in exact rationals, for property tests and reference checks.
pub type ExactCapacity = capacity::CapacityVector<Rational>;
pub type Inventory = inventory::Inventory<f64>;
pub type ExactInventory = inventory::Inventory<Rational>;
pub type Decision = drpa::DrpaDecision<f64>;
pub type ExactDecision = drpa::DrpaDecision<Rational>;
pub type Engine = sim::Engine<f64>;
pub type ExactEngine = sim::Engine<Rational>;
