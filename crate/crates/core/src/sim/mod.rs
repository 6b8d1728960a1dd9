//! Discrete-event simulation of the scaling workflow between the NFVO,
//! the VNF managers, the element managers and the VIMs.

pub mod audit;
mod engine;
mod message;
pub mod random;
mod scenario;
mod trace;

pub use engine::{
    explain_at, grant_check, run_scenario, vim_placement, Engine, Explanation, FinalState, NsOperation,
    OperationPhase, Outcome, RunOutcome, RunResult, ScalingOperation, Snapshot, ZoneView,
};
pub use message::{
    ActorId, ActorKind, AppAction, GrantIntent, Message, OperationKind, PlacementHint, ReservationGrant,
};
pub use scenario::{
    ExternalEvent, IndicatorSpec, InitialInstance, LoadSpec, Occupy, Options, PopSpec, RuleSet, Scenario,
    ScenarioDoc, ScenarioError, Topology, VimSpec, Workload, ZoneSpec,
};
pub use trace::{payload_digest, EventRecord, EventTrace};

#[cfg(test)]
mod tests;
