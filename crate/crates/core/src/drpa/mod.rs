//! Scaling decisions: demand estimation from rule verdicts, candidate
//! NS-ILs, cost-optimal selection and PoP placement.
//!
//! The pipeline is `estimate -> candidates -> select (with placement)`. The
//! demand stage is pluggable through [`DemandModel`] so NS-specific logic can
//! replace the default linear utilization model.

pub mod oracle;
mod placement;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::{CapacityVector, Dimension};
use crate::descriptor::{
    aggregate_capacity, ns_il_delta, vnf_il_capacity, Catalog, NsDeploymentFlavor, Procedure,
    UnknownId, NS_SELF,
};
use crate::inventory::{Inventory, NsInfo, NsState, VnfInfo};
use crate::monitoring::rule::ScaleDirection;
use crate::monitoring::{Observation, RuleVerdict};
use crate::scalar::Scalar;

pub use placement::{
    additions_for, occupied_labels, plan_placement, profile_instances, Addition, AntiAffinityRule,
    InstancePlan, PlacementConstraints, PlacementError, PlacementMap,
};

/// Weighted-capacity cost: `weights · capacity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct CostModel<S = f64> {
    pub weights: CapacityVector<S>,
}

impl<S: Scalar> Default for CostModel<S> {
    fn default() -> Self {
        Self {
            weights: CapacityVector::splat(S::one()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cost weights must be nonnegative with at least one positive")]
pub struct InvalidWeights;

impl<S: Scalar> CostModel<S> {
    pub fn new(weights: CapacityVector<S>) -> Result<Self, InvalidWeights> {
        if !weights.is_nonnegative() || weights.is_zero() {
            return Err(InvalidWeights);
        }
        Ok(Self { weights })
    }

    pub fn cost(&self, capacity: &CapacityVector<S>) -> S {
        capacity.dot(&self.weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct DemandEstimate<S = f64> {
    pub required: CapacityVector<S>,
    /// Target utilization the estimate sizes for.
    #[serde(with = "crate::scalar::as_f64")]
    pub headroom: S,
    /// Dimension -> (observed utilization, capacity it was observed on).
    pub basis: BTreeMap<Dimension, (f64, f64)>,
}

fn relevant(verdicts: &[RuleVerdict], direction: ScaleDirection) -> impl Iterator<Item = &RuleVerdict> {
    verdicts
        .iter()
        .filter(move |v| v.is_violated() && v.direction == direction)
}

fn estimate_from<'a, S: Scalar>(
    observations: impl Iterator<Item = &'a Observation>,
    current: CapacityVector<S>,
    target: S,
    direction: ScaleDirection,
) -> DemandEstimate<S> {
    let mut util: BTreeMap<Dimension, f64> = BTreeMap::new();
    for o in observations {
        if let Some(d) = o.dimension {
            let e = util.entry(d).or_insert(o.value);
            *e = e.max(o.value);
        }
    }
    let mut required = match direction {
        ScaleDirection::ScaleOut => current,
        ScaleDirection::ScaleIn => CapacityVector::zero(),
    };
    let mut basis = BTreeMap::new();
    for (&d, &u) in &util {
        let r = S::of(u.max(0.0)) * current.get(d) / target;
        required.set(d, r);
        basis.insert(d, (u, current.get(d).to_f64()));
    }
    DemandEstimate {
        required,
        headroom: target,
        basis,
    }
}

/// Linear utilization scaling: each dimension observed by a violated rule
/// of `direction` needs `utilization × capacity / target`. Unobserved
/// dimensions keep their capacity when scaling out and need nothing when
/// scaling in.
pub fn estimate_demand<S: Scalar>(
    verdicts: &[RuleVerdict],
    current: CapacityVector<S>,
    target: S,
    direction: ScaleDirection,
) -> DemandEstimate<S> {
    estimate_from(
        relevant(verdicts, direction).flat_map(|v| v.observations.iter()),
        current,
        target,
        direction,
    )
}

/// Snapshot the DRPA decides on.
#[derive(Debug, Clone, Copy)]
pub struct DrpaInput<'a, S = f64> {
    pub verdicts: &'a [RuleVerdict],
    pub ns_info: &'a NsInfo,
    pub vnf_infos: &'a BTreeMap<String, VnfInfo>,
    pub catalog: &'a Catalog,
    pub inventory: &'a Inventory<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct DrpaConfig<S = f64> {
    pub cost: CostModel<S>,
    #[serde(with = "crate::scalar::as_f64")]
    pub target_utilization: S,
    pub constraints: PlacementConstraints,
}

impl<S: Scalar> Default for DrpaConfig<S> {
    fn default() -> Self {
        Self {
            cost: CostModel::default(),
            target_utilization: S::of(0.6),
            constraints: PlacementConstraints::default(),
        }
    }
}

/// Demand stage of the pipeline.
pub trait DemandModel<S: Scalar> {
    fn estimate(
        &self,
        input: &DrpaInput<'_, S>,
        config: &DrpaConfig<S>,
        direction: ScaleDirection,
    ) -> Result<DemandEstimate<S>, DrpaError>;
}

/// Default demand model. Each rule observation is scaled against the
/// capacity of the subject it was measured on (all instances of a VNFD, or
/// the whole NS for `ns-self`), and the change is applied to the NS total.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubjectScaledDemand;

impl<S: Scalar> DemandModel<S> for SubjectScaledDemand {
    fn estimate(
        &self,
        input: &DrpaInput<'_, S>,
        config: &DrpaConfig<S>,
        direction: ScaleDirection,
    ) -> Result<DemandEstimate<S>, DrpaError> {
        let flavor = input
            .catalog
            .ns_flavor(&input.ns_info.nsd_ref, &input.ns_info.flavor_ref)?;
        let ns_cap = aggregate_capacity::<S>(input.catalog, flavor, &input.ns_info.current_ns_il)?;
        let mut by_subject: BTreeMap<&str, Vec<&Observation>> = BTreeMap::new();
        for v in relevant(input.verdicts, direction) {
            for o in v.observations.iter().filter(|o| o.dimension.is_some()) {
                by_subject.entry(o.subject.as_str()).or_default().push(o);
            }
        }
        let mut required = match direction {
            ScaleDirection::ScaleOut => ns_cap,
            ScaleDirection::ScaleIn => CapacityVector::zero(),
        };
        let mut basis = BTreeMap::new();
        let observed: BTreeSet<Dimension> = by_subject
            .values()
            .flatten()
            .filter_map(|o| o.dimension)
            .collect();
        if direction == ScaleDirection::ScaleIn {
            for &d in &observed {
                required.set(d, ns_cap.get(d));
            }
        }
        for (subject, obs) in by_subject {
            let cap = subject_capacity(input, subject, ns_cap)?;
            let est = estimate_from(obs.iter().copied(), cap, config.target_utilization, direction);
            for (&d, b) in &est.basis {
                required.set(d, required.get(d) + est.required.get(d) - cap.get(d));
                basis.insert(d, *b);
            }
        }
        let required = match direction {
            ScaleDirection::ScaleOut => CapacityVector::new(
                required.vcpu.max_of(ns_cap.vcpu),
                required.memory.max_of(ns_cap.memory),
                required.storage.max_of(ns_cap.storage),
                required.bandwidth.max_of(ns_cap.bandwidth),
            ),
            ScaleDirection::ScaleIn => CapacityVector::new(
                required.vcpu.min_of(ns_cap.vcpu),
                required.memory.min_of(ns_cap.memory),
                required.storage.min_of(ns_cap.storage),
                required.bandwidth.min_of(ns_cap.bandwidth),
            )
            .positive_part(),
        };
        Ok(DemandEstimate {
            required,
            headroom: config.target_utilization,
            basis,
        })
    }
}

/// Capacity of a monitored subject at its current level.
pub fn subject_capacity<S: Scalar>(
    input: &DrpaInput<'_, S>,
    subject: &str,
    ns_cap: CapacityVector<S>,
) -> Result<CapacityVector<S>, DrpaError> {
    if subject == NS_SELF {
        return Ok(ns_cap);
    }
    let mut total = CapacityVector::zero();
    for info in input.vnf_infos.values().filter(|v| v.vnfd_ref == subject) {
        let Some(il) = &info.current_vnf_il else { continue };
        let vnfd = input.catalog.vnfd(&info.vnfd_ref)?;
        let vf = vnfd
            .flavor(&info.vnf_flavor_ref)
            .ok_or_else(|| UnknownId::new("VNF flavor", &info.vnf_flavor_ref))?;
        total += vnf_il_capacity::<S>(vnfd, vf, il)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CandidateStatus {
    Current,
    Insufficient { dimension: Dimension, needed: f64, offered: f64 },
    NotCheaper,
    Unplaceable { reason: String },
    Outranked { by: String },
    Chosen,
    /// Not examined because the decision was "no action".
    Idle,
}

/// How one NS-IL fared in a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRationale {
    pub ns_il: String,
    pub cost: f64,
    pub instances: u32,
    pub capacity: CapacityVector<f64>,
    /// Meets the demand (and, scaling in, is cheaper than the current level).
    pub feasible: bool,
    pub status: CandidateStatus,
}

impl fmt::Display for CandidateRationale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} cost={} instances={} feasible={} ",
            self.ns_il, self.cost, self.instances, self.feasible
        )?;
        match &self.status {
            CandidateStatus::Current => f.write_str("current level"),
            CandidateStatus::Insufficient { dimension, needed, offered } => {
                write!(f, "rejected: insufficient {dimension} ({offered} < {needed})")
            }
            CandidateStatus::NotCheaper => f.write_str("rejected: not cheaper than the current level"),
            CandidateStatus::Unplaceable { reason } => write!(f, "rejected: {reason}"),
            CandidateStatus::Outranked { by } => write!(f, "rejected: outranked by {by}"),
            CandidateStatus::Chosen => f.write_str("chosen"),
            CandidateStatus::Idle => f.write_str("not evaluated"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    None,
    Scale,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct DrpaDecision<S = f64> {
    pub action: Action,
    pub current_ns_il: String,
    pub target_ns_il: Option<String>,
    pub direction: Option<ScaleDirection>,
    pub classification: Procedure,
    /// Violated rules that drove the decision.
    pub triggered_by: Vec<String>,
    pub estimate: Option<DemandEstimate<S>>,
    pub additions: Vec<Addition<S>>,
    /// Addition id -> NFVI-PoP id.
    pub placement: BTreeMap<String, String>,
    pub selected_vims: BTreeSet<String>,
    pub instances: InstancePlan,
    /// Every NS-IL of the flavor in declaration order.
    pub rationale: Vec<CandidateRationale>,
}

/// Demand as reported in errors, rounded so that exact and floating-point
/// runs describe it identically.
fn reported<S: Scalar>(v: CapacityVector<S>) -> CapacityVector<f64> {
    v.to_f64().map(|x| (x * 1e9).round() / 1e9)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DrpaError {
    #[error("NS instance is not in the instantiated state")]
    NotInstantiated,
    #[error("no NS-IL meets the demand {required}")]
    NoFeasibleLevel {
        required: CapacityVector<f64>,
        rationale: Vec<CandidateRationale>,
    },
    #[error("no candidate NS-IL can be placed")]
    NoPlaceableCandidate { rationale: Vec<CandidateRationale> },
    #[error(transparent)]
    Catalog(#[from] UnknownId),
}

impl DrpaError {
    pub fn rationale(&self) -> &[CandidateRationale] {
        match self {
            DrpaError::NoFeasibleLevel { rationale, .. } | DrpaError::NoPlaceableCandidate { rationale } => rationale,
            _ => &[],
        }
    }
}

fn first_shortfall<S: Scalar>(capacity: &CapacityVector<S>, required: &CapacityVector<S>) -> Option<Dimension> {
    required.first_excess(capacity)
}

fn level_rows<S: Scalar>(
    catalog: &Catalog,
    flavor: &NsDeploymentFlavor,
    cost: &CostModel<S>,
) -> Result<Vec<(String, CapacityVector<S>, S, u32)>, UnknownId> {
    flavor
        .ns_ils
        .iter()
        .map(|l| {
            let cap = aggregate_capacity::<S>(catalog, flavor, &l.id)?;
            Ok((l.id.clone(), cap, cost.cost(&cap), l.total_instances()))
        })
        .collect()
}

fn rationale_rows<S: Scalar>(rows: &[(String, CapacityVector<S>, S, u32)]) -> Vec<CandidateRationale> {
    rows.iter()
        .map(|(id, cap, cost, n)| CandidateRationale {
            ns_il: id.clone(),
            cost: cost.to_f64(),
            instances: *n,
            capacity: cap.to_f64(),
            feasible: false,
            status: CandidateStatus::Idle,
        })
        .collect()
}

/// NS-ILs meeting `required`, in declaration order, with the status of the
/// rejected ones written into `rationale`.
fn screen<S: Scalar>(
    rows: &[(String, CapacityVector<S>, S, u32)],
    required: &CapacityVector<S>,
    direction: ScaleDirection,
    current: &str,
    rationale: &mut [CandidateRationale],
) -> Vec<String> {
    let current_cost = rows.iter().find(|r| r.0 == current).map(|r| r.2);
    let mut out = Vec::new();
    for (row, why) in rows.iter().zip(rationale.iter_mut()) {
        let (id, cap, cost, _) = row;
        if id == current {
            why.status = CandidateStatus::Current;
            continue;
        }
        if let Some(d) = first_shortfall(cap, required) {
            why.status = CandidateStatus::Insufficient {
                dimension: d,
                needed: required.get(d).to_f64(),
                offered: cap.get(d).to_f64(),
            };
            continue;
        }
        if direction == ScaleDirection::ScaleIn && current_cost.is_some_and(|c| *cost >= c) {
            why.status = CandidateStatus::NotCheaper;
            continue;
        }
        why.feasible = true;
        out.push(id.clone());
    }
    out
}

/// Scale-out: every NS-IL other than `current` whose capacity covers the
/// demand. Scale-in: additionally strictly cheaper than `current`.
pub fn candidate_ns_ils<S: Scalar>(
    catalog: &Catalog,
    flavor: &NsDeploymentFlavor,
    estimate: &DemandEstimate<S>,
    direction: ScaleDirection,
    current: &str,
    cost: &CostModel<S>,
) -> Result<Vec<String>, DrpaError> {
    if flavor.ns_il(current).is_none() {
        return Err(UnknownId::new("NS-IL", current).into());
    }
    let rows = level_rows(catalog, flavor, cost)?;
    let mut rationale = rationale_rows(&rows);
    let out = screen(&rows, &estimate.required, direction, current, &mut rationale);
    if out.is_empty() {
        return Err(DrpaError::NoFeasibleLevel {
            required: reported(estimate.required),
            rationale,
        });
    }
    Ok(out)
}

/// Winner of [`select_optimum`] with everything needed to execute it.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct Selection<S = f64> {
    pub ns_il: String,
    pub classification: Procedure,
    pub additions: Vec<Addition<S>>,
    pub placement: PlacementMap,
    pub instances: InstancePlan,
}

/// Chooses the cheapest placeable candidate; ties go to fewer VNF
/// instances, then to declaration order. `rationale` must list every NS-IL
/// of the flavor in declaration order and is updated in place.
#[allow(clippy::too_many_arguments)]
pub fn select_optimum<S: Scalar>(
    candidates: &[String],
    cost: &CostModel<S>,
    inventory: &Inventory<S>,
    catalog: &Catalog,
    ns_info: &NsInfo,
    vnf_infos: &BTreeMap<String, VnfInfo>,
    constraints: &PlacementConstraints,
    rationale: &mut [CandidateRationale],
) -> Result<Selection<S>, DrpaError> {
    let flavor = catalog.ns_flavor(&ns_info.nsd_ref, &ns_info.flavor_ref)?;
    let mut ranked = Vec::new();
    for id in candidates {
        let idx = flavor.ns_il_index(id).ok_or_else(|| UnknownId::new("NS-IL", id))?;
        let cap = aggregate_capacity::<S>(catalog, flavor, id)?;
        ranked.push((cost.cost(&cap), flavor.ns_ils[idx].total_instances(), idx, id.clone()));
    }
    ranked.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut winner: Option<Selection<S>> = None;
    for (_, _, idx, id) in ranked {
        if let Some(w) = &winner {
            rationale[idx].status = CandidateStatus::Outranked { by: w.ns_il.clone() };
            continue;
        }
        let delta = ns_il_delta::<S>(catalog, flavor, &ns_info.current_ns_il, &id)?;
        let (additions, instances) = additions_for(catalog, flavor, &delta, vnf_infos, constraints)?;
        match plan_placement(&additions, inventory) {
            Ok(placement) => {
                rationale[idx].status = CandidateStatus::Chosen;
                winner = Some(Selection {
                    ns_il: id,
                    classification: delta.classification,
                    additions,
                    placement,
                    instances,
                });
            }
            Err(e) => {
                rationale[idx].status = CandidateStatus::Unplaceable { reason: e.to_string() };
            }
        }
    }
    winner.ok_or_else(|| DrpaError::NoPlaceableCandidate {
        rationale: rationale.to_vec(),
    })
}

/// Screens every NS-IL of the NS's flavor against `required` and picks the
/// optimum. Returns the rationale for all levels alongside the winner.
#[allow(clippy::too_many_arguments)]
pub fn select_for_demand<S: Scalar>(
    catalog: &Catalog,
    ns_info: &NsInfo,
    vnf_infos: &BTreeMap<String, VnfInfo>,
    required: &CapacityVector<S>,
    direction: ScaleDirection,
    cost: &CostModel<S>,
    inventory: &Inventory<S>,
    constraints: &PlacementConstraints,
) -> Result<(Selection<S>, Vec<CandidateRationale>), DrpaError> {
    let flavor = catalog.ns_flavor(&ns_info.nsd_ref, &ns_info.flavor_ref)?;
    if flavor.ns_il(&ns_info.current_ns_il).is_none() {
        return Err(UnknownId::new("NS-IL", &ns_info.current_ns_il).into());
    }
    let rows = level_rows(catalog, flavor, cost)?;
    let mut rationale = rationale_rows(&rows);
    let candidates = screen(&rows, required, direction, &ns_info.current_ns_il, &mut rationale);
    if candidates.is_empty() {
        return Err(DrpaError::NoFeasibleLevel {
            required: reported(*required),
            rationale,
        });
    }
    let selection = select_optimum(&candidates, cost, inventory, catalog, ns_info, vnf_infos, constraints, &mut rationale)?;
    Ok((selection, rationale))
}

/// Direction implied by the verdicts: any violated scale-out rule wins over
/// violated scale-in rules.
pub fn scaling_direction(verdicts: &[RuleVerdict]) -> Option<ScaleDirection> {
    let violated = |d| verdicts.iter().any(|v| v.is_violated() && v.direction == d);
    if violated(ScaleDirection::ScaleOut) {
        Some(ScaleDirection::ScaleOut)
    } else if violated(ScaleDirection::ScaleIn) {
        Some(ScaleDirection::ScaleIn)
    } else {
        None
    }
}

pub fn decide<S: Scalar>(input: &DrpaInput<'_, S>, config: &DrpaConfig<S>) -> Result<DrpaDecision<S>, DrpaError> {
    decide_with(&SubjectScaledDemand, input, config)
}

/// [`decide`] with a custom demand stage.
pub fn decide_with<S: Scalar>(
    model: &dyn DemandModel<S>,
    input: &DrpaInput<'_, S>,
    config: &DrpaConfig<S>,
) -> Result<DrpaDecision<S>, DrpaError> {
    if input.ns_info.state != NsState::Instantiated {
        return Err(DrpaError::NotInstantiated);
    }
    let ns = input.ns_info;
    let flavor = input.catalog.ns_flavor(&ns.nsd_ref, &ns.flavor_ref)?;
    let rows = level_rows(input.catalog, flavor, &config.cost)?;
    let mut decision = DrpaDecision {
        action: Action::None,
        current_ns_il: ns.current_ns_il.clone(),
        target_ns_il: None,
        direction: None,
        classification: Procedure::None,
        triggered_by: Vec::new(),
        estimate: None,
        additions: Vec::new(),
        placement: BTreeMap::new(),
        selected_vims: BTreeSet::new(),
        instances: InstancePlan::default(),
        rationale: Vec::new(),
    };
    let Some(direction) = scaling_direction(input.verdicts) else {
        decision.rationale = rationale_rows(&rows);
        return Ok(decision);
    };
    decision.direction = Some(direction);
    decision.triggered_by = relevant(input.verdicts, direction).map(|v| v.rule_id.clone()).collect();

    let estimate = model.estimate(input, config, direction)?;
    let (selection, rationale) = select_for_demand(
        input.catalog,
        ns,
        input.vnf_infos,
        &estimate.required,
        direction,
        &config.cost,
        input.inventory,
        &config.constraints,
    )?;
    decision.action = Action::Scale;
    decision.target_ns_il = Some(selection.ns_il);
    decision.classification = selection.classification;
    decision.estimate = Some(estimate);
    decision.additions = selection.additions;
    decision.placement = selection.placement.assignments;
    decision.selected_vims = selection.placement.selected_vims;
    decision.instances = selection.instances;
    decision.rationale = rationale;
    Ok(decision)
}
