use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::capacity::{CapacityVector, Dimension, ResourceKind};
use crate::descriptor::{
    counts_delta_for, ns_il_delta, vdu_capacity, Catalog, NsDeploymentFlavor, Procedure, VlChange, Vnfd,
    NS_SELF,
};
use crate::drpa::{
    decide, plan_placement, Action, Addition, CostModel, DrpaConfig, DrpaDecision, DrpaError, DrpaInput,
    PlacementConstraints,
};
use crate::inventory::{
    record_vnf_info_update, AllocationItem, AuditSource, Inventory, NewVnfc, NfviPop, NsInfo, NsState,
    ReservationState, ResourceZone, VlInstance, VnfInfo, VnfInfoChange, VnfcState, ZoneRef, ZoneReport,
};
use crate::monitoring::{
    default_dimension_map, indicator_change, MetricSample, MetricStore, Notification, NotificationKind,
    RuleEvaluator, RuleVerdict, StreamConfig, StreamKey,
};
use crate::scalar::Scalar;

use super::message::{
    ActorId, ActorKind, AppAction, GrantIntent, Message, OperationKind, PlacementHint, ReservationGrant,
};
use super::scenario::{Scenario, ScenarioError};
use super::trace::{payload_digest, EventRecord, EventTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum OperationPhase {
    #[serde(rename = "collecting")]
    Collecting,
    #[serde(rename = "triggered")]
    Triggered,
    #[serde(rename = "allocating:reservation")]
    Reservation,
    #[serde(rename = "allocating:creation")]
    Creation,
    #[serde(rename = "allocating:starting")]
    Starting,
    #[serde(rename = "releasing:stopping")]
    Stopping,
    #[serde(rename = "releasing:deletion")]
    Deletion,
    #[serde(rename = "completed")]
    Completed,
    #[serde(rename = "failed")]
    Failed,
}

impl OperationPhase {
    pub fn is_allocation(self) -> bool {
        matches!(self, Self::Reservation | Self::Creation | Self::Starting)
    }

    pub fn is_release(self) -> bool {
        matches!(self, Self::Stopping | Self::Deletion)
    }
}

/// One VNF lifecycle operation (or NS virtual-link change) and its history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingOperation {
    pub op_id: String,
    pub ns_operation: String,
    pub kind: OperationKind,
    pub vnf_instance: Option<String>,
    pub from_vnf_il: Option<String>,
    pub to_vnf_il: Option<String>,
    pub phase: OperationPhase,
    /// Every phase entered, in order.
    pub phases: Vec<OperationPhase>,
    /// `(step, tick)` for every trace record of the operation carrying a step.
    pub step_log: Vec<(u8, u64)>,
    pub failure: Option<String>,
    /// Sequence number of the trace record that closed the operation.
    pub closed_at: Option<u64>,
}

impl ScalingOperation {
    pub fn steps(&self) -> impl Iterator<Item = u8> + '_ {
        self.step_log.iter().map(|(s, _)| *s)
    }

    pub fn is_completed(&self) -> bool {
        self.phase == OperationPhase::Completed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    InProgress,
    Completed,
    Failed,
}

/// An NS-IL transition and the operations that carried it out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NsOperation {
    pub id: String,
    pub tick: u64,
    pub from_ns_il: String,
    pub to_ns_il: String,
    pub classification: Procedure,
    pub operations: Vec<String>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunOutcome {
    Completed,
    OperationFailed,
}

/// Repository and inventory contents after the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct FinalState<S = f64> {
    pub outcome: RunOutcome,
    pub ns_info: NsInfo,
    pub vnf_infos: BTreeMap<String, VnfInfo>,
    pub removed_vnf_infos: Vec<VnfInfo>,
    pub vl_instances: BTreeMap<String, VlInstance>,
    pub capacity: Vec<ZoneReport<S>>,
    pub ns_operations: Vec<NsOperation>,
    pub operations: Vec<ScalingOperation>,
}

impl<S: Scalar> FinalState<S> {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("final state serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunResult<S = f64> {
    pub trace: EventTrace,
    pub final_state: FinalState<S>,
}

impl<S> RunResult<S> {
    pub fn outcome(&self) -> RunOutcome {
        self.final_state.outcome
    }
}

/// State visible to an observer after each processed event.
pub struct Snapshot<'a, S = f64> {
    pub tick: u64,
    /// Records appended while processing the event.
    pub records: &'a [EventRecord],
    pub inventory: &'a Inventory<S>,
    pub ns_info: &'a NsInfo,
    pub vnf_infos: &'a BTreeMap<String, VnfInfo>,
    pub operations: &'a [ScalingOperation],
    /// True while an NS-level operation is open.
    pub busy: bool,
}

/// A zone as the VIM placement step sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneView<S = f64> {
    pub id: String,
    pub available: CapacityVector<S>,
    pub labels: BTreeSet<String>,
}

/// First zone, by ascending id, with room for `spec` and no label in
/// common with `labels`.
pub fn vim_placement<S: Scalar>(
    zones: &[ZoneView<S>],
    spec: &CapacityVector<S>,
    labels: &BTreeSet<String>,
) -> Option<String> {
    let mut sorted: Vec<&ZoneView<S>> = zones.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    sorted
        .into_iter()
        .find(|z| spec.fits_within(&z.available) && z.labels.is_disjoint(labels))
        .map(|z| z.id.clone())
}

/// NFVO check of an allocation grant request against the decision: the
/// VDUs and links asked for must be the ones the decision added, and each
/// PoP must still hold what the decision placed there.
pub fn grant_check<S: Scalar>(
    additions: &[Addition<S>],
    placement: &BTreeMap<String, String>,
    vdu_ids: &[String],
    vl_ids: &[String],
    internal_vlds: &[String],
    inventory: &Inventory<S>,
) -> Result<(), String> {
    let mut want_vdus: Vec<&str> = additions.iter().filter_map(|a| a.vdu.as_deref()).collect();
    let mut got_vdus: Vec<&str> = vdu_ids.iter().map(String::as_str).collect();
    want_vdus.sort();
    got_vdus.sort();
    if want_vdus != got_vdus {
        return Err(format!("requested VDUs {got_vdus:?} differ from the decision's {want_vdus:?}"));
    }
    let mut want_vls: Vec<&str> = additions.iter().filter_map(|a| a.vl_profile.as_deref()).collect();
    let mut got_vls: Vec<&str> = vl_ids
        .iter()
        .map(String::as_str)
        .filter(|id| !internal_vlds.iter().any(|v| v == id))
        .collect();
    want_vls.sort();
    got_vls.sort();
    if want_vls != got_vls {
        return Err(format!("requested links {got_vls:?} differ from the decision's {want_vls:?}"));
    }
    let mut per_pop: BTreeMap<&str, CapacityVector<S>> = BTreeMap::new();
    for a in additions {
        let pop = placement
            .get(&a.id)
            .ok_or_else(|| format!("`{}` has no placement", a.id))?;
        *per_pop.entry(pop).or_insert_with(CapacityVector::zero) += a.spec;
    }
    for (pop, need) in per_pop {
        let available = inventory.pop(pop).map_err(|e| e.to_string())?.available();
        if let Some(d) = need.first_excess(&available) {
            return Err(format!(
                "PoP `{pop}` no longer has {} {d} (has {})",
                need.get(d),
                available.get(d)
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Event<S> {
    Workload,
    External(usize),
    Deliver {
        src: ActorId,
        dst: ActorId,
        step: Option<u8>,
        message: Message<S>,
    },
}

#[derive(Debug, Clone)]
struct JobPlan<S> {
    kind: OperationKind,
    vnf_instance: Option<String>,
    profile: Option<String>,
    from_il: Option<String>,
    to_il: Option<String>,
    additions: Vec<Addition<S>>,
    vl_changes: Vec<VlChange>,
    placement: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
struct PlannedVnfc<S> {
    id: String,
    vdu: String,
    addition: String,
    compute: CapacityVector<S>,
    storage: Vec<(String, CapacityVector<S>)>,
    labels: BTreeSet<String>,
}

#[derive(Debug, Clone)]
struct Job<S> {
    plan: JobPlan<S>,
    op_id: String,
    op_index: usize,
    driver: ActorId,
    em: Option<ActorId>,
    new_vnfcs: Vec<PlannedVnfc<S>>,
    removed: Vec<String>,
    peers: Vec<String>,
    awaiting: usize,
    errors: Vec<String>,
    reservations: Vec<ReservationGrant>,
    handles: Vec<String>,
    grant: Option<GrantIntent>,
    final_step: Option<u8>,
}

impl<S: Scalar> Job<S> {
    fn vl_growth(&self) -> impl Iterator<Item = &Addition<S>> {
        self.plan.additions.iter().filter(|a| a.vl_profile.is_some())
    }

    fn has_allocation(&self) -> bool {
        !self.new_vnfcs.is_empty() || self.vl_growth().next().is_some()
    }

    fn has_release(&self) -> bool {
        !self.removed.is_empty() || self.plan.vl_changes.iter().any(|c| c.to < c.from)
    }
}

#[derive(Debug, Clone)]
struct ActiveNsOp<S> {
    index: usize,
    target: String,
    jobs: VecDeque<JobPlan<S>>,
    current: Option<Job<S>>,
    /// Plans of the jobs completed so far, in order.
    done: Vec<JobPlan<S>>,
    /// Set once a failed job's predecessors are being undone.
    compensating: bool,
}

#[derive(Serialize)]
struct DecideSummary<'a> {
    time: u64,
    triggered_by: Vec<&'a str>,
    current_ns_il: &'a str,
    target_ns_il: Option<&'a str>,
    classification: Option<Procedure>,
    selected_vims: Vec<&'a str>,
    error: Option<String>,
}

/// DRPA view of the NS at a given tick, for explanation.
#[derive(Debug, Clone)]
pub struct Explanation<S = f64> {
    pub tick: u64,
    pub current_ns_il: String,
    /// An operation was open at the tick; the decision reflects the
    /// intermediate deployment.
    pub busy: bool,
    pub verdicts: Vec<RuleVerdict>,
    pub decision: Result<DrpaDecision<S>, DrpaError>,
}

/// Deterministic event loop over the NFVO, VNFMs, VIMs and EMs.
pub struct Engine<S: Scalar = f64> {
    catalog: Catalog,
    scenario: super::scenario::ScenarioDoc,
    config: DrpaConfig<S>,
    reservation: bool,
    tick: u64,
    queue: BTreeMap<(u64, u64), Event<S>>,
    next_event: u64,
    trace: EventTrace,
    inventory: Inventory<S>,
    ns: NsInfo,
    vnfs: BTreeMap<String, VnfInfo>,
    removed_vnfs: Vec<VnfInfo>,
    vls: BTreeMap<String, VlInstance>,
    store: MetricStore,
    evaluator: RuleEvaluator,
    rng: ChaCha8Rng,
    vim_index: BTreeMap<String, u32>,
    vnfm_of: BTreeMap<String, u32>,
    operations: Vec<ScalingOperation>,
    ns_operations: Vec<NsOperation>,
    active: Option<ActiveNsOp<S>>,
    last_evaluation: Option<u64>,
    indicator_values: BTreeMap<String, f64>,
}

fn vl_resource(profile: &str) -> String {
    format!("vl:{profile}")
}

impl<S: Scalar> Engine<S> {
    /// Validates the scenario, instantiates the NS at its initial level and
    /// queues the workload.
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let doc = scenario.doc.clone();
        let catalog = scenario.catalog.clone();
        let init = &doc.initial_instance;
        let nsd = catalog.nsd(&init.nsd).map_err(|e| ScenarioError::Invalid(vec![e.to_string()]))?;

        let mut vim_index = BTreeMap::new();
        let mut pops = Vec::new();
        for (i, vim) in doc.topology.vims.iter().enumerate() {
            vim_index.insert(vim.id.clone(), i as u32 + 1);
            for pop in &vim.pops {
                pops.push(NfviPop {
                    id: pop.id.clone(),
                    vim_ref: vim.id.clone(),
                    zones: pop
                        .zones
                        .iter()
                        .map(|z| {
                            let total = CapacityVector::new(
                                S::of(z.total.vcpu),
                                S::of(z.total.memory),
                                S::of(z.total.storage),
                                S::of(z.total.bandwidth),
                            );
                            ResourceZone::new(&z.id, total)
                        })
                        .collect(),
                });
            }
        }
        let vnfm_of = nsd
            .vnfd_refs
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i as u32 + 1))
            .collect();

        let options = &doc.options;
        let cost = match &options.cost_weights {
            Some(w) => CostModel::new(CapacityVector::new(
                S::of(w.vcpu),
                S::of(w.memory),
                S::of(w.storage),
                S::of(w.bandwidth),
            ))
            .map_err(|_| ScenarioError::Invalid(vec!["cost weights rejected".into()]))?,
            None => CostModel::default(),
        };
        let config = DrpaConfig {
            cost,
            target_utilization: S::of(options.target_utilization),
            constraints: PlacementConstraints {
                anti_affinity: options.anti_affinity.clone(),
            },
        };
        let mut evaluator = RuleEvaluator::for_nsd(nsd, default_dimension_map(), &init.ns_instance_id);
        let mut engine = Self {
            ns: NsInfo {
                ns_instance_id: init.ns_instance_id.clone(),
                nsd_ref: init.nsd.clone(),
                flavor_ref: init.flavor.clone(),
                current_ns_il: init.ns_il.clone(),
                vnf_instance_refs: Vec::new(),
                vl_instance_refs: Vec::new(),
                state: NsState::Instantiated,
            },
            catalog: catalog.clone(),
            config,
            reservation: options.reservation_enabled,
            tick: 0,
            queue: BTreeMap::new(),
            next_event: 0,
            trace: EventTrace::default(),
            inventory: Inventory::new(pops),
            vnfs: BTreeMap::new(),
            removed_vnfs: Vec::new(),
            vls: BTreeMap::new(),
            store: MetricStore::new(),
            evaluator: evaluator.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            vim_index,
            vnfm_of,
            operations: Vec::new(),
            ns_operations: Vec::new(),
            active: None,
            last_evaluation: None,
            indicator_values: BTreeMap::new(),
            scenario: doc.clone(),
        };
        engine
            .instantiate()
            .map_err(|e| ScenarioError::Invalid(vec![format!("initial instance: {e}")]))?;
        for vnfd in nsd.vnfd_refs.iter() {
            evaluator.set_instances(vnfd, engine.running_instances(vnfd));
        }
        engine.evaluator = evaluator;

        for t in 0..doc.workload.horizon {
            engine.schedule(t, Event::Workload);
        }
        for (i, e) in doc.workload.events.iter().enumerate() {
            engine.schedule(e.tick, Event::External(i));
        }
        Ok(engine)
    }

    fn flavor(&self) -> &NsDeploymentFlavor {
        self.catalog
            .ns_flavor(&self.ns.nsd_ref, &self.ns.flavor_ref)
            .expect("validated flavor")
    }

    fn vnfd(&self, id: &str) -> &Vnfd {
        self.catalog.vnfd(id).expect("validated VNFD")
    }

    fn schedule(&mut self, tick: u64, event: Event<S>) {
        self.next_event += 1;
        self.queue.insert((tick, self.next_event), event);
    }

    fn send(&mut self, src: ActorId, dst: ActorId, step: Option<u8>, message: Message<S>) {
        self.schedule(self.tick + 1, Event::Deliver { src, dst, step, message });
    }

    fn record(
        &mut self,
        src: ActorId,
        dst: ActorId,
        step: Option<u8>,
        op_id: Option<String>,
        name: &str,
        payload: serde_json::Value,
    ) {
        let seq = self.trace.records.len() as u64 + 1;
        if let (Some(step), Some(op)) = (step, op_id.as_deref()) {
            if let Some(o) = self.operations.iter_mut().rev().find(|o| o.op_id == op) {
                o.step_log.push((step, self.tick));
            }
        }
        self.trace.records.push(EventRecord {
            seq,
            tick: self.tick,
            step,
            src,
            dst,
            name: name.to_string(),
            op_id,
            digest: payload_digest(&payload),
            payload,
        });
    }

    fn action(&mut self, actor: ActorId, step: Option<u8>, name: &str, payload: serde_json::Value) {
        let op = self.job_ref().map(|j| j.op_id.clone());
        self.record(actor, actor, step, op, name, payload);
    }

    fn vim_actor(&self, pop: &str) -> ActorId {
        let vim = self.inventory.vim_of(pop).expect("known PoP");
        ActorId::vim(self.vim_index[vim])
    }

    fn vim_name(&self, actor: ActorId) -> &str {
        self.vim_index
            .iter()
            .find(|(_, i)| **i == actor.index)
            .map(|(n, _)| n.as_str())
            .expect("known VIM actor")
    }

    fn zone_views(&self, pop: &str) -> Vec<ZoneView<S>> {
        let Ok(p) = self.inventory.pop(pop) else {
            return Vec::new();
        };
        p.zones
            .iter()
            .map(|z| ZoneView {
                id: z.id.clone(),
                available: z.available(),
                labels: self.inventory.zone_labels(&ZoneRef::new(pop, &z.id)),
            })
            .collect()
    }

    fn running_instances(&self, vnfd: &str) -> Vec<String> {
        self.vnfs
            .values()
            .filter(|v| v.vnfd_ref == vnfd && v.current_vnf_il.is_some())
            .map(|v| v.vnf_instance_id.clone())
            .collect()
    }

    fn sync_evaluator(&mut self) {
        let vnfds = self.catalog.nsd(&self.ns.nsd_ref).expect("validated").vnfd_refs.clone();
        for vnfd in vnfds {
            let ids = self.running_instances(&vnfd);
            self.evaluator.set_instances(&vnfd, ids);
        }
    }

    /// Rebuilds a link's record from the handles backing it.
    fn sync_vl(&mut self, profile: &str) {
        let resource = vl_resource(profile);
        let mut handles: Vec<(u64, String, f64)> = self
            .inventory
            .handles
            .values()
            .filter(|h| h.resource == resource)
            .map(|h| {
                let n = h.id.trim_start_matches("h-").parse().unwrap_or(u64::MAX);
                (n, h.id.clone(), h.spec.bandwidth.to_f64())
            })
            .collect();
        handles.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
        let id = format!("{}:{profile}", self.ns.ns_instance_id);
        let vl = self.vls.entry(profile.to_string()).or_insert_with(|| VlInstance {
            id,
            profile: profile.to_string(),
            bitrate: 0.0,
            handles: Vec::new(),
        });
        vl.bitrate = handles.iter().map(|h| h.2).sum();
        vl.handles = handles.into_iter().map(|h| h.1).collect();
    }

    fn sync_vls_of(&mut self, resources: impl IntoIterator<Item = String>) {
        let profiles: BTreeSet<String> = resources
            .into_iter()
            .filter_map(|r| r.strip_prefix("vl:").map(str::to_string))
            .collect();
        for p in profiles {
            self.sync_vl(&p);
        }
    }

    fn planned_vnfcs(
        &self,
        vnfd: &Vnfd,
        instance: &str,
        add: &BTreeMap<String, u32>,
        first_ordinal: u32,
    ) -> Vec<PlannedVnfc<S>> {
        let mut ordinal = first_ordinal;
        let mut out = Vec::new();
        for (vdu, &n) in add {
            let spec: CapacityVector<S> = vdu_capacity(vnfd, vdu).expect("validated VDU");
            let vsds = &vnfd.vdu(vdu).expect("validated VDU").vsd_refs;
            for k in 1..=n {
                let id = format!("{instance}/{vdu}.{ordinal}");
                ordinal += 1;
                out.push(PlannedVnfc {
                    storage: vsds
                        .iter()
                        .map(|r| {
                            let s = S::of(vnfd.vsd(r).expect("validated VSD").storage);
                            (r.clone(), CapacityVector::zero().with(Dimension::Storage, s))
                        })
                        .collect(),
                    compute: spec.restrict(ResourceKind::Compute),
                    addition: format!("{instance}/{vdu}#{k}"),
                    labels: self.config.constraints.labels_for(&vnfd.id, vdu),
                    vdu: vdu.clone(),
                    id,
                });
            }
        }
        out
    }

    /// Allocation items grouped by target PoP and resource kind.
    fn batches(
        vnfcs: &[PlannedVnfc<S>],
        vl_growth: &[Addition<S>],
        placement: &BTreeMap<String, String>,
    ) -> Result<BTreeMap<(String, ResourceKind), Vec<AllocationItem<S>>>, String> {
        let mut out: BTreeMap<(String, ResourceKind), Vec<AllocationItem<S>>> = BTreeMap::new();
        let pop_of = |id: &str| placement.get(id).cloned().ok_or_else(|| format!("`{id}` has no placement"));
        for c in vnfcs {
            let pop = pop_of(&c.addition)?;
            out.entry((pop.clone(), ResourceKind::Compute)).or_default().push(AllocationItem {
                spec: c.compute,
                resource: c.id.clone(),
                labels: c.labels.clone(),
            });
            for (vsd, spec) in &c.storage {
                if spec.is_zero() {
                    continue;
                }
                out.entry((pop.clone(), ResourceKind::Storage)).or_default().push(AllocationItem {
                    spec: *spec,
                    resource: format!("{}:{vsd}", c.id),
                    labels: BTreeSet::new(),
                });
            }
        }
        for a in vl_growth {
            let pop = pop_of(&a.id)?;
            out.entry((pop, ResourceKind::Network)).or_default().push(AllocationItem {
                spec: a.spec.restrict(ResourceKind::Network),
                resource: vl_resource(a.vl_profile.as_deref().unwrap_or_default()),
                labels: BTreeSet::new(),
            });
        }
        Ok(out)
    }

    /// Places and allocates one batch in a PoP without a reservation.
    fn allocate_batch(
        &mut self,
        pop: &str,
        kind: ResourceKind,
        items: &[AllocationItem<S>],
    ) -> Result<(String, Vec<String>), String> {
        let mut total = CapacityVector::zero();
        let mut labels = BTreeSet::new();
        for i in items {
            total += i.spec;
            labels.extend(i.labels.iter().cloned());
        }
        let zone = vim_placement(&self.zone_views(pop), &total, &labels)
            .ok_or_else(|| format!("no zone of `{pop}` fits {kind} request"))?;
        let zref = ZoneRef::new(pop, &zone);
        let mut handles = Vec::new();
        for item in items {
            match self.inventory.allocate(&zref, kind, item.clone(), None) {
                Ok(h) => handles.push(h.id),
                Err(e) => {
                    for h in &handles {
                        let _ = self.inventory.release(h);
                    }
                    return Err(e.to_string());
                }
            }
        }
        Ok((zone, handles))
    }

    fn instantiate(&mut self) -> Result<(), String> {
        let flavor = self.flavor().clone();
        let level = flavor
            .ns_il(&self.ns.current_ns_il)
            .ok_or("unknown NS-IL")?
            .clone();
        let mut planned: Vec<(VnfInfo, Vec<PlannedVnfc<S>>, String)> = Vec::new();
        let mut additions = Vec::new();
        for profile in &flavor.vnf_profiles {
            let Some(entry) = level.vnf_entries.get(&profile.id) else { continue };
            let (vnfd, vf) = self.catalog.profile_target(profile).map_err(|e| e.to_string())?;
            let counts = vf
                .il(&entry.vnf_il_ref)
                .ok_or("unknown VNF-IL")?
                .counts
                .clone();
            for n in 1..=entry.instance_count {
                let id = format!("{}-{n}", profile.id);
                let vnfcs = self.planned_vnfcs(vnfd, &id, &counts, 1);
                for c in &vnfcs {
                    let spec = c.compute + c.storage.iter().fold(CapacityVector::zero(), |a, (_, s)| a + *s);
                    additions.push(Addition {
                        id: c.addition.clone(),
                        vnf_instance: Some(id.clone()),
                        vdu: Some(c.vdu.clone()),
                        vl_profile: None,
                        spec,
                        labels: c.labels.clone(),
                    });
                }
                let info = VnfInfo::new(&id, &profile.vnfd_ref, &profile.vnf_flavor_ref, &profile.id);
                planned.push((info, vnfcs, entry.vnf_il_ref.clone()));
            }
        }
        let mut vl_adds = Vec::new();
        for (vl, bitrate) in &level.vl_entries {
            if *bitrate > 0.0 {
                vl_adds.push(Addition {
                    id: format!("vl:{vl}"),
                    vnf_instance: None,
                    vdu: None,
                    vl_profile: Some(vl.clone()),
                    spec: CapacityVector::zero().with(Dimension::Bandwidth, S::of(*bitrate)),
                    labels: BTreeSet::new(),
                });
            }
        }
        additions.extend(vl_adds.iter().cloned());
        let placement = plan_placement(&additions, &self.inventory).map_err(|e| e.to_string())?;
        let all_vnfcs: Vec<PlannedVnfc<S>> = planned.iter().flat_map(|p| p.1.iter().cloned()).collect();
        let batches = Self::batches(&all_vnfcs, &vl_adds, &placement.assignments)?;
        for ((pop, kind), items) in &batches {
            self.allocate_batch(pop, *kind, items)?;
        }
        let by_resource: BTreeMap<String, (String, ZoneRef)> = self
            .inventory
            .handles
            .values()
            .map(|h| (h.resource.clone(), (h.id.clone(), h.zone_ref.clone())))
            .collect();
        for (info, vnfcs, il) in planned {
            let new = self.new_vnfc_records(&vnfcs, &by_resource);
            let ids = vnfcs.iter().map(|c| c.id.clone()).collect();
            let info = record_vnf_info_update(
                &info,
                &[
                    VnfInfoChange::AddInstancesStopped { instances: new },
                    VnfInfoChange::MarkStarted { ids },
                    VnfInfoChange::SetVnfIl { il: Some(il) },
                ],
                AuditSource::Instantiation,
                0,
            )
            .map_err(|e| e.to_string())?;
            self.vnfs.insert(info.vnf_instance_id.clone(), info);
        }
        for vl in level.vl_entries.keys() {
            self.sync_vl(vl);
        }
        self.ns.vnf_instance_refs = self.vnfs.keys().cloned().collect();
        self.ns.vl_instance_refs = self.vls.values().map(|v| v.id.clone()).collect();
        Ok(())
    }

    fn new_vnfc_records(
        &self,
        vnfcs: &[PlannedVnfc<S>],
        by_resource: &BTreeMap<String, (String, ZoneRef)>,
    ) -> Vec<NewVnfc> {
        vnfcs
            .iter()
            .map(|c| {
                let compute = by_resource.get(&c.id);
                let zone_ref = compute.map(|(_, z)| z.clone());
                NewVnfc {
                    id: c.id.clone(),
                    vdu_ref: c.vdu.clone(),
                    compute_handle: compute.map(|(h, _)| h.clone()),
                    storage_handles: c
                        .storage
                        .iter()
                        .filter_map(|(vsd, _)| by_resource.get(&format!("{}:{vsd}", c.id)).map(|(h, _)| h.clone()))
                        .collect(),
                    vim_ref: zone_ref
                        .as_ref()
                        .and_then(|z| self.inventory.vim_of(&z.pop))
                        .map(str::to_string),
                    zone_ref,
                }
            })
            .collect()
    }

    // ---- event loop ----

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn trace(&self) -> &EventTrace {
        &self.trace
    }

    pub fn inventory(&self) -> &Inventory<S> {
        &self.inventory
    }

    pub fn ns_info(&self) -> &NsInfo {
        &self.ns
    }

    pub fn vnf_infos(&self) -> &BTreeMap<String, VnfInfo> {
        &self.vnfs
    }

    pub fn operations(&self) -> &[ScalingOperation] {
        &self.operations
    }

    /// Processes the next event. Returns false once the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(((tick, _), event)) = self.queue.pop_first() else {
            return false;
        };
        self.tick = tick;
        match event {
            Event::Workload => self.workload(),
            Event::External(i) => self.external(i),
            Event::Deliver { src, dst, step, message } => {
                let payload = serde_json::to_value(&message).expect("messages serialize");
                self.record(src, dst, step, message.op_id().map(str::to_string), message.name(), payload);
                self.deliver(src, dst, message);
            }
        }
        true
    }

    fn next_tick(&self) -> Option<u64> {
        self.queue.keys().next().map(|(t, _)| *t)
    }

    /// Runs to completion, calling `observer` after every event.
    pub fn run_observed(&mut self, observer: &mut dyn FnMut(&Snapshot<'_, S>)) {
        loop {
            let before = self.trace.records.len();
            if !self.step() {
                break;
            }
            observer(&Snapshot {
                tick: self.tick,
                records: &self.trace.records[before..],
                inventory: &self.inventory,
                ns_info: &self.ns,
                vnf_infos: &self.vnfs,
                operations: &self.operations,
                busy: self.active.is_some(),
            });
        }
    }

    pub fn run(mut self) -> RunResult<S> {
        while self.step() {}
        self.finish()
    }

    /// Processes every event up to and including `tick`.
    pub fn run_until(&mut self, tick: u64) {
        while self.next_tick().is_some_and(|t| t <= tick) {
            self.step();
        }
    }

    pub fn finish(self) -> RunResult<S> {
        let failed = self.ns_operations.iter().any(|o| o.outcome == Outcome::Failed);
        RunResult {
            final_state: FinalState {
                outcome: if failed { RunOutcome::OperationFailed } else { RunOutcome::Completed },
                ns_info: self.ns,
                vnf_infos: self.vnfs,
                removed_vnf_infos: self.removed_vnfs,
                vl_instances: self.vls,
                capacity: self.inventory.capacity_report(),
                ns_operations: self.ns_operations,
                operations: self.operations,
            },
            trace: self.trace,
        }
    }

    /// What the DRPA makes of the NS at `tick`, judged from the samples of
    /// ticks up to `tick`. Leaves the engine's rule state untouched.
    pub fn explain_now(&self, tick: u64) -> Explanation<S> {
        let mut evaluator = self.evaluator.clone();
        let verdicts = evaluator.evaluate(&self.store, tick);
        let input = DrpaInput {
            verdicts: &verdicts,
            ns_info: &self.ns,
            vnf_infos: &self.vnfs,
            catalog: &self.catalog,
            inventory: &self.inventory,
        };
        let decision = decide(&input, &self.config);
        Explanation {
            tick,
            current_ns_il: self.ns.current_ns_il.clone(),
            busy: self.active.is_some(),
            decision,
            verdicts,
        }
    }

    // ---- workload ----

    fn running_capacity(&self, subject: &str) -> CapacityVector<S> {
        let mut total = CapacityVector::zero();
        for info in self.vnfs.values() {
            if subject != NS_SELF && info.vnfd_ref != subject {
                continue;
            }
            let vnfd = self.vnfd(&info.vnfd_ref);
            for c in info.vnfc_instances.iter().filter(|c| c.state == VnfcState::Started) {
                total += vdu_capacity::<S>(vnfd, &c.vdu_ref).expect("validated VDU");
            }
        }
        if subject == NS_SELF {
            for vl in self.vls.values() {
                total.bandwidth = total.bandwidth + S::of(vl.bitrate);
            }
        }
        total
    }

    fn monitoring_source(&self, subject: &str) -> ActorId {
        match self.vnfm_of.get(subject) {
            Some(i) => ActorId::vnfm(*i),
            None => ActorId::vim(1),
        }
    }

    fn workload(&mut self) {
        let t = self.tick;
        let nsd = self.catalog.nsd(&self.ns.nsd_ref).expect("validated").clone();
        let thresholds = self.scenario.rules.thresholds.clone();
        let dims = default_dimension_map();
        for load in self.scenario.workload.loads.clone() {
            let Some(demand) = value_at(&load.points, t) else { continue };
            let item = nsd.monitored_info.iter().find(|i| i.id == load.item).expect("validated item");
            let Some(dim) = load.dimension.or_else(|| dims.get(&item.name).copied()) else { continue };
            let cap = self.running_capacity(&item.subject).get(dim).to_f64();
            if cap <= 0.0 {
                continue;
            }
            let subjects = if item.subject == NS_SELF {
                vec![self.ns.ns_instance_id.clone()]
            } else {
                self.running_instances(&item.subject)
            };
            let src = self.monitoring_source(&item.subject);
            for subject in subjects {
                let mut util = demand / cap;
                if load.noise > 0.0 {
                    util += self.rng.gen_range(-load.noise..=load.noise);
                }
                let util = util.max(0.0);
                let key = StreamKey::new(&subject, &item.name);
                if !self.store.contains(&key) {
                    self.store.configure(
                        key,
                        StreamConfig {
                            collection_period: item.collection_period,
                            origin: src.to_string(),
                        },
                    );
                }
                let sample = MetricSample::new(t, &subject, &item.name, util);
                let notes = self.store.ingest_sample(sample, &thresholds).unwrap_or_default();
                for n in notes {
                    self.notify(src, n);
                }
            }
        }
        for ind in self.scenario.workload.indicators.clone() {
            let Some(value) = value_at(&ind.points, t) else { continue };
            if self.indicator_values.get(&ind.item) == Some(&value) {
                continue;
            }
            self.indicator_values.insert(ind.item.clone(), value);
            let item = nsd.monitored_info.iter().find(|i| i.id == ind.item).expect("validated item");
            let vnfd = self.vnfd(&item.subject).clone();
            let Some(&index) = self.vnfm_of.get(&vnfd.id) else { continue };
            for instance in self.running_instances(&vnfd.id) {
                let em = ActorId::em(index);
                let Ok(n) = indicator_change(&vnfd, &instance, &item.name, value, t, &em.to_string()) else {
                    continue;
                };
                let sample = MetricSample::new(t, &instance, &item.name, value);
                let crossings = self.store.ingest_sample(sample, &thresholds).unwrap_or_default();
                self.notify(em, n);
                for c in crossings {
                    self.notify(ActorId::vnfm(index), c);
                }
            }
        }
    }

    fn notify(&mut self, src: ActorId, n: Notification) {
        let time = n.time;
        match n.kind {
            NotificationKind::PerfInfoAvailable { subject, name, samples } => self.send(
                src,
                ActorId::NFVO,
                Some(1),
                Message::PerfInfoAvailable { subject, name, time, samples },
            ),
            NotificationKind::ThresholdCrossed { threshold_id, subject, metric, value } => self.send(
                src,
                ActorId::NFVO,
                Some(2),
                Message::ThresholdCrossed { threshold_id, subject, metric, time, value },
            ),
            NotificationKind::VnfIndicatorChange { vnf_instance, name, value } => {
                let index = self
                    .vnfs
                    .get(&vnf_instance)
                    .and_then(|v| self.vnfm_of.get(&v.vnfd_ref))
                    .copied()
                    .unwrap_or(1);
                self.send(
                    src,
                    ActorId::vnfm(index),
                    Some(3),
                    Message::VnfIndicatorNotify { vnf_instance, name, time, value },
                )
            }
        }
    }

    fn external(&mut self, index: usize) {
        let event = self.scenario.workload.events[index].clone();
        let o = &event.occupy;
        let zone = ZoneRef::new(&o.pop, &o.zone);
        let spec = CapacityVector::new(
            S::of(o.spec.vcpu),
            S::of(o.spec.memory),
            S::of(o.spec.storage),
            S::of(o.spec.bandwidth),
        );
        let mut taken = Vec::new();
        let mut errors = Vec::new();
        for kind in ResourceKind::ALL {
            let part = spec.restrict(kind);
            if part.is_zero() {
                continue;
            }
            let item = AllocationItem {
                spec: part,
                resource: "external".to_string(),
                labels: BTreeSet::new(),
            };
            match self.inventory.allocate(&zone, kind, item, None) {
                Ok(h) => taken.push(h.id),
                Err(e) => errors.push(e.to_string()),
            }
        }
        let vim = self.vim_actor(&o.pop);
        let payload = serde_json::json!({ "zone": zone.to_string(), "handles": taken, "errors": errors });
        self.record(vim, vim, None, None, "ExternalLoad", payload);
    }

    // ---- dispatch ----

    fn job_ref(&self) -> Option<&Job<S>> {
        self.active.as_ref().and_then(|a| a.current.as_ref())
    }

    fn job(&mut self) -> &mut Job<S> {
        self.active
            .as_mut()
            .and_then(|a| a.current.as_mut())
            .expect("an operation is open")
    }

    fn is_current(&self, op_id: Option<&str>) -> bool {
        op_id.is_some() && self.job_ref().map(|j| j.op_id.as_str()) == op_id
    }

    fn deliver(&mut self, src: ActorId, dst: ActorId, message: Message<S>) {
        if message.op_id().is_some() && !self.is_current(message.op_id()) {
            return;
        }
        match (dst.kind, message) {
            (ActorKind::Nfvo, Message::PerfInfoAvailable { time, .. })
            | (ActorKind::Nfvo, Message::ThresholdCrossed { time, .. })
            | (ActorKind::Nfvo, Message::VnfIndicatorNotify { time, .. }) => self.maybe_decide(time),
            (ActorKind::Vnfm, m @ Message::VnfIndicatorNotify { .. }) => self.send(dst, ActorId::NFVO, Some(3), m),
            (ActorKind::Vnfm, Message::ScaleVnfToLevelRequest { op_id, .. }) => self.vnfm_scale_request(dst, op_id),
            (ActorKind::Nfvo, Message::GrantRequest { intent: GrantIntent::Allocate, vdu_ids, internal_vl_ids, .. }) => {
                self.nfvo_allocation_grant(src, vdu_ids, internal_vl_ids)
            }
            (ActorKind::Nfvo, Message::GrantRequest { intent: GrantIntent::Release, op_id, .. }) => self.send(
                ActorId::NFVO,
                src,
                Some(20),
                Message::GrantResponse {
                    op_id,
                    granted: true,
                    reason: None,
                    reservation_ids: None,
                    vim_connectivity: None,
                    placement: BTreeMap::new(),
                },
            ),
            (ActorKind::Vim, Message::ReserveRequest { op_id, kind, spec, placement_constraints }) => {
                self.vim_reserve(src, dst, op_id, kind, spec, placement_constraints)
            }
            (ActorKind::Nfvo, Message::ReserveResponse { reservation_id, error, .. }) => {
                self.nfvo_reserve_response(reservation_id, error)
            }
            (_, Message::GrantResponse { granted, reason, reservation_ids, placement, .. }) => {
                self.on_grant_response(granted, reason, reservation_ids, placement)
            }
            (ActorKind::Vim, Message::AllocateRequest { op_id, reservation_id, kind, pop, items, .. }) => {
                self.vim_allocate(src, dst, op_id, reservation_id, kind, pop, items)
            }
            (_, Message::AllocateResponse { handles, error, .. }) => self.on_allocate_response(handles, error),
            (ActorKind::Nfvo, Message::VnfInfoUpdate { step, vnf_instance, changes, .. }) => {
                self.nfvo_vnf_info_update(step, vnf_instance, changes)
            }
            (ActorKind::Nfvo, Message::OperateVnfRequest { op_id, target_state }) => {
                let step = if target_state == VnfcState::Started { 17 } else { 22 };
                self.send(ActorId::NFVO, src, Some(step), Message::OperateVnfGrant { op_id, target_state });
            }
            (ActorKind::Vnfm, Message::OperateVnfGrant { target_state, .. }) => self.vnfm_operate_granted(target_state),
            (ActorKind::Vim, Message::ReleaseRequest { op_id, handles, retain }) => {
                self.vim_release(src, dst, op_id, handles, retain)
            }
            (_, Message::ReleaseResponse { .. }) => self.on_release_response(),
            // Responses and configuration messages need no handling.
            _ => {}
        }
    }

    // ---- NFVO ----

    fn maybe_decide(&mut self, time: u64) {
        if self.active.is_some() || self.ns.state != NsState::Instantiated {
            return;
        }
        if self.last_evaluation.is_some_and(|t| t >= time) {
            return;
        }
        self.last_evaluation = Some(time);
        let verdicts = self.evaluator.evaluate(&self.store, time);
        if !verdicts.iter().any(RuleVerdict::is_violated) {
            return;
        }
        let input = DrpaInput {
            verdicts: &verdicts,
            ns_info: &self.ns,
            vnf_infos: &self.vnfs,
            catalog: &self.catalog,
            inventory: &self.inventory,
        };
        let result = decide(&input, &self.config);
        let triggered: Vec<&str> = verdicts
            .iter()
            .filter(|v| v.is_violated())
            .map(|v| v.rule_id.as_str())
            .collect();
        let summary = match &result {
            Ok(d) => DecideSummary {
                time,
                triggered_by: d.triggered_by.iter().map(String::as_str).collect(),
                current_ns_il: &d.current_ns_il,
                target_ns_il: d.target_ns_il.as_deref(),
                classification: (d.action == Action::Scale).then_some(d.classification),
                selected_vims: d.selected_vims.iter().map(String::as_str).collect(),
                error: None,
            },
            Err(e) => DecideSummary {
                time,
                triggered_by: triggered,
                current_ns_il: &self.ns.current_ns_il,
                target_ns_il: None,
                classification: None,
                selected_vims: Vec::new(),
                error: Some(e.to_string()),
            },
        };
        let payload = serde_json::to_value(&summary).expect("summary serializes");
        self.record(ActorId::NFVO, ActorId::NFVO, Some(4), None, "Decide", payload);
        if let Ok(d) = result {
            if d.action == Action::Scale {
                self.start_ns_operation(d);
            }
        }
    }

    fn start_ns_operation(&mut self, d: DrpaDecision<S>) {
        let target = d.target_ns_il.clone().expect("scale decisions carry a target");
        let flavor = self.flavor().clone();
        let delta = ns_il_delta::<S>(&self.catalog, &flavor, &self.ns.current_ns_il, &target)
            .expect("decision levels exist");
        let mut growing = Vec::new();
        let mut shrinking = Vec::new();
        for pd in &delta.profiles {
            let from_il = pd.from_il().map(str::to_string);
            let to_il = pd.to_il().map(str::to_string);
            let mut push = |kind, instance: &String, from: Option<String>, to: Option<String>| {
                let additions: Vec<Addition<S>> = d
                    .additions
                    .iter()
                    .filter(|a| a.vnf_instance.as_ref() == Some(instance))
                    .cloned()
                    .collect();
                let plan = JobPlan {
                    kind,
                    vnf_instance: Some(instance.clone()),
                    profile: Some(pd.profile.clone()),
                    from_il: from,
                    to_il: to,
                    placement: additions
                        .iter()
                        .filter_map(|a| d.placement.get(&a.id).map(|p| (a.id.clone(), p.clone())))
                        .collect(),
                    additions,
                    vl_changes: Vec::new(),
                };
                if plan.additions.is_empty() {
                    shrinking.push(plan);
                } else {
                    growing.push(plan);
                }
            };
            if from_il != to_il {
                for id in d.instances.rescaled.get(&pd.profile).into_iter().flatten() {
                    push(OperationKind::ScaleVnf, id, from_il.clone(), to_il.clone());
                }
            }
            for id in d.instances.created.get(&pd.profile).into_iter().flatten() {
                push(OperationKind::AddVnf, id, None, to_il.clone());
            }
            for id in d.instances.deleted.get(&pd.profile).into_iter().flatten() {
                let current = self.vnfs.get(id).and_then(|v| v.current_vnf_il.clone());
                push(OperationKind::RemoveVnf, id, current, None);
            }
        }
        let mut jobs: VecDeque<JobPlan<S>> = growing.into_iter().chain(shrinking).collect();
        let vl_growth: Vec<Addition<S>> = d.additions.iter().filter(|a| a.vl_profile.is_some()).cloned().collect();
        if !delta.vls.is_empty() {
            if jobs.is_empty() {
                jobs.push_back(JobPlan {
                    kind: OperationKind::ModifyVl,
                    vnf_instance: None,
                    profile: None,
                    from_il: None,
                    to_il: None,
                    additions: Vec::new(),
                    vl_changes: Vec::new(),
                    placement: BTreeMap::new(),
                });
            }
            let first = jobs.front_mut().expect("at least one job");
            for a in &vl_growth {
                if let Some(p) = d.placement.get(&a.id) {
                    first.placement.insert(a.id.clone(), p.clone());
                }
            }
            first.additions.extend(vl_growth);
            first.vl_changes = delta.vls.clone();
        }
        self.ns.state = NsState::Scaling;
        self.ns_operations.push(NsOperation {
            id: format!("nsop-{}", self.ns_operations.len() + 1),
            tick: self.tick,
            from_ns_il: self.ns.current_ns_il.clone(),
            to_ns_il: target.clone(),
            classification: d.classification,
            operations: Vec::new(),
            outcome: Outcome::InProgress,
        });
        self.active = Some(ActiveNsOp {
            index: self.ns_operations.len() - 1,
            target,
            jobs,
            current: None,
            done: Vec::new(),
            compensating: false,
        });
        self.start_next_job();
    }

    fn start_next_job(&mut self) {
        let active = self.active.as_mut().expect("an NS operation is open");
        let Some(mut plan) = active.jobs.pop_front() else {
            let success = !active.compensating;
            self.finish_ns_operation(success, true);
            return;
        };
        let mut unplaced = None;
        if active.compensating && !plan.additions.is_empty() {
            match plan_placement(&plan.additions, &self.inventory) {
                Ok(p) => plan.placement = p.assignments,
                Err(e) => unplaced = Some(e.to_string()),
            }
        }
        let op_id = format!("op-{}", self.operations.len() + 1);
        let ns_op = &mut self.ns_operations[active.index];
        ns_op.operations.push(op_id.clone());
        let vnfm = plan
            .vnf_instance
            .as_ref()
            .and_then(|_| self.flavor().vnf_profile(plan.profile.as_deref().unwrap_or_default()))
            .map(|p| self.vnfm_of[&p.vnfd_ref]);
        self.operations.push(ScalingOperation {
            op_id: op_id.clone(),
            ns_operation: self.ns_operations[self.active.as_ref().unwrap().index].id.clone(),
            kind: plan.kind,
            vnf_instance: plan.vnf_instance.clone(),
            from_vnf_il: plan.from_il.clone(),
            to_vnf_il: plan.to_il.clone(),
            phase: OperationPhase::Triggered,
            phases: vec![OperationPhase::Collecting, OperationPhase::Triggered],
            step_log: Vec::new(),
            failure: None,
            closed_at: None,
        });
        let job = Job {
            op_id: op_id.clone(),
            op_index: self.operations.len() - 1,
            driver: vnfm.map_or(ActorId::NFVO, ActorId::vnfm),
            em: vnfm.map(ActorId::em),
            new_vnfcs: Vec::new(),
            removed: Vec::new(),
            peers: Vec::new(),
            awaiting: 0,
            errors: Vec::new(),
            reservations: Vec::new(),
            handles: Vec::new(),
            grant: None,
            final_step: None,
            plan,
        };
        let driver = job.driver;
        let request = job.plan.vnf_instance.clone().map(|instance| Message::ScaleVnfToLevelRequest {
            op: job.plan.kind,
            op_id: op_id.clone(),
            vnf_instance: instance,
            new_vnf_il: job.plan.to_il.clone(),
        });
        self.active.as_mut().unwrap().current = Some(job);
        if let Some(reason) = unplaced {
            return self.fail_job(reason);
        }
        match request {
            Some(m) => self.send(ActorId::NFVO, driver, Some(5), m),
            None => self.advance_after_step5(),
        }
    }

    fn set_phase(&mut self, phase: OperationPhase) {
        let index = self.job().op_index;
        let op = &mut self.operations[index];
        op.phase = phase;
        if op.phases.last() != Some(&phase) {
            op.phases.push(phase);
        }
    }

    fn close_operation(&mut self) {
        let index = self.job().op_index;
        self.operations[index].closed_at = Some(self.trace.records.len() as u64);
    }

    fn nfvo_allocation_grant(&mut self, vnfm: ActorId, vdu_ids: Vec<String>, vl_ids: Vec<String>) {
        let job = self.job_ref().expect("open operation").clone();
        let internal: Vec<String> = job
            .plan
            .profile
            .as_deref()
            .and_then(|p| self.flavor().vnf_profile(p))
            .map(|p| self.vnfd(&p.vnfd_ref).internal_vlds.iter().map(|v| v.id.clone()).collect())
            .unwrap_or_default();
        if let Err(reason) = grant_check(
            &job.plan.additions,
            &job.plan.placement,
            &vdu_ids,
            &vl_ids,
            &internal,
            &self.inventory,
        ) {
            self.deny_grant(vnfm, reason);
            return;
        }
        if self.reservation {
            self.send_reservations();
        } else {
            self.grant_allocation(None);
        }
    }

    fn deny_grant(&mut self, vnfm: ActorId, reason: String) {
        let op_id = self.job().op_id.clone();
        self.send(
            ActorId::NFVO,
            vnfm,
            Some(10),
            Message::GrantResponse {
                op_id,
                granted: false,
                reason: Some(reason),
                reservation_ids: None,
                vim_connectivity: None,
                placement: BTreeMap::new(),
            },
        );
    }

    fn send_reservations(&mut self) {
        let job = self.job_ref().expect("open operation").clone();
        let vl: Vec<Addition<S>> = job.vl_growth().cloned().collect();
        let batches = match Self::batches(&job.new_vnfcs, &vl, &job.plan.placement) {
            Ok(b) => b,
            Err(e) => return self.fail_job(e),
        };
        let mut requests = Vec::new();
        for ((pop, kind), items) in batches {
            let mut spec = CapacityVector::zero();
            let mut labels = BTreeSet::new();
            for i in &items {
                spec += i.spec;
                labels.extend(i.labels.iter().cloned());
            }
            if spec.is_zero() {
                continue;
            }
            let vim = self.vim_actor(&pop);
            requests.push((vim, pop, kind, spec, labels));
        }
        requests.sort_by(|a, b| (a.0, &a.1, a.2).cmp(&(b.0, &b.1, b.2)));
        if requests.is_empty() {
            return self.reservations_done();
        }
        let op_id = job.op_id.clone();
        self.job().awaiting = requests.len();
        for (vim, pop, kind, spec, labels) in requests {
            self.send(
                ActorId::NFVO,
                vim,
                Some(7),
                Message::ReserveRequest {
                    op_id: op_id.clone(),
                    kind,
                    spec,
                    placement_constraints: PlacementHint { pop, labels },
                },
            );
        }
    }

    fn vim_reserve(
        &mut self,
        nfvo: ActorId,
        vim: ActorId,
        op_id: String,
        kind: ResourceKind,
        spec: CapacityVector<S>,
        hint: PlacementHint,
    ) {
        let zone = vim_placement(&self.zone_views(&hint.pop), &spec, &hint.labels);
        self.action(
            vim,
            Some(8),
            "Placement",
            serde_json::json!({ "pop": hint.pop, "kind": kind, "zone": zone }),
        );
        let result = match zone {
            Some(z) => self
                .inventory
                .reserve(&ZoneRef::new(&hint.pop, &z), spec, kind, hint.labels.clone())
                .map(|r| r.id)
                .map_err(|e| e.to_string()),
            None => Err(format!("no zone of `{}` fits the {kind} reservation", hint.pop)),
        };
        let (reservation_id, error) = match result {
            Ok(id) => (Some(id), None),
            Err(e) => (None, Some(e)),
        };
        self.send(vim, nfvo, Some(9), Message::ReserveResponse { op_id, reservation_id, error });
    }

    fn nfvo_reserve_response(&mut self, reservation_id: Option<String>, error: Option<String>) {
        if let Some(id) = reservation_id {
            let res = self.inventory.reservations[&id].clone();
            let vim = self.inventory.vim_of(&res.zone_ref.pop).unwrap_or_default().to_string();
            self.job().reservations.push(ReservationGrant {
                reservation_id: id,
                vim,
                pop: res.zone_ref.pop.clone(),
                kind: res.kind,
            });
        }
        let job = self.job();
        job.errors.extend(error);
        job.awaiting -= 1;
        if job.awaiting == 0 {
            self.reservations_done();
        }
    }

    fn cancel_reservations(&mut self) -> Vec<String> {
        let ids: Vec<String> = self.job().reservations.iter().map(|r| r.reservation_id.clone()).collect();
        let mut cancelled = Vec::new();
        for id in ids {
            if self.inventory.reservations.get(&id).is_some_and(|r| r.state == ReservationState::Active)
                && self.inventory.cancel_reservation(&id).is_ok()
            {
                cancelled.push(id);
            }
        }
        cancelled
    }

    fn reservations_done(&mut self) {
        let job = self.job_ref().expect("open operation");
        let driver = job.driver;
        if !job.errors.is_empty() {
            let reason = job.errors.join("; ");
            let cancelled = self.cancel_reservations();
            self.action(ActorId::NFVO, None, "Rollback", serde_json::json!({ "cancelled": cancelled }));
            if driver == ActorId::NFVO {
                return self.fail_job(reason);
            }
            self.job().errors.clear();
            return self.deny_grant(driver, reason);
        }
        let grants = self.job_ref().unwrap().reservations.clone();
        if driver == ActorId::NFVO {
            self.send_allocations(Some(grants));
        } else {
            self.grant_allocation(Some(grants));
        }
    }

    fn grant_allocation(&mut self, reservations: Option<Vec<ReservationGrant>>) {
        let job = self.job_ref().expect("open operation").clone();
        let mut vims: BTreeSet<&str> = BTreeSet::new();
        for pop in job.plan.placement.values() {
            vims.extend(self.inventory.vim_of(pop));
        }
        let connectivity = vims.into_iter().map(|v| (v.to_string(), format!("{v}.nfvi.local"))).collect();
        self.send(
            ActorId::NFVO,
            job.driver,
            Some(10),
            Message::GrantResponse {
                op_id: job.op_id,
                granted: true,
                reason: None,
                reservation_ids: reservations,
                vim_connectivity: Some(connectivity),
                placement: job.plan.placement,
            },
        );
    }

    fn nfvo_vnf_info_update(&mut self, step: u8, vnf_instance: String, changes: Vec<VnfInfoChange>) {
        let job = self.job_ref().expect("open operation").clone();
        let info = match self.vnfs.get(&vnf_instance) {
            Some(i) => i.clone(),
            None => {
                let profile = job.plan.profile.as_deref().unwrap_or_default();
                let p = self.flavor().vnf_profile(profile).expect("validated profile").clone();
                VnfInfo::new(&vnf_instance, &p.vnfd_ref, &p.vnf_flavor_ref, &p.id)
            }
        };
        match record_vnf_info_update(&info, &changes, AuditSource::Step(step), self.tick) {
            Ok(next) => {
                self.vnfs.insert(vnf_instance.clone(), next);
            }
            Err(e) => return self.fail_job(format!("VNF Info update at step {step}: {e}")),
        }
        if job.final_step == Some(step) {
            if job.plan.kind == OperationKind::RemoveVnf {
                if let Some(info) = self.vnfs.remove(&vnf_instance) {
                    self.removed_vnfs.push(info);
                }
            }
            self.complete_job();
        }
    }

    fn complete_job(&mut self) {
        self.set_phase(OperationPhase::Completed);
        self.close_operation();
        let active = self.active.as_mut().unwrap();
        if let Some(job) = active.current.take() {
            if !active.compensating {
                active.done.push(job.plan);
            }
        }
        self.ns.vnf_instance_refs = self.vnfs.keys().cloned().collect();
        self.sync_evaluator();
        self.start_next_job();
    }

    /// Closes the NS operation. `consistent` is false when the deployment
    /// no longer matches any NS-IL; the NS then stays in `Scaling` so no
    /// further decision builds on it.
    fn finish_ns_operation(&mut self, success: bool, consistent: bool) {
        let active = self.active.take().expect("an NS operation is open");
        let op = &mut self.ns_operations[active.index];
        op.outcome = if success { Outcome::Completed } else { Outcome::Failed };
        if success {
            self.ns.current_ns_il = active.target;
        }
        self.ns.state = if consistent { NsState::Instantiated } else { NsState::Scaling };
        self.ns.vnf_instance_refs = self.vnfs.keys().cloned().collect();
        self.ns.vl_instance_refs = self.vls.values().filter(|v| !v.handles.is_empty()).map(|v| v.id.clone()).collect();
        self.sync_evaluator();
    }

    fn fail_job(&mut self, reason: String) {
        let driver = self.job().driver;
        let cancelled = self.cancel_reservations();
        let handles = std::mem::take(&mut self.job().handles);
        let mut released = Vec::new();
        let mut resources = Vec::new();
        for h in handles {
            if let Ok(handle) = self.inventory.release(&h) {
                resources.push(handle.resource);
                released.push(h);
            }
        }
        self.sync_vls_of(resources);
        if !cancelled.is_empty() || !released.is_empty() {
            self.action(
                driver,
                None,
                "Rollback",
                serde_json::json!({ "cancelled": cancelled, "released": released }),
            );
        }
        self.action(driver, None, "OperationFailed", serde_json::json!({ "reason": reason }));
        let index = self.job().op_index;
        self.set_phase(OperationPhase::Failed);
        self.close_operation();
        self.operations[index].failure = Some(reason);
        let active = self.active.as_mut().unwrap();
        active.current = None;
        active.jobs.clear();
        if active.compensating {
            self.action(ActorId::NFVO, None, "CompensationFailed", serde_json::json!({}));
            return self.finish_ns_operation(false, false);
        }
        let done = std::mem::take(&mut active.done);
        if done.is_empty() {
            return self.finish_ns_operation(false, true);
        }
        match self.compensation(&done) {
            Ok(plans) => {
                let undo: Vec<serde_json::Value> = plans
                    .iter()
                    .map(|p| {
                        serde_json::json!({
                            "kind": p.kind,
                            "vnf_instance": p.vnf_instance,
                            "from": p.from_il,
                            "to": p.to_il,
                        })
                    })
                    .collect();
                self.action(ActorId::NFVO, None, "Compensate", serde_json::json!({ "jobs": undo }));
                let active = self.active.as_mut().unwrap();
                active.jobs = plans.into();
                active.compensating = true;
                self.start_next_job();
            }
            Err(reason) => {
                self.action(ActorId::NFVO, None, "CompensationFailed", serde_json::json!({ "reason": reason }));
                self.finish_ns_operation(false, false);
            }
        }
    }

    /// Jobs undoing `done`, last job first. Their growth is placed when each
    /// one starts.
    fn compensation(&self, done: &[JobPlan<S>]) -> Result<Vec<JobPlan<S>>, String> {
        let mut out = Vec::new();
        for plan in done.iter().rev() {
            let (kind, from_il, to_il) = match plan.kind {
                OperationKind::AddVnf => (OperationKind::RemoveVnf, plan.to_il.clone(), None),
                OperationKind::RemoveVnf => (OperationKind::AddVnf, None, plan.from_il.clone()),
                k => (k, plan.to_il.clone(), plan.from_il.clone()),
            };
            let mut additions = Vec::new();
            if let (Some(instance), Some(profile)) = (&plan.vnf_instance, &plan.profile) {
                let profile = self.flavor().vnf_profile(profile).ok_or("unknown VNF profile")?;
                let (vnfd, vf) = self.catalog.profile_target(profile).map_err(|e| e.to_string())?;
                let d = counts_delta_for::<S>(vnfd, vf, from_il.as_deref(), to_il.as_deref())
                    .map_err(|e| e.to_string())?;
                for (vdu, &n) in &d.add {
                    let spec = vdu_capacity::<S>(vnfd, vdu).map_err(|e| e.to_string())?;
                    for k in 1..=n {
                        additions.push(Addition {
                            id: format!("{instance}/{vdu}#{k}"),
                            vnf_instance: Some(instance.clone()),
                            vdu: Some(vdu.clone()),
                            vl_profile: None,
                            spec,
                            labels: self.config.constraints.labels_for(&vnfd.id, vdu),
                        });
                    }
                }
            }
            let vl_changes: Vec<VlChange> = plan
                .vl_changes
                .iter()
                .map(|c| VlChange { profile: c.profile.clone(), from: c.to, to: c.from })
                .collect();
            for c in vl_changes.iter().filter(|c| c.to > c.from) {
                additions.push(Addition {
                    id: format!("vl:{}", c.profile),
                    vnf_instance: None,
                    vdu: None,
                    vl_profile: Some(c.profile.clone()),
                    spec: CapacityVector::zero().with(Dimension::Bandwidth, S::of(c.to) - S::of(c.from)),
                    labels: BTreeSet::new(),
                });
            }
            out.push(JobPlan {
                kind,
                vnf_instance: plan.vnf_instance.clone(),
                profile: plan.profile.clone(),
                from_il,
                to_il,
                additions,
                vl_changes,
                placement: BTreeMap::new(),
            });
        }
        Ok(out)
    }

    // ---- VNFM ----

    fn vnfm_scale_request(&mut self, vnfm: ActorId, op_id: String) {
        self.send(vnfm, ActorId::NFVO, Some(5), Message::ScaleVnfToLevelResponse { op_id });
        let job = self.job_ref().expect("open operation").clone();
        let instance = job.plan.vnf_instance.clone().expect("VNF job");
        let profile = self
            .flavor()
            .vnf_profile(job.plan.profile.as_deref().unwrap_or_default())
            .expect("validated profile")
            .clone();
        let (vnfd, vf) = self.catalog.profile_target(&profile).expect("validated profile");
        let delta = match counts_delta_for::<S>(vnfd, vf, job.plan.from_il.as_deref(), job.plan.to_il.as_deref()) {
            Ok(d) => d,
            Err(e) => return self.fail_job(e.to_string()),
        };
        let info = self.vnfs.get(&instance);
        let first = info.map_or(1, |i| i.next_ordinal);
        let new_vnfcs = self.planned_vnfcs(vnfd, &instance, &delta.add, first);
        let mut removed = Vec::new();
        if let Some(info) = info {
            for (vdu, &n) in &delta.remove {
                removed.extend(info.removal_candidates(vdu, n as usize).iter().map(|c| c.id.clone()));
            }
        }
        let peers = match info {
            Some(info) if !vnfd.internal_vlds.is_empty() => info
                .vnfc_instances
                .iter()
                .filter(|c| c.state == VnfcState::Started && !removed.contains(&c.id))
                .map(|c| c.id.clone())
                .collect(),
            _ => Vec::new(),
        };
        let j = self.job();
        j.new_vnfcs = new_vnfcs;
        j.removed = removed;
        j.peers = peers;
        self.advance_after_step5();
    }

    fn advance_after_step5(&mut self) {
        let job = self.job_ref().expect("open operation").clone();
        if job.has_allocation() {
            self.set_phase(OperationPhase::Reservation);
            if job.driver == ActorId::NFVO {
                if self.reservation {
                    self.send_reservations();
                } else {
                    self.send_allocations(None);
                }
                return;
            }
            let mut vdu_ids: Vec<String> = job.new_vnfcs.iter().map(|c| c.vdu.clone()).collect();
            vdu_ids.sort();
            let mut vl_ids: Vec<String> = job.vl_growth().filter_map(|a| a.vl_profile.clone()).collect();
            if job.plan.kind == OperationKind::AddVnf {
                if let Some(p) = job.plan.profile.as_deref().and_then(|p| self.flavor().vnf_profile(p)) {
                    vl_ids.extend(self.vnfd(&p.vnfd_ref).internal_vlds.iter().map(|v| v.id.clone()));
                }
            }
            self.job().grant = Some(GrantIntent::Allocate);
            self.send(
                job.driver,
                ActorId::NFVO,
                Some(6),
                Message::GrantRequest {
                    op_id: job.op_id,
                    vdu_ids,
                    internal_vl_ids: vl_ids,
                    intent: GrantIntent::Allocate,
                },
            );
        } else if job.has_release() {
            self.begin_release();
        } else {
            self.finish_vnf_job(19, Vec::new());
        }
    }

    fn on_grant_response(
        &mut self,
        granted: bool,
        reason: Option<String>,
        reservations: Option<Vec<ReservationGrant>>,
        placement: BTreeMap<String, String>,
    ) {
        let intent = self.job().grant.take();
        if !granted {
            return self.fail_job(reason.unwrap_or_else(|| "grant denied".to_string()));
        }
        match intent {
            Some(GrantIntent::Allocate) => {
                self.job().plan.placement = placement;
                self.send_allocations(reservations);
            }
            Some(GrantIntent::Release) => {
                if self.job().removed.is_empty() {
                    self.send_releases();
                } else {
                    let job = self.job_ref().unwrap();
                    let (driver, op_id) = (job.driver, job.op_id.clone());
                    self.send(
                        driver,
                        ActorId::NFVO,
                        Some(21),
                        Message::OperateVnfRequest { op_id, target_state: VnfcState::Stopped },
                    );
                }
            }
            None => {}
        }
    }

    fn send_allocations(&mut self, reservations: Option<Vec<ReservationGrant>>) {
        self.set_phase(OperationPhase::Creation);
        let job = self.job_ref().expect("open operation").clone();
        let vl: Vec<Addition<S>> = job.vl_growth().cloned().collect();
        let batches = match Self::batches(&job.new_vnfcs, &vl, &job.plan.placement) {
            Ok(b) => b,
            Err(e) => return self.fail_job(e),
        };
        let mut requests = Vec::new();
        for ((pop, kind), items) in batches {
            let mut spec = CapacityVector::zero();
            for i in &items {
                spec += i.spec;
            }
            let reservation_id = match &reservations {
                Some(grants) if !spec.is_zero() => {
                    match grants.iter().find(|g| g.pop == pop && g.kind == kind) {
                        Some(g) => Some(g.reservation_id.clone()),
                        None => return self.fail_job(format!("no {kind} reservation for `{pop}`")),
                    }
                }
                _ => None,
            };
            let vim = self.vim_actor(&pop);
            requests.push((
                vim,
                Message::AllocateRequest {
                    op_id: job.op_id.clone(),
                    spec: reservation_id.is_none().then_some(spec),
                    reservation_id,
                    kind,
                    pop,
                    items,
                },
            ));
        }
        if requests.is_empty() {
            return self.after_allocation();
        }
        self.job().awaiting = requests.len();
        for (vim, m) in requests {
            self.send(job.driver, vim, Some(11), m);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn vim_allocate(
        &mut self,
        requester: ActorId,
        vim: ActorId,
        op_id: String,
        reservation_id: Option<String>,
        kind: ResourceKind,
        pop: String,
        items: Vec<AllocationItem<S>>,
    ) {
        let resources: Vec<String> = items.iter().map(|i| i.resource.clone()).collect();
        let result = match &reservation_id {
            Some(id) => self
                .inventory
                .allocate_many(id, items)
                .map(|hs| hs.into_iter().map(|h| h.id).collect())
                .map_err(|e| e.to_string()),
            None => {
                let r = self.allocate_batch(&pop, kind, &items);
                let zone = r.as_ref().ok().map(|(z, _)| z.clone());
                self.action(vim, Some(12), "Placement", serde_json::json!({ "pop": pop, "kind": kind, "zone": zone }));
                r.map(|(_, hs)| hs)
            }
        };
        let (handles, error) = match result {
            Ok(hs) => (hs, None),
            Err(e) => (Vec::new(), Some(e)),
        };
        self.sync_vls_of(resources);
        self.action(
            vim,
            Some(12),
            "Allocate",
            serde_json::json!({ "vim": self.vim_name(vim), "handles": handles, "error": error }),
        );
        self.send(vim, requester, Some(13), Message::AllocateResponse { op_id, handles, error });
    }

    fn on_allocate_response(&mut self, handles: Vec<String>, error: Option<String>) {
        let job = self.job();
        job.handles.extend(handles);
        job.errors.extend(error);
        job.awaiting -= 1;
        if job.awaiting > 0 {
            return;
        }
        if !job.errors.is_empty() {
            let reason = job.errors.join("; ");
            return self.fail_job(reason);
        }
        self.after_allocation();
    }

    fn after_allocation(&mut self) {
        let job = self.job_ref().expect("open operation").clone();
        if job.new_vnfcs.is_empty() {
            return if job.has_release() {
                self.begin_release()
            } else {
                self.finish_vnf_job(19, Vec::new())
            };
        }
        let by_resource: BTreeMap<String, (String, ZoneRef)> = job
            .handles
            .iter()
            .filter_map(|h| self.inventory.handle(h))
            .map(|h| (h.resource.clone(), (h.id.clone(), h.zone_ref.clone())))
            .collect();
        let new = self.new_vnfc_records(&job.new_vnfcs, &by_resource);
        let ids: Vec<String> = job.new_vnfcs.iter().map(|c| c.id.clone()).collect();
        let instance = job.plan.vnf_instance.clone().expect("VNF job");
        let em = job.em.expect("VNF jobs have an EM");
        self.send(job.driver, em, Some(14), Message::ConfigureVnfc { op_id: job.op_id.clone(), instance_ids: ids });
        self.send(
            job.driver,
            ActorId::NFVO,
            Some(15),
            Message::VnfInfoUpdate {
                op_id: job.op_id.clone(),
                step: 15,
                vnf_instance: instance,
                changes: vec![VnfInfoChange::AddInstancesStopped { instances: new }],
            },
        );
        self.set_phase(OperationPhase::Starting);
        self.send(
            job.driver,
            ActorId::NFVO,
            Some(16),
            Message::OperateVnfRequest { op_id: job.op_id, target_state: VnfcState::Started },
        );
    }

    fn vnfm_operate_granted(&mut self, target: VnfcState) {
        let job = self.job_ref().expect("open operation").clone();
        let em = job.em.expect("VNF jobs have an EM");
        let op_id = job.op_id.clone();
        match target {
            VnfcState::Started => {
                let ids: Vec<String> = job.new_vnfcs.iter().map(|c| c.id.clone()).collect();
                self.send(
                    job.driver,
                    em,
                    Some(18),
                    Message::AppConfigure { op_id: op_id.clone(), instance_ids: ids.clone(), action: AppAction::Configure },
                );
                if !job.peers.is_empty() {
                    self.send(
                        job.driver,
                        em,
                        Some(18),
                        Message::AppConfigure {
                            op_id: op_id.clone(),
                            instance_ids: job.peers.clone(),
                            action: AppAction::Reconfigure,
                        },
                    );
                }
                let started = VnfInfoChange::MarkStarted { ids };
                if job.has_release() {
                    self.send(
                        job.driver,
                        ActorId::NFVO,
                        Some(19),
                        Message::VnfInfoUpdate {
                            op_id,
                            step: 19,
                            vnf_instance: job.plan.vnf_instance.clone().unwrap_or_default(),
                            changes: vec![started],
                        },
                    );
                    self.begin_release();
                } else {
                    self.finish_vnf_job(19, vec![started]);
                }
            }
            VnfcState::Stopped => {
                if !job.peers.is_empty() {
                    self.send(
                        job.driver,
                        em,
                        Some(23),
                        Message::AppConfigure {
                            op_id: op_id.clone(),
                            instance_ids: job.peers.clone(),
                            action: AppAction::Reconfigure,
                        },
                    );
                }
                self.send(
                    job.driver,
                    em,
                    Some(23),
                    Message::AppConfigure {
                        op_id: op_id.clone(),
                        instance_ids: job.removed.clone(),
                        action: AppAction::Shutdown,
                    },
                );
                self.send(
                    job.driver,
                    ActorId::NFVO,
                    Some(24),
                    Message::VnfInfoUpdate {
                        op_id,
                        step: 24,
                        vnf_instance: job.plan.vnf_instance.clone().unwrap_or_default(),
                        changes: vec![VnfInfoChange::MarkStopped { ids: job.removed.clone() }],
                    },
                );
                self.send_releases();
            }
        }
    }

    fn begin_release(&mut self) {
        self.set_phase(OperationPhase::Stopping);
        let job = self.job_ref().expect("open operation").clone();
        if job.driver == ActorId::NFVO {
            return self.send_releases();
        }
        let info = job.plan.vnf_instance.as_ref().and_then(|i| self.vnfs.get(i));
        let vdu_ids = job
            .removed
            .iter()
            .filter_map(|id| info.and_then(|i| i.vnfc(id)).map(|c| c.vdu_ref.clone()))
            .collect();
        let vl_ids = job
            .plan
            .vl_changes
            .iter()
            .filter(|c| c.to < c.from)
            .map(|c| c.profile.clone())
            .collect();
        self.job().grant = Some(GrantIntent::Release);
        self.send(
            job.driver,
            ActorId::NFVO,
            Some(20),
            Message::GrantRequest {
                op_id: job.op_id,
                vdu_ids,
                internal_vl_ids: vl_ids,
                intent: GrantIntent::Release,
            },
        );
    }

    fn send_releases(&mut self) {
        self.set_phase(OperationPhase::Deletion);
        let job = self.job_ref().expect("open operation").clone();
        let mut per_vim: BTreeMap<ActorId, (Vec<String>, Vec<AllocationItem<S>>)> = BTreeMap::new();
        if let Some(info) = job.plan.vnf_instance.as_ref().and_then(|i| self.vnfs.get(i)) {
            for id in &job.removed {
                let Some(c) = info.vnfc(id) else { continue };
                for h in c.compute_handle.iter().chain(c.storage_handles.iter()) {
                    if let Some(handle) = self.inventory.handle(h) {
                        per_vim.entry(self.vim_actor(&handle.zone_ref.pop)).or_default().0.push(h.clone());
                    }
                }
            }
        }
        for change in job.plan.vl_changes.iter().filter(|c| c.to < c.from) {
            let Some(vl) = self.vls.get(&change.profile) else { continue };
            let Some(first) = vl.handles.first().and_then(|h| self.inventory.handle(h)) else { continue };
            let vim = self.vim_actor(&first.zone_ref.pop);
            let entry = per_vim.entry(vim).or_default();
            entry.0.extend(vl.handles.iter().cloned());
            if change.to > 0.0 {
                entry.1.push(AllocationItem {
                    spec: CapacityVector::zero().with(Dimension::Bandwidth, S::of(change.to)),
                    resource: vl_resource(&change.profile),
                    labels: BTreeSet::new(),
                });
            }
        }
        if per_vim.is_empty() {
            return self.after_release();
        }
        self.job().awaiting = per_vim.len();
        for (vim, (handles, retain)) in per_vim {
            self.send(
                job.driver,
                vim,
                Some(25),
                Message::ReleaseRequest { op_id: job.op_id.clone(), handles, retain },
            );
        }
    }

    fn vim_release(
        &mut self,
        requester: ActorId,
        vim: ActorId,
        op_id: String,
        handles: Vec<String>,
        retain: Vec<AllocationItem<S>>,
    ) {
        let mut released = Vec::new();
        let mut zones: BTreeMap<String, ZoneRef> = BTreeMap::new();
        let mut errors = Vec::new();
        for h in &handles {
            match self.inventory.release(h) {
                Ok(handle) => {
                    zones.entry(handle.resource.clone()).or_insert(handle.zone_ref);
                    released.push(h.clone());
                }
                Err(e) => errors.push(e.to_string()),
            }
        }
        let mut recreated = Vec::new();
        for item in retain {
            let resource = item.resource.clone();
            let zone = zones.get(&resource).cloned();
            let result = match zone {
                Some(z) => self.inventory.allocate(&z, ResourceKind::Network, item, None).map_err(|e| e.to_string()),
                None => Err(format!("`{resource}` had no handle to shrink")),
            };
            match result {
                Ok(h) => recreated.push(h.id),
                Err(e) => errors.push(e),
            }
        }
        let mut resources: Vec<String> = zones.keys().cloned().collect();
        resources.retain(|r| r.starts_with("vl:"));
        self.sync_vls_of(resources);
        self.action(
            vim,
            Some(26),
            "Delete",
            serde_json::json!({ "released": released, "recreated": recreated, "errors": errors }),
        );
        self.send(vim, requester, Some(27), Message::ReleaseResponse { op_id, handles: released });
    }

    fn on_release_response(&mut self) {
        let job = self.job();
        job.awaiting -= 1;
        if job.awaiting == 0 {
            self.after_release();
        }
    }

    fn after_release(&mut self) {
        let job = self.job_ref().expect("open operation").clone();
        if job.driver == ActorId::NFVO {
            return self.complete_job();
        }
        let mut changes = Vec::new();
        if !job.removed.is_empty() {
            changes.push(VnfInfoChange::DeleteInstances { ids: job.removed.clone() });
        }
        self.finish_vnf_job(28, changes);
    }

    /// Sends the last VNF Info update of a job, which also records the new
    /// VNF-IL; the NFVO closes the operation when it applies it.
    fn finish_vnf_job(&mut self, step: u8, mut changes: Vec<VnfInfoChange>) {
        let job = self.job_ref().expect("open operation").clone();
        if job.driver == ActorId::NFVO {
            return self.complete_job();
        }
        changes.push(VnfInfoChange::SetVnfIl { il: job.plan.to_il.clone() });
        self.job().final_step = Some(step);
        self.send(
            job.driver,
            ActorId::NFVO,
            Some(step),
            Message::VnfInfoUpdate {
                op_id: job.op_id,
                step,
                vnf_instance: job.plan.vnf_instance.clone().unwrap_or_default(),
                changes,
            },
        );
    }
}

/// Value of a step series at tick `t`: the last breakpoint at or before it.
fn value_at(points: &[(u64, f64)], t: u64) -> Option<f64> {
    points.iter().filter(|(p, _)| *p <= t).max_by_key(|(p, _)| *p).map(|(_, v)| *v)
}

/// Runs a scenario to completion.
pub fn run_scenario<S: Scalar>(scenario: &Scenario, seed: u64) -> Result<RunResult<S>, ScenarioError> {
    Ok(Engine::<S>::new(scenario, seed)?.run())
}

/// Runs a scenario up to `tick` and reports the DRPA's view at that tick.
pub fn explain_at<S: Scalar>(scenario: &Scenario, seed: u64, tick: u64) -> Result<Explanation<S>, ScenarioError> {
    let horizon = scenario.doc.workload.horizon;
    if tick >= horizon {
        return Err(ScenarioError::Invalid(vec![format!(
            "tick {tick} is beyond the workload horizon ({horizon})"
        )]));
    }
    let mut engine = Engine::<S>::new(scenario, seed)?;
    engine.run_until(tick);
    Ok(engine.explain_now(tick))
}
