//! Workflow properties checked over a trace and the final state.
//!
//! Each check returns the first violation it finds as a message naming the
//! record or operation involved.

use std::collections::{BTreeMap, BTreeSet};

use crate::descriptor::Catalog;
use crate::inventory::{check_quiescent, AuditSource, VnfcState};
use crate::scalar::Scalar;

use super::message::OperationKind;
use super::engine::{Engine, FinalState, OperationPhase, RunOutcome, RunResult, ScalingOperation};
use super::scenario::{Scenario, ScenarioError};
use super::trace::{EventRecord, EventTrace};

/// Workflow sub-phase a step belongs to.
pub fn sub_phase(step: u8) -> Option<OperationPhase> {
    Some(match step {
        5 => OperationPhase::Triggered,
        6..=10 => OperationPhase::Reservation,
        11..=15 => OperationPhase::Creation,
        16..=19 => OperationPhase::Starting,
        20..=24 => OperationPhase::Stopping,
        25..=28 => OperationPhase::Deletion,
        _ => return None,
    })
}

/// Sub-phases never go back; within a sub-phase a lower step may follow a
/// higher one only inside the same tick (parallel requests to several
/// VIMs); every allocation record precedes every release record.
pub fn check_phase_order(op: &ScalingOperation) -> Result<(), String> {
    let id = &op.op_id;
    for w in op.phases.windows(2) {
        if w[1] <= w[0] {
            return Err(format!("{id}: phase {:?} after {:?}", w[1], w[0]));
        }
    }
    let mut last: Option<(OperationPhase, u8, u64)> = None;
    for &(step, tick) in &op.step_log {
        let phase = sub_phase(step).ok_or_else(|| format!("{id}: step {step} outside the workflow"))?;
        if let Some((lp, ls, lt)) = last {
            if phase < lp {
                return Err(format!("{id}: step {step} ({phase:?}) after step {ls} ({lp:?})"));
            }
            if phase == lp && step < ls && tick != lt {
                return Err(format!("{id}: step {step} at tick {tick} after step {ls} at tick {lt}"));
            }
        }
        last = Some((phase, step, tick));
    }
    let alloc = op.step_log.iter().rposition(|(s, _)| sub_phase(*s).is_some_and(OperationPhase::is_allocation));
    let release = op.step_log.iter().position(|(s, _)| sub_phase(*s).is_some_and(OperationPhase::is_release));
    if let (Some(a), Some(r)) = (alloc, release) {
        if a > r {
            return Err(format!("{id}: allocation step logged after a release step"));
        }
    }
    Ok(())
}

/// The last step-19 tick precedes the first step-24 tick.
pub fn check_service_continuity(op: &ScalingOperation) -> Result<(), String> {
    let started = op.step_log.iter().filter(|(s, _)| *s == 19).map(|(_, t)| *t).max();
    let stopped = op.step_log.iter().filter(|(s, _)| *s == 24).map(|(_, t)| *t).min();
    match (started, stopped) {
        (Some(a), Some(b)) if a > b => Err(format!("{}: started at tick {a}, stopped at {b}", op.op_id)),
        _ => Ok(()),
    }
}

fn field<'a>(r: &'a EventRecord, key: &str) -> &'a serde_json::Value {
    &r.payload[key]
}

/// Reservations follow the operation's allocation grant request and
/// allocations follow a positive grant response. Link-only operations are
/// driven by the NFVO, which grants to itself, and are skipped.
pub fn check_grant_before_touch(trace: &EventTrace, ops: &[ScalingOperation]) -> Result<(), String> {
    let own: BTreeSet<&str> = ops
        .iter()
        .filter(|o| o.kind == OperationKind::ModifyVl)
        .map(|o| o.op_id.as_str())
        .collect();
    let mut asked = BTreeSet::new();
    let mut granted = BTreeSet::new();
    for r in trace.iter() {
        let Some(op) = r.op_id.as_deref() else { continue };
        if own.contains(op) {
            continue;
        }
        match r.name.as_str() {
            "GrantRequest" if field(r, "intent") == "allocate" => {
                asked.insert(op);
            }
            "GrantResponse" if r.step == Some(10) && field(r, "granted") == true => {
                granted.insert(op);
            }
            "ReserveRequest" if !asked.contains(op) => {
                return Err(format!("record {}: {op} reserves before asking for a grant", r.seq))
            }
            "AllocateRequest" if !granted.contains(op) => {
                return Err(format!("record {}: {op} allocates before its grant", r.seq))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Without reservations: no Reserve* records and every allocation carries
/// a spec. With reservations: every allocation carries a reservation id.
pub fn check_reservation_toggle(trace: &EventTrace, enabled: bool) -> Result<(), String> {
    for r in trace.iter() {
        match r.name.as_str() {
            "ReserveRequest" | "ReserveResponse" if !enabled => {
                return Err(format!("record {}: {} with reservations disabled", r.seq, r.name))
            }
            "AllocateRequest" => {
                let has_res = !field(r, "reservation_id").is_null();
                let has_spec = !field(r, "spec").is_null();
                if enabled && !has_res {
                    return Err(format!("record {}: allocation without a reservation id", r.seq));
                }
                if !enabled && (has_res || !has_spec) {
                    return Err(format!("record {}: allocation without a spec", r.seq));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// VNFCs become STARTED only through step 19 updates and STOPPED only
/// through step 24 updates, in the trace and in every VNF record's audit.
pub fn check_vnfc_transitions<S>(trace: &EventTrace, state: &FinalState<S>) -> Result<(), String> {
    for r in trace.named("VnfInfoUpdate") {
        let changes = field(r, "changes").as_array().cloned().unwrap_or_default();
        for c in changes {
            let kind = c["change"].as_str().unwrap_or_default();
            let ok = match kind {
                "mark-started" => r.step == Some(19),
                "mark-stopped" => r.step == Some(24),
                _ => true,
            };
            if !ok {
                return Err(format!("record {}: {kind} at step {:?}", r.seq, r.step));
            }
        }
    }
    for info in state.vnf_infos.values().chain(&state.removed_vnf_infos) {
        for entry in &info.audit {
            for change in &entry.changes {
                let ok = match (change.as_str(), entry.source) {
                    (_, AuditSource::Instantiation) => true,
                    ("mark-started", AuditSource::Step(s)) => s == 19,
                    ("mark-stopped", AuditSource::Step(s)) => s == 24,
                    _ => true,
                };
                if !ok {
                    return Err(format!("{} revision {}: {change} from {:?}", info.vnf_instance_id, entry.revision, entry.source));
                }
            }
        }
    }
    Ok(())
}

/// No record mentions an operation after the record that closed it.
pub fn check_closed_operations(trace: &EventTrace, ops: &[ScalingOperation]) -> Result<(), String> {
    let closed: BTreeMap<&str, u64> = ops
        .iter()
        .filter_map(|o| o.closed_at.map(|s| (o.op_id.as_str(), s)))
        .collect();
    for r in trace.iter() {
        if let Some(op) = r.op_id.as_deref() {
            if closed.get(op).is_some_and(|&s| r.seq > s) {
                return Err(format!("record {} ({}) after {op} closed", r.seq, r.name));
            }
        }
    }
    if let Some(open) = ops.iter().find(|o| o.closed_at.is_none()) {
        return Err(format!("{} never closed", open.op_id));
    }
    Ok(())
}

/// Every VNF runs exactly its VNF-IL's VNFCs. After a run without failures
/// the instances and link bitrates also match the NS-IL.
pub fn check_final_state<S>(catalog: &Catalog, state: &FinalState<S>) -> Result<(), String> {
    for info in state.vnf_infos.values() {
        let vf = catalog
            .vnfd(&info.vnfd_ref)
            .map_err(|e| e.to_string())?
            .flavor(&info.vnf_flavor_ref)
            .ok_or_else(|| format!("{}: unknown flavor", info.vnf_instance_id))?;
        let want: BTreeMap<String, u32> = info
            .current_vnf_il
            .as_deref()
            .and_then(|il| vf.il(il))
            .map(|il| il.counts.iter().filter(|(_, n)| **n > 0).map(|(k, n)| (k.clone(), *n)).collect())
            .unwrap_or_default();
        if info.counts(VnfcState::Started) != want {
            return Err(format!(
                "{}: STARTED {:?}, VNF-IL {:?} wants {want:?}",
                info.vnf_instance_id,
                info.counts(VnfcState::Started),
                info.current_vnf_il
            ));
        }
        if !info.counts(VnfcState::Stopped).is_empty() {
            return Err(format!("{}: STOPPED VNFCs left behind", info.vnf_instance_id));
        }
    }
    if state.outcome == RunOutcome::Completed {
        check_quiescent(catalog, &state.ns_info, &state.vnf_infos)?;
        let ns = &state.ns_info;
        let level = catalog
            .ns_flavor(&ns.nsd_ref, &ns.flavor_ref)
            .map_err(|e| e.to_string())?
            .ns_il(&ns.current_ns_il)
            .ok_or("unknown NS-IL")?;
        for (vl, bitrate) in &level.vl_entries {
            let got = state.vl_instances.get(vl).map_or(0.0, |v| v.bitrate);
            if (got - bitrate).abs() > 1e-6 {
                return Err(format!("link `{vl}` carries {got}, NS-IL wants {bitrate}"));
            }
        }
    }
    Ok(())
}

/// Findings of an audited run.
#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    /// Events processed, including ones that produced no record.
    pub events: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Every check over a finished run.
pub fn audit_result<S>(catalog: &Catalog, reservation: bool, result: &RunResult<S>) -> Vec<String> {
    let state = &result.final_state;
    let trace = &result.trace;
    let mut out = Vec::new();
    for op in &state.operations {
        out.extend(check_phase_order(op).err());
        out.extend(check_service_continuity(op).err());
    }
    out.extend(check_grant_before_touch(trace, &state.operations).err());
    out.extend(check_reservation_toggle(trace, reservation).err());
    out.extend(check_vnfc_transitions(trace, state).err());
    out.extend(check_closed_operations(trace, &state.operations).err());
    out.extend(check_final_state(catalog, state).err());
    let mut last = 0;
    for r in trace.iter() {
        if r.seq != last + 1 {
            out.push(format!("record {} follows {last}", r.seq));
        }
        last = r.seq;
    }
    out
}

/// Runs a scenario, checking capacity conservation after every event and
/// the trace properties at the end.
pub fn audit_run<S: Scalar>(scenario: &Scenario, seed: u64) -> Result<(RunResult<S>, AuditReport), ScenarioError> {
    let mut engine = Engine::<S>::new(scenario, seed)?;
    let mut report = AuditReport::default();
    engine.run_observed(&mut |snap| {
        report.events += 1;
        if let Err(e) = snap.inventory.check_conservation() {
            report.violations.push(format!("tick {}: {e}", snap.tick));
        }
    });
    let result = engine.finish();
    report
        .violations
        .extend(audit_result(&scenario.catalog, scenario.doc.options.reservation_enabled, &result));
    Ok((result, report))
}
