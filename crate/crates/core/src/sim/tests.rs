use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use super::audit::{audit_result, audit_run};
use super::*;
use crate::capacity::CapacityVector;
use crate::descriptor::Procedure;
use crate::drpa::{Action, Addition};
use crate::inventory::{check_quiescent, Inventory, NfviPop, NsState, ResourceZone, VnfcState};
use crate::scalar::Rational;

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios").join(name);
    Scenario::load(path).unwrap()
}

fn run(s: &Scenario) -> RunResult {
    let r = run_scenario::<f64>(s, 0).unwrap();
    let problems = audit_result(&s.catalog, s.doc.options.reservation_enabled, &r);
    assert!(problems.is_empty(), "{problems:?}");
    r
}

fn steps(op: &ScalingOperation) -> BTreeSet<u8> {
    op.steps().collect()
}

fn zone(id: &str, vcpu: f64) -> ZoneView {
    ZoneView {
        id: id.into(),
        available: CapacityVector::new(vcpu, 2.0 * vcpu, 100.0, 1000.0),
        labels: BTreeSet::new(),
    }
}

#[test]
fn first_fit_zone_placement() {
    let zones = vec![zone("z2", 16.0), zone("z1", 4.0)];
    let none = BTreeSet::new();
    let cpu = |v| CapacityVector::new(v, 0.0, 0.0, 0.0);
    assert_eq!(vim_placement(&zones, &cpu(8.0), &none).as_deref(), Some("z2"));
    assert_eq!(vim_placement(&zones, &CapacityVector::zero(), &none).as_deref(), Some("z1"));
    assert_eq!(vim_placement(&zones, &cpu(32.0), &none), None);
    let mut labelled = zones.clone();
    labelled[1].labels.insert("spread".into());
    let spread = BTreeSet::from(["spread".to_string()]);
    assert_eq!(vim_placement(&labelled, &cpu(2.0), &spread).as_deref(), Some("z2"));
}

fn grant_fixture() -> (Vec<Addition>, BTreeMap<String, String>, Inventory) {
    let spec = CapacityVector::new(8.0, 16.0, 20.0, 0.0);
    let additions = vec![
        Addition {
            id: "vnf-B-1/VDU#2#1".into(),
            vnf_instance: Some("vnf-B-1".into()),
            vdu: Some("VDU#2".into()),
            vl_profile: None,
            spec,
            labels: BTreeSet::new(),
        },
        Addition {
            id: "vl:vl-AB".into(),
            vnf_instance: None,
            vdu: None,
            vl_profile: Some("vl-AB".into()),
            spec: CapacityVector::new(0.0, 0.0, 0.0, 300.0),
            labels: BTreeSet::new(),
        },
    ];
    let placement = additions.iter().map(|a| (a.id.clone(), "pop-1".to_string())).collect();
    let inv = Inventory::new(vec![NfviPop {
        id: "pop-1".into(),
        vim_ref: "vim-a".into(),
        zones: vec![ResourceZone::new("z1", CapacityVector::new(16.0, 32.0, 40.0, 1000.0))],
    }]);
    (additions, placement, inv)
}

#[test]
fn grant_matches_decision_and_capacity() {
    let (adds, placement, mut inv) = grant_fixture();
    let vdus = vec!["VDU#2".to_string()];
    let vls = vec!["vl-AB".to_string(), "VLD-B-int".to_string()];
    let internal = vec!["VLD-B-int".to_string()];
    assert_eq!(grant_check(&adds, &placement, &vdus, &vls, &internal, &inv), Ok(()));

    let extra = vec!["VDU#2".to_string(), "VDU#4".to_string()];
    let err = grant_check(&adds, &placement, &extra, &vls, &internal, &inv).unwrap_err();
    assert!(err.contains("VDU#4"), "{err}");
    let err = grant_check(&adds, &placement, &vdus, &["vl-BC".to_string()], &internal, &inv).unwrap_err();
    assert!(err.contains("links"), "{err}");

    let z = inventory_zone();
    let item = crate::inventory::AllocationItem {
        spec: CapacityVector::new(10.0, 0.0, 0.0, 0.0),
        resource: "external".into(),
        labels: BTreeSet::new(),
    };
    inv.allocate(&z, crate::capacity::ResourceKind::Compute, item, None).unwrap();
    let err = grant_check(&adds, &placement, &vdus, &vls, &internal, &inv).unwrap_err();
    assert!(err.contains("vcpu"), "{err}");
}

fn inventory_zone() -> crate::inventory::ZoneRef {
    crate::inventory::ZoneRef::new("pop-1", "z1")
}

#[test]
fn overload_scales_vnf_b_from_il1_to_il3() {
    let r = run(&scenario("golden.json"));
    let st = &r.final_state;
    assert_eq!(st.ns_info.current_ns_il, "NS-IL#3");
    assert_eq!(st.outcome, RunOutcome::Completed);
    assert_eq!(st.operations.len(), 1);
    let op = &st.operations[0];
    assert_eq!(op.kind, OperationKind::ScaleVnf);
    assert_eq!(op.vnf_instance.as_deref(), Some("vnf-B-1"));
    assert_eq!((op.from_vnf_il.as_deref(), op.to_vnf_il.as_deref()), (Some("IL#1"), Some("IL#3")));
    assert_eq!(steps(op), (5..=28).collect());
    let b = &st.vnf_infos["vnf-B-1"];
    assert_eq!(b.current_vnf_il.as_deref(), Some("IL#3"));
    let mut started: Vec<&str> = b.vnfc_instances.iter().map(|c| c.vdu_ref.as_str()).collect();
    started.sort();
    assert_eq!(started, ["VDU#2", "VDU#3"]);
    assert!(b.vnfc_instances.iter().all(|c| c.state == VnfcState::Started));
    assert_eq!(st.vl_instances["vl-AB"].bitrate, 400.0);
    assert_eq!(st.vl_instances["vl-BC"].bitrate, 400.0);

    // The new VDU#2 instance starts before the old VDU#1 instance stops.
    let update = |step: u8, change: &str| {
        r.trace
            .named("VnfInfoUpdate")
            .find(|x| x.step == Some(step) && x.payload["changes"][0]["change"] == change)
            .unwrap()
            .clone()
    };
    let started = update(19, "mark-started");
    let stopped = update(24, "mark-stopped");
    assert_eq!(started.payload["changes"][0]["ids"][0], "vnf-B-1/VDU#2.3");
    assert_eq!(stopped.payload["changes"][0]["ids"][0], "vnf-B-1/VDU#1.1");
    assert!(started.tick <= stopped.tick);
}

#[test]
fn pure_addition_skips_release_steps() {
    let r = run(&scenario("escalation.json"));
    let op = &r.final_state.operations[0];
    assert_eq!((op.from_vnf_il.as_deref(), op.to_vnf_il.as_deref()), (Some("IL#1"), Some("IL#2")));
    assert_eq!(steps(op), (5..=19).collect());
    assert!(!op.phases.iter().any(|p| p.is_release()));
}

#[test]
fn escalation_walks_every_level() {
    let r = run(&scenario("escalation.json"));
    let st = &r.final_state;
    let path: Vec<(&str, &str, Procedure)> = st
        .ns_operations
        .iter()
        .map(|o| (o.from_ns_il.as_str(), o.to_ns_il.as_str(), o.classification))
        .collect();
    assert_eq!(
        path,
        [
            ("NS-IL#1", "NS-IL#2", Procedure::VnfScaling),
            ("NS-IL#2", "NS-IL#3", Procedure::VnfScaling),
            ("NS-IL#3", "NS-IL#4", Procedure::AddVnf),
        ]
    );
    let added = &st.vnf_infos["vnf-B-2"];
    assert_eq!(added.current_vnf_il.as_deref(), Some("IL#3"));
    assert_eq!(st.operations[2].kind, OperationKind::AddVnf);
    assert_eq!(st.vl_instances["vl-AB"].bitrate, 800.0);
}

#[test]
fn scale_in_removes_the_second_instance() {
    let r = run(&scenario("scale-in.json"));
    let st = &r.final_state;
    assert_eq!(st.ns_info.current_ns_il, "NS-IL#3");
    assert_eq!(st.operations.len(), 1);
    assert_eq!(st.operations[0].kind, OperationKind::RemoveVnf);
    assert!(!st.vnf_infos.contains_key("vnf-B-2"));
    assert_eq!(st.removed_vnf_infos.len(), 1);
    assert_eq!(st.removed_vnf_infos[0].vnf_instance_id, "vnf-B-2");
    assert!(st.removed_vnf_infos[0].vnfc_instances.is_empty());
    assert_eq!(st.vl_instances["vl-BC"].bitrate, 400.0);
    assert_eq!(steps(&st.operations[0]), [5, 20, 21, 22, 23, 24, 25, 26, 27, 28].into());
}

#[test]
fn quiet_load_only_monitors() {
    let r = run(&scenario("quiet.json"));
    assert!(r.trace.iter().all(|x| matches!(x.step, Some(1..=3))), "{}", r.trace.to_text());
    assert_eq!(r.trace.named("ScaleVnfToLevelRequest").count(), 0);
    assert!(r.trace.named("PerfInfoAvailable").any(|x| x.src == ActorId::vim(1)));
    assert!(r.final_state.operations.is_empty());
}

#[test]
fn indicator_surge_travels_through_em_and_vnfm() {
    let r = run(&scenario("indicator.json"));
    let notes: Vec<(String, String)> = r
        .trace
        .named("VnfIndicatorNotify")
        .map(|x| (x.src.to_string(), x.dst.to_string()))
        .collect();
    assert_eq!(notes.len(), 4);
    assert_eq!(notes[0], ("em-2".to_string(), "vnfm-2".to_string()));
    assert_eq!(notes[1], ("vnfm-2".to_string(), "nfvo".to_string()));
    let decide = r.trace.named("Decide").next().unwrap();
    assert_eq!(decide.payload["triggered_by"][0], "rule-sessions-out");
    assert_eq!(r.final_state.ns_info.current_ns_il, "NS-IL#2");
}

#[test]
fn reservation_toggle() {
    let mut s = scenario("golden.json");
    s.doc.options.reservation_enabled = false;
    let r = run(&s);
    assert_eq!(r.trace.named("ReserveRequest").count() + r.trace.named("ReserveResponse").count(), 0);
    let grant_steps: Vec<Option<u8>> = r
        .trace
        .iter()
        .filter(|x| x.name.starts_with("Grant") && x.payload["intent"] != "release" && x.step != Some(20))
        .map(|x| x.step)
        .collect();
    assert_eq!(grant_steps, [Some(6), Some(10)]);
    assert!(r.trace.named("AllocateRequest").all(|x| !x.payload["spec"].is_null()));
    assert_eq!(r.final_state.ns_info.current_ns_il, "NS-IL#3");
}

#[test]
fn runs_are_deterministic() {
    for name in ["golden.json", "escalation.json", "indicator.json"] {
        let s = scenario(name);
        let a = run_scenario::<f64>(&s, 7).unwrap();
        let b = run_scenario::<f64>(&s, 7).unwrap();
        assert_eq!(a.trace.to_text(), b.trace.to_text());
        assert_eq!(a.final_state.to_json(), b.final_state.to_json());
    }
}

#[test]
fn exact_scalar_matches_f64_run() {
    for name in ["golden.json", "escalation.json", "scale-in.json"] {
        let s = scenario(name);
        let a = run_scenario::<f64>(&s, 0).unwrap();
        let b = run_scenario::<Rational>(&s, 0).unwrap();
        assert_eq!(a.trace.to_text(), b.trace.to_text(), "{name}");
    }
}

fn decide_tick(s: &Scenario) -> u64 {
    run_scenario::<f64>(s, 0).unwrap().trace.named("Decide").next().unwrap().tick
}

/// Golden scenario with all free capacity taken at `offset` ticks after the
/// decision.
fn starved(offset: u64, reservation: bool) -> (Scenario, RunResult) {
    let mut s = scenario("golden.json");
    s.doc.options.reservation_enabled = reservation;
    let t = decide_tick(&s);
    for z in ["z1", "z2"] {
        s.doc.workload.events.push(ExternalEvent {
            tick: t + offset,
            occupy: Occupy {
                pop: "pop-1".into(),
                zone: z.into(),
                spec: CapacityVector::new(0.0, 0.0, 0.0, 0.0),
            },
        });
    }
    // Free capacity at that point is what is left after the initial level.
    let mut engine = Engine::<f64>::new(&s, 0).unwrap();
    engine.run_until(t + offset - 1);
    for (i, z) in ["z1", "z2"].into_iter().enumerate() {
        let free = engine.inventory().pops["pop-1"].zones.iter().find(|x| x.id == z).unwrap().available();
        s.doc.workload.events[i].occupy.spec = free;
    }
    let (r, report) = audit_run::<f64>(&s, 0).unwrap();
    assert!(report.is_clean(), "{:?}", report.violations);
    (s, r)
}

#[test]
fn vanished_capacity_denies_the_grant() {
    let (_, r) = starved(2, true);
    let st = &r.final_state;
    assert_eq!(st.outcome, RunOutcome::OperationFailed);
    assert_eq!(st.ns_info.current_ns_il, "NS-IL#1");
    let op = &st.operations[0];
    assert_eq!(op.phase, OperationPhase::Failed);
    let grant = r.trace.named("GrantResponse").next().unwrap();
    assert_eq!(grant.payload["granted"], false);
    assert!(grant.payload["reason"].as_str().unwrap().contains("no longer has"));
    assert_eq!(r.trace.named("ReserveRequest").count(), 0);
    assert_eq!(r.trace.named("OperationFailed").count(), 1);
    assert_eq!(st.vnf_infos["vnf-B-1"].current_vnf_il.as_deref(), Some("IL#1"));
}

#[test]
fn failed_reservation_is_rolled_back() {
    let (s, r) = starved(3, true);
    let st = &r.final_state;
    assert_eq!(st.outcome, RunOutcome::OperationFailed);
    assert!(r.trace.named("ReserveResponse").any(|x| !x.payload["error"].is_null()));
    assert_eq!(r.trace.named("Rollback").count(), 1);
    assert_eq!(r.trace.named("AllocateRequest").count(), 0);
    // Every reservation made for the operation was cancelled.
    let t = decide_tick(&s);
    let mut engine = Engine::<f64>::new(&s, 0).unwrap();
    engine.run_until(t + 10);
    assert!(engine
        .inventory()
        .reservations
        .values()
        .all(|x| x.state != crate::inventory::ReservationState::Active));
    assert_eq!(st.vnf_infos["vnf-B-1"].current_vnf_il.as_deref(), Some("IL#1"));
}

#[test]
fn failed_allocation_releases_partial_work() {
    let mut s = scenario("golden.json");
    s.doc.options.reservation_enabled = false;
    let t = decide_tick(&s);
    // Take only the free storage, so compute and network allocations
    // succeed and must be undone.
    let mut engine = Engine::<f64>::new(&s, 0).unwrap();
    engine.run_until(t + 3);
    let before: BTreeSet<String> = engine.inventory().handles.keys().cloned().collect();
    for z in ["z1", "z2"] {
        let free = engine.inventory().pops["pop-1"].zones.iter().find(|x| x.id == z).unwrap().available();
        s.doc.workload.events.push(ExternalEvent {
            tick: t + 4,
            occupy: Occupy {
                pop: "pop-1".into(),
                zone: z.into(),
                spec: CapacityVector::new(0.0, 0.0, free.storage, 0.0),
            },
        });
    }
    let mut engine = Engine::<f64>::new(&s, 0).unwrap();
    let mut clean = true;
    engine.run_observed(&mut |snap| clean &= snap.inventory.check_conservation().is_ok());
    assert!(clean);
    let after: BTreeSet<String> = engine
        .inventory()
        .handles
        .values()
        .filter(|h| h.resource != "external")
        .map(|h| h.id.clone())
        .collect();
    assert_eq!(before, after, "no capacity kept by the failed operation");
    let r = engine.finish();
    assert_eq!(r.outcome(), RunOutcome::OperationFailed);
    let rollback = r.trace.named("Rollback").next().unwrap();
    assert!(!rollback.payload["released"].as_array().unwrap().is_empty());
    assert!(audit_result(&s.catalog, false, &r).is_empty());
}

#[test]
fn explain_reports_the_overload_decision() {
    let s = scenario("golden.json");
    let e = explain_at::<f64>(&s, 0, 0).unwrap();
    assert!(!e.busy);
    assert_eq!(e.current_ns_il, "NS-IL#1");
    let d = e.decision.unwrap();
    assert_eq!(d.action, Action::Scale);
    assert_eq!(d.target_ns_il.as_deref(), Some("NS-IL#3"));
    assert_eq!(d.rationale.len(), 4);

    let t = decide_tick(&s);
    assert!(explain_at::<f64>(&s, 0, t + 3).unwrap().busy);
    assert!(explain_at::<f64>(&s, 0, s.doc.workload.horizon).is_err());
    // Explaining leaves the run itself unchanged.
    let mut engine = Engine::<f64>::new(&s, 0).unwrap();
    engine.run_until(0);
    let _ = engine.explain_now(0);
    assert_eq!(engine.run().trace.to_text(), run_scenario::<f64>(&s, 0).unwrap().trace.to_text());
}

#[test]
fn initial_level_that_does_not_fit_is_rejected() {
    let mut s = scenario("golden.json");
    for z in &mut s.doc.topology.vims[0].pops[0].zones {
        z.total = CapacityVector::new(2.0, 4.0, 5.0, 50.0);
    }
    let err = Engine::<f64>::new(&s, 0).err().unwrap();
    assert!(err.to_string().contains("initial instance"), "{err}");
}

#[test]
fn observer_sees_every_event_once() {
    let s = scenario("golden.json");
    let mut engine = Engine::<f64>::new(&s, 0).unwrap();
    let mut seen = 0;
    let mut last = 0;
    engine.run_observed(&mut |snap| {
        for r in snap.records {
            assert_eq!(r.seq, last + 1);
            last = r.seq;
        }
        seen += snap.records.len();
    });
    assert_eq!(seen, engine.trace().len());
}

/// Escalation scenario jumping straight to NS-IL#4 (rescale vnf-B-1, then
/// add vnf-B-2), with the free storage of pop-1 cut to `left` just as the
/// second job starts.
fn second_job_starved(left: f64) -> RunResult {
    let mut s = scenario("escalation.json");
    s.doc.workload.loads[0].points = vec![(0, 8.5)];
    let plain = run(&s);
    let nsop = &plain.final_state.ns_operations[0];
    assert_eq!((nsop.from_ns_il.as_str(), nsop.to_ns_il.as_str()), ("NS-IL#1", "NS-IL#4"));
    let second = &nsop.operations[1];
    let t = plain.trace.iter().find(|r| r.op_id.as_deref() == Some(second.as_str())).unwrap().tick;
    let mut engine = Engine::<f64>::new(&s, 0).unwrap();
    engine.run_until(t - 1);
    let mut left = left;
    for z in ["z1", "z2"] {
        let free = engine.inventory().pops["pop-1"].zones.iter().find(|x| x.id == z).unwrap().available();
        let keep = left.min(free.storage);
        left -= keep;
        s.doc.workload.events.push(ExternalEvent {
            tick: t,
            occupy: Occupy {
                pop: "pop-1".into(),
                zone: z.into(),
                spec: CapacityVector::new(0.0, 0.0, free.storage - keep, 0.0),
            },
        });
    }
    let (r, report) = audit_run::<f64>(&s, 0).unwrap();
    assert!(report.is_clean(), "{:?}", report.violations);
    r
}

#[test]
fn failed_job_undoes_the_completed_ones() {
    // Room for VDU#1 (10 storage) but not for the new instance's VDU#2.
    let r = second_job_starved(10.0);
    let st = &r.final_state;
    assert_eq!(st.outcome, RunOutcome::OperationFailed);
    let nsop = &st.ns_operations[0];
    assert_eq!(nsop.outcome, Outcome::Failed);
    assert_eq!(nsop.operations.len(), 3);
    let undo = &st.operations[2];
    assert_eq!(undo.kind, OperationKind::ScaleVnf);
    assert_eq!((undo.from_vnf_il.as_deref(), undo.to_vnf_il.as_deref()), (Some("IL#3"), Some("IL#1")));
    assert!(undo.is_completed());
    assert_eq!(r.trace.named("Compensate").count(), 1);
    assert_eq!(st.ns_info.current_ns_il, "NS-IL#1");
    assert_eq!(st.ns_info.state, NsState::Instantiated);
    assert_eq!(st.vnf_infos["vnf-B-1"].current_vnf_il.as_deref(), Some("IL#1"));
    assert!(!st.vnf_infos.contains_key("vnf-B-2"));
    check_quiescent(&scenario("escalation.json").catalog, &st.ns_info, &st.vnf_infos).unwrap();
}

#[test]
fn failed_undo_leaves_the_ns_scaling() {
    let r = second_job_starved(0.0);
    let st = &r.final_state;
    assert_eq!(r.trace.named("CompensationFailed").count(), 1);
    assert_eq!(st.ns_info.state, NsState::Scaling);
    assert_eq!(st.ns_operations.len(), 1);
    // The VNF keeps the level it reached.
    assert_eq!(st.vnf_infos["vnf-B-1"].current_vnf_il.as_deref(), Some("IL#3"));
}

#[test]
fn random_scenarios_pass_the_audit() {
    for seed in 0..12 {
        let s = random::random_scenario(seed);
        let (_, report) = audit_run::<f64>(&s, seed).unwrap();
        assert!(report.is_clean(), "seed {seed}: {:?}", report.violations);
    }
}
