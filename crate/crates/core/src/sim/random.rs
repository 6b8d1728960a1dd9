//! Random scenarios and flavors for property tests and load runs.
//!
//! Everything is derived from a single seed, so a failing case can be
//! replayed from the seed alone.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::capacity::CapacityVector;
use crate::descriptor::fixture::fig4_catalog;
use crate::descriptor::{load_catalog, validate_catalog, Catalog, SourceDocument};
use crate::drpa::AntiAffinityRule;
use crate::monitoring::{ThresholdDirection, ThresholdSpec};

use super::engine::Engine;
use super::scenario::{
    ExternalEvent, IndicatorSpec, InitialInstance, LoadSpec, Occupy, Options, PopSpec, RuleSet, Scenario,
    ScenarioDoc, Topology, VimSpec, Workload, ZoneSpec,
};

pub const RANDOM_NSD: &str = "NSD#R";
pub const RANDOM_FLAVOR: &str = "NsFlavor#R";

fn zone_total(rng: &mut ChaCha8Rng) -> CapacityVector {
    let vcpu = rng.gen_range(6..=40) as f64;
    CapacityVector::new(
        vcpu,
        vcpu * 2.0 + rng.gen_range(0..=8) as f64,
        rng.gen_range(10..=120) as f64,
        rng.gen_range(300..=4000) as f64,
    )
}

fn points(rng: &mut ChaCha8Rng, horizon: u64, lo: f64, hi: f64) -> Vec<(u64, f64)> {
    let n = rng.gen_range(1..=5);
    let mut ticks: Vec<u64> = (0..n).map(|_| rng.gen_range(0..horizon)).collect();
    ticks.push(0);
    ticks.sort_unstable();
    ticks.dedup();
    ticks
        .into_iter()
        .map(|t| (t, (rng.gen_range(lo..hi) * 100.0).round() / 100.0))
        .collect()
}

fn random_doc(rng: &mut ChaCha8Rng, catalog: &Catalog) -> ScenarioDoc {
    let flavor = catalog.ns_flavor("NSD#1", "NsFlavor#1").expect("fixture flavor");
    let mut vims = Vec::new();
    let mut zones = Vec::new();
    for v in 1..=rng.gen_range(1..=2) {
        let mut pops = Vec::new();
        for p in 1..=rng.gen_range(1..=2) {
            let pop = format!("pop-{v}{p}");
            let zs: Vec<ZoneSpec> = (1..=rng.gen_range(1..=3))
                .map(|z| ZoneSpec { id: format!("z{z}"), total: zone_total(rng) })
                .collect();
            zones.extend(zs.iter().map(|z| (pop.clone(), z.id.clone(), z.total)));
            pops.push(PopSpec { id: pop, zones: zs });
        }
        vims.push(VimSpec { id: format!("vim-{v}"), pops });
    }
    let horizon = rng.gen_range(60..=160);
    let mut loads = vec![LoadSpec {
        item: "vnfB.cpu_util".into(),
        dimension: None,
        noise: if rng.gen_bool(0.5) { 0.05 } else { 0.0 },
        points: points(rng, horizon, 0.3, 12.0),
    }];
    if rng.gen_bool(0.4) {
        loads.push(LoadSpec {
            item: "vnfB.mem_util".into(),
            dimension: None,
            noise: 0.0,
            points: points(rng, horizon, 1.0, 24.0),
        });
    }
    if rng.gen_bool(0.3) {
        loads.push(LoadSpec {
            item: "ns.vl_util".into(),
            dimension: None,
            noise: 0.02,
            points: points(rng, horizon, 10.0, 900.0),
        });
    }
    let mut indicators = Vec::new();
    if rng.gen_bool(0.3) {
        indicators.push(IndicatorSpec {
            item: "vnfB.sessions".into(),
            points: points(rng, horizon, 0.0, 8000.0),
        });
    }
    let events = (0..rng.gen_range(0..=3))
        .map(|_| {
            let (pop, zone, total) = zones.choose(rng).cloned().expect("at least one zone");
            let share = rng.gen_range(0.1..0.9);
            ExternalEvent {
                tick: rng.gen_range(0..horizon),
                occupy: Occupy {
                    pop,
                    zone,
                    spec: CapacityVector::new(
                        (total.vcpu * share).floor(),
                        (total.memory * share).floor(),
                        (total.storage * share).floor(),
                        (total.bandwidth * share).floor(),
                    ),
                },
            }
        })
        .collect();
    let anti_affinity = if rng.gen_bool(0.25) {
        vec![AntiAffinityRule {
            label: "b-high".into(),
            vnfd: "VNFD#2".into(),
            vdus: vec!["VDU#2".into()],
        }]
    } else {
        Vec::new()
    };
    ScenarioDoc {
        name: "random".into(),
        catalog_refs: Vec::new(),
        topology: Topology { vims },
        initial_instance: InitialInstance {
            ns_instance_id: "ns-1".into(),
            nsd: "NSD#1".into(),
            flavor: "NsFlavor#1".into(),
            ns_il: flavor.ns_ils.choose(rng).expect("levels").id.clone(),
        },
        workload: Workload { horizon, loads, indicators, events },
        rules: RuleSet {
            thresholds: vec![ThresholdSpec {
                id: "thr-cpu-high".into(),
                subject: "VNFD#2".into(),
                metric: "cpu_util".into(),
                bound: 0.8,
                direction: ThresholdDirection::Above,
            }],
        },
        options: Options {
            reservation_enabled: rng.gen_bool(0.5),
            seed: rng.gen(),
            cost_weights: None,
            target_utilization: (rng.gen_range(0.4..0.8f64) * 100.0).round() / 100.0,
            anti_affinity,
        },
    }
}

/// A runnable scenario over the fixture catalog with random topology,
/// starting level, load, indicator and external-capacity events.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog = fig4_catalog();
    loop {
        let doc = random_doc(&mut rng, &catalog);
        let s = Scenario::new(doc, catalog.clone());
        // Topologies too small for the starting level are drawn again.
        if Engine::<f64>::new(&s, 0).is_ok() {
            return s;
        }
    }
}

fn vnfd_doc(rng: &mut ChaCha8Rng, index: usize) -> serde_json::Value {
    let vdus = rng.gen_range(1..=3);
    let ids: Vec<String> = (1..=vdus).map(|d| format!("VDU-{index}-{d}")).collect();
    let mut ils = Vec::new();
    let mut seen = Vec::new();
    while ils.len() < rng.gen_range(1..=3) || ils.is_empty() {
        let counts: serde_json::Map<String, serde_json::Value> = ids
            .iter()
            .map(|id| (id.clone(), json!(rng.gen_range(0..=3))))
            .collect();
        if counts.values().all(|v| v == 0) || seen.contains(&counts) {
            if seen.len() > 20 {
                break;
            }
            seen.push(counts);
            continue;
        }
        seen.push(counts.clone());
        ils.push(json!({ "id": format!("IL#{}", ils.len() + 1), "counts": counts }));
    }
    json!({
        "kind": "vnfd",
        "id": format!("VNFD-R{index}"),
        "version": "1.0",
        "vdus": ids.iter().map(|id| json!({ "id": id, "vnfc_name": format!("{id}-c"), "vcd_ref": format!("{id}-vcd") })).collect::<Vec<_>>(),
        "vcds": ids.iter().map(|id| json!({
            "id": format!("{id}-vcd"),
            "vcpu": rng.gen_range(1..=8),
            "memory": rng.gen_range(1..=16),
        })).collect::<Vec<_>>(),
        "flavors": [{ "id": "F", "vdu_refs": ids, "ils": ils }],
    })
}

fn documents(rng: &mut ChaCha8Rng) -> Vec<SourceDocument> {
    let vnfds: Vec<serde_json::Value> = (1..=rng.gen_range(2..=3)).map(|i| vnfd_doc(rng, i)).collect();
    let il_ids: Vec<Vec<String>> = vnfds
        .iter()
        .map(|v| {
            v["flavors"][0]["ils"]
                .as_array()
                .expect("ils")
                .iter()
                .map(|il| il["id"].as_str().expect("id").to_string())
                .collect()
        })
        .collect();
    let profiles: Vec<serde_json::Value> = vnfds
        .iter()
        .zip(&il_ids)
        .enumerate()
        .map(|(i, (v, ils))| {
            json!({
                "id": format!("p{}", i + 1),
                "vnfd_ref": v["id"],
                "vnf_flavor_ref": "F",
                "allowed_il_refs": ils,
                "min_instances": 1,
                "max_instances": 2,
            })
        })
        .collect();
    let mut levels: Vec<serde_json::Value> = Vec::new();
    let mut keys = Vec::new();
    let want = rng.gen_range(2..=8);
    for _ in 0..64 {
        if levels.len() == want {
            break;
        }
        let entries: serde_json::Map<String, serde_json::Value> = il_ids
            .iter()
            .enumerate()
            .map(|(i, ils)| {
                let il = ils.choose(rng).expect("at least one IL").clone();
                let n = rng.gen_range(1..=2);
                (format!("p{}", i + 1), json!({ "vnf_il_ref": il, "instance_count": n }))
            })
            .collect();
        let bitrate = rng.gen_range(1..=10) * 100;
        let key = (entries.clone(), bitrate);
        if keys.contains(&key) {
            continue;
        }
        keys.push(key);
        levels.push(json!({
            "id": format!("NS-IL#{}", levels.len() + 1),
            "vnf_entries": entries,
            "vl_entries": { "vl-1": bitrate },
        }));
    }
    let nsd = json!({
        "kind": "nsd",
        "id": RANDOM_NSD,
        "version": "1.0",
        "vnfd_refs": vnfds.iter().map(|v| v["id"].clone()).collect::<Vec<_>>(),
        "vld_refs": ["VLD-R"],
        "flavors": [{
            "id": RANDOM_FLAVOR,
            "vnf_profiles": profiles,
            "vl_profiles": [{ "id": "vl-1", "vld_ref": "VLD-R", "vl_flavor_ref": "f" }],
            "ns_ils": levels,
        }],
    });
    let vld = json!({
        "kind": "vld",
        "id": "VLD-R",
        "flavors": [{ "id": "f", "latency": 10, "jitter": 1, "reliability_class": 1 }],
    });
    let mut docs = vec![
        SourceDocument::new("nsd.json", nsd.to_string()),
        SourceDocument::new("vld.json", vld.to_string()),
    ];
    for v in vnfds {
        docs.push(SourceDocument::new(format!("{}.json", v["id"].as_str().unwrap_or("vnfd")), v.to_string()));
    }
    docs
}

/// A valid catalog whose NSD `RANDOM_NSD` has a single flavor
/// `RANDOM_FLAVOR` with two to eight NS-ILs over two or three VNFs.
pub fn random_flavor_catalog(seed: u64) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let docs = documents(&mut rng);
        if let Ok(catalog) = load_catalog(&docs) {
            if validate_catalog(&catalog).is_empty() {
                return catalog;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_flavors_are_valid_and_bounded() {
        for seed in 0..30 {
            let c = random_flavor_catalog(seed);
            let fl = c.ns_flavor(RANDOM_NSD, RANDOM_FLAVOR).unwrap();
            assert!((2..=8).contains(&fl.ns_ils.len()), "seed {seed}");
        }
    }

    #[test]
    fn random_scenarios_validate() {
        for seed in 0..10 {
            let s = random_scenario(seed);
            s.validate().unwrap();
            assert_eq!(random_scenario(seed), s);
        }
    }
}
