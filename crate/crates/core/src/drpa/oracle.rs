//! Brute-force reference for NS-IL selection, used to cross-check the
//! decision pipeline. It recomputes capacities straight from VCD/VSD
//! values, lists additions by direct count comparison and searches every
//! PoP assignment for a feasible placement.

use std::collections::{BTreeMap, BTreeSet};

use crate::capacity::CapacityVector;
use crate::descriptor::{Catalog, NsDeploymentFlavor, NsInstantiationLevel, Vnfd};
use crate::inventory::Inventory;
use crate::monitoring::rule::ScaleDirection;
use crate::scalar::Scalar;

use super::{occupied_labels, CostModel, PlacementConstraints};

fn vdu_spec<S: Scalar>(vnfd: &Vnfd, vdu: &str) -> Option<CapacityVector<S>> {
    let d = vnfd.vdus.iter().find(|d| d.id == vdu)?;
    let c = vnfd.vcds.iter().find(|c| c.id == d.vcd_ref)?;
    let mut storage = S::zero();
    for r in &d.vsd_refs {
        storage = storage + S::of(vnfd.vsds.iter().find(|s| &s.id == r)?.storage);
    }
    Some(CapacityVector::new(S::from_count(c.vcpu as u64), S::of(c.memory), storage, S::zero()))
}

fn il_counts<'a>(
    catalog: &'a Catalog,
    flavor: &NsDeploymentFlavor,
    profile: &str,
    il: &str,
) -> Option<(&'a Vnfd, &'a BTreeMap<String, u32>)> {
    let p = flavor.vnf_profiles.iter().find(|p| p.id == profile)?;
    let vnfd = catalog.vnfds.get(&p.vnfd_ref)?;
    let f = vnfd.flavors.iter().find(|f| f.id == p.vnf_flavor_ref)?;
    Some((vnfd, &f.ils.iter().find(|l| l.id == il)?.counts))
}

fn capacity<S: Scalar>(catalog: &Catalog, flavor: &NsDeploymentFlavor, level: &NsInstantiationLevel) -> Option<CapacityVector<S>> {
    let mut total = CapacityVector::zero();
    for (profile, entry) in &level.vnf_entries {
        let (vnfd, counts) = il_counts(catalog, flavor, profile, &entry.vnf_il_ref)?;
        for _ in 0..entry.instance_count {
            for (vdu, &n) in counts {
                for _ in 0..n {
                    total += vdu_spec::<S>(vnfd, vdu)?;
                }
            }
        }
    }
    for b in level.vl_entries.values() {
        total.bandwidth = total.bandwidth + S::of(*b);
    }
    Some(total)
}

type Item<S> = (CapacityVector<S>, BTreeSet<String>);

fn additions<S: Scalar>(
    catalog: &Catalog,
    flavor: &NsDeploymentFlavor,
    from: &NsInstantiationLevel,
    to: &NsInstantiationLevel,
    constraints: &PlacementConstraints,
) -> Option<Vec<Item<S>>> {
    let mut out = Vec::new();
    let push = |vnfd: &Vnfd, vdu: &str, n: u32, out: &mut Vec<Item<S>>| -> Option<()> {
        for _ in 0..n {
            out.push((vdu_spec::<S>(vnfd, vdu)?, constraints.labels_for(&vnfd.id, vdu)));
        }
        Some(())
    };
    for p in &flavor.vnf_profiles {
        let a = from.vnf_entries.get(&p.id).filter(|e| e.instance_count > 0);
        let b = to.vnf_entries.get(&p.id).filter(|e| e.instance_count > 0);
        let Some(b) = b else { continue };
        let (vnfd, target) = il_counts(catalog, flavor, &p.id, &b.vnf_il_ref)?;
        let (kept, source) = match a {
            Some(a) => (a.instance_count.min(b.instance_count), Some(il_counts(catalog, flavor, &p.id, &a.vnf_il_ref)?.1)),
            None => (0, None),
        };
        let same = a.is_some_and(|a| a.vnf_il_ref == b.vnf_il_ref);
        if !same {
            if let Some(source) = source {
                for _ in 0..kept {
                    for (vdu, &n) in target {
                        let have = source.get(vdu).copied().unwrap_or(0);
                        push(vnfd, vdu, n.saturating_sub(have), &mut out)?;
                    }
                }
            }
        }
        for _ in kept..b.instance_count {
            for (vdu, &n) in target {
                push(vnfd, vdu, n, &mut out)?;
            }
        }
    }
    let vls: BTreeSet<&String> = to.vl_entries.keys().collect();
    for vl in vls {
        let (x, y) = (from.vl_entries.get(vl).copied().unwrap_or(0.0), to.vl_entries[vl]);
        if y > x {
            out.push((CapacityVector::zero().with(crate::capacity::Dimension::Bandwidth, S::of(y) - S::of(x)), BTreeSet::new()));
        }
    }
    Some(out)
}

fn placeable<S: Scalar>(
    items: &[Item<S>],
    free: &mut Vec<CapacityVector<S>>,
    labels: &mut Vec<BTreeSet<String>>,
) -> bool {
    let Some(((spec, lab), rest)) = items.split_first() else {
        return true;
    };
    for i in 0..free.len() {
        if !spec.fits_within(&free[i]) || lab.iter().any(|l| labels[i].contains(l)) {
            continue;
        }
        free[i] -= *spec;
        let added: Vec<String> = lab.iter().filter(|l| labels[i].insert((*l).clone())).cloned().collect();
        let ok = placeable(rest, free, labels);
        free[i] += *spec;
        for l in added {
            labels[i].remove(&l);
        }
        if ok {
            return true;
        }
    }
    false
}

/// Argmin over every NS-IL of the flavor, by enumeration. Same candidate
/// rules and tie-breaks as the pipeline; `None` when nothing qualifies.
#[allow(clippy::too_many_arguments)]
pub fn exhaustive_select<S: Scalar>(
    catalog: &Catalog,
    flavor: &NsDeploymentFlavor,
    current: &str,
    required: &CapacityVector<S>,
    direction: ScaleDirection,
    cost: &CostModel<S>,
    inventory: &Inventory<S>,
    constraints: &PlacementConstraints,
) -> Option<String> {
    assert!(flavor.ns_ils.len() <= 32, "oracle is limited to 32 NS-ILs");
    let from = flavor.ns_ils.iter().find(|l| l.id == current)?;
    let current_cost = cost.cost(&capacity::<S>(catalog, flavor, from)?);
    let occupied = occupied_labels(inventory);
    let pops: Vec<&String> = inventory.pops.keys().collect();

    let mut best: Option<(S, u32, usize)> = None;
    for (idx, level) in flavor.ns_ils.iter().enumerate() {
        if level.id == current {
            continue;
        }
        let cap = capacity::<S>(catalog, flavor, level)?;
        let c = cost.cost(&cap);
        let meets = [cap.vcpu >= required.vcpu, cap.memory >= required.memory, cap.storage >= required.storage, cap.bandwidth >= required.bandwidth]
            .iter()
            .all(|x| *x);
        if !meets || (direction == ScaleDirection::ScaleIn && c >= current_cost) {
            continue;
        }
        let items = additions::<S>(catalog, flavor, from, level, constraints)?;
        let mut free: Vec<CapacityVector<S>> = pops.iter().map(|p| inventory.pops[*p].available()).collect();
        let mut labels: Vec<BTreeSet<String>> = pops.iter().map(|p| occupied.get(*p).cloned().unwrap_or_default()).collect();
        if !placeable(&items, &mut free, &mut labels) {
            continue;
        }
        let instances: u32 = level.vnf_entries.values().map(|e| e.instance_count).sum();
        let better = match &best {
            None => true,
            Some((bc, bi, _)) => c < *bc || (c == *bc && instances < *bi),
        };
        if better {
            best = Some((c, instances, idx));
        }
    }
    best.map(|(_, _, idx)| flavor.ns_ils[idx].id.clone())
}
