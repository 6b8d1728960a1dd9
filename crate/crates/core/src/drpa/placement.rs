use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::{CapacityVector, Dimension};
use crate::descriptor::{counts_delta_for, vdu_capacity, Catalog, NsDeploymentFlavor, NsIlDelta, UnknownId};
use crate::inventory::{Inventory, ReservationState, VnfInfo};
use crate::scalar::Scalar;

/// VNFCs matching `vnfd` (and, when listed, one of `vdus`) carry `label`;
/// two instances sharing a label never land in the same PoP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntiAffinityRule {
    pub label: String,
    pub vnfd: String,
    #[serde(default)]
    pub vdus: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementConstraints {
    #[serde(default)]
    pub anti_affinity: Vec<AntiAffinityRule>,
}

impl PlacementConstraints {
    pub fn labels_for(&self, vnfd: &str, vdu: &str) -> BTreeSet<String> {
        self.anti_affinity
            .iter()
            .filter(|r| r.vnfd == vnfd && (r.vdus.is_empty() || r.vdus.iter().any(|v| v == vdu)))
            .map(|r| r.label.clone())
            .collect()
    }
}

/// One resource the target level needs on top of what is deployed.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct Addition<S = f64> {
    /// `<vnf instance>/<vdu>#<k>` for VNFCs, `vl:<profile>` for VL increases.
    pub id: String,
    pub vnf_instance: Option<String>,
    pub vdu: Option<String>,
    pub vl_profile: Option<String>,
    pub spec: CapacityVector<S>,
    pub labels: BTreeSet<String>,
}

/// How the VNF instances of each profile are affected by a transition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InstancePlan {
    /// Existing instances moved to another VNF-IL.
    pub rescaled: BTreeMap<String, Vec<String>>,
    /// Instances to create, with their ids.
    pub created: BTreeMap<String, Vec<String>>,
    /// Instances to delete, highest instance number first.
    pub deleted: BTreeMap<String, Vec<String>>,
}

fn instance_number(profile: &str, id: &str) -> Option<u32> {
    id.strip_prefix(profile)?.strip_prefix('-')?.parse().ok()
}

/// Existing instances of a profile ordered by instance number.
pub fn profile_instances<'a>(
    vnf_infos: &'a BTreeMap<String, VnfInfo>,
    profile: &str,
) -> Vec<&'a VnfInfo> {
    let mut out: Vec<&VnfInfo> = vnf_infos.values().filter(|v| v.profile_ref == profile).collect();
    out.sort_by_key(|v| (instance_number(profile, &v.vnf_instance_id).unwrap_or(u32::MAX), v.vnf_instance_id.clone()));
    out
}

/// Lists the additions implied by `delta` given the deployed instances, and
/// names the instances that are rescaled, created or deleted.
pub fn additions_for<S: Scalar>(
    catalog: &Catalog,
    flavor: &NsDeploymentFlavor,
    delta: &NsIlDelta<S>,
    vnf_infos: &BTreeMap<String, VnfInfo>,
    constraints: &PlacementConstraints,
) -> Result<(Vec<Addition<S>>, InstancePlan), UnknownId> {
    let mut additions = Vec::new();
    let mut plan = InstancePlan::default();
    for pd in &delta.profiles {
        let profile = flavor
            .vnf_profile(&pd.profile)
            .ok_or_else(|| UnknownId::new("VNF profile", &pd.profile))?;
        let (vnfd, vf) = catalog.profile_target(profile)?;
        let existing = profile_instances(vnf_infos, &pd.profile);
        let ids: Vec<String> = existing.iter().map(|v| v.vnf_instance_id.clone()).collect();

        let push_vnfcs = |additions: &mut Vec<Addition<S>>, instance: &str, add: &BTreeMap<String, u32>| {
            for (vdu, &n) in add {
                let spec = vdu_capacity::<S>(vnfd, vdu)?;
                for k in 1..=n {
                    additions.push(Addition {
                        id: format!("{instance}/{vdu}#{k}"),
                        vnf_instance: Some(instance.to_string()),
                        vdu: Some(vdu.clone()),
                        vl_profile: None,
                        spec,
                        labels: constraints.labels_for(&vnfd.id, vdu),
                    });
                }
            }
            Ok::<(), UnknownId>(())
        };

        if pd.rescaled > 0 {
            let (Some(from), Some(to)) = (pd.from_il(), pd.to_il()) else {
                continue;
            };
            let d = counts_delta_for::<S>(vnfd, vf, Some(from), Some(to))?;
            let chosen: Vec<String> = ids.iter().take(pd.rescaled as usize).cloned().collect();
            for instance in &chosen {
                push_vnfcs(&mut additions, instance, &d.add)?;
            }
            plan.rescaled.insert(pd.profile.clone(), chosen);
        }
        if pd.added > 0 {
            let to = pd.to_il().ok_or_else(|| UnknownId::new("VNF-IL", ""))?;
            let d = counts_delta_for::<S>(vnfd, vf, None, Some(to))?;
            let mut next = ids
                .iter()
                .filter_map(|id| instance_number(&pd.profile, id))
                .max()
                .unwrap_or(0);
            let mut created = Vec::new();
            for _ in 0..pd.added {
                next += 1;
                let instance = format!("{}-{next}", pd.profile);
                push_vnfcs(&mut additions, &instance, &d.add)?;
                created.push(instance);
            }
            plan.created.insert(pd.profile.clone(), created);
        }
        if pd.removed > 0 {
            let deleted: Vec<String> = ids.iter().rev().take(pd.removed as usize).cloned().collect();
            plan.deleted.insert(pd.profile.clone(), deleted);
        }
    }
    for vl in &delta.vls {
        if vl.to > vl.from {
            additions.push(Addition {
                id: format!("vl:{}", vl.profile),
                vnf_instance: None,
                vdu: None,
                vl_profile: Some(vl.profile.clone()),
                spec: CapacityVector::zero().with(Dimension::Bandwidth, S::of(vl.to) - S::of(vl.from)),
                labels: BTreeSet::new(),
            });
        }
    }
    Ok((additions, plan))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementMap {
    /// Addition id -> PoP id.
    pub assignments: BTreeMap<String, String>,
    pub selected_vims: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlacementError {
    #[error("cannot place `{addition}`: best PoP `{pop}` lacks {shortfall} {dimension}")]
    Shortfall {
        addition: String,
        pop: String,
        dimension: Dimension,
        shortfall: f64,
    },
    #[error("cannot place `{addition}`: every PoP with room already hosts label `{label}`")]
    AntiAffinity { addition: String, label: String },
    #[error("cannot place `{addition}`: no NFVI-PoP is reachable")]
    NoPop { addition: String },
}

/// Labels already present per PoP, from outstanding handles and active
/// reservations.
pub fn occupied_labels<S: Scalar>(inventory: &Inventory<S>) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for h in inventory.handles.values() {
        out.entry(h.zone_ref.pop.clone()).or_default().extend(h.labels.iter().cloned());
    }
    for r in inventory.reservations.values().filter(|r| r.state == ReservationState::Active) {
        out.entry(r.zone_ref.pop.clone()).or_default().extend(r.labels.iter().cloned());
    }
    out
}

/// First-fit over PoPs in ascending id order against PoP-aggregate
/// available capacity. When the greedy pass dead-ends, earlier choices are
/// revisited in the same order, so the result is the first feasible
/// assignment in PoP-id order and a level is only rejected when no
/// assignment exists at all.
pub fn plan_placement<S: Scalar>(
    additions: &[Addition<S>],
    inventory: &Inventory<S>,
) -> Result<PlacementMap, PlacementError> {
    let mut available = inventory.pop_available();
    let mut labels = occupied_labels(inventory);
    let chosen = match first_fit(additions, &available, &labels) {
        Ok(chosen) => chosen,
        Err(e) => {
            let pops: Vec<String> = available.keys().cloned().collect();
            let mut chosen = Vec::with_capacity(additions.len());
            if !search(additions, &pops, &mut available, &mut labels, &mut chosen) {
                return Err(e);
            }
            chosen
        }
    };
    let mut assignments = BTreeMap::new();
    let mut selected_vims = BTreeSet::new();
    for (add, pop) in additions.iter().zip(chosen) {
        if let Some(vim) = inventory.vim_of(&pop) {
            selected_vims.insert(vim.to_string());
        }
        assignments.insert(add.id.clone(), pop);
    }
    Ok(PlacementMap {
        assignments,
        selected_vims,
    })
}

fn admits<S: Scalar>(add: &Addition<S>, free: &CapacityVector<S>, taken: Option<&BTreeSet<String>>) -> bool {
    add.spec.fits_within(free) && !add.labels.iter().any(|l| taken.is_some_and(|t| t.contains(l)))
}

/// One greedy pass; its error names the first addition that found no PoP.
fn first_fit<S: Scalar>(
    additions: &[Addition<S>],
    available: &BTreeMap<String, CapacityVector<S>>,
    labels: &BTreeMap<String, BTreeSet<String>>,
) -> Result<Vec<String>, PlacementError> {
    let mut available = available.clone();
    let mut labels = labels.clone();
    let mut out = Vec::with_capacity(additions.len());
    for add in additions {
        let Some(pop) = available
            .iter()
            .find(|(pop, free)| admits(add, free, labels.get(*pop)))
            .map(|(pop, _)| pop.clone())
        else {
            let blocked = available.iter().find_map(|(pop, free)| {
                let taken = labels.get(pop)?;
                add.spec.fits_within(free).then(|| add.labels.iter().find(|l| taken.contains(*l)))?
            });
            return Err(match blocked {
                Some(label) => PlacementError::AntiAffinity {
                    addition: add.id.clone(),
                    label: label.clone(),
                },
                None => best_shortfall(add, &available),
            });
        };
        *available.get_mut(&pop).unwrap() -= add.spec;
        labels.entry(pop.clone()).or_default().extend(add.labels.iter().cloned());
        out.push(pop);
    }
    Ok(out)
}

/// Depth-first search in PoP-id order. PoPs whose free capacity and labels
/// match an already tried PoP are skipped, since they lead to the same
/// subtree.
fn search<S: Scalar>(
    additions: &[Addition<S>],
    pops: &[String],
    available: &mut BTreeMap<String, CapacityVector<S>>,
    labels: &mut BTreeMap<String, BTreeSet<String>>,
    chosen: &mut Vec<String>,
) -> bool {
    let Some((add, rest)) = additions.split_first() else {
        return true;
    };
    let mut tried: Vec<(CapacityVector<S>, Option<BTreeSet<String>>)> = Vec::new();
    for pop in pops {
        let free = available[pop];
        let taken = labels.get(pop).cloned();
        if !admits(add, &free, taken.as_ref()) || tried.iter().any(|(f, l)| *f == free && *l == taken) {
            continue;
        }
        tried.push((free, taken.clone()));
        *available.get_mut(pop).unwrap() -= add.spec;
        labels.entry(pop.clone()).or_default().extend(add.labels.iter().cloned());
        chosen.push(pop.clone());
        if search(rest, pops, available, labels, chosen) {
            return true;
        }
        chosen.pop();
        *available.get_mut(pop).unwrap() += add.spec;
        match taken {
            Some(t) => {
                labels.insert(pop.clone(), t);
            }
            None => {
                labels.remove(pop);
            }
        }
    }
    false
}

fn best_shortfall<S: Scalar>(add: &Addition<S>, available: &BTreeMap<String, CapacityVector<S>>) -> PlacementError {
    // The PoP with the smallest summed gap; its largest gap is reported.
    let mut best: Option<(f64, &String, Dimension, f64)> = None;
    for (pop, free) in available {
        let gap = (add.spec - *free).positive_part().to_f64();
        let total: f64 = Dimension::ALL.iter().map(|d| gap.get(*d)).sum();
        let mut dim = Dimension::Vcpu;
        for d in Dimension::ALL {
            if gap.get(d) > gap.get(dim) {
                dim = d;
            }
        }
        if best.as_ref().is_none_or(|b| total < b.0) {
            best = Some((total, pop, dim, gap.get(dim)));
        }
    }
    match best {
        Some((_, pop, dimension, shortfall)) => PlacementError::Shortfall {
            addition: add.id.clone(),
            pop: pop.clone(),
            dimension,
            shortfall,
        },
        None => PlacementError::NoPop {
            addition: add.id.clone(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::{NfviPop, ResourceZone};

    fn pop(id: &str, vcpu: f64) -> NfviPop<f64> {
        NfviPop {
            id: id.into(),
            vim_ref: format!("vim-{id}"),
            zones: vec![ResourceZone::new("z", CapacityVector::new(vcpu, 100.0, 100.0, 1000.0))],
        }
    }

    fn add(id: &str, vcpu: f64, labels: &[&str]) -> Addition<f64> {
        Addition {
            id: id.into(),
            vnf_instance: None,
            vdu: None,
            vl_profile: None,
            spec: CapacityVector::new(vcpu, 0.0, 0.0, 0.0),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn first_fit_picks_lowest_pop() {
        let inv = Inventory::new([pop("pop-1", 10.0), pop("pop-2", 50.0)]);
        let map = plan_placement(&[add("a", 8.0, &[])], &inv).unwrap();
        assert_eq!(map.assignments["a"], "pop-1");
        assert_eq!(map.selected_vims, BTreeSet::from(["vim-pop-1".to_string()]));
    }

    #[test]
    fn empty_additions_give_empty_map() {
        let inv = Inventory::new([pop("pop-1", 10.0)]);
        let map = plan_placement::<f64>(&[], &inv).unwrap();
        assert!(map.assignments.is_empty() && map.selected_vims.is_empty());
    }

    #[test]
    fn anti_affinity_needs_distinct_pops() {
        let inv = Inventory::new([pop("pop-1", 100.0)]);
        let err = plan_placement(&[add("a", 1.0, &["ha"]), add("b", 1.0, &["ha"])], &inv).unwrap_err();
        assert!(matches!(err, PlacementError::AntiAffinity { ref addition, .. } if addition == "b"), "{err}");

        let inv = Inventory::new([pop("pop-1", 100.0), pop("pop-2", 100.0)]);
        let map = plan_placement(&[add("a", 1.0, &["ha"]), add("b", 1.0, &["ha"])], &inv).unwrap();
        assert_eq!((map.assignments["a"].as_str(), map.assignments["b"].as_str()), ("pop-1", "pop-2"));
    }

    #[test]
    fn shortfall_names_dimension() {
        let inv = Inventory::new([pop("pop-1", 4.0), pop("pop-2", 6.0)]);
        let err = plan_placement(&[add("a", 8.0, &[])], &inv).unwrap_err();
        assert_eq!(
            err,
            PlacementError::Shortfall {
                addition: "a".into(),
                pop: "pop-2".into(),
                dimension: Dimension::Vcpu,
                shortfall: 2.0
            }
        );
    }
}
