//! Level arithmetic: capacity of a level and the difference between two
//! levels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Catalog, NsDeploymentFlavor, UnknownId, VnfDeploymentFlavor, VnfEntry, Vnfd};
use crate::capacity::CapacityVector;
use crate::scalar::Scalar;

/// Per-VNFC requirement of a VDU: its VCD plus the sum of its VSDs.
pub fn vdu_capacity<S: Scalar>(vnfd: &Vnfd, vdu_id: &str) -> Result<CapacityVector<S>, UnknownId> {
    let vdu = vnfd.vdu(vdu_id).ok_or_else(|| UnknownId::new("VDU", vdu_id))?;
    let vcd = vnfd
        .vcd(&vdu.vcd_ref)
        .ok_or_else(|| UnknownId::new("VCD", &vdu.vcd_ref))?;
    let mut storage = S::zero();
    for vsd_ref in &vdu.vsd_refs {
        let vsd = vnfd.vsd(vsd_ref).ok_or_else(|| UnknownId::new("VSD", vsd_ref))?;
        storage = storage + S::of(vsd.storage);
    }
    Ok(CapacityVector::new(
        S::from_count(vcd.vcpu as u64),
        S::of(vcd.memory),
        storage,
        S::zero(),
    ))
}

/// Capacity of an arbitrary per-VDU count map.
pub fn counts_capacity<S: Scalar>(
    vnfd: &Vnfd,
    counts: &BTreeMap<String, u32>,
) -> Result<CapacityVector<S>, UnknownId> {
    let mut total = CapacityVector::zero();
    for (vdu, &n) in counts {
        total += vdu_capacity::<S>(vnfd, vdu)?.scale(S::from_count(n as u64));
    }
    Ok(total)
}

fn flavor_il<'a>(
    flavor: &'a VnfDeploymentFlavor,
    il: &str,
) -> Result<&'a BTreeMap<String, u32>, UnknownId> {
    flavor
        .il(il)
        .map(|l| &l.counts)
        .ok_or_else(|| UnknownId::new("VNF-IL", il))
}

pub fn vnf_il_capacity<S: Scalar>(
    vnfd: &Vnfd,
    flavor: &VnfDeploymentFlavor,
    il: &str,
) -> Result<CapacityVector<S>, UnknownId> {
    counts_capacity(vnfd, flavor_il(flavor, il)?)
}

/// Difference between two VNF-ILs, as VNFC instances to add and remove per VDU.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct IlDelta<S = f64> {
    pub add: BTreeMap<String, u32>,
    pub remove: BTreeMap<String, u32>,
    /// Signed capacity change.
    pub net: CapacityVector<S>,
}

impl<S: Scalar> IlDelta<S> {
    pub fn is_empty(&self) -> bool {
        self.add.is_empty() && self.remove.is_empty()
    }

    pub fn added_instances(&self) -> u32 {
        self.add.values().sum()
    }

    pub fn removed_instances(&self) -> u32 {
        self.remove.values().sum()
    }
}

/// Difference between two per-VDU count maps. An empty map stands for "no
/// instance", so this also covers creating or deleting a whole VNF.
pub fn counts_delta<S: Scalar>(
    vnfd: &Vnfd,
    from: &BTreeMap<String, u32>,
    to: &BTreeMap<String, u32>,
) -> Result<IlDelta<S>, UnknownId> {
    let vdus: BTreeSet<&String> = from.keys().chain(to.keys()).collect();
    let mut add = BTreeMap::new();
    let mut remove = BTreeMap::new();
    let mut net = CapacityVector::zero();
    for vdu in vdus {
        let a = from.get(vdu).copied().unwrap_or(0);
        let b = to.get(vdu).copied().unwrap_or(0);
        let per = vdu_capacity::<S>(vnfd, vdu)?;
        if b > a {
            add.insert(vdu.clone(), b - a);
            net += per.scale(S::from_count((b - a) as u64));
        } else if a > b {
            remove.insert(vdu.clone(), a - b);
            net -= per.scale(S::from_count((a - b) as u64));
        }
    }
    Ok(IlDelta { add, remove, net })
}

pub fn vnf_il_delta<S: Scalar>(
    vnfd: &Vnfd,
    flavor: &VnfDeploymentFlavor,
    from_il: &str,
    to_il: &str,
) -> Result<IlDelta<S>, UnknownId> {
    counts_delta(vnfd, flavor_il(flavor, from_il)?, flavor_il(flavor, to_il)?)
}

/// Like [`vnf_il_delta`], with `None` standing for "no instance".
pub fn counts_delta_for<S: Scalar>(
    vnfd: &Vnfd,
    flavor: &VnfDeploymentFlavor,
    from_il: Option<&str>,
    to_il: Option<&str>,
) -> Result<IlDelta<S>, UnknownId> {
    let empty = BTreeMap::new();
    let from = match from_il {
        Some(il) => flavor_il(flavor, il)?,
        None => &empty,
    };
    let to = match to_il {
        Some(il) => flavor_il(flavor, il)?,
        None => &empty,
    };
    counts_delta(vnfd, from, to)
}

/// Scaling procedure implied by a change of NS-IL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Procedure {
    VnfScaling,
    AddVnf,
    RemoveVnf,
    Mixed,
    None,
}

impl Procedure {
    pub fn name(self) -> &'static str {
        match self {
            Procedure::VnfScaling => "vnf-scaling",
            Procedure::AddVnf => "add-vnf",
            Procedure::RemoveVnf => "remove-vnf",
            Procedure::Mixed => "mixed",
            Procedure::None => "none",
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How one VNF profile changes between two NS-ILs.
///
/// `rescaled` instances move from the source VNF-IL to the target VNF-IL;
/// `added` instances are created at the target VNF-IL; `removed` instances
/// are deleted at the source VNF-IL.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileDelta {
    pub profile: String,
    pub from: Option<VnfEntry>,
    pub to: Option<VnfEntry>,
    pub rescaled: u32,
    pub added: u32,
    pub removed: u32,
}

impl ProfileDelta {
    pub fn is_unchanged(&self) -> bool {
        self.rescaled == 0 && self.added == 0 && self.removed == 0
    }

    pub fn from_il(&self) -> Option<&str> {
        self.from.as_ref().map(|e| e.vnf_il_ref.as_str())
    }

    pub fn to_il(&self) -> Option<&str> {
        self.to.as_ref().map(|e| e.vnf_il_ref.as_str())
    }
}

/// Bitrate change of one VL profile (Mbit/s; 0 when absent).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VlChange {
    pub profile: String,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct NsIlDelta<S = f64> {
    pub from: String,
    pub to: String,
    /// Changed profiles only, in flavor declaration order.
    pub profiles: Vec<ProfileDelta>,
    pub vls: Vec<VlChange>,
    pub classification: Procedure,
    pub net: CapacityVector<S>,
}

fn live(entry: Option<&VnfEntry>) -> Option<&VnfEntry> {
    entry.filter(|e| e.instance_count > 0)
}

/// Classifies a set of profile changes. VL-only differences are executed
/// through the VNF scaling workflow and classify as such.
pub fn classify(profiles: &[ProfileDelta], vl_changed: bool) -> Procedure {
    let mut kinds = BTreeSet::new();
    for p in profiles {
        if p.rescaled > 0 {
            kinds.insert(Procedure::VnfScaling);
        }
        if p.added > 0 {
            kinds.insert(Procedure::AddVnf);
        }
        if p.removed > 0 {
            kinds.insert(Procedure::RemoveVnf);
        }
    }
    match kinds.len() {
        0 if vl_changed => Procedure::VnfScaling,
        0 => Procedure::None,
        1 => *kinds.iter().next().unwrap(),
        _ => Procedure::Mixed,
    }
}

pub fn ns_il_delta<S: Scalar>(
    catalog: &Catalog,
    flavor: &NsDeploymentFlavor,
    from_il: &str,
    to_il: &str,
) -> Result<NsIlDelta<S>, UnknownId> {
    let from = flavor
        .ns_il(from_il)
        .ok_or_else(|| UnknownId::new("NS-IL", from_il))?;
    let to = flavor.ns_il(to_il).ok_or_else(|| UnknownId::new("NS-IL", to_il))?;

    let mut profiles = Vec::new();
    let mut net = CapacityVector::<S>::zero();
    for profile in &flavor.vnf_profiles {
        let a = live(from.vnf_entries.get(&profile.id));
        let b = live(to.vnf_entries.get(&profile.id));
        let n_a = a.map_or(0, |e| e.instance_count);
        let n_b = b.map_or(0, |e| e.instance_count);
        let same_level = matches!((a, b), (Some(x), Some(y)) if x.vnf_il_ref == y.vnf_il_ref);
        let (rescaled, added, removed) = if a.is_none() || b.is_none() || same_level {
            (0, n_b.saturating_sub(n_a), n_a.saturating_sub(n_b))
        } else {
            let kept = n_a.min(n_b);
            (kept, n_b - kept, n_a - kept)
        };
        if rescaled == 0 && added == 0 && removed == 0 {
            continue;
        }
        let (vnfd, vnf_flavor) = catalog.profile_target(profile)?;
        if let Some(e) = a {
            net -= vnf_il_capacity::<S>(vnfd, vnf_flavor, &e.vnf_il_ref)?
                .scale(S::from_count(n_a as u64));
        }
        if let Some(e) = b {
            net += vnf_il_capacity::<S>(vnfd, vnf_flavor, &e.vnf_il_ref)?
                .scale(S::from_count(n_b as u64));
        }
        profiles.push(ProfileDelta {
            profile: profile.id.clone(),
            from: a.cloned(),
            to: b.cloned(),
            rescaled,
            added,
            removed,
        });
    }
    for id in from.vnf_entries.keys().chain(to.vnf_entries.keys()) {
        if flavor.vnf_profile(id).is_none() {
            return Err(UnknownId::new("VNF profile", id));
        }
    }

    let mut vl_ids: Vec<&str> = flavor.vl_profiles.iter().map(|p| p.id.as_str()).collect();
    for id in from.vl_entries.keys().chain(to.vl_entries.keys()) {
        if !vl_ids.contains(&id.as_str()) {
            vl_ids.push(id);
        }
    }
    let mut vls = Vec::new();
    for id in vl_ids {
        let (x, y) = (from.bitrate(id), to.bitrate(id));
        if x != y {
            net.bandwidth = net.bandwidth + S::of(y) - S::of(x);
            vls.push(VlChange {
                profile: id.to_string(),
                from: x,
                to: y,
            });
        }
    }

    let classification = classify(&profiles, !vls.is_empty());
    Ok(NsIlDelta {
        from: from_il.to_string(),
        to: to_il.to_string(),
        profiles,
        vls,
        classification,
        net,
    })
}

/// Total capacity of every VNFC instance and VL implied by an NS-IL.
pub fn aggregate_capacity<S: Scalar>(
    catalog: &Catalog,
    flavor: &NsDeploymentFlavor,
    ns_il: &str,
) -> Result<CapacityVector<S>, UnknownId> {
    let level = flavor.ns_il(ns_il).ok_or_else(|| UnknownId::new("NS-IL", ns_il))?;
    let mut total = CapacityVector::zero();
    for (profile_id, entry) in &level.vnf_entries {
        let profile = flavor
            .vnf_profile(profile_id)
            .ok_or_else(|| UnknownId::new("VNF profile", profile_id))?;
        if entry.instance_count == 0 {
            continue;
        }
        let (vnfd, vnf_flavor) = catalog.profile_target(profile)?;
        total += vnf_il_capacity::<S>(vnfd, vnf_flavor, &entry.vnf_il_ref)?
            .scale(S::from_count(entry.instance_count as u64));
    }
    for &bitrate in level.vl_entries.values() {
        total.bandwidth = total.bandwidth + S::of(bitrate);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::fixture::{fig4_catalog, NSD_ID, NS_FLAVOR_ID};
    use crate::scalar::Rational;
    use proptest::prelude::*;

    fn b_flavor(c: &Catalog) -> (&Vnfd, &VnfDeploymentFlavor) {
        let vnfd = &c.vnfds["VNFD#2"];
        (vnfd, vnfd.flavor("Flavor#1").unwrap())
    }

    fn map(entries: &[(&str, u32)]) -> BTreeMap<String, u32> {
        entries.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn il1_to_il3_replaces_b1() {
        let c = fig4_catalog();
        let (vnfd, fl) = b_flavor(&c);
        let d = vnf_il_delta::<f64>(vnfd, fl, "IL#1", "IL#3").unwrap();
        assert_eq!(d.add, map(&[("VDU#2", 1)]));
        assert_eq!(d.remove, map(&[("VDU#1", 1)]));
        assert!(!d.add.contains_key("VDU#3") && !d.remove.contains_key("VDU#3"));
        assert_eq!(d.net, CapacityVector::new(6.0, 12.0, 10.0, 0.0));
    }

    #[test]
    fn il1_to_il2_is_pure_addition() {
        let c = fig4_catalog();
        let (vnfd, fl) = b_flavor(&c);
        let d = vnf_il_delta::<f64>(vnfd, fl, "IL#1", "IL#2").unwrap();
        assert_eq!(d.add, map(&[("VDU#1", 1)]));
        assert!(d.remove.is_empty());
        assert_eq!(d.net, CapacityVector::new(2.0, 4.0, 10.0, 0.0));
    }

    #[test]
    fn same_il_is_empty() {
        let c = fig4_catalog();
        let (vnfd, fl) = b_flavor(&c);
        for il in ["IL#1", "IL#2", "IL#3"] {
            let d = vnf_il_delta::<f64>(vnfd, fl, il, il).unwrap();
            assert!(d.is_empty());
            assert!(d.net.is_zero());
        }
    }

    #[test]
    fn unknown_il_errors() {
        let c = fig4_catalog();
        let (vnfd, fl) = b_flavor(&c);
        assert_eq!(
            vnf_il_delta::<f64>(vnfd, fl, "IL#1", "IL#9").unwrap_err(),
            UnknownId::new("VNF-IL", "IL#9")
        );
    }

    #[test]
    fn ns_il_deltas_on_fixture() {
        let c = fig4_catalog();
        let fl = c.ns_flavor(NSD_ID, NS_FLAVOR_ID).unwrap();

        let d = ns_il_delta::<f64>(&c, fl, "NS-IL#1", "NS-IL#3").unwrap();
        assert_eq!(d.classification, Procedure::VnfScaling);
        assert_eq!(d.profiles.len(), 1);
        let b = &d.profiles[0];
        assert_eq!((b.profile.as_str(), b.from_il(), b.to_il()), ("vnf-B", Some("IL#1"), Some("IL#3")));
        assert_eq!((b.rescaled, b.added, b.removed), (1, 0, 0));

        let same = ns_il_delta::<f64>(&c, fl, "NS-IL#3", "NS-IL#3").unwrap();
        assert_eq!(same.classification, Procedure::None);
        assert!(same.profiles.is_empty() && same.vls.is_empty());

        let add = ns_il_delta::<f64>(&c, fl, "NS-IL#3", "NS-IL#4").unwrap();
        assert_eq!(add.classification, Procedure::AddVnf);
        assert_eq!((add.profiles[0].rescaled, add.profiles[0].added), (0, 1));
        assert_eq!(add.vls.len(), 2);
        assert_eq!((add.vls[0].from, add.vls[0].to), (400.0, 800.0));

        let remove = ns_il_delta::<f64>(&c, fl, "NS-IL#4", "NS-IL#3").unwrap();
        assert_eq!(remove.classification, Procedure::RemoveVnf);

        let mixed = ns_il_delta::<f64>(&c, fl, "NS-IL#1", "NS-IL#4").unwrap();
        assert_eq!(mixed.classification, Procedure::Mixed);
        assert_eq!((mixed.profiles[0].rescaled, mixed.profiles[0].added), (1, 1));
    }

    /// Hand sums over the fixture VCDs: VNF-A and VNF-C are (1, 2) each;
    /// VNF-B IL#1 = VDU#1 + VDU#3 = (4, 8, 10), IL#2 = (6, 12, 20), IL#3 =
    /// (10, 20, 20); two VLs at the listed bitrate.
    #[test]
    fn aggregate_capacity_matches_hand_sums() {
        let c = fig4_catalog();
        let fl = c.ns_flavor(NSD_ID, NS_FLAVOR_ID).unwrap();
        let expect = [
            ("NS-IL#1", (6.0, 12.0, 10.0, 200.0)),
            ("NS-IL#2", (8.0, 16.0, 20.0, 400.0)),
            ("NS-IL#3", (12.0, 24.0, 20.0, 800.0)),
            ("NS-IL#4", (22.0, 44.0, 40.0, 1600.0)),
        ];
        for (il, (v, m, st, bw)) in expect {
            assert_eq!(
                aggregate_capacity::<f64>(&c, fl, il).unwrap(),
                CapacityVector::new(v, m, st, bw),
                "{il}"
            );
        }
        // NS-IL#4 = NS-IL#3 + one VNF-B at IL#3 + VL increase.
        let four = aggregate_capacity::<f64>(&c, fl, "NS-IL#4").unwrap();
        let three = aggregate_capacity::<f64>(&c, fl, "NS-IL#3").unwrap();
        assert_eq!(four - three, CapacityVector::new(10.0, 20.0, 20.0, 800.0));
    }

    #[test]
    fn zero_level_has_zero_capacity() {
        let mut c = fig4_catalog();
        let nsd = c.nsds.get_mut(NSD_ID).unwrap();
        let fl = &mut nsd.flavors[0];
        let mut zero = fl.ns_ils[0].clone();
        zero.id = "zero".into();
        for e in zero.vnf_entries.values_mut() {
            e.instance_count = 0;
        }
        zero.vl_entries.clear();
        fl.ns_ils.push(zero);
        let fl = c.ns_flavor(NSD_ID, NS_FLAVOR_ID).unwrap();
        assert!(aggregate_capacity::<f64>(&c, fl, "zero").unwrap().is_zero());
    }

    #[test]
    fn net_matches_aggregate_difference_on_fixture() {
        let c = fig4_catalog();
        let fl = c.ns_flavor(NSD_ID, NS_FLAVOR_ID).unwrap();
        for a in &fl.ns_ils {
            for b in &fl.ns_ils {
                let d = ns_il_delta::<Rational>(&c, fl, &a.id, &b.id).unwrap();
                let diff = aggregate_capacity::<Rational>(&c, fl, &b.id).unwrap()
                    - aggregate_capacity::<Rational>(&c, fl, &a.id).unwrap();
                assert_eq!(d.net, diff, "{} -> {}", a.id, b.id);
            }
        }
    }

    proptest! {
        #[test]
        fn delta_algebra_over_fixture_ils(a in 0usize..3, b in 0usize..3, c_ in 0usize..3, flavor in 0usize..2) {
            let c = fig4_catalog();
            let vnfd = &c.vnfds["VNFD#2"];
            let fl = &vnfd.flavors[flavor];
            let id = |i: usize| fl.ils[i].id.clone();
            let ab = vnf_il_delta::<Rational>(vnfd, fl, &id(a), &id(b)).unwrap();
            let ba = vnf_il_delta::<Rational>(vnfd, fl, &id(b), &id(a)).unwrap();
            let bc = vnf_il_delta::<Rational>(vnfd, fl, &id(b), &id(c_)).unwrap();
            let ac = vnf_il_delta::<Rational>(vnfd, fl, &id(a), &id(c_)).unwrap();
            prop_assert_eq!(ab.net, -ba.net);
            prop_assert_eq!(ac.net, ab.net + bc.net);
            prop_assert_eq!(&ab.add, &ba.remove);
            for vdu in ab.add.keys() {
                prop_assert!(!ab.remove.contains_key(vdu));
            }
        }

        #[test]
        fn delta_algebra_over_random_counts(
            x in proptest::collection::vec(0u32..5, 4),
            y in proptest::collection::vec(0u32..5, 4),
            z in proptest::collection::vec(0u32..5, 4),
        ) {
            let c = fig4_catalog();
            let vnfd = &c.vnfds["VNFD#2"];
            let to_map = |v: &[u32]| -> BTreeMap<String, u32> {
                v.iter().enumerate().filter(|(_, n)| **n > 0).map(|(i, n)| (format!("VDU#{}", i + 1), *n)).collect()
            };
            let (mx, my, mz) = (to_map(&x), to_map(&y), to_map(&z));
            let xy = counts_delta::<Rational>(vnfd, &mx, &my).unwrap();
            let yz = counts_delta::<Rational>(vnfd, &my, &mz).unwrap();
            let xz = counts_delta::<Rational>(vnfd, &mx, &mz).unwrap();
            prop_assert_eq!(xz.net, xy.net + yz.net);
            prop_assert!(counts_delta::<Rational>(vnfd, &mx, &mx).unwrap().is_empty());
        }
    }
}
