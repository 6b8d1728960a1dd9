use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ZoneRef;
use crate::descriptor::Catalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NsState {
    Instantiated,
    Scaling,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsInfo {
    pub ns_instance_id: String,
    pub nsd_ref: String,
    pub flavor_ref: String,
    pub current_ns_il: String,
    pub vnf_instance_refs: Vec<String>,
    pub vl_instance_refs: Vec<String>,
    pub state: NsState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VnfcState {
    Stopped,
    Started,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfcInstance {
    pub id: String,
    pub vdu_ref: String,
    /// Creation order within the VNF instance; removal takes the highest.
    pub ordinal: u32,
    pub state: VnfcState,
    pub compute_handle: Option<String>,
    pub storage_handles: Vec<String>,
    pub zone_ref: Option<ZoneRef>,
}

/// Runtime record of a virtual link: its current bitrate and the network
/// handles backing it, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlInstance {
    pub id: String,
    pub profile: String,
    pub bitrate: f64,
    pub handles: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditSource {
    Instantiation,
    Step(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub revision: u64,
    pub source: AuditSource,
    pub tick: u64,
    pub changes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfInfo {
    pub vnf_instance_id: String,
    pub vnfd_ref: String,
    pub vnf_flavor_ref: String,
    /// NS flavor VNF profile the instance was deployed from.
    pub profile_ref: String,
    /// `None` while the instance has no level (just created, or emptied
    /// before deletion).
    pub current_vnf_il: Option<String>,
    pub vnfc_instances: Vec<VnfcInstance>,
    pub vim_ref: Option<String>,
    pub revision: u64,
    pub audit: Vec<AuditEntry>,
    /// Ids of deleted VNFC instances; never reused.
    pub retired: BTreeSet<String>,
    pub next_ordinal: u32,
}

impl VnfInfo {
    pub fn new(id: &str, vnfd_ref: &str, vnf_flavor_ref: &str, profile_ref: &str) -> Self {
        Self {
            vnf_instance_id: id.to_string(),
            vnfd_ref: vnfd_ref.to_string(),
            vnf_flavor_ref: vnf_flavor_ref.to_string(),
            profile_ref: profile_ref.to_string(),
            current_vnf_il: None,
            vnfc_instances: Vec::new(),
            vim_ref: None,
            revision: 0,
            audit: Vec::new(),
            retired: BTreeSet::new(),
            next_ordinal: 1,
        }
    }

    pub fn vnfc(&self, id: &str) -> Option<&VnfcInstance> {
        self.vnfc_instances.iter().find(|c| c.id == id)
    }

    /// Per-VDU count of instances in `state`.
    pub fn counts(&self, state: VnfcState) -> BTreeMap<String, u32> {
        let mut out = BTreeMap::new();
        for c in self.vnfc_instances.iter().filter(|c| c.state == state) {
            *out.entry(c.vdu_ref.clone()).or_insert(0) += 1;
        }
        out
    }

    /// The `n` STARTED instances of `vdu` with the highest ordinals.
    pub fn removal_candidates(&self, vdu: &str, n: usize) -> Vec<&VnfcInstance> {
        let mut started: Vec<&VnfcInstance> = self
            .vnfc_instances
            .iter()
            .filter(|c| c.vdu_ref == vdu && c.state == VnfcState::Started)
            .collect();
        started.sort_by_key(|c| std::cmp::Reverse(c.ordinal));
        started.truncate(n);
        started
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewVnfc {
    pub id: String,
    pub vdu_ref: String,
    pub compute_handle: Option<String>,
    pub storage_handles: Vec<String>,
    pub zone_ref: Option<ZoneRef>,
    pub vim_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "kebab-case")]
pub enum VnfInfoChange {
    AddInstancesStopped { instances: Vec<NewVnfc> },
    MarkStarted { ids: Vec<String> },
    MarkStopped { ids: Vec<String> },
    DeleteInstances { ids: Vec<String> },
    SetVnfIl { il: Option<String> },
}

impl VnfInfoChange {
    pub fn name(&self) -> &'static str {
        match self {
            VnfInfoChange::AddInstancesStopped { .. } => "add-instances-stopped",
            VnfInfoChange::MarkStarted { .. } => "mark-started",
            VnfInfoChange::MarkStopped { .. } => "mark-stopped",
            VnfInfoChange::DeleteInstances { .. } => "delete-instances",
            VnfInfoChange::SetVnfIl { .. } => "set-vnf-il",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IllegalTransition {
    #[error("VNFC `{id}` is {state:?}; cannot {change}")]
    WrongState {
        id: String,
        state: VnfcState,
        change: &'static str,
    },
    #[error("unknown VNFC `{0}`")]
    UnknownVnfc(String),
    #[error("VNFC id `{0}` already used")]
    DuplicateVnfc(String),
}

/// Applies changes to a VNF record and returns the next revision with one
/// audit entry. The input record is left untouched.
pub fn record_vnf_info_update(
    info: &VnfInfo,
    changes: &[VnfInfoChange],
    source: AuditSource,
    tick: u64,
) -> Result<VnfInfo, IllegalTransition> {
    let mut next = info.clone();
    for change in changes {
        apply(&mut next, change)?;
    }
    next.revision += 1;
    next.audit.push(AuditEntry {
        revision: next.revision,
        source,
        tick,
        changes: changes.iter().map(|c| c.name().to_string()).collect(),
    });
    Ok(next)
}

fn transition(
    info: &mut VnfInfo,
    ids: &[String],
    from: VnfcState,
    to: VnfcState,
    change: &'static str,
) -> Result<(), IllegalTransition> {
    for id in ids {
        let c = info
            .vnfc_instances
            .iter_mut()
            .find(|c| &c.id == id)
            .ok_or_else(|| IllegalTransition::UnknownVnfc(id.clone()))?;
        if c.state != from {
            return Err(IllegalTransition::WrongState {
                id: id.clone(),
                state: c.state,
                change,
            });
        }
        c.state = to;
    }
    Ok(())
}

fn apply(info: &mut VnfInfo, change: &VnfInfoChange) -> Result<(), IllegalTransition> {
    match change {
        VnfInfoChange::AddInstancesStopped { instances } => {
            for new in instances {
                if info.retired.contains(&new.id) || info.vnfc(&new.id).is_some() {
                    return Err(IllegalTransition::DuplicateVnfc(new.id.clone()));
                }
                if info.vim_ref.is_none() {
                    info.vim_ref = new.vim_ref.clone();
                }
                info.vnfc_instances.push(VnfcInstance {
                    id: new.id.clone(),
                    vdu_ref: new.vdu_ref.clone(),
                    ordinal: info.next_ordinal,
                    state: VnfcState::Stopped,
                    compute_handle: new.compute_handle.clone(),
                    storage_handles: new.storage_handles.clone(),
                    zone_ref: new.zone_ref.clone(),
                });
                info.next_ordinal += 1;
            }
        }
        VnfInfoChange::MarkStarted { ids } => {
            transition(info, ids, VnfcState::Stopped, VnfcState::Started, "mark-started")?
        }
        VnfInfoChange::MarkStopped { ids } => {
            transition(info, ids, VnfcState::Started, VnfcState::Stopped, "mark-stopped")?
        }
        VnfInfoChange::DeleteInstances { ids } => {
            for id in ids {
                let pos = info
                    .vnfc_instances
                    .iter()
                    .position(|c| &c.id == id)
                    .ok_or_else(|| IllegalTransition::UnknownVnfc(id.clone()))?;
                let state = info.vnfc_instances[pos].state;
                if state != VnfcState::Stopped {
                    return Err(IllegalTransition::WrongState {
                        id: id.clone(),
                        state,
                        change: "delete-instances",
                    });
                }
                info.vnfc_instances.remove(pos);
                info.retired.insert(id.clone());
            }
        }
        VnfInfoChange::SetVnfIl { il } => info.current_vnf_il = il.clone(),
    }
    Ok(())
}

/// Checks the repository against the catalog while no operation is open:
/// every VNF runs exactly its VNF-IL's VNFCs, and the per-profile instances
/// match the NS-IL.
pub fn check_quiescent(
    catalog: &Catalog,
    ns: &NsInfo,
    vnfs: &BTreeMap<String, VnfInfo>,
) -> Result<(), String> {
    let flavor = catalog
        .ns_flavor(&ns.nsd_ref, &ns.flavor_ref)
        .map_err(|e| e.to_string())?;
    let level = flavor.ns_il(&ns.current_ns_il).ok_or_else(|| {
        format!("current NS-IL `{}` not in flavor `{}`", ns.current_ns_il, flavor.id)
    })?;
    let listed: BTreeSet<&String> = ns.vnf_instance_refs.iter().collect();
    let present: BTreeSet<&String> = vnfs.keys().collect();
    if listed != present {
        return Err(format!("NS lists VNF instances {listed:?} but repository holds {present:?}"));
    }
    let mut per_profile: BTreeMap<&str, Vec<&VnfInfo>> = BTreeMap::new();
    for info in vnfs.values() {
        per_profile.entry(info.profile_ref.as_str()).or_default().push(info);
        let vnfd = catalog.vnfd(&info.vnfd_ref).map_err(|e| e.to_string())?;
        let vf = vnfd
            .flavor(&info.vnf_flavor_ref)
            .ok_or_else(|| format!("{}: unknown flavor", info.vnf_instance_id))?;
        let expected: BTreeMap<String, u32> = match &info.current_vnf_il {
            Some(il) => vf
                .il(il)
                .ok_or_else(|| format!("{}: unknown VNF-IL `{il}`", info.vnf_instance_id))?
                .counts
                .iter()
                .filter(|(_, n)| **n > 0)
                .map(|(k, n)| (k.clone(), *n))
                .collect(),
            None => BTreeMap::new(),
        };
        if info.counts(VnfcState::Started) != expected {
            return Err(format!(
                "{}: STARTED VNFCs {:?} differ from VNF-IL counts {:?}",
                info.vnf_instance_id,
                info.counts(VnfcState::Started),
                expected
            ));
        }
        if !info.counts(VnfcState::Stopped).is_empty() {
            return Err(format!("{}: STOPPED VNFCs left over", info.vnf_instance_id));
        }
    }
    for profile in &flavor.vnf_profiles {
        let infos = per_profile.remove(profile.id.as_str()).unwrap_or_default();
        let want = level.instance_count(&profile.id) as usize;
        if infos.len() != want {
            return Err(format!(
                "profile `{}` has {} instances, NS-IL `{}` wants {want}",
                profile.id,
                infos.len(),
                level.id
            ));
        }
        if let Some(entry) = level.vnf_entries.get(&profile.id) {
            for info in infos {
                if info.current_vnf_il.as_deref() != Some(entry.vnf_il_ref.as_str()) {
                    return Err(format!(
                        "{} is at {:?}, NS-IL `{}` wants {}",
                        info.vnf_instance_id, info.current_vnf_il, level.id, entry.vnf_il_ref
                    ));
                }
            }
        }
    }
    if let Some((profile, _)) = per_profile.into_iter().next() {
        return Err(format!("VNF instances of undeclared profile `{profile}`"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn new_vnfc(id: &str, vdu: &str) -> NewVnfc {
        NewVnfc {
            id: id.into(),
            vdu_ref: vdu.into(),
            compute_handle: Some(format!("h-{id}")),
            storage_handles: vec![],
            zone_ref: Some(ZoneRef::new("pop-1", "zone-a")),
            vim_ref: Some("vim-1".into()),
        }
    }

    #[test]
    fn vnfc_lifecycle() {
        let info = VnfInfo::new("vnf-B-1", "VNFD#2", "Flavor#1", "vnf-B");
        let added = record_vnf_info_update(
            &info,
            &[VnfInfoChange::AddInstancesStopped {
                instances: vec![new_vnfc("c1", "VDU#2")],
            }],
            AuditSource::Step(15),
            4,
        )
        .unwrap();
        assert_eq!(added.vnfc("c1").unwrap().state, VnfcState::Stopped);
        assert_eq!(added.revision, 1);
        assert_eq!(info.revision, 0);

        let started = record_vnf_info_update(
            &added,
            &[VnfInfoChange::MarkStarted { ids: vec!["c1".into()] }],
            AuditSource::Step(19),
            9,
        )
        .unwrap();
        assert_eq!(started.vnfc("c1").unwrap().state, VnfcState::Started);

        let err = record_vnf_info_update(
            &started,
            &[VnfInfoChange::DeleteInstances { ids: vec!["c1".into()] }],
            AuditSource::Step(28),
            12,
        )
        .unwrap_err();
        assert!(matches!(err, IllegalTransition::WrongState { state: VnfcState::Started, .. }));

        let stopped = record_vnf_info_update(
            &started,
            &[VnfInfoChange::MarkStopped { ids: vec!["c1".into()] }],
            AuditSource::Step(24),
            13,
        )
        .unwrap();
        let gone = record_vnf_info_update(
            &stopped,
            &[VnfInfoChange::DeleteInstances { ids: vec!["c1".into()] }],
            AuditSource::Step(28),
            14,
        )
        .unwrap();
        assert!(gone.vnfc_instances.is_empty());
        let steps: Vec<AuditSource> = gone.audit.iter().map(|a| a.source).collect();
        assert_eq!(
            steps,
            vec![AuditSource::Step(15), AuditSource::Step(19), AuditSource::Step(24), AuditSource::Step(28)]
        );
        let reuse = record_vnf_info_update(
            &gone,
            &[VnfInfoChange::AddInstancesStopped {
                instances: vec![new_vnfc("c1", "VDU#2")],
            }],
            AuditSource::Step(15),
            15,
        );
        assert!(matches!(reuse, Err(IllegalTransition::DuplicateVnfc(_))));
    }

    #[test]
    fn removal_takes_highest_ordinals() {
        let info = VnfInfo::new("v", "d", "f", "p");
        let info = record_vnf_info_update(
            &info,
            &[
                VnfInfoChange::AddInstancesStopped {
                    instances: vec![new_vnfc("a", "VDU#1"), new_vnfc("b", "VDU#1"), new_vnfc("c", "VDU#1")],
                },
                VnfInfoChange::MarkStarted {
                    ids: vec!["a".into(), "b".into(), "c".into()],
                },
            ],
            AuditSource::Instantiation,
            0,
        )
        .unwrap();
        let ids: Vec<&str> = info.removal_candidates("VDU#1", 2).iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["c", "b"]);
    }
}
