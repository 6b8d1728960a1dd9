//! Design-time information model: NSD, VNFD, VLD and VNFFGD documents,
//! deployment flavors and instantiation levels.
//!
//! Descriptor quantities are kept as parsed (`f64` GiB / Mbit/s, integer
//! vCPUs). Capacity arithmetic over them is generic over
//! [`Scalar`](crate::scalar::Scalar) and lives in [`delta`].

pub mod delta;
pub mod fixture;
mod load;
mod validate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitoring::rule::{RuleAst, RuleParseError, ScaleDirection};

pub use delta::{
    aggregate_capacity, classify, counts_capacity, counts_delta, counts_delta_for, ns_il_delta,
    vdu_capacity, vnf_il_capacity, vnf_il_delta, IlDelta,
    NsIlDelta, Procedure, ProfileDelta, VlChange,
};
pub use load::{load_catalog, load_catalog_from_paths, Document, LoadError, SourceDocument};
pub use validate::{validate_catalog, IssueKind, ValidationIssue, ValidationReport};

/// Subject value naming the network service itself in monitored info.
pub const NS_SELF: &str = "ns-self";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub nsds: BTreeMap<String, Nsd>,
    pub vnfds: BTreeMap<String, Vnfd>,
    pub vlds: BTreeMap<String, Vld>,
    pub vnffgds: BTreeMap<String, VnffgDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nsd {
    pub id: String,
    #[serde(default)]
    pub version: String,
    pub vnfd_refs: Vec<String>,
    #[serde(default)]
    pub vld_refs: Vec<String>,
    #[serde(default)]
    pub vnffgd_refs: Vec<String>,
    #[serde(default)]
    pub monitored_info: Vec<MonitoredInfoItem>,
    #[serde(default)]
    pub auto_scaling_rules: Vec<AutoScalingRule>,
    pub flavors: Vec<NsDeploymentFlavor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitoredSource {
    NsMetric,
    VnfMetric,
    VnfIndicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitoredInfoItem {
    pub id: String,
    pub source: MonitoredSource,
    /// A VNFD id, or [`NS_SELF`].
    pub subject: String,
    pub name: String,
    /// Logical ticks between performance reports; metrics only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collection_period: Option<u64>,
}

impl MonitoredInfoItem {
    pub fn is_ns_level(&self) -> bool {
        self.subject == NS_SELF
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoScalingRule {
    pub id: String,
    pub text: String,
    /// Declared cooldown; must agree with a `COOLDOWN` clause when both exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cooldown: Option<u64>,
    /// Declared direction; must agree with the rule's `THEN` clause.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction_hint: Option<ScaleDirection>,
    #[serde(skip)]
    pub ast: Option<RuleAst>,
    #[serde(skip)]
    pub parse_error: Option<RuleParseError>,
}

impl AutoScalingRule {
    /// Builds a rule and parses its text.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let mut rule = Self {
            id: id.into(),
            text: text.into(),
            cooldown: None,
            direction_hint: None,
            ast: None,
            parse_error: None,
        };
        rule.parse();
        rule
    }

    pub(crate) fn parse(&mut self) {
        match crate::monitoring::rule::parse_rule(&self.text) {
            Ok(ast) => {
                self.ast = Some(ast);
                self.parse_error = None;
            }
            Err(e) => {
                self.ast = None;
                self.parse_error = Some(e);
            }
        }
    }

    pub fn effective_cooldown(&self) -> u64 {
        self.ast
            .as_ref()
            .and_then(|a| a.cooldown)
            .or(self.cooldown)
            .unwrap_or(0)
    }

    pub fn direction(&self) -> Option<ScaleDirection> {
        self.ast.as_ref().map(|a| a.action).or(self.direction_hint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vnfd {
    pub id: String,
    #[serde(default)]
    pub version: String,
    pub vdus: Vec<Vdu>,
    pub vcds: Vec<Vcd>,
    #[serde(default)]
    pub vsds: Vec<Vsd>,
    #[serde(default)]
    pub internal_vlds: Vec<Vld>,
    #[serde(default)]
    pub vnf_indicators: Vec<String>,
    pub flavors: Vec<VnfDeploymentFlavor>,
}

impl Vnfd {
    pub fn vdu(&self, id: &str) -> Option<&Vdu> {
        self.vdus.iter().find(|v| v.id == id)
    }

    pub fn vcd(&self, id: &str) -> Option<&Vcd> {
        self.vcds.iter().find(|v| v.id == id)
    }

    pub fn vsd(&self, id: &str) -> Option<&Vsd> {
        self.vsds.iter().find(|v| v.id == id)
    }

    pub fn flavor(&self, id: &str) -> Option<&VnfDeploymentFlavor> {
        self.flavors.iter().find(|f| f.id == id)
    }

    pub fn declares_indicator(&self, name: &str) -> bool {
        self.vnf_indicators.iter().any(|i| i == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vdu {
    pub id: String,
    pub vnfc_name: String,
    pub vcd_ref: String,
    #[serde(default)]
    pub vsd_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vcd {
    pub id: String,
    pub vcpu: u32,
    /// GiB.
    pub memory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vsd {
    pub id: String,
    /// GiB.
    pub storage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vld {
    pub id: String,
    pub flavors: Vec<VlFlavor>,
}

impl Vld {
    pub fn flavor(&self, id: &str) -> Option<&VlFlavor> {
        self.flavors.iter().find(|f| f.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VlFlavor {
    pub id: String,
    /// Milliseconds.
    pub latency: f64,
    /// Milliseconds.
    pub jitter: f64,
    pub reliability_class: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnffgDescriptor {
    pub id: String,
    pub vnfd_refs: Vec<String>,
    pub vld_refs: Vec<String>,
    #[serde(default)]
    pub plane_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfDeploymentFlavor {
    pub id: String,
    pub vdu_refs: Vec<String>,
    pub ils: Vec<VnfInstantiationLevel>,
}

impl VnfDeploymentFlavor {
    pub fn il(&self, id: &str) -> Option<&VnfInstantiationLevel> {
        self.ils.iter().find(|l| l.id == id)
    }
}

/// Per-VDU count of VNFC instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfInstantiationLevel {
    pub id: String,
    pub counts: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsDeploymentFlavor {
    pub id: String,
    pub vnf_profiles: Vec<VnfProfile>,
    #[serde(default)]
    pub vl_profiles: Vec<VlProfile>,
    pub ns_ils: Vec<NsInstantiationLevel>,
}

impl NsDeploymentFlavor {
    pub fn ns_il(&self, id: &str) -> Option<&NsInstantiationLevel> {
        self.ns_ils.iter().find(|l| l.id == id)
    }

    pub fn ns_il_index(&self, id: &str) -> Option<usize> {
        self.ns_ils.iter().position(|l| l.id == id)
    }

    pub fn vnf_profile(&self, id: &str) -> Option<&VnfProfile> {
        self.vnf_profiles.iter().find(|p| p.id == id)
    }

    pub fn vl_profile(&self, id: &str) -> Option<&VlProfile> {
        self.vl_profiles.iter().find(|p| p.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfProfile {
    pub id: String,
    pub vnfd_ref: String,
    pub vnf_flavor_ref: String,
    pub allowed_il_refs: Vec<String>,
    pub min_instances: u32,
    pub max_instances: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VlProfile {
    pub id: String,
    pub vld_ref: String,
    pub vl_flavor_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfEntry {
    pub vnf_il_ref: String,
    pub instance_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsInstantiationLevel {
    pub id: String,
    /// Keyed by VNF profile id; an absent profile means zero instances.
    pub vnf_entries: BTreeMap<String, VnfEntry>,
    /// VL profile id → bitrate in Mbit/s.
    #[serde(default)]
    pub vl_entries: BTreeMap<String, f64>,
}

impl NsInstantiationLevel {
    pub fn instance_count(&self, profile: &str) -> u32 {
        self.vnf_entries.get(profile).map_or(0, |e| e.instance_count)
    }

    pub fn total_instances(&self) -> u32 {
        self.vnf_entries.values().map(|e| e.instance_count).sum()
    }

    pub fn bitrate(&self, vl_profile: &str) -> f64 {
        self.vl_entries.get(vl_profile).copied().unwrap_or(0.0)
    }
}

/// A failed lookup of a descriptor element.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} `{id}`")]
pub struct UnknownId {
    pub kind: &'static str,
    pub id: String,
}

impl UnknownId {
    pub fn new(kind: &'static str, id: impl Into<String>) -> Self {
        Self { kind, id: id.into() }
    }
}

impl Catalog {
    pub fn is_empty(&self) -> bool {
        self.nsds.is_empty() && self.vnfds.is_empty() && self.vlds.is_empty() && self.vnffgds.is_empty()
    }

    pub fn nsd(&self, id: &str) -> Result<&Nsd, UnknownId> {
        self.nsds.get(id).ok_or_else(|| UnknownId::new("NSD", id))
    }

    pub fn vnfd(&self, id: &str) -> Result<&Vnfd, UnknownId> {
        self.vnfds.get(id).ok_or_else(|| UnknownId::new("VNFD", id))
    }

    pub fn vld(&self, id: &str) -> Result<&Vld, UnknownId> {
        self.vlds.get(id).ok_or_else(|| UnknownId::new("VLD", id))
    }

    pub fn ns_flavor(&self, nsd: &str, flavor: &str) -> Result<&NsDeploymentFlavor, UnknownId> {
        self.nsd(nsd)?
            .flavors
            .iter()
            .find(|f| f.id == flavor)
            .ok_or_else(|| UnknownId::new("NS flavor", flavor))
    }

    /// Resolves a VNF profile to its VNFD and VNF flavor.
    pub fn profile_target(
        &self,
        profile: &VnfProfile,
    ) -> Result<(&Vnfd, &VnfDeploymentFlavor), UnknownId> {
        let vnfd = self.vnfd(&profile.vnfd_ref)?;
        let flavor = vnfd
            .flavor(&profile.vnf_flavor_ref)
            .ok_or_else(|| UnknownId::new("VNF flavor", &profile.vnf_flavor_ref))?;
        Ok((vnfd, flavor))
    }
}
