use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::{CapacityVector, Dimension};
use crate::descriptor::{load_catalog_from_paths, validate_catalog, Catalog, LoadError, ValidationReport};
use crate::drpa::AntiAffinityRule;
use crate::monitoring::ThresholdSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSpec {
    pub id: String,
    pub total: CapacityVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopSpec {
    pub id: String,
    pub zones: Vec<ZoneSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VimSpec {
    pub id: String,
    pub pops: Vec<PopSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub vims: Vec<VimSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialInstance {
    #[serde(default = "default_ns_id")]
    pub ns_instance_id: String,
    pub nsd: String,
    pub flavor: String,
    pub ns_il: String,
}

fn default_ns_id() -> String {
    "ns-1".to_string()
}

/// Offered load on one monitored item, as an absolute demand in the units of
/// `dimension`. Utilization is demand over the running capacity of the
/// item's subject, so scaling lowers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub item: String,
    /// Defaults to the dimension the item's metric name maps to.
    #[serde(default)]
    pub dimension: Option<Dimension>,
    /// Half-width of uniform jitter added to every utilization sample.
    #[serde(default)]
    pub noise: f64,
    /// `(tick, demand)` breakpoints; demand holds until the next one.
    pub points: Vec<(u64, f64)>,
}

/// Indicator values an EM reports; a notification goes out on each change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorSpec {
    pub item: String,
    pub points: Vec<(u64, f64)>,
}

/// Capacity taken by something outside the NS at a given tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occupy {
    pub pop: String,
    pub zone: String,
    pub spec: CapacityVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalEvent {
    pub tick: u64,
    pub occupy: Occupy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    /// Samples are produced for ticks `0..horizon`.
    pub horizon: u64,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
    #[serde(default)]
    pub indicators: Vec<IndicatorSpec>,
    #[serde(default)]
    pub events: Vec<ExternalEvent>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    #[serde(default)]
    pub thresholds: Vec<ThresholdSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    pub reservation_enabled: bool,
    pub seed: u64,
    pub cost_weights: Option<CapacityVector>,
    pub target_utilization: f64,
    pub anti_affinity: Vec<AntiAffinityRule>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            reservation_enabled: true,
            seed: 0,
            cost_weights: None,
            target_utilization: 0.6,
            anti_affinity: Vec::new(),
        }
    }
}

/// Scenario file contents. `catalog_refs` are descriptor files or
/// directories, relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub catalog_refs: Vec<String>,
    pub topology: Topology,
    pub initial_instance: InitialInstance,
    pub workload: Workload,
    #[serde(default)]
    pub rules: RuleSet,
    #[serde(default)]
    pub options: Options,
}

/// A scenario with its catalog resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub catalog: Catalog,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Catalog(#[from] LoadError),
    #[error("catalog has {} validation issue(s):\n{0}", .0.len())]
    InvalidCatalog(ValidationReport),
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

impl ScenarioError {
    /// True for failures to read files, as opposed to bad contents.
    pub fn is_io(&self) -> bool {
        matches!(self, ScenarioError::Io { .. } | ScenarioError::Catalog(LoadError::Io { .. }))
    }
}

impl Scenario {
    pub fn new(doc: ScenarioDoc, catalog: Catalog) -> Self {
        Self { doc, catalog }
    }

    pub fn from_str_in(text: &str, base: &Path, name: &Path) -> Result<Self, ScenarioError> {
        let doc: ScenarioDoc = serde_json::from_str(text).map_err(|source| ScenarioError::Parse {
            path: name.to_path_buf(),
            source,
        })?;
        let paths: Vec<PathBuf> = doc.catalog_refs.iter().map(|r| base.join(r)).collect();
        let catalog = load_catalog_from_paths(&paths)?;
        Ok(Self { doc, catalog })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_str_in(&text, base, path)
    }

    /// Catalog validation first, then the scenario's own references.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let report = validate_catalog(&self.catalog);
        if !report.is_empty() {
            return Err(ScenarioError::InvalidCatalog(report));
        }
        let mut problems = Vec::new();
        let d = &self.doc;
        let init = &d.initial_instance;
        match self.catalog.ns_flavor(&init.nsd, &init.flavor) {
            Ok(fl) => {
                if fl.ns_il(&init.ns_il).is_none() {
                    problems.push(format!("initial NS-IL `{}` not in flavor `{}`", init.ns_il, fl.id));
                }
            }
            Err(e) => problems.push(e.to_string()),
        }
        let mut vims = BTreeSet::new();
        let mut pops = BTreeSet::new();
        for vim in &d.topology.vims {
            if !vims.insert(vim.id.as_str()) {
                problems.push(format!("duplicate VIM `{}`", vim.id));
            }
            for pop in &vim.pops {
                if !pops.insert(pop.id.as_str()) {
                    problems.push(format!("duplicate PoP `{}`", pop.id));
                }
                let mut zones = BTreeSet::new();
                for z in &pop.zones {
                    if !zones.insert(z.id.as_str()) {
                        problems.push(format!("duplicate zone `{}/{}`", pop.id, z.id));
                    }
                    if !z.total.is_nonnegative() {
                        problems.push(format!("zone `{}/{}` has negative capacity", pop.id, z.id));
                    }
                }
            }
        }
        if pops.is_empty() {
            problems.push("topology declares no PoP".to_string());
        }
        let nsd = self.catalog.nsd(&init.nsd).ok();
        let item = |id: &str| nsd.and_then(|n| n.monitored_info.iter().find(|i| i.id == id));
        for l in &d.workload.loads {
            match item(&l.item) {
                None => problems.push(format!("load references unknown monitored item `{}`", l.item)),
                Some(i) if i.source == crate::descriptor::MonitoredSource::VnfIndicator => {
                    problems.push(format!("load item `{}` is an indicator", l.item))
                }
                Some(i) => {
                    if l.dimension.is_none() && !crate::monitoring::default_dimension_map().contains_key(&i.name) {
                        problems.push(format!("load item `{}` needs an explicit dimension", l.item));
                    }
                }
            }
            if !(l.noise.is_finite() && l.noise >= 0.0) {
                problems.push(format!("load `{}` noise must be a non-negative number", l.item));
            }
            if l.points.iter().any(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
                problems.push(format!("load `{}` has a negative or non-finite demand", l.item));
            }
        }
        for ind in &d.workload.indicators {
            match item(&ind.item) {
                Some(i) if i.source == crate::descriptor::MonitoredSource::VnfIndicator => {}
                _ => problems.push(format!("indicator series references `{}`, which is not an indicator item", ind.item)),
            }
        }
        for e in &d.workload.events {
            if !pops.contains(e.occupy.pop.as_str()) {
                problems.push(format!("event at tick {} references unknown PoP `{}`", e.tick, e.occupy.pop));
            }
        }
        let o = &d.options;
        if !(o.target_utilization > 0.0 && o.target_utilization <= 1.0) {
            problems.push(format!("target_utilization {} outside (0, 1]", o.target_utilization));
        }
        if let Some(w) = &o.cost_weights {
            if !w.is_nonnegative() || w.is_zero() {
                problems.push("cost weights must be non-negative and not all zero".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(problems))
        }
    }
}
