//! Metric ingestion, threshold alarms, indicator changes and auto-scaling
//! rule evaluation.

pub mod rule;
mod store;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::capacity::Dimension;
use crate::descriptor::{AutoScalingRule, MonitoredInfoItem, Nsd, Vnfd, NS_SELF};
use rule::{Aggregate, RuleAst, ScaleDirection, WindowedMetric};

pub use rule::{parse_rule, RuleParseError};
pub use store::{
    MetricSample, MetricStore, MonitoringError, StreamConfig, StreamKey, ThresholdDirection,
    ThresholdSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum NotificationKind {
    PerfInfoAvailable {
        subject: String,
        name: String,
        samples: Vec<(u64, f64)>,
    },
    ThresholdCrossed {
        threshold_id: String,
        subject: String,
        metric: String,
        value: f64,
    },
    VnfIndicatorChange {
        vnf_instance: String,
        name: String,
        value: f64,
    },
}

impl NotificationKind {
    pub fn name(&self) -> &'static str {
        match self {
            NotificationKind::PerfInfoAvailable { .. } => "PerfInfoAvailable",
            NotificationKind::ThresholdCrossed { .. } => "ThresholdCrossed",
            NotificationKind::VnfIndicatorChange { .. } => "VnfIndicatorChange",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub time: u64,
    pub origin: String,
    pub kind: NotificationKind,
}

/// Builds the notification for an indicator value reported by an EM. Equal
/// consecutive values still notify.
pub fn indicator_change(
    vnfd: &Vnfd,
    vnf_instance: &str,
    name: &str,
    value: f64,
    time: u64,
    origin: &str,
) -> Result<Notification, MonitoringError> {
    if !vnfd.declares_indicator(name) {
        return Err(MonitoringError::UndeclaredIndicator {
            name: name.to_string(),
        });
    }
    Ok(Notification {
        time,
        origin: origin.to_string(),
        kind: NotificationKind::VnfIndicatorChange {
            vnf_instance: vnf_instance.to_string(),
            name: name.to_string(),
            value,
        },
    })
}

/// Metric-name to capacity-dimension map used to decide which dimensions a
/// violated rule implicates.
pub fn default_dimension_map() -> BTreeMap<String, Dimension> {
    [
        ("cpu_util", Dimension::Vcpu),
        ("mem_util", Dimension::Memory),
        ("storage_util", Dimension::Storage),
        ("bw_util", Dimension::Bandwidth),
        ("vl_util", Dimension::Bandwidth),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Aggregated value of one windowed reference at evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Monitored-info item id.
    pub item: String,
    /// VNFD id or `ns-self`.
    pub subject: String,
    pub name: String,
    pub aggregate: Aggregate,
    pub window: u64,
    pub value: f64,
    pub dimension: Option<Dimension>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleVerdict {
    pub rule_id: String,
    pub direction: ScaleDirection,
    pub satisfied: bool,
    pub violated_dimensions: BTreeSet<Dimension>,
    pub time: u64,
    /// Suppressed because the rule fired less than its cooldown ago.
    pub cooldown: bool,
    /// Item ids with no data in their window; the rule counts as satisfied.
    pub missing: Vec<String>,
    pub observations: Vec<Observation>,
}

impl RuleVerdict {
    pub fn is_violated(&self) -> bool {
        !self.satisfied
    }
}

#[derive(Debug, Clone)]
struct BoundRule {
    id: String,
    ast: RuleAst,
    cooldown: u64,
}

/// Evaluates an NSD's rules against a metric store.
///
/// Item references resolve to every running instance of the item's subject
/// VNFD (or to the NS instance for `ns-self`); samples of all those streams
/// are pooled into one window.
#[derive(Debug, Clone)]
pub struct RuleEvaluator {
    rules: Vec<BoundRule>,
    items: BTreeMap<String, MonitoredInfoItem>,
    dimensions: BTreeMap<String, Dimension>,
    ns_instance: String,
    instances: BTreeMap<String, Vec<String>>,
    last_violation: BTreeMap<String, u64>,
}

impl RuleEvaluator {
    /// Rules that failed to parse are skipped; catalog validation reports them.
    pub fn new(
        rules: &[AutoScalingRule],
        items: &[MonitoredInfoItem],
        dimensions: BTreeMap<String, Dimension>,
        ns_instance: &str,
    ) -> Self {
        Self {
            rules: rules
                .iter()
                .filter_map(|r| {
                    r.ast.clone().map(|ast| BoundRule {
                        id: r.id.clone(),
                        cooldown: r.effective_cooldown(),
                        ast,
                    })
                })
                .collect(),
            items: items.iter().map(|i| (i.id.clone(), i.clone())).collect(),
            dimensions,
            ns_instance: ns_instance.to_string(),
            instances: BTreeMap::new(),
            last_violation: BTreeMap::new(),
        }
    }

    pub fn for_nsd(nsd: &Nsd, dimensions: BTreeMap<String, Dimension>, ns_instance: &str) -> Self {
        Self::new(&nsd.auto_scaling_rules, &nsd.monitored_info, dimensions, ns_instance)
    }

    /// Replaces the instance ids currently deployed from `vnfd_id`.
    pub fn set_instances(&mut self, vnfd_id: &str, instances: Vec<String>) {
        self.instances.insert(vnfd_id.to_string(), instances);
    }

    pub fn rule_ids(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.id.as_str())
    }

    pub fn last_violation(&self, rule_id: &str) -> Option<u64> {
        self.last_violation.get(rule_id).copied()
    }

    /// Streams an item reference reads from.
    pub fn streams_of(&self, item_id: &str) -> Vec<StreamKey> {
        let Some(item) = self.items.get(item_id) else {
            return Vec::new();
        };
        if item.subject == NS_SELF {
            return vec![StreamKey::new(&self.ns_instance, &item.name)];
        }
        self.instances
            .get(&item.subject)
            .map(|ids| ids.iter().map(|id| StreamKey::new(id, &item.name)).collect())
            .unwrap_or_default()
    }

    fn observe(&self, store: &MetricStore, m: &WindowedMetric, now: u64) -> Option<Observation> {
        let item = self.items.get(&m.metric)?;
        let mut values = Vec::new();
        for key in self.streams_of(&m.metric) {
            values.extend(store.window(&key, now, m.window));
        }
        let value = m.aggregate.apply(&values)?;
        Some(Observation {
            item: item.id.clone(),
            subject: item.subject.clone(),
            name: item.name.clone(),
            aggregate: m.aggregate,
            window: m.window,
            value,
            dimension: self.dimensions.get(&item.name).copied(),
        })
    }

    /// One verdict per rule at tick `now`. Violations start the rule's
    /// cooldown.
    pub fn evaluate(&mut self, store: &MetricStore, now: u64) -> Vec<RuleVerdict> {
        let mut out = Vec::with_capacity(self.rules.len());
        for rule in &self.rules {
            let mut verdict = RuleVerdict {
                rule_id: rule.id.clone(),
                direction: rule.ast.action,
                satisfied: true,
                violated_dimensions: BTreeSet::new(),
                time: now,
                cooldown: false,
                missing: Vec::new(),
                observations: Vec::new(),
            };
            if let Some(last) = self.last_violation.get(&rule.id) {
                if now.saturating_sub(*last) < rule.cooldown {
                    verdict.cooldown = true;
                    out.push(verdict);
                    continue;
                }
            }
            let mut refs = Vec::new();
            rule.ast.condition.for_each_metric(&mut |m| refs.push(m.clone()));
            let mut values = BTreeMap::new();
            for m in &refs {
                match self.observe(store, m, now) {
                    Some(obs) => {
                        values.insert((m.metric.clone(), m.aggregate.name(), m.window), obs.value);
                        if !verdict.observations.contains(&obs) {
                            verdict.observations.push(obs);
                        }
                    }
                    None => {
                        if !verdict.missing.contains(&m.metric) {
                            verdict.missing.push(m.metric.clone());
                        }
                    }
                }
            }
            let fired = verdict.missing.is_empty()
                && rule
                    .ast
                    .condition
                    .eval(&|m| values.get(&(m.metric.clone(), m.aggregate.name(), m.window)).copied())
                    .unwrap_or(false);
            if fired {
                verdict.satisfied = false;
                verdict.violated_dimensions =
                    verdict.observations.iter().filter_map(|o| o.dimension).collect();
            }
            out.push(verdict);
        }
        for v in &out {
            if v.is_violated() {
                self.last_violation.insert(v.rule_id.clone(), now);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::fixture::{fig4_catalog, NSD_ID};

    fn evaluator_with(values: &[f64]) -> (RuleEvaluator, MetricStore) {
        let catalog = fig4_catalog();
        let nsd = &catalog.nsds[NSD_ID];
        let cpu_out = nsd.auto_scaling_rules.iter().find(|r| r.id == "rule-cpu-out").unwrap();
        let mut ev = RuleEvaluator::new(
            std::slice::from_ref(cpu_out),
            &nsd.monitored_info,
            default_dimension_map(),
            "ns-1",
        );
        ev.set_instances("VNFD#2", vec!["vnf-B-1".into()]);
        let mut store = MetricStore::new();
        for (t, v) in values.iter().enumerate() {
            store
                .ingest_sample(MetricSample::new(t as u64 + 1, "vnf-B-1", "cpu_util", *v), &[])
                .unwrap();
        }
        (ev, store)
    }

    #[test]
    fn high_window_violates() {
        let (mut ev, store) = evaluator_with(&[0.9, 0.9, 0.9]);
        let v = &ev.evaluate(&store, 3)[0];
        assert!(!v.satisfied);
        assert_eq!(v.direction, ScaleDirection::ScaleOut);
        assert_eq!(v.violated_dimensions, BTreeSet::from([Dimension::Vcpu]));
        assert!((v.observations[0].value - 0.9).abs() < 1e-12);
    }

    #[test]
    fn low_window_is_satisfied() {
        let (mut ev, store) = evaluator_with(&[0.5, 0.5, 0.5]);
        let v = &ev.evaluate(&store, 3)[0];
        assert!(v.satisfied && !v.cooldown);
        assert!(v.violated_dimensions.is_empty());
    }

    #[test]
    fn cooldown_suppresses_next_tick() {
        let (mut ev, mut store) = evaluator_with(&[0.9, 0.9, 0.9]);
        assert!(!ev.evaluate(&store, 3)[0].satisfied);
        store.ingest_sample(MetricSample::new(4, "vnf-B-1", "cpu_util", 0.9), &[]).unwrap();
        let v = &ev.evaluate(&store, 4)[0];
        assert!(v.satisfied && v.cooldown);
        assert!(!ev.evaluate(&store, 13)[0].cooldown);
    }

    #[test]
    fn missing_stream_is_satisfied_and_reported() {
        let (mut ev, store) = evaluator_with(&[]);
        let v = &ev.evaluate(&store, 3)[0];
        assert!(v.satisfied);
        assert_eq!(v.missing, vec!["vnfB.cpu_util".to_string()]);
    }

    #[test]
    fn indicator_notifications() {
        let catalog = fig4_catalog();
        let vnfd = &catalog.vnfds["VNFD#2"];
        let n = indicator_change(vnfd, "vnf-B-1", "sessions_active", 1200.0, 7, "em-1").unwrap();
        assert_eq!(
            n.kind,
            NotificationKind::VnfIndicatorChange {
                vnf_instance: "vnf-B-1".into(),
                name: "sessions_active".into(),
                value: 1200.0
            }
        );
        let again = indicator_change(vnfd, "vnf-B-1", "sessions_active", 1200.0, 8, "em-1").unwrap();
        assert_eq!(again.time, 8);
        assert!(matches!(
            indicator_change(vnfd, "vnf-B-1", "foo", 1.0, 7, "em-1"),
            Err(MonitoringError::UndeclaredIndicator { .. })
        ));
    }
}
