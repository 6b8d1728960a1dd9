use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Notification, NotificationKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub time: u64,
    /// NS or VNF instance id.
    pub subject: String,
    pub name: String,
    pub value: f64,
}

impl MetricSample {
    pub fn new(time: u64, subject: impl Into<String>, name: impl Into<String>, value: f64) -> Self {
        Self {
            time,
            subject: subject.into(),
            name: name.into(),
            value,
        }
    }

    pub fn key(&self) -> StreamKey {
        StreamKey::new(&self.subject, &self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub subject: String,
    pub name: String,
}

impl StreamKey {
    pub fn new(subject: &str, name: &str) -> Self {
        Self {
            subject: subject.to_string(),
            name: name.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdDirection {
    Above,
    Below,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub id: String,
    pub subject: String,
    pub metric: String,
    pub bound: f64,
    pub direction: ThresholdDirection,
}

impl ThresholdSpec {
    /// Whether `value` lies on the far side of the bound.
    pub fn is_crossed_by(&self, value: f64) -> bool {
        match self.direction {
            ThresholdDirection::Above => value > self.bound,
            ThresholdDirection::Below => value < self.bound,
        }
    }

    fn watches(&self, sample: &MetricSample) -> bool {
        self.subject == sample.subject && self.metric == sample.name
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitoringError {
    #[error("sample for {subject}/{name} at tick {time} precedes the last sample at tick {last}")]
    TimeRegression {
        subject: String,
        name: String,
        time: u64,
        last: u64,
    },
    #[error("threshold `{0}` has a non-finite bound")]
    NonFiniteBound(String),
    #[error("indicator `{name}` is not declared by the VNF's descriptor")]
    UndeclaredIndicator { name: String },
}

/// Reporting configuration of one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Ticks between performance reports; `None` disables reporting.
    pub collection_period: Option<u64>,
    /// Actor credited as the notification origin.
    pub origin: String,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            collection_period: None,
            origin: "monitor".to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Stream {
    config: StreamConfig,
    samples: Vec<(u64, f64)>,
    next_boundary: Option<u64>,
}

/// Append-only per-stream sample history with threshold edge state.
#[derive(Debug, Clone, Default)]
pub struct MetricStore {
    streams: BTreeMap<StreamKey, Stream>,
    /// Threshold id -> whether the last seen value was past the bound.
    crossed: BTreeMap<String, bool>,
}

impl MetricStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn configure(&mut self, key: StreamKey, config: StreamConfig) {
        self.streams.entry(key).or_default().config = config;
    }

    pub fn contains(&self, key: &StreamKey) -> bool {
        self.streams.get(key).is_some_and(|s| !s.samples.is_empty())
    }

    pub fn samples(&self, key: &StreamKey) -> &[(u64, f64)] {
        self.streams.get(key).map_or(&[], |s| &s.samples)
    }

    pub fn last(&self, key: &StreamKey) -> Option<(u64, f64)> {
        self.samples(key).last().copied()
    }

    /// Values with time in `(now - window, now]`.
    pub fn window(&self, key: &StreamKey, now: u64, window: u64) -> Vec<f64> {
        self.samples(key)
            .iter()
            .filter(|(t, _)| *t <= now && *t + window > now)
            .map(|(_, v)| *v)
            .collect()
    }

    /// Appends a sample and returns the notifications it triggers: one
    /// performance report per collection-period boundary reached, then one
    /// threshold crossing per watched threshold whose bound is newly passed.
    pub fn ingest_sample(
        &mut self,
        sample: MetricSample,
        thresholds: &[ThresholdSpec],
    ) -> Result<Vec<Notification>, MonitoringError> {
        for th in thresholds.iter().filter(|t| t.watches(&sample)) {
            if !th.bound.is_finite() {
                return Err(MonitoringError::NonFiniteBound(th.id.clone()));
            }
        }
        let key = sample.key();
        let stream = self.streams.entry(key.clone()).or_default();
        if let Some(&(last, _)) = stream.samples.last() {
            if sample.time < last {
                return Err(MonitoringError::TimeRegression {
                    subject: sample.subject,
                    name: sample.name,
                    time: sample.time,
                    last,
                });
            }
        }
        stream.samples.push((sample.time, sample.value));

        let mut out = Vec::new();
        if let Some(period) = stream.config.collection_period.filter(|p| *p > 0) {
            let mut next = stream
                .next_boundary
                .unwrap_or_else(|| sample.time.div_ceil(period) * period);
            while next <= sample.time {
                let batch: Vec<(u64, f64)> = stream
                    .samples
                    .iter()
                    .filter(|(t, _)| *t <= next && *t + period > next)
                    .copied()
                    .collect();
                out.push(Notification {
                    time: sample.time,
                    origin: stream.config.origin.clone(),
                    kind: NotificationKind::PerfInfoAvailable {
                        subject: key.subject.clone(),
                        name: key.name.clone(),
                        samples: batch,
                    },
                });
                next += period;
            }
            stream.next_boundary = Some(next);
        }
        let origin = stream.config.origin.clone();

        for th in thresholds.iter().filter(|t| t.watches(&sample)) {
            let now = th.is_crossed_by(sample.value);
            let before = self.crossed.insert(th.id.clone(), now);
            if now && before == Some(false) {
                out.push(Notification {
                    time: sample.time,
                    origin: origin.clone(),
                    kind: NotificationKind::ThresholdCrossed {
                        threshold_id: th.id.clone(),
                        subject: sample.subject.clone(),
                        metric: sample.name.clone(),
                        value: sample.value,
                    },
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn above(bound: f64) -> ThresholdSpec {
        ThresholdSpec {
            id: "t".into(),
            subject: "vnf-B-1".into(),
            metric: "cpu_util".into(),
            bound,
            direction: ThresholdDirection::Above,
        }
    }

    fn crossings(ns: &[Notification]) -> usize {
        ns.iter()
            .filter(|n| matches!(n.kind, NotificationKind::ThresholdCrossed { .. }))
            .count()
    }

    #[test]
    fn rising_edge_notifies_once() {
        let mut store = MetricStore::new();
        let th = [above(0.8)];
        assert_eq!(crossings(&store.ingest_sample(MetricSample::new(0, "vnf-B-1", "cpu_util", 0.7), &th).unwrap()), 0);
        let out = store.ingest_sample(MetricSample::new(1, "vnf-B-1", "cpu_util", 0.9), &th).unwrap();
        assert_eq!(crossings(&out), 1);
        match &out[0].kind {
            NotificationKind::ThresholdCrossed { threshold_id, value, .. } => {
                assert_eq!((threshold_id.as_str(), *value), ("t", 0.9));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn staying_above_is_silent() {
        let mut store = MetricStore::new();
        let th = [above(0.8)];
        store.ingest_sample(MetricSample::new(0, "vnf-B-1", "cpu_util", 0.9), &th).unwrap();
        let out = store.ingest_sample(MetricSample::new(1, "vnf-B-1", "cpu_util", 0.95), &th).unwrap();
        assert_eq!(crossings(&out), 0);
    }

    #[test]
    fn time_regression_is_rejected() {
        let mut store = MetricStore::new();
        store.ingest_sample(MetricSample::new(5, "x", "m", 1.0), &[]).unwrap();
        let err = store.ingest_sample(MetricSample::new(4, "x", "m", 1.0), &[]).unwrap_err();
        assert!(matches!(err, MonitoringError::TimeRegression { time: 4, last: 5, .. }));
        assert_eq!(store.samples(&StreamKey::new("x", "m")).len(), 1);
    }

    #[test]
    fn collection_period_boundaries() {
        let mut store = MetricStore::new();
        let key = StreamKey::new("ns-1", "vl_util");
        store.configure(
            key.clone(),
            StreamConfig {
                collection_period: Some(5),
                origin: "vim-1".into(),
            },
        );
        let mut reports = Vec::new();
        for t in 1..=12 {
            for n in store.ingest_sample(MetricSample::new(t, "ns-1", "vl_util", t as f64), &[]).unwrap() {
                reports.push(n);
            }
        }
        assert_eq!(reports.len(), 2);
        match &reports[1].kind {
            NotificationKind::PerfInfoAvailable { samples, .. } => {
                let times: Vec<u64> = samples.iter().map(|s| s.0).collect();
                assert_eq!(times, vec![6, 7, 8, 9, 10]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(reports[0].origin, "vim-1");
    }

    #[test]
    fn window_is_half_open() {
        let mut store = MetricStore::new();
        for t in 0..6 {
            store.ingest_sample(MetricSample::new(t, "s", "m", t as f64), &[]).unwrap();
        }
        let key = StreamKey::new("s", "m");
        assert_eq!(store.window(&key, 5, 3), vec![3.0, 4.0, 5.0]);
        assert_eq!(store.window(&key, 5, 1), vec![5.0]);
        assert_eq!(store.window(&key, 1, 3), vec![0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn crossings_equal_upward_sign_changes(values in proptest::collection::vec(0.0f64..1.0, 1..60), bound in 0.1f64..0.9) {
            let mut store = MetricStore::new();
            let th = [above(bound)];
            let mut emitted = 0;
            for (t, v) in values.iter().enumerate() {
                let out = store.ingest_sample(MetricSample::new(t as u64, "vnf-B-1", "cpu_util", *v), &th).unwrap();
                emitted += crossings(&out);
            }
            let expected = values.windows(2).filter(|w| w[0] <= bound && w[1] > bound).count();
            prop_assert_eq!(emitted, expected);
        }

        #[test]
        fn identical_inputs_give_identical_notifications(values in proptest::collection::vec(0.0f64..1.0, 1..40)) {
            let run = || {
                let mut store = MetricStore::new();
                store.configure(StreamKey::new("vnf-B-1", "cpu_util"), StreamConfig { collection_period: Some(3), origin: "o".into() });
                let th = [above(0.5)];
                values.iter().enumerate().flat_map(|(t, v)| {
                    store.ingest_sample(MetricSample::new(t as u64, "vnf-B-1", "cpu_util", *v), &th).unwrap()
                }).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }

        #[test]
        fn window_matches_brute_force(values in proptest::collection::vec(0.0f64..10.0, 1..40), now in 0u64..45, w in 1u64..10) {
            let mut store = MetricStore::new();
            for (t, v) in values.iter().enumerate() {
                store.ingest_sample(MetricSample::new(t as u64, "s", "m", *v), &[]).unwrap();
            }
            let got = store.window(&StreamKey::new("s", "m"), now, w);
            let expected: Vec<f64> = values.iter().enumerate()
                .filter(|(t, _)| (*t as u64) <= now && (*t as i64) > now as i64 - w as i64)
                .map(|(_, v)| *v).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
