use std::fmt::{self, Write as _};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::message::ActorId;

/// One delivered message or internal action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub seq: u64,
    pub tick: u64,
    pub step: Option<u8>,
    pub src: ActorId,
    pub dst: ActorId,
    pub name: String,
    pub op_id: Option<String>,
    pub digest: String,
    /// Canonical JSON the digest is computed over. Not part of the text form.
    #[serde(skip)]
    pub payload: serde_json::Value,
}

impl EventRecord {
    pub fn is_action(&self) -> bool {
        self.src == self.dst
    }
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let step = self.step.map_or_else(|| "-".to_string(), |s| s.to_string());
        write!(
            f,
            "{} {} {} {} {} {} {}",
            self.seq, self.tick, step, self.src, self.dst, self.name, self.digest
        )
    }
}

/// First 16 hex digits of the SHA-256 of the payload's compact JSON. Maps
/// serialize with sorted keys, so equal payloads hash equally.
pub fn payload_digest(payload: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(payload).expect("JSON values always serialize");
    let hash = Sha256::digest(&bytes);
    hash.iter().take(8).fold(String::with_capacity(16), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EventTrace {
    pub records: Vec<EventRecord>,
}

impl EventTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EventRecord> {
        self.records.iter()
    }

    /// Line-per-record text form, newline terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{r}");
        }
        out
    }

    pub fn named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a EventRecord> + 'a {
        self.records.iter().filter(move |r| r.name == name)
    }

    pub fn of_op<'a>(&'a self, op_id: &'a str) -> impl Iterator<Item = &'a EventRecord> + 'a {
        self.records.iter().filter(move |r| r.op_id.as_deref() == Some(op_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_key_order_free() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b":1,"a":[2,3]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a":[2,3],"b":1}"#).unwrap();
        assert_eq!(payload_digest(&a), payload_digest(&b));
        assert_eq!(payload_digest(&a).len(), 16);
        assert_ne!(payload_digest(&a), payload_digest(&serde_json::json!({"a": [3, 2], "b": 1})));
    }

    #[test]
    fn text_line_layout() {
        let r = EventRecord {
            seq: 3,
            tick: 7,
            step: None,
            src: ActorId::vnfm(2),
            dst: ActorId::NFVO,
            name: "PerfInfoAvailable".into(),
            op_id: None,
            digest: "00ff".into(),
            payload: serde_json::Value::Null,
        };
        assert_eq!(r.to_string(), "3 7 - vnfm-2 nfvo PerfInfoAvailable 00ff");
        let r = EventRecord { step: Some(12), src: ActorId::vim(1), dst: ActorId::vim(1), ..r };
        assert_eq!(r.to_string(), "3 7 12 vim-1 vim-1 PerfInfoAvailable 00ff");
        assert!(r.is_action());
    }
}
