use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::capacity::{CapacityVector, ResourceKind};
use crate::inventory::{AllocationItem, VnfInfoChange, VnfcState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ActorKind {
    Nfvo,
    Vnfm,
    Vim,
    Em,
}

/// A functional block. Indices start at 1; there is a single NFVO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActorId {
    pub kind: ActorKind,
    pub index: u32,
}

impl ActorId {
    pub const NFVO: ActorId = ActorId { kind: ActorKind::Nfvo, index: 1 };

    pub fn vnfm(index: u32) -> Self {
        Self { kind: ActorKind::Vnfm, index }
    }

    pub fn vim(index: u32) -> Self {
        Self { kind: ActorKind::Vim, index }
    }

    pub fn em(index: u32) -> Self {
        Self { kind: ActorKind::Em, index }
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActorKind::Nfvo => f.write_str("nfvo"),
            ActorKind::Vnfm => write!(f, "vnfm-{}", self.index),
            ActorKind::Vim => write!(f, "vim-{}", self.index),
            ActorKind::Em => write!(f, "em-{}", self.index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperationKind {
    ScaleVnf,
    AddVnf,
    RemoveVnf,
    /// NS virtual-link bitrate change with no VNF affected, driven by the NFVO.
    ModifyVl,
}

impl OperationKind {
    pub fn name(self) -> &'static str {
        match self {
            OperationKind::ScaleVnf => "scale-vnf",
            OperationKind::AddVnf => "add-vnf",
            OperationKind::RemoveVnf => "remove-vnf",
            OperationKind::ModifyVl => "modify-vl",
        }
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrantIntent {
    Allocate,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppAction {
    Configure,
    Reconfigure,
    Shutdown,
}

/// A reservation handed to the VNFM, with the VIM and PoP that hold it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservationGrant {
    pub reservation_id: String,
    pub vim: String,
    pub pop: String,
    pub kind: ResourceKind,
}

/// Where a reservation may go: the PoP chosen by the decision and the
/// anti-affinity labels of the resources it backs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementHint {
    pub pop: String,
    pub labels: BTreeSet<String>,
}

/// Workflow and monitoring messages exchanged between the functional blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "variant", bound(serialize = "S: Scalar"))]
pub enum Message<S = f64> {
    PerfInfoAvailable {
        subject: String,
        name: String,
        time: u64,
        samples: Vec<(u64, f64)>,
    },
    ThresholdCrossed {
        threshold_id: String,
        subject: String,
        metric: String,
        time: u64,
        value: f64,
    },
    VnfIndicatorNotify {
        vnf_instance: String,
        name: String,
        time: u64,
        value: f64,
    },
    ScaleVnfToLevelRequest {
        op: OperationKind,
        op_id: String,
        vnf_instance: String,
        /// `None` scales the instance down to nothing.
        new_vnf_il: Option<String>,
    },
    ScaleVnfToLevelResponse {
        op_id: String,
    },
    GrantRequest {
        op_id: String,
        vdu_ids: Vec<String>,
        internal_vl_ids: Vec<String>,
        intent: GrantIntent,
    },
    GrantResponse {
        op_id: String,
        granted: bool,
        reason: Option<String>,
        reservation_ids: Option<Vec<ReservationGrant>>,
        vim_connectivity: Option<BTreeMap<String, String>>,
        /// Addition id -> PoP.
        placement: BTreeMap<String, String>,
    },
    ReserveRequest {
        op_id: String,
        kind: ResourceKind,
        spec: CapacityVector<S>,
        placement_constraints: PlacementHint,
    },
    ReserveResponse {
        op_id: String,
        reservation_id: Option<String>,
        error: Option<String>,
    },
    AllocateRequest {
        op_id: String,
        reservation_id: Option<String>,
        spec: Option<CapacityVector<S>>,
        kind: ResourceKind,
        pop: String,
        items: Vec<AllocationItem<S>>,
    },
    AllocateResponse {
        op_id: String,
        handles: Vec<String>,
        error: Option<String>,
    },
    ConfigureVnfc {
        op_id: String,
        instance_ids: Vec<String>,
    },
    OperateVnfRequest {
        op_id: String,
        target_state: VnfcState,
    },
    OperateVnfGrant {
        op_id: String,
        target_state: VnfcState,
    },
    AppConfigure {
        op_id: String,
        instance_ids: Vec<String>,
        action: AppAction,
    },
    VnfInfoUpdate {
        op_id: String,
        step: u8,
        vnf_instance: String,
        changes: Vec<VnfInfoChange>,
    },
    ReleaseRequest {
        op_id: String,
        handles: Vec<String>,
        /// Capacity to re-create in place after the release (a virtual link
        /// shrinking to a lower bitrate).
        retain: Vec<AllocationItem<S>>,
    },
    ReleaseResponse {
        op_id: String,
        handles: Vec<String>,
    },
}

impl<S> Message<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Message::PerfInfoAvailable { .. } => "PerfInfoAvailable",
            Message::ThresholdCrossed { .. } => "ThresholdCrossed",
            Message::VnfIndicatorNotify { .. } => "VnfIndicatorNotify",
            Message::ScaleVnfToLevelRequest { .. } => "ScaleVnfToLevelRequest",
            Message::ScaleVnfToLevelResponse { .. } => "ScaleVnfToLevelResponse",
            Message::GrantRequest { .. } => "GrantRequest",
            Message::GrantResponse { .. } => "GrantResponse",
            Message::ReserveRequest { .. } => "ReserveRequest",
            Message::ReserveResponse { .. } => "ReserveResponse",
            Message::AllocateRequest { .. } => "AllocateRequest",
            Message::AllocateResponse { .. } => "AllocateResponse",
            Message::ConfigureVnfc { .. } => "ConfigureVnfc",
            Message::OperateVnfRequest { .. } => "OperateVnfRequest",
            Message::OperateVnfGrant { .. } => "OperateVnfGrant",
            Message::AppConfigure { .. } => "AppConfigure",
            Message::VnfInfoUpdate { .. } => "VnfInfoUpdate",
            Message::ReleaseRequest { .. } => "ReleaseRequest",
            Message::ReleaseResponse { .. } => "ReleaseResponse",
        }
    }

    /// Lifecycle operation the message belongs to; monitoring traffic has none.
    pub fn op_id(&self) -> Option<&str> {
        match self {
            Message::PerfInfoAvailable { .. }
            | Message::ThresholdCrossed { .. }
            | Message::VnfIndicatorNotify { .. } => None,
            Message::ScaleVnfToLevelRequest { op_id, .. }
            | Message::ScaleVnfToLevelResponse { op_id }
            | Message::GrantRequest { op_id, .. }
            | Message::GrantResponse { op_id, .. }
            | Message::ReserveRequest { op_id, .. }
            | Message::ReserveResponse { op_id, .. }
            | Message::AllocateRequest { op_id, .. }
            | Message::AllocateResponse { op_id, .. }
            | Message::ConfigureVnfc { op_id, .. }
            | Message::OperateVnfRequest { op_id, .. }
            | Message::OperateVnfGrant { op_id, .. }
            | Message::AppConfigure { op_id, .. }
            | Message::VnfInfoUpdate { op_id, .. }
            | Message::ReleaseRequest { op_id, .. }
            | Message::ReleaseResponse { op_id, .. } => Some(op_id),
        }
    }
}
