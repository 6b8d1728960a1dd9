//! Runtime repositories: NFVI capacity accounting per resource zone,
//! reservations, resource handles, and NS/VNF instance records.

mod records;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::{CapacityVector, Dimension, ResourceKind};
use crate::scalar::Scalar;

pub use records::{
    check_quiescent, record_vnf_info_update, AuditEntry, AuditSource, IllegalTransition, NewVnfc,
    NsInfo, NsState, VlInstance, VnfInfo, VnfInfoChange, VnfcInstance, VnfcState,
};

/// A resource zone addressed through its PoP.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ZoneRef {
    pub pop: String,
    pub zone: String,
}

impl ZoneRef {
    pub fn new(pop: impl Into<String>, zone: impl Into<String>) -> Self {
        Self {
            pop: pop.into(),
            zone: zone.into(),
        }
    }
}

impl fmt::Display for ZoneRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.pop, self.zone)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct ResourceZone<S = f64> {
    pub id: String,
    pub total: CapacityVector<S>,
    pub allocated: CapacityVector<S>,
    pub reserved: CapacityVector<S>,
}

impl<S: Scalar> ResourceZone<S> {
    pub fn new(id: impl Into<String>, total: CapacityVector<S>) -> Self {
        Self {
            id: id.into(),
            total,
            allocated: CapacityVector::zero(),
            reserved: CapacityVector::zero(),
        }
    }

    pub fn available(&self) -> CapacityVector<S> {
        self.total - self.allocated - self.reserved
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct NfviPop<S = f64> {
    pub id: String,
    pub vim_ref: String,
    pub zones: Vec<ResourceZone<S>>,
}

impl<S: Scalar> NfviPop<S> {
    pub fn zone(&self, id: &str) -> Option<&ResourceZone<S>> {
        self.zones.iter().find(|z| z.id == id)
    }

    pub fn available(&self) -> CapacityVector<S> {
        self.zones.iter().map(|z| z.available()).sum()
    }

    pub fn total(&self) -> CapacityVector<S> {
        self.zones.iter().map(|z| z.total).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReservationState {
    Active,
    Consumed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Reservation<S = f64> {
    pub id: String,
    pub zone_ref: ZoneRef,
    pub spec: CapacityVector<S>,
    pub kind: ResourceKind,
    pub state: ReservationState,
    /// Anti-affinity labels of the resources the reservation is for.
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct ResourceHandle<S = f64> {
    pub id: String,
    pub zone_ref: ZoneRef,
    pub spec: CapacityVector<S>,
    pub kind: ResourceKind,
    /// What the handle backs, e.g. a VNFC id or `vl:<profile>`.
    pub resource: String,
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

/// One resource to create, optionally against a reservation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct AllocationItem<S = f64> {
    pub spec: CapacityVector<S>,
    pub resource: String,
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InventoryError {
    #[error("unknown NFVI-PoP `{0}`")]
    UnknownPop(String),
    #[error("unknown resource zone `{0}`")]
    UnknownZone(ZoneRef),
    #[error("insufficient {dimension} in {zone}: requested {requested}, available {available}")]
    Insufficient {
        zone: ZoneRef,
        dimension: Dimension,
        requested: f64,
        available: f64,
    },
    #[error("negative {dimension} in requested spec")]
    NegativeSpec { dimension: Dimension },
    #[error("{kind} request carries {dimension}")]
    OutsideKind {
        kind: ResourceKind,
        dimension: Dimension,
    },
    #[error("unknown reservation `{0}`")]
    UnknownReservation(String),
    #[error("reservation `{id}` is {state:?}, not active")]
    ReservationNotActive { id: String, state: ReservationState },
    #[error("reservation `{id}` does not match the request: {reason}")]
    ReservationMismatch { id: String, reason: String },
    #[error("request exceeds reservation `{id}` in {dimension}")]
    ExceedsReservation { id: String, dimension: Dimension },
    #[error("unknown resource handle `{0}`")]
    UnknownHandle(String),
    #[error("resource handle `{0}` was already released")]
    DoubleRelease(String),
}

/// Totals and derived availability of one zone.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct ZoneReport<S = f64> {
    pub vim: String,
    pub zone_ref: ZoneRef,
    pub total: CapacityVector<S>,
    pub allocated: CapacityVector<S>,
    pub reserved: CapacityVector<S>,
    pub available: CapacityVector<S>,
}

/// Capacity accounting across every PoP reachable through the VIMs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct Inventory<S = f64> {
    pub pops: BTreeMap<String, NfviPop<S>>,
    pub reservations: BTreeMap<String, Reservation<S>>,
    /// Outstanding handles.
    pub handles: BTreeMap<String, ResourceHandle<S>>,
    pub released: BTreeSet<String>,
    next_reservation: u64,
    next_handle: u64,
}

impl<S: Scalar> Default for Inventory<S> {
    fn default() -> Self {
        Self {
            pops: BTreeMap::new(),
            reservations: BTreeMap::new(),
            handles: BTreeMap::new(),
            released: BTreeSet::new(),
            next_reservation: 0,
            next_handle: 0,
        }
    }
}

fn check_spec<S: Scalar>(spec: &CapacityVector<S>, kind: ResourceKind) -> Result<(), InventoryError> {
    for d in Dimension::ALL {
        let v = spec.get(d);
        if v < S::zero() {
            return Err(InventoryError::NegativeSpec { dimension: d });
        }
        if v != S::zero() && d.kind() != kind {
            return Err(InventoryError::OutsideKind { kind, dimension: d });
        }
    }
    Ok(())
}

impl<S: Scalar> Inventory<S> {
    pub fn new(pops: impl IntoIterator<Item = NfviPop<S>>) -> Self {
        Self {
            pops: pops.into_iter().map(|p| (p.id.clone(), p)).collect(),
            ..Self::default()
        }
    }

    pub fn pop(&self, id: &str) -> Result<&NfviPop<S>, InventoryError> {
        self.pops.get(id).ok_or_else(|| InventoryError::UnknownPop(id.to_string()))
    }

    pub fn zone(&self, r: &ZoneRef) -> Result<&ResourceZone<S>, InventoryError> {
        self.pops
            .get(&r.pop)
            .and_then(|p| p.zone(&r.zone))
            .ok_or_else(|| InventoryError::UnknownZone(r.clone()))
    }

    fn zone_mut(&mut self, r: &ZoneRef) -> Result<&mut ResourceZone<S>, InventoryError> {
        self.pops
            .get_mut(&r.pop)
            .and_then(|p| p.zones.iter_mut().find(|z| z.id == r.zone))
            .ok_or_else(|| InventoryError::UnknownZone(r.clone()))
    }

    pub fn vim_of(&self, pop: &str) -> Option<&str> {
        self.pops.get(pop).map(|p| p.vim_ref.as_str())
    }

    /// Zones in PoP then zone declaration order.
    pub fn zone_refs(&self) -> Vec<ZoneRef> {
        self.pops
            .values()
            .flat_map(|p| p.zones.iter().map(|z| ZoneRef::new(&p.id, &z.id)))
            .collect()
    }

    /// Anti-affinity labels already present in a zone through outstanding
    /// handles and active reservations.
    pub fn zone_labels(&self, r: &ZoneRef) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for h in self.handles.values().filter(|h| &h.zone_ref == r) {
            out.extend(h.labels.iter().cloned());
        }
        for res in self
            .reservations
            .values()
            .filter(|x| &x.zone_ref == r && x.state == ReservationState::Active)
        {
            out.extend(res.labels.iter().cloned());
        }
        out
    }

    fn ensure_fits(&self, r: &ZoneRef, spec: &CapacityVector<S>) -> Result<(), InventoryError> {
        let available = self.zone(r)?.available();
        if let Some(d) = spec.first_excess(&available) {
            return Err(InventoryError::Insufficient {
                zone: r.clone(),
                dimension: d,
                requested: spec.get(d).to_f64(),
                available: available.get(d).to_f64(),
            });
        }
        Ok(())
    }

    pub fn reserve(
        &mut self,
        zone: &ZoneRef,
        spec: CapacityVector<S>,
        kind: ResourceKind,
        labels: BTreeSet<String>,
    ) -> Result<Reservation<S>, InventoryError> {
        check_spec(&spec, kind)?;
        self.ensure_fits(zone, &spec)?;
        self.zone_mut(zone)?.reserved += spec;
        self.next_reservation += 1;
        let res = Reservation {
            id: format!("res-{}", self.next_reservation),
            zone_ref: zone.clone(),
            spec,
            kind,
            state: ReservationState::Active,
            labels,
        };
        self.reservations.insert(res.id.clone(), res.clone());
        Ok(res)
    }

    pub fn cancel_reservation(&mut self, id: &str) -> Result<(), InventoryError> {
        let res = self.active_reservation(id)?.clone();
        self.zone_mut(&res.zone_ref)?.reserved -= res.spec;
        self.reservations.get_mut(id).unwrap().state = ReservationState::Cancelled;
        Ok(())
    }

    fn active_reservation(&self, id: &str) -> Result<&Reservation<S>, InventoryError> {
        let res = self
            .reservations
            .get(id)
            .ok_or_else(|| InventoryError::UnknownReservation(id.to_string()))?;
        if res.state != ReservationState::Active {
            return Err(InventoryError::ReservationNotActive {
                id: id.to_string(),
                state: res.state,
            });
        }
        Ok(res)
    }

    fn new_handle(
        &mut self,
        zone: &ZoneRef,
        kind: ResourceKind,
        item: AllocationItem<S>,
    ) -> ResourceHandle<S> {
        self.next_handle += 1;
        let handle = ResourceHandle {
            id: format!("h-{}", self.next_handle),
            zone_ref: zone.clone(),
            spec: item.spec,
            kind,
            resource: item.resource,
            labels: item.labels,
        };
        self.handles.insert(handle.id.clone(), handle.clone());
        handle
    }

    /// Creates one resource, either from free capacity or by consuming an
    /// active reservation of the same zone and kind.
    pub fn allocate(
        &mut self,
        zone: &ZoneRef,
        kind: ResourceKind,
        item: AllocationItem<S>,
        from_reservation: Option<&str>,
    ) -> Result<ResourceHandle<S>, InventoryError> {
        match from_reservation {
            Some(id) => {
                let res = self.active_reservation(id)?;
                if &res.zone_ref != zone || res.kind != kind {
                    return Err(InventoryError::ReservationMismatch {
                        id: id.to_string(),
                        reason: format!("reserved {} capacity in {}", res.kind, res.zone_ref),
                    });
                }
                let mut handles = self.allocate_many(id, vec![item])?;
                Ok(handles.remove(0))
            }
            None => {
                check_spec(&item.spec, kind)?;
                self.ensure_fits(zone, &item.spec)?;
                self.zone_mut(zone)?.allocated += item.spec;
                Ok(self.new_handle(zone, kind, item))
            }
        }
    }

    /// Creates several resources against one reservation. Their combined
    /// spec must fit the reservation; any unused remainder returns to
    /// available capacity.
    pub fn allocate_many(
        &mut self,
        reservation_id: &str,
        items: Vec<AllocationItem<S>>,
    ) -> Result<Vec<ResourceHandle<S>>, InventoryError> {
        let res = self.active_reservation(reservation_id)?.clone();
        let mut sum = CapacityVector::zero();
        for item in &items {
            check_spec(&item.spec, res.kind)?;
            sum += item.spec;
        }
        if let Some(d) = sum.first_excess(&res.spec) {
            return Err(InventoryError::ExceedsReservation {
                id: reservation_id.to_string(),
                dimension: d,
            });
        }
        let zone = self.zone_mut(&res.zone_ref)?;
        zone.reserved -= res.spec;
        zone.allocated += sum;
        self.reservations.get_mut(reservation_id).unwrap().state = ReservationState::Consumed;
        Ok(items
            .into_iter()
            .map(|item| self.new_handle(&res.zone_ref, res.kind, item))
            .collect())
    }

    pub fn release(&mut self, handle_id: &str) -> Result<ResourceHandle<S>, InventoryError> {
        let Some(handle) = self.handles.remove(handle_id) else {
            return Err(if self.released.contains(handle_id) {
                InventoryError::DoubleRelease(handle_id.to_string())
            } else {
                InventoryError::UnknownHandle(handle_id.to_string())
            });
        };
        self.zone_mut(&handle.zone_ref)?.allocated -= handle.spec;
        self.released.insert(handle_id.to_string());
        Ok(handle)
    }

    pub fn handle(&self, id: &str) -> Option<&ResourceHandle<S>> {
        self.handles.get(id)
    }

    pub fn capacity_report(&self) -> Vec<ZoneReport<S>> {
        self.pops
            .values()
            .flat_map(|p| {
                p.zones.iter().map(move |z| ZoneReport {
                    vim: p.vim_ref.clone(),
                    zone_ref: ZoneRef::new(&p.id, &z.id),
                    total: z.total,
                    allocated: z.allocated,
                    reserved: z.reserved,
                    available: z.available(),
                })
            })
            .collect()
    }

    /// Available capacity per PoP, in PoP id order.
    pub fn pop_available(&self) -> BTreeMap<String, CapacityVector<S>> {
        self.pops.iter().map(|(id, p)| (id.clone(), p.available())).collect()
    }

    /// Checks that every zone's counters are nonnegative, within total, and
    /// equal to the sums of its outstanding handles and active reservations.
    pub fn check_conservation(&self) -> Result<(), String> {
        for p in self.pops.values() {
            for z in &p.zones {
                let r = ZoneRef::new(&p.id, &z.id);
                if !z.allocated.is_nonnegative() || !z.reserved.is_nonnegative() {
                    return Err(format!("{r}: negative counter"));
                }
                if !z.available().is_nonnegative() {
                    return Err(format!("{r}: allocated + reserved exceeds total"));
                }
                let handles: CapacityVector<S> = self
                    .handles
                    .values()
                    .filter(|h| h.zone_ref == r)
                    .map(|h| h.spec)
                    .sum();
                if handles != z.allocated {
                    return Err(format!("{r}: allocated {} but handles sum to {}", z.allocated, handles));
                }
                let reserved: CapacityVector<S> = self
                    .reservations
                    .values()
                    .filter(|x| x.zone_ref == r && x.state == ReservationState::Active)
                    .map(|x| x.spec)
                    .sum();
                if reserved != z.reserved {
                    return Err(format!("{r}: reserved {} but reservations sum to {}", z.reserved, reserved));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use proptest::prelude::*;

    fn cv(v: f64, m: f64, s: f64, b: f64) -> CapacityVector<f64> {
        CapacityVector::new(v, m, s, b)
    }

    fn inv() -> (Inventory<f64>, ZoneRef) {
        let pop = NfviPop {
            id: "pop-1".into(),
            vim_ref: "vim-1".into(),
            zones: vec![ResourceZone::new("zone-a", cv(32.0, 64.0, 500.0, 1000.0))],
        };
        (Inventory::new([pop]), ZoneRef::new("pop-1", "zone-a"))
    }

    fn item(spec: CapacityVector<f64>) -> AllocationItem<f64> {
        AllocationItem {
            spec,
            resource: "r".into(),
            labels: BTreeSet::new(),
        }
    }

    #[test]
    fn reserve_reduces_available() {
        let (mut inv, z) = inv();
        inv.reserve(&z, cv(8.0, 0.0, 0.0, 0.0), ResourceKind::Compute, BTreeSet::new()).unwrap();
        let zone = inv.zone(&z).unwrap();
        assert_eq!(zone.reserved.vcpu, 8.0);
        assert_eq!(zone.available().vcpu, 24.0);
    }

    #[test]
    fn zero_reservation_has_no_effect() {
        let (mut inv, z) = inv();
        let before = inv.capacity_report();
        let res = inv.reserve(&z, CapacityVector::zero(), ResourceKind::Storage, BTreeSet::new()).unwrap();
        assert_eq!(res.state, ReservationState::Active);
        assert_eq!(inv.capacity_report(), before);
    }

    #[test]
    fn over_reservation_names_dimension() {
        let (mut inv, z) = inv();
        let err = inv
            .reserve(&z, cv(40.0, 0.0, 0.0, 0.0), ResourceKind::Compute, BTreeSet::new())
            .unwrap_err();
        assert!(matches!(err, InventoryError::Insufficient { dimension: Dimension::Vcpu, .. }), "{err}");
    }

    #[test]
    fn reservation_remainder_returns_to_available() {
        let (mut inv, z) = inv();
        let res = inv.reserve(&z, cv(8.0, 0.0, 0.0, 0.0), ResourceKind::Compute, BTreeSet::new()).unwrap();
        let h = inv
            .allocate(&z, ResourceKind::Compute, item(cv(6.0, 0.0, 0.0, 0.0)), Some(&res.id))
            .unwrap();
        let zone = inv.zone(&z).unwrap();
        assert_eq!((zone.allocated.vcpu, zone.reserved.vcpu, zone.available().vcpu), (6.0, 0.0, 26.0));
        assert_eq!(inv.reservations[&res.id].state, ReservationState::Consumed);

        let err = inv
            .allocate(&z, ResourceKind::Compute, item(cv(1.0, 0.0, 0.0, 0.0)), Some(&res.id))
            .unwrap_err();
        assert!(matches!(err, InventoryError::ReservationNotActive { .. }));

        inv.release(&h.id).unwrap();
        assert_eq!(inv.zone(&z).unwrap().allocated.vcpu, 0.0);
        assert_eq!(inv.release(&h.id).unwrap_err(), InventoryError::DoubleRelease(h.id.clone()));
        inv.check_conservation().unwrap();
    }

    #[test]
    fn exact_reservation_converts_fully() {
        let (mut inv, z) = inv();
        let spec = cv(4.0, 8.0, 0.0, 0.0);
        let res = inv.reserve(&z, spec, ResourceKind::Compute, BTreeSet::new()).unwrap();
        inv.allocate(&z, ResourceKind::Compute, item(spec), Some(&res.id)).unwrap();
        let zone = inv.zone(&z).unwrap();
        assert_eq!(zone.allocated, spec);
        assert!(zone.reserved.is_zero());
    }

    #[test]
    fn zero_handle_release() {
        let (mut inv, z) = inv();
        let h = inv.allocate(&z, ResourceKind::Storage, item(CapacityVector::zero()), None).unwrap();
        let before = inv.capacity_report();
        inv.release(&h.id).unwrap();
        assert_eq!(inv.capacity_report(), before);
    }

    #[test]
    fn report_after_mixed_operations() {
        let (mut inv, z) = inv();
        let fresh = inv.capacity_report();
        assert_eq!(fresh[0].available, fresh[0].total);
        inv.reserve(&z, cv(8.0, 0.0, 0.0, 0.0), ResourceKind::Compute, BTreeSet::new()).unwrap();
        inv.allocate(&z, ResourceKind::Compute, item(cv(4.0, 0.0, 0.0, 0.0)), None).unwrap();
        assert_eq!(inv.capacity_report()[0].available.vcpu, 20.0);
    }

    #[test]
    fn reserve_then_cancel_is_identity() {
        let (mut inv, z) = inv();
        let before = inv.capacity_report();
        let res = inv.reserve(&z, cv(3.0, 5.0, 0.0, 0.0), ResourceKind::Compute, BTreeSet::new()).unwrap();
        inv.cancel_reservation(&res.id).unwrap();
        assert_eq!(inv.capacity_report(), before);
        assert!(inv.cancel_reservation(&res.id).is_err());
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let (mut inv, z) = inv();
        let err = inv
            .reserve(&z, cv(1.0, 0.0, 0.0, 5.0), ResourceKind::Compute, BTreeSet::new())
            .unwrap_err();
        assert!(matches!(err, InventoryError::OutsideKind { dimension: Dimension::Bandwidth, .. }));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Reserve(i64, i64, usize),
        Allocate(i64, i64),
        AllocateReserved(usize, i64),
        Cancel(usize),
        Release(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0i64..20, 0i64..40, 0usize..3).prop_map(|(a, b, k)| Op::Reserve(a, b, k)),
            (0i64..20, 0i64..40).prop_map(|(a, b)| Op::Allocate(a, b)),
            (0usize..16, 1i64..4).prop_map(|(i, d)| Op::AllocateReserved(i, d)),
            (0usize..16).prop_map(Op::Cancel),
            (0usize..16).prop_map(Op::Release),
        ]
    }

    proptest! {
        #[test]
        fn conservation_under_random_operations(ops in proptest::collection::vec(op(), 1..60)) {
            let q = |v: i64| Rational::from_integer(v);
            let pop = NfviPop {
                id: "p".into(),
                vim_ref: "v".into(),
                zones: vec![ResourceZone::new("z", CapacityVector::new(q(32), q(64), q(100), q(100)))],
            };
            let mut inv = Inventory::new([pop]);
            let z = ZoneRef::new("p", "z");
            let mut reservations: Vec<String> = Vec::new();
            let mut handles: Vec<String> = Vec::new();
            for op in ops {
                let before = inv.clone();
                let outcome: Result<(), InventoryError> = match op {
                    Op::Reserve(a, b, k) => {
                        let (kind, spec) = match k {
                            0 => (ResourceKind::Compute, CapacityVector::new(q(a), q(b), q(0), q(0))),
                            1 => (ResourceKind::Storage, CapacityVector::new(q(0), q(0), q(a), q(0))),
                            _ => (ResourceKind::Network, CapacityVector::new(q(0), q(0), q(0), q(b))),
                        };
                        inv.reserve(&z, spec, kind, BTreeSet::new()).map(|r| reservations.push(r.id))
                    }
                    Op::Allocate(a, b) => inv
                        .allocate(&z, ResourceKind::Compute, AllocationItem { spec: CapacityVector::new(q(a), q(b), q(0), q(0)), resource: "x".into(), labels: BTreeSet::new() }, None)
                        .map(|h| handles.push(h.id)),
                    Op::AllocateReserved(i, d) => match reservations.get(i).cloned() {
                        Some(id) => {
                            let res = inv.reservations[&id].clone();
                            let spec = res.spec.map(|v| v / q(d));
                            inv.allocate(&z, res.kind, AllocationItem { spec, resource: "x".into(), labels: BTreeSet::new() }, Some(&id))
                                .map(|h| handles.push(h.id))
                        }
                        None => Ok(()),
                    },
                    Op::Cancel(i) => match reservations.get(i) {
                        Some(id) => inv.cancel_reservation(id),
                        None => Ok(()),
                    },
                    Op::Release(i) => match handles.get(i) {
                        Some(id) => inv.release(id).map(|_| ()),
                        None => Ok(()),
                    },
                };
                if outcome.is_err() {
                    prop_assert_eq!(inv.capacity_report(), before.capacity_report());
                }
                prop_assert!(inv.check_conservation().is_ok(), "{:?}", inv.check_conservation());
                for r in before.reservations.values() {
                    if r.state != ReservationState::Active {
                        prop_assert_eq!(inv.reservations[&r.id].state, r.state);
                    }
                }
            }
        }
    }
}
