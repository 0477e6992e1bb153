//! Heterogeneous composition: every object goes to the device with the shortest
//! retention that still strictly exceeds its lifetime, and each device class is
//! provisioned at its own peak live footprint.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::device::{DeviceLibrary, DeviceModel, Retention};
use crate::lifetime::{DataObject, LiveSweep, SubpartitionStats};
use crate::projector::{active_energy, area, project, DeviceProjection};
use crate::scalar::Scalar;
use crate::trace::SubpartitionId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct DeviceAllocation<S> {
    pub device: String,
    pub objects: u64,
    /// Fraction of the subpartition's objects assigned here.
    pub access_share: S,
    pub capacity_bytes: u64,
    pub area_um2: S,
    pub active_energy_j: S,
    pub refresh_bit_ops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct CompositionSpec<S> {
    pub subpartition: SubpartitionId,
    pub allocations: Vec<DeviceAllocation<S>>,
    pub total_capacity_bytes: u64,
    pub total_area_um2: S,
    pub total_energy_j: S,
    pub sram_baseline: DeviceProjection<S>,
    pub energy_savings_x: S,
    pub area_savings_x: S,
}

/// Devices ordered by (retention at a fixed write frequency, E_r + E_w, name).
#[derive(Debug, Clone)]
pub struct Assigner<S> {
    order: Vec<(Retention<S>, usize)>,
}

impl<S: Scalar> Assigner<S> {
    pub fn new(library: &DeviceLibrary<S>, write_freq_mhz: S) -> Self {
        let devs = library.devices();
        let mut order: Vec<(Retention<S>, usize)> = devs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.retention_at(write_freq_mhz), i))
            .collect();
        order.sort_by(|(ra, a), (rb, b)| {
            let (da, db) = (&devs[*a], &devs[*b]);
            ra.partial_cmp(rb)
                .unwrap_or(Ordering::Equal)
                .then_with(|| {
                    da.access_energy_sum()
                        .partial_cmp(&db.access_energy_sum())
                        .unwrap_or(Ordering::Equal)
                })
                .then_with(|| da.name.cmp(&db.name))
        });
        Assigner { order }
    }

    pub fn retention(&self, device: usize) -> Retention<S> {
        self.order
            .iter()
            .find(|(_, i)| *i == device)
            .map(|(r, _)| *r)
            .unwrap_or(Retention::Unbounded)
    }

    /// Library index of the device `lifetime_s` is assigned to.
    pub fn assign(&self, lifetime_s: S) -> usize {
        self.order
            .iter()
            .find(|(r, _)| r.holds(lifetime_s))
            .map(|(_, i)| *i)
            .expect("the unbounded fallback holds every lifetime")
    }
}

pub fn assign<S: Scalar>(lifetime_s: S, library: &DeviceLibrary<S>, write_freq_mhz: S) -> &str {
    let i = Assigner::new(library, write_freq_mhz).assign(lifetime_s);
    &library.devices()[i].name
}

#[derive(Debug, Default)]
struct ClassAcc {
    objects: u64,
    read_bytes: u64,
    write_bytes: u64,
    sweep: LiveSweep,
}

/// Streaming composition of one subpartition: feed it every closed object.
#[derive(Debug)]
pub struct CompositionBuilder<'a, S> {
    library: &'a DeviceLibrary<S>,
    assigner: Assigner<S>,
    clock_hz: f64,
    classes: Vec<ClassAcc>,
}

impl<'a, S: Scalar> CompositionBuilder<'a, S> {
    pub fn new(library: &'a DeviceLibrary<S>, write_freq_mhz: f64, clock_hz: f64) -> Self {
        CompositionBuilder {
            library,
            assigner: Assigner::new(library, S::from_f64_lossy(write_freq_mhz)),
            clock_hz,
            classes: (0..library.len()).map(|_| ClassAcc::default()).collect(),
        }
    }

    pub fn add(&mut self, o: &DataObject) {
        let i = self.assigner.assign(o.lifetime_s(self.clock_hz));
        let c = &mut self.classes[i];
        c.objects += 1;
        c.read_bytes += o.read_bytes;
        c.write_bytes += o.write_bytes;
        c.sweep.add(o.birth_cycle, o.death_cycle);
    }

    /// Reads that hit no live object are charged to the fallback device.
    pub fn finish(
        self,
        subpartition: SubpartitionId,
        block_size: u64,
        orphan_read_bytes: u64,
        baseline: DeviceProjection<S>,
    ) -> CompositionSpec<S> {
        let total_objects: u64 = self.classes.iter().map(|c| c.objects).sum();
        let fallback = self.library.fallback_index();
        let mut allocations = Vec::new();
        for (i, (c, dev)) in self.classes.iter().zip(self.library.devices()).enumerate() {
            let orphan = if i == fallback { orphan_read_bytes } else { 0 };
            if c.objects == 0 && orphan == 0 {
                continue;
            }
            let capacity = c.sweep.peak() * block_size;
            allocations.push(DeviceAllocation {
                device: dev.name.clone(),
                objects: c.objects,
                access_share: if total_objects == 0 {
                    S::zero()
                } else {
                    S::from_u64_lossy(c.objects) / S::from_u64_lossy(total_objects)
                },
                capacity_bytes: capacity,
                area_um2: area(dev, capacity),
                active_energy_j: active_energy((c.read_bytes + orphan) * 8, c.write_bytes * 8, 0, dev),
                refresh_bit_ops: 0,
            });
        }
        let mut spec = CompositionSpec {
            subpartition,
            total_capacity_bytes: allocations.iter().map(|a| a.capacity_bytes).sum(),
            total_area_um2: allocations.iter().fold(S::zero(), |s, a| s + a.area_um2),
            total_energy_j: allocations.iter().fold(S::zero(), |s, a| s + a.active_energy_j),
            allocations,
            sram_baseline: baseline,
            energy_savings_x: S::one(),
            area_savings_x: S::one(),
        };
        let (e, a) = compare_to_baseline(&spec, &spec.sram_baseline);
        spec.energy_savings_x = e;
        spec.area_savings_x = a;
        spec
    }
}

fn ratio<S: Scalar>(baseline: S, hetero: S, what: &str) -> S {
    if hetero > S::zero() {
        baseline / hetero
    } else {
        log::warn!("heterogeneous {what} is zero; reporting savings of 1.0");
        S::one()
    }
}

/// `(energy_savings_x, area_savings_x)` = baseline / heterogeneous.
pub fn compare_to_baseline<S: Scalar>(spec: &CompositionSpec<S>, baseline: &DeviceProjection<S>) -> (S, S) {
    (
        ratio(baseline.active_energy_j, spec.total_energy_j, "energy"),
        ratio(baseline.area_um2, spec.total_area_um2, "area"),
    )
}

pub fn compose<S: Scalar>(
    objects: &[DataObject],
    stats: &SubpartitionStats,
    library: &DeviceLibrary<S>,
) -> CompositionSpec<S> {
    let mut b = CompositionBuilder::new(library, stats.write_freq_mhz, stats.clock_hz);
    for o in objects {
        b.add(o);
    }
    b.finish(
        stats.subpartition,
        stats.block_size,
        stats.counts.orphan_read_bytes,
        project(stats, library.fallback()),
    )
}

/// Energy of placing an object on `device` with no refresh.
pub fn object_energy<S: Scalar>(o: &DataObject, device: &DeviceModel<S>) -> S {
    active_energy(o.read_bytes * 8, o.write_bytes * 8, 0, device)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::default_library;
    use crate::lifetime::{subpartition_stats, LogHistogramSpec};
    use crate::trace::{Op, Semantics, SubpartitionDesc, TraceMeta, TraceRecord};

    fn meta() -> TraceMeta {
        TraceMeta {
            clock_hz: 1e9,
            workload_name: "t".into(),
            backend_name: "t".into(),
            subpartitions: vec![SubpartitionDesc {
                id: 0,
                name: "s".into(),
                semantics: Semantics::Scratchpad,
                block_size: 1,
                capacity: 0,
            }],
        }
    }

    #[test]
    fn assign_examples() {
        let lib = default_library::<f64>();
        let names: Vec<_> = [0.5e-6, 5e-6, 50e-6, 2e-3]
            .iter()
            .map(|&l| assign(l, &lib, 1.0))
            .collect();
        assert_eq!(names, ["Si-GCRAM", "Hybrid-GCRAM", "eDRAM", "SRAM"]);
        assert_eq!(assign(0.736e-6, &lib, 1.189), "Si-GCRAM");
        assert_eq!(assign(17.40e-6, &lib, 1.421), "eDRAM");
        // L = T goes to the next device up.
        assert_eq!(assign(1e-6, &lib, 1.0), "Hybrid-GCRAM");
        assert_eq!(assign(0.0, &lib, 1.0), "Si-GCRAM");
    }

    #[test]
    fn all_short_trace_is_pure_si_at_double_savings() {
        let m = meta();
        let mut recs = Vec::new();
        for i in 0..50u64 {
            recs.push(TraceRecord::new(i * 10, 0, Op::Write, i, 1));
            recs.push(TraceRecord::new(i * 10 + 300, 0, Op::Read, i, 1));
        }
        recs.sort_by_key(|r| r.cycle);
        let (stats, objs) = subpartition_stats(&m, &recs, 0, LogHistogramSpec::default()).unwrap();
        let c = compose(&objs, &stats, &default_library::<f64>());
        assert_eq!(c.allocations.len(), 1);
        assert_eq!(c.allocations[0].device, "Si-GCRAM");
        assert_eq!(c.allocations[0].access_share, 1.0);
        assert!((c.energy_savings_x - 2.0).abs() < 1e-12);
        assert!((c.area_savings_x - 3.0).abs() < 1e-12);
        assert!(c.sram_baseline.refresh_free);
    }

    #[test]
    fn empty_trace_reports_unit_savings() {
        let m = meta();
        let (stats, objs) = subpartition_stats(&m, &[], 0, LogHistogramSpec::default()).unwrap();
        let c = compose(&objs, &stats, &default_library::<f64>());
        assert!(c.allocations.is_empty());
        assert_eq!((c.energy_savings_x, c.area_savings_x), (1.0, 1.0));
    }

    #[test]
    fn compare_examples() {
        let lib = default_library::<f64>();
        let base = DeviceProjection::<f64> {
            device: "SRAM".into(),
            retention_s: None,
            refresh_bit_ops: 0,
            active_energy_j: 1.0,
            area_um2: 3.0,
            capacity_bytes: 1,
            refresh_free: true,
        };
        let spec = CompositionSpec {
            subpartition: 0,
            allocations: vec![],
            total_capacity_bytes: 1,
            total_area_um2: 1.0,
            total_energy_j: 0.75,
            sram_baseline: base.clone(),
            energy_savings_x: 1.0,
            area_savings_x: 1.0,
        };
        let (e, a) = compare_to_baseline(&spec, &base);
        assert!((e - 1.0 / 0.75).abs() < 1e-12);
        assert_eq!(a, 3.0);
        let same = CompositionSpec {
            total_area_um2: 3.0,
            total_energy_j: 1.0,
            ..spec
        };
        assert_eq!(compare_to_baseline(&same, &base), (1.0, 1.0));
        assert_eq!(lib.len(), 4);
    }

    #[test]
    fn orphan_reads_go_to_fallback_and_conserve_energy() {
        let m = meta();
        let recs = vec![
            TraceRecord::new(0, 0, Op::Read, 9, 1),
            TraceRecord::new(1, 0, Op::Write, 0, 1),
            TraceRecord::new(5, 0, Op::Read, 0, 1),
        ];
        let (stats, objs) = subpartition_stats(&m, &recs, 0, LogHistogramSpec::default()).unwrap();
        let lib = default_library::<f64>();
        let c = compose(&objs, &stats, &lib);
        let sram = c.allocations.iter().find(|a| a.device == "SRAM").unwrap();
        assert_eq!((sram.objects, sram.capacity_bytes), (0, 0));
        assert!((sram.active_energy_j - 8e-15).abs() < 1e-27);
        let shares: f64 = c.allocations.iter().map(|a| a.access_share).sum();
        assert_eq!(shares, 1.0);
        assert!((c.sram_baseline.active_energy_j - 24e-15).abs() < 1e-27);
    }
}
