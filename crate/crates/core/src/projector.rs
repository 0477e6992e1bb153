//! Single-device projections: refresh work, active energy and area of implementing a
//! subpartition entirely in one technology.

use serde::{Deserialize, Serialize};

use crate::device::{DeviceModel, Retention};
use crate::lifetime::{AccessCounts, DataObject, LifetimeProfile, SubpartitionStats};
use crate::scalar::{snapped_ceil, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct DeviceProjection<S> {
    pub device: String,
    /// Retention at the subpartition's write frequency; `None` when unbounded.
    pub retention_s: Option<S>,
    pub refresh_bit_ops: u64,
    pub active_energy_j: S,
    pub area_um2: S,
    pub capacity_bytes: u64,
    pub refresh_free: bool,
}

/// Refresh events one bit needs to survive `lifetime_s`: a periodic refresh every `T`
/// from birth, so `ceil(L/T) − 1` (never negative).
pub fn refresh_count<S: Scalar>(lifetime_s: S, retention: Retention<S>) -> u64 {
    match retention {
        Retention::Unbounded => 0,
        Retention::Finite(t) => {
            if !(lifetime_s > t) {
                return 0;
            }
            let n = snapped_ceil(lifetime_s / t) - S::one();
            n.to_u64().unwrap_or(u64::MAX)
        }
    }
}

/// Bit-level refresh operations for one object.
pub fn refresh_ops<S: Scalar>(object: &DataObject, clock_hz: f64, retention: Retention<S>) -> u64 {
    refresh_count(object.lifetime_s::<S>(clock_hz), retention) * object.size_bytes * 8
}

/// Bit-level refresh operations over a lifetime multiset whose objects are all
/// `block_size` bytes.
pub fn profile_refresh_ops<S: Scalar>(
    profile: &LifetimeProfile,
    clock_hz: f64,
    block_size: u64,
    retention: Retention<S>,
) -> u64 {
    if retention == Retention::Unbounded {
        return 0;
    }
    let clock = S::from_f64_lossy(clock_hz);
    profile
        .iter()
        .map(|(cycles, bin)| {
            let l = S::from_u64_lossy(cycles) / clock;
            refresh_count(l, retention).saturating_mul(bin.objects)
        })
        .fold(0u64, u64::saturating_add)
        .saturating_mul(block_size * 8)
}

/// `bits_read·E_r + bits_written·E_w + refresh·(E_r + E_w)`.
pub fn active_energy<S: Scalar>(
    bits_read: u64,
    bits_written: u64,
    refresh_bit_ops: u64,
    device: &DeviceModel<S>,
) -> S {
    S::from_u64_lossy(bits_read) * device.read_energy_j
        + S::from_u64_lossy(bits_written) * device.write_energy_j
        + S::from_u64_lossy(refresh_bit_ops) * device.access_energy_sum()
}

pub fn counts_energy<S: Scalar>(counts: &AccessCounts, refresh_bit_ops: u64, device: &DeviceModel<S>) -> S {
    active_energy(counts.bits_read(), counts.bits_written(), refresh_bit_ops, device)
}

pub fn area<S: Scalar>(device: &DeviceModel<S>, capacity_bytes: u64) -> S {
    S::from_u64_lossy(capacity_bytes * 8) * device.bitcell_area_um2
}

/// Projects a whole subpartition onto `device`, provisioned at its peak live footprint.
pub fn project<S: Scalar>(stats: &SubpartitionStats, device: &DeviceModel<S>) -> DeviceProjection<S> {
    let retention = device.retention_at(S::from_f64_lossy(stats.write_freq_mhz));
    let refresh = profile_refresh_ops(&stats.lifetimes, stats.clock_hz, stats.block_size, retention);
    DeviceProjection {
        device: device.name.clone(),
        retention_s: retention.seconds(),
        refresh_bit_ops: refresh,
        active_energy_j: counts_energy(&stats.counts, refresh, device),
        area_um2: area(device, stats.peak_live_bytes),
        capacity_bytes: stats.peak_live_bytes,
        refresh_free: refresh == 0,
    }
}
