//! Data-object extraction and lifetime statistics.
//!
//! A data object is one write-to-last-read interval at a block address. Under
//! scratchpad semantics objects are born by writes and closed by the next write or
//! invalidate of the block. Under cache semantics a read miss is a fill that also
//! births an object; hits extend it and the next miss, write or invalidate closes it.
//! Objects still open when the trace ends close at the trace's final cycle.

use std::collections::BTreeMap;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{snapped_ceil, Scalar};
use crate::trace::{Flag, Op, Semantics, SubpartitionId, TraceMeta, TraceRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LifetimeError {
    #[error("cache-semantics read at cycle {cycle} (address {address:#x}) carries no hit/miss flag")]
    MissingCacheFlag { cycle: u64, address: u64 },
    #[error("unknown subpartition {0}")]
    UnknownSubpartition(SubpartitionId),
    #[error("invalid histogram: {0}")]
    Histogram(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathCause {
    Overwrite,
    Refill,
    Invalidate,
    TraceEnd,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DataObject {
    pub subpartition: SubpartitionId,
    pub block: u64,
    pub birth_cycle: u64,
    pub last_read_cycle: Option<u64>,
    pub death_cycle: u64,
    pub reads: u64,
    pub size_bytes: u64,
    /// Bytes read from this object (includes the delivered bytes of a miss fill).
    pub read_bytes: u64,
    /// Bytes written to create this object.
    pub write_bytes: u64,
    pub cause: DeathCause,
}

impl DataObject {
    pub fn lifetime_cycles(&self) -> u64 {
        self.last_read_cycle.map_or(0, |r| r - self.birth_cycle)
    }

    pub fn lifetime_s<S: Scalar>(&self, clock_hz: f64) -> S {
        S::from_u64_lossy(self.lifetime_cycles()) / S::from_f64_lossy(clock_hz)
    }

    pub fn is_dead_write(&self) -> bool {
        self.last_read_cycle.is_none()
    }
}

/// Access totals for one subpartition. Logical counts are per touched block; an
/// access spanning several blocks counts once per block.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounts {
    pub records: u64,
    pub read_records: u64,
    pub write_records: u64,
    pub invalidate_records: u64,
    pub miss_records: u64,
    pub reads: u64,
    pub writes: u64,
    pub hits: u64,
    pub miss_fills: u64,
    pub orphan_reads: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
    pub orphan_read_bytes: u64,
}

impl AccessCounts {
    pub fn bits_read(&self) -> u64 {
        self.read_bytes * 8
    }

    pub fn bits_written(&self) -> u64 {
        self.write_bytes * 8
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenObject {
    birth: u64,
    last_read: Option<u64>,
    reads: u64,
    read_bytes: u64,
    write_bytes: u64,
}

/// Single-pass lifetime state machine for one subpartition.
#[derive(Debug)]
pub struct LifetimeTracker {
    sub: SubpartitionId,
    semantics: Semantics,
    block_size: u64,
    block_shift: u32,
    open: FxHashMap<u64, OpenObject>,
    touched: FxHashSet<u64>,
    counts: AccessCounts,
    first_cycle: Option<u64>,
    last_cycle: u64,
    orphan_logged: bool,
}

/// What a tracker knows once its subpartition's records are exhausted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackerSummary {
    pub counts: AccessCounts,
    pub unique_blocks: u64,
    pub first_cycle: Option<u64>,
    pub last_cycle: u64,
}

impl LifetimeTracker {
    pub fn new(sub: SubpartitionId, semantics: Semantics, block_size: u64) -> Self {
        assert!(block_size.is_power_of_two(), "block size must be a power of two");
        LifetimeTracker {
            sub,
            semantics,
            block_size,
            block_shift: block_size.trailing_zeros(),
            open: FxHashMap::default(),
            touched: FxHashSet::default(),
            counts: AccessCounts::default(),
            first_cycle: None,
            last_cycle: 0,
            orphan_logged: false,
        }
    }

    pub fn for_subpartition(meta: &TraceMeta, sub: SubpartitionId) -> Result<Self, LifetimeError> {
        let d = meta
            .subpartition(sub)
            .ok_or(LifetimeError::UnknownSubpartition(sub))?;
        Ok(Self::new(sub, d.semantics, d.block_size))
    }

    pub fn counts(&self) -> &AccessCounts {
        &self.counts
    }

    /// Earliest birth among open objects.
    pub fn oldest_open_birth(&self) -> Option<u64> {
        self.open.values().map(|o| o.birth).min()
    }

    fn close(&mut self, block: u64, cycle: u64, cause: DeathCause, emit: &mut impl FnMut(DataObject)) {
        if let Some(o) = self.open.remove(&block) {
            emit(DataObject {
                subpartition: self.sub,
                block,
                birth_cycle: o.birth,
                last_read_cycle: o.last_read,
                death_cycle: cycle,
                reads: o.reads,
                size_bytes: self.block_size,
                read_bytes: o.read_bytes,
                write_bytes: o.write_bytes,
                cause,
            });
        }
    }

    fn birth(&mut self, block: u64, cycle: u64, write_bytes: u64, read_bytes: u64) {
        self.open.insert(
            block,
            OpenObject {
                birth: cycle,
                last_read: None,
                reads: 0,
                read_bytes,
                write_bytes,
            },
        );
    }

    fn read(&mut self, block: u64, cycle: u64, bytes: u64) {
        self.counts.reads += 1;
        self.counts.read_bytes += bytes;
        match self.open.get_mut(&block) {
            Some(o) => {
                o.reads += 1;
                o.read_bytes += bytes;
                o.last_read = Some(cycle);
            }
            None => {
                self.counts.orphan_reads += 1;
                self.counts.orphan_read_bytes += bytes;
                if !self.orphan_logged {
                    self.orphan_logged = true;
                    log::debug!(
                        "subpartition {}: orphan read of block {block:#x} at cycle {cycle}",
                        self.sub
                    );
                }
            }
        }
    }

    /// Feeds one record of this tracker's subpartition; closed objects go to `emit`.
    pub fn push(
        &mut self,
        rec: &TraceRecord,
        emit: &mut impl FnMut(DataObject),
    ) -> Result<(), LifetimeError> {
        debug_assert_eq!(rec.subpartition, self.sub);
        let cache = self.semantics == Semantics::Cache;
        if cache && rec.op == Op::Read && rec.flag == Flag::None {
            return Err(LifetimeError::MissingCacheFlag {
                cycle: rec.cycle,
                address: rec.address,
            });
        }
        let cycle = rec.cycle;
        self.first_cycle.get_or_insert(cycle);
        self.last_cycle = self.last_cycle.max(cycle);
        self.counts.records += 1;
        let miss = cache && rec.op == Op::Read && rec.flag == Flag::Miss;
        match rec.op {
            Op::Read => self.counts.read_records += 1,
            Op::Write => self.counts.write_records += 1,
            Op::Invalidate => self.counts.invalidate_records += 1,
        }
        if miss {
            self.counts.miss_records += 1;
        }

        let start = rec.address;
        let end = rec.address.saturating_add(u64::from(rec.size.max(1)) - 1);
        let (first, last) = (start >> self.block_shift, end >> self.block_shift);
        for block in first..=last {
            let lo = start.max(block << self.block_shift);
            let hi = end.min(((block + 1) << self.block_shift).wrapping_sub(1));
            let bytes = if rec.size == 0 { 0 } else { hi - lo + 1 };
            if rec.op != Op::Invalidate {
                self.touched.insert(block);
            }
            match rec.op {
                Op::Write => {
                    self.close(block, cycle, DeathCause::Overwrite, emit);
                    self.counts.writes += 1;
                    self.counts.write_bytes += bytes;
                    self.birth(block, cycle, bytes, 0);
                }
                Op::Read if miss => {
                    self.close(block, cycle, DeathCause::Refill, emit);
                    self.counts.reads += 1;
                    self.counts.read_bytes += bytes;
                    self.counts.writes += 1;
                    self.counts.write_bytes += bytes;
                    self.counts.miss_fills += 1;
                    self.birth(block, cycle, bytes, bytes);
                }
                Op::Read => {
                    if cache {
                        self.counts.hits += 1;
                    }
                    self.read(block, cycle, bytes);
                }
                Op::Invalidate => self.close(block, cycle, DeathCause::Invalidate, emit),
            }
        }
        Ok(())
    }

    /// Closes every open object at `end_cycle` (in block order) and returns the totals.
    pub fn finish(mut self, end_cycle: u64, emit: &mut impl FnMut(DataObject)) -> TrackerSummary {
        let mut blocks: Vec<u64> = self.open.keys().copied().collect();
        blocks.sort_unstable();
        for b in blocks {
            self.close(b, end_cycle, DeathCause::TraceEnd, emit);
        }
        TrackerSummary {
            unique_blocks: self.touched.len() as u64,
            counts: self.counts,
            first_cycle: self.first_cycle,
            last_cycle: self.last_cycle,
        }
    }
}

fn final_cycle(records: &[TraceRecord]) -> u64 {
    records.iter().map(|r| r.cycle).max().unwrap_or(0)
}

/// All data objects of one subpartition, in closing order.
pub fn extract_objects(
    meta: &TraceMeta,
    records: &[TraceRecord],
    sub: SubpartitionId,
) -> Result<Vec<DataObject>, LifetimeError> {
    Ok(extract_with_summary(meta, records, sub)?.0)
}

pub fn extract_with_summary(
    meta: &TraceMeta,
    records: &[TraceRecord],
    sub: SubpartitionId,
) -> Result<(Vec<DataObject>, TrackerSummary), LifetimeError> {
    let mut tracker = LifetimeTracker::for_subpartition(meta, sub)?;
    let mut objects = Vec::new();
    let mut emit = |o| objects.push(o);
    for r in records.iter().filter(|r| r.subpartition == sub) {
        tracker.push(r, &mut emit)?;
    }
    let summary = tracker.finish(final_cycle(records), &mut emit);
    Ok((objects, summary))
}

/// Streaming accumulator for a subpartition's aggregate write frequency.
#[derive(Debug, Clone, Default)]
pub struct WriteRate {
    first: Option<u64>,
    last: u64,
    records: u64,
    writes: u64,
}

impl WriteRate {
    pub fn push(&mut self, rec: &TraceRecord, semantics: Semantics) {
        self.first.get_or_insert(rec.cycle);
        self.last = self.last.max(rec.cycle);
        self.records += 1;
        let fill = semantics == Semantics::Cache && rec.op == Op::Read && rec.flag == Flag::Miss;
        if rec.op == Op::Write || fill {
            self.writes += 1;
        }
    }

    /// Writes (plus miss fills) per second over the observed span, in MHz.
    pub fn mhz(&self, clock_hz: f64) -> f64 {
        let Some(first) = self.first else { return 0.0 };
        let span = self.last - first;
        if self.records < 2 || span == 0 {
            return 0.0;
        }
        self.writes as f64 * clock_hz / span as f64 / 1e6
    }
}

pub fn write_frequency(meta: &TraceMeta, records: &[TraceRecord], sub: SubpartitionId) -> f64 {
    let Some(desc) = meta.subpartition(sub) else {
        return 0.0;
    };
    let mut rate = WriteRate::default();
    for r in records.iter().filter(|r| r.subpartition == sub) {
        rate.push(r, desc.semantics);
    }
    rate.mhz(meta.clock_hz)
}

/// Peak number of simultaneously live half-open `[birth, death)` intervals.
#[derive(Debug, Clone, Default)]
pub struct LiveSweep {
    deltas: FxHashMap<u64, i64>,
}

impl LiveSweep {
    pub fn add(&mut self, birth: u64, death: u64) {
        if birth < death {
            *self.deltas.entry(birth).or_insert(0) += 1;
            *self.deltas.entry(death).or_insert(0) -= 1;
        }
    }

    pub fn peak(&self) -> u64 {
        let mut keys: Vec<(u64, i64)> = self.deltas.iter().map(|(&k, &v)| (k, v)).collect();
        keys.sort_unstable_by_key(|&(k, _)| k);
        let (mut live, mut peak) = (0i64, 0i64);
        for (_, d) in keys {
            live += d;
            peak = peak.max(live);
        }
        peak as u64
    }
}

/// Peak live footprint in bytes.
pub fn capacity_utilization(objects: &[DataObject], block_size: u64) -> u64 {
    let mut sweep = LiveSweep::default();
    for o in objects {
        sweep.add(o.birth_cycle, o.death_cycle);
    }
    sweep.peak() * block_size
}

/// Accumulated facts about every object sharing one lifetime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifetimeBin {
    pub objects: u64,
    pub reads: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
}

/// Multiset of object lifetimes, keyed by lifetime in cycles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LifetimeProfile {
    bins: BTreeMap<u64, LifetimeBin>,
    objects: u64,
}

impl LifetimeProfile {
    pub fn iter(&self) -> impl Iterator<Item = (u64, &LifetimeBin)> + '_ {
        self.bins.iter().map(|(&k, v)| (k, v))
    }

    pub fn objects(&self) -> u64 {
        self.objects
    }

    pub fn max_cycles(&self) -> u64 {
        self.bins.keys().next_back().copied().unwrap_or(0)
    }

    pub fn mean_cycles(&self) -> f64 {
        if self.objects == 0 {
            return 0.0;
        }
        let total: f64 = self
            .bins
            .iter()
            .map(|(&l, b)| l as f64 * b.objects as f64)
            .sum();
        total / self.objects as f64
    }

    /// Nearest-rank quantile, `q` in `[0, 1]`.
    pub fn quantile_cycles(&self, q: f64) -> u64 {
        if self.objects == 0 {
            return 0;
        }
        let rank = ((q * self.objects as f64).ceil() as u64).clamp(1, self.objects);
        let mut seen = 0;
        for (&l, b) in &self.bins {
            seen += b.objects;
            if seen >= rank {
                return l;
            }
        }
        self.max_cycles()
    }

    /// `(accesses of objects shorter than cycles, all accesses)`, where an object's
    /// accesses are its birth plus its reads.
    pub fn accesses_below(&self, cycles: u64) -> (u64, u64) {
        let (mut below, mut total) = (0u64, 0u64);
        for (&l, b) in &self.bins {
            let acc = b.objects + b.reads;
            total += acc;
            if l < cycles {
                below += acc;
            }
        }
        (below, total)
    }

    /// Share of accesses belonging to objects shorter than `cycles`.
    pub fn access_fraction_below(&self, cycles: u64) -> f64 {
        let (below, total) = self.accesses_below(cycles);
        if total == 0 {
            0.0
        } else {
            below as f64 / total as f64
        }
    }
}

/// Streaming builder for a [`LifetimeProfile`].
#[derive(Debug, Default)]
pub struct ProfileBuilder {
    bins: FxHashMap<u64, LifetimeBin>,
    objects: u64,
}

impl ProfileBuilder {
    pub fn add(&mut self, o: &DataObject) {
        let b = self.bins.entry(o.lifetime_cycles()).or_default();
        b.objects += 1;
        b.reads += o.reads;
        b.read_bytes += o.read_bytes;
        b.write_bytes += o.write_bytes;
        self.objects += 1;
    }

    pub fn finish(self) -> LifetimeProfile {
        LifetimeProfile {
            bins: self.bins.into_iter().collect(),
            objects: self.objects,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct LogHistogramSpec<S> {
    pub min_s: S,
    pub max_s: S,
    pub bins_per_decade: u32,
}

impl Default for LogHistogramSpec<f64> {
    fn default() -> Self {
        LogHistogramSpec {
            min_s: 1e-9,
            max_s: 1e-3,
            bins_per_decade: 8,
        }
    }
}

impl<S: Scalar> LogHistogramSpec<S> {
    pub fn validate(&self) -> Result<(), LifetimeError> {
        if !(self.min_s > S::zero() && self.min_s < self.max_s && self.max_s.is_finite()) {
            return Err(LifetimeError::Histogram(format!(
                "need 0 < min_s < max_s (got {} and {})",
                self.min_s, self.max_s
            )));
        }
        if self.bins_per_decade == 0 {
            return Err(LifetimeError::Histogram("bins_per_decade must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        let decades = (self.max_s / self.min_s).log10();
        let n = snapped_ceil(decades * S::from_u32(self.bins_per_decade).expect("u32 fits"));
        n.to_usize().unwrap_or(0).max(1)
    }

    /// Lower edge of bin `k`; `edge(bin_count())` is `max_s`.
    pub fn edge(&self, k: usize) -> S {
        if k >= self.bin_count() {
            return self.max_s;
        }
        let exp = S::from_usize(k).expect("usize fits") / S::from_u32(self.bins_per_decade).expect("u32 fits");
        self.min_s * S::from_f64_lossy(10.0).powf(exp)
    }

    pub fn locate(&self, lifetime_s: S) -> Slot {
        if !(lifetime_s >= self.min_s) {
            return Slot::Underflow;
        }
        if lifetime_s >= self.max_s {
            return Slot::Overflow;
        }
        let n = self.bin_count();
        let guess = ((lifetime_s / self.min_s).log10() * S::from_u32(self.bins_per_decade).expect("u32 fits"))
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(n - 1);
        let mut k = guess;
        while k + 1 < n && lifetime_s >= self.edge(k + 1) {
            k += 1;
        }
        while k > 0 && lifetime_s < self.edge(k) {
            k -= 1;
        }
        Slot::Bin(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Underflow,
    Bin(usize),
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Histogram<S> {
    pub spec: LogHistogramSpec<S>,
    pub underflow: u64,
    pub counts: Vec<u64>,
    pub overflow: u64,
}

impl<S: Scalar> Histogram<S> {
    pub fn empty(spec: LogHistogramSpec<S>) -> Self {
        Histogram {
            counts: vec![0; spec.bin_count()],
            spec,
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn add(&mut self, lifetime_s: S, count: u64) {
        match self.spec.locate(lifetime_s) {
            Slot::Underflow => self.underflow += count,
            Slot::Bin(k) => self.counts[k] += count,
            Slot::Overflow => self.overflow += count,
        }
    }

    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.counts.iter().sum::<u64>()
    }
}

pub fn lifetime_histogram<S: Scalar>(
    lifetimes: &[S],
    spec: LogHistogramSpec<S>,
) -> Result<Histogram<S>, LifetimeError> {
    spec.validate()?;
    let mut h = Histogram::empty(spec);
    for &l in lifetimes {
        h.add(l, 1);
    }
    Ok(h)
}

pub fn profile_histogram(
    profile: &LifetimeProfile,
    clock_hz: f64,
    spec: LogHistogramSpec<f64>,
) -> Result<Histogram<f64>, LifetimeError> {
    spec.validate()?;
    let mut h = Histogram::empty(spec);
    for (cycles, bin) in profile.iter() {
        h.add(cycles as f64 / clock_hz, bin.objects);
    }
    Ok(h)
}

/// Lifetime and access statistics of one subpartition.
#[derive(Debug, Clone, PartialEq)]
pub struct SubpartitionStats {
    pub subpartition: SubpartitionId,
    pub name: String,
    pub semantics: Semantics,
    pub block_size: u64,
    pub clock_hz: f64,
    pub write_freq_mhz: f64,
    pub counts: AccessCounts,
    pub dead_writes: u64,
    pub unique_blocks: u64,
    pub peak_live_bytes: u64,
    pub lifetimes: LifetimeProfile,
    pub histogram: Histogram<f64>,
}

impl SubpartitionStats {
    pub fn objects(&self) -> u64 {
        self.lifetimes.objects()
    }

    pub fn cycles_to_s(&self, cycles: u64) -> f64 {
        cycles as f64 / self.clock_hz
    }

    pub fn mean_lifetime_s(&self) -> f64 {
        self.lifetimes.mean_cycles() / self.clock_hz
    }

    pub fn max_lifetime_s(&self) -> f64 {
        self.cycles_to_s(self.lifetimes.max_cycles())
    }

    pub fn quantile_lifetime_s(&self, q: f64) -> f64 {
        self.cycles_to_s(self.lifetimes.quantile_cycles(q))
    }
}

/// Streaming builder for [`SubpartitionStats`]: feed it every closed object.
#[derive(Debug)]
pub struct StatsBuilder {
    profile: ProfileBuilder,
    sweep: LiveSweep,
    dead_writes: u64,
}

impl Default for StatsBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl StatsBuilder {
    pub fn new() -> Self {
        StatsBuilder {
            profile: ProfileBuilder::default(),
            sweep: LiveSweep::default(),
            dead_writes: 0,
        }
    }

    pub fn add(&mut self, o: &DataObject) {
        self.profile.add(o);
        self.sweep.add(o.birth_cycle, o.death_cycle);
        if o.is_dead_write() {
            self.dead_writes += 1;
        }
    }

    pub fn finish(
        self,
        meta: &TraceMeta,
        sub: SubpartitionId,
        summary: TrackerSummary,
        write_freq_mhz: f64,
        spec: LogHistogramSpec<f64>,
    ) -> Result<SubpartitionStats, LifetimeError> {
        let desc = meta
            .subpartition(sub)
            .ok_or(LifetimeError::UnknownSubpartition(sub))?;
        let lifetimes = self.profile.finish();
        let histogram = profile_histogram(&lifetimes, meta.clock_hz, spec)?;
        Ok(SubpartitionStats {
            subpartition: sub,
            name: desc.name.clone(),
            semantics: desc.semantics,
            block_size: desc.block_size,
            clock_hz: meta.clock_hz,
            write_freq_mhz,
            counts: summary.counts,
            dead_writes: self.dead_writes,
            unique_blocks: summary.unique_blocks,
            peak_live_bytes: self.sweep.peak() * desc.block_size,
            lifetimes,
            histogram,
        })
    }
}

/// Objects plus statistics for one subpartition of an in-memory trace.
pub fn subpartition_stats(
    meta: &TraceMeta,
    records: &[TraceRecord],
    sub: SubpartitionId,
    spec: LogHistogramSpec<f64>,
) -> Result<(SubpartitionStats, Vec<DataObject>), LifetimeError> {
    let (objects, summary) = extract_with_summary(meta, records, sub)?;
    let mut builder = StatsBuilder::new();
    for o in &objects {
        builder.add(o);
    }
    let fw = write_frequency(meta, records, sub);
    let stats = builder.finish(meta, sub, summary, fw, spec)?;
    Ok((stats, objects))
}
