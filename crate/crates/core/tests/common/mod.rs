//! Shared by the integration tests: a random trace generator and a quadratic
//! brute-force lifetime extractor that shares no code with the streaming tracker.
#![allow(dead_code)]

use memlife_core::lifetime::DeathCause;
use memlife_core::{DataObject, Flag, Op, Semantics, SubpartitionDesc, Trace, TraceMeta, TraceRecord};
use rand::Rng;

pub fn random_meta(rng: &mut impl Rng) -> TraceMeta {
    let n = rng.gen_range(1..=3u8);
    let subpartitions = (0..n)
        .map(|i| SubpartitionDesc {
            id: i * 2 + rng.gen_range(0..2),
            name: format!("s{i}"),
            semantics: if rng.gen_bool(0.5) {
                Semantics::Cache
            } else {
                Semantics::Scratchpad
            },
            block_size: [1, 4, 16, 32, 64][rng.gen_range(0..5)],
            capacity: 0,
        })
        .collect();
    TraceMeta {
        clock_hz: [1e9, 1.4e9, 7e8][rng.gen_range(0..3)],
        workload_name: "random".into(),
        backend_name: "test".into(),
        subpartitions,
    }
}

/// A valid trace with plenty of block collisions, same-cycle records, spanning
/// accesses, orphan reads and dead writes.
pub fn random_trace(rng: &mut impl Rng, max_records: usize) -> Trace {
    let meta = random_meta(rng);
    let blocks = rng.gen_range(1..=16u64);
    let n = rng.gen_range(0..=max_records);
    let mut cycle = rng.gen_range(0..100u64);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        cycle += [0, 0, 1, 1, 2, 5][rng.gen_range(0..6)];
        let d = &meta.subpartitions[rng.gen_range(0..meta.subpartitions.len())];
        let bs = d.block_size;
        let op = match rng.gen_range(0..100) {
            0..=49 => Op::Read,
            50..=87 => Op::Write,
            _ => Op::Invalidate,
        };
        let flag = match (d.semantics, op) {
            (Semantics::Cache, Op::Read) => {
                if rng.gen_bool(0.35) {
                    Flag::Miss
                } else {
                    Flag::Hit
                }
            }
            (Semantics::Cache, _) => [Flag::None, Flag::Hit, Flag::Miss][rng.gen_range(0..3)],
            _ => Flag::None,
        };
        let address = rng.gen_range(0..blocks) * bs + rng.gen_range(0..bs);
        let size = rng.gen_range(1..=2 * bs) as u32;
        records.push(TraceRecord::new(cycle, d.id, op, address, size).with_flag(flag));
    }
    Trace { meta, records }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Start(DeathCause),
    Use,
    End,
}

fn blocks_of(r: &TraceRecord, bs: u64) -> std::ops::RangeInclusive<u64> {
    r.address / bs..=(r.address + u64::from(r.size) - 1) / bs
}

fn event(r: &TraceRecord, sem: Semantics) -> Event {
    match (r.op, sem, r.flag) {
        (Op::Write, _, _) => Event::Start(DeathCause::Overwrite),
        (Op::Read, Semantics::Cache, Flag::Miss) => Event::Start(DeathCause::Refill),
        (Op::Read, _, _) => Event::Use,
        (Op::Invalidate, _, _) => Event::End,
    }
}

/// Comparable object identity: `(block, birth, last_read, death, reads, cause)`.
pub type Key = (u64, u64, Option<u64>, u64, u64, DeathCause);

pub fn key(o: &DataObject) -> Key {
    (o.block, o.birth_cycle, o.last_read_cycle, o.death_cycle, o.reads, o.cause)
}

pub struct OracleResult {
    pub objects: Vec<Key>,
    pub orphan_reads: u64,
}

/// Brute force: every birth scans forward through the whole trace for the first
/// record that ends it, collecting reads along the way; every read scans backward
/// to decide whether anything was live.
pub fn oracle(trace: &Trace, sub: u8) -> OracleResult {
    let d = trace.meta.subpartition(sub).expect("known subpartition");
    let (sem, bs) = (d.semantics, d.block_size);
    let recs = &trace.records;
    let final_cycle = recs.iter().map(|r| r.cycle).max().unwrap_or(0);
    let mut objects = Vec::new();
    let mut orphan_reads = 0;
    for (i, r) in recs.iter().enumerate() {
        if r.subpartition != sub {
            continue;
        }
        let ev = event(r, sem);
        for b in blocks_of(r, bs) {
            match ev {
                Event::Start(_) => {
                    let (mut last_read, mut reads) = (None, 0);
                    let mut end = (final_cycle, DeathCause::TraceEnd);
                    'scan: for q in &recs[i + 1..] {
                        if q.subpartition != sub || !blocks_of(q, bs).contains(&b) {
                            continue;
                        }
                        match event(q, sem) {
                            Event::Use => {
                                last_read = Some(q.cycle);
                                reads += 1;
                            }
                            Event::Start(cause) => {
                                end = (q.cycle, cause);
                                break 'scan;
                            }
                            Event::End => {
                                end = (q.cycle, DeathCause::Invalidate);
                                break 'scan;
                            }
                        }
                    }
                    objects.push((b, r.cycle, last_read, end.0, reads, end.1));
                }
                Event::Use => {
                    let live = recs[..i]
                        .iter()
                        .rev()
                        .filter(|q| q.subpartition == sub && blocks_of(q, bs).contains(&b))
                        .find_map(|q| match event(q, sem) {
                            Event::Start(_) => Some(true),
                            Event::End => Some(false),
                            Event::Use => None,
                        })
                        .unwrap_or(false);
                    if !live {
                        orphan_reads += 1;
                    }
                }
                Event::End => {}
            }
        }
    }
    OracleResult { objects, orphan_reads }
}

pub fn sorted(mut v: Vec<Key>) -> Vec<Key> {
    v.sort_by_key(|k| (k.0, k.1, k.3, k.2, k.4));
    v
}
