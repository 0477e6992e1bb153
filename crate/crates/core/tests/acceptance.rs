//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one PASS/FAIL line; any failure makes the binary exit non-zero.

mod common;

use std::fs;
use std::io::{BufReader, Cursor};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use memlife_core::analysis::SimulationReplay;
use memlife_core::composer::assign;
use memlife_core::lifetime::{extract_with_summary, subpartition_stats};
use memlife_core::projector::{active_energy, refresh_count};
use memlife_core::report::{emit_histogram_csvs, emit_json};
use memlife_core::sysarray::{reuse_counts, simulate_into};
use memlife_core::trace::{parse_binary_trace, parse_text_trace, write_binary_trace, write_text_trace};
use memlife_core::{
    analyze, analyze_trace, compose, default_library, emit_svg_plots, Analysis, AnalysisOptions, ArrayConfig,
    BufferConfig, Dataflow, GemmSpec, HistogramSpec, Library, Op, Retention, Trace, TraceMeta, TraceRecord,
    TraceSink, Workload,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn fixture_workload(file: &str) -> Workload {
    let stem = file.trim_end_matches(".json");
    Workload::from_json(&fs::read_to_string(fixture(file)).unwrap(), stem).unwrap()
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

// ---------------------------------------------------------------------------
// 1. Streaming extraction vs. brute force

fn ac1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa11ce);
    let (mut records, mut objects, mut orphans) = (0usize, 0usize, 0u64);
    let mut bad = Vec::new();
    for t in 0..1000 {
        let trace = common::random_trace(&mut rng, 10_000);
        records += trace.records.len();
        for d in &trace.meta.subpartitions {
            let (objs, summary) = extract_with_summary(&trace.meta, &trace.records, d.id).unwrap();
            let want = common::oracle(&trace, d.id);
            objects += objs.len();
            orphans += want.orphan_reads;
            let got = common::sorted(objs.iter().map(common::key).collect());
            if got != common::sorted(want.objects) || summary.counts.orphan_reads != want.orphan_reads {
                bad.push((t, d.id));
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "1000 traces, {records} records, {objects} objects, {orphans} orphan reads; mismatching (trace, subpartition): {:?}",
            &bad[..bad.len().min(5)]
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Greedy composition vs. exhaustive search

/// A scratchpad trace whose objects have log-uniform lifetimes on a random time scale,
/// so the write frequency sweeps across the Hybrid-GCRAM curve.
fn small_instance(rng: &mut impl Rng) -> Trace {
    let span = log_uniform(rng, 2e3, 3e6) as u64;
    let n = rng.gen_range(1..=12u64);
    let mut records = Vec::new();
    for b in 0..n {
        let addr = b * 4;
        let birth = rng.gen_range(0..span / 2);
        records.push(TraceRecord::new(birth, 0, Op::Write, addr, 4));
        let mut end = birth;
        if rng.gen_bool(0.9) {
            let last = birth + log_uniform(rng, 1.0, span as f64) as u64;
            for _ in 1..rng.gen_range(1..=3) {
                records.push(TraceRecord::new(rng.gen_range(birth..=last), 0, Op::Read, addr, 4));
            }
            records.push(TraceRecord::new(last, 0, Op::Read, addr, 4));
            end = last;
        }
        records.push(TraceRecord::new(end + rng.gen_range(0..=span / 10), 0, Op::Invalidate, addr, 4));
    }
    // Per-block reads were pushed in arbitrary order; only their cycles matter.
    records.sort_by_key(|r| (r.cycle, r.address, r.op != Op::Write, r.op == Op::Invalidate));
    let meta = TraceMeta::from_json(
        br#"{"clock_hz":1e9,"workload":"small","backend":"test",
             "subpartitions":[{"id":0,"name":"buf","semantics":"scratchpad","block_size":4}]}"#,
    )
    .unwrap();
    Trace { meta, records }
}

fn ac2() -> Outcome {
    let lib: Library = default_library();
    let devices = lib.devices();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let (mut assignments, mut objects_total) = (0u64, 0usize);
    let mut bad = Vec::new();
    for inst in 0..500 {
        let t = small_instance(&mut rng);
        let (stats, objects) = subpartition_stats(&t.meta, &t.records, 0, HistogramSpec::default()).unwrap();
        assert!(objects.len() <= 12);
        objects_total += objects.len();
        let spec = compose(&objects, &stats, &lib);

        let fw = stats.write_freq_mhz;
        let feasible: Vec<Vec<usize>> = objects
            .iter()
            .map(|o| {
                let l: f64 = o.lifetime_s(stats.clock_hz);
                (0..devices.len())
                    .filter(|&d| match devices[d].retention_at(fw) {
                        Retention::Unbounded => true,
                        Retention::Finite(t) => l < t,
                    })
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; objects.len()];
        let mut best = f64::INFINITY;
        'enumerate: loop {
            assignments += 1;
            let mut bytes = vec![(0u64, 0u64, false); devices.len()];
            for (k, o) in objects.iter().enumerate() {
                let c = &mut bytes[feasible[k][idx[k]]];
                c.0 += o.read_bytes;
                c.1 += o.write_bytes;
                c.2 = true;
            }
            // Same per-class summation order as the composer, so equality is exact.
            let e = bytes
                .iter()
                .zip(devices)
                .filter(|(c, _)| c.2)
                .fold(0.0, |s, (c, d)| s + active_energy(c.0 * 8, c.1 * 8, 0, d));
            best = best.min(e);
            let mut p = 0;
            loop {
                if p == idx.len() {
                    break 'enumerate;
                }
                idx[p] += 1;
                if idx[p] < feasible[p].len() {
                    break;
                }
                idx[p] = 0;
                p += 1;
            }
        }
        let refresh_free = spec.allocations.iter().all(|a| a.refresh_bit_ops == 0);
        if spec.total_energy_j != best || !refresh_free {
            bad.push((inst, spec.total_energy_j, best));
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "500 instances, {objects_total} objects, {assignments} refresh-free assignments enumerated; exact mismatches: {:?}",
            &bad[..bad.len().min(3)]
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Kernel correlation points

fn ac3() -> Outcome {
    let lib: Library = default_library();
    // (kernel, write frequency MHz, lifetime s, expected device)
    let points = [
        ("GEMM", 1.189, 0.736e-6, "Si-GCRAM"),
        ("Tensor Transpose", 1.143, 2.06e-6, "Hybrid-GCRAM"),
        ("Residual", 0.122, 5.90e-6, "Hybrid-GCRAM"),
        ("Normalization", 1.421, 17.40e-6, "eDRAM"),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (kernel, f, l, want) in points {
        let got = assign(l, &lib, f);
        pass &= got == want;
        detail.push(format!("{kernel}→{got}"));
    }
    let (_, f, l, _) = points[3];
    for dev in ["Si-GCRAM", "Hybrid-GCRAM"] {
        let n = refresh_count(l, lib.get(dev).unwrap().retention_at(f));
        pass &= n > 0;
        detail.push(format!("Normalization refreshes on {dev}: {n}"));
    }
    outcome(pass, detail.join(", "))
}

// ---------------------------------------------------------------------------
// 4. Buffer traffic vs. closed-form reuse

#[derive(Default)]
struct Counter {
    reads: [u64; 3],
    writes: [u64; 3],
}

impl TraceSink for Counter {
    fn accept(&mut self, r: TraceRecord) -> std::io::Result<()> {
        match r.op {
            Op::Read => self.reads[r.subpartition as usize] += 1,
            Op::Write => self.writes[r.subpartition as usize] += 1,
            Op::Invalidate => {}
        }
        Ok(())
    }
}

fn ac4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4e05e);
    let bufs = BufferConfig {
        ifmap_bytes: 64 << 10,
        filter_bytes: 64 << 10,
        ofmap_bytes: 128 << 10,
    };
    let (mut runs, mut records) = (0u64, 0u64);
    let mut bad = Vec::new();
    for _ in 0..200 {
        let mut dim = || (log_uniform(&mut rng, 1.0, 513.0) as u64).clamp(1, 512);
        let g = GemmSpec::new(dim(), dim(), dim());
        for df in Dataflow::ALL {
            for n in [8, 32] {
                let array = ArrayConfig::new(n, n, df);
                let mut c = Counter::default();
                let summary = simulate_into(&g, &array, &bufs, &mut c).unwrap();
                runs += 1;
                records += summary.records;
                let want = reuse_counts(&g, &array);
                if (c.reads, c.writes) != want {
                    bad.push(format!("{}x{} {df} {:?}: got {:?} want {:?}", n, n, g, (c.reads, c.writes), want));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{runs} simulations, {records} records; mismatches: {:?}", &bad[..bad.len().min(3)]),
    )
}

// ---------------------------------------------------------------------------
// 5 & 6. ResNet-50 on small and large arrays

fn scaling_buffers() -> BufferConfig {
    BufferConfig {
        ifmap_bytes: 64 << 10,
        filter_bytes: 64 << 10,
        ofmap_bytes: 128 << 10,
    }
}

fn resnet_analysis(df: Dataflow, size: u64, only: Option<Vec<u8>>) -> Analysis {
    let mut replay =
        SimulationReplay::new(fixture_workload("resnet50.json"), ArrayConfig::new(size, size, df), scaling_buffers())
            .unwrap();
    let options = AnalysisOptions {
        only,
        ..AnalysisOptions::default()
    };
    analyze(&mut replay, &default_library(), &options).unwrap()
}

fn resnet_256() -> &'static Vec<(Dataflow, Analysis)> {
    static RUNS: OnceLock<Vec<(Dataflow, Analysis)>> = OnceLock::new();
    RUNS.get_or_init(|| Dataflow::ALL.iter().map(|&df| (df, resnet_analysis(df, 256, None))).collect())
}

fn ac5() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (df, large) in resnet_256() {
        let sb = df.stationary_buffer();
        let small = resnet_analysis(*df, 32, Some(vec![sb]));
        let s = &small.stats[0];
        let l = large.stats.iter().find(|s| s.subpartition == sb).unwrap();
        let ok = l.mean_lifetime_s() <= s.mean_lifetime_s() && l.max_lifetime_s() <= s.max_lifetime_s();
        pass &= ok;
        detail.push(format!(
            "{df}/{}: mean {:.3}→{:.3} µs, max {:.3}→{:.3} µs",
            s.name,
            s.mean_lifetime_s() * 1e6,
            l.mean_lifetime_s() * 1e6,
            s.max_lifetime_s() * 1e6,
            l.max_lifetime_s() * 1e6
        ));
    }
    outcome(pass, format!("32×32→256×256 stationary buffer; {}", detail.join("; ")))
}

const SHORT_LIVED_MIN: f64 = 0.70;

fn ac6() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (df, a) in resnet_256() {
        let (mut below, mut total) = (0u64, 0u64);
        for s in &a.stats {
            let one_us = (1e-6 * s.clock_hz).round() as u64;
            let (b, t) = s.lifetimes.accesses_below(one_us);
            below += b;
            total += t;
        }
        let frac = below as f64 / total as f64;
        if frac < SHORT_LIVED_MIN {
            pass = false;
            println!(
                "  DEVIATION: {df} puts only {:.1}% of buffer accesses under 1 µs (floor {:.0}%); \
                 the schedule model keeps data resident longer than the reference measurement",
                frac * 100.0,
                SHORT_LIVED_MIN * 100.0
            );
        }
        detail.push(format!("{df} {:.1}%", frac * 100.0));
    }
    outcome(
        pass,
        format!("accesses with lifetime < 1 µs at 256×256 (floor 70%): {}", detail.join(", ")),
    )
}

// ---------------------------------------------------------------------------
// 7. Heterogeneous composition never loses to SRAM

fn ac7() -> Outcome {
    let lib: Library = default_library();
    let mut pass = true;
    let mut detail = Vec::new();
    for file in ["resnet50.json", "bert_gemm.json", "llama1b_gemm.json"] {
        let w = fixture_workload(file);
        let name = w.name.clone();
        let mut replay =
            SimulationReplay::new(w, ArrayConfig::new(256, 256, Dataflow::OutputStationary), BufferConfig::default())
                .unwrap();
        let a = analyze(&mut replay, &lib, &AnalysisOptions::default()).unwrap();
        let mut worst = (f64::INFINITY, f64::INFINITY);
        for s in &a.report.subpartitions {
            let c = &s.composition;
            worst = (worst.0.min(c.energy_savings_x), worst.1.min(c.area_savings_x));
        }
        pass &= worst.0 >= 1.0 && worst.1 >= 1.0;
        detail.push(format!("{name}: min energy {:.3}×, min area {:.3}×", worst.0, worst.1));
    }
    outcome(pass, format!("os 256×256, default buffers; {}", detail.join("; ")))
}

// ---------------------------------------------------------------------------
// 8. Determinism and trace formats

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let w = Workload::from_json(
        r#"{"name":"det","layers":[{"type":"gemm","M":70,"K":45,"N":33},
            {"type":"conv","in_h":10,"in_w":10,"in_c":8,"out_c":24,"k_h":3,"k_w":3,"stride":1,"padding":1}]}"#,
        "det",
    )
    .unwrap();
    let mut out = Vec::new();
    for df in Dataflow::ALL {
        let t = w.run(&ArrayConfig::new(8, 8, df), &BufferConfig::default()).unwrap();
        out.push((format!("{df}.bin"), write_binary_trace(&t.meta, &t.records)));
        out.push((format!("{df}.csv"), write_text_trace(&t.meta, &t.records, true)));
        let a = analyze_trace(&t, &default_library(), &AnalysisOptions::default()).unwrap();
        out.push((format!("{df}.json"), emit_json(&a.report)));
        let sub = dir.join(df.short_name());
        let mut files = emit_histogram_csvs(&a.report, &sub).unwrap();
        files.extend(emit_svg_plots(&a.report, &sub).unwrap());
        for f in files {
            let name = format!("{df}/{}", f.file_name().unwrap().to_string_lossy());
            out.push((name, fs::read(&f).unwrap()));
        }
    }
    out
}

fn ac8() -> Outcome {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (a, b) = (outputs(d1.path()), outputs(d2.path()));
    let identical = a == b;
    let artifacts = a.len();

    let mut rng = ChaCha8Rng::seed_from_u64(0x8b17e5);
    let mut bad = Vec::new();
    let mut records = 0;
    for i in 0..1000 {
        let t = common::random_trace(&mut rng, 10_000);
        records += t.records.len();
        let bin = write_binary_trace(&t.meta, &t.records);
        let txt = write_text_trace(&t.meta, &t.records, true);
        let from_bin = parse_binary_trace(&bin).unwrap();
        let from_txt = parse_text_trace(Cursor::new(&txt), None).unwrap();
        let same = from_bin == t
            && from_txt == t
            && write_binary_trace(&from_txt.meta, &from_txt.records) == bin
            && write_text_trace(&from_bin.meta, &from_bin.records, true) == txt;
        if !same {
            bad.push(i);
        }
    }
    outcome(
        identical && bad.is_empty(),
        format!(
            "{artifacts} artifacts byte-identical across runs: {identical}; 1000 random traces ({records} records) \
             round-trip bin↔text; failures: {:?}",
            &bad[..bad.len().min(5)]
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. Cache-semantics fixture

fn ac9() -> Outcome {
    let file = fs::File::open(fixture("cache_trace.csv")).unwrap();
    let trace = parse_text_trace(BufReader::new(file), None).unwrap();
    let expected: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture("cache_trace.expected.json")).unwrap()).unwrap();
    let mut pass = trace.records.len() <= 50
        && trace.records.iter().map(|r| r.cycle).max() == expected["final_cycle"].as_u64();
    let mut objects = 0;
    for want in expected["subpartitions"].as_array().unwrap() {
        let id = want["id"].as_u64().unwrap() as u8;
        let (objs, summary) = extract_with_summary(&trace.meta, &trace.records, id).unwrap();
        objects += objs.len();
        let got: Vec<serde_json::Value> = objs
            .iter()
            .map(|o| {
                serde_json::json!({
                    "block": o.block,
                    "birth": o.birth_cycle,
                    "last_read": o.last_read_cycle,
                    "death": o.death_cycle,
                    "cause": o.cause,
                })
            })
            .collect();
        pass &= got == *want["objects"].as_array().unwrap();
        pass &= Some(summary.counts.orphan_reads) == want["orphan_reads"].as_u64();
        pass &= Some(summary.counts.hits) == want["hits"].as_u64();
        pass &= Some(summary.counts.miss_fills) == want["miss_fills"].as_u64();
        let brute = common::oracle(&trace, id);
        pass &= common::sorted(brute.objects) == common::sorted(objs.iter().map(common::key).collect());
        pass &= brute.orphan_reads == summary.counts.orphan_reads;
    }
    outcome(
        pass,
        format!(
            "{} records, {objects} objects match hand-computed and brute-force expectations",
            trace.records.len()
        ),
    )
}

// ---------------------------------------------------------------------------

type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1", "lifetime oracle equivalence", Duration::from_secs(60), ac1),
        ("AC2", "composition optimality", Duration::from_secs(30), ac2),
        ("AC3", "kernel correlation points", Duration::from_secs(1), ac3),
        ("AC4", "systolic reuse conservation", Duration::from_secs(120), ac4),
        ("AC5", "array-scaling trend", Duration::from_secs(600), ac5),
        ("AC6", "short-livedness plausibility", Duration::from_secs(600), ac6),
        ("AC7", "savings dominance", Duration::from_secs(120), ac7),
        ("AC8", "determinism and trace formats", Duration::from_secs(60), ac8),
        ("AC9", "cache-semantics fixture", Duration::from_secs(1), ac9),
    ];
    let mut failed = 0;
    for (id, title, limit, check) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check));
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && took <= limit, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id} {title}: {detail} [{:.1} s, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
