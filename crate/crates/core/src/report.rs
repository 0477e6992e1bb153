//! Report model and emitters: deterministic JSON, histogram CSV and static SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::lifetime::{AccessCounts, Histogram, LogHistogramSpec, SubpartitionStats};
use crate::trace::{Semantics, SubpartitionId};
use crate::{Composition, Projection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub workload: String,
    pub backend: String,
    pub clock_hz: f64,
    pub histogram_spec: LogHistogramSpec<f64>,
    pub devices: Vec<String>,
    pub subpartitions: Vec<SubpartitionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpartitionReport {
    pub id: SubpartitionId,
    pub name: String,
    pub semantics: Semantics,
    pub block_size: u64,
    pub capacity_bytes: u64,
    pub summary: StatsSummary,
    pub histogram: HistogramReport,
    pub projections: Vec<Projection>,
    pub composition: Composition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub objects: u64,
    pub dead_writes: u64,
    /// Objects with a non-zero lifetime, i.e. ones a short-retention device may have to refresh.
    pub refresh_eligible_objects: u64,
    pub unique_blocks: u64,
    pub peak_live_bytes: u64,
    pub write_freq_mhz: f64,
    pub mean_lifetime_s: f64,
    pub max_lifetime_s: f64,
    pub p50_lifetime_s: f64,
    pub p99_lifetime_s: f64,
    pub counts: AccessCounts,
}

impl StatsSummary {
    pub fn from_stats(s: &SubpartitionStats) -> Self {
        let zero_lifetime = s.lifetimes.iter().next().filter(|(l, _)| *l == 0).map_or(0, |(_, b)| b.objects);
        StatsSummary {
            objects: s.objects(),
            dead_writes: s.dead_writes,
            refresh_eligible_objects: s.objects() - zero_lifetime,
            unique_blocks: s.unique_blocks,
            peak_live_bytes: s.peak_live_bytes,
            write_freq_mhz: s.write_freq_mhz,
            mean_lifetime_s: s.mean_lifetime_s(),
            max_lifetime_s: s.max_lifetime_s(),
            p50_lifetime_s: s.quantile_lifetime_s(0.5),
            p99_lifetime_s: s.quantile_lifetime_s(0.99),
            counts: s.counts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo_s: f64,
    pub hi_s: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub underflow: u64,
    pub overflow: u64,
    pub bins: Vec<HistogramBin>,
}

impl HistogramReport {
    pub fn from_histogram(h: &Histogram<f64>) -> Self {
        HistogramReport {
            underflow: h.underflow,
            overflow: h.overflow,
            bins: h
                .counts
                .iter()
                .enumerate()
                .map(|(k, &count)| HistogramBin {
                    lo_s: h.spec.edge(k),
                    hi_s: h.spec.edge(k + 1),
                    count,
                })
                .collect(),
        }
    }
}

fn sorted(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> = m.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, sorted(v));
            }
            Value::Object(out)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sorted).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys and shortest round-trip numbers.
pub fn emit_json(report: &AnalysisReport) -> Vec<u8> {
    let value = sorted(serde_json::to_value(report).expect("report serializes"));
    let mut out = serde_json::to_vec_pretty(&value).expect("value serializes");
    out.push(b'\n');
    out
}

pub fn parse_json(bytes: &[u8]) -> serde_json::Result<AnalysisReport> {
    serde_json::from_slice(bytes)
}

/// `bin_lo_s,bin_hi_s,count`, with underflow first and overflow last.
pub fn emit_histogram_csv(h: &Histogram<f64>) -> Vec<u8> {
    let mut s = String::from("bin_lo_s,bin_hi_s,count\n");
    let _ = writeln!(s, "0,{},{}", h.spec.min_s, h.underflow);
    for (k, c) in h.counts.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", h.spec.edge(k), h.spec.edge(k + 1), c);
    }
    let _ = writeln!(s, "{},inf,{}", h.spec.max_s, h.overflow);
    s.into_bytes()
}

pub fn report_histogram_csv(h: &HistogramReport, spec: &LogHistogramSpec<f64>) -> Vec<u8> {
    let mut s = String::from("bin_lo_s,bin_hi_s,count\n");
    let _ = writeln!(s, "0,{},{}", spec.min_s, h.underflow);
    for b in &h.bins {
        let _ = writeln!(s, "{},{},{}", b.lo_s, b.hi_s, b.count);
    }
    let _ = writeln!(s, "{},inf,{}", spec.max_s, h.overflow);
    s.into_bytes()
}

const PALETTE: [&str; 8] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
];

fn device_color(devices: &[String], name: &str) -> &'static str {
    let i = devices.iter().position(|d| d == name).unwrap_or(PALETTE.len() - 1);
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
}

/// Log-scale lifetime histogram with a vertical line at each finite device retention.
pub fn lifetime_svg(report: &AnalysisReport, sub: &SubpartitionReport) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (60.0, 20.0, 30.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let spec = &report.histogram_spec;
    let (lmin, lmax) = (spec.min_s.log10(), spec.max_s.log10());
    let x_of = |s: f64| left + (s.log10() - lmin) / (lmax - lmin) * pw;
    let peak = sub.histogram.bins.iter().map(|b| b.count).max().unwrap_or(0).max(1);

    let mut out = String::new();
    svg_open(&mut out, w, h, &format!("{} lifetimes", sub.name));
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle">{} lifetime histogram ({} objects, f_w = {} MHz)</text>"#,
        w / 2.0,
        escape(&sub.name),
        sub.summary.objects,
        sub.summary.write_freq_mhz
    );
    let _ = writeln!(
        out,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    for b in &sub.histogram.bins {
        if b.count == 0 {
            continue;
        }
        let (x0, x1) = (x_of(b.lo_s), x_of(b.hi_s));
        let bh = b.count as f64 / peak as f64 * ph;
        let _ = writeln!(
            out,
            r##"<rect class="bin" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#4c72b0" data-count="{}"/>"##,
            x0,
            top + ph - bh,
            x1 - x0,
            bh,
            b.count
        );
    }
    let decades = (lmax - lmin).round() as i64;
    for d in 0..=decades {
        let s = 10f64.powf(lmin + d as f64);
        let x = x_of(s);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.3}" y1="{}" x2="{x:.3}" y2="{}" stroke="#333"/><text x="{x:.3}" y="{}" text-anchor="middle">1e{}</text>"##,
            top + ph,
            top + ph + 5.0,
            top + ph + 18.0,
            (lmin + d as f64).round() as i64
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">lifetime (s); underflow {}, overflow {}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        sub.histogram.underflow,
        sub.histogram.overflow
    );
    for p in &sub.projections {
        let Some(t) = p.retention_s else { continue };
        if !(t >= spec.min_s && t <= spec.max_s) {
            continue;
        }
        let x = x_of(t);
        let color = device_color(&report.devices, &p.device);
        let _ = writeln!(
            out,
            r#"<line class="retention" data-device="{}" data-retention-s="{}" x1="{x:.3}" y1="{top}" x2="{x:.3}" y2="{}" stroke="{color}" stroke-dasharray="4 3"/>"#,
            escape(&p.device),
            t,
            top + ph
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{}" fill="{color}">{}</text>"#,
            x + 3.0,
            top + 12.0,
            escape(&p.device)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Stacked access-share bars per subpartition plus energy/area savings bars.
pub fn composition_svg(report: &AnalysisReport) -> String {
    let n = report.subpartitions.len().max(1) as f64;
    let (w, bar_w) = (640.0, 400.0);
    let left = 120.0;
    let row = 28.0;
    let share_h = 40.0 + n * row;
    let savings_top = share_h + 30.0;
    let savings_h = 160.0;
    let h = savings_top + savings_h + 40.0 + 20.0 * report.devices.len() as f64;

    let mut out = String::new();
    svg_open(&mut out, w, h, &format!("{} composition", report.workload));
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle">Composition by access share ({})</text>"#,
        w / 2.0,
        escape(&report.workload)
    );
    for (i, sub) in report.subpartitions.iter().enumerate() {
        let y = 30.0 + i as f64 * row;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 14.0,
            escape(&sub.name)
        );
        let mut x = left;
        for a in &sub.composition.allocations {
            let seg = a.access_share * bar_w;
            if seg <= 0.0 {
                continue;
            }
            let _ = writeln!(
                out,
                r#"<rect class="share" data-subpartition="{}" data-device="{}" data-share="{}" x="{x:.3}" y="{y}" width="{seg:.3}" height="20" fill="{}"/>"#,
                escape(&sub.name),
                escape(&a.device),
                a.access_share,
                device_color(&report.devices, &a.device)
            );
            x += seg;
        }
    }

    let max_savings = report
        .subpartitions
        .iter()
        .flat_map(|s| [s.composition.energy_savings_x, s.composition.area_savings_x])
        .fold(1.0f64, f64::max);
    let base = savings_top + savings_h;
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">Savings vs SRAM baseline (energy, area)</text>"#,
        w / 2.0,
        savings_top - 8.0
    );
    let slot = bar_w / n;
    for (i, sub) in report.subpartitions.iter().enumerate() {
        let x0 = left + i as f64 * slot;
        for (j, (kind, v, color)) in [
            ("energy", sub.composition.energy_savings_x, "#55a868"),
            ("area", sub.composition.area_savings_x, "#8172b3"),
        ]
        .into_iter()
        .enumerate()
        {
            let bh = v / max_savings * savings_h;
            let _ = writeln!(
                out,
                r#"<rect class="savings" data-subpartition="{}" data-kind="{kind}" data-value="{v}" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{color}"/>"#,
                escape(&sub.name),
                x0 + 4.0 + j as f64 * slot * 0.4,
                base - bh,
                slot * 0.4 - 4.0,
                bh
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + slot * 0.4,
            base + 14.0,
            escape(&sub.name)
        );
    }
    let unit = base - savings_h / max_savings;
    let _ = writeln!(
        out,
        r##"<line x1="{left}" y1="{unit:.3}" x2="{}" y2="{unit:.3}" stroke="#333" stroke-dasharray="2 2"/><text x="{}" y="{:.3}">1.0x</text>"##,
        left + bar_w,
        left + bar_w + 4.0,
        unit + 4.0
    );
    for (i, d) in report.devices.iter().enumerate() {
        let y = base + 30.0 + i as f64 * 20.0;
        let _ = writeln!(
            out,
            r#"<rect x="{left}" y="{y}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            device_color(&report.devices, d),
            left + 18.0,
            y + 10.0,
            escape(d)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `lifetime_<subpartition>.svg` for each subpartition and `composition.svg`.
pub fn emit_svg_plots(report: &AnalysisReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for sub in &report.subpartitions {
        let p = dir.join(format!("lifetime_{}.svg", file_stem(&sub.name)));
        fs::write(&p, lifetime_svg(report, sub))?;
        written.push(p);
    }
    let p = dir.join("composition.svg");
    fs::write(&p, composition_svg(report))?;
    written.push(p);
    Ok(written)
}

/// Writes `histogram_<subpartition>.csv` for each subpartition.
pub fn emit_histogram_csvs(report: &AnalysisReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for sub in &report.subpartitions {
        let p = dir.join(format!("histogram_{}.csv", file_stem(&sub.name)));
        fs::write(&p, report_histogram_csv(&sub.histogram, &report.histogram_spec))?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{analyze_trace, AnalysisOptions};
    use crate::device::default_library;
    use crate::lifetime::lifetime_histogram;
    use crate::sysarray::{ArrayConfig, BufferConfig, Dataflow, GemmSpec, Workload};
    use crate::Allocation;

    fn report() -> AnalysisReport {
        let w = Workload::from_json(r#"[{"type":"gemm","M":30,"K":20,"N":12}]"#, "w").unwrap();
        let t = w
            .run(&ArrayConfig::new(4, 4, Dataflow::WeightStationary), &BufferConfig::default())
            .unwrap();
        analyze_trace(&t, &default_library(), &AnalysisOptions::default())
            .unwrap()
            .report
    }

    #[test]
    fn json_is_deterministic_and_round_trips() {
        let r = report();
        let (a, b) = (emit_json(&r), emit_json(&r));
        assert_eq!(a, b);
        assert_eq!(parse_json(&a).unwrap(), r);
        let projections: usize = r.subpartitions.iter().map(|s| s.projections.len()).sum();
        assert_eq!(projections, 3 * 4);
        let text = String::from_utf8(a).unwrap();
        // Keys come out sorted.
        let clock = text.find("\"clock_hz\"").unwrap();
        let workload = text.find("\"workload\"").unwrap();
        assert!(clock < workload);
        let _ = GemmSpec::new(1, 1, 1);
    }

    #[test]
    fn csv_rows() {
        let spec = LogHistogramSpec {
            min_s: 1e-7,
            max_s: 1e-3,
            bins_per_decade: 1,
        };
        let empty = lifetime_histogram::<f64>(&[], spec).unwrap();
        let csv = String::from_utf8(emit_histogram_csv(&empty)).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "bin_lo_s,bin_hi_s,count");
        assert_eq!(lines[1], "0,0.0000001,0");
        assert_eq!(*lines.last().unwrap(), "0.001,inf,0");
        let h = lifetime_histogram(&[0.5e-6, 5e-6, 5e-6, 50e-6, 1.0], spec).unwrap();
        let csv = String::from_utf8(emit_histogram_csv(&h)).unwrap();
        let counts: Vec<u64> = csv
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(counts, vec![0, 1, 2, 1, 0, 1]);
    }

    #[test]
    fn svgs_are_valid_xml_with_retention_lines() {
        let r = report();
        for s in &r.subpartitions {
            let svg = lifetime_svg(&r, s);
            let doc = roxmltree::Document::parse(&svg).unwrap();
            let lines: Vec<_> = doc
                .descendants()
                .filter(|n| n.attribute("class") == Some("retention"))
                .map(|n| n.attribute("data-device").unwrap().to_string())
                .collect();
            assert_eq!(lines, ["Si-GCRAM", "Hybrid-GCRAM", "eDRAM"]);
        }
        roxmltree::Document::parse(&composition_svg(&r)).unwrap();
    }

    #[test]
    fn stacked_bar_widths_follow_shares() {
        let mut r = report();
        let alloc = |device: &str, share: f64| Allocation {
            device: device.into(),
            objects: 0,
            access_share: share,
            capacity_bytes: 0,
            area_um2: 0.0,
            active_energy_j: 0.0,
            refresh_bit_ops: 0,
        };
        r.subpartitions[0].composition.allocations =
            vec![alloc("Si-GCRAM", 0.90), alloc("Hybrid-GCRAM", 0.08), alloc("eDRAM", 0.02)];
        let svg = composition_svg(&r);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let widths: Vec<f64> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("share") && n.attribute("data-subpartition") == Some("ifmap"))
            .map(|n| n.attribute("width").unwrap().parse().unwrap())
            .collect();
        assert_eq!(widths.len(), 3);
        let total: f64 = widths.iter().sum();
        for (w, expect) in widths.iter().zip([0.90, 0.08, 0.02]) {
            assert!((w / total - expect).abs() < 1e-4, "{w} / {total} vs {expect}");
        }
    }

    #[test]
    fn plot_files_are_written() {
        let r = report();
        let dir = tempfile::tempdir().unwrap();
        let svgs = emit_svg_plots(&r, dir.path()).unwrap();
        let names: Vec<_> = svgs.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(
            names,
            ["lifetime_ifmap.svg", "lifetime_filter.svg", "lifetime_ofmap.svg", "composition.svg"]
        );
        let csvs = emit_histogram_csvs(&r, dir.path()).unwrap();
        assert_eq!(csvs.len(), 3);
    }
}
