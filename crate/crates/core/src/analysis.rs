//! End-to-end analysis of a trace into an [`AnalysisReport`].
//!
//! Traces can be far larger than memory, so analysis streams: a first pass validates
//! and measures each subpartition's write frequency (which selects the retention
//! point of frequency-dependent devices), a second pass extracts objects and feeds
//! the statistics, projection and composition builders. Sources therefore have to be
//! replayable: an in-memory trace, a trace file, or a deterministic simulation.

use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::composer::CompositionBuilder;
use crate::lifetime::{LifetimeError, LifetimeTracker, StatsBuilder, SubpartitionStats, WriteRate};
use crate::projector::project;
use crate::report::{AnalysisReport, HistogramReport, StatsSummary, SubpartitionReport};
use crate::sysarray::{ArrayConfig, BufferConfig, SimError, Workload};
use crate::trace::{
    BinaryTraceReader, TextTraceReader, Trace, TraceError, TraceMeta, TraceRecord, TraceSink, Validator,
    Violation,
};
use crate::{HistogramSpec, Library};

const MAX_REPORTED_VIOLATIONS: usize = 10;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Lifetime(#[from] LifetimeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("trace failed validation with {total} violation(s); first: {}", first.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid { total: usize, first: Vec<Violation> },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Visit<'v> = dyn FnMut(&TraceRecord) -> Result<(), AnalysisError> + 'v;

/// A record source that can be traversed more than once, identically each time.
pub trait Replay {
    fn meta(&self) -> &TraceMeta;
    fn replay(&mut self, visit: &mut Visit<'_>) -> Result<(), AnalysisError>;
}

impl Replay for Trace {
    fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    fn replay(&mut self, visit: &mut Visit<'_>) -> Result<(), AnalysisError> {
        self.records.iter().try_for_each(visit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Binary,
    Text,
}

impl TraceFormat {
    /// `.csv` and `.txt` are text; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("txt") => TraceFormat::Text,
            _ => TraceFormat::Binary,
        }
    }
}

/// A trace file, re-read on every pass.
#[derive(Debug)]
pub struct TraceFile {
    path: PathBuf,
    format: TraceFormat,
    sidecar: Option<TraceMeta>,
    meta: TraceMeta,
}

impl TraceFile {
    pub fn open(path: &Path, format: TraceFormat, sidecar: Option<TraceMeta>) -> Result<Self, AnalysisError> {
        let meta = match format {
            TraceFormat::Binary => BinaryTraceReader::new(BufReader::new(File::open(path)?))?.meta().clone(),
            TraceFormat::Text => TextTraceReader::new(BufReader::new(File::open(path)?), sidecar.clone())?
                .meta()
                .clone(),
        };
        Ok(TraceFile {
            path: path.to_path_buf(),
            format,
            sidecar,
            meta,
        })
    }

    /// Reinterprets cycle counts at a different clock frequency.
    pub fn with_clock(mut self, clock_hz: f64) -> Self {
        self.meta.clock_hz = clock_hz;
        self.sidecar = self.sidecar.map(|m| TraceMeta { clock_hz, ..m });
        self
    }
}

impl Replay for TraceFile {
    fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    fn replay(&mut self, visit: &mut Visit<'_>) -> Result<(), AnalysisError> {
        let input = BufReader::with_capacity(1 << 20, File::open(&self.path)?);
        match self.format {
            TraceFormat::Binary => {
                let mut r = BinaryTraceReader::new(input)?;
                while let Some(rec) = r.next_record()? {
                    visit(&rec)?;
                }
            }
            TraceFormat::Text => {
                let mut r = TextTraceReader::new(input, self.sidecar.clone())?;
                while let Some(rec) = r.next_record()? {
                    visit(&rec)?;
                }
            }
        }
        Ok(())
    }
}

/// Re-runs a deterministic simulation on every pass instead of storing its trace.
#[derive(Debug)]
pub struct SimulationReplay {
    workload: Workload,
    array: ArrayConfig,
    bufs: BufferConfig,
    meta: TraceMeta,
}

impl SimulationReplay {
    pub fn new(workload: Workload, array: ArrayConfig, bufs: BufferConfig) -> Result<Self, AnalysisError> {
        let meta = workload.meta(&array, &bufs)?;
        Ok(SimulationReplay {
            workload,
            array,
            bufs,
            meta,
        })
    }
}

struct VisitSink<'a, 'v> {
    visit: &'a mut Visit<'v>,
    failure: Option<AnalysisError>,
}

impl TraceSink for VisitSink<'_, '_> {
    fn accept(&mut self, record: TraceRecord) -> io::Result<()> {
        (self.visit)(&record).map_err(|e| {
            self.failure = Some(e);
            io::Error::other("analysis aborted")
        })
    }
}

impl Replay for SimulationReplay {
    fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    fn replay(&mut self, visit: &mut Visit<'_>) -> Result<(), AnalysisError> {
        let mut sink = VisitSink { visit, failure: None };
        match self.workload.run_into(&self.array, &self.bufs, &mut sink) {
            Ok(_) => Ok(()),
            Err(e) => Err(sink.failure.take().unwrap_or(AnalysisError::Sim(e))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisOptions {
    pub histogram: HistogramSpec,
    /// Restrict the analysis to these subpartitions (all when `None`).
    pub only: Option<Vec<u8>>,
}


#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub stats: Vec<SubpartitionStats>,
}

/// Pass 1 result.
struct Survey {
    rates: Vec<WriteRate>,
    end_cycle: u64,
}

fn slot_table(meta: &TraceMeta, only: &Option<Vec<u8>>) -> [Option<usize>; 256] {
    let mut table = [None; 256];
    let mut next = 0;
    for d in &meta.subpartitions {
        if only.as_ref().is_none_or(|o| o.contains(&d.id)) {
            table[d.id as usize] = Some(next);
            next += 1;
        }
    }
    table
}

fn survey(source: &mut dyn Replay, slots: &[Option<usize>; 256]) -> Result<Survey, AnalysisError> {
    let meta = source.meta().clone();
    let semantics: Vec<_> = meta
        .subpartitions
        .iter()
        .filter(|d| slots[d.id as usize].is_some())
        .map(|d| d.semantics)
        .collect();
    let mut validator = Validator::new(&meta);
    let mut violations = Vec::new();
    let mut total = 0usize;
    let mut rates = vec![WriteRate::default(); semantics.len()];
    let mut end_cycle = 0u64;
    source.replay(&mut |rec| {
        let before = violations.len();
        validator.check(rec, &mut violations);
        if violations.len() > before {
            total += violations.len() - before;
            violations.truncate(MAX_REPORTED_VIOLATIONS);
            return Ok(());
        }
        end_cycle = end_cycle.max(rec.cycle);
        if let Some(i) = slots[rec.subpartition as usize] {
            rates[i].push(rec, semantics[i]);
        }
        Ok(())
    })?;
    if total > 0 {
        return Err(AnalysisError::Invalid {
            total,
            first: violations,
        });
    }
    Ok(Survey { rates, end_cycle })
}

/// Runs both passes over `source` and assembles the report.
pub fn analyze(
    source: &mut dyn Replay,
    library: &Library,
    options: &AnalysisOptions,
) -> Result<Analysis, AnalysisError> {
    options
        .histogram
        .validate()
        .map_err(AnalysisError::Lifetime)?;
    let meta = source.meta().clone();
    let slots = slot_table(&meta, &options.only);
    let survey = survey(source, &slots)?;
    let descs: Vec<_> = meta
        .subpartitions
        .iter()
        .filter(|d| slots[d.id as usize].is_some())
        .collect();
    let rates: Vec<f64> = survey.rates.iter().map(|r| r.mhz(meta.clock_hz)).collect();

    struct Lane<'a> {
        tracker: LifetimeTracker,
        stats: StatsBuilder,
        comp: CompositionBuilder<'a, f64>,
    }
    let mut lanes: Vec<Lane> = descs
        .iter()
        .zip(&rates)
        .map(|(d, &fw)| Lane {
            tracker: LifetimeTracker::new(d.id, d.semantics, d.block_size),
            stats: StatsBuilder::new(),
            comp: CompositionBuilder::new(library, fw, meta.clock_hz),
        })
        .collect();

    source.replay(&mut |rec| {
        if let Some(i) = slots[rec.subpartition as usize] {
            let Lane { tracker, stats, comp } = &mut lanes[i];
            tracker.push(rec, &mut |o| {
                stats.add(&o);
                comp.add(&o);
            })?;
        }
        Ok(())
    })?;

    let mut subs = Vec::with_capacity(lanes.len());
    let mut all_stats = Vec::with_capacity(lanes.len());
    for ((lane, d), fw) in lanes.into_iter().zip(&descs).zip(rates) {
        let Lane {
            tracker,
            mut stats,
            mut comp,
        } = lane;
        let summary = tracker.finish(survey.end_cycle, &mut |o| {
            stats.add(&o);
            comp.add(&o);
        });
        let orphan = summary.counts.orphan_read_bytes;
        let st = stats.finish(&meta, d.id, summary, fw, options.histogram)?;
        let projections: Vec<_> = library.devices().iter().map(|dev| project(&st, dev)).collect();
        let baseline = projections[library.fallback_index()].clone();
        let composition = comp.finish(d.id, d.block_size, orphan, baseline);
        subs.push(SubpartitionReport {
            id: d.id,
            name: d.name.clone(),
            semantics: d.semantics,
            block_size: d.block_size,
            capacity_bytes: d.capacity,
            summary: StatsSummary::from_stats(&st),
            histogram: HistogramReport::from_histogram(&st.histogram),
            projections,
            composition,
        });
        all_stats.push(st);
    }

    Ok(Analysis {
        report: AnalysisReport {
            workload: meta.workload_name.clone(),
            backend: meta.backend_name.clone(),
            clock_hz: meta.clock_hz,
            histogram_spec: options.histogram,
            devices: library.devices().iter().map(|d| d.name.clone()).collect(),
            subpartitions: subs,
        },
        stats: all_stats,
    })
}

pub fn analyze_trace(trace: &Trace, library: &Library, options: &AnalysisOptions) -> Result<Analysis, AnalysisError> {
    let mut t = trace.clone();
    analyze(&mut t, library, options)
}
