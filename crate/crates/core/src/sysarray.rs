//! Cycle-level systolic-array trace generator.
//!
//! GEMMs (convolutions are lowered with im2col) are folded onto an `R×C` array under
//! weight-, input- or output-stationary dataflow, and every access to the ifmap,
//! filter and ofmap scratchpads is emitted as a trace record.
//!
//! Schedule model:
//! - ws/is: a stationary tile is `R×C` elements of the pinned operand. The pinned
//!   operand's buffer is a prefetch queue of `buf / (R·C·elem)` tile slots. Tiles are
//!   loaded one row per cycle in parallel across columns: the first `depth` tiles
//!   at layer start, later ones as soon as the tile that last used their slot has
//!   been read out. Row `r` of a tile is read into the array at `t0 + r`.
//! - ws/is: the streamed operand enters as a skewed wavefront. Element `(s, r)` is
//!   read at `t0 + R + s + r` and written `P` cycles earlier at a wrapping stream
//!   address. Partial sums `(s, c)` are written at `t0 + 2R + s + c`. Every K-fold
//!   after the first reads them back in the same cycle first, and the last K-fold
//!   drain-reads them `D` cycles later.
//! - os: ifmap `(i, k)` is read at `t0 + i + k` and filter `(k, j)` at `t0 + k + j`,
//!   both prefetched `P` cycles earlier. Output `(i, j)` is written at
//!   `t0 + K + i + j` and drained `D` cycles later.
//!
//! Folds run back to back and layers run back to back. Records of one buffer come
//! out in cycle order; within a cycle they keep generation order.

use std::collections::VecDeque;
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{
    Op, Semantics, SubpartitionDesc, SubpartitionId, Trace, TraceMeta, TraceRecord, TraceSink,
};

pub const IFMAP: SubpartitionId = 0;
pub const FILTER: SubpartitionId = 1;
pub const OFMAP: SubpartitionId = 2;
const BUFFER_NAMES: [&str; 3] = ["ifmap", "filter", "ofmap"];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{operand} buffer too small: needs {required} bytes, has {available}")]
    BufferFit {
        operand: &'static str,
        required: u64,
        available: u64,
    },
    #[error("{0}")]
    Config(String),
    #[error("layer {layer}: {reason}")]
    Layer { layer: String, reason: String },
    #[error("workload: {0}")]
    Workload(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    #[serde(rename = "is")]
    InputStationary,
    #[serde(rename = "ws")]
    WeightStationary,
    #[serde(rename = "os")]
    OutputStationary,
}

impl Dataflow {
    pub const ALL: [Dataflow; 3] = [
        Dataflow::InputStationary,
        Dataflow::WeightStationary,
        Dataflow::OutputStationary,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Dataflow::InputStationary => "is",
            Dataflow::WeightStationary => "ws",
            Dataflow::OutputStationary => "os",
        }
    }

    /// Buffer holding the operand pinned in the array.
    pub fn stationary_buffer(self) -> SubpartitionId {
        match self {
            Dataflow::InputStationary => IFMAP,
            Dataflow::WeightStationary => FILTER,
            Dataflow::OutputStationary => OFMAP,
        }
    }
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Dataflow {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "is" => Ok(Dataflow::InputStationary),
            "ws" => Ok(Dataflow::WeightStationary),
            "os" => Ok(Dataflow::OutputStationary),
            other => Err(SimError::Config(format!("unknown dataflow {other:?} (expected is, ws or os)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemmSpec {
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(default = "one")]
    pub elem_bytes: u32,
}

fn one() -> u32 {
    1
}

impl GemmSpec {
    pub fn new(m: u64, k: u64, n: u64) -> Self {
        GemmSpec { m, k, n, elem_bytes: 1 }
    }

    pub fn macs(&self) -> u64 {
        self.m * self.k * self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_h: u64,
    pub in_w: u64,
    pub in_c: u64,
    pub out_c: u64,
    pub k_h: u64,
    pub k_w: u64,
    #[serde(default = "one_u64")]
    pub stride: u64,
    #[serde(default)]
    pub padding: u64,
}

fn one_u64() -> u64 {
    1
}

impl ConvSpec {
    fn out_dim(input: u64, kernel: u64, stride: u64, pad: u64) -> Option<u64> {
        let padded = input + 2 * pad;
        if stride == 0 || kernel == 0 || padded < kernel {
            return None;
        }
        Some((padded - kernel) / stride + 1)
    }

    pub fn output_hw(&self) -> Option<(u64, u64)> {
        Some((
            Self::out_dim(self.in_h, self.k_h, self.stride, self.padding)?,
            Self::out_dim(self.in_w, self.k_w, self.stride, self.padding)?,
        ))
    }
}

/// im2col lowering: `M = out_h·out_w`, `K = k_h·k_w·in_c`, `N = out_c`.
pub fn conv_to_gemm(conv: &ConvSpec) -> Result<GemmSpec, SimError> {
    let bad = |reason: &str| SimError::Layer {
        layer: "conv".into(),
        reason: reason.into(),
    };
    if conv.in_c == 0 || conv.out_c == 0 {
        return Err(bad("channel counts must be ≥ 1"));
    }
    let (oh, ow) = conv
        .output_hw()
        .ok_or_else(|| bad("kernel larger than padded input (or zero stride/kernel)"))?;
    Ok(GemmSpec::new(oh * ow, conv.k_h * conv.k_w * conv.in_c, conv.out_c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub rows: u64,
    pub cols: u64,
    pub dataflow: Dataflow,
    pub clock_hz: f64,
    pub prefetch_lead: u64,
    pub drain_lead: u64,
}

impl ArrayConfig {
    pub fn new(rows: u64, cols: u64, dataflow: Dataflow) -> Self {
        ArrayConfig {
            rows,
            cols,
            dataflow,
            clock_hz: 1e9,
            prefetch_lead: 4,
            drain_lead: 4,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: &str| Err(SimError::Config(m.into()));
        if self.rows == 0 {
            return err("rows must be ≥ 1");
        }
        if self.cols == 0 {
            return err("cols must be ≥ 1");
        }
        if self.prefetch_lead == 0 || self.drain_lead == 0 {
            return err("prefetch and drain leads must be ≥ 1");
        }
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return err("clock must be a positive frequency");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferConfig {
    pub ifmap_bytes: u64,
    pub filter_bytes: u64,
    pub ofmap_bytes: u64,
}

impl Default for BufferConfig {
    fn default() -> Self {
        BufferConfig {
            ifmap_bytes: 4096,
            filter_bytes: 4096,
            ofmap_bytes: 8192,
        }
    }
}

impl BufferConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.ifmap_bytes == 0 || self.filter_bytes == 0 || self.ofmap_bytes == 0 {
            return Err(SimError::Config("buffer sizes must be > 0".into()));
        }
        Ok(())
    }

    fn bytes(&self, sub: SubpartitionId) -> u64 {
        [self.ifmap_bytes, self.filter_bytes, self.ofmap_bytes][sub as usize]
    }
}

/// Checks the buffer-fit preconditions of one GEMM.
pub fn check_fit(gemm: &GemmSpec, array: &ArrayConfig, bufs: &BufferConfig) -> Result<(), SimError> {
    let eb = u64::from(gemm.elem_bytes);
    let fit = |operand: &'static str, required: u64, available: u64| {
        if required > available {
            Err(SimError::BufferFit {
                operand,
                required,
                available,
            })
        } else {
            Ok(())
        }
    };
    let tile = array.rows * array.cols * eb;
    match array.dataflow {
        Dataflow::WeightStationary => fit("filter", tile, bufs.filter_bytes),
        Dataflow::InputStationary => fit("ifmap", tile, bufs.ifmap_bytes),
        Dataflow::OutputStationary => {
            fit("ifmap", array.rows * eb, bufs.ifmap_bytes)?;
            fit("filter", array.cols * eb, bufs.filter_bytes)
        }
    }
}

pub fn trace_meta(workload: &str, array: &ArrayConfig, bufs: &BufferConfig, elem_bytes: u32) -> TraceMeta {
    TraceMeta {
        clock_hz: array.clock_hz,
        workload_name: workload.to_string(),
        backend_name: format!("systolic-{}-{}x{}", array.dataflow, array.rows, array.cols),
        subpartitions: (0..3u8)
            .map(|id| SubpartitionDesc {
                id,
                name: BUFFER_NAMES[id as usize].into(),
                semantics: Semantics::Scratchpad,
                block_size: u64::from(elem_bytes),
                capacity: bufs.bytes(id),
            })
            .collect(),
    }
}

/// Per-buffer totals of a simulation run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSummary {
    pub records: u64,
    pub reads: [u64; 3],
    pub writes: [u64; 3],
    pub macs: u64,
    pub folds: u64,
    /// Last emitted cycle, if anything was emitted.
    pub end_cycle: Option<u64>,
}

/// Cycle-indexed reorder buffer for one scratchpad.
#[derive(Debug, Default)]
struct Lane {
    base: u64,
    slots: VecDeque<Vec<TraceRecord>>,
    spare: Vec<Vec<TraceRecord>>,
}

impl Lane {
    fn push(&mut self, rec: TraceRecord) {
        debug_assert!(rec.cycle >= self.base, "cycle {} behind lane base {}", rec.cycle, self.base);
        let idx = (rec.cycle - self.base) as usize;
        while self.slots.len() <= idx {
            let v = self.spare.pop().unwrap_or_default();
            self.slots.push_back(v);
        }
        self.slots[idx].push(rec);
    }

    /// Emits every record with a cycle below `bound`.
    fn flush(&mut self, bound: u64, sink: &mut impl TraceSink) -> io::Result<()> {
        while self.base < bound {
            let Some(mut v) = self.slots.pop_front() else {
                self.base = bound;
                break;
            };
            for r in v.drain(..) {
                sink.accept(r)?;
            }
            self.spare.push(v);
            self.base += 1;
        }
        Ok(())
    }
}

struct Engine<'a, K> {
    array: ArrayConfig,
    bufs: BufferConfig,
    eb: u64,
    lanes: [Lane; 3],
    sink: &'a mut K,
    summary: SimSummary,
    next_start: u64,
}

fn div_ceil(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

impl<'a, K: TraceSink> Engine<'a, K> {
    fn new(array: ArrayConfig, bufs: BufferConfig, eb: u64, sink: &'a mut K) -> Self {
        Engine {
            array,
            bufs,
            eb,
            lanes: Default::default(),
            sink,
            summary: SimSummary::default(),
            next_start: 0,
        }
    }

    #[inline]
    fn emit(&mut self, sub: SubpartitionId, op: Op, cycle: u64, address: u64) {
        let s = &mut self.summary;
        s.records += 1;
        match op {
            Op::Read => s.reads[sub as usize] += 1,
            _ => s.writes[sub as usize] += 1,
        }
        s.end_cycle = Some(s.end_cycle.map_or(cycle, |e| e.max(cycle)));
        self.lanes[sub as usize].push(TraceRecord::new(cycle, sub, op, address, self.eb as u32));
    }

    fn flush(&mut self, bounds: [u64; 3]) -> io::Result<()> {
        for (lane, bound) in self.lanes.iter_mut().zip(bounds) {
            lane.flush(bound, self.sink)?;
        }
        Ok(())
    }

    fn finish_layer(&mut self) -> io::Result<()> {
        self.flush([u64::MAX; 3])?;
        self.next_start = self.summary.end_cycle.map_or(0, |e| e + 1);
        for lane in &mut self.lanes {
            lane.base = self.next_start;
        }
        Ok(())
    }

    fn layer(&mut self, g: &GemmSpec) -> io::Result<()> {
        match self.array.dataflow {
            Dataflow::WeightStationary => self.stationary_layer(FILTER, IFMAP, g.k, g.n, g.m, false, g.n),
            Dataflow::InputStationary => self.stationary_layer(IFMAP, FILTER, g.k, g.m, g.n, true, g.n),
            Dataflow::OutputStationary => self.output_stationary_layer(g),
        }?;
        self.finish_layer()
    }

    /// ws/is template. The pinned operand is a `depth × cols` matrix tiled `R×C`;
    /// the other operand streams `stream_len` vectors per fold.
    #[allow(clippy::too_many_arguments)]
    fn stationary_layer(
        &mut self,
        stat_sub: SubpartitionId,
        stream_sub: SubpartitionId,
        depth_dim: u64,
        cols_dim: u64,
        stream_len: u64,
        transposed_out: bool,
        out_row_len: u64,
    ) -> io::Result<()> {
        let (rows, cols) = (self.array.rows, self.array.cols);
        let (p, d, eb) = (self.array.prefetch_lead, self.array.drain_lead, self.eb);
        let k_tiles = div_ceil(depth_dim, rows);
        let folds = k_tiles * div_ceil(cols_dim, cols);
        let queue = (self.bufs.bytes(stat_sub) / (rows * cols * eb)).max(1);
        let stream_buf = self.bufs.bytes(stream_sub);
        let ofmap_buf = self.bufs.ofmap_bytes;
        let fold_len = 2 * rows + stream_len + cols - 1;
        let start = self.next_start;
        let t0 = |f: u64| start + p + f * fold_len;
        let r_eff = |f: u64| rows.min(depth_dim - (f % k_tiles) * rows);
        let fill_start = |f: u64| {
            if f < queue {
                start
            } else {
                t0(f - queue) + r_eff(f - queue)
            }
        };
        let mut stream_ctr = 0u64;

        for f in 0..folds {
            let (ct, kt) = (f / k_tiles, f % k_tiles);
            let (re, ce) = (r_eff(f), cols.min(cols_dim - ct * cols));
            let t = t0(f);
            let fs = fill_start(f);
            let slot = f % queue;
            for r in 0..re {
                for c in 0..ce {
                    let addr = (slot * rows * cols + r * cols + c) * eb;
                    self.emit(stat_sub, Op::Write, fs + r, addr);
                    self.emit(stat_sub, Op::Read, t + r, addr);
                }
            }
            for w in 0..stream_len + re - 1 {
                let lo = w.saturating_sub(stream_len - 1);
                for _r in lo..re.min(w + 1) {
                    let read_at = t + rows + w;
                    let addr = (stream_ctr * eb) % stream_buf;
                    stream_ctr += 1;
                    self.emit(stream_sub, Op::Write, read_at - p, addr);
                    self.emit(stream_sub, Op::Read, read_at, addr);
                }
            }
            for s in 0..stream_len {
                for c in 0..ce {
                    let col = ct * cols + c;
                    let (i, j) = if transposed_out { (col, s) } else { (s, col) };
                    let addr = ((i * out_row_len + j) * eb) % ofmap_buf;
                    let at = t + 2 * rows + s + c;
                    if kt > 0 {
                        self.emit(OFMAP, Op::Read, at, addr);
                    }
                    self.emit(OFMAP, Op::Write, at, addr);
                    if kt + 1 == k_tiles {
                        self.emit(OFMAP, Op::Read, at + d, addr);
                    }
                }
            }
            self.summary.macs += re * ce * stream_len;
            self.summary.folds += 1;
            if f + 1 < folds {
                let next = t0(f + 1);
                let mut bounds = [0; 3];
                bounds[stat_sub as usize] = fill_start(f + 1);
                bounds[stream_sub as usize] = next + rows - p;
                bounds[OFMAP as usize] = next + 2 * rows;
                self.flush(bounds)?;
            }
        }
        Ok(())
    }

    fn output_stationary_layer(&mut self, g: &GemmSpec) -> io::Result<()> {
        let (rows, cols) = (self.array.rows, self.array.cols);
        let (p, d, eb) = (self.array.prefetch_lead, self.array.drain_lead, self.eb);
        let n_tiles = div_ceil(g.n, cols);
        let folds = div_ceil(g.m, rows) * n_tiles;
        let fold_len = g.k + rows + cols - 1;
        let start = self.next_start;
        let t0 = |f: u64| start + p + f * fold_len;
        let (mut if_ctr, mut fl_ctr) = (0u64, 0u64);

        for f in 0..folds {
            let (mt, nt) = (f / n_tiles, f % n_tiles);
            let re = rows.min(g.m - mt * rows);
            let ce = cols.min(g.n - nt * cols);
            let t = t0(f);
            for w in 0..re + g.k - 1 {
                let lo = w.saturating_sub(g.k - 1);
                for _i in lo..re.min(w + 1) {
                    let addr = (if_ctr * eb) % self.bufs.ifmap_bytes;
                    if_ctr += 1;
                    self.emit(IFMAP, Op::Write, t + w - p, addr);
                    self.emit(IFMAP, Op::Read, t + w, addr);
                }
            }
            for w in 0..g.k + ce - 1 {
                let lo = w.saturating_sub(g.k - 1);
                for _j in lo..ce.min(w + 1) {
                    let addr = (fl_ctr * eb) % self.bufs.filter_bytes;
                    fl_ctr += 1;
                    self.emit(FILTER, Op::Write, t + w - p, addr);
                    self.emit(FILTER, Op::Read, t + w, addr);
                }
            }
            for i in 0..re {
                for j in 0..ce {
                    let out = (mt * rows + i) * g.n + nt * cols + j;
                    let addr = (out * eb) % self.bufs.ofmap_bytes;
                    let at = t + g.k + i + j;
                    self.emit(OFMAP, Op::Write, at, addr);
                    self.emit(OFMAP, Op::Read, at + d, addr);
                }
            }
            self.summary.macs += re * ce * g.k;
            self.summary.folds += 1;
            if f + 1 < folds {
                let next = t0(f + 1);
                self.flush([next - p, next - p, next + g.k])?;
            }
        }
        Ok(())
    }
}

fn common_elem_bytes(layers: &[GemmSpec]) -> Result<u32, SimError> {
    let eb = layers.first().map_or(1, |g| g.elem_bytes);
    if layers.iter().any(|g| g.elem_bytes != eb) {
        return Err(SimError::Workload("all layers must share one elem_bytes".into()));
    }
    if !eb.is_power_of_two() {
        return Err(SimError::Workload(format!("elem_bytes {eb} is not a power of two")));
    }
    Ok(eb)
}

/// Simulates layers back to back, streaming records into `sink`. Every layer is
/// checked before anything is emitted.
pub fn run_workload_into<K: TraceSink>(
    layers: &[GemmSpec],
    array: &ArrayConfig,
    bufs: &BufferConfig,
    sink: &mut K,
) -> Result<SimSummary, SimError> {
    array.validate()?;
    bufs.validate()?;
    let eb = common_elem_bytes(layers)?;
    for (i, g) in layers.iter().enumerate() {
        if g.m == 0 || g.k == 0 || g.n == 0 {
            return Err(SimError::Layer {
                layer: i.to_string(),
                reason: "M, K and N must be ≥ 1".into(),
            });
        }
        check_fit(g, array, bufs)?;
    }
    let mut engine = Engine::new(*array, *bufs, u64::from(eb), sink);
    for g in layers {
        engine.layer(g)?;
    }
    Ok(engine.summary)
}

pub fn simulate_into<K: TraceSink>(
    gemm: &GemmSpec,
    array: &ArrayConfig,
    bufs: &BufferConfig,
    sink: &mut K,
) -> Result<SimSummary, SimError> {
    run_workload_into(std::slice::from_ref(gemm), array, bufs, sink)
}

pub fn run_workload(layers: &[GemmSpec], array: &ArrayConfig, bufs: &BufferConfig) -> Result<Trace, SimError> {
    let meta = trace_meta("workload", array, bufs, common_elem_bytes(layers)?);
    let mut records = Vec::new();
    run_workload_into(layers, array, bufs, &mut records)?;
    Ok(Trace { meta, records })
}

pub fn simulate(gemm: &GemmSpec, array: &ArrayConfig, bufs: &BufferConfig) -> Result<Trace, SimError> {
    let mut t = run_workload(std::slice::from_ref(gemm), array, bufs)?;
    t.meta.workload_name = "gemm".into();
    Ok(t)
}

/// Closed-form buffer traffic `(reads, writes)` per buffer for one GEMM.
pub fn reuse_counts(g: &GemmSpec, array: &ArrayConfig) -> ([u64; 3], [u64; 3]) {
    let (r, c) = (array.rows, array.cols);
    let (m, k, n) = (g.m, g.k, g.n);
    match array.dataflow {
        Dataflow::WeightStationary => {
            let ifm = m * k * div_ceil(n, c);
            let out = m * n * div_ceil(k, r);
            ([ifm, k * n, out], [ifm, k * n, out])
        }
        Dataflow::InputStationary => {
            let fil = n * k * div_ceil(m, c);
            let out = n * m * div_ceil(k, r);
            ([k * m, fil, out], [k * m, fil, out])
        }
        Dataflow::OutputStationary => {
            let ifm = m * k * div_ceil(n, c);
            let fil = k * n * div_ceil(m, r);
            ([ifm, fil, m * n], [ifm, fil, m * n])
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LayerShape {
    Gemm {
        #[serde(rename = "M")]
        m: u64,
        #[serde(rename = "K")]
        k: u64,
        #[serde(rename = "N")]
        n: u64,
    },
    Conv(ConvSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerEntry {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    elem_bytes: Option<u32>,
    #[serde(flatten)]
    shape: LayerShape,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum WorkloadFile {
    List(Vec<LayerEntry>),
    Named { name: String, layers: Vec<LayerEntry> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub gemm: GemmSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub name: String,
    pub layers: Vec<Layer>,
}

impl Workload {
    /// Parses a layer list (bare array, or `{"name", "layers"}`); `default_name`
    /// names a bare array.
    pub fn from_json(json: &str, default_name: &str) -> Result<Self, SimError> {
        let file: WorkloadFile =
            serde_json::from_str(json).map_err(|e| SimError::Workload(e.to_string()))?;
        let (name, entries) = match file {
            WorkloadFile::List(l) => (default_name.to_string(), l),
            WorkloadFile::Named { name, layers } => (name, layers),
        };
        let mut layers = Vec::with_capacity(entries.len());
        for (i, e) in entries.into_iter().enumerate() {
            let lname = e.name.unwrap_or_else(|| format!("layer{i}"));
            let mut gemm = match e.shape {
                LayerShape::Gemm { m, k, n } => GemmSpec::new(m, k, n),
                LayerShape::Conv(c) => conv_to_gemm(&c).map_err(|err| SimError::Layer {
                    layer: lname.clone(),
                    reason: match err {
                        SimError::Layer { reason, .. } => reason,
                        other => other.to_string(),
                    },
                })?,
            };
            gemm.elem_bytes = e.elem_bytes.unwrap_or(1);
            if gemm.m == 0 || gemm.k == 0 || gemm.n == 0 || gemm.elem_bytes == 0 {
                return Err(SimError::Layer {
                    layer: lname,
                    reason: "dimensions and elem_bytes must be ≥ 1".into(),
                });
            }
            layers.push(Layer { name: lname, gemm });
        }
        let w = Workload { name, layers };
        w.elem_bytes()?;
        Ok(w)
    }

    pub fn gemms(&self) -> Vec<GemmSpec> {
        self.layers.iter().map(|l| l.gemm).collect()
    }

    pub fn elem_bytes(&self) -> Result<u32, SimError> {
        common_elem_bytes(&self.gemms())
    }

    pub fn meta(&self, array: &ArrayConfig, bufs: &BufferConfig) -> Result<TraceMeta, SimError> {
        Ok(trace_meta(&self.name, array, bufs, self.elem_bytes()?))
    }

    pub fn run_into<K: TraceSink>(
        &self,
        array: &ArrayConfig,
        bufs: &BufferConfig,
        sink: &mut K,
    ) -> Result<SimSummary, SimError> {
        run_workload_into(&self.gemms(), array, bufs, sink)
    }

    pub fn run(&self, array: &ArrayConfig, bufs: &BufferConfig) -> Result<Trace, SimError> {
        let meta = self.meta(array, bufs)?;
        let mut records = Vec::new();
        self.run_into(array, bufs, &mut records)?;
        Ok(Trace { meta, records })
    }
}
