//! Standardized memory access trace: metadata, records, validation, and the text (CSV)
//! and binary encodings.
//!
//! A trace is a list of timestamped accesses to *subpartitions*, the independently
//! analyzed memory components of a backend (a cache level, or one scratchpad buffer).
//! Records only need to be non-decreasing in cycle within a subpartition; interleaving
//! across subpartitions is arbitrary.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary trace magic bytes.
pub const BINARY_MAGIC: &[u8; 4] = b"GSTR";
/// Binary trace format version written by this crate.
pub const BINARY_VERSION: u16 = 1;
/// Length of the fixed binary header preceding the metadata JSON.
pub const BINARY_HEADER_LEN: usize = 4 + 2 + 4;
/// Size of one encoded binary record.
pub const BINARY_RECORD_LEN: usize = 24;
/// Column header of the CSV dialect.
pub const TEXT_HEADER: &str = "cycle,subpartition,op,address,size,flag";

pub type SubpartitionId = u8;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unknown subpartition {id}")]
    UnknownSubpartition { line: usize, id: u64 },
    #[error("line {line}: cycle {cycle} precedes {previous} in subpartition {subpartition}")]
    DecreasingCycle {
        line: usize,
        subpartition: SubpartitionId,
        cycle: u64,
        previous: u64,
    },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported trace version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("invalid trace metadata: {0}")]
    Meta(String),
    #[error("missing trace metadata (no sidecar file and no inline #meta lines)")]
    MissingMeta,
}

/// How lifetimes are delimited in a subpartition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Semantics {
    Cache,
    Scratchpad,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubpartitionDesc {
    pub id: SubpartitionId,
    pub name: String,
    pub semantics: Semantics,
    /// Bytes per tracked granule.
    pub block_size: u64,
    /// Nominal capacity in bytes, 0 when unknown.
    #[serde(default)]
    pub capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub clock_hz: f64,
    #[serde(rename = "workload")]
    pub workload_name: String,
    #[serde(rename = "backend")]
    pub backend_name: String,
    pub subpartitions: Vec<SubpartitionDesc>,
}

impl TraceMeta {
    pub fn subpartition(&self, id: SubpartitionId) -> Option<&SubpartitionDesc> {
        self.subpartitions.iter().find(|s| s.id == id)
    }

    pub fn cycles_to_seconds(&self, cycles: u64) -> f64 {
        cycles as f64 / self.clock_hz
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, TraceError> {
        let meta: TraceMeta =
            serde_json::from_slice(bytes).map_err(|e| TraceError::Meta(e.to_string()))?;
        if let Some(v) = meta_violations(&meta).into_iter().next() {
            return Err(TraceError::Meta(v.message));
        }
        Ok(meta)
    }

    /// Compact, field-ordered JSON; identical metadata always encodes to identical bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace metadata is always serializable")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Read,
    Write,
    Invalidate,
}

impl Op {
    fn code(self) -> u8 {
        match self {
            Op::Read => 0,
            Op::Write => 1,
            Op::Invalidate => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Op::Read),
            1 => Some(Op::Write),
            2 => Some(Op::Invalidate),
            _ => None,
        }
    }

    fn letter(self) -> char {
        match self {
            Op::Read => 'R',
            Op::Write => 'W',
            Op::Invalidate => 'I',
        }
    }
}

/// Cache outcome annotation. Only meaningful for cache-semantics subpartitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flag {
    None,
    Hit,
    Miss,
}

impl Flag {
    fn code(self) -> u8 {
        match self {
            Flag::None => 0,
            Flag::Hit => 1,
            Flag::Miss => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Flag::None),
            1 => Some(Flag::Hit),
            2 => Some(Flag::Miss),
            _ => None,
        }
    }

    fn letter(self) -> char {
        match self {
            Flag::None => '-',
            Flag::Hit => 'H',
            Flag::Miss => 'M',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub cycle: u64,
    pub subpartition: SubpartitionId,
    pub op: Op,
    pub address: u64,
    pub size: u32,
    pub flag: Flag,
}

impl TraceRecord {
    pub fn new(cycle: u64, subpartition: SubpartitionId, op: Op, address: u64, size: u32) -> Self {
        TraceRecord {
            cycle,
            subpartition,
            op,
            address,
            size,
            flag: Flag::None,
        }
    }

    pub fn with_flag(mut self, flag: Flag) -> Self {
        self.flag = flag;
        self
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{:#x},{},{}",
            self.cycle,
            self.subpartition,
            self.op.letter(),
            self.address,
            self.size,
            self.flag.letter()
        )
    }
}

/// A parsed trace held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

/// Consumer of a record stream. Producers call `accept` once per record in emission order.
pub trait TraceSink {
    fn accept(&mut self, record: TraceRecord) -> io::Result<()>;
}

impl TraceSink for Vec<TraceRecord> {
    fn accept(&mut self, record: TraceRecord) -> io::Result<()> {
        self.push(record);
        Ok(())
    }
}

impl<T: TraceSink + ?Sized> TraceSink for &mut T {
    fn accept(&mut self, record: TraceRecord) -> io::Result<()> {
        (**self).accept(record)
    }
}

/// One broken invariant. `index` is the record index, or `None` for metadata problems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "record {i}: {}", self.message),
            None => write!(f, "metadata: {}", self.message),
        }
    }
}

fn meta_violations(meta: &TraceMeta) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |message: String| out.push(Violation { index: None, message });
    if !(meta.clock_hz > 0.0 && meta.clock_hz.is_finite()) {
        push(format!("clock_hz must be > 0 (got {})", meta.clock_hz));
    }
    if meta.subpartitions.is_empty() {
        push("at least one subpartition is required".to_string());
    }
    let mut seen = HashSet::new();
    for s in &meta.subpartitions {
        if !seen.insert(s.id) {
            push(format!("duplicate subpartition id {}", s.id));
        }
        if s.block_size == 0 || !s.block_size.is_power_of_two() {
            push(format!(
                "subpartition {}: block_size must be a power of two >= 1 (got {})",
                s.id, s.block_size
            ));
        }
    }
    out
}

/// Incremental record checker; `validate` and the streaming readers share it.
#[derive(Debug)]
pub struct Validator {
    known: HashSet<SubpartitionId>,
    last_cycle: HashMap<SubpartitionId, u64>,
    index: usize,
}

impl Validator {
    pub fn new(meta: &TraceMeta) -> Self {
        Validator {
            known: meta.subpartitions.iter().map(|s| s.id).collect(),
            last_cycle: HashMap::new(),
            index: 0,
        }
    }

    /// Checks the next record, appending any violations.
    pub fn check(&mut self, rec: &TraceRecord, out: &mut Vec<Violation>) {
        let index = Some(self.index);
        self.index += 1;
        if !self.known.contains(&rec.subpartition) {
            out.push(Violation {
                index,
                message: format!("unknown subpartition {}", rec.subpartition),
            });
            return;
        }
        if rec.size == 0 {
            out.push(Violation {
                index,
                message: "size must be ≥ 1".to_string(),
            });
        }
        let last = self.last_cycle.entry(rec.subpartition).or_insert(rec.cycle);
        if rec.cycle < *last {
            out.push(Violation {
                index,
                message: format!(
                    "cycle {} precedes {} in subpartition {}",
                    rec.cycle, *last, rec.subpartition
                ),
            });
        } else {
            *last = rec.cycle;
        }
    }
}

/// Lists every broken invariant; empty iff the trace is valid.
pub fn validate(meta: &TraceMeta, records: &[TraceRecord]) -> Vec<Violation> {
    let mut out = meta_violations(meta);
    let mut v = Validator::new(meta);
    for rec in records {
        v.check(rec, &mut out);
    }
    out
}

// ---------------------------------------------------------------------------
// Text (CSV) format

fn parse_u64(field: &str, what: &str, line: usize) -> Result<u64, TraceError> {
    field.parse::<u64>().map_err(|_| TraceError::Malformed {
        line,
        reason: format!("bad {what} {field:?}"),
    })
}

fn parse_text_line(text: &str, line: usize) -> Result<TraceRecord, TraceError> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(TraceError::Malformed {
            line,
            reason: format!("expected 6 fields, found {}", fields.len()),
        });
    }
    let cycle = parse_u64(fields[0], "cycle", line)?;
    let sub = parse_u64(fields[1], "subpartition", line)?;
    let subpartition = SubpartitionId::try_from(sub)
        .map_err(|_| TraceError::UnknownSubpartition { line, id: sub })?;
    let op = match fields[2] {
        "R" => Op::Read,
        "W" => Op::Write,
        "I" => Op::Invalidate,
        other => {
            return Err(TraceError::Malformed {
                line,
                reason: format!("bad op {other:?}"),
            })
        }
    };
    let hex = fields[3]
        .strip_prefix("0x")
        .or_else(|| fields[3].strip_prefix("0X"))
        .ok_or_else(|| TraceError::Malformed {
            line,
            reason: format!("address {:?} lacks 0x prefix", fields[3]),
        })?;
    let address = u64::from_str_radix(hex, 16).map_err(|_| TraceError::Malformed {
        line,
        reason: format!("bad address {:?}", fields[3]),
    })?;
    let size = fields[4].parse::<u32>().map_err(|_| TraceError::Malformed {
        line,
        reason: format!("bad size {:?}", fields[4]),
    })?;
    let flag = match fields[5] {
        "-" => Flag::None,
        "H" => Flag::Hit,
        "M" => Flag::Miss,
        other => {
            return Err(TraceError::Malformed {
                line,
                reason: format!("bad flag {other:?}"),
            })
        }
    };
    Ok(TraceRecord {
        cycle,
        subpartition,
        op,
        address,
        size,
        flag,
    })
}

/// Streaming CSV reader. Metadata comes from a sidecar or from leading `#meta` lines,
/// whose payloads are concatenated into one JSON document.
pub struct TextTraceReader<R> {
    input: R,
    meta: TraceMeta,
    line: usize,
    buf: String,
    pending: Option<(usize, String)>,
    known: HashSet<SubpartitionId>,
    last_cycle: HashMap<SubpartitionId, u64>,
}

impl<R: BufRead> TextTraceReader<R> {
    pub fn new(mut input: R, sidecar: Option<TraceMeta>) -> Result<Self, TraceError> {
        let mut inline = String::new();
        let mut line = 0;
        let mut buf = String::new();
        let mut pending = None;
        loop {
            buf.clear();
            if input.read_line(&mut buf)? == 0 {
                break;
            }
            line += 1;
            let t = buf.trim();
            if let Some(rest) = t.strip_prefix("#meta") {
                inline.push_str(rest.trim());
            } else if t.is_empty() || t.starts_with('#') || t == TEXT_HEADER {
                continue;
            } else {
                pending = Some((line, t.to_string()));
                break;
            }
        }
        let meta = match sidecar {
            Some(m) => m,
            None if !inline.is_empty() => TraceMeta::from_json(inline.as_bytes())?,
            None => return Err(TraceError::MissingMeta),
        };
        Ok(TextTraceReader {
            known: meta.subpartitions.iter().map(|s| s.id).collect(),
            input,
            meta,
            line,
            buf,
            pending,
            last_cycle: HashMap::new(),
        })
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    fn next_line(&mut self) -> Result<Option<(usize, String)>, TraceError> {
        if let Some(p) = self.pending.take() {
            return Ok(Some(p));
        }
        loop {
            self.buf.clear();
            if self.input.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            let t = self.buf.trim();
            if t.is_empty() || t.starts_with('#') || t == TEXT_HEADER {
                continue;
            }
            return Ok(Some((self.line, t.to_string())));
        }
    }

    pub fn next_record(&mut self) -> Result<Option<TraceRecord>, TraceError> {
        let Some((line, text)) = self.next_line()? else {
            return Ok(None);
        };
        let rec = parse_text_line(&text, line)?;
        if !self.known.contains(&rec.subpartition) {
            return Err(TraceError::UnknownSubpartition {
                line,
                id: rec.subpartition as u64,
            });
        }
        let last = self.last_cycle.entry(rec.subpartition).or_insert(rec.cycle);
        if rec.cycle < *last {
            return Err(TraceError::DecreasingCycle {
                line,
                subpartition: rec.subpartition,
                cycle: rec.cycle,
                previous: *last,
            });
        }
        *last = rec.cycle;
        Ok(Some(rec))
    }
}

/// Parses a whole CSV trace. Records come back in file order.
pub fn parse_text_trace<R: BufRead>(
    input: R,
    sidecar: Option<TraceMeta>,
) -> Result<Trace, TraceError> {
    let mut reader = TextTraceReader::new(input, sidecar)?;
    let mut records = Vec::new();
    while let Some(r) = reader.next_record()? {
        records.push(r);
    }
    Ok(Trace {
        meta: reader.meta,
        records,
    })
}

/// Streaming CSV writer. With `inline_meta` the metadata is embedded as a `#meta` line.
pub struct TextTraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TextTraceWriter<W> {
    pub fn new(mut out: W, meta: &TraceMeta, inline_meta: bool) -> io::Result<Self> {
        if inline_meta {
            writeln!(out, "#meta {}", meta.to_json())?;
        }
        writeln!(out, "{TEXT_HEADER}")?;
        Ok(TextTraceWriter { out })
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for TextTraceWriter<W> {
    fn accept(&mut self, r: TraceRecord) -> io::Result<()> {
        writeln!(self.out, "{r}")
    }
}

pub fn write_text_trace(meta: &TraceMeta, records: &[TraceRecord], inline_meta: bool) -> Vec<u8> {
    let mut w = TextTraceWriter::new(Vec::new(), meta, inline_meta).expect("in-memory write");
    for r in records {
        w.accept(*r).expect("in-memory write");
    }
    w.finish().expect("in-memory write")
}

// ---------------------------------------------------------------------------
// Binary format

fn encode_record(r: &TraceRecord) -> [u8; BINARY_RECORD_LEN] {
    let mut b = [0u8; BINARY_RECORD_LEN];
    b[0..8].copy_from_slice(&r.cycle.to_le_bytes());
    b[8..16].copy_from_slice(&r.address.to_le_bytes());
    b[16..20].copy_from_slice(&r.size.to_le_bytes());
    b[20] = r.subpartition;
    b[21] = r.op.code();
    b[22] = r.flag.code();
    b
}

fn decode_record(b: &[u8; BINARY_RECORD_LEN]) -> Result<TraceRecord, TraceError> {
    let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
    Ok(TraceRecord {
        cycle: u64_at(0),
        address: u64_at(8),
        size: u32::from_le_bytes(b[16..20].try_into().expect("4 bytes")),
        subpartition: b[20],
        op: Op::from_code(b[21]).ok_or_else(|| TraceError::Meta(format!("bad op code {}", b[21])))?,
        flag: Flag::from_code(b[22])
            .ok_or_else(|| TraceError::Meta(format!("bad flag code {}", b[22])))?,
    })
}

/// Streaming binary writer; the header (with metadata) is written on construction.
pub struct BinaryTraceWriter<W: Write> {
    out: W,
}

impl<W: Write> BinaryTraceWriter<W> {
    pub fn new(mut out: W, meta: &TraceMeta) -> io::Result<Self> {
        let json = meta.to_json();
        let len = u32::try_from(json.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "metadata too large"))?;
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&BINARY_VERSION.to_le_bytes())?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(json.as_bytes())?;
        Ok(BinaryTraceWriter { out })
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for BinaryTraceWriter<W> {
    fn accept(&mut self, r: TraceRecord) -> io::Result<()> {
        self.out.write_all(&encode_record(&r))
    }
}

pub fn write_binary_trace(meta: &TraceMeta, records: &[TraceRecord]) -> Vec<u8> {
    let mut w = BinaryTraceWriter::new(
        Vec::with_capacity(BINARY_HEADER_LEN + 256 + records.len() * BINARY_RECORD_LEN),
        meta,
    )
    .expect("in-memory write");
    for r in records {
        w.accept(*r).expect("in-memory write");
    }
    w.finish().expect("in-memory write")
}

/// Reads exactly `buf.len()` bytes; `Ok(false)` on clean EOF before the first byte.
fn read_full<R: Read>(input: &mut R, buf: &mut [u8], what: &'static str) -> Result<bool, TraceError> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(TraceError::Truncated(what)),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

/// Streaming binary reader.
pub struct BinaryTraceReader<R> {
    input: R,
    meta: TraceMeta,
}

impl<R: Read> BinaryTraceReader<R> {
    pub fn new(mut input: R) -> Result<Self, TraceError> {
        let mut head = [0u8; BINARY_HEADER_LEN];
        // Check the magic first so that short garbage is reported as such.
        match read_full(&mut input, &mut head[0..4], "header") {
            Ok(true) if &head[0..4] == BINARY_MAGIC => {}
            Ok(false) => return Err(TraceError::Truncated("header")),
            Ok(true) | Err(TraceError::Truncated(_)) => return Err(TraceError::BadMagic),
            Err(e) => return Err(e),
        }
        if !read_full(&mut input, &mut head[4..], "header")? {
            return Err(TraceError::Truncated("header"));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != BINARY_VERSION {
            return Err(TraceError::UnsupportedVersion(version));
        }
        let len = u32::from_le_bytes(head[6..10].try_into().expect("4 bytes")) as usize;
        let mut json = vec![0u8; len];
        if len > 0 && !read_full(&mut input, &mut json, "metadata")? {
            return Err(TraceError::Truncated("metadata"));
        }
        let meta = TraceMeta::from_json(&json)?;
        Ok(BinaryTraceReader { input, meta })
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn next_record(&mut self) -> Result<Option<TraceRecord>, TraceError> {
        let mut b = [0u8; BINARY_RECORD_LEN];
        if !read_full(&mut self.input, &mut b, "record")? {
            return Ok(None);
        }
        decode_record(&b).map(Some)
    }
}

pub fn parse_binary_trace(bytes: &[u8]) -> Result<Trace, TraceError> {
    let mut reader = BinaryTraceReader::new(bytes)?;
    let mut records = Vec::with_capacity(bytes.len() / BINARY_RECORD_LEN);
    while let Some(r) = reader.next_record()? {
        records.push(r);
    }
    Ok(Trace {
        meta: reader.meta,
        records,
    })
}
