//! Data-lifetime analysis for on-chip memories.
//!
//! Memory traces (from the bundled systolic-array simulator or any other backend)
//! are reduced to data objects and their lifetimes, which are projected onto a
//! library of memory technologies to find refresh-free heterogeneous compositions.
//!
//! The analytical core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the CLI and reports use.

// `!(a < b)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod composer;
pub mod device;
pub mod lifetime;
pub mod projector;
pub mod report;
pub mod scalar;
pub mod sysarray;
pub mod trace;

pub use analysis::{analyze, analyze_trace, Analysis, AnalysisError, AnalysisOptions, Replay};
pub use composer::{assign, compare_to_baseline, compose, Assigner, CompositionBuilder};
pub use device::{default_library, load_library, retention_at, DeviceError, Retention, RetentionSpec};
pub use lifetime::{
    capacity_utilization, extract_objects, lifetime_histogram, write_frequency, DataObject,
    LifetimeError, LifetimeTracker, SubpartitionStats,
};
pub use projector::{active_energy, area, project, refresh_ops};
pub use report::{emit_histogram_csv, emit_json, emit_svg_plots, AnalysisReport};
pub use scalar::Scalar;
pub use sysarray::{
    conv_to_gemm, run_workload, simulate, ArrayConfig, BufferConfig, ConvSpec, Dataflow, GemmSpec, SimError,
    Workload,
};
pub use trace::{
    Flag, Op, Semantics, SubpartitionDesc, SubpartitionId, Trace, TraceError, TraceMeta,
    TraceRecord, TraceSink,
};

pub type Device = device::DeviceModel<f64>;
pub type Library = device::DeviceLibrary<f64>;
pub type Projection = projector::DeviceProjection<f64>;
pub type Allocation = composer::DeviceAllocation<f64>;
pub type Composition = composer::CompositionSpec<f64>;
pub type HistogramSpec = lifetime::LogHistogramSpec<f64>;
pub type Histogram = lifetime::Histogram<f64>;
