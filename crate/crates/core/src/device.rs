//! Memory technology models: bitcell area, per-bit access energy, and retention.
//!
//! Retention is either unbounded (SRAM), a constant, or a measured curve of retention
//! versus array write frequency that is interpolated piecewise-linearly and clamped to
//! its end points. A library must contain exactly one unbounded device; it is the
//! fallback that every lifetime fits in and the baseline compositions are compared to.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

const DEFAULT_LIBRARY_JSON: &str = include_str!("../data/devices.json");

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("library needs exactly one fallback device (found {0} unbounded-retention devices)")]
    FallbackCount(usize),
    #[error("retention curve not sorted for device {0}")]
    UnsortedCurve(String),
    #[error("retention curve for device {0} needs at least 2 points")]
    ShortCurve(String),
    #[error("duplicate device name {0}")]
    DuplicateName(String),
    #[error("device {device}: {field} must be a finite value > 0")]
    NonPositive { device: String, field: &'static str },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub enum RetentionSpec<S> {
    Unbounded,
    Constant { seconds: S },
    /// `(write_freq_mhz, retention_s)` knots, strictly increasing in frequency.
    Curve { points: Vec<(S, S)> },
}

/// An evaluated retention time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Retention<S> {
    Finite(S),
    Unbounded,
}

impl<S: Scalar> Retention<S> {
    pub fn seconds(self) -> Option<S> {
        match self {
            Retention::Finite(s) => Some(s),
            Retention::Unbounded => None,
        }
    }

    /// Whether data living `lifetime_s` fits strictly inside this retention.
    pub fn holds(self, lifetime_s: S) -> bool {
        match self {
            Retention::Finite(t) => lifetime_s < t,
            Retention::Unbounded => true,
        }
    }
}

impl<S: Scalar> PartialOrd for Retention<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Retention::Finite(a), Retention::Finite(b)) => a.partial_cmp(b),
            (Retention::Finite(_), Retention::Unbounded) => Some(Ordering::Less),
            (Retention::Unbounded, Retention::Finite(_)) => Some(Ordering::Greater),
            (Retention::Unbounded, Retention::Unbounded) => Some(Ordering::Equal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct DeviceModel<S> {
    pub name: String,
    /// Area per bit, µm².
    pub bitcell_area_um2: S,
    /// Joules per bit read.
    pub read_energy_j: S,
    /// Joules per bit written.
    pub write_energy_j: S,
    pub retention: RetentionSpec<S>,
}

impl<S: Scalar> DeviceModel<S> {
    pub fn is_unbounded(&self) -> bool {
        matches!(self.retention, RetentionSpec::Unbounded)
    }

    /// Read-then-write cost of refreshing one bit.
    pub fn access_energy_sum(&self) -> S {
        self.read_energy_j + self.write_energy_j
    }

    pub fn retention_at(&self, write_freq_mhz: S) -> Retention<S> {
        retention_at(self, write_freq_mhz)
    }

    fn check(&self) -> Result<(), DeviceError> {
        let positive = |v: S, field: &'static str| {
            if v > S::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(DeviceError::NonPositive {
                    device: self.name.clone(),
                    field,
                })
            }
        };
        positive(self.bitcell_area_um2, "bitcell_area_um2")?;
        positive(self.read_energy_j, "read_energy_j")?;
        positive(self.write_energy_j, "write_energy_j")?;
        match &self.retention {
            RetentionSpec::Unbounded => {}
            RetentionSpec::Constant { seconds } => positive(*seconds, "retention seconds")?,
            RetentionSpec::Curve { points } => {
                if points.len() < 2 {
                    return Err(DeviceError::ShortCurve(self.name.clone()));
                }
                for &(f, t) in points {
                    if !(f >= S::zero() && f.is_finite()) {
                        return Err(DeviceError::NonPositive {
                            device: self.name.clone(),
                            field: "curve frequency",
                        });
                    }
                    positive(t, "curve retention")?;
                }
                if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    return Err(DeviceError::UnsortedCurve(self.name.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Retention of `device` when its array is written at `write_freq_mhz`.
pub fn retention_at<S: Scalar>(device: &DeviceModel<S>, write_freq_mhz: S) -> Retention<S> {
    match &device.retention {
        RetentionSpec::Unbounded => Retention::Unbounded,
        RetentionSpec::Constant { seconds } => Retention::Finite(*seconds),
        RetentionSpec::Curve { points } => Retention::Finite(interpolate(points, write_freq_mhz)),
    }
}

fn interpolate<S: Scalar>(points: &[(S, S)], f: S) -> S {
    let (first, last) = (points[0], points[points.len() - 1]);
    if f <= first.0 {
        return first.1;
    }
    if f >= last.0 {
        return last.1;
    }
    // First knot with frequency > f; f lies in [points[i-1].0, points[i].0).
    let i = points.partition_point(|p| p.0 <= f);
    let (f0, t0) = points[i - 1];
    let (f1, t1) = points[i];
    if f == f0 {
        return t0;
    }
    // Clamp to the segment's range so rounding cannot break monotonicity at a knot.
    (t0 + (t1 - t0) * (f - f0) / (f1 - f0)).max(t0.min(t1)).min(t0.max(t1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
struct LibraryDoc<S> {
    devices: Vec<DeviceModel<S>>,
}

/// A validated, immutable set of devices.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceLibrary<S> {
    devices: Vec<DeviceModel<S>>,
    fallback: usize,
}

impl<S: Scalar> DeviceLibrary<S> {
    pub fn new(devices: Vec<DeviceModel<S>>) -> Result<Self, DeviceError> {
        let mut names = HashSet::new();
        for d in &devices {
            if !names.insert(d.name.as_str()) {
                return Err(DeviceError::DuplicateName(d.name.clone()));
            }
            d.check()?;
        }
        let unbounded: Vec<usize> = devices
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_unbounded())
            .map(|(i, _)| i)
            .collect();
        if unbounded.len() != 1 {
            return Err(DeviceError::FallbackCount(unbounded.len()));
        }
        Ok(DeviceLibrary {
            fallback: unbounded[0],
            devices,
        })
    }

    pub fn devices(&self) -> &[DeviceModel<S>] {
        &self.devices
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    /// The single unbounded-retention device.
    pub fn fallback(&self) -> &DeviceModel<S> {
        &self.devices[self.fallback]
    }

    pub fn fallback_index(&self) -> usize {
        self.fallback
    }

    pub fn get(&self, name: &str) -> Option<&DeviceModel<S>> {
        self.devices.iter().find(|d| d.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.name == name)
    }

    pub fn to_json(&self) -> String {
        let doc = LibraryDoc {
            devices: self.devices.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("library is always serializable")
    }
}

/// Parses and validates a library document.
pub fn load_library<S: Scalar>(json: &str) -> Result<DeviceLibrary<S>, DeviceError> {
    let doc: LibraryDoc<S> =
        serde_json::from_str(json).map_err(|e| DeviceError::Schema(e.to_string()))?;
    DeviceLibrary::new(doc.devices)
}

/// The shipped SRAM / Si-GCRAM / Hybrid-GCRAM / eDRAM library.
///
/// Bitcell areas and retentions are representative 5 nm values; the per-bit energies are
/// normalized placeholders that only preserve the technologies' relative ordering.
pub fn default_library<S: Scalar>() -> DeviceLibrary<S> {
    load_library(DEFAULT_LIBRARY_JSON).expect("shipped device library is valid")
}

pub fn default_library_json() -> &'static str {
    DEFAULT_LIBRARY_JSON
}
