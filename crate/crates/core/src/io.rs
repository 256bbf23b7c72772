//! CSV interchange. Values go through `f64` and are printed in shortest
//! round-trip form, so a write followed by a read is lossless for `f32` and `f64`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::greens::GreensField;
use crate::memory::KernelSample;
use crate::scalar::Real;
use crate::solver::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub element: usize,
    pub mode: usize,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub integral: f64,
    pub energy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub k: usize,
    #[serde(rename = "E")]
    pub energy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub element: usize,
    pub mode: usize,
    pub value: f64,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreensRow {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub kind: String,
}

fn f<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

pub fn write_rows<W: Write, R: Serialize>(writer: W, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads every row; an input without data rows is an error.
pub fn read_rows<R: Read, D: DeserializeOwned>(reader: R) -> Result<Vec<D>> {
    let rows = csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<Vec<D>, _>>()?;
    if rows.is_empty() {
        return invalid("CSV input has no data rows");
    }
    Ok(rows)
}

pub fn write_file<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    write_rows(File::create(path)?, rows)
}

pub fn read_file<D: DeserializeOwned>(path: &Path) -> Result<Vec<D>> {
    read_rows(File::open(path)?)
}

pub fn trajectory_rows<T: Real>(traj: &Trajectory<T>) -> Vec<TrajectoryRow> {
    let mut rows = Vec::new();
    for (t, state) in traj.times.iter().zip(&traj.states) {
        for k in 0..state.n_elem {
            for j in state.modes.clone() {
                rows.push(TrajectoryRow {
                    t: f(*t),
                    element: k,
                    mode: j,
                    value: f(state.get(k, j)),
                });
            }
        }
    }
    rows
}

pub fn diagnostics_rows<T: Real>(traj: &Trajectory<T>) -> Vec<DiagnosticsRow> {
    traj.diagnostics
        .iter()
        .map(|d| DiagnosticsRow {
            t: f(d.t),
            integral: f(d.integral),
            energy: f(d.energy),
        })
        .collect()
}

/// Spectrum of the last snapshot (Fourier runs).
pub fn spectrum_rows<T: Real>(traj: &Trajectory<T>) -> Result<Vec<SpectrumRow>> {
    let Some(last) = traj.spectra.as_ref().and_then(|s| s.last()) else {
        return invalid("trajectory carries no spectra");
    };
    Ok(last
        .iter()
        .enumerate()
        .map(|(k, e)| SpectrumRow { k, energy: f(*e) })
        .collect())
}

pub fn kernel_rows<T: Real>(samples: &[KernelSample<T>]) -> Vec<KernelRow> {
    let mut rows = Vec::new();
    for s in samples {
        for k in 0..s.values.n_elem {
            for j in s.values.modes.clone() {
                rows.push(KernelRow {
                    element: k,
                    mode: j,
                    value: f(s.values.get(k, j)),
                    t: f(s.t),
                });
            }
        }
    }
    rows
}

pub fn greens_rows<T: Real>(field: &GreensField<T>) -> Vec<GreensRow> {
    let t = &field.table;
    let mut rows = Vec::with_capacity(t.values.len());
    for (i, &x) in t.x.iter().enumerate() {
        for (j, &y) in t.y.iter().enumerate() {
            rows.push(GreensRow {
                x: f(x),
                y: f(y),
                value: f(t.get(i, j)),
                kind: field.kind.as_str().to_string(),
            });
        }
    }
    rows
}
