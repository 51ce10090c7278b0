//! Field comparison metrics, probe histories and path profiles.
//!
//! The relative L2 error pools every node and stored time slice:
//! `||pred - ref|| / ||ref||` with temperatures in degC as stored. It is not
//! symmetric in its arguments since the denominator is the reference.

use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{DomainSpec, RunConfig};
use crate::error::{Error, Result};
use crate::grid::TemperatureGrid;
use crate::real::Real;
use crate::train::predict;

/// Something that can be evaluated at physical points `(x, y, z, t)`.
pub trait TemperatureSource {
    fn temperatures(&self, points: &[[f64; 4]]) -> Result<Vec<f64>>;
}

impl TemperatureSource for TemperatureGrid {
    fn temperatures(&self, points: &[[f64; 4]]) -> Result<Vec<f64>> {
        points.iter().map(|p| self.sample(*p)).collect()
    }
}

/// A trained network, evaluated at exact coordinates.
#[derive(Debug, Clone)]
pub struct PinnModel<S> {
    pub checkpoint: Checkpoint<S>,
    pub chunk_size: usize,
}

impl<S: Real> PinnModel<S> {
    pub fn new(checkpoint: Checkpoint<S>) -> Self {
        Self {
            checkpoint,
            chunk_size: 256,
        }
    }

    pub fn domain(&self) -> DomainSpec {
        let e = self.checkpoint.transform.extents.map(|v| v.as_f64());
        DomainSpec {
            lx: e[0],
            ly: e[1],
            lz: e[2],
            t_end: e[3],
        }
    }

    /// Evaluate on every node and time of `like`.
    pub fn on_lattice(&self, like: &TemperatureGrid) -> Result<TemperatureGrid> {
        let ext = self.checkpoint.transform.extents.map(|v| v.as_f64());
        let lat = like.spec.extents;
        if (0..3).any(|a| (ext[a] - lat[a]).abs() > 1e-9 * ext[a].max(1.0))
            || like.times.iter().any(|&t| t > ext[3] + 1e-9)
        {
            return Err(Error::LatticeMismatch(format!(
                "checkpoint extents {ext:?} do not cover lattice extents {lat:?}"
            )));
        }
        let nodes = like.spec.nodes();
        let mut slices = Vec::with_capacity(like.times.len());
        for &t in &like.times {
            let pts: Vec<[f64; 4]> = nodes.iter().map(|p| [p[0], p[1], p[2], t]).collect();
            slices.push(self.temperatures(&pts)?);
        }
        TemperatureGrid::new(like.spec, like.times.clone(), slices)
    }
}

impl<S: Real> TemperatureSource for PinnModel<S> {
    fn temperatures(&self, points: &[[f64; 4]]) -> Result<Vec<f64>> {
        let domain = self.domain();
        if let Some(p) = points.iter().find(|p| !domain.contains(**p, 1e-9)) {
            return Err(Error::ProbeOutside(*p));
        }
        predict(&self.checkpoint.params, &self.checkpoint.transform, points, self.chunk_size)
    }
}

fn slice_sums(pred: &TemperatureGrid, reference: &TemperatureGrid) -> Result<Vec<(f64, f64)>> {
    pred.check_compatible(reference)?;
    Ok(pred
        .slices
        .par_iter()
        .zip(&reference.slices)
        .map(|(p, r)| {
            let num = p.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let den = r.iter().map(|b| b * b).sum::<f64>();
            (num, den)
        })
        .collect())
}

/// Pooled relative L2 error of `pred` against `reference`.
pub fn relative_l2(pred: &TemperatureGrid, reference: &TemperatureGrid) -> Result<f64> {
    let sums = slice_sums(pred, reference)?;
    let (num, den) = sums.iter().fold((0.0, 0.0), |(n, d), (a, b)| (n + a, d + b));
    Ok(ratio(num, den))
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Relative L2 error of each stored slice.
pub fn slice_l2(pred: &TemperatureGrid, reference: &TemperatureGrid) -> Result<Vec<f64>> {
    Ok(slice_sums(pred, reference)?.into_iter().map(|(n, d)| ratio(n, d)).collect())
}

pub fn max_abs_diff(pred: &TemperatureGrid, reference: &TemperatureGrid) -> Result<f64> {
    pred.check_compatible(reference)?;
    Ok(pred
        .slices
        .iter()
        .flatten()
        .zip(reference.slices.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Largest `100 |pred - ref| / max(|ref|, 1)` over the lattice.
pub fn max_percent_error(pred: &TemperatureGrid, reference: &TemperatureGrid) -> Result<f64> {
    pred.check_compatible(reference)?;
    Ok(pred
        .slices
        .iter()
        .flatten()
        .zip(reference.slices.iter().flatten())
        .map(|(a, b)| 100.0 * (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// Temperature histories at fixed probes: `values[i][j]` is probe `j` at
/// `times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeTable {
    pub probes: Vec<[f64; 3]>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ProbeTable {
    /// Header `t,p1,p2,...`, one row per time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 0..self.probes.len() {
            out.push_str(&format!(",p{}", i + 1));
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.values) {
            out.push_str(&t.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn probe_history(src: &dyn TemperatureSource, probes: &[[f64; 3]], times: &[f64]) -> Result<ProbeTable> {
    let mut pts = Vec::with_capacity(probes.len() * times.len());
    for &t in times {
        pts.extend(probes.iter().map(|p| [p[0], p[1], p[2], t]));
    }
    let flat = src.temperatures(&pts)?;
    let values = if probes.is_empty() {
        vec![Vec::new(); times.len()]
    } else {
        flat.chunks(probes.len()).map(<[f64]>::to_vec).collect()
    };
    Ok(ProbeTable {
        probes: probes.to_vec(),
        times: times.to_vec(),
        values,
    })
}

/// A line parallel to `x` at fixed `y`, `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathLine {
    pub x_start: f64,
    pub x_end: f64,
    pub y: f64,
    pub z: f64,
    pub samples: usize,
}

impl PathLine {
    /// Full plate length along the deposition line `y = y0`, `z = lz`.
    pub fn deposition(cfg: &RunConfig, samples: usize) -> Self {
        Self {
            x_start: 0.0,
            x_end: cfg.domain.lx,
            y: cfg.goldak.y0,
            z: cfg.domain.lz,
            samples,
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        let step = (self.x_end - self.x_start) / (self.samples - 1) as f64;
        (0..self.samples).map(|i| self.x_start + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathProfile {
    pub t: f64,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl PathProfile {
    /// Position of the first maximum.
    pub fn argmax(&self) -> f64 {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        self.x[best]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,T\n");
        for (x, v) in self.x.iter().zip(&self.values) {
            out.push_str(&format!("{x},{v}\n"));
        }
        out
    }
}

pub fn path_profile(src: &dyn TemperatureSource, t: f64, line: &PathLine) -> Result<PathProfile> {
    if line.samples < 2 {
        return Err(Error::invariant("samples", line.samples, "at least 2"));
    }
    let x = line.xs();
    let pts: Vec<[f64; 4]> = x.iter().map(|&x| [x, line.y, line.z, t]).collect();
    Ok(PathProfile {
        t,
        values: src.temperatures(&pts)?,
        x,
    })
}

/// Everything `compare` reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub relative_l2: f64,
    /// `(t, relative L2)` per stored slice.
    pub slice_l2: Vec<(f64, f64)>,
    pub max_abs_diff: f64,
    pub max_percent_error: f64,
    pub probes_pred: ProbeTable,
    pub probes_ref: ProbeTable,
    pub profiles_pred: Vec<PathProfile>,
    pub profiles_ref: Vec<PathProfile>,
}

impl ComparisonReport {
    /// Compare two fields on the same lattice. Probe and path tables are
    /// taken from `pred_src`, which may be the network itself.
    pub fn build(
        pred_src: &dyn TemperatureSource,
        pred: &TemperatureGrid,
        reference: &TemperatureGrid,
        probes: &[[f64; 3]],
        profile_times: &[f64],
        line: &PathLine,
    ) -> Result<Self> {
        let per = slice_l2(pred, reference)?;
        Ok(Self {
            relative_l2: relative_l2(pred, reference)?,
            slice_l2: reference.times.iter().copied().zip(per).collect(),
            max_abs_diff: max_abs_diff(pred, reference)?,
            max_percent_error: max_percent_error(pred, reference)?,
            probes_pred: probe_history(pred_src, probes, &reference.times)?,
            probes_ref: probe_history(reference, probes, &reference.times)?,
            profiles_pred: profile_times.iter().map(|&t| path_profile(pred_src, t, line)).collect::<Result<_>>()?,
            profiles_ref: profile_times.iter().map(|&t| path_profile(reference, t, line)).collect::<Result<_>>()?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("relative L2 error   {:.6e}\n", self.relative_l2));
        out.push_str(&format!("max |difference|    {:.3} degC\n", self.max_abs_diff));
        out.push_str(&format!("max percent error   {:.2} %\n", self.max_percent_error));
        out.push_str("per-slice relative L2:\n");
        for (t, e) in &self.slice_l2 {
            out.push_str(&format!("  t = {t:>6.3} s  {e:.4e}\n"));
        }
        for (p, r) in self.profiles_pred.iter().zip(&self.profiles_ref) {
            out.push_str(&format!(
                "path peak at t = {:.2} s: pred {:.1} degC at x = {:.2}, ref {:.1} degC at x = {:.2}\n",
                p.t,
                p.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                p.argmax(),
                r.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                r.argmax()
            ));
        }
        out
    }
}
