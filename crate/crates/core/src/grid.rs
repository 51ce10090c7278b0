//! Structured temperature lattices, interpolation and file formats.
//!
//! Node `(i, j, k)` sits at `(i dx, j dx, k dx)`; values are stored with `x`
//! varying fastest, then `y`, then `z`, which is also the order of every file
//! format below.
//!
//! CSV (`x,y,z,t,T`): one header line, then one row per node and time slice,
//! slices in increasing time order. Reals use the shortest representation
//! that reads back to the same `f64`.
//!
//! Legacy VTK: one `STRUCTURED_POINTS` ASCII file per slice with
//! `DIMENSIONS nx ny nz`, `ORIGIN 0 0 0`, `SPACING dx dx dx` and a single
//! `SCALARS temperature double 1` field.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::config::DomainSpec;
use crate::error::{Error, Result};

/// Spatial spacing, time step and extents of an oracle lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Node spacing, equal on all axes (mm).
    pub spacing: f64,
    /// Time step (s).
    pub dt: f64,
    /// `(lx, ly, lz, t_end)`.
    pub extents: [f64; 4],
}

fn divisions(len: f64, step: f64) -> Option<usize> {
    let n = len / step;
    let r = n.round();
    ((n - r).abs() <= 1e-9 * r.max(1.0) && r >= 1.0).then_some(r as usize)
}

impl GridSpec {
    pub fn new(spacing: f64, dt: f64, domain: &DomainSpec) -> Result<Self> {
        if !(spacing > 0.0) || !(dt > 0.0) {
            return Err(Error::GridExtent {
                spacing,
                extent: domain.lx,
            });
        }
        for extent in [domain.lx, domain.ly, domain.lz] {
            divisions(extent, spacing).ok_or(Error::GridExtent { spacing, extent })?;
        }
        divisions(domain.t_end, dt).ok_or(Error::GridExtent {
            spacing: dt,
            extent: domain.t_end,
        })?;
        Ok(Self {
            spacing,
            dt,
            extents: domain.extents(),
        })
    }

    /// Named presets mirroring the coarse/fine reference meshes:
    /// `cc` 0.5 mm / 20 ms, `fc` 0.1 mm / 20 ms, `ff` 0.1 mm / 5 ms.
    pub fn preset(name: &str, domain: &DomainSpec) -> Result<Self> {
        let (dx, dt) = match name {
            "cc" => (0.5, 0.02),
            "fc" => (0.1, 0.02),
            "ff" => (0.1, 0.005),
            other => {
                return Err(Error::invariant("preset", other, "one of cc, fc, ff"));
            }
        };
        Self::new(dx, dt, domain)
    }

    /// Node counts `(nx, ny, nz)`.
    pub fn dims(&self) -> [usize; 3] {
        std::array::from_fn(|a| (self.extents[a] / self.spacing).round() as usize + 1)
    }

    pub fn node_count(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn steps(&self) -> usize {
        (self.extents[3] / self.dt).round() as usize
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.dims();
        (k * ny + j) * nx + i
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [i as f64 * self.spacing, j as f64 * self.spacing, k as f64 * self.spacing]
    }

    /// Coordinates of every node in storage order.
    pub fn nodes(&self) -> Vec<[f64; 3]> {
        let [nx, ny, nz] = self.dims();
        let mut out = Vec::with_capacity(nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    out.push(self.node(i, j, k));
                }
            }
        }
        out
    }

    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self.dims() == other.dims() && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
    }
}

/// Nodal temperatures at a set of stored times.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureGrid {
    pub spec: GridSpec,
    pub times: Vec<f64>,
    /// One field per time, in storage order.
    pub slices: Vec<Vec<f64>>,
}

impl TemperatureGrid {
    pub fn new(spec: GridSpec, times: Vec<f64>, slices: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != slices.len() || slices.iter().any(|s| s.len() != spec.node_count()) {
            return Err(Error::LatticeMismatch("slice sizes do not match the lattice".to_string()));
        }
        Ok(Self { spec, times, slices })
    }

    /// Check that `other` has the same nodes and times.
    pub fn check_compatible(&self, other: &TemperatureGrid) -> Result<()> {
        if !self.spec.same_lattice(&other.spec) {
            return Err(Error::LatticeMismatch(format!(
                "dims {:?} vs {:?}",
                self.spec.dims(),
                other.spec.dims()
            )));
        }
        if self.times.len() != other.times.len()
            || self.times.iter().zip(&other.times).any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::LatticeMismatch("time slices differ".to_string()));
        }
        Ok(())
    }

    pub fn max(&self) -> f64 {
        self.slices.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.slices.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    fn slice_at(&self, s: usize, p: [f64; 3]) -> f64 {
        let [nx, ny, nz] = self.spec.dims();
        let n = [nx, ny, nz];
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = (p[a] / self.spec.spacing).clamp(0.0, (n[a] - 1) as f64);
            let i = (u.floor() as usize).min(n[a].saturating_sub(2));
            base[a] = i;
            frac[a] = if n[a] > 1 { u - i as f64 } else { 0.0 };
        }
        let field = &self.slices[s];
        let mut v = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                if up && n[a] == 1 {
                    w = 0.0;
                }
                idx[a] = base[a] + up as usize;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                v += w * field[self.spec.index(idx[0], idx[1], idx[2])];
            }
        }
        v
    }

    /// Trilinear in space, linear between stored times.
    pub fn sample(&self, p: [f64; 4]) -> Result<f64> {
        let ext = self.spec.extents;
        let tol = 1e-9;
        if (0..3).any(|a| p[a] < -tol || p[a] > ext[a] + tol) || self.times.is_empty() {
            return Err(Error::ProbeOutside(p));
        }
        let (t0, t1) = (self.times[0], self.times[self.times.len() - 1]);
        if p[3] < t0 - tol || p[3] > t1 + tol {
            return Err(Error::ProbeOutside(p));
        }
        let xyz = [p[0], p[1], p[2]];
        let s = self.times.partition_point(|&t| t < p[3] - tol);
        if s < self.times.len() && (self.times[s] - p[3]).abs() <= tol {
            return Ok(self.slice_at(s, xyz));
        }
        let (a, b) = (s - 1, s);
        let w = (p[3] - self.times[a]) / (self.times[b] - self.times[a]);
        Ok((1.0 - w) * self.slice_at(a, xyz) + w * self.slice_at(b, xyz))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,z,t,T")?;
        let nodes = self.spec.nodes();
        for (t, field) in self.times.iter().zip(&self.slices) {
            for (p, v) in nodes.iter().zip(field) {
                writeln!(out, "{},{},{},{t},{v}", p[0], p[1], p[2])?;
            }
        }
        Ok(())
    }

    /// Read the CSV format back. The time step is not stored in the file and
    /// is set to the first slice spacing.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let bad = |m: String| Error::GridFormat(m);
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".to_string()))?.map_err(|e| bad(e.to_string()))?;
        if header.trim() != "x,y,z,t,T" {
            return Err(bad(format!("unexpected header `{header}`")));
        }
        let mut rows: Vec<[f64; 5]> = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("line {}: bad number", n + 2)))?;
            if vals.len() != 5 {
                return Err(bad(format!("line {}: expected 5 columns", n + 2)));
            }
            rows.push([vals[0], vals[1], vals[2], vals[3], vals[4]]);
        }
        let mut times: Vec<f64> = Vec::new();
        for r in &rows {
            if times.last() != Some(&r[3]) {
                times.push(r[3]);
            }
        }
        if times.is_empty() || !rows.len().is_multiple_of(times.len()) {
            return Err(bad("rows do not split into equal slices".to_string()));
        }
        let per = rows.len() / times.len();
        let ext = [0, 1, 2].map(|a| rows[..per].iter().map(|r| r[a]).fold(0.0, f64::max));
        let spacing = if per > 1 { rows[1][0] - rows[0][0] } else { 1.0 };
        let spacing = if spacing > 0.0 { spacing } else { ext.iter().copied().fold(1.0, f64::max) };
        let dt = if times.len() > 1 { times[1] - times[0] } else { times[0].max(1.0) };
        let spec = GridSpec {
            spacing,
            dt,
            extents: [ext[0], ext[1], ext[2], *times.last().unwrap()],
        };
        if spec.node_count() != per {
            return Err(bad(format!("{per} nodes per slice do not form a lattice of spacing {spacing}")));
        }
        let nodes = spec.nodes();
        let mut slices = Vec::with_capacity(times.len());
        for (s, chunk) in rows.chunks(per).enumerate() {
            for (r, p) in chunk.iter().zip(&nodes) {
                if r[3] != times[s] || (0..3).any(|a| (r[a] - p[a]).abs() > 1e-9 * spacing.max(1.0)) {
                    return Err(bad("rows are not in lattice order".to_string()));
                }
            }
            slices.push(chunk.iter().map(|r| r[4]).collect());
        }
        TemperatureGrid::new(spec, times, slices)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// Legacy-VTK rendering of slice `s`.
    pub fn write_vtk<W: Write>(&self, s: usize, mut out: W) -> std::io::Result<()> {
        let [nx, ny, nz] = self.spec.dims();
        let h = self.spec.spacing;
        writeln!(out, "# vtk DataFile Version 3.0")?;
        writeln!(out, "temperature t={}", self.times[s])?;
        writeln!(out, "ASCII")?;
        writeln!(out, "DATASET STRUCTURED_POINTS")?;
        writeln!(out, "DIMENSIONS {nx} {ny} {nz}")?;
        writeln!(out, "ORIGIN 0 0 0")?;
        writeln!(out, "SPACING {h} {h} {h}")?;
        writeln!(out, "POINT_DATA {}", nx * ny * nz)?;
        writeln!(out, "SCALARS temperature double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in &self.slices[s] {
            writeln!(out, "{v}")?;
        }
        Ok(())
    }

    /// Write one VTK file per slice as `<stem>_<index>.vtk` in `dir`.
    pub fn save_vtk_series(&self, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for s in 0..self.times.len() {
            let path = dir.join(format!("{stem}_{s:04}.vtk"));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = std::io::BufWriter::new(file);
            self.write_vtk(s, &mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }

    /// Parse a single-slice legacy-VTK file written by [`write_vtk`](Self::write_vtk).
    pub fn read_vtk<R: BufRead>(input: R, t: f64, dt: f64) -> Result<Self> {
        let bad = |m: &str| Error::GridFormat(m.to_string());
        let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>().map_err(|e| bad(&e.to_string()))?;
        let field = |key: &str| -> Result<Vec<f64>> {
            let line = lines.iter().find(|l| l.starts_with(key)).ok_or_else(|| bad(key))?;
            line[key.len()..]
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad(key)))
                .collect()
        };
        let dims = field("DIMENSIONS")?;
        let spacing = field("SPACING")?;
        if dims.len() != 3 || spacing.is_empty() {
            return Err(bad("malformed header"));
        }
        let start = lines.iter().position(|l| l.starts_with("LOOKUP_TABLE")).ok_or_else(|| bad("LOOKUP_TABLE"))? + 1;
        let values: Vec<f64> = lines[start..]
            .iter()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse().map_err(|_| bad("bad value")))
            .collect::<Result<_>>()?;
        let h = spacing[0];
        let spec = GridSpec {
            spacing: h,
            dt,
            extents: [(dims[0] - 1.0) * h, (dims[1] - 1.0) * h, (dims[2] - 1.0) * h, t],
        };
        TemperatureGrid::new(spec, vec![t], vec![values])
    }
}
