//! Collocation point generation.
//!
//! Time is discretized at `dt`; step `k` (1-based) sits at `t = k dt`. Each
//! category draws from its own unscrambled Sobol stream and consumes it
//! continuously across steps, so the spatial pattern changes from step to
//! step. Per-step counts follow the integer apportionment
//! `floor(k N / S) - floor((k - 1) N / S)`.

use std::io::Write;

use crate::config::{DomainSpec, GoldakParams, RunConfig, SamplingSpec};
use crate::error::{Error, Result};
use crate::physics::Face;
use crate::sobol::SobolStream;

/// Sobol dimensions per category.
const DOMAIN_DIMS: [usize; 3] = [0, 1, 2];
const SOURCE_DIMS: [usize; 3] = [3, 4, 5];
const INITIAL_DIMS: [usize; 3] = [5, 6, 7];
const FACE_DIMS: [[usize; 2]; 6] = [[0, 1], [2, 3], [4, 5], [6, 7], [1, 3], [2, 5]];

/// Give up on rejection sampling after this many draws per accepted point.
const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Initial,
    Domain,
    Boundary(Face),
    Source,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Initial => "initial",
            Label::Domain => "domain",
            Label::Boundary(_) => "boundary",
            Label::Source => "source",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollocationPoint {
    /// `(x, y, z, t)` in mm and s.
    pub coords: [f64; 4],
    pub label: Label,
}

impl CollocationPoint {
    /// Outward unit normal for boundary points.
    pub fn normal(&self) -> Option<[f64; 3]> {
        match self.label {
            Label::Boundary(face) => {
                let mut n = [0.0; 3];
                n[face.axis()] = face.outward();
                Some(n)
            }
            _ => None,
        }
    }
}

/// All collocation points of one run, grouped by category.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub initial: Vec<[f64; 4]>,
    /// Uniform interior points (z-warped).
    pub domain: Vec<[f64; 4]>,
    /// Points drawn around the moving source; part of the PDE category.
    pub source: Vec<[f64; 4]>,
    /// Boundary points per face, indexed by [`Face::index`].
    pub boundary: [Vec<[f64; 4]>; 6],
    pub seed: u64,
    pub spec: SamplingSpec,
}

impl CollocationSet {
    pub fn n_bc(&self) -> usize {
        self.boundary.iter().map(Vec::len).sum()
    }

    pub fn n_pde(&self) -> usize {
        self.domain.len() + self.source.len()
    }

    pub fn n_initial(&self) -> usize {
        self.initial.len()
    }

    pub fn len(&self) -> usize {
        self.n_bc() + self.n_pde() + self.n_initial()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn face(&self, face: Face) -> &[[f64; 4]] {
        &self.boundary[face.index()]
    }

    /// Every point with its label, categories in a fixed order.
    pub fn points(&self) -> impl Iterator<Item = CollocationPoint> + '_ {
        let tag = |label: Label| move |&coords: &[f64; 4]| CollocationPoint { coords, label };
        self.initial
            .iter()
            .map(tag(Label::Initial))
            .chain(self.domain.iter().map(tag(Label::Domain)))
            .chain(self.source.iter().map(tag(Label::Source)))
            .chain(
                Face::ALL
                    .into_iter()
                    .flat_map(move |f| self.boundary[f.index()].iter().map(tag(Label::Boundary(f)))),
            )
    }

    /// CSV with header `x,y,z,t,label,face`; `face` is empty off the boundary.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,z,t,label,face")?;
        for p in self.points() {
            let face = match p.label {
                Label::Boundary(f) => f.name(),
                _ => "",
            };
            let [x, y, z, t] = p.coords;
            writeln!(out, "{x},{y},{z},{t},{},{face}", p.label.name())?;
        }
        Ok(())
    }
}

/// Power-law warp `u^(1/p)`; for `p > 1` points move toward `u = 1`.
pub fn apply_z_warp(z_unit: f64, exponent: f64) -> Result<f64> {
    if !(exponent > 0.0) || !exponent.is_finite() {
        return Err(Error::WarpExponent(exponent));
    }
    if !(0.0..=1.0).contains(&z_unit) {
        return Err(Error::Sampling(format!("z_unit {z_unit} outside [0, 1]")));
    }
    Ok(z_unit.powf(1.0 / exponent))
}

/// Number of points at step `k` (1-based) out of `steps` when `total` points
/// are spread evenly.
pub fn per_step_count(total: usize, steps: usize, k: usize) -> usize {
    let f = |k: usize| (k as u128 * total as u128 / steps as u128) as usize;
    f(k) - f(k - 1)
}

/// Split `total` over weights by largest remainder; ties go to the lower
/// index.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = total.saturating_sub(counts.iter().sum());
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Boundary point count of every face, proportional to face area.
pub fn face_counts(n_boundary: usize, domain: &DomainSpec) -> [usize; 6] {
    let areas = Face::ALL.map(|f| f.area(domain));
    let c = apportion(n_boundary, &areas);
    std::array::from_fn(|i| c[i])
}

fn step_time(k: usize, dt: f64) -> f64 {
    k as f64 * dt
}

fn domain_points(spec: &SamplingSpec, domain: &DomainSpec, steps: usize, counts: &[usize]) -> Result<Vec<[f64; 4]>> {
    let mut stream = SobolStream::with_dims(&DOMAIN_DIMS, spec.skip)?;
    let mut out = Vec::with_capacity(counts.iter().sum());
    let mut u = [0.0; 3];
    for k in 1..=steps {
        let t = step_time(k, spec.dt);
        for _ in 0..counts[k - 1] {
            stream.next_into(&mut u);
            let z = apply_z_warp(u[2], spec.z_warp)? * domain.lz;
            out.push([u[0] * domain.lx, u[1] * domain.ly, z, t]);
        }
    }
    Ok(out)
}

/// Whether `p` lies in the source ellipsoid scaled by `r`, centred on the
/// top surface at the source position at time `p[3]`.
pub fn in_source_ellipsoid(p: [f64; 4], goldak: &GoldakParams, lz: f64, r: f64) -> bool {
    let dx = (p[0] - goldak.center_x(p[3])) / (r * goldak.a_r);
    let dy = (p[1] - goldak.y0) / (r * goldak.b);
    let dz = (p[2] - lz) / (r * goldak.c);
    dx * dx + dy * dy + dz * dz <= 1.0
}

fn source_points(cfg: &RunConfig, steps: usize, counts: &[usize]) -> Result<Vec<[f64; 4]>> {
    let (spec, domain, g) = (&cfg.sampling, &cfg.domain, &cfg.goldak);
    let r = spec.source_scale;
    let mut stream = SobolStream::with_dims(&SOURCE_DIMS, spec.skip)?;
    let mut out = Vec::with_capacity(counts.iter().sum());
    let mut u = [0.0; 3];
    for k in 1..=steps {
        let t = step_time(k, spec.dt);
        let xc = g.center_x(t);
        let mut accepted = 0;
        let mut tries = 0;
        while accepted < counts[k - 1] {
            tries += 1;
            if tries > MAX_REJECTIONS * counts[k - 1] {
                return Err(Error::Sampling(format!(
                    "source region at t = {t} barely overlaps the plate"
                )));
            }
            stream.next_into(&mut u);
            let p = [
                xc + (2.0 * u[0] - 1.0) * r * g.a_r,
                g.y0 + (2.0 * u[1] - 1.0) * r * g.b,
                domain.lz - u[2] * r * g.c,
                t,
            ];
            if in_source_ellipsoid(p, g, domain.lz, r) && domain.contains(p, 0.0) {
                out.push(p);
                accepted += 1;
            }
        }
    }
    Ok(out)
}

fn face_points(face: Face, count: usize, spec: &SamplingSpec, domain: &DomainSpec, steps: usize) -> Result<Vec<[f64; 4]>> {
    let mut stream = SobolStream::with_dims(&FACE_DIMS[face.index()], spec.skip)?;
    let ext = [domain.lx, domain.ly, domain.lz];
    let axis = face.axis();
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let fixed = if face.is_upper() { ext[axis] } else { 0.0 };
    let mut out = Vec::with_capacity(count);
    let mut u = [0.0; 2];
    for k in 1..=steps {
        let t = step_time(k, spec.dt);
        for _ in 0..per_step_count(count, steps, k) {
            stream.next_into(&mut u);
            let mut p = [0.0, 0.0, 0.0, t];
            p[axis] = fixed;
            p[others[0]] = u[0] * ext[others[0]];
            p[others[1]] = u[1] * ext[others[1]];
            out.push(p);
        }
    }
    Ok(out)
}

/// Build every collocation category for `cfg`.
///
/// `n_domain` counts both the uniform and the source-following points;
/// `n_source` of them follow the source.
pub fn build_collocation_set(cfg: &RunConfig) -> Result<CollocationSet> {
    let spec = &cfg.sampling;
    let domain = &cfg.domain;
    if spec.n_boundary == 0 || spec.n_domain == 0 {
        return Err(Error::EmptyCategory(if spec.n_boundary == 0 { "boundary" } else { "domain" }));
    }
    spec.validate(domain)?;
    let steps = spec.steps(domain);
    let source_counts: Vec<usize> = (1..=steps).map(|k| per_step_count(spec.n_source, steps, k)).collect();
    let uniform_counts: Vec<usize> = (1..=steps)
        .map(|k| per_step_count(spec.n_domain, steps, k).saturating_sub(source_counts[k - 1]))
        .collect();
    let uniform_total: usize = uniform_counts.iter().sum();
    if uniform_total + spec.n_source != spec.n_domain {
        return Err(Error::Sampling(
            "source points exceed the domain budget at some step".to_string(),
        ));
    }

    let mut initial = Vec::with_capacity(spec.n_initial);
    let mut stream = SobolStream::with_dims(&INITIAL_DIMS, spec.skip)?;
    let mut u = [0.0; 3];
    for _ in 0..spec.n_initial {
        stream.next_into(&mut u);
        initial.push([u[0] * domain.lx, u[1] * domain.ly, u[2] * domain.lz, 0.0]);
    }

    let counts = face_counts(spec.n_boundary, domain);
    let mut boundary: [Vec<[f64; 4]>; 6] = Default::default();
    for face in Face::ALL {
        boundary[face.index()] = face_points(face, counts[face.index()], spec, domain, steps)?;
    }

    Ok(CollocationSet {
        initial,
        domain: domain_points(spec, domain, steps, &uniform_counts)?,
        source: source_points(cfg, steps, &source_counts)?,
        boundary,
        seed: cfg.run.seed,
        spec: *spec,
    })
}

/// Largest deviation `|count(box)/N - volume(box)|` over anchored boxes
/// `[0, a) x [0, b)` with corners on a `grid x grid` lattice.
pub fn star_discrepancy_proxy(points: &[[f64; 2]], grid: usize) -> f64 {
    let n = points.len() as f64;
    // cumulative counts on the lattice
    let mut cells = vec![0usize; (grid + 1) * (grid + 1)];
    for p in points {
        let i = ((p[0] * grid as f64).floor() as usize).min(grid - 1) + 1;
        let j = ((p[1] * grid as f64).floor() as usize).min(grid - 1) + 1;
        cells[i * (grid + 1) + j] += 1;
    }
    for i in 1..=grid {
        for j in 1..=grid {
            cells[i * (grid + 1) + j] +=
                cells[(i - 1) * (grid + 1) + j] + cells[i * (grid + 1) + j - 1] - cells[(i - 1) * (grid + 1) + j - 1];
        }
    }
    let mut worst: f64 = 0.0;
    for i in 1..=grid {
        for j in 1..=grid {
            let vol = (i * j) as f64 / (grid * grid) as f64;
            worst = worst.max((cells[i * (grid + 1) + j] as f64 / n - vol).abs());
        }
    }
    worst
}

/// Exact one-dimensional star discrepancy.
pub fn star_discrepancy_1d(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn warp_examples() {
        assert_eq!(apply_z_warp(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(apply_z_warp(1.0, 0.7).unwrap(), 1.0);
        assert_eq!(apply_z_warp(0.25, 2.0).unwrap(), 0.5);
        assert!(apply_z_warp(0.5, 0.0).is_err());
        assert!(apply_z_warp(0.5, -1.0).is_err());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u: f64 = rng.random();
            assert_eq!(apply_z_warp(u, 1.0).unwrap(), u);
        }
    }

    proptest! {
        #[test]
        fn warp_is_monotone_and_majorizes(a in 0.0..=1.0f64, b in 0.0..=1.0f64, p in 1.0..8.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(apply_z_warp(lo, p).unwrap() <= apply_z_warp(hi, p).unwrap());
            prop_assert!(apply_z_warp(a, p).unwrap() >= a);
        }

        #[test]
        fn apportionment_sums_to_total(total in 0usize..100_000, steps in 1usize..1000) {
            let sum: usize = (1..=steps).map(|k| per_step_count(total, steps, k)).sum();
            prop_assert_eq!(sum, total);
        }
    }

    #[test]
    fn full_scale_totals() {
        let cfg = RunConfig::standard();
        let set = build_collocation_set(&cfg).unwrap();
        assert_eq!(set.n_bc(), 185_669);
        assert_eq!(set.n_pde(), 112_635);
        assert_eq!(set.n_initial(), 3_509);
        assert_eq!(set.len(), 301_813);
        assert_eq!(set.source.len(), 38_400);
    }

    #[test]
    fn desk_scale_per_step_counts() {
        let cfg = RunConfig::desk_scale();
        let set = build_collocation_set(&cfg).unwrap();
        let steps = cfg.sampling.steps(&cfg.domain);
        assert_eq!(steps, 600);
        let per_step = |pts: Vec<&[f64; 4]>, k: usize| {
            let t = k as f64 * cfg.sampling.dt;
            pts.iter().filter(|p| p[3] == t).count()
        };
        let bc: Vec<&[f64; 4]> = set.boundary.iter().flatten().collect();
        let pde: Vec<&[f64; 4]> = set.domain.iter().chain(&set.source).collect();
        for k in [1, 2, 77, 300, 600] {
            let nb = per_step(bc.clone(), k) as f64;
            let nd = per_step(pde.clone(), k) as f64;
            // one rounding per face
            assert!((nb - set.n_bc() as f64 / 600.0).abs() <= 6.0, "{nb}");
            assert!((nd - set.n_pde() as f64 / 600.0).abs() <= 1.0, "{nd}");
        }
        assert!((set.n_bc() as f64 / 600.0 - 31.0).abs() < 0.5);
        assert!((set.n_pde() as f64 / 600.0 - 19.0).abs() < 0.5);
    }

    #[test]
    fn labels_geometry_and_normals() {
        let cfg = RunConfig::desk_scale();
        let set = build_collocation_set(&cfg).unwrap();
        let ext = [cfg.domain.lx, cfg.domain.ly, cfg.domain.lz];
        for p in set.points() {
            assert!(cfg.domain.contains(p.coords, 0.0));
            match p.label {
                Label::Initial => assert_eq!(p.coords[3], 0.0),
                Label::Boundary(face) => {
                    let target = if face.is_upper() { ext[face.axis()] } else { 0.0 };
                    assert!((p.coords[face.axis()] - target).abs() <= 1e-9);
                    let n = p.normal().unwrap();
                    assert_eq!(n[face.axis()], face.outward());
                    assert_eq!(n.iter().map(|v| v.abs()).sum::<f64>(), 1.0);
                    assert!(p.coords[3] > 0.0);
                }
                Label::Source => {
                    assert!(in_source_ellipsoid(p.coords, &cfg.goldak, cfg.domain.lz, cfg.sampling.source_scale));
                    assert!(p.normal().is_none());
                }
                Label::Domain => assert!(p.coords[3] > 0.0),
            }
        }
    }

    #[test]
    fn face_split_follows_area() {
        let cfg = RunConfig::desk_scale();
        let c = face_counts(cfg.sampling.n_boundary, &cfg.domain);
        assert_eq!(c.iter().sum::<usize>(), cfg.sampling.n_boundary);
        let total_area: f64 = Face::ALL.iter().map(|f| f.area(&cfg.domain)).sum();
        for f in Face::ALL {
            let exact = f.area(&cfg.domain) / total_area * cfg.sampling.n_boundary as f64;
            assert!((c[f.index()] as f64 - exact).abs() < 1.0);
        }
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
    }

    #[test]
    fn domain_points_lean_toward_top() {
        let set = build_collocation_set(&RunConfig::desk_scale()).unwrap();
        let lz = 4.0;
        let upper = set.domain.iter().filter(|p| p[2] > lz / 2.0).count() as f64;
        // P(u^(1/2) > 1/2) = 3/4
        assert!((upper / set.domain.len() as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn deterministic() {
        let cfg = RunConfig::desk_scale();
        assert_eq!(build_collocation_set(&cfg).unwrap(), build_collocation_set(&cfg).unwrap());
    }

    #[test]
    fn rejects_empty_categories_and_bad_dt() {
        let mut cfg = RunConfig::desk_scale();
        cfg.sampling.n_boundary = 0;
        assert!(matches!(build_collocation_set(&cfg), Err(Error::EmptyCategory(_))));
        let mut cfg = RunConfig::desk_scale();
        cfg.sampling.dt = 0.007;
        assert!(build_collocation_set(&cfg).is_err());
    }

    #[test]
    fn sobol_beats_pseudo_random_discrepancy() {
        let mut s = SobolStream::new(2, 1).unwrap();
        let sobol: Vec<[f64; 2]> = (0..1024)
            .map(|_| {
                let p = s.next_point();
                [p[0], p[1]]
            })
            .collect();
        let d_sobol = star_discrepancy_proxy(&sobol, 64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut d_rand: Vec<f64> = (0..10)
            .map(|_| {
                let pts: Vec<[f64; 2]> = (0..1024).map(|_| [rng.random(), rng.random()]).collect();
                star_discrepancy_proxy(&pts, 64)
            })
            .collect();
        d_rand.sort_by(f64::total_cmp);
        assert!(d_sobol < (d_rand[4] + d_rand[5]) / 2.0, "{d_sobol} vs {d_rand:?}");
    }

    #[test]
    fn projections_are_as_uniform_as_one_dimensional_sobol() {
        let mut s4 = SobolStream::new(4, 1).unwrap();
        let pts: Vec<Vec<f64>> = (0..4096).map(|_| s4.next_point()).collect();
        let mut s1 = SobolStream::new(1, 1).unwrap();
        let reference: Vec<f64> = (0..4096).map(|_| s1.next_point()[0]).collect();
        let d_ref = star_discrepancy_1d(&reference);
        for axis in 0..4 {
            let proj: Vec<f64> = pts.iter().map(|p| p[axis]).collect();
            assert!(star_discrepancy_1d(&proj) <= 2.0 * d_ref);
        }
    }

    #[test]
    fn csv_export() {
        let mut cfg = RunConfig::desk_scale();
        cfg.sampling.n_boundary = 600;
        cfg.sampling.n_domain = 600;
        cfg.sampling.n_source = 0;
        cfg.sampling.n_initial = 2;
        let set = build_collocation_set(&cfg).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,z,t,label,face"));
        assert_eq!(text.lines().count(), 1 + set.len());
        assert!(text.lines().nth(1).unwrap().ends_with(",initial,"));
        assert!(text.contains(",boundary,z+"));
    }
}
