use arcpinn::config::{DomainSpec, RunConfig};
use arcpinn::grid::{GridSpec, TemperatureGrid};
use arcpinn::metrics::{path_profile, PathLine};
use arcpinn::oracle::*;
use arcpinn::physics::Face;

fn rms_on_coarse(coarse: &TemperatureGrid, fine: &TemperatureGrid) -> f64 {
    let ratio = (coarse.spec.spacing / fine.spec.spacing).round() as usize;
    let [nx, ny, nz] = coarse.spec.dims();
    let mut sum = 0.0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let a = coarse.slices[0][coarse.spec.index(i, j, k)];
                let b = fine.slices[0][fine.spec.index(i * ratio, j * ratio, k * ratio)];
                sum += (a - b) * (a - b);
            }
        }
    }
    (sum / (nx * ny * nz) as f64).sqrt()
}

#[test]
fn slab_reduction_matches_series() {
    let len = 10.0;
    let dx = len / 200.0;
    let mut cfg = RunConfig::standard();
    cfg.goldak.power = 0.0;
    let alpha = cfg.material.diffusivity();
    let fo = [0.05, 0.1, 0.2];
    let times: Vec<f64> = fo.iter().map(|f| (f * len * len / alpha / 0.0005).round() * 0.0005).collect();
    cfg.domain = DomainSpec {
        lx: len,
        ly: dx,
        lz: dx,
        t_end: times[2],
    };
    let grid = GridSpec::new(dx, 0.0005, &cfg.domain).unwrap();
    let mut opts = OracleOptions::insulated(times.clone());
    opts.faces[Face::XMin.index()] = FaceCondition::Dirichlet(25.0);
    opts.faces[Face::XMax.index()] = FaceCondition::Dirichlet(25.0);
    opts.initial = InitialField::Uniform(1025.0);
    let out = fdm_solve_with(&cfg, &grid, &opts).unwrap().grid;
    for (s, &t) in times.iter().enumerate() {
        let worst = (0..=200)
            .map(|i| {
                let exact = analytic_slab_1d(i as f64 * dx, t, len, 1025.0, 25.0, alpha);
                (out.slices[s][grid.index(i, 0, 0)] - exact).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.5, "t = {t}: max error {worst}");
    }
}

#[test]
fn halving_the_time_step_barely_moves_the_final_field() {
    let cfg = RunConfig::standard();
    let coarse = GridSpec::new(0.5, 0.02, &cfg.domain).unwrap();
    let fine = GridSpec::new(0.5, 0.01, &cfg.domain).unwrap();
    let a = fdm_solve(&cfg, &coarse, &[3.0]).unwrap();
    let b = fdm_solve(&cfg, &fine, &[3.0]).unwrap();
    let num: f64 = a.slices[0].iter().zip(&b.slices[0]).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.slices[0].iter().map(|y| y * y).sum();
    assert!((num / den).sqrt() < 0.01);
}

#[test]
fn refinement_differences_shrink() {
    let mut cfg = RunConfig::standard();
    cfg.domain.t_end = 1.0;
    cfg.goldak.t_on = 1.0;
    let solve = |h: f64| {
        let grid = GridSpec::new(h, 0.02, &cfg.domain).unwrap();
        fdm_solve(&cfg, &grid, &[1.0]).unwrap()
    };
    let l1 = solve(1.0);
    let l2 = solve(0.5);
    let l3 = solve(0.25);
    let d12 = rms_on_coarse(&l1, &l2);
    let d23 = rms_on_coarse(&l2, &l3);
    assert!(d23 < d12, "{d12} vs {d23}");
}

#[test]
fn path_maxima_follow_the_source() {
    let cfg = RunConfig::standard();
    let grid = GridSpec::preset("cc", &cfg.domain).unwrap();
    let times = [0.6, 1.6, 2.6];
    let out = fdm_solve(&cfg, &grid, &times).unwrap();
    let line = PathLine::deposition(&cfg, 161);
    let dense = PathLine::deposition(&cfg, 321);
    for &t in &times {
        let p = path_profile(&out, t, &line).unwrap();
        let xc = cfg.goldak.center_x(t);
        assert!((p.argmax() - xc).abs() <= cfg.goldak.a_r, "t = {t}: peak at {} vs source {xc}", p.argmax());
        let q = path_profile(&out, t, &dense).unwrap();
        assert!((q.argmax() - p.argmax()).abs() <= 40.0 / 160.0 + 1e-9);
    }
    assert!(out.min() >= cfg.material.t_ambient - 1e-6);
}

#[test]
fn energy_closes_each_step_with_the_default_source() {
    let cfg = RunConfig::standard();
    let grid = GridSpec::preset("cc", &cfg.domain).unwrap();
    let run = fdm_solve_with(&cfg, &grid, &OracleOptions::insulated(vec![3.0])).unwrap();
    for r in &run.steps {
        let rel = (r.stored_energy - r.deposited_energy).abs() / r.deposited_energy;
        assert!(rel < 0.01, "step {}: {rel}", r.step);
    }
}
