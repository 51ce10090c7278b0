//! Adam and L-BFGS on flat parameter vectors.
//!
//! The L-BFGS epoch mirrors the semantics of the widely used PyTorch
//! implementation: two-loop recursion, a strong-Wolfe line search with cubic
//! interpolation, and per-call iteration/evaluation budgets with history that
//! survives between calls.

use std::collections::VecDeque;

use crate::error::Result;
use crate::real::Real;

fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += x.as_f64() * y.as_f64();
    }
    S::lit(acc)
}

fn max_abs<S: Real>(a: &[S]) -> S {
    a.iter().fold(S::zero(), |m, v| m.max(v.abs()))
}

fn l2<S: Real>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    m: Vec<S>,
    v: Vec<S>,
    steps: i32,
}

impl<S: Real> Adam<S> {
    pub fn new(n: usize, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Self {
            lr: S::lit(lr),
            beta1: S::lit(betas.0),
            beta2: S::lit(betas.1),
            eps: S::lit(eps),
            m: vec![S::zero(); n],
            v: vec![S::zero(); n],
            steps: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    /// One update of `params` against `grad`.
    pub fn step(&mut self, params: &mut [S], grad: &[S]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.steps += 1;
        let one = S::one();
        let bc1 = one - self.beta1.powi(self.steps);
        let bc2 = one - self.beta2.powi(self.steps);
        let step_size = self.lr / bc1;
        let bc2_sqrt = bc2.sqrt();
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let denom = self.v[i].sqrt() / bc2_sqrt + self.eps;
            params[i] -= step_size * self.m[i] / denom;
        }
    }
}

/// Static L-BFGS settings.
#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub lr: f64,
    pub max_iter: usize,
    pub max_eval: usize,
    pub history: usize,
    pub tolerance_grad: f64,
    pub tolerance_change: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_ls: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            max_iter: 50,
            max_eval: 62,
            history: 50,
            tolerance_grad: 1e-7,
            tolerance_change: 1e-9,
            c1: 1e-4,
            c2: 0.9,
            max_ls: 25,
        }
    }
}

/// Why an L-BFGS epoch ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStop {
    /// Gradient below `tolerance_grad`.
    Converged,
    MaxIter,
    MaxEval,
    /// Not a descent direction, or step/loss change below `tolerance_change`.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsEpoch<S> {
    /// Loss at entry.
    pub initial_loss: S,
    /// Loss after every accepted step.
    pub accepted: Vec<S>,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: LbfgsStop,
}

impl<S: Real> LbfgsEpoch<S> {
    pub fn final_loss(&self) -> S {
        self.accepted.last().copied().unwrap_or(self.initial_loss)
    }
}

/// L-BFGS optimizer state.
#[derive(Debug, Clone)]
pub struct Lbfgs<S> {
    pub config: LbfgsConfig,
    dirs: VecDeque<Vec<S>>,
    steps: VecDeque<Vec<S>>,
    ro: VecDeque<S>,
    h_diag: S,
    d: Vec<S>,
    t: S,
    prev_grad: Vec<S>,
    n_iter: usize,
    func_evals: usize,
}

fn cubic_interpolate<S: Real>(x1: S, f1: S, g1: S, x2: S, f2: S, g2: S, bounds: Option<(S, S)>) -> S {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let three = S::lit(3.0);
    let two = S::lit(2.0);
    let d1 = g1 + g2 - three * (f1 - f2) / (x1 - x2);
    let d2_square = d1 * d1 - g1 * g2;
    if d2_square >= S::zero() {
        let d2 = d2_square.sqrt();
        let min_pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + two * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + two * d2))
        };
        min_pos.max(lo).min(hi)
    } else {
        (lo + hi) / two
    }
}

struct Probe<S> {
    t: S,
    f: S,
    g: Vec<S>,
    gtd: S,
}

impl<S: Real> Lbfgs<S> {
    pub fn new(config: LbfgsConfig) -> Self {
        Self {
            config,
            dirs: VecDeque::new(),
            steps: VecDeque::new(),
            ro: VecDeque::new(),
            h_diag: S::one(),
            d: Vec::new(),
            t: S::zero(),
            prev_grad: Vec::new(),
            n_iter: 0,
            func_evals: 0,
        }
    }

    pub fn history_len(&self) -> usize {
        self.dirs.len()
    }

    pub fn total_iterations(&self) -> usize {
        self.n_iter
    }

    pub fn total_evaluations(&self) -> usize {
        self.func_evals
    }

    fn direction(&self, g: &[S]) -> Vec<S> {
        let k = self.dirs.len();
        let mut q: Vec<S> = g.iter().map(|v| -*v).collect();
        let mut al = vec![S::zero(); k];
        for i in (0..k).rev() {
            al[i] = dot(&self.steps[i], &q) * self.ro[i];
            for (qj, yj) in q.iter_mut().zip(&self.dirs[i]) {
                *qj -= al[i] * *yj;
            }
        }
        let mut r: Vec<S> = q.iter().map(|v| *v * self.h_diag).collect();
        for i in 0..k {
            let be = dot(&self.dirs[i], &r) * self.ro[i];
            for (rj, sj) in r.iter_mut().zip(&self.steps[i]) {
                *rj += *sj * (al[i] - be);
            }
        }
        r
    }

    /// Run one epoch (one optimizer call) on `x`; `f` returns loss and
    /// gradient at a parameter vector.
    pub fn step<F>(&mut self, x: &mut [S], f: &mut F) -> Result<LbfgsEpoch<S>>
    where
        F: FnMut(&[S]) -> Result<(S, Vec<S>)>,
    {
        let cfg = self.config;
        let tol_grad = S::lit(cfg.tolerance_grad);
        let tol_change = S::lit(cfg.tolerance_change);
        let (mut loss, mut g) = f(x)?;
        let initial_loss = loss;
        let mut current_evals = 1;
        self.func_evals += 1;
        let mut report = LbfgsEpoch {
            initial_loss,
            accepted: Vec::new(),
            iterations: 0,
            evaluations: 1,
            stop: LbfgsStop::Converged,
        };
        if max_abs(&g) <= tol_grad {
            return Ok(report);
        }

        let mut n_iter = 0;
        loop {
            n_iter += 1;
            self.n_iter += 1;
            if self.n_iter == 1 {
                self.d = g.iter().map(|v| -*v).collect();
                self.dirs.clear();
                self.steps.clear();
                self.ro.clear();
                self.h_diag = S::one();
            } else {
                let y: Vec<S> = g.iter().zip(&self.prev_grad).map(|(a, b)| *a - *b).collect();
                let s: Vec<S> = self.d.iter().map(|v| *v * self.t).collect();
                let ys = dot(&y, &s);
                if ys > S::lit(1e-10) * l2(&s) * l2(&y) {
                    if self.dirs.len() == cfg.history {
                        self.dirs.pop_front();
                        self.steps.pop_front();
                        self.ro.pop_front();
                    }
                    self.h_diag = ys / dot(&y, &y);
                    self.dirs.push_back(y);
                    self.steps.push_back(s);
                    self.ro.push_back(S::one() / ys);
                }
                self.d = self.direction(&g);
            }
            self.prev_grad = g.clone();
            let prev_loss = loss;

            self.t = if self.n_iter == 1 {
                let l1: S = g.iter().map(|v| v.abs()).sum();
                (S::one() / l1).min(S::one()) * S::lit(cfg.lr)
            } else {
                S::lit(cfg.lr)
            };
            let gtd = dot(&g, &self.d);
            if gtd > -tol_change {
                report.stop = LbfgsStop::Stalled;
                break;
            }

            let x_init = x.to_vec();
            let d = self.d.clone();
            let mut eval_at = |t: S| -> Result<(S, Vec<S>)> {
                for ((xi, x0), di) in x.iter_mut().zip(&x_init).zip(&d) {
                    *xi = *x0 + t * *di;
                }
                f(x)
            };
            let (f_new, g_new, t, ls_evals) = strong_wolfe(&mut eval_at, self.t, &d, loss, &g, gtd, &cfg)?;
            for ((xi, x0), di) in x.iter_mut().zip(&x_init).zip(&d) {
                *xi = *x0 + t * *di;
            }
            self.t = t;
            loss = f_new;
            g = g_new;
            report.accepted.push(loss);
            current_evals += ls_evals;
            self.func_evals += ls_evals;
            let opt_cond = max_abs(&g) <= tol_grad;

            if n_iter == cfg.max_iter {
                report.stop = LbfgsStop::MaxIter;
                break;
            }
            if current_evals >= cfg.max_eval {
                report.stop = LbfgsStop::MaxEval;
                break;
            }
            if opt_cond {
                report.stop = LbfgsStop::Converged;
                break;
            }
            if max_abs(&self.d) * t.abs() <= tol_change || (loss - prev_loss).abs() < tol_change {
                report.stop = LbfgsStop::Stalled;
                break;
            }
        }
        report.iterations = n_iter;
        report.evaluations = current_evals;
        Ok(report)
    }
}

/// Strong-Wolfe line search along `d` from step 0 (loss `f0`, gradient `g0`).
/// Returns the loss, gradient, step and number of evaluations of the chosen
/// point. `eval_at` leaves the parameters at the last evaluated step.
fn strong_wolfe<S: Real, E>(
    eval_at: &mut E,
    t_init: S,
    d: &[S],
    f0: S,
    g0: &[S],
    gtd0: S,
    cfg: &LbfgsConfig,
) -> Result<(S, Vec<S>, S, usize)>
where
    E: FnMut(S) -> Result<(S, Vec<S>)>,
{
    let c1 = S::lit(cfg.c1);
    let c2 = S::lit(cfg.c2);
    let tol_change = S::lit(cfg.tolerance_change);
    let d_norm = max_abs(d);

    let mut t = t_init;
    let (mut f_new, mut g_new) = eval_at(t)?;
    let mut evals = 1;
    let mut gtd_new = dot(&g_new, d);
    let mut prev = Probe {
        t: S::zero(),
        f: f0,
        g: g0.to_vec(),
        gtd: gtd0,
    };
    let mut done = false;
    let mut ls_iter = 0;
    let mut bracket: Vec<Probe<S>> = Vec::new();

    while ls_iter < cfg.max_ls {
        let cur = Probe {
            t,
            f: f_new,
            g: g_new.clone(),
            gtd: gtd_new,
        };
        if f_new > f0 + c1 * t * gtd0 || (ls_iter > 1 && f_new >= prev.f) {
            bracket = vec![prev, cur];
            break;
        }
        if gtd_new.abs() <= -c2 * gtd0 {
            bracket = vec![cur];
            done = true;
            break;
        }
        if gtd_new >= S::zero() {
            bracket = vec![prev, cur];
            break;
        }
        let min_step = t + S::lit(0.01) * (t - prev.t);
        let max_step = t * S::lit(10.0);
        t = cubic_interpolate(prev.t, prev.f, prev.gtd, t, f_new, gtd_new, Some((min_step, max_step)));
        prev = cur;
        let r = eval_at(t)?;
        f_new = r.0;
        g_new = r.1;
        evals += 1;
        gtd_new = dot(&g_new, d);
        ls_iter += 1;
    }
    if ls_iter == cfg.max_ls {
        bracket = vec![
            Probe {
                t: S::zero(),
                f: f0,
                g: g0.to_vec(),
                gtd: gtd0,
            },
            Probe {
                t,
                f: f_new,
                g: g_new.clone(),
                gtd: gtd_new,
            },
        ];
    }

    // zoom
    let mut insuf_progress = false;
    let order = |b: &[Probe<S>]| if b[0].f <= b[b.len() - 1].f { (0, 1) } else { (1, 0) };
    let (mut low, mut high) = order(&bracket);
    while !done && ls_iter < cfg.max_ls {
        if (bracket[1].t - bracket[0].t).abs() * d_norm < tol_change {
            break;
        }
        t = cubic_interpolate(
            bracket[0].t,
            bracket[0].f,
            bracket[0].gtd,
            bracket[1].t,
            bracket[1].f,
            bracket[1].gtd,
            None,
        );
        let (b_min, b_max) = (bracket[0].t.min(bracket[1].t), bracket[0].t.max(bracket[1].t));
        let eps = S::lit(0.1) * (b_max - b_min);
        if (b_max - t).min(t - b_min) < eps {
            if insuf_progress || t >= b_max || t <= b_min {
                t = if (t - b_max).abs() < (t - b_min).abs() { b_max - eps } else { b_min + eps };
                insuf_progress = false;
            } else {
                insuf_progress = true;
            }
        } else {
            insuf_progress = false;
        }
        let (f_t, g_t) = eval_at(t)?;
        evals += 1;
        let gtd_t = dot(&g_t, d);
        ls_iter += 1;
        let probe = Probe {
            t,
            f: f_t,
            g: g_t,
            gtd: gtd_t,
        };
        if f_t > f0 + c1 * t * gtd0 || f_t >= bracket[low].f {
            bracket[high] = probe;
            (low, high) = order(&bracket);
        } else {
            if gtd_t.abs() <= -c2 * gtd0 {
                done = true;
            } else if gtd_t * (bracket[high].t - bracket[low].t) >= S::zero() {
                let l = Probe {
                    t: bracket[low].t,
                    f: bracket[low].f,
                    g: bracket[low].g.clone(),
                    gtd: bracket[low].gtd,
                };
                bracket[high] = l;
            }
            bracket[low] = probe;
        }
    }
    let best = bracket.swap_remove(low);
    Ok((best.f, best.g, best.t, evals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn adam_first_step() {
        let mut adam = Adam::<f64>::new(1, 1e-3, (0.9, 0.99), 1e-8);
        let mut w = [1.0];
        adam.step(&mut w, &[1.0]);
        assert!((w[0] - (1.0 - 1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut adam = Adam::<f64>::new(3, 1e-3, (0.9, 0.99), 1e-8);
        let mut w = [1.0, -2.0, 0.5];
        for _ in 0..100 {
            adam.step(&mut w, &[0.0; 3]);
        }
        assert_eq!(w, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_quadratic() {
        for_both::<f64>();
        for_both::<f32>();
        fn for_both<S: Real>() {
            let mut adam = Adam::<S>::new(1, 1e-3, (0.9, 0.99), 1e-8);
            let mut w = [S::one()];
            for _ in 0..2000 {
                let g = [w[0]];
                adam.step(&mut w, &g);
            }
            assert!(w[0] * w[0] / S::lit(2.0) < S::lit(0.01));
            assert!(w[0].abs() < S::lit(0.01));
        }
    }

    fn spd(seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        (0..5)
            .map(|i| {
                (0..5)
                    .map(|j| (0..5).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { 0.5 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn lbfgs_quadratic_converges() {
        for seed in 0..5 {
            let a = spd(seed);
            let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
                let g: Vec<f64> = (0..5).map(|i| (0..5).map(|j| a[i][j] * x[j]).sum()).collect();
                Ok((0.5 * dot(x, &g), g))
            };
            let mut opt = Lbfgs::new(LbfgsConfig {
                lr: 1.0,
                max_iter: 25,
                max_eval: 1000,
                tolerance_grad: 1e-14,
                tolerance_change: 0.0,
                ..LbfgsConfig::default()
            });
            let mut x = vec![1.0, -2.0, 0.5, 3.0, -1.0];
            let rep = opt.step(&mut x, &mut f).unwrap();
            let (_, g) = f(&x).unwrap();
            assert!(l2(&g) < 1e-8, "seed {seed}: {} after {} its", l2(&g), rep.iterations);
            assert!(rep.iterations <= 25);
            for w in rep.accepted.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn lbfgs_rosenbrock_within_ten_epochs() {
        let mut opt = Lbfgs::new(LbfgsConfig {
            lr: 1.0,
            ..LbfgsConfig::default()
        });
        let mut x = vec![-1.2, 1.0];
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let rep = opt.step(&mut x, &mut rosenbrock).unwrap();
            assert!(rep.final_loss() <= rep.initial_loss);
            assert!(rep.final_loss() <= last);
            last = rep.final_loss();
            for w in rep.accepted.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
        assert!(rosenbrock(&x).unwrap().0 < 1e-6, "{x:?}");
    }

    #[test]
    fn lbfgs_history_is_bounded_and_persists() {
        let mut opt = Lbfgs::new(LbfgsConfig {
            history: 3,
            max_iter: 4,
            ..LbfgsConfig::default()
        });
        let mut x = vec![-1.2, 1.0];
        opt.step(&mut x, &mut rosenbrock).unwrap();
        let h = opt.history_len();
        assert!(h > 0 && h <= 3);
        opt.step(&mut x, &mut rosenbrock).unwrap();
        assert!(opt.history_len() <= 3);
        assert!(opt.total_iterations() > 4);
    }

    #[test]
    fn lbfgs_respects_budget() {
        let mut opt = Lbfgs::new(LbfgsConfig::default());
        let mut x = vec![-1.2, 1.0];
        let mut calls = 0;
        let mut f = |x: &[f64]| {
            calls += 1;
            rosenbrock(x)
        };
        let rep = opt.step(&mut x, &mut f).unwrap();
        assert!(rep.iterations <= 50);
        assert_eq!(rep.evaluations, calls);
    }

    #[test]
    fn cubic_interpolation_finds_parabola_minimum() {
        // f = (x - 0.3)^2 sampled at 0 and 1
        let t = cubic_interpolate(0.0, 0.09, -0.6, 1.0, 0.49, 1.4, None);
        assert!((t - 0.3f64).abs() < 1e-12);
    }
}
