//! Full-batch loss/gradient evaluation and the Adam + L-BFGS schedule.
//!
//! Collocation points are cut into fixed-size chunks per category. Each
//! chunk is pushed through the batched jet engine, its residuals and their
//! adjoints are formed in closed form, and one reverse sweep yields that
//! chunk's contribution to the parameter gradient. Chunk results are
//! combined by pairwise summation in chunk order, so the outcome does not
//! depend on how many threads evaluate the chunks.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::activation::softplus_jet3;
use crate::checkpoint::Checkpoint;
use crate::config::{normalize_point, RunConfig};
use crate::error::{Error, Result};
use crate::jet_batch::{backward, forward, ChannelPlan};
use crate::loss::{total_loss, LossWeights};
use crate::mlp::{init_params, MlpParams, OutputTransform};
use crate::optim::{Adam, Lbfgs, LbfgsConfig};
use crate::physics::{Face, GoldakSource, PhysicsConstants};
use crate::real::{pairwise_sum, Real};
use crate::sampling::CollocationSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Pde,
    Robin(Face),
    Dirichlet,
}

#[derive(Debug, Clone, Copy)]
struct Chunk {
    kind: Kind,
    /// Index of the point block in `TrainingProblem::blocks`.
    block: usize,
    start: usize,
    len: usize,
}

#[derive(Debug, Clone)]
struct Block<S> {
    kind: Kind,
    /// Normalized inputs.
    inputs: Vec<[S; 4]>,
    /// Heat input at each point (PDE blocks only).
    q: Vec<S>,
    /// Offset of this block's first point in its category, for error reports.
    offset: usize,
}

/// Collocation points prepared for repeated loss evaluation.
#[derive(Debug, Clone)]
pub struct TrainingProblem<S> {
    transform: OutputTransform<S>,
    consts: PhysicsConstants<S>,
    blocks: Vec<Block<S>>,
    chunks: Vec<Chunk>,
    n_bc: usize,
    n_pde: usize,
}

/// Loss values and per-term gradients at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<S> {
    pub l_bc: f64,
    pub l_pde: f64,
    /// Gradients of the unweighted mean-square terms.
    pub g_bc: Vec<S>,
    pub g_pde: Vec<S>,
}

impl<S: Real> Evaluation<S> {
    pub fn total(&self, w: &LossWeights) -> f64 {
        total_loss(self.l_bc, self.l_pde, w)
    }

    /// Gradient of the normalized weighted total.
    pub fn grad_total(&self, w: &LossWeights) -> Vec<S> {
        let s = w.w_bc + w.w_pde;
        let (a, b) = (S::lit(w.w_bc / s), S::lit(w.w_pde / s));
        self.g_bc.iter().zip(&self.g_pde).map(|(x, y)| a * *x + b * *y).collect()
    }

    pub fn grad_norms(&self) -> (f64, f64) {
        let n = |g: &[S]| g.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        (n(&self.g_bc), n(&self.g_pde))
    }
}

/// Per-point residuals of one evaluation (scaled as in the loss).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualBatch {
    pub pde: Vec<f64>,
    pub robin: Vec<(Face, f64)>,
    pub dirichlet: Vec<f64>,
}

struct ChunkOut<S> {
    sumsq: f64,
    grad: Vec<S>,
    residuals: Vec<f64>,
}

fn tree_sum<S: Real>(mut parts: Vec<Vec<S>>, n: usize) -> Vec<S> {
    if parts.is_empty() {
        return vec![S::zero(); n];
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += *y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().expect("one part left")
}

impl<S: Real> TrainingProblem<S> {
    /// Prepare the boundary and PDE points of `set`. Initial points are not
    /// part of the loss: the output transform satisfies the initial
    /// condition exactly.
    pub fn new(cfg: &RunConfig, set: &CollocationSet, chunk_size: usize) -> Result<Self> {
        if set.n_bc() == 0 {
            return Err(Error::EmptyCategory("boundary"));
        }
        if set.n_pde() == 0 {
            return Err(Error::EmptyCategory("domain"));
        }
        let chunk_size = chunk_size.max(1);
        let source = GoldakSource::new(&cfg.goldak, &cfg.domain);
        let norm = |pts: &[[f64; 4]]| -> Result<Vec<[S; 4]>> {
            pts.iter()
                .map(|p| normalize_point(*p, &cfg.domain).map(|n| n.map(S::lit)))
                .collect()
        };
        let mut blocks = Vec::new();
        let pde_pts: Vec<[f64; 4]> = set.domain.iter().chain(&set.source).copied().collect();
        blocks.push(Block {
            kind: Kind::Pde,
            inputs: norm(&pde_pts)?,
            q: pde_pts.iter().map(|p| S::lit(source.flux(*p))).collect(),
            offset: 0,
        });
        let mut offset = 0;
        for face in Face::ALL {
            let pts = set.face(face);
            let kind = if face == Face::ZMin { Kind::Dirichlet } else { Kind::Robin(face) };
            blocks.push(Block {
                kind,
                inputs: norm(pts)?,
                q: Vec::new(),
                offset,
            });
            offset += pts.len();
        }
        let mut chunks = Vec::new();
        for (b, block) in blocks.iter().enumerate() {
            let mut start = 0;
            while start < block.inputs.len() {
                let len = chunk_size.min(block.inputs.len() - start);
                chunks.push(Chunk {
                    kind: block.kind,
                    block: b,
                    start,
                    len,
                });
                start += len;
            }
        }
        Ok(Self {
            transform: OutputTransform::new(cfg.material.t_ambient, cfg.network.delta_t, &cfg.domain),
            consts: PhysicsConstants::new(&cfg.material, cfg.physics.radiation, cfg.residual_scales()),
            blocks,
            chunks,
            n_bc: set.n_bc(),
            n_pde: set.n_pde(),
        })
    }

    pub fn n_bc(&self) -> usize {
        self.n_bc
    }

    pub fn n_pde(&self) -> usize {
        self.n_pde
    }

    pub fn transform(&self) -> &OutputTransform<S> {
        &self.transform
    }

    pub fn constants(&self) -> &PhysicsConstants<S> {
        &self.consts
    }

    /// Losses and per-term gradients at `params`.
    pub fn evaluate(&self, params: &MlpParams<S>) -> Result<Evaluation<S>> {
        let outs = self.run(params, true, false)?;
        self.combine(params, outs)
    }

    /// Losses only.
    pub fn losses(&self, params: &MlpParams<S>) -> Result<(f64, f64)> {
        let outs = self.run(params, false, false)?;
        let e = self.combine(params, outs)?;
        Ok((e.l_bc, e.l_pde))
    }

    /// Scaled residual at every boundary and PDE point.
    pub fn residuals(&self, params: &MlpParams<S>) -> Result<ResidualBatch> {
        let outs = self.run(params, false, true)?;
        let mut batch = ResidualBatch::default();
        for (chunk, out) in self.chunks.iter().zip(outs) {
            match chunk.kind {
                Kind::Pde => batch.pde.extend(out.residuals),
                Kind::Robin(f) => batch.robin.extend(out.residuals.into_iter().map(|r| (f, r))),
                Kind::Dirichlet => batch.dirichlet.extend(out.residuals),
            }
        }
        Ok(batch)
    }

    fn run(&self, params: &MlpParams<S>, grad: bool, keep: bool) -> Result<Vec<ChunkOut<S>>> {
        self.chunks
            .par_iter()
            .map(|c| self.eval_chunk(params, c, grad, keep))
            .collect()
    }

    fn combine(&self, params: &MlpParams<S>, outs: Vec<ChunkOut<S>>) -> Result<Evaluation<S>> {
        let n = params.len();
        let (mut bc_sq, mut pde_sq) = (Vec::new(), Vec::new());
        let (mut bc_g, mut pde_g) = (Vec::new(), Vec::new());
        for (chunk, out) in self.chunks.iter().zip(outs) {
            if chunk.kind == Kind::Pde {
                pde_sq.push(out.sumsq);
                pde_g.push(out.grad);
            } else {
                bc_sq.push(out.sumsq);
                bc_g.push(out.grad);
            }
        }
        let scale = |g: Vec<S>, count: usize| -> Vec<S> {
            let inv = S::lit(1.0 / count as f64);
            g.into_iter().map(|v| v * inv).collect()
        };
        let with_grad = pde_g.first().is_some_and(|g| !g.is_empty());
        Ok(Evaluation {
            l_bc: pairwise_sum(&bc_sq) / self.n_bc as f64,
            l_pde: pairwise_sum(&pde_sq) / self.n_pde as f64,
            g_bc: if with_grad { scale(tree_sum(bc_g, n), self.n_bc) } else { Vec::new() },
            g_pde: if with_grad { scale(tree_sum(pde_g, n), self.n_pde) } else { Vec::new() },
        })
    }

    fn eval_chunk(&self, params: &MlpParams<S>, chunk: &Chunk, grad: bool, keep: bool) -> Result<ChunkOut<S>> {
        let block = &self.blocks[chunk.block];
        let inputs = &block.inputs[chunk.start..chunk.start + chunk.len];
        let plan = match chunk.kind {
            Kind::Pde => ChannelPlan::full(),
            Kind::Robin(face) => ChannelPlan::directional(face.axis()),
            Kind::Dirichlet => ChannelPlan::value_only(),
        };
        let tape = forward(params, inputs, &plan, grad);
        let b = chunk.len;
        let mut adjoint = vec![S::zero(); plan.channels() * b];
        let mut sumsq = 0.0;
        let mut residuals = Vec::with_capacity(if keep { b } else { 0 });
        let c = &self.consts;
        let tr = &self.transform;
        let sc = tr.input_scale();
        let two = S::lit(2.0);
        let half = S::lit(0.5);
        let dt = tr.delta_t;
        for p in 0..b {
            let tau = (inputs[p][3] + S::one()) * half;
            let a = tau * dt;
            let out = |ch: usize| tape.output(ch, p);
            let [sp, s1, s2, s3] = softplus_jet3(out(0));
            let r = match chunk.kind {
                Kind::Pde => {
                    let scale = S::lit(c.scales.pde);
                    let rt = out(4);
                    let t_t = (a * s1 * rt + half * dt * sp) * sc[3];
                    let mut lap = S::zero();
                    for k in 0..3 {
                        let rk = out(1 + k);
                        lap += a * (s2 * rk * rk + s1 * out(5 + k)) * sc[k] * sc[k];
                    }
                    let r = scale * (c.rho_cp * t_t - c.k * lap - block.q[chunk.start + p]);
                    if grad {
                        let bar_t = two * r * scale * c.rho_cp;
                        let bar_kk = -two * r * scale * c.k;
                        let mut v = bar_t * (a * s2 * rt + half * dt * s1) * sc[3];
                        for k in 0..3 {
                            let rk = out(1 + k);
                            let sk2 = sc[k] * sc[k];
                            v += bar_kk * a * (s3 * rk * rk + s2 * out(5 + k)) * sk2;
                            adjoint[(1 + k) * b + p] = bar_kk * a * two * s2 * rk * sk2;
                            adjoint[(5 + k) * b + p] = bar_kk * a * s1 * sk2;
                        }
                        adjoint[p] = v;
                        adjoint[4 * b + p] = bar_t * a * s1 * sc[3];
                    }
                    r
                }
                Kind::Robin(face) => {
                    let scale = S::lit(c.scales.robin);
                    let axis = face.axis();
                    let sign = S::lit(face.outward());
                    let temp = tr.t_ambient + a * sp;
                    let ra = out(1);
                    let t_n = a * s1 * ra * sc[axis] * sign;
                    let r = scale * (-c.k * t_n - c.conv_flux(temp) - c.rad_flux(temp));
                    if grad {
                        let bar_temp = -two * r * scale * c.loss_slope(temp);
                        let bar_n = -two * r * scale * c.k * sign * sc[axis];
                        adjoint[p] = bar_temp * a * s1 + bar_n * a * s2 * ra;
                        adjoint[b + p] = bar_n * a * s1;
                    }
                    r
                }
                Kind::Dirichlet => {
                    let scale = S::lit(c.scales.dirichlet);
                    let r = scale * a * sp;
                    if grad {
                        adjoint[p] = two * r * scale * a * s1;
                    }
                    r
                }
            };
            let r64 = r.as_f64();
            if !r64.is_finite() {
                let category = if chunk.kind == Kind::Pde { "pde" } else { "boundary" };
                return Err(Error::NonFinite {
                    point: block.offset + chunk.start + p,
                    category,
                });
            }
            sumsq += r64 * r64;
            if keep {
                residuals.push(r64);
            }
        }
        let mut g = Vec::new();
        if grad {
            g = vec![S::zero(); params.len()];
            backward(params, &tape, &adjoint, &mut g);
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    point: block.offset + chunk.start + i % chunk.len.max(1),
                    category: if chunk.kind == Kind::Pde { "pde" } else { "boundary" },
                });
            }
        }
        Ok(ChunkOut {
            sumsq,
            grad: g,
            residuals,
        })
    }
}

/// Gradient of the weighted total loss at `params`.
pub fn grad_total_loss<S: Real>(
    params: &MlpParams<S>,
    problem: &TrainingProblem<S>,
    weights: &LossWeights,
) -> Result<(f64, Vec<S>)> {
    let e = problem.evaluate(params)?;
    Ok((e.total(weights), e.grad_total(weights)))
}

/// Evaluate the temperature at physical points with a thread-count
/// independent chunking.
pub fn predict<S: Real>(
    params: &MlpParams<S>,
    transform: &OutputTransform<S>,
    points: &[[f64; 4]],
    chunk_size: usize,
) -> Result<Vec<f64>> {
    let ext = transform.extents.map(|v| v.as_f64());
    let chunks: Vec<&[[f64; 4]]> = points.chunks(chunk_size.max(1)).collect();
    let parts: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|pts| {
            let inputs: Vec<[S; 4]> = pts
                .iter()
                .map(|p| std::array::from_fn(|i| S::lit(2.0 * p[i] / ext[i] - 1.0)))
                .collect();
            let tape = forward(params, &inputs, &ChannelPlan::value_only(), false);
            inputs
                .iter()
                .enumerate()
                .map(|(i, x)| transform.value(tape.output(0, i), x[3]).as_f64())
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

/// Optimizer phase of a log line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Adam,
    Lbfgs,
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub l_bc: f64,
    pub l_pde: f64,
    pub l_total: f64,
    pub w_bc: f64,
    pub w_pde: f64,
}

impl EpochRecord {
    pub const HEADER: &'static str = "epoch\tL_bc\tL_pde\tL_total\tw_bc\tw_pde";

    /// Tab-separated line; floats in shortest round-trip form.
    pub fn line(&self) -> String {
        format!(
            "{}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
            self.epoch, self.l_bc, self.l_pde, self.l_total, self.w_bc, self.w_pde
        )
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// `(epoch, w_bc, w_pde)` after every adaptive update.
    pub weight_updates: Vec<(usize, f64, f64)>,
    pub adam_seconds: f64,
    pub lbfgs_seconds: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Side channels of a training run.
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Worker threads; `0` lets rayon decide. Results do not depend on it.
    pub threads: usize,
    pub log: Option<&'a mut (dyn Write + Send)>,
    pub checkpoint: Option<PathBuf>,
    /// Called after every epoch.
    pub progress: Option<&'a mut (dyn FnMut(&EpochRecord) + Send)>,
}

/// Initialize a network from `cfg` and train it on `set`.
pub fn train<S: Real>(cfg: &RunConfig, set: &CollocationSet, opts: TrainOptions<'_>) -> Result<(MlpParams<S>, TrainReport)> {
    let params = init_params::<S>(cfg.run.seed, &cfg.network.topology(), cfg.network.init_gain);
    train_from(cfg, set, params, opts)
}

/// Train starting from `params`.
pub fn train_from<S: Real>(
    cfg: &RunConfig,
    set: &CollocationSet,
    params: MlpParams<S>,
    opts: TrainOptions<'_>,
) -> Result<(MlpParams<S>, TrainReport)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Sampling(format!("thread pool: {e}")))?;
    pool.install(|| run_schedule(cfg, set, params, opts))
}

struct Trainer<'a, S> {
    problem: TrainingProblem<S>,
    report: TrainReport,
    log: Option<&'a mut (dyn Write + Send)>,
    progress: Option<&'a mut (dyn FnMut(&EpochRecord) + Send)>,
    checkpoint: Option<PathBuf>,
    last_good: MlpParams<S>,
}

impl<S: Real> Trainer<'_, S> {
    fn record(&mut self, rec: EpochRecord) -> Result<()> {
        if let Some(log) = self.log.as_mut() {
            writeln!(log, "{}", rec.line()).map_err(|e| Error::io("<training log>", e))?;
        }
        if let Some(cb) = self.progress.as_mut() {
            cb(&rec);
        }
        self.report.history.push(rec);
        Ok(())
    }

    fn save(&mut self, params: &MlpParams<S>) -> Result<()> {
        if let Some(path) = &self.checkpoint {
            Checkpoint {
                params: params.clone(),
                transform: self.problem.transform,
            }
            .save(path)?;
            self.report.checkpoint = Some(path.clone());
        }
        Ok(())
    }

    fn abort(&mut self, epoch: usize) -> Error {
        let good = self.last_good.clone();
        if let Err(e) = self.save(&good) {
            log::error!("could not write the last good checkpoint: {e}");
        }
        Error::NanAbort { epoch }
    }
}

fn run_schedule<S: Real>(
    cfg: &RunConfig,
    set: &CollocationSet,
    mut params: MlpParams<S>,
    opts: TrainOptions<'_>,
) -> Result<(MlpParams<S>, TrainReport)> {
    let tc = &cfg.training;
    let problem = TrainingProblem::new(cfg, set, tc.chunk_size)?;
    let mut weights = LossWeights::new(tc.weight_alpha, tc.weight_period)?;
    let mut tr = Trainer {
        problem,
        report: TrainReport::default(),
        log: opts.log,
        progress: opts.progress,
        checkpoint: opts.checkpoint,
        last_good: params.clone(),
    };
    if let Some(log) = tr.log.as_mut() {
        writeln!(log, "{}", EpochRecord::HEADER).map_err(|e| Error::io("<training log>", e))?;
    }

    let start = Instant::now();
    let mut adam = Adam::<S>::new(params.len(), tc.adam_lr, (tc.adam_beta1, tc.adam_beta2), tc.adam_eps);
    for epoch in 1..=tc.adam_epochs {
        let eval = match tr.problem.evaluate(&params) {
            Ok(e) => e,
            Err(Error::NonFinite { .. }) => return Err(tr.abort(epoch)),
            Err(e) => return Err(e),
        };
        if weights.is_update_epoch(epoch) {
            let (nb, np) = eval.grad_norms();
            weights = crate::loss::update_adaptive_weights(nb, np, &weights);
            tr.report.weight_updates.push((epoch, weights.w_bc, weights.w_pde));
        }
        let total = eval.total(&weights);
        if !total.is_finite() {
            return Err(tr.abort(epoch));
        }
        tr.last_good = params.clone();
        let g = eval.grad_total(&weights);
        adam.step(params.values_mut(), &g);
        tr.record(EpochRecord {
            epoch,
            phase: Phase::Adam,
            l_bc: eval.l_bc,
            l_pde: eval.l_pde,
            l_total: total,
            w_bc: weights.w_bc,
            w_pde: weights.w_pde,
        })?;
    }
    tr.report.adam_seconds = start.elapsed().as_secs_f64();
    if tc.adam_epochs > 0 {
        tr.save(&params)?;
    }

    let start = Instant::now();
    let mut lbfgs = Lbfgs::<S>::new(LbfgsConfig {
        lr: tc.lbfgs_lr,
        max_iter: tc.lbfgs_max_iter,
        max_eval: tc.lbfgs_max_eval,
        history: tc.lbfgs_history,
        tolerance_grad: tc.tolerance_grad,
        tolerance_change: tc.tolerance_change,
        ..LbfgsConfig::default()
    });
    for k in 1..=tc.lbfgs_epochs {
        let epoch = tc.adam_epochs + k;
        // remember the split losses of recent evaluations to report the accepted point
        let mut seen: Vec<(Vec<S>, f64, f64)> = Vec::new();
        let problem = &tr.problem;
        let topo = params.topology().to_vec();
        let activation = params.activation;
        let mut x = params.values().to_vec();
        let mut objective = |v: &[S]| -> Result<(S, Vec<S>)> {
            let mut p = MlpParams::from_values(&topo, activation, v.to_vec())?;
            p.gain = 0.0;
            let e = problem.evaluate(&p)?;
            let total = e.total(&weights);
            if seen.len() == 4 {
                seen.remove(0);
            }
            seen.push((v.to_vec(), e.l_bc, e.l_pde));
            Ok((S::lit(total), e.grad_total(&weights)))
        };
        let rep = match lbfgs.step(&mut x, &mut objective) {
            Ok(r) => r,
            Err(Error::NonFinite { .. }) => return Err(tr.abort(epoch)),
            Err(e) => return Err(e),
        };
        if !rep.final_loss().is_finite() {
            return Err(tr.abort(epoch));
        }
        tr.last_good = params.clone();
        params.values_mut().copy_from_slice(&x);
        let (l_bc, l_pde) = match seen.iter().rev().find(|(v, _, _)| v == &x) {
            Some((_, b, p)) => (*b, *p),
            None => tr.problem.losses(&params)?,
        };
        tr.record(EpochRecord {
            epoch,
            phase: Phase::Lbfgs,
            l_bc,
            l_pde,
            l_total: total_loss(l_bc, l_pde, &weights),
            w_bc: weights.w_bc,
            w_pde: weights.w_pde,
        })?;
    }
    tr.report.lbfgs_seconds = start.elapsed().as_secs_f64();
    tr.save(&params)?;
    Ok((params, tr.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::build_collocation_set;

    /// Tiny configuration: 4-8-8-1 network, ~100 points.
    fn tiny() -> (RunConfig, CollocationSet) {
        let mut cfg = RunConfig::desk_scale();
        cfg.network.depth = 2;
        cfg.network.width = 8;
        cfg.sampling.dt = 0.5;
        cfg.sampling.n_boundary = 60;
        cfg.sampling.n_domain = 40;
        cfg.sampling.n_source = 12;
        cfg.sampling.n_initial = 4;
        cfg.training.chunk_size = 7;
        let set = build_collocation_set(&cfg).unwrap();
        (cfg, set)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (cfg, set) = tiny();
        let problem = TrainingProblem::<f64>::new(&cfg, &set, cfg.training.chunk_size).unwrap();
        let params = init_params::<f64>(11, &cfg.network.topology(), cfg.network.init_gain);
        let w = LossWeights {
            w_bc: 0.7,
            w_pde: 2.3,
            ..LossWeights::default()
        };
        let (l0, g) = grad_total_loss(&params, &problem, &w).unwrap();
        assert!(l0 > 0.0);
        let mut worst: f64 = 0.0;
        for i in 0..params.len() {
            let v = params.values()[i];
            let h = 1e-4 * v.abs().max(1e-2);
            let mut a = params.clone();
            a.values_mut()[i] = v + h;
            let mut b = params.clone();
            b.values_mut()[i] = v - h;
            let fa = problem.evaluate(&a).unwrap().total(&w);
            let fb = problem.evaluate(&b).unwrap().total(&w);
            let fd = (fa - fb) / (2.0 * h);
            let scale = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
            worst = worst.max((fd - g[i]).abs() / fd.abs().max(1e-3 * scale));
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn doubling_scales_quadruples_loss() {
        let (mut cfg, set) = tiny();
        let params = init_params::<f64>(2, &cfg.network.topology(), 1.48);
        let base = TrainingProblem::<f64>::new(&cfg, &set, 16).unwrap().evaluate(&params).unwrap();
        let s = cfg.residual_scales();
        cfg.physics.pde_scale = Some(2.0 * s.pde);
        cfg.physics.bc_scale = Some(2.0 * s.robin);
        cfg.physics.dirichlet_scale = 2.0 * s.dirichlet;
        let doubled = TrainingProblem::<f64>::new(&cfg, &set, 16).unwrap().evaluate(&params).unwrap();
        assert!((doubled.l_bc / base.l_bc - 4.0).abs() < 1e-12);
        assert!((doubled.l_pde / base.l_pde - 4.0).abs() < 1e-12);
        for (a, b) in doubled.g_pde.iter().zip(&base.g_pde) {
            assert!((a - 4.0 * b).abs() <= 1e-9 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn ambient_field_without_source_is_a_minimum() {
        let (mut cfg, set) = tiny();
        cfg.goldak.t_on = 0.0;
        let problem = TrainingProblem::<f64>::new(&cfg, &set, 16).unwrap();
        // drive the softplus to ~0: zero weights and a very negative bias
        let mut params = MlpParams::<f64>::zeros(&cfg.network.topology());
        let n = params.len();
        params.values_mut()[n - 1] = -800.0;
        let e = problem.evaluate(&params).unwrap();
        assert_eq!(e.l_bc, 0.0);
        assert_eq!(e.l_pde, 0.0);
        let norm = e.grad_total(&LossWeights::default()).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-10);
    }

    #[test]
    fn losses_match_residual_batch() {
        let (cfg, set) = tiny();
        let problem = TrainingProblem::<f64>::new(&cfg, &set, 5).unwrap();
        let params = init_params::<f64>(4, &cfg.network.topology(), 1.48);
        let batch = problem.residuals(&params).unwrap();
        assert_eq!(batch.pde.len(), set.n_pde());
        assert_eq!(batch.robin.len() + batch.dirichlet.len(), set.n_bc());
        assert_eq!(batch.dirichlet.len(), set.face(Face::ZMin).len());
        assert!(batch.robin.iter().all(|(f, _)| *f != Face::ZMin));
        let bc: Vec<f64> = batch.robin.iter().map(|r| r.1).chain(batch.dirichlet.iter().copied()).collect();
        let (lb, lp) = crate::loss::category_losses(&bc, &batch.pde).unwrap();
        let e = problem.evaluate(&params).unwrap();
        assert!((lb / e.l_bc - 1.0).abs() < 1e-12);
        assert!((lp / e.l_pde - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chunking_does_not_change_losses_beyond_rounding() {
        let (cfg, set) = tiny();
        let params = init_params::<f64>(4, &cfg.network.topology(), 1.48);
        let a = TrainingProblem::<f64>::new(&cfg, &set, 3).unwrap().evaluate(&params).unwrap();
        let b = TrainingProblem::<f64>::new(&cfg, &set, 64).unwrap().evaluate(&params).unwrap();
        assert!((a.l_pde / b.l_pde - 1.0).abs() < 1e-12);
        assert!((a.l_bc / b.l_bc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_schedule_returns_initial_params() {
        let (mut cfg, set) = tiny();
        cfg.training.adam_epochs = 0;
        cfg.training.lbfgs_epochs = 0;
        let (p, rep) = train::<f64>(&cfg, &set, TrainOptions::default()).unwrap();
        assert_eq!(p, init_params::<f64>(cfg.run.seed, &cfg.network.topology(), cfg.network.init_gain));
        assert!(rep.history.is_empty());
    }

    #[test]
    fn short_run_logs_and_is_thread_independent() {
        let (mut cfg, set) = tiny();
        cfg.training.adam_epochs = 25;
        cfg.training.weight_period = 10;
        cfg.training.lbfgs_epochs = 2;
        let run = |threads: usize| {
            let mut log = Vec::new();
            let (p, rep) = train::<f64>(
                &cfg,
                &set,
                TrainOptions {
                    threads,
                    log: Some(&mut log),
                    ..TrainOptions::default()
                },
            )
            .unwrap();
            (p, rep, String::from_utf8(log).unwrap())
        };
        let (p1, rep, log1) = run(1);
        let (p3, _, log3) = run(3);
        assert_eq!(p1.values(), p3.values());
        assert_eq!(log1, log3);
        assert_eq!(rep.history.len(), 27);
        assert_eq!(log1.lines().count(), 28);
        assert_eq!(log1.lines().next(), Some(EpochRecord::HEADER));
        let epochs: Vec<usize> = rep.weight_updates.iter().map(|u| u.0).collect();
        assert_eq!(epochs, vec![10, 20]);
        let lb: Vec<f64> = rep.history[25..].iter().map(|r| r.l_total).collect();
        assert!(lb[1] <= lb[0]);
        assert!(lb[0] <= rep.history[24].l_total);
    }

    #[test]
    fn predict_enforces_initial_condition() {
        let (cfg, _) = tiny();
        let params = init_params::<f64>(9, &cfg.network.topology(), 1.48);
        let tr = OutputTransform::<f64>::new(25.0, 2000.0, &cfg.domain);
        let pts: Vec<[f64; 4]> = (0..50).map(|i| [i as f64 * 0.8, 3.0, 2.0, 0.0]).collect();
        assert!(predict(&params, &tr, &pts, 8).unwrap().iter().all(|&t| t == 25.0));
    }
}
