//! Batched truncated-jet evaluation of the network with a reverse sweep.
//!
//! A batch of `B` points is propagated as `C` stacked channel blocks of `B`
//! rows each: the value block, one block per tangent direction and one block
//! per diagonal curvature (second derivative along one of the first tangents).
//! Every dense layer is then a single matrix product over `C * B` rows, and
//! the reverse sweep needs two more products per layer.

use crate::mlp::MlpParams;
use crate::real::Real;

/// Which derivative channels to carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelPlan {
    /// Input axes (0..4 for x, y, z, t) of the tangent channels.
    pub tangents: Vec<usize>,
    /// Curvature channels for the first `curvatures` tangents.
    pub curvatures: usize,
}

impl ChannelPlan {
    pub fn value_only() -> Self {
        Self {
            tangents: Vec::new(),
            curvatures: 0,
        }
    }

    /// Value, all four first derivatives and the three spatial curvatures.
    pub fn full() -> Self {
        Self {
            tangents: vec![0, 1, 2, 3],
            curvatures: 3,
        }
    }

    /// Value plus the derivative along one input axis.
    pub fn directional(axis: usize) -> Self {
        Self {
            tangents: vec![axis],
            curvatures: 0,
        }
    }

    pub fn channels(&self) -> usize {
        1 + self.tangents.len() + self.curvatures
    }
}

struct LayerTape<S> {
    /// Layer input, `C*B x n_in`.
    input: Vec<S>,
    /// Pre-activation, `C*B x n_out`.
    pre: Vec<S>,
    /// Activation derivatives at the value rows, `B x n_out` each.
    d1: Vec<S>,
    d2: Vec<S>,
    d3: Vec<S>,
}

/// Forward record of one batch, sufficient for the reverse sweep.
pub struct JetTape<S> {
    plan: ChannelPlan,
    batch: usize,
    layers: Vec<LayerTape<S>>,
    output: Vec<S>,
}

impl<S: Real> JetTape<S> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn plan(&self) -> &ChannelPlan {
        &self.plan
    }

    /// Raw output channel `c` of point `p`.
    #[inline]
    pub fn output(&self, channel: usize, p: usize) -> S {
        self.output[channel * self.batch + p]
    }

    pub fn outputs(&self) -> &[S] {
        &self.output
    }
}

fn gemm_nt<S: Real>(rows: usize, n_in: usize, n_out: usize, a: &[S], w: &[S], out: &mut [S]) {
    // out (rows x n_out) = a (rows x n_in) * w^T, w stored n_out x n_in
    S::gemm(
        rows,
        n_in,
        n_out,
        S::one(),
        a,
        (n_in as isize, 1),
        w,
        (1, n_in as isize),
        S::zero(),
        out,
        (n_out as isize, 1),
    );
}

/// Propagate `inputs` (normalized coordinates) through the network.
///
/// With `record = false` only the output is kept, which is what plain field
/// evaluation needs.
pub fn forward<S: Real>(params: &MlpParams<S>, inputs: &[[S; 4]], plan: &ChannelPlan, record: bool) -> JetTape<S> {
    let b = inputs.len();
    let m = plan.tangents.len();
    let s = plan.curvatures;
    let c = plan.channels();
    let rows = c * b;
    let views = params.layers();
    let values = params.values();
    assert_eq!(views[0].n_in, 4);
    assert!(s <= m && plan.tangents.iter().all(|&a| a < 4));

    let mut act = vec![S::zero(); rows * 4];
    for (p, x) in inputs.iter().enumerate() {
        act[p * 4..p * 4 + 4].copy_from_slice(x);
    }
    for (j, &axis) in plan.tangents.iter().enumerate() {
        for p in 0..b {
            act[((1 + j) * b + p) * 4 + axis] = S::one();
        }
    }

    let mut layers = Vec::with_capacity(if record { views.len() } else { 0 });
    let last = views.len() - 1;
    for (l, view) in views.iter().enumerate() {
        let (n_in, n_out) = (view.n_in, view.n_out);
        let w = &values[view.weights..view.biases];
        let bias = &values[view.biases..view.biases + n_out];
        let mut pre = vec![S::zero(); rows * n_out];
        gemm_nt(rows, n_in, n_out, &act, w, &mut pre);
        for p in 0..b {
            for (z, &bb) in pre[p * n_out..(p + 1) * n_out].iter_mut().zip(bias) {
                *z += bb;
            }
        }
        if l == last {
            if record {
                layers.push(LayerTape {
                    input: act,
                    pre: Vec::new(),
                    d1: Vec::new(),
                    d2: Vec::new(),
                    d3: Vec::new(),
                });
            }
            return JetTape {
                plan: plan.clone(),
                batch: b,
                layers,
                output: pre,
            };
        }
        let mut post = vec![S::zero(); rows * n_out];
        let mut d1 = vec![S::zero(); b * n_out];
        let mut d2 = vec![S::zero(); b * n_out];
        let mut d3 = vec![S::zero(); b * n_out];
        for i in 0..b * n_out {
            let [g, g1, g2, g3] = params.activation.jet(pre[i]);
            post[i] = g;
            d1[i] = g1;
            d2[i] = g2;
            d3[i] = g3;
        }
        for j in 0..m {
            let t = (1 + j) * b * n_out;
            for i in 0..b * n_out {
                post[t + i] = d1[i] * pre[t + i];
            }
        }
        for k in 0..s {
            let t = (1 + k) * b * n_out;
            let q = (1 + m + k) * b * n_out;
            for i in 0..b * n_out {
                let zt = pre[t + i];
                post[q + i] = d2[i] * zt * zt + d1[i] * pre[q + i];
            }
        }
        if record {
            layers.push(LayerTape {
                input: act,
                pre,
                d1,
                d2,
                d3,
            });
        }
        act = post;
    }
    unreachable!("network has an output layer")
}

/// Reverse sweep: accumulate `d(sum_c,p adjoint[c,p] * output[c,p]) / d(params)`
/// into `grad`.
pub fn backward<S: Real>(params: &MlpParams<S>, tape: &JetTape<S>, adjoint: &[S], grad: &mut [S]) {
    let b = tape.batch;
    let m = tape.plan.tangents.len();
    let s = tape.plan.curvatures;
    let rows = tape.plan.channels() * b;
    assert_eq!(adjoint.len(), rows);
    assert_eq!(grad.len(), params.len());
    assert_eq!(tape.layers.len(), params.layers().len(), "tape was not recorded");
    let views = params.layers();
    let values = params.values();

    let mut bar_pre = adjoint.to_vec();
    for l in (0..views.len()).rev() {
        let view = views[l];
        let (n_in, n_out) = (view.n_in, view.n_out);
        let tape_l = &tape.layers[l];
        // W_bar += bar_pre^T * input
        S::gemm(
            n_out,
            rows,
            n_in,
            S::one(),
            &bar_pre,
            (1, n_out as isize),
            &tape_l.input,
            (n_in as isize, 1),
            S::one(),
            &mut grad[view.weights..view.biases],
            (n_in as isize, 1),
        );
        let gb = &mut grad[view.biases..view.biases + n_out];
        for p in 0..b {
            for (g, &v) in gb.iter_mut().zip(&bar_pre[p * n_out..(p + 1) * n_out]) {
                *g += v;
            }
        }
        if l == 0 {
            break;
        }
        // bar_post = bar_pre * W, then back through the previous activation
        let mut bar_post = vec![S::zero(); rows * n_in];
        S::gemm(
            rows,
            n_out,
            n_in,
            S::one(),
            &bar_pre,
            (n_out as isize, 1),
            &values[view.weights..view.biases],
            (n_in as isize, 1),
            S::zero(),
            &mut bar_post,
            (n_in as isize, 1),
        );
        let prev = &tape.layers[l - 1];
        let n = n_in;
        let bn = b * n;
        let (d1, d2, d3, pre) = (&prev.d1, &prev.d2, &prev.d3, &prev.pre);
        let mut bar = vec![S::zero(); rows * n];
        for i in 0..bn {
            bar[i] = d1[i] * bar_post[i];
        }
        for j in 0..m {
            let t = (1 + j) * bn;
            for i in 0..bn {
                bar[i] += d2[i] * pre[t + i] * bar_post[t + i];
                bar[t + i] = d1[i] * bar_post[t + i];
            }
        }
        for k in 0..s {
            let t = (1 + k) * bn;
            let q = (1 + m + k) * bn;
            for i in 0..bn {
                let zt = pre[t + i];
                let hq = bar_post[q + i];
                bar[i] += (d3[i] * zt * zt + d2[i] * pre[q + i]) * hq;
                bar[t + i] += S::lit(2.0) * d2[i] * zt * hq;
                bar[q + i] = d1[i] * hq;
            }
        }
        bar_pre = bar;
    }
}
