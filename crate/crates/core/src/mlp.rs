//! Fully connected surrogate `u(x, y, z, t)` and its single-point jets.
//!
//! Parameters live in one flat vector so the optimizers can treat them as a
//! plain slice. Layer `l` stores its `out x in` weight matrix row-major,
//! followed by its `out` biases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::activation::{softplus_jet3, Activation};
use crate::config::DomainSpec;
use crate::error::{Error, Result};
use crate::real::Real;

/// Weights, biases and layer sizes of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<S> {
    topology: Vec<usize>,
    pub activation: Activation,
    pub gain: f64,
    values: Vec<S>,
}

/// Offsets of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerView {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: usize,
    pub biases: usize,
}

pub fn parameter_count(topology: &[usize]) -> usize {
    topology.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<S: Real> MlpParams<S> {
    /// All-zero parameters.
    pub fn zeros(topology: &[usize]) -> Self {
        assert!(topology.len() >= 2, "need at least an input and an output layer");
        Self {
            topology: topology.to_vec(),
            activation: Activation::Gelu,
            gain: 0.0,
            values: vec![S::zero(); parameter_count(topology)],
        }
    }

    pub fn from_values(topology: &[usize], activation: Activation, values: Vec<S>) -> Result<Self> {
        if topology.len() < 2 || values.len() != parameter_count(topology) {
            return Err(Error::Checkpoint(format!(
                "topology {topology:?} needs {} parameters, got {}",
                parameter_count(topology),
                values.len()
            )));
        }
        Ok(Self {
            topology: topology.to_vec(),
            activation,
            gain: 0.0,
            values,
        })
    }

    pub fn topology(&self) -> &[usize] {
        &self.topology
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layers(&self) -> Vec<LayerView> {
        let mut offset = 0;
        self.topology
            .windows(2)
            .map(|w| {
                let view = LayerView {
                    n_in: w[0],
                    n_out: w[1],
                    weights: offset,
                    biases: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                view
            })
            .collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFiniteParameter(i)),
            None => Ok(()),
        }
    }

    /// Raw network output at a normalized input.
    pub fn forward(&self, input: [S; 4]) -> Result<S> {
        self.check_finite()?;
        Ok(self.forward_jet_unchecked(input).value)
    }

    /// Value, input gradient and diagonal spatial curvature of the raw output.
    pub fn forward_jet(&self, input: [S; 4]) -> Result<Jet<S>> {
        self.check_finite()?;
        Ok(self.forward_jet_unchecked(input))
    }

    fn forward_jet_unchecked(&self, input: [S; 4]) -> Jet<S> {
        assert_eq!(self.topology[0], 4, "network input must be (x, y, z, t)");
        // channel 0 value, 1..=4 tangents along each input, 5..=7 curvature along x, y, z
        let mut cur: Vec<[S; 8]> = (0..4)
            .map(|i| {
                let mut c = [S::zero(); 8];
                c[0] = input[i];
                c[1 + i] = S::one();
                c
            })
            .collect();
        let layers = self.layers();
        let last = layers.len() - 1;
        for (l, view) in layers.iter().enumerate() {
            let w = &self.values[view.weights..view.biases];
            let b = &self.values[view.biases..view.biases + view.n_out];
            let mut next = Vec::with_capacity(view.n_out);
            for o in 0..view.n_out {
                let mut z = [S::zero(); 8];
                z[0] = b[o];
                for (i, a) in cur.iter().enumerate() {
                    let wi = w[o * view.n_in + i];
                    for c in 0..8 {
                        z[c] += wi * a[c];
                    }
                }
                if l == last {
                    next.push(z);
                    continue;
                }
                let [g, g1, g2, _] = self.activation.jet(z[0]);
                let mut h = [S::zero(); 8];
                h[0] = g;
                for c in 1..5 {
                    h[c] = g1 * z[c];
                }
                for k in 0..3 {
                    h[5 + k] = g2 * z[1 + k] * z[1 + k] + g1 * z[5 + k];
                }
                next.push(h);
            }
            cur = next;
        }
        let out = cur[0];
        Jet {
            value: out[0],
            grad: [out[1], out[2], out[3], out[4]],
            curvature: [out[5], out[6], out[7]],
        }
    }
}

/// Scaled-normal initialisation: weights `~ N(0, (gain / sqrt(fan_in))^2)`,
/// biases zero. Draws are made in `f64` and rounded, so `f32` and `f64`
/// networks from the same seed agree to `f32` precision.
pub fn init_params<S: Real>(seed: u64, topology: &[usize], gain: f64) -> MlpParams<S> {
    let mut params = MlpParams::zeros(topology);
    params.gain = gain;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for view in params.layers() {
        let std = gain / (view.n_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        for w in &mut params.values[view.weights..view.biases] {
            *w = S::lit(normal.sample(&mut rng));
        }
    }
    params
}

/// Value, 4 first derivatives and the 3 diagonal spatial second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<S> {
    pub value: S,
    /// `d/dx, d/dy, d/dz, d/dt`.
    pub grad: [S; 4],
    /// `d2/dx2, d2/dy2, d2/dz2`.
    pub curvature: [S; 3],
}

impl<S: Real> Jet<S> {
    pub fn laplacian(&self) -> S {
        self.curvature[0] + self.curvature[1] + self.curvature[2]
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|v| v.is_finite())
            && self.curvature.iter().all(|v| v.is_finite())
    }
}

/// Maps the raw output to temperature:
/// `T = T0 + tau * dT * softplus(raw)` with `tau = t / t_end`.
///
/// At `tau = 0` this is exactly the uniform ambient field, and it never drops
/// below ambient for `tau >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputTransform<S> {
    pub t_ambient: S,
    pub delta_t: S,
    /// `(lx, ly, lz, t_end)`; converts normalized derivatives to physical ones.
    pub extents: [S; 4],
}

impl<S: Real> OutputTransform<S> {
    pub fn new(t_ambient: f64, delta_t: f64, domain: &DomainSpec) -> Self {
        Self {
            t_ambient: S::lit(t_ambient),
            delta_t: S::lit(delta_t),
            extents: domain.extents().map(S::lit),
        }
    }

    /// `d(normalized)/d(physical)` per input axis.
    pub fn input_scale(&self) -> [S; 4] {
        self.extents.map(|l| S::lit(2.0) / l)
    }

    /// Temperature value only.
    pub fn value(&self, raw: S, normalized_t: S) -> S {
        let tau = (normalized_t + S::one()) * S::lit(0.5);
        self.t_ambient + tau * self.delta_t * crate::activation::softplus(raw)
    }
}

/// Temperature jet in physical units (degC, mm, s).
pub type TemperatureJet<S> = Jet<S>;

/// Push a raw-output jet through the output transform and the input
/// normalization, yielding physical-unit derivatives of temperature.
pub fn apply_output_transform<S: Real>(
    raw: &Jet<S>,
    normalized_t: S,
    transform: &OutputTransform<S>,
) -> TemperatureJet<S> {
    let half = S::lit(0.5);
    let tau = (normalized_t + S::one()) * half;
    let [s0, s1, s2, _] = softplus_jet3(raw.value);
    let dt = transform.delta_t;
    let u = dt * s0;
    let scale = transform.input_scale();
    // normalized-coordinate derivatives of T = T0 + tau * u; tau depends on t only
    let mut grad = [S::zero(); 4];
    for j in 0..3 {
        grad[j] = tau * dt * s1 * raw.grad[j] * scale[j];
    }
    grad[3] = (tau * dt * s1 * raw.grad[3] + half * u) * scale[3];
    let mut curvature = [S::zero(); 3];
    for k in 0..3 {
        let u_kk = dt * (s2 * raw.grad[k] * raw.grad[k] + s1 * raw.curvature[k]);
        curvature[k] = tau * u_kk * scale[k] * scale[k];
    }
    Jet {
        value: transform.t_ambient + tau * u,
        grad,
        curvature,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const SMALL: [usize; 4] = [4, 8, 8, 1];

    fn random_input(rng: &mut ChaCha8Rng) -> [f64; 4] {
        std::array::from_fn(|_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn topology_and_count() {
        let p: MlpParams<f64> = init_params(0, &[4, 64, 64, 64, 64, 1], 1.48);
        assert_eq!(p.len(), 4 * 64 + 64 + 3 * (64 * 64 + 64) + 64 + 1);
        assert_eq!(p.layers().len(), 5);
    }

    #[test]
    fn init_statistics_and_determinism() {
        let topo = [4, 64, 64, 64, 64, 1];
        let p: MlpParams<f64> = init_params(42, &topo, 1.48);
        let q: MlpParams<f64> = init_params(42, &topo, 1.48);
        assert_eq!(p, q);
        let layers = p.layers();
        // the three 64 -> 64 layers give 12288 draws with fan_in 64
        let mut draws = Vec::new();
        for v in &layers[1..4] {
            draws.extend_from_slice(&p.values()[v.weights..v.biases]);
            assert!(p.values()[v.biases..v.biases + v.n_out].iter().all(|&b| b == 0.0));
        }
        assert!(draws.len() >= 4096);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let target = 1.48 / 8.0;
        assert!((var.sqrt() - target).abs() / target < 0.05, "std {}", var.sqrt());
        let other: MlpParams<f64> = init_params(43, &topo, 1.48);
        assert_ne!(p, other);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::<f64>::zeros(&SMALL);
        assert_eq!(p.forward([0.3, -0.2, 0.9, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn rigged_single_neuron() {
        let mut p = MlpParams::<f64>::zeros(&[4, 1, 1]);
        // hidden weight on x = 1, head weight = 1
        p.values_mut()[0] = 1.0;
        p.values_mut()[5] = 1.0;
        let out = p.forward([1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((out - 0.841_344_746_068_543).abs() < 1e-12);
    }

    #[test]
    fn non_finite_parameter_detected() {
        let mut p: MlpParams<f64> = init_params(1, &SMALL, 1.48);
        p.values_mut()[7] = f64::NAN;
        assert!(matches!(p.forward([0.0; 4]), Err(Error::NonFiniteParameter(7))));
    }

    #[test]
    fn forward_equals_jet_value_bitwise() {
        let p: MlpParams<f64> = init_params(3, &[4, 64, 64, 64, 64, 1], 1.48);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = random_input(&mut rng);
            assert_eq!(
                p.forward(x).unwrap().to_bits(),
                p.forward_jet(x).unwrap().value.to_bits()
            );
        }
    }

    #[test]
    fn identity_network_has_zero_curvature() {
        let mut p: MlpParams<f64> = init_params(9, &[4, 16, 16, 1], 1.48);
        p.activation = Activation::Identity;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let jet = p.forward_jet(random_input(&mut rng)).unwrap();
            assert_eq!(jet.curvature, [0.0; 3]);
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-3;
        for net in 0..20 {
            let p: MlpParams<f64> = init_params(net, &[4, 64, 64, 64, 64, 1], 1.48);
            for _ in 0..5 {
                let x = random_input(&mut rng);
                let jet = p.forward_jet(x).unwrap();
                let f = |d: usize, s: f64| {
                    let mut y = x;
                    y[d] += s;
                    p.forward(y).unwrap()
                };
                for d in 0..4 {
                    let fd = (f(d, h) - f(d, -h)) / (2.0 * h);
                    let rel = (fd - jet.grad[d]).abs() / jet.grad[d].abs().max(1e-2);
                    assert!(rel <= 1e-4, "grad {d}: {} vs {fd}", jet.grad[d]);
                }
                for d in 0..3 {
                    let fd = (f(d, h) - 2.0 * jet.value + f(d, -h)) / (h * h);
                    let rel = (fd - jet.curvature[d]).abs() / jet.curvature[d].abs().max(1e-1);
                    assert!(rel <= 1e-3, "curv {d}: {} vs {fd}", jet.curvature[d]);
                }
            }
        }
    }

    #[test]
    fn hard_initial_condition() {
        let domain = DomainSpec::default();
        let tr = OutputTransform::<f64>::new(25.0, 2000.0, &domain);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..10 {
            let p: MlpParams<f64> = init_params(seed, &SMALL, 1.48);
            for _ in 0..100 {
                let mut x = random_input(&mut rng);
                x[3] = -1.0;
                let jet = apply_output_transform(&p.forward_jet(x).unwrap(), x[3], &tr);
                assert_eq!(jet.value, 25.0);
            }
        }
    }

    #[test]
    fn softplus_floor_at_final_time() {
        let domain = DomainSpec::default();
        let tr = OutputTransform::<f64>::new(25.0, 2000.0, &domain);
        let raw = Jet {
            value: -60.0,
            grad: [0.0; 4],
            curvature: [0.0; 3],
        };
        let t = apply_output_transform(&raw, 1.0, &tr).value;
        assert!(t >= 25.0 && t - 25.0 < 1e-20);
    }

    #[test]
    fn transformed_time_derivative_matches_finite_differences() {
        let domain = DomainSpec::default();
        let tr = OutputTransform::<f64>::new(25.0, 2000.0, &domain);
        let p: MlpParams<f64> = init_params(8, &[4, 32, 32, 1], 1.48);
        let temp = |x: [f64; 4]| tr.value(p.forward(x).unwrap(), x[3]);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-4;
        for i in 0..50 {
            let mut x = random_input(&mut rng);
            x[3] = -1.0 + 2.0 * (i as f64 + 0.5) / 50.0;
            let jet = apply_output_transform(&p.forward_jet(x).unwrap(), x[3], &tr);
            for d in 0..4 {
                let mut a = x;
                let mut b = x;
                a[d] += h;
                b[d] -= h;
                // physical derivative = normalized derivative * 2 / L
                let fd = (temp(a) - temp(b)) / (2.0 * h) * tr.input_scale()[d];
                let rel = (fd - jet.grad[d]).abs() / jet.grad[d].abs().max(1e-6);
                assert!(rel <= 1e-4, "axis {d}: {} vs {fd}", jet.grad[d]);
            }
            for d in 0..3 {
                let mut a = x;
                let mut b = x;
                a[d] += h;
                b[d] -= h;
                let s = tr.input_scale()[d];
                let fd = (temp(a) - 2.0 * temp(x) + temp(b)) / (h * h) * s * s;
                let rel = (fd - jet.curvature[d]).abs() / jet.curvature[d].abs().max(1e-2);
                assert!(rel <= 1e-3, "curv {d}: {} vs {fd}", jet.curvature[d]);
            }
        }
    }
}
