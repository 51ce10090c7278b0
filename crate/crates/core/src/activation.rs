//! Scalar activations with their first three derivatives.

use crate::real::Real;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    /// Exact (erf-based) Gaussian error linear unit.
    #[default]
    Gelu,
    /// Identity; only used to test the derivative plumbing.
    Identity,
}

impl Activation {
    /// `(f, f', f'', f''')` at `x`.
    #[inline]
    pub fn jet<S: Real>(self, x: S) -> [S; 4] {
        match self {
            Activation::Gelu => gelu_jet3(x),
            Activation::Identity => [x, S::one(), S::zero(), S::zero()],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gelu" => Some(Activation::Gelu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Standard normal density and distribution function.
#[inline]
fn normal_pdf_cdf<S: Real>(x: S) -> (S, S) {
    let half = S::lit(0.5);
    let pdf = (-half * x * x).exp() * S::lit(std::f64::consts::FRAC_2_SQRT_PI * 0.5 * std::f64::consts::FRAC_1_SQRT_2);
    // erfc keeps full relative precision in the lower tail
    let cdf = half * (-x * S::lit(std::f64::consts::FRAC_1_SQRT_2)).erfc();
    (pdf, cdf)
}

/// GELU and its first two derivatives:
/// `x Phi(x)`, `Phi(x) + x phi(x)`, `phi(x) (2 - x^2)`.
#[inline]
pub fn gelu_jet<S: Real>(x: S) -> (S, S, S) {
    let [v, d1, d2, _] = gelu_jet3(x);
    (v, d1, d2)
}

/// GELU with derivatives up to third order; `f''' = phi(x) (x^3 - 4x)`.
#[inline]
pub fn gelu_jet3<S: Real>(x: S) -> [S; 4] {
    let (pdf, cdf) = normal_pdf_cdf(x);
    let x2 = x * x;
    [
        x * cdf,
        cdf + x * pdf,
        pdf * (S::lit(2.0) - x2),
        pdf * x * (x2 - S::lit(4.0)),
    ]
}

/// `log(1 + e^r)` evaluated as `max(r, 0) + log1p(e^{-|r|})`.
#[inline]
pub fn softplus<S: Real>(r: S) -> S {
    r.max(S::zero()) + (-r.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<S: Real>(r: S) -> S {
    if r >= S::zero() {
        S::one() / (S::one() + (-r).exp())
    } else {
        let e = r.exp();
        e / (S::one() + e)
    }
}

/// Softplus with derivatives up to third order.
#[inline]
pub fn softplus_jet3<S: Real>(r: S) -> [S; 4] {
    let s = sigmoid(r);
    let ds = s * (S::one() - s);
    [softplus(r), s, ds, ds * (S::one() - S::lit(2.0) * s)]
}
