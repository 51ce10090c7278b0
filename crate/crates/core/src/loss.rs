//! Category losses, the normalized weighted total and adaptive weights.

use crate::error::{Error, Result};
use crate::real::pairwise_sum;

/// Weights of the boundary and PDE terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_bc: f64,
    pub w_pde: f64,
    /// Memory of the update; `0` jumps straight to the balanced weights.
    pub alpha: f64,
    /// Epochs between updates.
    pub period: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_bc: 1.0,
            w_pde: 1.0,
            alpha: 0.9,
            period: 1000,
        }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, period: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::invariant("training.weight_alpha", alpha, "0 <= alpha < 1"));
        }
        if period == 0 {
            return Err(Error::invariant("training.weight_period", 0, "period > 0"));
        }
        Ok(Self {
            alpha,
            period,
            ..Self::default()
        })
    }

    /// Whether the 1-based `epoch` is an update epoch.
    pub fn is_update_epoch(&self, epoch: usize) -> bool {
        epoch > 0 && epoch.is_multiple_of(self.period)
    }

    /// `w_bc / (w_bc + w_pde)` and `w_pde / (w_bc + w_pde)`.
    pub fn fractions(&self) -> (f64, f64) {
        let s = self.w_bc + self.w_pde;
        (self.w_bc / s, self.w_pde / s)
    }
}

/// Loss values of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub l_bc: f64,
    pub l_pde: f64,
    pub l_total: f64,
    /// Parameter-gradient 2-norms of the unweighted terms, when computed.
    pub grad_norm_bc: Option<f64>,
    pub grad_norm_pde: Option<f64>,
}

/// Mean squared residuals: boundary (Robin and Dirichlet pooled) and PDE.
pub fn category_losses(bc: &[f64], pde: &[f64]) -> Result<(f64, f64)> {
    if bc.is_empty() {
        return Err(Error::EmptyCategory("boundary"));
    }
    if pde.is_empty() {
        return Err(Error::EmptyCategory("domain"));
    }
    let ms = |r: &[f64]| pairwise_sum(&r.iter().map(|v| v * v).collect::<Vec<_>>()) / r.len() as f64;
    Ok((ms(bc), ms(pde)))
}

/// `(w_bc L_bc + w_pde L_pde) / (w_bc + w_pde)`.
pub fn total_loss(l_bc: f64, l_pde: f64, w: &LossWeights) -> f64 {
    (w.w_bc * l_bc + w.w_pde * l_pde) / (w.w_bc + w.w_pde)
}

/// Balanced weights `sum_i |grad L_i| / |grad L_x|` blended into the current
/// ones with memory `alpha`. A zero norm leaves that weight unchanged.
pub fn update_adaptive_weights(grad_norm_bc: f64, grad_norm_pde: f64, w: &LossWeights) -> LossWeights {
    let sum = grad_norm_bc + grad_norm_pde;
    let blend = |old: f64, norm: f64, name: &str| {
        if norm > 0.0 && norm.is_finite() {
            w.alpha * old + (1.0 - w.alpha) * (sum / norm)
        } else {
            log::warn!("gradient norm of the {name} loss is {norm}; weight kept");
            old
        }
    };
    LossWeights {
        w_bc: blend(w.w_bc, grad_norm_bc, "boundary"),
        w_pde: blend(w.w_pde, grad_norm_pde, "PDE"),
        ..*w
    }
}
