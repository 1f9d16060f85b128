//! Pseudo-OOD features by feature-level mixup of ID features.
//!
//! Each row mixes two distinct rows of the current ID batch with a
//! `Beta(α, α)` weight and is assigned a target shell drawn uniformly from
//! `0..K`. Shell indices are 0-based here.

use crate::error::{Error, Result};
use crate::numeric::{axpy, dot, norm2, sample_beta, Matrix, SeededRng, EPS_NORM};

/// The random choices behind a pseudo-OOD batch. Replaying a plan on the same
/// features reproduces the batch exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MixPlan {
    /// `(i, j)` source rows, `i != j`.
    pub sources: Vec<(usize, usize)>,
    /// Weight on `h_i`; `h_j` gets `1 − λ`.
    pub lambdas: Vec<f64>,
    /// Target shell per row, in `0..K`.
    pub shells: Vec<usize>,
}

impl MixPlan {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOodBatch {
    /// Unit-normalized mixtures `h̃`.
    pub normalized: Matrix,
    /// Mixtures before normalization.
    pub raw: Matrix,
    /// Norm of each raw row.
    pub raw_norms: Vec<f64>,
    pub plan: MixPlan,
}

/// Draws `m` rows of (pair, weight, shell) for a batch of `batch_size` features.
///
/// Per row the draws are, in order: `i`, `j`, `λ`, shell.
pub fn sample_plan(batch_size: usize, m: usize, alpha: f64, k: usize, rng: &mut SeededRng) -> Result<MixPlan> {
    if batch_size < 2 {
        return Err(Error::BatchTooSmall(batch_size));
    }
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    let mut plan = MixPlan {
        sources: Vec::with_capacity(m),
        lambdas: Vec::with_capacity(m),
        shells: Vec::with_capacity(m),
    };
    for _ in 0..m {
        let i = rng.below(batch_size);
        let mut j = rng.below(batch_size - 1);
        if j >= i {
            j += 1;
        }
        plan.sources.push((i, j));
        plan.lambdas.push(sample_beta(rng, alpha)?);
        plan.shells.push(rng.below(k));
    }
    Ok(plan)
}

/// Applies `plan` to `features`: `raw_k = λ h_i + (1 − λ) h_j`, `h̃_k = raw_k / ‖raw_k‖`.
pub fn mix(features: &Matrix, plan: &MixPlan) -> Result<PseudoOodBatch> {
    let m = features.cols();
    let mut raw = Matrix::zeros(plan.len(), m);
    for (k, (&(i, j), &lambda)) in plan.sources.iter().zip(&plan.lambdas).enumerate() {
        if i >= features.rows() || j >= features.rows() {
            return Err(Error::dims("pseudo-OOD source row", features.rows(), i.max(j) + 1));
        }
        let dst = raw.row_mut(k);
        axpy(lambda, features.row(i), dst);
        axpy(1.0 - lambda, features.row(j), dst);
    }
    let mut normalized = raw.clone();
    let mut raw_norms = Vec::with_capacity(plan.len());
    for k in 0..plan.len() {
        let n = norm2(raw.row(k));
        if n <= EPS_NORM || !n.is_finite() {
            return Err(Error::ZeroNorm { norm: n });
        }
        normalized.row_mut(k).iter_mut().for_each(|v| *v /= n);
        raw_norms.push(n);
    }
    Ok(PseudoOodBatch {
        normalized,
        raw,
        raw_norms,
        plan: plan.clone(),
    })
}

/// Samples a plan and applies it.
pub fn generate(features: &Matrix, m: usize, alpha: f64, k: usize, rng: &mut SeededRng) -> Result<PseudoOodBatch> {
    let plan = sample_plan(features.rows(), m, alpha, k, rng)?;
    mix(features, &plan)
}

impl PseudoOodBatch {
    /// Pulls a gradient w.r.t. `h̃` back to the raw mixtures:
    /// `∂/∂raw = (g − ⟨g, h̃⟩ h̃) / ‖raw‖`, added into `d_raw`.
    pub fn normalize_backward(&self, d_normalized: &Matrix, d_raw: &mut Matrix) {
        for k in 0..self.plan.len() {
            let u = self.normalized.row(k);
            let g = d_normalized.row(k);
            let proj = dot(g, u);
            let inv = 1.0 / self.raw_norms[k];
            for ((d, gi), ui) in d_raw.row_mut(k).iter_mut().zip(g).zip(u) {
                *d += (gi - proj * ui) * inv;
            }
        }
    }

    /// Pulls a gradient w.r.t. the raw mixtures back to the source features,
    /// adding into `d_features`.
    pub fn mix_backward(&self, d_raw: &Matrix, d_features: &mut Matrix) {
        for (k, (&(i, j), &lambda)) in self.plan.sources.iter().zip(&self.plan.lambdas).enumerate() {
            let g = d_raw.row(k);
            axpy(lambda, g, d_features.row_mut(i));
            axpy(1.0 - lambda, g, d_features.row_mut(j));
        }
    }
}
