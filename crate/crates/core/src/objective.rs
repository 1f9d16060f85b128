//! One training step's forward and backward pass through the whole objective.
//!
//! Gradient flow:
//! - `L_CE` reaches the classifier and the backbone.
//! - `L_cls` reaches the radius head and, through `h̃` and the mixup, the backbone.
//! - `L_reg` reaches the backbone through the mixture.
//! - `L_sep` reaches the backbone through `h̃` only. The classifier weights
//!   enter it as constants.
//!
//! The EMA center and shell radii are statistics, not parameters, and carry no
//! gradient.

use crate::error::Result;
use crate::losses::{ce_loss, combine, radius_cls_loss, radius_reg_loss, separation_loss, Components, LossBreakdown};
use crate::model::{ModelState, RadiusHead, TapeCache};
use crate::numeric::Matrix;
use crate::pseudo_ood::{mix, MixPlan, PseudoOodBatch};

/// Which vector the radius regression measures against `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegTarget {
    /// The mixture before normalization, `‖raw − μ‖`.
    #[default]
    Raw,
    /// The unit-normalized mixture, `‖h̃ − μ‖`.
    Normalized,
}

/// Effective weights for one iteration (schedules already evaluated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepWeights {
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub w_ood: f64,
    pub w_sep: f64,
}

impl StepWeights {
    pub const CE_ONLY: StepWeights = StepWeights {
        lambda_cls: 0.0,
        lambda_reg: 0.0,
        w_ood: 0.0,
        w_sep: 0.0,
    };
}

/// Pseudo-OOD side of the objective.
#[derive(Debug, Clone, Copy)]
pub struct PseudoInputs<'a> {
    pub plan: &'a MixPlan,
    pub center: &'a [f64],
    /// Radius for each 0-based shell index.
    pub shell_radii: &'a [f64],
    pub reg_target: RegTarget,
    /// Classifier weights used inside `L_sep`. `None` uses the model's own
    /// weights; either way no gradient flows to them. Gradient checks pass a
    /// frozen copy here so that perturbing the model's `W` leaves `L_sep` fixed.
    pub detached_weights: Option<&'a Matrix>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub breakdown: LossBreakdown,
    pub grads: ModelState,
    pub features: Matrix,
    pub logits: Matrix,
    pub pseudo: Option<PseudoOodBatch>,
    /// Rows where the regression distance was zero.
    pub degenerate: usize,
}

/// Forward and backward for one batch.
///
/// Auxiliary terms are always evaluated when `pseudo` is given so that they
/// can be logged, but their gradients are accumulated only when their
/// effective weight is non-zero. With zero auxiliary weights the gradient is
/// therefore exactly the cross-entropy gradient.
pub fn step(
    model: &ModelState,
    x: &Matrix,
    labels: &[usize],
    pseudo: Option<PseudoInputs<'_>>,
    weights: StepWeights,
) -> Result<StepOutput> {
    let fwd = Forward::run(model, x)?;
    step_from(model, fwd, labels, pseudo, weights)
}

/// Backbone forward pass kept for a later [`step_from`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub features: Matrix,
    cache: TapeCache,
}

impl Forward {
    pub fn run(model: &ModelState, x: &Matrix) -> Result<Self> {
        let (features, cache) = model.backbone.forward(x)?;
        Ok(Self { features, cache })
    }
}

/// Loss and backward pass on top of an earlier forward pass.
pub fn step_from(
    model: &ModelState,
    fwd: Forward,
    labels: &[usize],
    pseudo: Option<PseudoInputs<'_>>,
    weights: StepWeights,
) -> Result<StepOutput> {
    let Forward { features, cache } = fwd;
    let logits = model.classifier.forward(&features)?;
    let ce = ce_loss(&logits, labels)?;
    let (d_w, mut d_h) = model.classifier.backward(&features, &ce.grad);

    let mut grads = model.zeros_like();
    grads.classifier.weight = d_w;

    let mut components = Components {
        ce: ce.loss,
        ..Components::default()
    };
    let mut degenerate = 0;
    let mut pseudo_batch = None;

    if let Some(p) = pseudo {
        let batch = mix(&features, p.plan)?;
        let m = features.cols();
        let mut d_norm = Matrix::zeros(batch.plan.len(), m);
        let mut d_raw = Matrix::zeros(batch.plan.len(), m);

        // Radius classification on h̃.
        let shell_logits = model.head.forward(&batch.normalized)?;
        let cls = radius_cls_loss(&shell_logits, &batch.plan.shells)?;
        components.cls = cls.loss;
        let cls_scale = weights.w_ood * weights.lambda_cls;
        if cls_scale != 0.0 {
            let scaled = cls.grad.map(|g| g * cls_scale);
            let (g_head, d_in) = model.head.backward(&batch.normalized, &scaled);
            grads.head = RadiusHead { layer: g_head.layer };
            add_into(&mut d_norm, &d_in);
        }

        // Radius regression.
        let targets: Vec<f64> = batch
            .plan
            .shells
            .iter()
            .map(|&s| {
                p.shell_radii.get(s).copied().ok_or(crate::Error::IndexOutOfRange {
                    index: s,
                    k: p.shell_radii.len(),
                })
            })
            .collect::<Result<_>>()?;
        let reg_input = match p.reg_target {
            RegTarget::Raw => &batch.raw,
            RegTarget::Normalized => &batch.normalized,
        };
        let reg = radius_reg_loss(reg_input, p.center, &targets)?;
        components.reg = reg.loss;
        degenerate = reg.degenerate;
        let reg_scale = weights.w_ood * weights.lambda_reg;
        if reg_scale != 0.0 {
            let scaled = reg.grad.map(|g| g * reg_scale);
            match p.reg_target {
                RegTarget::Raw => add_into(&mut d_raw, &scaled),
                RegTarget::Normalized => add_into(&mut d_norm, &scaled),
            }
        }

        // Angular separation against constant class weights.
        let w = p.detached_weights.unwrap_or(&model.classifier.weight);
        let sep = separation_loss(&batch.normalized, w)?;
        components.sep = sep.loss;
        if weights.w_sep != 0.0 {
            let scaled = sep.grad.map(|g| g * weights.w_sep);
            add_into(&mut d_norm, &scaled);
        }

        if cls_scale != 0.0 || reg_scale != 0.0 || weights.w_sep != 0.0 {
            batch.normalize_backward(&d_norm, &mut d_raw);
            batch.mix_backward(&d_raw, &mut d_h);
        }
        pseudo_batch = Some(batch);
    }

    let (g_backbone, _) = model.backbone.backward(&cache, &d_h);
    grads.backbone = g_backbone;

    let breakdown = combine(
        components,
        weights.lambda_cls,
        weights.lambda_reg,
        weights.w_ood,
        weights.w_sep,
    );
    Ok(StepOutput {
        breakdown,
        grads,
        features,
        logits,
        pseudo: pseudo_batch,
        degenerate,
    })
}

fn add_into(dst: &mut Matrix, src: &Matrix) {
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += s;
    }
}
