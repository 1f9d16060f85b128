//! Central-difference gradient checks of the full objective on small random
//! models. Shared by the gradient suite and the acceptance run.

#![allow(dead_code)]

use bootood::model::ModelState;
use bootood::numeric::{finite_diff_grad, relative_error, Matrix, SeededRng};
use bootood::objective::{step, PseudoInputs, RegTarget, StepWeights};
use bootood::pseudo_ood::{sample_plan, MixPlan};

pub const FD_STEP: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;

pub struct Instance {
    pub model: ModelState,
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub plan: MixPlan,
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    /// Copy of the classifier weights used inside `L_sep`, so perturbing the
    /// live weights during finite differences leaves that term fixed.
    pub frozen_w: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Ce,
    Cls,
    Reg(RegTarget),
    Sep,
    Total(RegTarget),
}

impl Term {
    pub const ALL: [Term; 7] = [
        Term::Ce,
        Term::Cls,
        Term::Reg(RegTarget::Raw),
        Term::Reg(RegTarget::Normalized),
        Term::Sep,
        Term::Total(RegTarget::Raw),
        Term::Total(RegTarget::Normalized),
    ];

    fn weights(self) -> StepWeights {
        let zero = StepWeights::CE_ONLY;
        match self {
            Term::Ce => zero,
            Term::Cls => StepWeights {
                lambda_cls: 1.0,
                w_ood: 1.0,
                ..zero
            },
            Term::Reg(_) => StepWeights {
                lambda_reg: 1.0,
                w_ood: 1.0,
                ..zero
            },
            Term::Sep => StepWeights { w_sep: 1.0, ..zero },
            Term::Total(_) => StepWeights {
                lambda_cls: 0.7,
                lambda_reg: 1.3,
                w_ood: 0.6,
                w_sep: 0.4,
            },
        }
    }

    fn reg_target(self) -> RegTarget {
        match self {
            Term::Reg(t) | Term::Total(t) => t,
            _ => RegTarget::Raw,
        }
    }
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut SeededRng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| scale * rng.normal()).collect()).unwrap()
}

/// A random instance with every dimension in `2..=8`.
pub fn random_instance(rng: &mut SeededRng) -> Instance {
    let dim = |rng: &mut SeededRng| 2 + rng.below(7);
    let d = dim(rng);
    let hidden = dim(rng);
    let m = dim(rng);
    let classes = dim(rng);
    let k = 1 + rng.below(6);
    let batch = dim(rng);
    let pseudo = 1 + rng.below(8);

    let model = ModelState::init(&[d, hidden, m], classes, k, rng).unwrap();
    let x = random_matrix(batch, d, 1.5, rng);
    let labels = (0..batch).map(|_| rng.below(classes)).collect();
    let plan = sample_plan(batch, pseudo, 0.5 + rng.uniform(), k, rng).unwrap();
    let center: Vec<f64> = (0..m).map(|_| 0.3 * rng.normal()).collect();
    let mut radii: Vec<f64> = (0..k).map(|_| 0.1 + 2.0 * rng.uniform()).collect();
    radii.sort_by(f64::total_cmp);
    let frozen_w = model.classifier.weight.clone();
    Instance {
        model,
        x,
        labels,
        plan,
        center,
        radii,
        frozen_w,
    }
}

impl Instance {
    fn pseudo(&self, target: RegTarget) -> PseudoInputs<'_> {
        PseudoInputs {
            plan: &self.plan,
            center: &self.center,
            shell_radii: &self.radii,
            reg_target: target,
            detached_weights: Some(&self.frozen_w),
        }
    }

    /// Value of `term` alone (cross-entropy subtracted out for auxiliary terms).
    fn value(&self, model: &ModelState, term: Term) -> f64 {
        let b = step(
            model,
            &self.x,
            &self.labels,
            Some(self.pseudo(term.reg_target())),
            term.weights(),
        )
        .unwrap()
        .breakdown;
        match term {
            Term::Ce | Term::Total(_) => b.total,
            _ => b.total - b.ce,
        }
    }

    /// Analytic gradient of `term` alone, flattened like [`ModelState::to_flat`].
    pub fn analytic(&self, term: Term) -> Vec<f64> {
        let run = |w: StepWeights| {
            step(
                &self.model,
                &self.x,
                &self.labels,
                Some(self.pseudo(term.reg_target())),
                w,
            )
            .unwrap()
            .grads
            .to_flat()
        };
        let full = run(term.weights());
        match term {
            Term::Ce | Term::Total(_) => full,
            _ => {
                let ce = run(StepWeights::CE_ONLY);
                full.iter().zip(&ce).map(|(a, b)| a - b).collect()
            }
        }
    }

    pub fn numeric(&self, term: Term) -> Vec<f64> {
        let mut probe = self.model.clone();
        finite_diff_grad(
            |flat| {
                probe.set_flat(flat).unwrap();
                self.value(&probe, term)
            },
            &self.model.to_flat(),
            FD_STEP,
        )
    }

    /// Worst relative error between analytic and central-difference gradients.
    pub fn max_rel_error(&self, term: Term) -> f64 {
        self.analytic(term)
            .iter()
            .zip(self.numeric(term))
            .map(|(a, n)| relative_error(*a, n))
            .fold(0.0, f64::max)
    }

    /// Index range of the classifier weights inside the flat parameter vector.
    pub fn classifier_range(&self) -> std::ops::Range<usize> {
        let start: usize = self
            .model
            .backbone
            .layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum();
        start..start + self.model.classifier.weight.as_slice().len()
    }
}
