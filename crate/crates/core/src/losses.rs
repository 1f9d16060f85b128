//! Loss terms and their gradients.
//!
//! - cross-entropy on ID logits,
//! - radius classification: cross-entropy of the radius head against the target shell,
//! - radius regression: squared gap between a feature's distance to `μ` and its shell radius,
//! - angular separation: mean `|cos|` between pseudo-OOD features and class weights,
//!
//! and the scheduled combination
//! `L = L_CE + λ_ood(t)·(λ_cls·L_cls + λ_reg·L_reg) + λ_sep(t)·L_sep`.
//!
//! Every function returns the mean loss over rows together with the gradient
//! of that mean w.r.t. its matrix input.

use crate::error::{Error, Result};
use crate::numeric::{distance, dot, norm2, softmax_unchecked, Matrix, EPS_NORM};

/// A scalar loss and its gradient w.r.t. the input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Matrix,
}

fn softmax_xent(logits: &Matrix, targets: &[usize]) -> LossGrad {
    let n = logits.rows();
    let mut grad = Matrix::zeros(n, logits.cols());
    if n == 0 {
        return LossGrad { loss: 0.0, grad };
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    for (r, &y) in targets.iter().enumerate() {
        let z = logits.row(r);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[y];
        let p = softmax_unchecked(z);
        let g = grad.row_mut(r);
        for (gi, pi) in g.iter_mut().zip(&p) {
            *gi = pi * inv;
        }
        g[y] -= inv;
    }
    LossGrad { loss: loss * inv, grad }
}

/// Mean `−log softmax(z)[y]` over the batch. Labels are 0-based.
pub fn ce_loss(logits: &Matrix, labels: &[usize]) -> Result<LossGrad> {
    if labels.len() != logits.rows() {
        return Err(Error::dims("ce_loss labels", logits.rows(), labels.len()));
    }
    let classes = logits.cols();
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite {
            context: "ce_loss logits",
        });
    }
    Ok(softmax_xent(logits, labels))
}

/// Cross-entropy of the radius head's shell logits against the target shells (0-based).
pub fn radius_cls_loss(shell_logits: &Matrix, shells: &[usize]) -> Result<LossGrad> {
    if shells.len() != shell_logits.rows() {
        return Err(Error::dims("radius_cls_loss shells", shell_logits.rows(), shells.len()));
    }
    let k = shell_logits.cols();
    if let Some(&index) = shells.iter().find(|&&s| s >= k) {
        return Err(Error::IndexOutOfRange { index, k });
    }
    if !shell_logits.is_finite() {
        return Err(Error::NonFinite {
            context: "radius_cls_loss logits",
        });
    }
    Ok(softmax_xent(shell_logits, shells))
}

/// Radius regression result. `degenerate` counts rows that sat on `μ`, where
/// the distance is not differentiable and a zero subgradient was used.
#[derive(Debug, Clone, PartialEq)]
pub struct RegLoss {
    pub loss: f64,
    pub grad: Matrix,
    pub degenerate: usize,
}

/// Mean of `(‖f_k − μ‖ − ρ_k)²` over rows.
pub fn radius_reg_loss(features: &Matrix, mu: &[f64], targets: &[f64]) -> Result<RegLoss> {
    if mu.len() != features.cols() {
        return Err(Error::dims("radius_reg_loss center", features.cols(), mu.len()));
    }
    if targets.len() != features.rows() {
        return Err(Error::dims("radius_reg_loss targets", features.rows(), targets.len()));
    }
    if targets.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidConfig("shell targets must be positive and finite".into()));
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "radius_reg_loss center",
        });
    }
    let n = features.rows();
    let mut grad = Matrix::zeros(n, features.cols());
    if n == 0 {
        return Ok(RegLoss {
            loss: 0.0,
            grad,
            degenerate: 0,
        });
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut degenerate = 0;
    for (r, &rho) in targets.iter().enumerate() {
        let f = features.row(r);
        let d = distance(f, mu);
        let gap = d - rho;
        loss += gap * gap;
        if d <= EPS_NORM {
            degenerate += 1;
            continue;
        }
        let scale = 2.0 * gap * inv / d;
        for ((g, fi), mi) in grad.row_mut(r).iter_mut().zip(f).zip(mu) {
            *g = scale * (fi - mi);
        }
    }
    if degenerate > 0 {
        log::debug!("radius regression: {degenerate} feature(s) coincide with the center");
    }
    Ok(RegLoss {
        loss: loss * inv,
        grad,
        degenerate,
    })
}

/// Mean over rows and classes of `|⟨norm(h̃_k), norm(w_c)⟩|`.
///
/// The returned gradient is w.r.t. `h̃` only; the class weights are treated
/// as constants and no gradient is produced for them.
pub fn separation_loss(features: &Matrix, class_weights: &Matrix) -> Result<LossGrad> {
    if features.cols() != class_weights.cols() {
        return Err(Error::dims("separation_loss", class_weights.cols(), features.cols()));
    }
    let classes = class_weights.rows();
    let mut w_hat = class_weights.clone();
    for c in 0..classes {
        let n = norm2(w_hat.row(c));
        if n <= EPS_NORM {
            return Err(Error::ZeroNorm { norm: n });
        }
        w_hat.row_mut(c).iter_mut().for_each(|v| *v /= n);
    }
    let rows = features.rows();
    let mut grad = Matrix::zeros(rows, features.cols());
    if rows == 0 || classes == 0 {
        return Ok(LossGrad { loss: 0.0, grad });
    }
    let inv = 1.0 / (rows * classes) as f64;
    let mut loss = 0.0;
    for r in 0..rows {
        let u = features.row(r);
        let n = norm2(u);
        if n <= EPS_NORM {
            return Err(Error::ZeroNorm { norm: n });
        }
        let u_hat: Vec<f64> = u.iter().map(|v| v / n).collect();
        let g = grad.row_mut(r);
        for c in 0..classes {
            let w = w_hat.row(c);
            let cos = dot(&u_hat, w);
            loss += cos.abs();
            // d|cos|/du = sign(cos) (ŵ − cos û) / ‖u‖
            let s = if cos > 0.0 {
                1.0
            } else if cos < 0.0 {
                -1.0
            } else {
                0.0
            };
            if s == 0.0 {
                continue;
            }
            let k = s * inv / n;
            for ((gi, wi), ui) in g.iter_mut().zip(w).zip(&u_hat) {
                *gi += k * (wi - cos * ui);
            }
        }
    }
    Ok(LossGrad { loss: loss * inv, grad })
}

/// Linear ramp: 0 up to `start`, `max` from `end`, linear in between.
/// A zero-length ramp (`end <= start`) is a step at `start`.
pub fn warmup_weight(t: usize, start: usize, end: usize, max: f64) -> f64 {
    if end <= start {
        return if t >= start { max } else { 0.0 };
    }
    if t <= start {
        return 0.0;
    }
    if t >= end {
        return max;
    }
    max * (t - start) as f64 / (end - start) as f64
}

/// A linear warm-up schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupSchedule {
    pub start: usize,
    pub end: usize,
    pub max: f64,
}

impl WarmupSchedule {
    /// Never switches on.
    pub const OFF: WarmupSchedule = WarmupSchedule {
        start: usize::MAX,
        end: usize::MAX,
        max: 0.0,
    };

    pub fn at(&self, t: usize) -> f64 {
        warmup_weight(t, self.start, self.end, self.max)
    }
}

/// Weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub ood: WarmupSchedule,
    pub sep: WarmupSchedule,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_cls, self.lambda_reg, self.ood.max, self.sep.max];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be finite and >= 0: {all:?}"
            )));
        }
        Ok(())
    }
}

/// Per-iteration loss components and the effective schedule values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub ce: f64,
    pub cls: f64,
    pub reg: f64,
    pub sep: f64,
    pub total: f64,
    pub w_ood: f64,
    pub w_sep: f64,
}

/// Component losses of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Components {
    pub ce: f64,
    pub cls: f64,
    pub reg: f64,
    pub sep: f64,
}

/// Combines components at iteration `t`.
pub fn total_loss(c: Components, weights: &LossWeights, t: usize) -> LossBreakdown {
    let w_ood = weights.ood.at(t);
    let w_sep = weights.sep.at(t);
    combine(c, weights.lambda_cls, weights.lambda_reg, w_ood, w_sep)
}

pub(crate) fn combine(c: Components, lambda_cls: f64, lambda_reg: f64, w_ood: f64, w_sep: f64) -> LossBreakdown {
    let ood = lambda_cls * c.cls + lambda_reg * c.reg;
    LossBreakdown {
        ce: c.ce,
        cls: c.cls,
        reg: c.reg,
        sep: c.sep,
        total: c.ce + w_ood * ood + w_sep * c.sep,
        w_ood,
        w_sep,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff_grad, relative_error, SeededRng};
    use approx::assert_abs_diff_eq;

    fn random(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
    }

    fn check_grad(analytic: &Matrix, f: impl FnMut(&[f64]) -> f64, at: &Matrix) {
        let numeric = finite_diff_grad(f, at.as_slice(), 1e-6);
        for (a, b) in analytic.as_slice().iter().zip(&numeric) {
            assert!(relative_error(*a, *b) < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn ce_examples() {
        let z = Matrix::zeros(3, 4);
        assert_abs_diff_eq!(ce_loss(&z, &[0, 1, 3]).unwrap().loss, 4f64.ln(), epsilon = 1e-15);
        let confident = Matrix::from_rows(&[[1000.0, 0.0, 0.0], [0.0, 0.0, 1000.0]]).unwrap();
        assert!(ce_loss(&confident, &[0, 2]).unwrap().loss < 1e-9);
        assert!(matches!(
            ce_loss(&z, &[0, 4, 1]),
            Err(Error::LabelOutOfRange { label: 4, classes: 4 })
        ));
        assert!(ce_loss(&z, &[0]).is_err());
    }

    #[test]
    fn ce_gradient_is_softmax_minus_onehot() {
        let mut rng = SeededRng::new(1);
        for _ in 0..5 {
            let z = random(4, 5, &mut rng);
            let y = [0, 3, 4, 1];
            let lg = ce_loss(&z, &y).unwrap();
            for r in 0..4 {
                let p = crate::numeric::softmax(z.row(r)).unwrap();
                for c in 0..5 {
                    let onehot = if c == y[r] { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(lg.grad[(r, c)], (p[c] - onehot) / 4.0, epsilon = 1e-15);
                }
            }
            check_grad(
                &lg.grad,
                |v| ce_loss(&Matrix::from_vec(4, 5, v.to_vec()).unwrap(), &y).unwrap().loss,
                &z,
            );
        }
    }

    #[test]
    fn radius_cls_examples() {
        let mut rng = SeededRng::new(2);
        let single = random(5, 1, &mut rng);
        let lg = radius_cls_loss(&single, &[0; 5]).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad.as_slice().iter().all(|g| *g == 0.0));

        let uniform = Matrix::zeros(2, 4);
        assert_abs_diff_eq!(
            radius_cls_loss(&uniform, &[1, 3]).unwrap().loss,
            4f64.ln(),
            epsilon = 1e-15
        );
        assert!(matches!(
            radius_cls_loss(&uniform, &[1, 4]),
            Err(Error::IndexOutOfRange { index: 4, k: 4 })
        ));

        let z = random(3, 4, &mut rng);
        let s = [2, 0, 3];
        let lg = radius_cls_loss(&z, &s).unwrap();
        check_grad(
            &lg.grad,
            |v| {
                radius_cls_loss(&Matrix::from_vec(3, 4, v.to_vec()).unwrap(), &s)
                    .unwrap()
                    .loss
            },
            &z,
        );
    }

    #[test]
    fn radius_reg_examples() {
        let f = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let r = radius_reg_loss(&f, &[0.0, 0.0], &[5.0]).unwrap();
        assert_eq!(r.loss, 0.0);
        let r = radius_reg_loss(&f, &[0.0, 0.0], &[2.0]).unwrap();
        assert_eq!(r.loss, 9.0);

        let at_center = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let r = radius_reg_loss(&at_center, &[1.0, 1.0], &[0.5]).unwrap();
        assert_eq!(r.degenerate, 1);
        assert_eq!(r.loss, 0.25);
        assert!(r.grad.as_slice().iter().all(|g| *g == 0.0));

        assert!(radius_reg_loss(&f, &[0.0], &[1.0]).is_err());
        assert!(radius_reg_loss(&f, &[0.0, 0.0], &[0.0]).is_err());

        let mut rng = SeededRng::new(3);
        for _ in 0..5 {
            let x = random(4, 3, &mut rng);
            let mu = [0.1, -0.2, 0.3];
            let t = [0.5, 1.0, 1.5, 0.2];
            let r = radius_reg_loss(&x, &mu, &t).unwrap();
            check_grad(
                &r.grad,
                |v| {
                    radius_reg_loss(&Matrix::from_vec(4, 3, v.to_vec()).unwrap(), &mu, &t)
                        .unwrap()
                        .loss
                },
                &x,
            );
        }
    }

    #[test]
    fn separation_examples() {
        let w = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        let orth = Matrix::from_rows(&[[0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(separation_loss(&orth, &w).unwrap().loss, 0.0);

        let w1 = Matrix::from_rows(&[[0.6, 0.8]]).unwrap();
        let along = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_abs_diff_eq!(separation_loss(&along, &w1).unwrap().loss, 1.0, epsilon = 1e-15);

        let w2 = Matrix::identity(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let diag = Matrix::from_rows(&[[s, s]]).unwrap();
        assert_abs_diff_eq!(separation_loss(&diag, &w2).unwrap().loss, s, epsilon = 1e-15);

        assert!(matches!(
            separation_loss(&diag, &Matrix::zeros(2, 2)),
            Err(Error::ZeroNorm { .. })
        ));
        assert!(matches!(
            separation_loss(&Matrix::zeros(1, 2), &w2),
            Err(Error::ZeroNorm { .. })
        ));
    }

    #[test]
    fn separation_gradient_matches_oracle() {
        let mut rng = SeededRng::new(4);
        for _ in 0..5 {
            let h = random(3, 5, &mut rng);
            let w = random(4, 5, &mut rng);
            let lg = separation_loss(&h, &w).unwrap();
            check_grad(
                &lg.grad,
                |v| {
                    separation_loss(&Matrix::from_vec(3, 5, v.to_vec()).unwrap(), &w)
                        .unwrap()
                        .loss
                },
                &h,
            );
        }
    }

    #[test]
    fn warmup_examples() {
        assert_eq!(warmup_weight(10, 10, 20, 0.5), 0.0);
        assert_eq!(warmup_weight(3, 10, 20, 0.5), 0.0);
        assert_eq!(warmup_weight(20, 10, 20, 0.5), 0.5);
        assert_eq!(warmup_weight(99, 10, 20, 0.5), 0.5);
        assert_eq!(warmup_weight(15, 10, 20, 0.5), 0.25);
        assert_eq!(WarmupSchedule::OFF.at(1_000_000), 0.0);
        // Zero-length ramp steps at `start`.
        assert_eq!(warmup_weight(4, 5, 5, 1.0), 0.0);
        assert_eq!(warmup_weight(5, 5, 5, 1.0), 1.0);
        assert_eq!(warmup_weight(6, 5, 5, 1.0), 1.0);
    }

    #[test]
    fn total_examples() {
        let c = Components {
            ce: 1.0,
            cls: 1.0,
            reg: 1.0,
            sep: 1.0,
        };
        let ramp = |max| WarmupSchedule {
            start: 10,
            end: 20,
            max,
        };
        let w = LossWeights {
            lambda_cls: 1.0,
            lambda_reg: 1.0,
            ood: ramp(1.0),
            sep: ramp(1.0),
        };
        let before = total_loss(Components { ce: 0.7, ..c }, &w, 5);
        assert_eq!(before.total, 0.7);
        assert_eq!(total_loss(c, &w, 20).total, 4.0);

        let no_ood = LossWeights {
            lambda_cls: 0.0,
            lambda_reg: 0.0,
            ..w
        };
        let b = total_loss(
            Components {
                ce: 0.3,
                cls: 2.0,
                reg: 5.0,
                sep: 0.4,
            },
            &no_ood,
            15,
        );
        assert_eq!(b.total, 0.3 + 0.5 * 0.4);
        assert_eq!(b.w_ood, 0.5);
        assert_eq!(b.w_sep, 0.5);
    }
}
