//! Two-phase training loop.
//!
//! Phase 1 trains with cross-entropy alone until the features have collapsed.
//! Phase 2 adds the pseudo-OOD terms, ramping their weights up linearly from
//! the iteration at which phase 1 ended. Each iteration runs, in order: ID
//! forward pass, EMA geometry update, cross-entropy, pseudo-OOD mixing, the
//! auxiliary losses, and one two-group SGD step.

use std::io::Write;

use crate::data::LabeledDataset;
use crate::diagnostics::{nc_metrics, NcReport};
use crate::error::{Error, Result};
use crate::geometry::{GeometryState, ShellSpacing};
use crate::losses::{LossBreakdown, WarmupSchedule};
use crate::metrics::{argmax, id_accuracy};
use crate::model::{ModelState, Sgd, SgdGroup};
use crate::numeric::{norm2, Matrix, SeededRng};
use crate::objective::{step_from, Forward, PseudoInputs, RegTarget, StepWeights};
use crate::pseudo_ood::sample_plan;

/// RNG streams derived from the run seed. Keeping them apart means switching
/// the auxiliary losses on or off never changes initialization or batch order.
pub const STREAM_INIT: u64 = 0;
pub const STREAM_ORDER: u64 = 1;
pub const STREAM_PSEUDO: u64 = 2;

/// When phase 2 may begin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WarmupPolicy {
    /// After a fixed number of epochs.
    Fixed { epochs: usize },
    /// Once the training set is fit exactly and the collapse diagnostics are
    /// below their thresholds, or at `fallback_epochs` if the set is fit but the
    /// thresholds are never met. Never while any training sample is misclassified.
    Diagnostic {
        nc1_threshold: f64,
        cv_threshold: f64,
        fallback_epochs: usize,
    },
    /// Auxiliary losses ramp up from the first iteration.
    Disabled,
}

impl Default for WarmupPolicy {
    fn default() -> Self {
        WarmupPolicy::Diagnostic {
            nc1_threshold: 0.2,
            cv_threshold: 0.2,
            fallback_epochs: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Hidden widths of the backbone.
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub lr: f64,
    pub head_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub k: usize,
    pub alpha: f64,
    /// Pseudo-OOD samples per batch; `None` means one per ID sample.
    pub pseudo_per_batch: Option<usize>,
    pub spacing: ShellSpacing,
    pub beta_mu: f64,
    pub beta_r: f64,
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub lambda_ood_max: f64,
    pub lambda_sep_max: f64,
    /// Length of the phase-2 ramp as a fraction of all training iterations.
    pub ramp_fraction: f64,
    pub warmup: WarmupPolicy,
    pub reg_target: RegTarget,
    pub seed: u64,
    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 64,
            hidden: vec![64, 64],
            feature_dim: 16,
            lr: 0.05,
            head_lr: 0.5,
            momentum: 0.9,
            weight_decay: 5e-4,
            grad_clip: 10.0,
            k: 4,
            alpha: 1.0,
            pseudo_per_batch: None,
            spacing: ShellSpacing::Uniform,
            beta_mu: 0.95,
            beta_r: 0.95,
            lambda_cls: 1.0,
            lambda_reg: 1.0,
            lambda_ood_max: 0.5,
            lambda_sep_max: 0.1,
            ramp_fraction: 0.2,
            warmup: WarmupPolicy::default(),
            reg_target: RegTarget::Raw,
            seed: 0,
            log_interval: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return Err(Error::InvalidK(0));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.feature_dim == 0 || self.hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.log_interval == 0 {
            return bad("log_interval must be >= 1".into());
        }
        if self.pseudo_per_batch == Some(0) {
            return bad("pseudo_per_batch must be >= 1".into());
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::NonPositiveAlpha(self.alpha));
        }
        if !(self.grad_clip > 0.0) {
            return bad(format!("grad_clip must be positive, got {}", self.grad_clip));
        }
        for (name, v) in [("lr", self.lr), ("head_lr", self.head_lr)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("beta_mu", self.beta_mu),
            ("beta_r", self.beta_r),
            ("ramp_fraction", self.ramp_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        let weights = [
            ("weight_decay", self.weight_decay),
            ("lambda_cls", self.lambda_cls),
            ("lambda_reg", self.lambda_reg),
            ("lambda_ood_max", self.lambda_ood_max),
            ("lambda_sep_max", self.lambda_sep_max),
        ];
        for (name, v) in weights {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Backbone widths from input to feature dimension.
    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(input_dim);
        w.extend(&self.hidden);
        w.push(self.feature_dim);
        w
    }

    pub fn iterations_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    fn groups(&self) -> (SgdGroup, SgdGroup) {
        let main = SgdGroup {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        };
        let head = SgdGroup {
            lr: self.head_lr,
            ..main
        };
        (main, head)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }
}

/// Full-training-set diagnostics taken at the end of an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochDiagnostics {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_error: f64,
    pub mean_ce: f64,
    pub nc: Option<NcReport>,
}

/// Whether phase 1 is over, judged on the most recent epoch.
pub fn phase1_complete(history: &[EpochDiagnostics], policy: WarmupPolicy) -> bool {
    let Some(last) = history.last() else {
        return false;
    };
    match policy {
        WarmupPolicy::Disabled => true,
        WarmupPolicy::Fixed { epochs } => last.epoch >= epochs,
        WarmupPolicy::Diagnostic {
            nc1_threshold,
            cv_threshold,
            fallback_epochs,
        } => {
            if last.train_error > 0.0 {
                return false;
            }
            let collapsed = last
                .nc
                .is_some_and(|nc| nc.nc1 < nc1_threshold && nc.norm_cv < cv_threshold);
            collapsed || last.epoch >= fallback_epochs
        }
    }
}

/// One logged iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRow {
    /// 0-based global iteration.
    pub iteration: usize,
    /// 1-based epoch.
    pub epoch: usize,
    pub phase: Phase,
    pub losses: LossBreakdown,
    pub batch_acc: f64,
    pub mu_norm: f64,
    pub r_ref: f64,
    /// Collapse diagnostics of the most recent finished epoch.
    pub nc1: Option<f64>,
    pub norm_cv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainRecord {
    pub rows: Vec<TrainRow>,
    /// Diagnostics of the untrained model, tagged epoch 0.
    pub initial: Option<EpochDiagnostics>,
    pub epochs: Vec<EpochDiagnostics>,
    /// First iteration of phase 2, if it began.
    pub phase2_start: Option<usize>,
    /// Epoch after which phase 1 ended.
    pub phase1_epochs: Option<usize>,
}

pub const RECORD_COLUMNS: [&str; 16] = [
    "iteration",
    "epoch",
    "phase",
    "ce",
    "cls",
    "reg",
    "sep",
    "total",
    "w_ood",
    "w_sep",
    "batch_acc",
    "mu_norm",
    "r_ref",
    "nc1",
    "norm_cv",
    "lr",
];

impl TrainRecord {
    pub fn write_csv<W: Write>(&self, out: W, lr: f64) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RECORD_COLUMNS)?;
        for r in &self.rows {
            let l = r.losses;
            w.write_record([
                r.iteration.to_string(),
                r.epoch.to_string(),
                r.phase.number().to_string(),
                l.ce.to_string(),
                l.cls.to_string(),
                l.reg.to_string(),
                l.sep.to_string(),
                l.total.to_string(),
                l.w_ood.to_string(),
                l.w_sep.to_string(),
                r.batch_acc.to_string(),
                r.mu_norm.to_string(),
                r.r_ref.to_string(),
                opt(r.nc1),
                opt(r.norm_cv),
                lr.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// NC1 after the first epoch and at the end of phase 1. `None` when
    /// phase 1 was skipped.
    pub fn nc1_over_phase1(&self) -> Option<(f64, f64)> {
        let first = self.epochs.first()?.nc?.nc1;
        let end = self.phase1_epochs.unwrap_or(self.epochs.len());
        let last = self.epochs.get(end.checked_sub(1)?)?.nc?.nc1;
        Some((first, last))
    }
}

/// Read-only view handed to the observer after every parameter update.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub epoch: usize,
    pub phase: Phase,
    pub losses: LossBreakdown,
    pub model: &'a ModelState,
    pub geometry: &'a GeometryState,
}

/// Model and geometry when phase 2 began.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub model: ModelState,
    pub geometry: GeometryState,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ModelState,
    pub geometry: GeometryState,
    pub record: TrainRecord,
    pub phase_boundary: Option<Snapshot>,
}

pub fn train(config: &TrainConfig, dataset: &LabeledDataset) -> Result<TrainOutput> {
    train_with_observer(config, dataset, |_| {})
}

fn check_dataset(config: &TrainConfig, dataset: &LabeledDataset) -> Result<()> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if dataset.inputs.rows() != dataset.labels.len() {
        return Err(Error::dims(
            "dataset labels",
            dataset.inputs.rows(),
            dataset.labels.len(),
        ));
    }
    if let Some(&label) = dataset.labels.iter().find(|&&y| y >= dataset.classes) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: dataset.classes,
        });
    }
    Ok(())
}

/// Training-set error, mean cross-entropy and collapse diagnostics.
fn epoch_diagnostics(model: &ModelState, dataset: &LabeledDataset, epoch: usize) -> Result<EpochDiagnostics> {
    let features = model.backbone.features(&dataset.inputs)?;
    let logits = model.classifier.forward(&features)?;
    let acc = id_accuracy(&logits, &dataset.labels)?;
    let mean_ce = crate::losses::ce_loss(&logits, &dataset.labels)?.loss;
    // Degenerate scatter only happens in pathological runs; record it as missing.
    let nc = nc_metrics(&features, &dataset.labels, dataset.classes).ok();
    Ok(EpochDiagnostics {
        epoch,
        train_error: 1.0 - acc,
        mean_ce,
        nc,
    })
}

/// Non-finite intermediates mean the run diverged at iteration `t`.
fn diverged(e: Error, t: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::NonFiniteLoss { iteration: t },
        other => other,
    }
}

fn batch_accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    let hits = logits.iter_rows().zip(labels).filter(|(r, &y)| argmax(r) == y).count();
    hits as f64 / labels.len() as f64
}

/// Runs the two-phase procedure, calling `observer` after every update.
pub fn train_with_observer(
    config: &TrainConfig,
    dataset: &LabeledDataset,
    mut observer: impl FnMut(&IterationView<'_>),
) -> Result<TrainOutput> {
    check_dataset(config, dataset)?;
    let n = dataset.len();
    let widths = config.widths(dataset.inputs.cols());
    let mut init_rng = SeededRng::with_stream(config.seed, STREAM_INIT);
    let mut order_rng = SeededRng::with_stream(config.seed, STREAM_ORDER);
    let mut pseudo_rng = SeededRng::with_stream(config.seed, STREAM_PSEUDO);

    let mut model = ModelState::init(&widths, dataset.classes, config.k, &mut init_rng)?;
    let (main, head) = config.groups();
    let mut sgd = Sgd::new(&model, main, head);
    let mut geometry = GeometryState::new(
        config.feature_dim,
        config.k,
        config.spacing,
        config.beta_mu,
        config.beta_r,
    )?;

    let per_epoch = config.iterations_per_epoch(n);
    let total_iters = per_epoch * config.epochs;
    let ramp = (config.ramp_fraction * total_iters as f64).round() as usize;
    let schedules = |start: usize| {
        let sched = |max: f64| WarmupSchedule {
            start,
            end: start.saturating_add(ramp),
            max,
        };
        (sched(config.lambda_ood_max), sched(config.lambda_sep_max))
    };

    let mut record = TrainRecord {
        initial: Some(epoch_diagnostics(&model, dataset, 0)?),
        ..TrainRecord::default()
    };
    let mut phase = Phase::One;
    let (mut ood_sched, mut sep_sched) = (WarmupSchedule::OFF, WarmupSchedule::OFF);
    let mut boundary = None;
    if config.warmup == WarmupPolicy::Disabled {
        phase = Phase::Two;
        (ood_sched, sep_sched) = schedules(0);
        record.phase2_start = Some(0);
        record.phase1_epochs = Some(0);
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for epoch in 1..=config.epochs {
        order_rng.shuffle(&mut order);
        for batch_idx in order.chunks(config.batch_size) {
            let x = dataset.inputs.select_rows(batch_idx);
            let labels: Vec<usize> = batch_idx.iter().map(|&i| dataset.labels[i]).collect();

            let at = |e| diverged(e, t);
            let fwd = Forward::run(&model, &x).map_err(at)?;
            geometry.update(&fwd.features).map_err(at)?;

            let weights = StepWeights {
                lambda_cls: config.lambda_cls,
                lambda_reg: config.lambda_reg,
                w_ood: ood_sched.at(t),
                w_sep: sep_sched.at(t),
            };
            let m = config.pseudo_per_batch.unwrap_or(labels.len());
            let plan = if labels.len() >= 2 && !geometry.shells().is_empty() {
                Some(sample_plan(labels.len(), m, config.alpha, config.k, &mut pseudo_rng)?)
            } else {
                None
            };
            let shells = geometry.shells().to_vec();
            let pseudo = plan.as_ref().map(|plan| PseudoInputs {
                plan,
                center: &geometry.mu,
                shell_radii: &shells,
                reg_target: config.reg_target,
                detached_weights: None,
            });
            let out = step_from(&model, fwd, &labels, pseudo, weights).map_err(at)?;
            if !out.breakdown.total.is_finite() || !out.breakdown.ce.is_finite() {
                return Err(Error::NonFiniteLoss { iteration: t });
            }
            let mut grads = out.grads;
            if !grads.is_finite() {
                return Err(Error::NonFiniteLoss { iteration: t });
            }
            grads.clip_global_norm(config.grad_clip);
            sgd.step(&mut model, &grads)?;
            if !model.is_finite() {
                return Err(Error::NonFiniteLoss { iteration: t });
            }

            observer(&IterationView {
                iteration: t,
                epoch,
                phase,
                losses: out.breakdown,
                model: &model,
                geometry: &geometry,
            });
            if t % config.log_interval == 0 {
                let last_nc = record.epochs.last().and_then(|e| e.nc);
                record.rows.push(TrainRow {
                    iteration: t,
                    epoch,
                    phase,
                    losses: out.breakdown,
                    batch_acc: batch_accuracy(&out.logits, &labels),
                    mu_norm: norm2(&geometry.mu),
                    r_ref: geometry.r_ref,
                    nc1: last_nc.map(|nc| nc.nc1),
                    norm_cv: last_nc.map(|nc| nc.norm_cv),
                });
            }
            t += 1;
        }

        let diag = epoch_diagnostics(&model, dataset, epoch)?;
        log::debug!(
            "epoch {epoch}: train error {:.4}, ce {:.5}, nc1 {:?}",
            diag.train_error,
            diag.mean_ce,
            diag.nc.map(|nc| nc.nc1)
        );
        record.epochs.push(diag);
        if phase == Phase::One && phase1_complete(&record.epochs, config.warmup) {
            phase = Phase::Two;
            (ood_sched, sep_sched) = schedules(t);
            record.phase2_start = Some(t);
            record.phase1_epochs = Some(epoch);
            boundary = Some(Snapshot {
                iteration: t,
                model: model.clone(),
                geometry: geometry.clone(),
            });
            log::info!("phase 2 begins at iteration {t} after epoch {epoch}");
        }
    }

    Ok(TrainOutput {
        model,
        geometry,
        record,
        phase_boundary: boundary,
    })
}

/// Plain cross-entropy training with the same initialization, batch order,
/// optimizer and clipping as [`train`]. Returns the model and the per-iteration
/// cross-entropy.
pub fn train_ce_only(
    config: &TrainConfig,
    dataset: &LabeledDataset,
    mut observer: impl FnMut(usize, &ModelState),
) -> Result<(ModelState, Vec<f64>)> {
    check_dataset(config, dataset)?;
    let n = dataset.len();
    let widths = config.widths(dataset.inputs.cols());
    let mut init_rng = SeededRng::with_stream(config.seed, STREAM_INIT);
    let mut order_rng = SeededRng::with_stream(config.seed, STREAM_ORDER);
    let mut model = ModelState::init(&widths, dataset.classes, config.k, &mut init_rng)?;
    let (main, head) = config.groups();
    let mut sgd = Sgd::new(&model, main, head);

    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(config.iterations_per_epoch(n) * config.epochs);
    for _ in 0..config.epochs {
        order_rng.shuffle(&mut order);
        for batch_idx in order.chunks(config.batch_size) {
            let x = dataset.inputs.select_rows(batch_idx);
            let labels: Vec<usize> = batch_idx.iter().map(|&i| dataset.labels[i]).collect();
            let (features, cache) = model.backbone.forward(&x)?;
            let logits = model.classifier.forward(&features)?;
            let ce = crate::losses::ce_loss(&logits, &labels).map_err(|e| diverged(e, losses.len()))?;
            if !ce.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration: losses.len(),
                });
            }
            let (d_w, d_h) = model.classifier.backward(&features, &ce.grad);
            let (d_backbone, _) = model.backbone.backward(&cache, &d_h);
            let mut grads = model.zeros_like();
            grads.classifier.weight = d_w;
            grads.backbone = d_backbone;
            grads.clip_global_norm(config.grad_clip);
            sgd.step(&mut model, &grads)?;
            observer(losses.len(), &model);
            losses.push(ce.loss);
        }
    }
    Ok((model, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;
    use crate::diagnostics::NcReport;

    fn diag(epoch: usize, train_error: f64, nc1: f64, cv: f64) -> EpochDiagnostics {
        EpochDiagnostics {
            epoch,
            train_error,
            mean_ce: 0.0,
            nc: Some(NcReport {
                nc1,
                norm_cv: cv,
                etf_deviation: 0.0,
                train_error: Some(train_error),
            }),
        }
    }

    #[test]
    fn fixed_policy_fires_at_budget() {
        let p = WarmupPolicy::Fixed { epochs: 10 };
        assert!(!phase1_complete(&[diag(9, 0.5, 9.0, 9.0)], p));
        assert!(phase1_complete(&[diag(10, 0.5, 9.0, 9.0)], p));
        assert!(!phase1_complete(&[], p));
    }

    #[test]
    fn diagnostic_policy_needs_zero_error() {
        let p = WarmupPolicy::Diagnostic {
            nc1_threshold: 0.1,
            cv_threshold: 0.1,
            fallback_epochs: 5,
        };
        assert!(!phase1_complete(&[diag(1, 0.01, 0.0, 0.0)], p));
        assert!(!phase1_complete(&[diag(50, 0.01, 0.0, 0.0)], p));
        assert!(phase1_complete(&[diag(1, 0.0, 0.05, 0.05)], p));
        assert!(!phase1_complete(&[diag(1, 0.0, 0.5, 0.05)], p));
        assert!(!phase1_complete(&[diag(1, 0.0, 0.05, 0.5)], p));
        assert!(phase1_complete(&[diag(5, 0.0, 0.5, 0.5)], p));
    }

    fn small() -> (TrainConfig, LabeledDataset) {
        let data = make_blobs(3, 4, 20, 5.0, 0.5, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            hidden: vec![8],
            feature_dim: 6,
            log_interval: 1,
            warmup: WarmupPolicy::Fixed { epochs: 1 },
            ..TrainConfig::default()
        };
        (cfg, data)
    }

    #[test]
    fn one_row_per_iteration() {
        let (mut cfg, data) = small();
        cfg.epochs = 1;
        let out = train(&cfg, &data).unwrap();
        assert_eq!(out.record.rows.len(), 60usize.div_ceil(16));
        let iters: Vec<usize> = out.record.rows.iter().map(|r| r.iteration).collect();
        assert_eq!(iters, vec![0, 1, 2, 3]);
    }

    #[test]
    fn phases_are_monotone_and_deterministic() {
        let (cfg, data) = small();
        let a = train(&cfg, &data).unwrap();
        let b = train(&cfg, &data).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.record, b.record);
        assert_eq!(a.record.phase2_start, Some(4));
        assert!(a.phase_boundary.is_some());
        let phases: Vec<Phase> = a.record.rows.iter().map(|r| r.phase).collect();
        assert!(phases.windows(2).all(|w| w[0] <= w[1]));
        for r in &a.record.rows {
            if r.phase == Phase::One {
                assert_eq!((r.losses.w_ood, r.losses.w_sep), (0.0, 0.0));
            }
        }
        assert!(a.record.rows.last().unwrap().losses.w_ood > 0.0);
    }

    #[test]
    fn zero_aux_weights_match_ce_trainer() {
        let (mut cfg, data) = small();
        cfg.lambda_ood_max = 0.0;
        cfg.lambda_sep_max = 0.0;
        let out = train(&cfg, &data).unwrap();
        let (base, _) = train_ce_only(&cfg, &data, |_, _| {}).unwrap();
        assert_eq!(out.model, base);
    }

    #[test]
    fn invalid_inputs() {
        let (cfg, mut data) = small();
        assert!(matches!(
            train(&TrainConfig { k: 0, ..cfg.clone() }, &data),
            Err(Error::InvalidK(0))
        ));
        assert!(train(
            &TrainConfig {
                batch_size: 1,
                ..cfg.clone()
            },
            &data
        )
        .is_err());
        data.labels[0] = 7;
        assert!(matches!(
            train(&cfg, &data),
            Err(Error::LabelOutOfRange { label: 7, .. })
        ));
    }

    #[test]
    fn divergence_reports_iteration() {
        let (mut cfg, data) = small();
        cfg.lr = 1e300;
        cfg.grad_clip = 1e300;
        match train(&cfg, &data) {
            Err(Error::NonFiniteLoss { iteration }) => assert!(iteration < 10),
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }
}
