//! Flat `key = value` run configuration.
//!
//! Every key is optional and falls back to the default listed in
//! [`RunConfig::default`]; unknown keys are rejected. The resolved
//! configuration, defaults included, is written next to every run's outputs.

use serde::{Deserialize, Serialize};

use crate::data::{BlobConfig, FarOodMode};
use crate::error::{Error, Result};
use crate::experiment::{EvalConfig, ExperimentConfig, OodConfig};
use crate::geometry::ShellSpacing;
use crate::objective::RegTarget;
use crate::trainer::{TrainConfig, WarmupPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for data generation and training.
    pub seed: u64,
    /// Seeds used by the ablation grid.
    pub seeds: Vec<u64>,

    // In-distribution blobs.
    pub classes: usize,
    pub input_dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub separation: f64,
    pub sigma: f64,

    // OOD sets.
    pub near_n: usize,
    pub near_jitter: f64,
    pub far_n: usize,
    /// `uniform-box` or `shifted-gaussian`.
    pub far_mode: String,
    /// Omit to use three times the blob extent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub far_scale: Option<f64>,

    // Model and optimizer.
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Omit to use ten times `lr`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_lr: Option<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,

    // Objective.
    pub k: usize,
    pub alpha: f64,
    /// Omit for one pseudo-OOD sample per ID sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudo_per_batch: Option<usize>,
    /// `uniform` or `cosine`.
    pub spacing: String,
    pub beta_mu: f64,
    pub beta_r: f64,
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub lambda_ood_max: f64,
    pub lambda_sep_max: f64,
    pub ramp_fraction: f64,
    /// `raw` or `normalized`.
    pub reg_target: String,

    // Phase-1 gate.
    /// `diagnostic`, `fixed` or `none`.
    pub warmup_policy: String,
    /// Budget for `fixed`, fallback for `diagnostic`.
    pub warmup_epochs: usize,
    pub nc1_threshold: f64,
    pub cv_threshold: f64,

    pub log_interval: usize,

    // Evaluation.
    /// Scorer tokens; `auto` picks one on validation data.
    pub scorers: Vec<String>,
    pub temperature: f64,
    pub react_percentile: f64,

    // Ablation grid.
    /// Subset of `full`, `no-warmup`, `no-radius`, `no-sep`.
    pub grid_variants: Vec<String>,
    pub grid_k: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let blobs = BlobConfig::default();
        let ood = OodConfig::default();
        let train = TrainConfig::default();
        let eval = EvalConfig::default();
        let (nc1_threshold, cv_threshold, warmup_epochs) = match train.warmup {
            WarmupPolicy::Diagnostic {
                nc1_threshold,
                cv_threshold,
                fallback_epochs,
            } => (nc1_threshold, cv_threshold, fallback_epochs),
            _ => unreachable!("default policy is diagnostic"),
        };
        Self {
            seed: 0,
            seeds: vec![0, 1, 2],
            classes: blobs.classes,
            input_dim: blobs.dim,
            n_train: blobs.n_train,
            n_val: blobs.n_val,
            n_test: blobs.n_test,
            separation: blobs.separation,
            sigma: blobs.sigma,
            near_n: ood.near_n,
            near_jitter: ood.near_jitter,
            far_n: ood.far_n,
            far_mode: ood.far_mode.to_string(),
            far_scale: ood.far_scale,
            hidden: train.hidden.clone(),
            feature_dim: train.feature_dim,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr: train.lr,
            head_lr: None,
            momentum: train.momentum,
            weight_decay: train.weight_decay,
            grad_clip: train.grad_clip,
            k: train.k,
            alpha: train.alpha,
            pseudo_per_batch: train.pseudo_per_batch,
            spacing: train.spacing.to_string(),
            beta_mu: train.beta_mu,
            beta_r: train.beta_r,
            lambda_cls: train.lambda_cls,
            lambda_reg: train.lambda_reg,
            lambda_ood_max: train.lambda_ood_max,
            lambda_sep_max: train.lambda_sep_max,
            ramp_fraction: train.ramp_fraction,
            reg_target: "raw".into(),
            warmup_policy: "diagnostic".into(),
            warmup_epochs,
            nc1_threshold,
            cv_threshold,
            log_interval: train.log_interval,
            scorers: vec![
                "msp".into(),
                "ebo".into(),
                "entropy".into(),
                "react".into(),
                "norm".into(),
            ],
            temperature: eval.temperature,
            react_percentile: eval.react_percentile,
            grid_variants: vec!["full".into(), "no-warmup".into(), "no-radius".into(), "no-sep".into()],
            grid_k: vec![1, 3, 4, 6],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.experiment()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn warmup(&self) -> Result<WarmupPolicy> {
        match self.warmup_policy.as_str() {
            "diagnostic" => Ok(WarmupPolicy::Diagnostic {
                nc1_threshold: self.nc1_threshold,
                cv_threshold: self.cv_threshold,
                fallback_epochs: self.warmup_epochs,
            }),
            "fixed" => Ok(WarmupPolicy::Fixed {
                epochs: self.warmup_epochs,
            }),
            "none" => Ok(WarmupPolicy::Disabled),
            other => Err(Error::InvalidConfig(format!("unknown warmup_policy `{other}`"))),
        }
    }

    /// Typed configuration; fails on any invalid value.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let reg_target = match self.reg_target.as_str() {
            "raw" => RegTarget::Raw,
            "normalized" => RegTarget::Normalized,
            other => return Err(Error::InvalidConfig(format!("unknown reg_target `{other}`"))),
        };
        let spacing: ShellSpacing = self.spacing.parse()?;
        let far_mode: FarOodMode = self.far_mode.parse()?;
        let blobs = BlobConfig {
            classes: self.classes,
            dim: self.input_dim,
            n_train: self.n_train,
            n_val: self.n_val,
            n_test: self.n_test,
            separation: self.separation,
            sigma: self.sigma,
            seed: self.seed,
        };
        blobs.validate()?;
        let train = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            hidden: self.hidden.clone(),
            feature_dim: self.feature_dim,
            lr: self.lr,
            head_lr: self.head_lr.unwrap_or(10.0 * self.lr),
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            grad_clip: self.grad_clip,
            k: self.k,
            alpha: self.alpha,
            pseudo_per_batch: self.pseudo_per_batch,
            spacing,
            beta_mu: self.beta_mu,
            beta_r: self.beta_r,
            lambda_cls: self.lambda_cls,
            lambda_reg: self.lambda_reg,
            lambda_ood_max: self.lambda_ood_max,
            lambda_sep_max: self.lambda_sep_max,
            ramp_fraction: self.ramp_fraction,
            warmup: self.warmup()?,
            reg_target,
            seed: self.seed,
            log_interval: self.log_interval,
        };
        train.validate()?;
        if let Some(s) = self.far_scale {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig(format!("far_scale must be positive, got {s}")));
            }
        }
        if self.scorers.is_empty() {
            return Err(Error::InvalidConfig("scorers must not be empty".into()));
        }
        for s in &self.scorers {
            if s != "auto" {
                s.parse::<crate::scorers::ScorerId>()?;
            }
        }
        for v in &self.grid_variants {
            crate::app::Variant::from_token(v)?;
        }
        if self.grid_k.contains(&0) {
            return Err(Error::InvalidK(0));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::NonPositiveTemperature(self.temperature));
        }
        if !(0.0..=100.0).contains(&self.react_percentile) {
            return Err(Error::InvalidConfig(format!(
                "react_percentile must lie in [0, 100], got {}",
                self.react_percentile
            )));
        }
        Ok(ExperimentConfig {
            blobs,
            ood: OodConfig {
                near_n: self.near_n,
                near_jitter: self.near_jitter,
                far_n: self.far_n,
                far_mode,
                far_scale: self.far_scale,
            },
            train,
            eval: EvalConfig {
                temperature: self.temperature,
                react_percentile: self.react_percentile,
                select_alpha: self.alpha,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_match_typed_defaults() {
        let exp = RunConfig::default().experiment().unwrap();
        let mut expected = ExperimentConfig::default();
        expected.eval.select_alpha = expected.train.alpha;
        assert_eq!(exp, expected);
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::from_toml("k = 6\nfar_scale = 40.0\nhead_lr = 0.3\n").unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.k, 6);
        assert_eq!(
            RunConfig::from_toml(&RunConfig::default().to_toml()).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            RunConfig::from_toml("bogus = 1"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(RunConfig::from_toml("k = 0"), Err(Error::InvalidK(0))));
        assert!(RunConfig::from_toml("spacing = \"log\"").is_err());
        assert!(RunConfig::from_toml("warmup_policy = \"sometimes\"").is_err());
        assert!(RunConfig::from_toml("scorers = [\"knn\"]").is_err());
        assert!(RunConfig::from_toml("grid_variants = [\"no-ce\"]").is_err());
        assert!(RunConfig::from_toml("batch_size = 1").is_err());
        assert!(RunConfig::from_toml("epochs = \"ten\"").is_err());
    }

    #[test]
    fn head_lr_defaults_to_ten_times_lr() {
        let exp = RunConfig::from_toml("lr = 0.02").unwrap().experiment().unwrap();
        assert!((exp.train.head_lr - 0.2).abs() < 1e-15);
    }
}
