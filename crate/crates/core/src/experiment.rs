//! The synthetic reference experiment: data, OOD sets, training and evaluation.

use crate::data::{make_blob_splits, make_far_ood, make_near_ood, BlobConfig, BlobSplits, FarOodMode};
use crate::error::Result;
use crate::geometry::GeometryState;
use crate::metrics::{id_accuracy, EvalReport};
use crate::model::ModelState;
use crate::numeric::{Matrix, SeededRng};
use crate::scorers::{calibrate_react_clip, select_scorer, ScorerId, ScoringContext, Selection};
use crate::trainer::{train, train_ce_only, TrainConfig, TrainOutput};

/// Seed offsets so that the OOD sets never share a stream with the ID data.
const NEAR_SEED_OFFSET: u64 = 0x6e65_6172;
const FAR_SEED_OFFSET: u64 = 0x6661_7200;
const SELECT_SEED_OFFSET: u64 = 0x7365_6c00;

#[derive(Debug, Clone, PartialEq)]
pub struct OodConfig {
    pub near_n: usize,
    pub near_jitter: f64,
    pub far_n: usize,
    pub far_mode: FarOodMode,
    /// `None` places the far set at three times the blob extent.
    pub far_scale: Option<f64>,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            near_n: 400,
            near_jitter: 1.0,
            far_n: 400,
            far_mode: FarOodMode::ShiftedGaussian,
            far_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub temperature: f64,
    pub react_percentile: f64,
    /// Mixing concentration for the scorer-selection proxy.
    pub select_alpha: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            react_percentile: 90.0,
            select_alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodSets {
    pub near: Matrix,
    pub far: Matrix,
}

impl OodSets {
    pub fn named(&self) -> [(&'static str, &Matrix); 2] {
        [("near", &self.near), ("far", &self.far)]
    }
}

pub fn make_ood_sets(blobs: &BlobConfig, splits: &BlobSplits, ood: &OodConfig) -> Result<OodSets> {
    let near = make_near_ood(&splits.test, ood.near_n, ood.near_jitter, blobs.seed ^ NEAR_SEED_OFFSET)?;
    let scale = ood.far_scale.unwrap_or(3.0 * blobs.extent());
    let far = make_far_ood(blobs.dim, ood.far_n, ood.far_mode, scale, blobs.seed ^ FAR_SEED_OFFSET)?;
    Ok(OodSets { near: near.inputs, far })
}

/// Builds the scorer context of a trained model. The norm scorer measures
/// distances from `center`; the ReAct clip is calibrated on `val_features`.
pub fn scoring_context(
    model: &ModelState,
    center: Vec<f64>,
    val_features: &Matrix,
    eval: &EvalConfig,
) -> Result<ScoringContext> {
    Ok(ScoringContext {
        class_weights: model.classifier.weight.clone(),
        center,
        temperature: eval.temperature,
        react_clip: calibrate_react_clip(val_features, eval.react_percentile)?,
    })
}

/// A frozen model ready for evaluation.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub model: ModelState,
    pub ctx: ScoringContext,
    pub val_features: Matrix,
}

impl Evaluator {
    /// Uses the EMA center when geometry is available and the training-feature
    /// mean otherwise.
    pub fn new(
        model: &ModelState,
        geometry: Option<&GeometryState>,
        splits: &BlobSplits,
        eval: &EvalConfig,
    ) -> Result<Self> {
        let val_features = model.backbone.features(&splits.val.inputs)?;
        let center = match geometry {
            Some(g) if g.is_initialized() => g.mu.clone(),
            _ => model.backbone.features(&splits.train.inputs)?.column_mean(),
        };
        let ctx = scoring_context(model, center, &val_features, eval)?;
        Ok(Self {
            model: model.clone(),
            ctx,
            val_features,
        })
    }

    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.model.backbone.features(x)
    }

    pub fn select(&self, candidates: &[ScorerId], alpha: f64, seed: u64) -> Result<Selection> {
        let mut rng = SeededRng::new(seed ^ SELECT_SEED_OFFSET);
        select_scorer(&self.ctx, candidates, &self.val_features, alpha, &mut rng)
    }

    /// One report per (scorer, OOD set), scorers outermost.
    pub fn evaluate(
        &self,
        id_test: &crate::data::LabeledDataset,
        ood: &[(&str, &Matrix)],
        scorers: &[(String, ScorerId)],
    ) -> Result<Vec<EvalReport>> {
        let id_features = self.features(&id_test.inputs)?;
        let id_acc = id_accuracy(&self.model.classifier.forward(&id_features)?, &id_test.labels)?;
        let ood_features: Vec<Matrix> = ood.iter().map(|(_, x)| self.features(x)).collect::<Result<_>>()?;
        let mut reports = Vec::with_capacity(scorers.len() * ood.len());
        for (label, id) in scorers {
            let id_scores = self.ctx.score(*id, &id_features)?;
            for ((name, _), feats) in ood.iter().zip(&ood_features) {
                let ood_scores = self.ctx.score(*id, feats)?;
                reports.push(EvalReport::compute(label, name, &id_scores, &ood_scores, id_acc)?);
            }
        }
        Ok(reports)
    }
}

/// Everything the reference experiment needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub blobs: BlobConfig,
    pub ood: OodConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    /// Same configuration with data and training both reseeded.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.blobs.seed = seed;
        c.train.seed = seed;
        c
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub splits: BlobSplits,
    pub ood: OodSets,
}

impl ExperimentData {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self> {
        let splits = make_blob_splits(&cfg.blobs)?;
        let ood = make_ood_sets(&cfg.blobs, &splits, &cfg.ood)?;
        Ok(Self { splits, ood })
    }
}

/// All five scorers under their own names.
pub fn all_scorers() -> Vec<(String, ScorerId)> {
    ScorerId::ALL.iter().map(|s| (s.token().to_string(), *s)).collect()
}

/// Outcome of one trained model on the reference sets.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub reports: Vec<EvalReport>,
    pub evaluator: Evaluator,
}

impl RunResult {
    pub fn auroc(&self, scorer: ScorerId, set: &str) -> Option<f64> {
        self.reports
            .iter()
            .find(|r| r.scorer == scorer.token() && r.ood_set == set)
            .map(|r| r.auroc)
    }

    /// Best AUROC over all scorers on one OOD set.
    pub fn best_auroc(&self, set: &str) -> f64 {
        self.reports
            .iter()
            .filter(|r| r.ood_set == set)
            .map(|r| r.auroc)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn id_acc(&self) -> f64 {
        self.reports.first().map_or(f64::NAN, |r| r.id_acc)
    }
}

pub fn evaluate_model(
    model: &ModelState,
    geometry: Option<&GeometryState>,
    data: &ExperimentData,
    eval: &EvalConfig,
) -> Result<RunResult> {
    let evaluator = Evaluator::new(model, geometry, &data.splits, eval)?;
    let reports = evaluator.evaluate(&data.splits.test, &data.ood.named(), &all_scorers())?;
    Ok(RunResult { reports, evaluator })
}

/// Trains with the full objective and evaluates every scorer.
pub fn run_bootood(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<(TrainOutput, RunResult)> {
    let out = train(&cfg.train, &data.splits.train)?;
    let result = evaluate_model(&out.model, Some(&out.geometry), data, &cfg.eval)?;
    Ok((out, result))
}

/// Trains the cross-entropy baseline under the same seed and evaluates it.
pub fn run_baseline(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<(ModelState, RunResult)> {
    let (model, _) = train_ce_only(&cfg.train, &data.splits.train, |_, _| {})?;
    let result = evaluate_model(&model, None, data, &cfg.eval)?;
    Ok((model, result))
}
