//! The train / eval / ablate / diagnose commands. Every command validates its
//! whole configuration before touching the disk and writes only under its
//! output directory.
//!
//! Output files:
//!
//! | file                        | written by          |
//! |-----------------------------|---------------------|
//! | `config.resolved.toml`      | all                 |
//! | `checkpoint.bin`            | train               |
//! | `checkpoint_phase1.bin`     | train (if phase 2 began) |
//! | `train_log.csv`             | train               |
//! | `epochs.csv`                | train               |
//! | `geometry.toml`             | train               |
//! | `metrics.csv`               | train, eval         |
//! | `selection.csv`             | train, eval (with `auto`) |
//! | `radius_hist.{svg,csv}`     | eval, diagnose      |
//! | `max_cosine_hist.{svg,csv}` | eval, diagnose      |
//! | `nc_report.toml`            | diagnose            |
//! | `ablation_cells.csv`        | ablate              |
//! | `ablation.csv`              | ablate              |

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::FeatureFile;
use crate::diagnostics::{max_cosines, nc_metrics, radii, NcReport, PairedHistogram};
use crate::error::{Error, Result};
use crate::experiment::{all_scorers, run_bootood, Evaluator, ExperimentConfig, ExperimentData};
use crate::geometry::GeometryState;
use crate::metrics::{id_accuracy, write_reports, EvalReport};
use crate::model::ModelState;
use crate::numeric::{mean_std, Matrix, SeededRng};
use crate::pseudo_ood::generate;
use crate::scorers::{ScorerId, Selection};
use crate::trainer::{train, EpochDiagnostics, TrainConfig, WarmupPolicy};

pub const CONFIG_FILE: &str = "config.resolved.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const PHASE1_CHECKPOINT_FILE: &str = "checkpoint_phase1.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EPOCH_LOG_FILE: &str = "epochs.csv";
pub const GEOMETRY_FILE: &str = "geometry.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SELECTION_FILE: &str = "selection.csv";
pub const RADIUS_HIST: &str = "radius_hist";
pub const COSINE_HIST: &str = "max_cosine_hist";
pub const NC_REPORT_FILE: &str = "nc_report.toml";
pub const ABLATION_CELLS_FILE: &str = "ablation_cells.csv";
pub const ABLATION_FILE: &str = "ablation.csv";

/// Environment variable capping the ablation worker count.
pub const THREADS_ENV: &str = "BOOTOOD_THREADS";

const HIST_BINS: usize = 40;
const PSEUDO_SEED_OFFSET: u64 = 0x6869_7374;

/// Ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Full,
    NoWarmup,
    NoRadius,
    NoSep,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoWarmup, Variant::NoRadius, Variant::NoSep];

    pub fn token(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoWarmup => "no-warmup",
            Variant::NoRadius => "no-radius",
            Variant::NoSep => "no-sep",
        }
    }

    pub fn from_token(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.token() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ablation variant `{s}`")))
    }

    pub fn apply(self, cfg: &mut TrainConfig) {
        match self {
            Variant::Full => {}
            Variant::NoWarmup => cfg.warmup = WarmupPolicy::Disabled,
            Variant::NoRadius => cfg.lambda_ood_max = 0.0,
            Variant::NoSep => cfg.lambda_sep_max = 0.0,
        }
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes)?;
    Ok(())
}

fn csv_file(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Resolves scorer tokens; `auto` runs validation-time selection.
fn resolve_scorers(
    tokens: &[String],
    evaluator: &Evaluator,
    alpha: f64,
    seed: u64,
) -> Result<(Vec<(String, ScorerId)>, Option<Selection>)> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut selection = None;
    for t in tokens {
        if t == "auto" {
            let sel = evaluator.select(&ScorerId::ALL, alpha, seed)?;
            log::info!("auto scorer selected `{}`", sel.chosen);
            out.push((format!("auto:{}", sel.chosen), sel.chosen));
            selection = Some(sel);
        } else {
            let id: ScorerId = t.parse()?;
            out.push((id.token().to_string(), id));
        }
    }
    Ok((out, selection))
}

fn write_selection(path: &Path, sel: &Selection) -> Result<()> {
    let mut w = csv::Writer::from_writer(csv_file(path)?);
    w.write_record(["scorer", "proxy_auroc", "chosen"])?;
    for (id, a) in &sel.proxy_auroc {
        w.write_record([id.token(), &a.to_string(), if *id == sel.chosen { "1" } else { "0" }])?;
    }
    w.flush()?;
    Ok(())
}

fn write_epochs(path: &Path, epochs: &[EpochDiagnostics]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(csv_file(path)?);
    w.write_record(["epoch", "train_error", "mean_ce", "nc1", "norm_cv", "etf_deviation"])?;
    for e in epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_error.to_string(),
            e.mean_ce.to_string(),
            opt(e.nc.map(|n| n.nc1)),
            opt(e.nc.map(|n| n.norm_cv)),
            opt(e.nc.map(|n| n.etf_deviation)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GeometryFile<'a> {
    k: usize,
    spacing: String,
    beta_mu: f64,
    beta_r: f64,
    r_ref: f64,
    shells: &'a [f64],
    mu: &'a [f64],
}

fn geometry_toml(g: &GeometryState) -> String {
    toml::to_string(&GeometryFile {
        k: g.k,
        spacing: g.spacing.to_string(),
        beta_mu: g.beta_mu,
        beta_r: g.beta_r,
        r_ref: g.r_ref,
        shells: g.shells(),
        mu: &g.mu,
    })
    .expect("geometry serializes")
}

/// Radius and max-cosine histograms of ID features against pseudo-OOD
/// mixtures of those same features.
fn write_histograms(
    out: &Path,
    model: &ModelState,
    center: &[f64],
    features: &Matrix,
    alpha: f64,
    seed: u64,
) -> Result<()> {
    let k = model.head.shells();
    let mut rng = SeededRng::new(seed ^ PSEUDO_SEED_OFFSET);
    let pseudo = generate(features, features.rows(), alpha, k, &mut rng)?;
    let w = &model.classifier.weight;
    let pairs = [
        (
            RADIUS_HIST,
            PairedHistogram::new(&radii(features, center)?, &radii(&pseudo.raw, center)?, HIST_BINS)?,
            "Feature radius",
            "distance to center",
        ),
        (
            COSINE_HIST,
            PairedHistogram::new(&max_cosines(features, w)?, &max_cosines(&pseudo.raw, w)?, HIST_BINS)?,
            "Max cosine to class weights",
            "max cosine",
        ),
    ];
    for (stem, hist, title, x_label) in pairs {
        hist.write_csv(csv_file(&out.join(format!("{stem}.csv")))?)?;
        write_file(&out.join(format!("{stem}.svg")), hist.to_svg(title, x_label))?;
    }
    Ok(())
}

fn check_model_fits(model: &ModelState, exp: &ExperimentConfig) -> Result<()> {
    if model.backbone.input_dim() != exp.blobs.dim {
        return Err(Error::InvalidConfig(format!(
            "checkpoint expects {}-dimensional inputs, config has input_dim = {}",
            model.backbone.input_dim(),
            exp.blobs.dim
        )));
    }
    if model.classifier.classes() != exp.blobs.classes {
        return Err(Error::InvalidConfig(format!(
            "checkpoint has {} classes, config has classes = {}",
            model.classifier.classes(),
            exp.blobs.classes
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub train_accuracy: f64,
    pub phase2_start: Option<usize>,
    pub reports: Vec<EvalReport>,
}

/// Trains, evaluates with the configured scorers and writes all artifacts.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainSummary> {
    let exp = cfg.experiment()?;
    let data = ExperimentData::generate(&exp)?;
    let trained = train(&exp.train, &data.splits.train)?;
    let evaluator = Evaluator::new(&trained.model, Some(&trained.geometry), &data.splits, &exp.eval)?;
    let (scorers, selection) = resolve_scorers(&cfg.scorers, &evaluator, exp.eval.select_alpha, cfg.seed)?;
    let reports = evaluator.evaluate(&data.splits.test, &data.ood.named(), &scorers)?;
    let train_accuracy = trained.record.epochs.last().map_or(0.0, |e| 1.0 - e.train_error);

    fs::create_dir_all(out)?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml())?;
    Checkpoint {
        model: trained.model.clone(),
        geometry: trained.geometry.clone(),
    }
    .write(&out.join(CHECKPOINT_FILE))?;
    if let Some(snap) = &trained.phase_boundary {
        Checkpoint {
            model: snap.model.clone(),
            geometry: snap.geometry.clone(),
        }
        .write(&out.join(PHASE1_CHECKPOINT_FILE))?;
    }
    trained
        .record
        .write_csv(csv_file(&out.join(TRAIN_LOG_FILE))?, exp.train.lr)?;
    let epochs: Vec<EpochDiagnostics> = trained
        .record
        .initial
        .iter()
        .chain(&trained.record.epochs)
        .copied()
        .collect();
    write_epochs(&out.join(EPOCH_LOG_FILE), &epochs)?;
    write_file(&out.join(GEOMETRY_FILE), geometry_toml(&trained.geometry))?;
    write_reports(csv_file(&out.join(METRICS_FILE))?, &reports)?;
    if let Some(sel) = &selection {
        write_selection(&out.join(SELECTION_FILE), sel)?;
    }
    Ok(TrainSummary {
        train_accuracy,
        phase2_start: trained.record.phase2_start,
        reports,
    })
}

/// Evaluates a checkpoint on the configured near/far sets plus any extra
/// input-space feature files given as `(name, path)`. Files ending in `.csv`
/// are read as CSV, anything else as the binary feature format.
pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    scorers: Option<&[String]>,
    extra_ood: &[(String, PathBuf)],
    out: &Path,
) -> Result<Vec<EvalReport>> {
    let exp = cfg.experiment()?;
    let tokens = scorers.unwrap_or(&cfg.scorers);
    for t in tokens {
        if t != "auto" {
            t.parse::<ScorerId>()?;
        }
    }
    let ckpt = Checkpoint::read(checkpoint)?;
    check_model_fits(&ckpt.model, &exp)?;
    let extras = extra_ood
        .iter()
        .map(|(name, path)| {
            let f = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                FeatureFile::read_csv(fs::File::open(path)?)?
            } else {
                FeatureFile::read(path)?
            };
            if f.features.cols() != exp.blobs.dim {
                return Err(Error::dims(
                    "OOD feature file columns",
                    exp.blobs.dim,
                    f.features.cols(),
                ));
            }
            Ok((name.clone(), f.features))
        })
        .collect::<Result<Vec<_>>>()?;

    let data = ExperimentData::generate(&exp)?;
    let evaluator = Evaluator::new(&ckpt.model, Some(&ckpt.geometry), &data.splits, &exp.eval)?;
    let (scorers, selection) = resolve_scorers(tokens, &evaluator, exp.eval.select_alpha, cfg.seed)?;
    let mut sets: Vec<(&str, &Matrix)> = data.ood.named().to_vec();
    sets.extend(extras.iter().map(|(n, m)| (n.as_str(), m)));
    let reports = evaluator.evaluate(&data.splits.test, &sets, &scorers)?;
    let test_features = evaluator.features(&data.splits.test.inputs)?;

    fs::create_dir_all(out)?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml())?;
    write_reports(csv_file(&out.join(METRICS_FILE))?, &reports)?;
    if let Some(sel) = &selection {
        write_selection(&out.join(SELECTION_FILE), sel)?;
    }
    write_histograms(
        out,
        &ckpt.model,
        &evaluator.ctx.center,
        &test_features,
        exp.train.alpha,
        cfg.seed,
    )?;
    Ok(reports)
}

#[derive(Serialize)]
struct NcFile {
    nc1: f64,
    norm_cv: f64,
    etf_deviation: f64,
    train_error: f64,
    n: usize,
}

/// Collapse diagnostics of a checkpoint on the training split.
pub fn cmd_diagnose(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<NcReport> {
    let exp = cfg.experiment()?;
    let ckpt = Checkpoint::read(checkpoint)?;
    check_model_fits(&ckpt.model, &exp)?;
    let data = ExperimentData::generate(&exp)?;
    let train = &data.splits.train;
    let features = ckpt.model.backbone.features(&train.inputs)?;
    let acc = id_accuracy(&ckpt.model.classifier.forward(&features)?, &train.labels)?;
    let mut report = nc_metrics(&features, &train.labels, train.classes)?;
    report.train_error = Some(1.0 - acc);
    let center = if ckpt.geometry.is_initialized() {
        ckpt.geometry.mu.clone()
    } else {
        features.column_mean()
    };

    fs::create_dir_all(out)?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml())?;
    let file = NcFile {
        nc1: report.nc1,
        norm_cv: report.norm_cv,
        etf_deviation: report.etf_deviation,
        train_error: 1.0 - acc,
        n: train.len(),
    };
    write_file(
        &out.join(NC_REPORT_FILE),
        toml::to_string(&file).expect("report serializes"),
    )?;
    write_histograms(out, &ckpt.model, &center, &features, exp.train.alpha, cfg.seed)?;
    Ok(report)
}

/// Cartesian ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub variants: Vec<Variant>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Grid {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            variants: cfg
                .grid_variants
                .iter()
                .map(|v| Variant::from_token(v))
                .collect::<Result<_>>()?,
            ks: cfg.grid_k.clone(),
            seeds: cfg.seeds.clone(),
        })
    }

    /// Applies overrides of the form `variants=full,no-sep;k=1,4;seeds=0,1`.
    /// Omitted parts keep their current value.
    pub fn with_overrides(mut self, spec: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidConfig(format!("grid: {msg}"));
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=values, got `{part}`")))?;
            let items: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
            match key.trim() {
                "variants" => self.variants = items.iter().map(|v| Variant::from_token(v)).collect::<Result<_>>()?,
                "k" => {
                    self.ks = items
                        .iter()
                        .map(|v| v.parse().map_err(|_| bad(format!("bad K `{v}`"))))
                        .collect::<Result<_>>()?
                }
                "seeds" => {
                    self.seeds = items
                        .iter()
                        .map(|v| v.parse().map_err(|_| bad(format!("bad seed `{v}`"))))
                        .collect::<Result<_>>()?
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.ks.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig("grid has an empty axis".into()));
        }
        if self.ks.contains(&0) {
            return Err(Error::InvalidK(0));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<(Variant, usize, u64)> {
        let mut out = Vec::new();
        for &v in &self.variants {
            for &k in &self.ks {
                for &s in &self.seeds {
                    out.push((v, k, s));
                }
            }
        }
        out
    }
}

/// Name of the per-run best scorer in ablation outputs.
pub const BEST_SCORER: &str = "best";

#[derive(Debug, Clone)]
pub struct CellResult {
    pub variant: Variant,
    pub k: usize,
    pub seed: u64,
    /// All scorers plus a `best` row per OOD set (highest AUROC).
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub k: usize,
    pub scorer: String,
    pub ood_set: String,
    pub n_seeds: usize,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub fpr95_mean: f64,
    pub fpr95_std: f64,
    /// Difference to the full model with the same `K`, if it is in the grid.
    pub d_auroc: Option<f64>,
    pub d_fpr95: Option<f64>,
}

fn with_best(mut reports: Vec<EvalReport>) -> Vec<EvalReport> {
    let mut sets: Vec<String> = Vec::new();
    for r in &reports {
        if !sets.contains(&r.ood_set) {
            sets.push(r.ood_set.clone());
        }
    }
    for set in sets {
        let best = reports
            .iter()
            .filter(|r| r.ood_set == set)
            .fold(None::<&EvalReport>, |acc, r| match acc {
                Some(a) if a.auroc >= r.auroc => Some(a),
                _ => Some(r),
            })
            .cloned();
        if let Some(mut b) = best {
            b.scorer = BEST_SCORER.to_string();
            reports.push(b);
        }
    }
    reports
}

/// Trains and evaluates one grid cell.
pub fn run_cell(base: &ExperimentConfig, variant: Variant, k: usize, seed: u64) -> Result<CellResult> {
    let mut exp = base.with_seed(seed);
    exp.train.k = k;
    variant.apply(&mut exp.train);
    let data = ExperimentData::generate(&exp)?;
    let (_, result) = run_bootood(&exp, &data)?;
    Ok(CellResult {
        variant,
        k,
        seed,
        reports: with_best(result.reports),
    })
}

pub fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|n| (n > 0).then_some(n))
            .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Runs every cell, at most `threads` at a time, in grid order.
pub fn run_grid(base: &ExperimentConfig, grid: &Grid, threads: Option<usize>) -> Result<Vec<CellResult>> {
    grid.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let cells = grid.cells();
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, k, s)| {
                log::info!("ablation cell {} K={k} seed={s}", v.token());
                run_cell(base, v, k, s)
            })
            .collect()
    })
}

/// Seed-averaged rows, with deltas against the full model at equal `K`.
pub fn aggregate(cells: &[CellResult]) -> Vec<AblationRow> {
    type Key = (Variant, usize, String, String);
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut order: Vec<Key> = Vec::new();
    for c in cells {
        for r in &c.reports {
            let key = (c.variant, c.k, r.scorer.clone(), r.ood_set.clone());
            let entry = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                Default::default()
            });
            entry.0.push(r.auroc);
            entry.1.push(r.fpr95);
        }
    }
    let stats: BTreeMap<&Key, (usize, (f64, f64), (f64, f64))> = groups
        .iter()
        .map(|(k, (a, f))| (k, (a.len(), mean_std(a), mean_std(f))))
        .collect();
    order
        .iter()
        .map(|key| {
            let (n, (am, asd), (fm, fsd)) = stats[key];
            let reference = stats.get(&(Variant::Full, key.1, key.2.clone(), key.3.clone()));
            AblationRow {
                variant: key.0,
                k: key.1,
                scorer: key.2.clone(),
                ood_set: key.3.clone(),
                n_seeds: n,
                auroc_mean: am,
                auroc_std: asd,
                fpr95_mean: fm,
                fpr95_std: fsd,
                d_auroc: reference.map(|r| am - r.1 .0),
                d_fpr95: reference.map(|r| fm - r.2 .0),
            }
        })
        .collect()
}

pub const ABLATION_COLUMNS: [&str; 11] = [
    "variant",
    "k",
    "scorer",
    "ood_set",
    "n_seeds",
    "auroc_mean",
    "auroc_std",
    "fpr95_mean",
    "fpr95_std",
    "d_auroc",
    "d_fpr95",
];

fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(csv_file(path)?);
    w.write_record(ABLATION_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.variant.token().to_string(),
            r.k.to_string(),
            r.scorer.clone(),
            r.ood_set.clone(),
            r.n_seeds.to_string(),
            r.auroc_mean.to_string(),
            r.auroc_std.to_string(),
            r.fpr95_mean.to_string(),
            r.fpr95_std.to_string(),
            opt(r.d_auroc),
            opt(r.d_fpr95),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_cells(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(csv_file(path)?);
    w.write_record([
        "variant", "k", "seed", "scorer", "ood_set", "auroc", "fpr95", "aupr_in", "aupr_out", "id_acc",
    ])?;
    for c in cells {
        for r in &c.reports {
            w.write_record([
                c.variant.token().to_string(),
                c.k.to_string(),
                c.seed.to_string(),
                r.scorer.clone(),
                r.ood_set.clone(),
                r.auroc.to_string(),
                r.fpr95.to_string(),
                r.aupr_in.to_string(),
                r.aupr_out.to_string(),
                r.id_acc.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs the grid and writes per-cell and aggregated CSVs.
pub fn cmd_ablate(cfg: &RunConfig, grid_overrides: Option<&str>, out: &Path) -> Result<Vec<AblationRow>> {
    let exp = cfg.experiment()?;
    let mut grid = Grid::from_config(cfg)?;
    if let Some(spec) = grid_overrides {
        grid = grid.with_overrides(spec)?;
    }
    grid.validate()?;
    let threads = thread_count()?;
    let cells = run_grid(&exp, &grid, threads)?;
    let rows = aggregate(&cells);

    fs::create_dir_all(out)?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml())?;
    write_cells(&out.join(ABLATION_CELLS_FILE), &cells)?;
    write_ablation(&out.join(ABLATION_FILE), &rows)?;
    Ok(rows)
}

/// Entries of the near-OOD AUROC table keyed by scorer.
pub fn near_auroc_by_scorer(reports: &[EvalReport]) -> Vec<(String, f64)> {
    reports
        .iter()
        .filter(|r| r.ood_set == "near")
        .map(|r| (r.scorer.clone(), r.auroc))
        .collect()
}

/// All five scorers as configuration tokens.
pub fn all_scorer_tokens() -> Vec<String> {
    all_scorers().into_iter().map(|(t, _)| t).collect()
}
