//! Post-hoc OOD scores on a frozen backbone and classifier.
//!
//! Every score is oriented so that higher means more ID-like.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::auroc;
use crate::numeric::{distance, logsumexp_unchecked, percentile, softmax_unchecked, Matrix, SeededRng};
use crate::pseudo_ood;

/// Scorer tokens in declaration order. Ties in scorer selection go to the
/// earliest entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScorerId {
    Msp,
    Ebo,
    Entropy,
    React,
    Norm,
}

impl ScorerId {
    pub const ALL: [ScorerId; 5] = [
        ScorerId::Msp,
        ScorerId::Ebo,
        ScorerId::Entropy,
        ScorerId::React,
        ScorerId::Norm,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ScorerId::Msp => "msp",
            ScorerId::Ebo => "ebo",
            ScorerId::Entropy => "entropy",
            ScorerId::React => "react",
            ScorerId::Norm => "norm",
        }
    }
}

impl fmt::Display for ScorerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ScorerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerId::ALL
            .into_iter()
            .find(|id| id.token() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scorer `{s}`")))
    }
}

fn check_logits(logits: &Matrix) -> Result<()> {
    if logits.cols() < 2 {
        return Err(Error::dims("scorer logits (classes)", 2, logits.cols()));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite {
            context: "scorer logits",
        });
    }
    Ok(())
}

/// Maximum softmax probability.
pub fn score_msp(logits: &Matrix) -> Result<Vec<f64>> {
    check_logits(logits)?;
    Ok(logits
        .iter_rows()
        .map(|z| softmax_unchecked(z).into_iter().fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// Energy score `T · logsumexp(z / T)`.
pub fn score_ebo(logits: &Matrix, temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    check_logits(logits)?;
    Ok(logits
        .iter_rows()
        .map(|z| {
            let scaled: Vec<f64> = z.iter().map(|v| v / temperature).collect();
            temperature * logsumexp_unchecked(&scaled)
        })
        .collect())
}

/// Negative Shannon entropy of the softmax.
pub fn score_entropy(logits: &Matrix) -> Result<Vec<f64>> {
    check_logits(logits)?;
    Ok(logits
        .iter_rows()
        .map(|z| {
            softmax_unchecked(z)
                .into_iter()
                .filter(|&p| p > 0.0)
                .map(|p| p * p.ln())
                .sum::<f64>()
        })
        .collect())
}

/// Energy score on logits recomputed from features clipped at `clip` from above.
pub fn score_react(features: &Matrix, class_weights: &Matrix, clip: f64, temperature: f64) -> Result<Vec<f64>> {
    if !(clip > 0.0) || clip.is_nan() {
        return Err(Error::NonPositiveClip(clip));
    }
    if features.cols() != class_weights.cols() {
        return Err(Error::dims("score_react", class_weights.cols(), features.cols()));
    }
    let clipped = features.map(|v| v.min(clip));
    score_ebo(&clipped.matmul_t(class_weights), temperature)
}

/// Distance to the tracked ID center.
pub fn score_norm(features: &Matrix, center: &[f64]) -> Result<Vec<f64>> {
    if features.cols() != center.len() {
        return Err(Error::dims("score_norm", center.len(), features.cols()));
    }
    Ok(features.iter_rows().map(|h| distance(h, center)).collect())
}

/// ReAct clip: the given percentile of every activation entry in `features`.
pub fn calibrate_react_clip(features: &Matrix, pct: f64) -> Result<f64> {
    let clip = percentile(features.as_slice(), pct).ok_or(Error::EmptyValidation)?;
    if !(clip > 0.0) {
        return Err(Error::NonPositiveClip(clip));
    }
    Ok(clip)
}

/// Everything a scorer needs from a frozen model.
#[derive(Debug, Clone)]
pub struct ScoringContext {
    pub class_weights: Matrix,
    pub center: Vec<f64>,
    pub temperature: f64,
    pub react_clip: f64,
}

impl ScoringContext {
    /// Scores feature rows (logits are recomputed from them).
    pub fn score(&self, id: ScorerId, features: &Matrix) -> Result<Vec<f64>> {
        let logits = || {
            if features.cols() != self.class_weights.cols() {
                return Err(Error::dims(
                    "scoring features",
                    self.class_weights.cols(),
                    features.cols(),
                ));
            }
            Ok(features.matmul_t(&self.class_weights))
        };
        match id {
            ScorerId::Msp => score_msp(&logits()?),
            ScorerId::Ebo => score_ebo(&logits()?, self.temperature),
            ScorerId::Entropy => score_entropy(&logits()?),
            ScorerId::React => score_react(features, &self.class_weights, self.react_clip, self.temperature),
            ScorerId::Norm => score_norm(features, &self.center),
        }
    }
}

/// Outcome of validation-time scorer selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub chosen: ScorerId,
    /// Proxy AUROC per candidate, in candidate order.
    pub proxy_auroc: Vec<(ScorerId, f64)>,
}

/// Picks the scorer that best separates ID validation features from
/// pseudo-OOD mixtures of those same features. Ties go to the earliest candidate.
pub fn select_scorer(
    ctx: &ScoringContext,
    candidates: &[ScorerId],
    validation_features: &Matrix,
    alpha: f64,
    rng: &mut SeededRng,
) -> Result<Selection> {
    if validation_features.rows() == 0 {
        return Err(Error::EmptyValidation);
    }
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no scorer candidates".into()));
    }
    let proxy = pseudo_ood::generate(validation_features, validation_features.rows(), alpha, 1, rng)?;
    let mut proxy_auroc = Vec::with_capacity(candidates.len());
    for &id in candidates {
        let id_scores = ctx.score(id, validation_features)?;
        let ood_scores = ctx.score(id, &proxy.raw)?;
        proxy_auroc.push((id, auroc(&id_scores, &ood_scores)?));
    }
    Ok(Selection {
        chosen: argmax_first(&proxy_auroc),
        proxy_auroc,
    })
}

pub(crate) fn argmax_first(values: &[(ScorerId, f64)]) -> ScorerId {
    let mut best = values[0];
    for &v in &values[1..] {
        if v.1 > best.1 {
            best = v;
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rows(r: &[&[f64]]) -> Matrix {
        Matrix::from_rows(r).unwrap()
    }

    #[test]
    fn msp_examples() {
        assert_eq!(score_msp(&Matrix::zeros(1, 4)).unwrap(), vec![0.25]);
        assert_abs_diff_eq!(
            score_msp(&rows(&[&[1000.0, 0.0, 0.0]])).unwrap()[0],
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            score_msp(&rows(&[&[0.0, 3f64.ln()]])).unwrap()[0],
            0.75,
            epsilon = 1e-12
        );
        assert!(score_msp(&Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn ebo_examples() {
        assert_abs_diff_eq!(
            score_ebo(&Matrix::zeros(1, 2), 1.0).unwrap()[0],
            2f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            score_ebo(&rows(&[&[1.0, 2.0, 3.0]]), 1.0).unwrap()[0],
            3.407_605_964_444_380,
            epsilon = 1e-14
        );
        assert!(matches!(
            score_ebo(&Matrix::zeros(1, 2), 0.0),
            Err(Error::NonPositiveTemperature(_))
        ));
        let base = score_ebo(&rows(&[&[0.3, -1.0, 2.0]]), 1.0).unwrap()[0];
        let shifted = score_ebo(&rows(&[&[5.3, 4.0, 7.0]]), 1.0).unwrap()[0];
        assert_abs_diff_eq!(shifted - base, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(
            score_entropy(&Matrix::zeros(1, 4)).unwrap()[0],
            -(4f64.ln()),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            score_entropy(&rows(&[&[2000.0, 0.0]])).unwrap()[0],
            0.0,
            epsilon = 1e-12
        );
        let expected = 0.25 * 0.25f64.ln() + 0.75 * 0.75f64.ln();
        assert_abs_diff_eq!(expected, -0.562_335_144_618_808_5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            score_entropy(&rows(&[&[0.0, 3f64.ln()]])).unwrap()[0],
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn react_examples() {
        let w = rows(&[&[1.0, -0.5], &[0.2, 0.8], &[-1.0, 0.3]]);
        let h = rows(&[&[0.4, 1.2], &[-2.0, 0.1]]);
        let unclipped = score_ebo(&h.matmul_t(&w), 1.0).unwrap();
        assert_eq!(score_react(&h, &w, 1.2, 1.0).unwrap(), unclipped);
        assert_eq!(score_react(&h, &w, 100.0, 1.0).unwrap(), unclipped);

        let above = rows(&[&[3.0, 5.0], &[7.0, 2.5]]);
        let s = score_react(&above, &w, 2.0, 1.0).unwrap();
        assert_eq!(s[0], s[1]);
        assert!(matches!(score_react(&h, &w, 0.0, 1.0), Err(Error::NonPositiveClip(_))));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(score_norm(&rows(&[&[1.0, 2.0]]), &[1.0, 2.0]).unwrap(), vec![0.0]);
        assert_eq!(score_norm(&rows(&[&[3.0, 4.0]]), &[0.0, 0.0]).unwrap(), vec![5.0]);
        assert!(score_norm(&rows(&[&[3.0, 4.0]]), &[0.0]).is_err());
    }

    fn context() -> ScoringContext {
        ScoringContext {
            class_weights: rows(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]),
            center: vec![0.0; 3],
            temperature: 1.0,
            react_clip: 100.0,
        }
    }

    #[test]
    fn orientation_id_beats_ood() {
        let ctx = context();
        let id_like = rows(&[&[8.0, 0.0, 0.0]]);
        let ood_like = rows(&[&[0.1, 0.1, 0.1]]);
        for id in ScorerId::ALL {
            let a = ctx.score(id, &id_like).unwrap()[0];
            let b = ctx.score(id, &ood_like).unwrap()[0];
            assert!(a > b, "{id}: {a} vs {b}");
        }
    }

    #[test]
    fn token_round_trip() {
        for id in ScorerId::ALL {
            assert_eq!(id.token().parse::<ScorerId>().unwrap(), id);
        }
        assert!("knn".parse::<ScorerId>().is_err());
    }

    #[test]
    fn selection_examples() {
        let ctx = context();
        let mut rng = SeededRng::new(1);
        let mut feats = Matrix::zeros(12, 3);
        for r in 0..12 {
            feats[(r, r % 3)] = 5.0 + r as f64 * 0.1;
        }
        let sel = select_scorer(&ctx, &[ScorerId::Entropy], &feats, 1.0, &mut rng).unwrap();
        assert_eq!(sel.chosen, ScorerId::Entropy);
        assert!(matches!(
            select_scorer(&ctx, &ScorerId::ALL, &Matrix::zeros(0, 3), 1.0, &mut rng),
            Err(Error::EmptyValidation)
        ));
        assert_eq!(
            argmax_first(&[(ScorerId::Msp, 0.9), (ScorerId::Ebo, 0.7), (ScorerId::Norm, 0.9)]),
            ScorerId::Msp
        );
        let sel = select_scorer(&ctx, &ScorerId::ALL, &feats, 1.0, &mut rng).unwrap();
        assert_eq!(sel.proxy_auroc.len(), 5);
        let best = sel.proxy_auroc.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        assert_eq!(sel.proxy_auroc.iter().find(|p| p.0 == sel.chosen).unwrap().1, best);
    }

    proptest! {
        #[test]
        fn shift_invariance(
            z in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..10),
            ood in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..10),
            c in -20.0f64..20.0,
        ) {
            let a = Matrix::from_rows(&z).unwrap();
            let b = Matrix::from_rows(&ood).unwrap();
            let (sa, sb) = (a.map(|v| v + c), b.map(|v| v + c));
            for f in [score_msp as fn(&Matrix) -> Result<Vec<f64>>, score_entropy] {
                let (x, y) = (f(&a).unwrap(), f(&sa).unwrap());
                for (p, q) in x.iter().zip(&y) {
                    prop_assert!((p - q).abs() < 1e-12);
                }
            }
            let (e, es) = (score_ebo(&a, 1.0).unwrap(), score_ebo(&sa, 1.0).unwrap());
            for (p, q) in e.iter().zip(&es) {
                prop_assert!((q - p - c).abs() < 1e-9);
            }
            let before = auroc(&score_ebo(&a, 1.0).unwrap(), &score_ebo(&b, 1.0).unwrap()).unwrap();
            let after = auroc(&score_ebo(&sa, 1.0).unwrap(), &score_ebo(&sb, 1.0).unwrap()).unwrap();
            prop_assert_eq!(before, after);
            let exp = |v: Vec<f64>| v.into_iter().map(f64::exp).collect::<Vec<_>>();
            let ma = score_msp(&a).unwrap();
            let mb = score_msp(&b).unwrap();
            prop_assert_eq!(auroc(&ma, &mb).unwrap(), auroc(&exp(ma.clone()), &exp(mb.clone())).unwrap());
        }
    }
}
