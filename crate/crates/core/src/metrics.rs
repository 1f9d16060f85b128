//! OOD evaluation metrics.
//!
//! Conventions: scores are oriented higher = more ID-like. AUROC gives ties
//! half credit. Thresholds are inclusive (`score >= τ` is accepted as ID).
//! AUPR uses step interpolation (average precision) over distinct thresholds.

use std::io::Write;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

fn check_nonempty(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyScoreSet);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "scores" });
    }
    Ok(())
}

/// Twice the Mann-Whitney U statistic of `pos` over `neg`: each pair with
/// `pos > neg` counts 2, each tie counts 1. Integer, hence exact.
pub fn doubled_u_statistic(pos: &[f64], neg: &[f64]) -> u64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Walk tie groups in ascending order, tracking negatives strictly below.
    let mut neg_below = 0u64;
    let mut doubled = 0u64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        doubled += p * (2 * neg_below + n);
        neg_below += n;
        i = j;
    }
    doubled
}

/// Probability that a random ID score exceeds a random OOD score, ties ½.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_nonempty(id_scores, ood_scores)?;
    let pairs = (id_scores.len() * ood_scores.len()) as f64;
    Ok(doubled_u_statistic(id_scores, ood_scores) as f64 / (2.0 * pairs))
}

/// Fraction of OOD scores at or above the largest threshold that still
/// accepts at least `tpr_target` of the ID scores.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<f64> {
    check_nonempty(id_scores, ood_scores)?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "TPR target must lie in (0, 1], got {tpr_target}"
        )));
    }
    let mut sorted = id_scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Smallest k with k / n >= target; the guard absorbs representation error in the product.
    let needed = ((tpr_target * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let threshold = sorted[needed.min(sorted.len()) - 1];
    let accepted = ood_scores.iter().filter(|&&s| s >= threshold).count();
    Ok(accepted as f64 / ood_scores.len() as f64)
}

/// Average precision with `pos` as the positive class.
pub fn aupr(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    check_nonempty(pos_scores, neg_scores)?;
    let mut all: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total_pos = pos_scores.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / total_pos;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// AUPR with ID as the positive class.
pub fn aupr_in(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    aupr(id_scores, ood_scores)
}

/// AUPR with OOD as the positive class (scores negated).
pub fn aupr_out(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    let neg_ood: Vec<f64> = ood_scores.iter().map(|s| -s).collect();
    let neg_id: Vec<f64> = id_scores.iter().map(|s| -s).collect();
    aupr(&neg_ood, &neg_id)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax logit (lowest index on ties) equals the label.
pub fn id_accuracy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != logits.rows() {
        return Err(Error::dims("id_accuracy labels", logits.rows(), labels.len()));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let correct = logits
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Metrics for one (scorer, OOD set) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scorer: String,
    pub ood_set: String,
    pub auroc: f64,
    pub fpr95: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
    pub id_acc: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

/// Column order of the results CSV.
pub const REPORT_COLUMNS: [&str; 9] = [
    "scorer", "ood_set", "auroc", "fpr95", "aupr_in", "aupr_out", "id_acc", "n_id", "n_ood",
];

impl EvalReport {
    pub fn compute(scorer: &str, ood_set: &str, id_scores: &[f64], ood_scores: &[f64], id_acc: f64) -> Result<Self> {
        Ok(Self {
            scorer: scorer.to_string(),
            ood_set: ood_set.to_string(),
            auroc: auroc(id_scores, ood_scores)?,
            fpr95: fpr_at_tpr(id_scores, ood_scores, 0.95)?,
            aupr_in: aupr_in(id_scores, ood_scores)?,
            aupr_out: aupr_out(id_scores, ood_scores)?,
            id_acc,
            n_id: id_scores.len(),
            n_ood: ood_scores.len(),
        })
    }
}

/// Writes a header plus one row per report in [`REPORT_COLUMNS`] order.
pub fn write_reports<W: Write>(out: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.scorer.clone(),
            r.ood_set.clone(),
            r.auroc.to_string(),
            r.fpr95.to_string(),
            r.aupr_in.to_string(),
            r.aupr_out.to_string(),
            r.id_acc.to_string(),
            r.n_id.to_string(),
            r.n_ood.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SeededRng;
    use proptest::prelude::*;

    /// O(n·m) pairwise AUROC.
    fn auroc_oracle(id: &[f64], ood: &[f64]) -> f64 {
        let mut credit = 0.0;
        for a in id {
            for b in ood {
                credit += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
        credit / (id.len() * ood.len()) as f64
    }

    /// Enumerates every candidate threshold and keeps the largest with enough ID recall.
    fn fpr_oracle(id: &[f64], ood: &[f64], target: f64) -> f64 {
        let mut best: Option<f64> = None;
        for &t in id.iter().chain(ood) {
            let tpr = id.iter().filter(|&&s| s >= t).count() as f64 / id.len() as f64;
            if tpr + 1e-12 >= target && best.is_none_or(|b| t > b) {
                best = Some(t);
            }
        }
        let t = best.expect("the minimum score always admits every ID sample");
        ood.iter().filter(|&&s| s >= t).count() as f64 / ood.len() as f64
    }

    /// Average precision by brute force over distinct thresholds.
    fn aupr_oracle(pos: &[f64], neg: &[f64]) -> f64 {
        let mut thresholds: Vec<f64> = pos.iter().chain(neg).copied().collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let mut prev = 0.0;
        let mut area = 0.0;
        for t in thresholds {
            let tp = pos.iter().filter(|&&s| s >= t).count() as f64;
            let fp = neg.iter().filter(|&&s| s >= t).count() as f64;
            let recall = tp / pos.len() as f64;
            area += (recall - prev) * tp / (tp + fp);
            prev = recall;
        }
        area
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(auroc(&[1.0, 3.0], &[2.0]).unwrap(), 0.5);
        assert!(matches!(auroc(&[], &[1.0]), Err(Error::EmptyScoreSet)));
        assert!(matches!(auroc(&[1.0], &[]), Err(Error::EmptyScoreSet)));
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(fpr_at_tpr(&[5.0, 6.0, 7.0], &[1.0, 2.0], 0.95).unwrap(), 0.0);
        let grid: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(fpr_at_tpr(&grid, &grid, 0.95).unwrap(), 0.95);
        assert_eq!(fpr_oracle(&grid, &grid, 0.95), 0.95);

        let mut rng = SeededRng::new(8);
        let a: Vec<f64> = (0..10_000).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..10_000).map(|_| rng.normal()).collect();
        assert!((fpr_at_tpr(&a, &b, 0.95).unwrap() - 0.95).abs() < 0.02);
        assert!(fpr_at_tpr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn aupr_examples() {
        assert_eq!(aupr(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(aupr(&[1.0; 3], &[1.0; 9]).unwrap(), 0.25);
        let pos = [0.9, 0.2, 0.6];
        let neg = [0.5, 0.7, 0.1];
        assert!((aupr(&pos, &neg).unwrap() - aupr_oracle(&pos, &neg)).abs() < 1e-12);
    }

    #[test]
    fn accuracy_examples() {
        let onehot = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(id_accuracy(&onehot, &[0, 2]).unwrap(), 1.0);
        assert_eq!(id_accuracy(&onehot, &[1, 0]).unwrap(), 0.0);
        let z = Matrix::from_rows(&[[2.0, 1.0], [0.0, 3.0], [5.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(id_accuracy(&z, &[0, 1, 0, 1]).unwrap(), 0.75);
        // Tie goes to class 0.
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn report_csv_columns() {
        let r = EvalReport::compute("msp", "near", &[0.9, 0.8], &[0.1, 0.85], 1.0).unwrap();
        let mut buf = Vec::new();
        write_reports(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scorer,ood_set,auroc,fpr95,aupr_in,aupr_out,id_acc,n_id,n_ood"
        );
        assert!(lines.next().unwrap().starts_with("msp,near,0.75,"));
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        // Small integer grid forces plenty of ties.
        prop::collection::vec((0i32..12).prop_map(|v| v as f64 * 0.5), 1..50)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn metrics_match_oracles(id in scores(), ood in scores()) {
            prop_assert!((auroc(&id, &ood).unwrap() - auroc_oracle(&id, &ood)).abs() < 1e-9);
            prop_assert!((fpr_at_tpr(&id, &ood, 0.95).unwrap() - fpr_oracle(&id, &ood, 0.95)).abs() < 1e-9);
            prop_assert!((aupr(&id, &ood).unwrap() - aupr_oracle(&id, &ood)).abs() < 1e-9);
        }

        #[test]
        fn auroc_antisymmetric(id in scores(), ood in scores()) {
            let total = 2 * (id.len() * ood.len()) as u64;
            prop_assert_eq!(doubled_u_statistic(&id, &ood) + doubled_u_statistic(&ood, &id), total);
            let sum = auroc(&id, &ood).unwrap() + auroc(&ood, &id).unwrap();
            prop_assert!((sum - 1.0).abs() <= f64::EPSILON);
        }

        #[test]
        fn monotone_transform_invariance(id in scores(), ood in scores()) {
            let t = |v: &[f64]| v.iter().map(|x| (x * 0.7).exp()).collect::<Vec<_>>();
            prop_assert_eq!(auroc(&id, &ood).unwrap(), auroc(&t(&id), &t(&ood)).unwrap());
            prop_assert_eq!(fpr_at_tpr(&id, &ood, 0.95).unwrap(), fpr_at_tpr(&t(&id), &t(&ood), 0.95).unwrap());
        }

        #[test]
        fn aupr_out_is_swapped_aupr_in(id in scores(), ood in scores()) {
            let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
            prop_assert_eq!(aupr_out(&id, &ood).unwrap(), aupr_in(&neg(&ood), &neg(&id)).unwrap());
        }
    }
}
