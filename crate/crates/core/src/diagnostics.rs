//! Neural-Collapse statistics and feature-geometry histograms.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::numeric::{distance, dot, mean_std, norm2, Matrix, EPS_NORM};

/// Collapse summary of a labeled feature set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcReport {
    /// `tr(Σ_W) / tr(Σ_B)`, within-class over between-class scatter.
    pub nc1: f64,
    /// Coefficient of variation of the centered class-mean norms.
    pub norm_cv: f64,
    /// Mean `|cos(m̄_a, m̄_b) + 1/(C−1)|` over class pairs.
    pub etf_deviation: f64,
    /// Training error, when the caller knows it.
    pub train_error: Option<f64>,
}

/// NC statistics for `features` with 0-based `labels` over `classes` classes.
pub fn nc_metrics(features: &Matrix, labels: &[usize], classes: usize) -> Result<NcReport> {
    if labels.len() != features.rows() {
        return Err(Error::dims("nc_metrics labels", features.rows(), labels.len()));
    }
    if classes < 2 {
        return Err(Error::InvalidConfig("NC statistics need at least 2 classes".into()));
    }
    let dim = features.cols();
    let mut counts = vec![0usize; classes];
    let mut means = Matrix::zeros(classes, dim);
    for (h, &y) in features.iter_rows().zip(labels) {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        counts[y] += 1;
        for (m, v) in means.row_mut(y).iter_mut().zip(h) {
            *m += v;
        }
    }
    for (class, &count) in counts.iter().enumerate() {
        if count < 2 {
            return Err(Error::ClassTooSmall { class, count });
        }
        means.row_mut(class).iter_mut().for_each(|m| *m /= count as f64);
    }
    let global = means.column_mean();

    let within = features
        .iter_rows()
        .zip(labels)
        .map(|(h, &y)| {
            let d = distance(h, means.row(y));
            d * d
        })
        .sum::<f64>()
        / features.rows() as f64;

    let centered: Vec<Vec<f64>> = means
        .iter_rows()
        .map(|m| m.iter().zip(&global).map(|(a, g)| a - g).collect())
        .collect();
    let norms: Vec<f64> = centered.iter().map(|c| norm2(c)).collect();
    let between = norms.iter().map(|n| n * n).sum::<f64>() / classes as f64;
    if between <= EPS_NORM * EPS_NORM {
        return Err(Error::DegenerateScatter);
    }

    let (mean_norm, std_norm) = mean_std(&norms);
    let target = -1.0 / (classes - 1) as f64;
    let mut deviation = 0.0;
    let mut pairs = 0usize;
    for a in 0..classes {
        for b in a + 1..classes {
            let denom = norms[a] * norms[b];
            let cos = if denom > 0.0 {
                dot(&centered[a], &centered[b]) / denom
            } else {
                0.0
            };
            deviation += (cos - target).abs();
            pairs += 1;
        }
    }

    Ok(NcReport {
        nc1: within / between,
        norm_cv: std_norm / mean_norm,
        etf_deviation: deviation / pairs as f64,
        train_error: None,
    })
}

/// Equal-width histogram over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bins `values` into `bins` equal bins over `[lo, hi]`. Values outside the
    /// range are clamped into the edge bins, so mass is always conserved.
    pub fn with_range(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidConfig(format!(
                "histogram needs at least 2 bins, got {bins}"
            )));
        }
        let mut counts = vec![0; bins];
        let width = hi - lo;
        for &v in values {
            let idx = if width > 0.0 {
                (((v - lo) / width) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize
            } else {
                0
            };
            counts[idx] += 1;
        }
        Ok(Self { lo, hi, counts })
    }

    /// Spans the observed range of `values`.
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        let (lo, hi) = value_range(values.iter().copied()).unwrap_or((0.0, 0.0));
        Self::with_range(values, lo, hi, bins)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    /// Left edge of the fullest bin (first one on ties).
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        self.lo + best as f64 * self.bin_width()
    }
}

pub(crate) fn value_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// `‖h − μ‖` per row.
pub fn radii(features: &Matrix, center: &[f64]) -> Result<Vec<f64>> {
    if features.cols() != center.len() {
        return Err(Error::dims("radii", center.len(), features.cols()));
    }
    Ok(features.iter_rows().map(|h| distance(h, center)).collect())
}

/// `max_c cos(h, w_c)` per row. Zero feature rows get cosine 0.
pub fn max_cosines(features: &Matrix, class_weights: &Matrix) -> Result<Vec<f64>> {
    if features.cols() != class_weights.cols() {
        return Err(Error::dims("max_cosines", class_weights.cols(), features.cols()));
    }
    let mut w_norms = Vec::with_capacity(class_weights.rows());
    for w in class_weights.iter_rows() {
        let n = norm2(w);
        if n <= EPS_NORM {
            return Err(Error::ZeroNorm { norm: n });
        }
        w_norms.push(n);
    }
    Ok(features
        .iter_rows()
        .map(|h| {
            let hn = norm2(h);
            if hn <= EPS_NORM {
                return 0.0;
            }
            class_weights
                .iter_rows()
                .zip(&w_norms)
                .map(|(w, wn)| dot(h, w) / (hn * wn))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

/// Histogram of distances to `center` over the observed range.
pub fn radius_histogram(features: &Matrix, center: &[f64], bins: usize) -> Result<Histogram> {
    Histogram::from_values(&radii(features, center)?, bins)
}

/// Histogram of per-row max cosine to the class weights, over `[-1, 1]`.
pub fn max_cosine_histogram(features: &Matrix, class_weights: &Matrix, bins: usize) -> Result<Histogram> {
    Histogram::with_range(&max_cosines(features, class_weights)?, -1.0, 1.0, bins)
}

/// Two histograms over a shared binning, ready for overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedHistogram {
    pub id: Histogram,
    pub ood: Histogram,
}

impl PairedHistogram {
    pub fn new(id_values: &[f64], ood_values: &[f64], bins: usize) -> Result<Self> {
        let (lo, hi) = value_range(id_values.iter().chain(ood_values).copied()).unwrap_or((0.0, 0.0));
        Ok(Self {
            id: Histogram::with_range(id_values, lo, hi, bins)?,
            ood: Histogram::with_range(ood_values, lo, hi, bins)?,
        })
    }

    /// CSV with columns `bin_lo,bin_hi,id_count,ood_count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lo", "bin_hi", "id_count", "ood_count"])?;
        let width = self.id.bin_width();
        for (i, (a, b)) in self.id.counts.iter().zip(&self.ood.counts).enumerate() {
            let lo = self.id.lo + i as f64 * width;
            w.write_record([lo.to_string(), (lo + width).to_string(), a.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Standalone SVG with two overlaid step outlines (density-normalized) and a legend.
    pub fn to_svg(&self, title: &str, x_label: &str) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const LEFT: f64 = 60.0;
        const RIGHT: f64 = 20.0;
        const TOP: f64 = 40.0;
        const BOTTOM: f64 = 50.0;
        let plot_w = W - LEFT - RIGHT;
        let plot_h = H - TOP - BOTTOM;

        let density = |h: &Histogram| -> Vec<f64> {
            let total = h.total().max(1) as f64;
            h.counts.iter().map(|&c| c as f64 / total).collect()
        };
        let series = [
            ("ID", "#1f77b4", density(&self.id)),
            ("pseudo-OOD", "#ff7f0e", density(&self.ood)),
        ];
        let y_max = series
            .iter()
            .flat_map(|s| s.2.iter().copied())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let bins = self.id.counts.len();
        let x_at = |i: usize| LEFT + plot_w * i as f64 / bins as f64;
        let y_at = |v: f64| TOP + plot_h * (1.0 - v / y_max);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        // Axes.
        let _ = writeln!(
            svg,
            r#"<path d="M{LEFT} {TOP} V{} H{}" fill="none" stroke="black"/>"#,
            TOP + plot_h,
            LEFT + plot_w
        );
        for (frac, anchor) in [(0.0, "start"), (0.5, "middle"), (1.0, "end")] {
            let v = self.id.lo + frac * (self.id.hi - self.id.lo);
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{:.3}</text>"#,
                LEFT + frac * plot_w,
                TOP + plot_h + 16.0,
                v
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            H - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">fraction</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0
        );
        for (name, color, values) in &series {
            let mut d = format!("M{:.2} {:.2}", x_at(0), y_at(0.0));
            for (i, v) in values.iter().enumerate() {
                let _ = write!(d, " V{:.2} H{:.2}", y_at(*v), x_at(i + 1));
            }
            let _ = write!(d, " V{:.2}", y_at(0.0));
            let _ = writeln!(
                svg,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"><title>{name}</title></path>"#
            );
        }
        // Legend.
        for (k, (name, color, _)) in series.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * k as f64;
            let x = LEFT + plot_w - 120.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="3"/>"#,
                x + 20.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{name}</text>"#,
                x + 26.0,
                y + 4.0
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
