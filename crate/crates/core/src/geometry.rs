//! EMA tracking of the collapsed ID feature geometry: a global center, a
//! reference radius around it, and the inner-shell targets derived from that
//! radius.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::{axpy, distance, Matrix};

/// How the `K` inner shells divide `[0, r_ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShellSpacing {
    /// `ρ_k = k · r_ref / (K + 1)`
    #[default]
    Uniform,
    /// `ρ_k = r_ref · (1 − cos(kπ / (2(K + 1))))`, denser near the center.
    Cosine,
}

impl ShellSpacing {
    pub fn tag(self) -> u8 {
        match self {
            ShellSpacing::Uniform => 0,
            ShellSpacing::Cosine => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ShellSpacing::Uniform),
            1 => Some(ShellSpacing::Cosine),
            _ => None,
        }
    }
}

impl fmt::Display for ShellSpacing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShellSpacing::Uniform => "uniform",
            ShellSpacing::Cosine => "cosine",
        })
    }
}

impl FromStr for ShellSpacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ShellSpacing::Uniform),
            "cosine" => Ok(ShellSpacing::Cosine),
            other => Err(Error::InvalidConfig(format!("unknown shell spacing `{other}`"))),
        }
    }
}

/// Inner-shell target radii, strictly increasing and strictly below `r_ref`.
pub fn shell_radii(r_ref: f64, k: usize, spacing: ShellSpacing) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    if !(r_ref > 0.0) || !r_ref.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "reference radius must be positive, got {r_ref}"
        )));
    }
    let denom = (k + 1) as f64;
    Ok((1..=k)
        .map(|i| match spacing {
            ShellSpacing::Uniform => i as f64 * r_ref / denom,
            ShellSpacing::Cosine => r_ref * (1.0 - (i as f64 * std::f64::consts::PI / (2.0 * denom)).cos()),
        })
        .collect())
}

/// EMA center, EMA radius and the shells derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryState {
    pub mu: Vec<f64>,
    pub r_ref: f64,
    pub beta_mu: f64,
    pub beta_r: f64,
    pub k: usize,
    pub spacing: ShellSpacing,
    shells: Vec<f64>,
    initialized: bool,
}

impl GeometryState {
    /// Uninitialized tracker; the first batch seeds both `μ` and `r_ref`.
    pub fn new(dim: usize, k: usize, spacing: ShellSpacing, beta_mu: f64, beta_r: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidK(k));
        }
        for (name, b) in [("beta_mu", beta_mu), ("beta_r", beta_r)] {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {b}")));
            }
        }
        Ok(Self {
            mu: vec![0.0; dim],
            r_ref: 0.0,
            beta_mu,
            beta_r,
            k,
            spacing,
            shells: Vec::new(),
            initialized: false,
        })
    }

    /// Tracker with an explicit starting center and radius.
    pub fn with_state(
        mu: Vec<f64>,
        r_ref: f64,
        k: usize,
        spacing: ShellSpacing,
        beta_mu: f64,
        beta_r: f64,
    ) -> Result<Self> {
        let mut g = Self::new(mu.len(), k, spacing, beta_mu, beta_r)?;
        g.mu = mu;
        g.r_ref = r_ref;
        g.initialized = true;
        g.refresh_shells();
        Ok(g)
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Current shell radii `ρ_1 < … < ρ_K`. Empty until `r_ref` is positive.
    pub fn shells(&self) -> &[f64] {
        &self.shells
    }

    fn refresh_shells(&mut self) {
        self.shells = shell_radii(self.r_ref, self.k, self.spacing).unwrap_or_default();
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if batch.cols() != self.dim() {
            return Err(Error::dims("geometry update", self.dim(), batch.cols()));
        }
        Ok(())
    }

    /// `μ ← β_μ μ + (1 − β_μ) mean(batch)`; the first call sets `μ` to the batch mean.
    pub fn update_mean(&mut self, batch: &Matrix) -> Result<()> {
        self.check_batch(batch)?;
        let batch_mean = batch.column_mean();
        if !self.initialized {
            self.mu = batch_mean;
            return Ok(());
        }
        let b = self.beta_mu;
        self.mu.iter_mut().for_each(|m| *m *= b);
        axpy(1.0 - b, &batch_mean, &mut self.mu);
        Ok(())
    }

    /// `r_ref ← β_r r_ref + (1 − β_r) mean_i ‖h_i − μ‖`; the first call sets
    /// `r_ref` to the batch mean radius. Shells are recomputed afterwards.
    pub fn update_radius(&mut self, batch: &Matrix) -> Result<()> {
        self.check_batch(batch)?;
        let mean_radius = batch.iter_rows().map(|h| distance(h, &self.mu)).sum::<f64>() / batch.rows() as f64;
        if self.initialized {
            self.r_ref = self.beta_r * self.r_ref + (1.0 - self.beta_r) * mean_radius;
        } else {
            self.r_ref = mean_radius;
            self.initialized = true;
        }
        self.refresh_shells();
        Ok(())
    }

    /// Mean then radius, in that order.
    pub fn update(&mut self, batch: &Matrix) -> Result<()> {
        self.update_mean(batch)?;
        self.update_radius(batch)
    }

    /// Target radius for a 0-based shell index.
    pub fn shell_target(&self, index: usize) -> Result<f64> {
        self.shells
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfRange { index, k: self.k })
    }

    /// `0 < ρ_1 < … < ρ_K < r_ref`.
    pub fn shells_ordered(&self) -> bool {
        self.shells.len() == self.k
            && self.shells[0] > 0.0
            && self.shells.windows(2).all(|w| w[0] < w[1])
            && self.shells[self.k - 1] < self.r_ref
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn batch(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn seeded(mu: Vec<f64>, r: f64, beta: f64) -> GeometryState {
        GeometryState::with_state(mu, r, 4, ShellSpacing::Uniform, beta, beta).unwrap()
    }

    #[test]
    fn mean_examples() {
        let b = batch(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let mut g = seeded(vec![0.3, -0.2], 1.0, 1.0);
        g.update_mean(&b).unwrap();
        assert_eq!(g.mu, vec![0.3, -0.2]);

        let mut g = seeded(vec![0.3, -0.2], 1.0, 0.0);
        g.update_mean(&b).unwrap();
        assert_eq!(g.mu, vec![1.0, 1.0]);

        let mut g = seeded(vec![0.0, 0.0], 1.0, 0.9);
        g.update_mean(&b).unwrap();
        assert_abs_diff_eq!(g.mu[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(g.mu[1], 0.1, epsilon = 1e-15);

        assert!(matches!(g.update_mean(&Matrix::zeros(0, 2)), Err(Error::EmptyBatch)));
        assert!(g.update_mean(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn radius_examples() {
        let b = batch(&[&[3.0, 4.0]]);
        let mut g = seeded(vec![0.0, 0.0], 2.0, 1.0);
        g.update_radius(&b).unwrap();
        assert_eq!(g.r_ref, 2.0);

        let mut g = seeded(vec![1.0, 1.0], 2.0, 0.9);
        g.update_radius(&batch(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_abs_diff_eq!(g.r_ref, 0.9 * 2.0, epsilon = 1e-15);
        assert!(matches!(g.update_radius(&Matrix::zeros(0, 2)), Err(Error::EmptyBatch)));
    }

    #[test]
    fn first_batch_seeds_state() {
        let mut g = GeometryState::new(2, 2, ShellSpacing::Uniform, 0.95, 0.95).unwrap();
        assert!(!g.is_initialized());
        g.update(&batch(&[&[1.0, 0.0], &[-1.0, 0.0]])).unwrap();
        assert_eq!(g.mu, vec![0.0, 0.0]);
        assert_eq!(g.r_ref, 1.0);
        assert!(g.shells_ordered());
        assert_eq!(g.shells(), &[1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn ema_contraction_on_constant_stream() {
        let beta = 0.95;
        let target = [2.0, -1.0];
        let mut g = seeded(vec![10.0, 10.0], 7.0, beta);
        let init_mu_err = distance(&g.mu, &target);
        // Rows at distance 1.5 from the target center, symmetric so the mean is exact.
        let b = batch(&[&[3.5, -1.0], &[0.5, -1.0]]);
        for t in 1..=200 {
            g.update(&b).unwrap();
            let bound = beta.powi(t);
            assert!(distance(&g.mu, &target) <= bound * init_mu_err + 1e-12);
        }
        // mu converges geometrically; the radius target converges to 1.5.
        assert!((g.r_ref - 1.5).abs() < 0.1);
    }

    #[test]
    fn shell_examples() {
        let s = shell_radii(1.0, 4, ShellSpacing::Uniform).unwrap();
        for (a, b) in s.iter().zip([0.2, 0.4, 0.6, 0.8]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(shell_radii(2.0, 1, ShellSpacing::Uniform).unwrap(), vec![1.0]);
        assert!(matches!(
            shell_radii(1.0, 0, ShellSpacing::Uniform),
            Err(Error::InvalidK(0))
        ));
        assert!(shell_radii(0.0, 2, ShellSpacing::Uniform).is_err());

        let c = shell_radii(3.0, 6, ShellSpacing::Cosine).unwrap();
        assert!(c[0] > 0.0 && c.windows(2).all(|w| w[0] < w[1]) && c[5] < 3.0);
        assert_eq!("cosine".parse::<ShellSpacing>().unwrap(), ShellSpacing::Cosine);
        assert!("linear".parse::<ShellSpacing>().is_err());
    }

    #[test]
    fn out_of_range_shell_index() {
        let g = seeded(vec![0.0], 1.0, 0.9);
        assert_eq!(g.shell_target(3).unwrap(), 0.8);
        assert!(matches!(
            g.shell_target(4),
            Err(Error::IndexOutOfRange { index: 4, k: 4 })
        ));
    }

    proptest! {
        #[test]
        fn shells_strictly_ordered(r in 1e-6f64..1e6, k in 1usize..32, cosine in any::<bool>()) {
            let spacing = if cosine { ShellSpacing::Cosine } else { ShellSpacing::Uniform };
            let s = shell_radii(r, k, spacing).unwrap();
            prop_assert_eq!(s.len(), k);
            prop_assert!(s[0] > 0.0);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s[k - 1] < r);
        }

        #[test]
        fn mean_update_is_linear(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..6),
            c in -4.0f64..4.0,
        ) {
            let x = Matrix::from_rows(&rows).unwrap();
            let cx = x.map(|v| c * v);
            let mut a = seeded(vec![0.0; 3], 1.0, 0.8);
            let mut b = a.clone();
            a.update_mean(&x).unwrap();
            b.update_mean(&cx).unwrap();
            for (ma, mb) in a.mu.iter().zip(&b.mu) {
                prop_assert!((c * ma - mb).abs() < 1e-12);
            }
        }
    }
}
