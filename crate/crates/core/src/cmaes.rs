//! Active CMA-ES minimizer with an ask/tell interface.
//!
//! Rank-μ and rank-one covariance updates plus negative (active) weights for
//! the worst half of each generation, with cumulative step-size adaptation.
//! Constants follow the standard defaults from Hansen's CMA-ES tutorial.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CONDITION: f64 = 1e14;
pub const MIN_STEP_SIZE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub initial_mean: Vec<f64>,
    /// Per-coordinate initial standard deviations.
    pub initial_step_sizes: Vec<f64>,
    /// Defaults to `4 + floor(3 ln d)`.
    pub population_size: Option<usize>,
    pub max_evaluations: usize,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(initial_mean: Vec<f64>, initial_step_sizes: Vec<f64>, max_evaluations: usize, seed: u64) -> Self {
        OptimizerConfig {
            initial_mean,
            initial_step_sizes,
            population_size: None,
            max_evaluations,
            seed,
        }
    }

    pub fn dimension(&self) -> usize {
        self.initial_mean.len()
    }
}

pub fn default_population_size(dimension: usize) -> usize {
    4 + (3.0 * (dimension as f64).ln()).floor() as usize
}

/// One line of the per-generation optimizer trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub evaluations: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub step_size: f64,
    pub axis_ratio: f64,
}

impl GenerationRecord {
    pub const CSV_HEADER: &'static str = "generation,evaluations,best,mean_fitness,step_size,axis_ratio";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e}",
            self.generation, self.evaluations, self.best_fitness, self.mean_fitness, self.step_size, self.axis_ratio
        )
    }
}

/// Strategy constants derived from dimension and population size.
#[derive(Debug, Clone)]
struct Constants {
    lambda: usize,
    mu: usize,
    /// Length `lambda`; the first `mu` are positive and sum to one.
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Constants {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=lambda)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let pos_sum: f64 = raw[..mu].iter().sum();
        let pos_sq: f64 = raw[..mu].iter().map(|w| w * w).sum();
        let mu_eff = pos_sum * pos_sum / pos_sq;
        let neg = &raw[mu..];
        let neg_abs_sum: f64 = neg.iter().map(|w| w.abs()).sum();
        let neg_sq: f64 = neg.iter().map(|w| w * w).sum();
        let mu_eff_neg = if neg_sq > 0.0 { neg_abs_sum * neg_abs_sum / neg_sq } else { 0.0 };

        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let alpha_cov = 2.0;
        let c_1 = alpha_cov / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1)
            .min(alpha_cov * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + alpha_cov * mu_eff / 2.0));

        let alpha_mu = 1.0 + c_1 / c_mu;
        let alpha_mu_eff = 1.0 + 2.0 * mu_eff_neg / (mu_eff + 2.0);
        let alpha_posdef = (1.0 - c_1 - c_mu) / (nf * c_mu);
        let neg_scale = alpha_mu.min(alpha_mu_eff).min(alpha_posdef);

        let weights = raw
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                if i < mu {
                    w / pos_sum
                } else if neg_abs_sum > 0.0 {
                    neg_scale * w / neg_abs_sum
                } else {
                    0.0
                }
            })
            .collect();
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

        Constants {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CmaEs {
    k: Constants,
    seed: u64,
    max_evaluations: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sigma: f64,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    /// Eigenvectors of `cov`.
    basis: DMatrix<f64>,
    /// Square roots of the eigenvalues of `cov`.
    scales: DVector<f64>,
    generation: usize,
    evaluations: usize,
    best: Option<(Vec<f64>, f64)>,
}

impl CmaEs {
    pub fn new(config: &OptimizerConfig) -> Result<Self> {
        let n = config.dimension();
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if config.initial_step_sizes.len() != n {
            return Err(Error::LengthMismatch {
                left: config.initial_step_sizes.len(),
                right: n,
            });
        }
        if config.initial_step_sizes.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("step sizes must be positive and finite".into()));
        }
        if config.initial_mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial mean"));
        }
        let lambda = config.population_size.unwrap_or_else(|| default_population_size(n));
        if lambda < 4 {
            return Err(Error::InvalidArgument(format!("population size {lambda} < 4")));
        }

        // The global step size carries the largest per-coordinate scale; the
        // diagonal covariance holds the relative scales.
        let sigma = config.initial_step_sizes.iter().copied().fold(0.0, f64::max);
        let rel = DVector::from_iterator(n, config.initial_step_sizes.iter().map(|s| s / sigma));
        let cov = DMatrix::from_diagonal(&rel.map(|r| r * r));

        Ok(CmaEs {
            k: Constants::new(n, lambda),
            seed: config.seed,
            max_evaluations: config.max_evaluations,
            mean: DVector::from_column_slice(&config.initial_mean),
            cov,
            sigma,
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            basis: DMatrix::identity(n, n),
            scales: rel,
            generation: 0,
            evaluations: 0,
            best: None,
        })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn population_size(&self) -> usize {
        self.k.lambda
    }

    pub fn parent_count(&self) -> usize {
        self.k.mu
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn step_size(&self) -> f64 {
        self.sigma
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(x, f)| (x.as_slice(), *f))
    }

    /// Square root of the covariance condition number.
    pub fn axis_ratio(&self) -> f64 {
        let max = self.scales.max();
        let min = self.scales.min();
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    pub fn condition_number(&self) -> f64 {
        self.axis_ratio().powi(2)
    }

    pub fn terminated(&self) -> bool {
        self.evaluations >= self.max_evaluations
            || self.condition_number() > MAX_CONDITION
            || self.sigma < MIN_STEP_SIZE
            || !self.sigma.is_finite()
    }

    /// Samples the next population. The result depends only on the seed,
    /// the generation counter and the current distribution.
    pub fn ask(&self) -> Result<Vec<Vec<f64>>> {
        if self.terminated() {
            return Err(Error::Terminated);
        }
        let n = self.dimension();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.generation as u64);
        let bd = &self.basis * DMatrix::from_diagonal(&self.scales);
        Ok((0..self.k.lambda)
            .map(|_| {
                let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
                let x = &self.mean + self.sigma * (&bd * z);
                x.iter().copied().collect()
            })
            .collect())
    }

    /// Updates the distribution from a fully evaluated population (lower
    /// fitness is better). Ties are ranked by candidate index.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64]) -> Result<GenerationRecord> {
        let n = self.dimension();
        let lambda = self.k.lambda;
        if candidates.len() != fitness.len() {
            return Err(Error::LengthMismatch {
                left: candidates.len(),
                right: fitness.len(),
            });
        }
        if candidates.len() != lambda {
            return Err(Error::LengthMismatch {
                left: candidates.len(),
                right: lambda,
            });
        }
        if let Some(c) = candidates.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch { left: c.len(), right: n });
        }
        if fitness.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("fitness"));
        }

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));

        let best_idx = order[0];
        if self.best.as_ref().is_none_or(|(_, f)| fitness[best_idx] < *f) {
            self.best = Some((candidates[best_idx].clone(), fitness[best_idx]));
        }

        let k = &self.k;
        let old_mean = self.mean.clone();
        let steps: Vec<DVector<f64>> = order
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &old_mean) / self.sigma)
            .collect();

        let mut y_w = DVector::zeros(n);
        for (w, y) in k.weights.iter().zip(&steps).take(k.mu) {
            y_w += *w * y;
        }
        self.mean = &old_mean + self.sigma * &y_w;

        let inv_sqrt = &self.basis
            * DMatrix::from_diagonal(&self.scales.map(|d| 1.0 / d))
            * self.basis.transpose();

        self.p_sigma = (1.0 - k.c_sigma) * &self.p_sigma
            + (k.c_sigma * (2.0 - k.c_sigma) * k.mu_eff).sqrt() * (&inv_sqrt * &y_w);
        let ps_norm = self.p_sigma.norm();
        let decay = 1.0 - (1.0 - k.c_sigma).powi(2 * (self.generation as i32 + 1));
        let h_sigma = if ps_norm / decay.sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * k.chi_n {
            1.0
        } else {
            0.0
        };
        self.p_c = (1.0 - k.c_c) * &self.p_c + h_sigma * (k.c_c * (2.0 - k.c_c) * k.mu_eff).sqrt() * &y_w;

        let weight_sum: f64 = k.weights.iter().sum();
        let delta_h = (1.0 - h_sigma) * k.c_c * (2.0 - k.c_c);
        let mut rank_mu = DMatrix::zeros(n, n);
        for (i, (w, y)) in k.weights.iter().zip(&steps).enumerate() {
            let w = if i < k.mu {
                *w
            } else {
                // Negative weights are rescaled by the Mahalanobis length so
                // that long unsuccessful steps do not dominate.
                let len2 = (&inv_sqrt * y).norm_squared();
                if len2 > 0.0 {
                    *w * n as f64 / len2
                } else {
                    0.0
                }
            };
            rank_mu.ger(w, y, y, 1.0);
        }
        let mut cov = (1.0 + k.c_1 * delta_h - k.c_1 - k.c_mu * weight_sum) * &self.cov;
        cov.ger(k.c_1, &self.p_c, &self.p_c, 1.0);
        cov += k.c_mu * rank_mu;
        self.cov = (&cov + cov.transpose()) * 0.5;

        let exponent = (k.c_sigma / k.d_sigma) * (ps_norm / k.chi_n - 1.0);
        self.sigma *= exponent.min(1.0).exp();

        self.refresh_eigensystem();
        self.generation += 1;
        self.evaluations += lambda;

        Ok(GenerationRecord {
            generation: self.generation,
            evaluations: self.evaluations,
            best_fitness: self.best.as_ref().map_or(f64::INFINITY, |b| b.1),
            mean_fitness: fitness.iter().sum::<f64>() / lambda as f64,
            step_size: self.sigma,
            axis_ratio: self.axis_ratio(),
        })
    }

    /// Best candidate seen so far and its fitness.
    pub fn recommend(&self) -> Result<(Vec<f64>, f64)> {
        self.best.clone().ok_or(Error::NothingTold)
    }

    fn refresh_eigensystem(&mut self) {
        let eig = SymmetricEigen::new(self.cov.clone());
        let max = eig.eigenvalues.max();
        let floor = if max > 0.0 { max * f64::EPSILON } else { f64::MIN_POSITIVE };
        let values = eig.eigenvalues.map(|v| if v.is_finite() && v > 0.0 { v } else { floor });
        if values != eig.eigenvalues {
            // Active updates can push an eigenvalue through zero.
            self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&values) * eig.eigenvectors.transpose();
            self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        }
        self.scales = values.map(f64::sqrt);
        self.basis = eig.eigenvectors;
    }
}
