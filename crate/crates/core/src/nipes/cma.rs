//! Full-covariance CMA-ES core (rank-one plus rank-mu updates, cumulative
//! step-size adaptation). Minimizes; callers that maximize negate their
//! scores. The sampler state is explicit: `ask` draws from the caller's rng,
//! so the whole optimization is a pure function of (init, rng stream, told
//! costs).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// Floor applied to covariance eigenvalues; keeps the matrix positive
/// definite under numerical drift.
const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CmaEs {
    dim: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    /// E||N(0, I)||, used by step-size adaptation.
    chi_n: f64,

    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    iteration: usize,

    /// Eigenbasis of `cov` (columns) and sqrt-eigenvalues, refreshed after
    /// every update; sampling and path whitening both use it.
    eig_basis: DMatrix<f64>,
    eig_sqrt: DVector<f64>,
}

impl CmaEs {
    pub fn new(mean: Vec<f64>, sigma: f64, lambda: usize) -> Self {
        let dim = mean.len();
        assert!(dim >= 1, "CMA-ES needs at least one dimension");
        assert!(lambda >= 2, "population size must be at least 2");
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let n = dim as f64;
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
        let c_mu = (1.0 - c_1).min(
            2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) * (n + 2.0) + mu_eff),
        );
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

        let mut state = CmaEs {
            dim,
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
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(dim, dim),
            p_sigma: DVector::zeros(dim),
            p_c: DVector::zeros(dim),
            iteration: 0,
            eig_basis: DMatrix::identity(dim, dim),
            eig_sqrt: DVector::from_element(dim, 1.0),
        };
        state.decompose();
        state
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Draws the next population from N(mean, sigma^2 C).
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        (0..self.lambda)
            .map(|_| {
                let z = DVector::from_fn(self.dim, |_, _| rng.sample(StandardNormal));
                let x = &self.mean + self.sigma * (&self.eig_basis * z.component_mul(&self.eig_sqrt));
                x.as_slice().to_vec()
            })
            .collect()
    }

    /// Updates mean, paths, covariance, and step size from the population and
    /// its costs (lower is better; ties keep candidate order).
    pub fn tell(&mut self, candidates: &[Vec<f64>], costs: &[f64]) {
        assert_eq!(candidates.len(), self.lambda, "population size mismatch");
        assert_eq!(costs.len(), self.lambda, "cost count mismatch");
        self.iteration += 1;

        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));

        let ys: Vec<DVector<f64>> = order[..self.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &self.mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(self.dim);
        for (w, y) in self.weights.iter().zip(&ys) {
            y_w += *w * y;
        }

        // Whitened mean step for the sigma path: C^(-1/2) y_w.
        let whitened =
            &self.eig_basis * (self.eig_basis.transpose() * &y_w).component_div(&self.eig_sqrt);
        self.p_sigma = (1.0 - self.c_sigma) * &self.p_sigma
            + (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt() * whitened;
        let ps_norm = self.p_sigma.norm();
        let unbias = (1.0 - (1.0 - self.c_sigma).powi(2 * self.iteration as i32)).sqrt();
        let h_sigma = ps_norm / unbias < (1.4 + 2.0 / (self.dim as f64 + 1.0)) * self.chi_n;

        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = (1.0 - self.c_c) * &self.p_c
            + h * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt() * &y_w;

        let stall_fix = (1.0 - h) * self.c_c * (2.0 - self.c_c);
        let mut cov = (1.0 - self.c_1 - self.c_mu + self.c_1 * stall_fix) * &self.cov
            + self.c_1 * (&self.p_c * self.p_c.transpose());
        for (w, y) in self.weights.iter().zip(&ys) {
            cov += (self.c_mu * w) * (y * y.transpose());
        }
        // Kill asymmetry drift before decomposing.
        self.cov = 0.5 * (&cov + cov.transpose());

        self.mean += self.sigma * &y_w;
        self.sigma *= ((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        self.decompose();
    }

    fn decompose(&mut self) {
        let eig = SymmetricEigen::new(self.cov.clone());
        let mut clamped = false;
        let values = eig.eigenvalues.map(|v| {
            if v < EIGEN_FLOOR {
                clamped = true;
                EIGEN_FLOOR
            } else {
                v
            }
        });
        if clamped {
            // Repair the stored covariance so it matches what we sample from.
            self.cov = &eig.eigenvectors
                * DMatrix::from_diagonal(&values)
                * eig.eigenvectors.transpose();
        }
        self.eig_sqrt = values.map(f64::sqrt);
        self.eig_basis = eig.eigenvectors;
    }
}
