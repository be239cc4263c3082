//! Bandit policies over the ten shown results: LinUCB, Thompson sampling
//! with linear payoffs, and generalized Thompson sampling over experts.
//!
//! All linear-algebra work goes through Cholesky solves; no matrix is ever
//! inverted explicitly.

mod checkpoint;
mod policy;

pub use checkpoint::{read_checkpoint, Checkpoint, CheckpointError, RngState};
pub use policy::{
    DefaultPolicy, Decision, Expert, GtsPolicy, LinUcbPolicy, Policy, PolicyKind, RandomPolicy, TsLinearPolicy,
};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::ranksvm::{argmax, PROB_CLAMP};

pub const DEFAULT_GAMMA: f64 = 0.05;
pub const DEFAULT_ETA: f64 = 1.0;
pub const DEFAULT_V: f64 = 0.5;
pub const DEFAULT_ALPHA_EXPLORE: f64 = 1.0;
/// Relative floor applied to GTS weights after every update.
pub const WEIGHT_FLOOR: f64 = 1e-12;
/// GTS weights are divided by their maximum when it drops below this.
pub const RESCALE_BELOW: f64 = 1e-150;

#[derive(Debug, Error, PartialEq)]
pub enum BanditError {
    #[error("matrix lost positive definiteness")]
    SingularMatrix,
    #[error("cholesky factorization failed")]
    CholeskyFailure,
    #[error("all expert weights are zero")]
    ZeroWeightMass,
    #[error("dimension mismatch: state has {state}, input has {input}")]
    DimensionMismatch { state: usize, input: usize },
    #[error("no candidates")]
    NoCandidates,
}

fn factor(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, BanditError> {
    Cholesky::new(m.clone()).ok_or(BanditError::CholeskyFailure)
}

fn check_dim(dim: usize, x: &[f64]) -> Result<(), BanditError> {
    if x.len() == dim {
        Ok(())
    } else {
        Err(BanditError::DimensionMismatch { state: dim, input: x.len() })
    }
}

/// Shared-parameter LinUCB: one `(A, b)` for all candidates.
#[derive(Debug, Clone)]
pub struct LinUcbState {
    a: DMatrix<f64>,
    b: DVector<f64>,
    alpha: f64,
    chol: Cholesky<f64, Dyn>,
}

impl LinUcbState {
    pub fn new(dim: usize, alpha_explore: f64) -> Self {
        let a = DMatrix::identity(dim, dim);
        let chol = factor(&a).expect("identity is positive definite");
        Self {
            a,
            b: DVector::zeros(dim),
            alpha: alpha_explore,
            chol,
        }
    }

    pub(crate) fn from_parts(a: DMatrix<f64>, b: DVector<f64>, alpha: f64) -> Result<Self, BanditError> {
        let chol = factor(&a)?;
        Ok(Self { a, b, alpha, chol })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn theta(&self) -> DVector<f64> {
        self.chol.solve(&self.b)
    }

    /// `x.theta + alpha * sqrt(x' A^-1 x)`.
    pub fn upper_bound(&self, x: &[f64]) -> Result<f64, BanditError> {
        check_dim(self.dim(), x)?;
        let x = DVector::from_column_slice(x);
        let mean = x.dot(&self.theta());
        let width = x.dot(&self.chol.solve(&x)).max(0.0).sqrt();
        Ok(mean + self.alpha * width)
    }

    pub fn select<C: AsRef<[f64]>>(&self, candidates: &[C]) -> Result<usize, BanditError> {
        if candidates.is_empty() {
            return Err(BanditError::NoCandidates);
        }
        let scores = candidates
            .iter()
            .map(|c| self.upper_bound(c.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(argmax(scores))
    }

    pub fn update(&mut self, x: &[f64], reward: f64) -> Result<(), BanditError> {
        check_dim(self.dim(), x)?;
        let x = DVector::from_column_slice(x);
        self.a += &x * x.transpose();
        self.b += &x * reward;
        self.chol = factor(&self.a).map_err(|_| BanditError::SingularMatrix)?;
        Ok(())
    }
}

/// Gaussian posterior `N(mu_hat, v^2 B^-1)` of the linear payoff model.
#[derive(Debug, Clone)]
pub struct TsLinearState {
    b: DMatrix<f64>,
    f: DVector<f64>,
    mu_hat: DVector<f64>,
    v: f64,
    chol: Cholesky<f64, Dyn>,
}

impl TsLinearState {
    pub fn new(dim: usize, v: f64) -> Self {
        let b = DMatrix::identity(dim, dim);
        let chol = factor(&b).expect("identity is positive definite");
        Self {
            b,
            f: DVector::zeros(dim),
            mu_hat: DVector::zeros(dim),
            v,
            chol,
        }
    }

    pub(crate) fn from_parts(b: DMatrix<f64>, f: DVector<f64>, v: f64) -> Result<Self, BanditError> {
        let chol = factor(&b)?;
        let mu_hat = chol.solve(&f);
        Ok(Self { b, f, mu_hat, v, chol })
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn mu_hat(&self) -> &DVector<f64> {
        &self.mu_hat
    }

    /// Draws `mu_hat + v L^-T z` with `B = L L^T` and `z ~ N(0, I)`, whose
    /// covariance is `v^2 B^-1`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>, BanditError> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        if self.v == 0.0 {
            return Ok(self.mu_hat.clone());
        }
        let lt = self.chol.l().transpose();
        let y = lt.solve_upper_triangular(&z).ok_or(BanditError::CholeskyFailure)?;
        Ok(&self.mu_hat + y * self.v)
    }

    pub fn select<C: AsRef<[f64]>, R: Rng + ?Sized>(&self, candidates: &[C], rng: &mut R) -> Result<usize, BanditError> {
        if candidates.is_empty() {
            return Err(BanditError::NoCandidates);
        }
        let mu = self.sample(rng)?;
        score_argmax(candidates, &mu, self.dim())
    }

    /// Argmax of the posterior mean payoff.
    pub fn greedy<C: AsRef<[f64]>>(&self, candidates: &[C]) -> Result<usize, BanditError> {
        score_argmax(candidates, &self.mu_hat, self.dim())
    }

    /// Posterior-mean payoff clamped into `(0, 1)`.
    pub fn predicted_reward(&self, x: &[f64]) -> f64 {
        let p: f64 = x.iter().zip(self.mu_hat.iter()).map(|(a, b)| a * b).sum();
        if p.is_finite() {
            p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
        } else {
            0.5
        }
    }

    pub fn update(&mut self, x: &[f64], reward: f64) -> Result<(), BanditError> {
        check_dim(self.dim(), x)?;
        let x = DVector::from_column_slice(x);
        self.b += &x * x.transpose();
        self.f += &x * reward;
        self.chol = factor(&self.b).map_err(|_| BanditError::SingularMatrix)?;
        self.mu_hat = self.chol.solve(&self.f);
        Ok(())
    }
}

fn score_argmax<C: AsRef<[f64]>>(candidates: &[C], mu: &DVector<f64>, dim: usize) -> Result<usize, BanditError> {
    if candidates.is_empty() {
        return Err(BanditError::NoCandidates);
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for c in candidates {
        let x = c.as_ref();
        check_dim(dim, x)?;
        scores.push(x.iter().zip(mu.iter()).map(|(a, b)| a * b).sum::<f64>());
    }
    Ok(argmax(scores))
}

/// Exponential-weights mixture over experts' rank-1 votes.
#[derive(Debug, Clone, PartialEq)]
pub struct GtsState {
    weights: Vec<f64>,
    gamma: f64,
    eta: f64,
}

impl GtsState {
    pub fn new(experts: usize, gamma: f64, eta: f64) -> Self {
        Self {
            weights: vec![1.0; experts],
            gamma,
            eta,
        }
    }

    pub fn with_weights(weights: Vec<f64>, gamma: f64, eta: f64) -> Self {
        Self { weights, gamma, eta }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        let w = self.total_weight();
        self.weights.iter().map(|x| x / w).collect()
    }

    /// `P(a) = (1 - gamma) sum_i w_i [vote_i = a] / W + gamma / K`.
    pub fn probabilities(&self, votes: &[usize], candidates: usize) -> Result<Vec<f64>, BanditError> {
        if candidates == 0 {
            return Err(BanditError::NoCandidates);
        }
        let total = self.total_weight();
        if total.is_nan() || total <= 0.0 {
            return Err(BanditError::ZeroWeightMass);
        }
        let k = candidates as f64;
        let mut p = vec![self.gamma / k; candidates];
        for (w, &a) in self.weights.iter().zip(votes) {
            p[a] += (1.0 - self.gamma) * w / total;
        }
        Ok(p)
    }

    /// Samples an arm; returns it with its selection probability.
    pub fn select<R: Rng + ?Sized>(
        &self,
        votes: &[usize],
        candidates: usize,
        rng: &mut R,
    ) -> Result<(usize, f64), BanditError> {
        let p = self.probabilities(votes, candidates)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return Ok((i, *pi));
            }
        }
        let last = candidates - 1;
        Ok((last, p[last]))
    }

    /// `w_i <- w_i exp(-eta * logloss(r_hat_i, r))`, then the relative floor.
    /// Weights are rescaled (which leaves the selection probabilities
    /// unchanged) once the largest falls below [`RESCALE_BELOW`].
    pub fn update(&mut self, predicted: &[f64], reward: f64) {
        for (w, &r_hat) in self.weights.iter_mut().zip(predicted) {
            let r_hat = r_hat.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            *w *= (-self.eta * log_loss(r_hat, reward)).exp();
        }
        let max = self.weights.iter().copied().fold(0.0, f64::max);
        if max > 0.0 && max < RESCALE_BELOW {
            self.weights.iter_mut().for_each(|w| *w /= max);
        }
        let total = self.total_weight();
        let floor = WEIGHT_FLOOR * total;
        for w in &mut self.weights {
            if *w < floor {
                *w = floor;
            }
        }
    }
}

/// `[r = 1] ln(1 / r_hat) + [r = 0] ln(1 / (1 - r_hat))`.
pub fn log_loss(r_hat: f64, reward: f64) -> f64 {
    if reward >= 0.5 {
        -r_hat.ln()
    } else {
        -(1.0 - r_hat).ln()
    }
}
