use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{information_from_probs, log_likelihood, score_from_probs, CoefMatrix, Design, NUM_LOGITS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Convergence threshold on `max |score|` and on the Newton step norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Added to the information diagonal at every iteration and in `cov`.
    pub ridge: f64,
    /// Coefficients larger than this in absolute value flag separation.
    pub divergence_bound: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tol: 1e-8,
            max_iter: 100,
            ridge: 1e-8,
            divergence_bound: 15.0,
        }
    }
}

/// Maximum-likelihood fit with its covariance estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coef: CoefMatrix,
    pub loglik: f64,
    pub n_obs: usize,
    /// Side length of `cov`, `3 (p + 1)`.
    pub cov_dim: usize,
    /// Row-major inverse of (information + ridge I) at the estimate, ordered
    /// like the stacked coefficients.
    pub cov: Vec<f64>,
    pub n_iter: usize,
    pub converged: bool,
    pub separation_flag: bool,
    /// Response classes with no observation in the data.
    pub absent_classes: Vec<u8>,
}

impl FitResult {
    pub fn cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.cov_dim, self.cov_dim, &self.cov)
    }

    /// Covariance entry between stacked components `(k, j)` and `(l, m)`.
    pub fn cov_entry(&self, k: usize, j: usize, l: usize, m: usize) -> f64 {
        let a = self.coef.stacked_index(k, j);
        let b = self.coef.stacked_index(l, m);
        self.cov[a * self.cov_dim + b]
    }

    /// Standard error of `beta_kj`.
    pub fn std_error(&self, k: usize, j: usize) -> f64 {
        self.cov_entry(k, j, k, j).max(0.0).sqrt()
    }

    /// `-2 loglik + 2 * 3 (p + 1)`.
    pub fn aic(&self) -> f64 {
        -2.0 * self.loglik + 2.0 * (NUM_LOGITS * self.coef.width()) as f64
    }

    /// Usable for effect estimates: converged and not separated.
    pub fn is_reliable(&self) -> bool {
        self.converged && !self.separation_flag
    }
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Some(chol.solve(b));
    }
    a.clone().lu().solve(b)
}

fn invert_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Some(chol.inverse());
    }
    a.clone().try_inverse()
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Fits the model by Newton's method with step halving.
///
/// Starts from `beta = 0`. Each iteration solves
/// `(information + ridge I) step = score` and halves the step until the
/// log-likelihood does not decrease. Separated or degenerate data do not
/// abort the fit; they set `separation_flag`.
pub fn fit(data: &Design, config: &FitConfig) -> Result<FitResult> {
    fit_from(data, config, CoefMatrix::zeros(data.names().to_vec()))
}

/// Like [`fit`], starting from `start`.
pub(crate) fn fit_from(data: &Design, config: &FitConfig, start: CoefMatrix) -> Result<FitResult> {
    let n = data.n_obs();
    if n == 0 {
        return Err(Error::Fit("no observations".into()));
    }
    let mut present = [false; 4];
    for &y in data.labels() {
        present[y as usize] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Fit("at least two response classes are required".into()));
    }
    let absent_classes: Vec<u8> = (0..4u8).filter(|&k| !present[k as usize]).collect();

    let names = data.names().to_vec();
    let dim = NUM_LOGITS * data.width();
    let ridge = DMatrix::<f64>::identity(dim, dim) * config.ridge;

    let mut beta = start;
    let mut ll = log_likelihood(&beta, data)?;
    let mut converged = false;
    let mut n_iter = 0;
    let mut pi = data.probabilities(&beta)?;

    while n_iter < config.max_iter {
        let g = score_from_probs(data, &pi);
        if max_abs(&g) < config.tol {
            converged = true;
            break;
        }
        n_iter += 1;
        let h = information_from_probs(data, &pi) + &ridge;
        let step = solve_spd(&h, &g)
            .ok_or_else(|| Error::Fit("information matrix is singular even with ridge".into()))?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit("Newton step is not finite".into()));
        }

        let theta = DVector::from_vec(beta.stacked());
        let mut t = 1.0;
        let accepted = loop {
            let candidate = CoefMatrix::from_stacked(names.clone(), (&theta + &step * t).as_slice());
            let ll_new = log_likelihood(&candidate, data)?;
            if ll_new >= ll {
                break Some((candidate, ll_new));
            }
            t *= 0.5;
            if t < 1e-10 {
                break None;
            }
        };
        match accepted {
            Some((candidate, ll_new)) => {
                beta = candidate;
                ll = ll_new;
                pi = data.probabilities(&beta)?;
                if max_abs(&step) * t < config.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                // No ascent along the Newton direction: we are at the optimum
                // up to rounding if the full step is already negligible.
                converged = max_abs(&step) < config.tol.sqrt();
                break;
            }
        }
    }

    let h = information_from_probs(data, &pi) + &ridge;
    let cov = invert_spd(&h)
        .ok_or_else(|| Error::Fit("cannot invert information matrix at the estimate".into()))?;
    // symmetrize against rounding in the inverse
    let cov = (&cov + cov.transpose()) * 0.5;
    let cov_row_major: Vec<f64> = (0..dim)
        .flat_map(|i| (0..dim).map(move |j| (i, j)))
        .map(|(i, j)| cov[(i, j)])
        .collect();

    let diverged = beta.stacked().iter().any(|b| b.abs() > config.divergence_bound);
    Ok(FitResult {
        coef: beta,
        loglik: ll.min(0.0),
        n_obs: n,
        cov_dim: dim,
        cov: cov_row_major,
        n_iter,
        converged,
        separation_flag: diverged || !absent_classes.is_empty(),
        absent_classes,
    })
}
