//! Four-class multinomial logit with class 0 as reference.
//!
//! For class `k = 1, 2, 3` the log-odds against class 0 are linear,
//! `log P(Y=k|x)/P(Y=0|x) = <x, beta_k>`, with `x_0 = 1` carrying the
//! intercept. Parameters are stacked `(beta_1, beta_2, beta_3)`; the
//! component for class `k`, column `j` lives at `(k - 1) * (p + 1) + j`.

mod fit;
mod select;
mod wald;

pub use fit::{fit, FitConfig, FitResult};
pub use select::{drop_one_lr_tests, lr_test, stepwise_aic, LrTest, StepRecord, StepwiseResult};
pub use wald::{wald_independence, WaldResult};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Covariate, CovariateVector, Dataset};
use crate::error::{Error, Result};

/// Number of non-reference classes.
pub const NUM_LOGITS: usize = 3;

/// Coefficients `beta_k` for the three non-reference classes.
///
/// Serialized as `{"covariates": [...], "beta": [[...], [...], [...]]}`,
/// where each row starts with the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefMatrix {
    #[serde(rename = "covariates")]
    covariate_names: Vec<String>,
    beta: Vec<Vec<f64>>,
}

impl CoefMatrix {
    pub fn zeros(covariate_names: Vec<String>) -> Self {
        let width = covariate_names.len() + 1;
        CoefMatrix {
            covariate_names,
            beta: vec![vec![0.0; width]; NUM_LOGITS],
        }
    }

    pub fn new(covariate_names: Vec<String>, beta: Vec<Vec<f64>>) -> Result<Self> {
        let m = CoefMatrix { covariate_names, beta };
        m.validate()?;
        Ok(m)
    }

    /// Checks row count, row widths and finiteness; used after deserializing.
    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != NUM_LOGITS {
            return Err(Error::Spec(format!(
                "beta must have {NUM_LOGITS} rows, found {}",
                self.beta.len()
            )));
        }
        let width = self.width();
        for (k, row) in self.beta.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Spec(format!(
                    "beta row {} has {} entries, expected {width} (intercept + {} covariates)",
                    k + 1,
                    row.len(),
                    self.covariate_names.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Spec(format!("beta row {} has a non-finite entry", k + 1)));
            }
        }
        Ok(())
    }

    pub fn from_stacked(covariate_names: Vec<String>, theta: &[f64]) -> Self {
        let width = covariate_names.len() + 1;
        assert_eq!(theta.len(), NUM_LOGITS * width, "stacked length mismatch");
        let beta = theta.chunks(width).map(<[f64]>::to_vec).collect();
        CoefMatrix { covariate_names, beta }
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.beta.concat()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Number of covariates `p`.
    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Row width `p + 1`.
    pub fn width(&self) -> usize {
        self.covariate_names.len() + 1
    }

    /// Coefficient row of class `k ∈ {1, 2, 3}`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.beta[k - 1]
    }

    /// `beta_kj` for class `k ∈ {1, 2, 3}` and column `j` (0 = intercept).
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.beta[k - 1][j]
    }

    pub fn set(&mut self, k: usize, j: usize, value: f64) {
        self.beta[k - 1][j] = value;
    }

    /// Position in the stacked vector of `(k, j)`.
    pub fn stacked_index(&self, k: usize, j: usize) -> usize {
        (k - 1) * self.width() + j
    }

    pub fn column_of(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name).map(|i| i + 1)
    }

    /// Design row `(1, x_1, ..., x_p)` taking covariates by name.
    pub fn design_row(&self, x: &CovariateVector) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.width());
        row.push(1.0);
        for name in &self.covariate_names {
            let c = Covariate::from_name(name).ok_or_else(|| {
                Error::Input(format!("model covariate `{name}` is not a patient covariate"))
            })?;
            row.push(x.get(c));
        }
        Ok(row)
    }

    /// Linear predictors `<x, beta_k>` for `k = 1, 2, 3`.
    pub fn linear_predictors(&self, row: &[f64]) -> [f64; NUM_LOGITS] {
        debug_assert_eq!(row.len(), self.width());
        let mut eta = [0.0; NUM_LOGITS];
        for (e, b) in eta.iter_mut().zip(&self.beta) {
            *e = row.iter().zip(b).map(|(x, b)| x * b).sum();
        }
        eta
    }
}

/// Class probabilities from the three linear predictors, computed as a
/// softmax over `(0, eta_1, eta_2, eta_3)` with the maximum subtracted.
pub fn softmax_probs(eta: &[f64; NUM_LOGITS]) -> [f64; 4] {
    let m = eta.iter().fold(0.0_f64, |m, &e| m.max(e));
    let mut p = [(-m).exp(), (eta[0] - m).exp(), (eta[1] - m).exp(), (eta[2] - m).exp()];
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    p
}

/// `log sum_k exp(eta_k)` with `eta_0 = 0`.
pub fn log_partition(eta: &[f64; NUM_LOGITS]) -> f64 {
    let m = eta.iter().fold(0.0_f64, |m, &e| m.max(e));
    let s = (-m).exp() + eta.iter().map(|e| (e - m).exp()).sum::<f64>();
    m + s.ln()
}

/// Probabilities of the four classes for a design row `(1, x_1, ..., x_p)`.
pub fn predict_proba_row(beta: &CoefMatrix, row: &[f64]) -> [f64; 4] {
    softmax_probs(&beta.linear_predictors(row))
}

/// Probabilities of the four classes for one patient.
pub fn predict_proba(beta: &CoefMatrix, x: &CovariateVector) -> Result<[f64; 4]> {
    Ok(predict_proba_row(beta, &beta.design_row(x)?))
}

/// Design matrix with a leading constant column, plus class labels.
#[derive(Debug, Clone)]
pub struct Design {
    x: DMatrix<f64>,
    labels: Vec<u8>,
    names: Vec<String>,
}

impl Design {
    /// Builds a design from covariate rows (without the constant).
    pub fn new(rows: &[Vec<f64>], labels: Vec<u8>, names: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let p = names.len();
        let mut x = DMatrix::zeros(rows.len(), p + 1);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Input(format!(
                    "row {i} has {} values, expected {p}",
                    row.len()
                )));
            }
            x[(i, 0)] = 1.0;
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Input(format!("row {i}, covariate {j} is not finite")));
                }
                x[(i, j + 1)] = v;
            }
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 3) {
            return Err(Error::Input(format!("label {bad} outside 0..=3")));
        }
        Ok(Design { x, labels, names })
    }

    pub fn from_dataset(data: &Dataset, covariates: &[Covariate]) -> Self {
        let n = data.len();
        let mut x = DMatrix::zeros(n, covariates.len() + 1);
        for (i, r) in data.records().iter().enumerate() {
            x[(i, 0)] = 1.0;
            for (j, &c) in covariates.iter().enumerate() {
                x[(i, j + 1)] = r.covariates.get(c);
            }
        }
        Design {
            x,
            labels: data.labels(),
            names: covariates.iter().map(|c| c.name().to_string()).collect(),
        }
    }

    pub fn n_obs(&self) -> usize {
        self.labels.len()
    }

    pub fn width(&self) -> usize {
        self.x.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Design restricted to the named covariates, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Design> {
        let mut cols = vec![0usize];
        for name in names {
            let j = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Input(format!("covariate `{name}` not in design")))?;
            cols.push(j + 1);
        }
        Ok(Design {
            x: self.x.select_columns(&cols),
            labels: self.labels.clone(),
            names: names.to_vec(),
        })
    }

    fn check(&self, beta: &CoefMatrix) -> Result<()> {
        if beta.width() != self.width() {
            return Err(Error::Input(format!(
                "coefficients have width {}, design has {}",
                beta.width(),
                self.width()
            )));
        }
        Ok(())
    }

    /// `n × 3` matrix of linear predictors.
    fn linear_predictors(&self, beta: &CoefMatrix) -> DMatrix<f64> {
        let b = DMatrix::from_fn(self.width(), NUM_LOGITS, |j, k| beta.beta[k][j]);
        &self.x * b
    }

    /// `n × 4` matrix of fitted class probabilities.
    pub fn probabilities(&self, beta: &CoefMatrix) -> Result<DMatrix<f64>> {
        self.check(beta)?;
        let eta = self.linear_predictors(beta);
        let mut pi = DMatrix::zeros(self.n_obs(), 4);
        for i in 0..self.n_obs() {
            let p = softmax_probs(&[eta[(i, 0)], eta[(i, 1)], eta[(i, 2)]]);
            for k in 0..4 {
                pi[(i, k)] = p[k];
            }
        }
        Ok(pi)
    }
}

/// `sum_i log pi_{y_i}(x_i)`.
pub fn log_likelihood(beta: &CoefMatrix, data: &Design) -> Result<f64> {
    data.check(beta)?;
    let eta = data.linear_predictors(beta);
    let mut ll = 0.0;
    for (i, &y) in data.labels.iter().enumerate() {
        let e = [eta[(i, 0)], eta[(i, 1)], eta[(i, 2)]];
        let own = if y == 0 { 0.0 } else { e[y as usize - 1] };
        ll += own - log_partition(&e);
    }
    Ok(ll)
}

/// Gradient of [`log_likelihood`]: component `(k, j)` is
/// `sum_i x_ij (1{y_i = k} - pi_k(x_i))`, stacked by class.
pub fn score(beta: &CoefMatrix, data: &Design) -> Result<DVector<f64>> {
    let pi = data.probabilities(beta)?;
    Ok(score_from_probs(data, &pi))
}

fn score_from_probs(data: &Design, pi: &DMatrix<f64>) -> DVector<f64> {
    let n = data.n_obs();
    let residual = DMatrix::from_fn(n, NUM_LOGITS, |i, k| {
        let indicator = if data.labels[i] as usize == k + 1 { 1.0 } else { 0.0 };
        indicator - pi[(i, k + 1)]
    });
    // width × 3, column k holds the class-(k+1) block
    let g = data.x.tr_mul(&residual);
    DVector::from_iterator(NUM_LOGITS * data.width(), g.iter().copied())
}

/// Observed information (negative Hessian) of the log-likelihood.
///
/// Block `(k, l)` equals `sum_i pi_k (1{k=l} - pi_l) x_i x_i^T`.
pub fn information(beta: &CoefMatrix, data: &Design) -> Result<DMatrix<f64>> {
    let pi = data.probabilities(beta)?;
    Ok(information_from_probs(data, &pi))
}

fn information_from_probs(data: &Design, pi: &DMatrix<f64>) -> DMatrix<f64> {
    let w = data.width();
    let n = data.n_obs();
    let mut info = DMatrix::zeros(NUM_LOGITS * w, NUM_LOGITS * w);
    let mut weighted = DMatrix::zeros(n, w);
    for k in 0..NUM_LOGITS {
        for l in k..NUM_LOGITS {
            for i in 0..n {
                let pk = pi[(i, k + 1)];
                let weight = if k == l { pk * (1.0 - pk) } else { -pk * pi[(i, l + 1)] };
                for j in 0..w {
                    weighted[(i, j)] = weight * data.x[(i, j)];
                }
            }
            let block = data.x.tr_mul(&weighted);
            info.view_mut((k * w, l * w), (w, w)).copy_from(&block);
            if k != l {
                info.view_mut((l * w, k * w), (w, w)).copy_from(&block.transpose());
            }
        }
    }
    info
}
