use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::select::chi_square_sf;
use super::FitResult;
use crate::error::{Error, Result};

/// Wald test of `beta_3 = beta_1 + beta_2`, i.e. independence of the
/// arboviral and malaria infections given the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// `beta_3 - beta_1 - beta_2`, intercept first.
    pub h: Vec<f64>,
}

const MAX_CONDITION: f64 = 1e14;

/// Computes `W = h' (D V D')^{-1} h` with `D = (-I, -I, I)`.
pub fn wald_independence(fit: &FitResult) -> Result<WaldResult> {
    let w = fit.coef.width();
    if fit.cov_dim != 3 * w || fit.cov.len() != fit.cov_dim * fit.cov_dim {
        return Err(Error::Input("fit covariance has the wrong shape".into()));
    }
    if fit.cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("fit covariance is not finite".into()));
    }
    let c = fit.coef.row(3);
    let a = fit.coef.row(1);
    let b = fit.coef.row(2);
    let h = DVector::from_fn(w, |j, _| c[j] - a[j] - b[j]);

    let v = fit.cov_matrix();
    let mut d = DMatrix::zeros(w, 3 * w);
    for j in 0..w {
        d[(j, j)] = -1.0;
        d[(j, w + j)] = -1.0;
        d[(j, 2 * w + j)] = 1.0;
    }
    let sigma = &d * v * d.transpose();
    let sigma = (&sigma + sigma.transpose()) * 0.5;

    let eig = sigma.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    let min_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &e| m.min(e));
    let condition = if min_eig > 0.0 { max_eig / min_eig } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::SingularCovariance { condition });
    }
    let chol = sigma.cholesky().ok_or(Error::SingularCovariance { condition })?;
    let statistic = h.dot(&chol.solve(&h)).max(0.0);
    Ok(WaldResult {
        statistic,
        dof: w,
        p_value: chi_square_sf(statistic, w),
        h: h.iter().copied().collect(),
    })
}
