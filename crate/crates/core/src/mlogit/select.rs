use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::fit::fit_from;
use super::{fit, CoefMatrix, Design, FitConfig, FitResult, NUM_LOGITS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Upper tail of a chi-square distribution.
pub(crate) fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    dist.sf(x).clamp(0.0, 1.0)
}

/// Likelihood-ratio test of a reduced model nested in a full one.
///
/// Each dropped covariate removes three coefficients, so the statistic
/// `2 (l_full - l_reduced)` is referred to a chi-square with
/// `3 * (p_full - p_reduced)` degrees of freedom.
pub fn lr_test(full: &FitResult, reduced: &FitResult) -> Result<LrTest> {
    let full_names = full.coef.covariate_names();
    let reduced_names = reduced.coef.covariate_names();
    if let Some(extra) = reduced_names.iter().find(|n| !full_names.contains(n)) {
        return Err(Error::Nesting(format!(
            "covariate `{extra}` is in the reduced model but not the full one"
        )));
    }
    if full.n_obs != reduced.n_obs {
        return Err(Error::Nesting("models were fitted on different data".into()));
    }
    let diff = full.loglik - reduced.loglik;
    if diff < -1e-8 {
        return Err(Error::Nesting(format!(
            "full log-likelihood {} is below reduced {}",
            full.loglik, reduced.loglik
        )));
    }
    let statistic = 2.0 * diff.max(0.0);
    let dof = NUM_LOGITS * (full_names.len() - reduced_names.len());
    let p_value = if dof == 0 { 1.0 } else { chi_square_sf(statistic, dof) };
    Ok(LrTest {
        statistic,
        dof,
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub removed: String,
    pub aic_before: f64,
    pub aic_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseResult {
    pub selected: Vec<String>,
    pub steps: Vec<StepRecord>,
    pub fit: FitResult,
}

/// Starting values for a sub-model: the current estimate without the
/// dropped columns.
fn restrict_start(current: &CoefMatrix, keep: &[String]) -> CoefMatrix {
    let mut start = CoefMatrix::zeros(keep.to_vec());
    for k in 1..=NUM_LOGITS {
        start.set(k, 0, current.get(k, 0));
        for (j, name) in keep.iter().enumerate() {
            if let Some(col) = current.column_of(name) {
                start.set(k, j + 1, current.get(k, col));
            }
        }
    }
    start
}

fn fit_subset(data: &Design, names: &[String], config: &FitConfig, warm: &CoefMatrix) -> Result<FitResult> {
    let sub = data.select(names)?;
    let warm_fit = fit_from(&sub, config, restrict_start(warm, names))?;
    if warm_fit.converged {
        return Ok(warm_fit);
    }
    // a diverging warm start can stall; retry from zero
    fit(&sub, config)
}

/// Backward elimination by AIC.
///
/// From the full model, repeatedly removes the covariate whose removal lowers
/// `AIC = -2 l + 2 * 3 (q + 1)` the most, until no removal lowers it. Ties go
/// to the covariate listed first in the design.
pub fn stepwise_aic(data: &Design, config: &FitConfig) -> Result<StepwiseResult> {
    let mut current: Vec<String> = data.names().to_vec();
    let mut current_fit = fit(data, config)?;
    let mut steps = Vec::new();

    while !current.is_empty() {
        let aic = current_fit.aic();
        let mut best: Option<(usize, FitResult)> = None;
        for drop in 0..current.len() {
            let keep: Vec<String> = current
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != drop)
                .map(|(_, n)| n.clone())
                .collect();
            let candidate = fit_subset(data, &keep, config, &current_fit.coef)?;
            let better = match &best {
                None => true,
                Some((_, b)) => candidate.aic() < b.aic(),
            };
            if better {
                best = Some((drop, candidate));
            }
        }
        match best {
            Some((drop, candidate)) if candidate.aic() < aic => {
                steps.push(StepRecord {
                    removed: current.remove(drop),
                    aic_before: aic,
                    aic_after: candidate.aic(),
                });
                current_fit = candidate;
            }
            _ => break,
        }
    }
    Ok(StepwiseResult {
        selected: current,
        steps,
        fit: current_fit,
    })
}

/// Likelihood-ratio test of each covariate of `full`, dropping one at a time.
pub fn drop_one_lr_tests(data: &Design, full: &FitResult, config: &FitConfig) -> Result<Vec<(String, LrTest)>> {
    let names = full.coef.covariate_names().to_vec();
    let mut out = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let keep: Vec<String> = names
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, n)| n.clone())
            .collect();
        let reduced = fit_subset(data, &keep, config, &full.coef)?;
        out.push((name.clone(), lr_test(full, &reduced)?));
    }
    Ok(out)
}
