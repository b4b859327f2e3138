//! Odds ratios for covariate increments, against the reference class and
//! between two disease classes, with Wald intervals on the log scale.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{Covariate, ResponseClass};
use crate::error::{Error, Result};
use crate::mlogit::FitResult;

/// An increase of `d` units in one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSpec {
    pub covariate: String,
    pub d: f64,
}

impl IncrementSpec {
    pub fn new(covariate: impl Into<String>, d: f64) -> Result<Self> {
        if !d.is_finite() {
            return Err(Error::Input(format!("increment {d} is not finite")));
        }
        Ok(IncrementSpec {
            covariate: covariate.into(),
            d,
        })
    }

    /// The default increment for `c`: 38 to 40 degrees, 2 to 6 sick days,
    /// the age quartiles 8 and 28, rainfall 14 to 370 mm, and presence
    /// against absence for symptoms.
    pub fn canonical(c: Covariate) -> Self {
        IncrementSpec {
            covariate: c.name().to_string(),
            d: canonical_increment(c),
        }
    }
}

pub fn canonical_increment(c: Covariate) -> f64 {
    match c {
        Covariate::Temperature => 2.0,
        Covariate::SickDays => 4.0,
        Covariate::Age => 20.0,
        Covariate::Rainfall => 356.0,
        _ => 1.0,
    }
}

/// Canonical increment for a covariate name, or 1 for unknown names.
pub fn canonical_increment_for(name: &str) -> f64 {
    Covariate::from_name(name).map_or(1.0, canonical_increment)
}

/// Which two classes an odds ratio compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Contrast {
    /// Class `k` against the reference class 0.
    Reference { k: u8 },
    /// Class `k` against class `l`.
    Between { k: u8, l: u8 },
}

impl Contrast {
    /// Reference contrasts for arboviral, coinfection and malaria, then
    /// arboviral vs malaria, coinfection vs arboviral and coinfection vs
    /// malaria.
    pub const DISPLAY: [Contrast; 6] = [
        Contrast::Reference { k: 1 },
        Contrast::Reference { k: 3 },
        Contrast::Reference { k: 2 },
        Contrast::Between { k: 1, l: 2 },
        Contrast::Between { k: 3, l: 1 },
        Contrast::Between { k: 3, l: 2 },
    ];

    pub fn validate(self) -> Result<()> {
        let ok = |k: u8| (1..=3).contains(&k);
        match self {
            Contrast::Reference { k } if ok(k) => Ok(()),
            Contrast::Between { k, l } if ok(k) && ok(l) && k != l => Ok(()),
            other => Err(Error::Input(format!(
                "contrast {other} must use distinct classes among 1, 2, 3"
            ))),
        }
    }
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Contrast::Reference { k } => write!(f, "{k}"),
            Contrast::Between { k, l } => write!(f, "{k}:{l}"),
        }
    }
}

/// Parses `k` or `k:l`.
impl FromStr for Contrast {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let class = |t: &str| {
            t.trim()
                .parse::<u8>()
                .map_err(|_| Error::Input(format!("invalid class `{t}` in contrast `{s}`")))
        };
        let c = match s.split_once(':') {
            None => Contrast::Reference { k: class(s)? },
            Some((k, l)) => Contrast::Between {
                k: class(k)?,
                l: class(l)?,
            },
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioEstimate {
    pub covariate: String,
    pub d: f64,
    pub contrast: Contrast,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    /// Standard error of the log odds ratio.
    pub log_se: f64,
}

fn class_index(c: ResponseClass) -> Result<usize> {
    match c {
        ResponseClass::Other => Err(Error::Input("class 0 is the reference class".into())),
        other => Ok(other.index()),
    }
}

fn z_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("confidence level {level} outside (0, 1)")));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

fn column(fit: &FitResult, spec: &IncrementSpec) -> Result<usize> {
    if !spec.d.is_finite() {
        return Err(Error::Input(format!("increment {} is not finite", spec.d)));
    }
    fit.coef
        .column_of(&spec.covariate)
        .ok_or_else(|| Error::Input(format!("covariate `{}` is not in the model", spec.covariate)))
}

fn estimate(
    spec: &IncrementSpec,
    contrast: Contrast,
    log_or: f64,
    var: f64,
    level: f64,
) -> Result<OddsRatioEstimate> {
    let z = z_quantile(level)?;
    let log_se = spec.d.abs() * var.max(0.0).sqrt();
    Ok(OddsRatioEstimate {
        covariate: spec.covariate.clone(),
        d: spec.d,
        contrast,
        point: log_or.exp(),
        ci_low: (log_or - z * log_se).exp(),
        ci_high: (log_or + z * log_se).exp(),
        level,
        log_se,
    })
}

/// `exp(beta_kj d)` with interval `exp(d beta_kj +- z |d| se)`.
pub fn odds_ratio(fit: &FitResult, k: ResponseClass, spec: &IncrementSpec, level: f64) -> Result<OddsRatioEstimate> {
    let k = class_index(k)?;
    let j = column(fit, spec)?;
    let log_or = fit.coef.get(k, j) * spec.d;
    let var = fit.cov_entry(k, j, k, j);
    estimate(spec, Contrast::Reference { k: k as u8 }, log_or, var, level)
}

/// `exp((beta_kj - beta_lj) d)`; the variance of the difference is
/// `V_kk + V_ll - 2 V_kl`.
pub fn odds_ratio_between(
    fit: &FitResult,
    k: ResponseClass,
    l: ResponseClass,
    spec: &IncrementSpec,
    level: f64,
) -> Result<OddsRatioEstimate> {
    let (k, l) = (class_index(k)?, class_index(l)?);
    if k == l {
        return Err(Error::Input("the two classes of a contrast must differ".into()));
    }
    let j = column(fit, spec)?;
    let log_or = (fit.coef.get(k, j) - fit.coef.get(l, j)) * spec.d;
    let var = fit.cov_entry(k, j, k, j) + fit.cov_entry(l, j, l, j) - 2.0 * fit.cov_entry(k, j, l, j);
    estimate(
        spec,
        Contrast::Between {
            k: k as u8,
            l: l as u8,
        },
        log_or,
        var,
        level,
    )
}

pub fn odds_ratio_for(fit: &FitResult, contrast: Contrast, spec: &IncrementSpec, level: f64) -> Result<OddsRatioEstimate> {
    contrast.validate()?;
    let class = |k: u8| ResponseClass::from_index(k as usize).expect("validated class");
    match contrast {
        Contrast::Reference { k } => odds_ratio(fit, class(k), spec, level),
        Contrast::Between { k, l } => odds_ratio_between(fit, class(k), class(l), spec, level),
    }
}

/// Every contrast for every increment, increments outermost.
pub fn odds_ratio_table(
    fit: &FitResult,
    specs: &[IncrementSpec],
    contrasts: &[Contrast],
    level: f64,
) -> Result<Vec<OddsRatioEstimate>> {
    let mut out = Vec::with_capacity(specs.len() * contrasts.len());
    for spec in specs {
        for &c in contrasts {
            out.push(odds_ratio_for(fit, c, spec, level)?);
        }
    }
    Ok(out)
}
