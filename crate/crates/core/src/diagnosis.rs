//! Coinfection probability among malaria-positive patients, the threshold
//! rule built on it, confusion metrics and cross-validated calibration of
//! the threshold.
//!
//! For a malaria-positive patient the probability of an arboviral
//! coinfection is `P(C|M) = pi_3 / (pi_2 + pi_3)`, a logistic function of
//! `<x, beta_3 - beta_2>`. The patient is declared arbovirus positive when
//! `P(C|M) >= gamma`, optionally only if age and illness duration exceed
//! given thresholds.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Covariate, CovariateVector, Dataset, ResponseClass};
use crate::error::{Error, Result};
use crate::mlogit::{fit, CoefMatrix, Design, FitConfig};
use crate::rng::{derive_seed, substream, tag};

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `P(C|M)` for a design row `(1, x_1, ..., x_p)`.
pub fn coinfection_prob_row(coef: &CoefMatrix, row: &[f64]) -> f64 {
    let eta = coef.linear_predictors(row);
    logistic(eta[2] - eta[1])
}

/// `P(C|M) = logistic(<x, beta_3> - <x, beta_2>)`.
pub fn coinfection_prob(coef: &CoefMatrix, x: &CovariateVector) -> Result<f64> {
    Ok(coinfection_prob_row(coef, &coef.design_row(x)?))
}

/// Restricts positive calls to patients older than `age_min` years and sick
/// for more than `days_min` days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeDaysFilter {
    pub age_min: f64,
    pub days_min: f64,
}

impl Default for AgeDaysFilter {
    fn default() -> Self {
        AgeDaysFilter {
            age_min: 10.0,
            days_min: 3.0,
        }
    }
}

impl AgeDaysFilter {
    pub fn passes(&self, age: f64, sick_days: f64) -> bool {
        age > self.age_min && sick_days > self.days_min
    }
}

impl fmt::Display for AgeDaysFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "age>{},sick_days>{}", self.age_min, self.days_min)
    }
}

/// Parses `age>10,sick_days>3`; either part may be omitted, leaving its
/// threshold at the lowest finite value so that it always passes.
impl FromStr for AgeDaysFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut filter = AgeDaysFilter {
            age_min: f64::MIN,
            days_min: f64::MIN,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (field, value) = part
                .split_once('>')
                .ok_or_else(|| Error::Input(format!("filter term `{part}` is not of the form field>value")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("invalid threshold in `{part}`")))?;
            match field.trim() {
                "age" => filter.age_min = value,
                "sick_days" | "days" => filter.days_min = value,
                other => return Err(Error::Input(format!("unknown filter field `{other}`"))),
            }
        }
        Ok(filter)
    }
}

/// Positive iff `prob >= gamma` and the filter, if any, passes.
pub fn classify_values(prob: f64, gamma: f64, age: f64, sick_days: f64, filter: Option<&AgeDaysFilter>) -> bool {
    prob >= gamma && filter.is_none_or(|f| f.passes(age, sick_days))
}

pub fn classify(prob: f64, gamma: f64, x: &CovariateVector, filter: Option<&AgeDaysFilter>) -> bool {
    classify_values(prob, gamma, x.age(), x.sick_days(), filter)
}

/// Two-by-two table; positive means arboviral coinfection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    pub fn new(tn: u64, fp: u64, fn_: u64, tp: u64) -> Self {
        ConfusionMatrix { tn, fp, fn_, tp }
    }

    pub fn n(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn errors(&self) -> u64 {
        self.fp + self.fn_
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (actual, predicted) {
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (true, true) => self.tp += 1,
        }
    }

    /// `(FP + FN) / N`.
    pub fn mcr(&self) -> Result<f64> {
        self.wmcr(1.0)
    }

    /// `(FP + c FN) / N` for `c >= 1`.
    pub fn wmcr(&self, c: f64) -> Result<f64> {
        if !(c >= 1.0 && c.is_finite()) {
            return Err(Error::Input(format!("cost {c} must be a finite value of at least 1")));
        }
        let n = self.n();
        if n == 0 {
            return Err(Error::UndefinedRate);
        }
        Ok((self.fp as f64 + c * self.fn_ as f64) / n as f64)
    }
}

/// Rows actual, columns predicted.
pub fn confusion(predictions: &[bool], truths: &[bool]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::Input(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        cm.add(p, t);
    }
    Ok(cm)
}

/// `0, step, 2 step, ..., 1`.
pub fn gamma_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Input(format!("grid step {step} outside (0, 1]")));
    }
    let n = (1.0 / step).round() as usize;
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub covariates: Vec<Covariate>,
    pub folds: usize,
    /// Weight of a false negative relative to a false positive.
    pub cost: f64,
    pub grid: Vec<f64>,
    pub filter: Option<AgeDaysFilter>,
    pub fit_config: FitConfig,
    pub seed: u64,
}

impl CalibrationConfig {
    pub fn new(covariates: Vec<Covariate>) -> Self {
        CalibrationConfig {
            covariates,
            folds: 5,
            cost: 2.0,
            grid: gamma_grid(0.01).expect("valid step"),
            filter: None,
            fit_config: FitConfig::default(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Spec("at least two folds are required".into()));
        }
        if !(self.cost >= 1.0 && self.cost.is_finite()) {
            return Err(Error::Spec(format!("cost {} must be at least 1", self.cost)));
        }
        if self.grid.is_empty() || self.grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::Spec("gamma grid must be non-empty and within [0, 1]".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Spec("gamma grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// A scored malaria-positive patient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub prob: f64,
    /// Coinfected.
    pub truth: bool,
    pub age: f64,
    pub sick_days: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub gamma: f64,
    pub wmcr: f64,
    /// Fold average of `FN / N`.
    pub fn_rate: f64,
    /// Fold average of `FP / N`.
    pub fp_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub gamma_star: f64,
    pub wmcr_star: f64,
    pub curve: Vec<CurvePoint>,
    pub cost: f64,
    pub folds: usize,
    pub filter: Option<AgeDaysFilter>,
    /// Held-out malaria-positive patients scored over all folds.
    pub n_scored: usize,
}

/// Fold labels `0..folds` assigned class by class after shuffling, so every
/// fold receives the same share of each class up to one record.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Vec<usize> {
    let mut assignment = vec![0; labels.len()];
    let key = derive_seed(seed, tag::FOLDS, 0);
    for class in 0..4u8 {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut substream(key, class as u64));
        for (pos, &i) in members.iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    assignment
}

fn score_records(coef: &CoefMatrix, data: &Dataset, covariates: &[Covariate], indices: &[usize]) -> Vec<Scored> {
    let mut row = vec![1.0; covariates.len() + 1];
    indices
        .iter()
        .map(|&i| &data.records()[i])
        .filter(|r| r.class.is_malaria())
        .map(|r| {
            for (j, &c) in covariates.iter().enumerate() {
                row[j + 1] = r.covariates.get(c);
            }
            Scored {
                prob: coinfection_prob_row(coef, &row),
                truth: r.class == ResponseClass::Coinfection,
                age: r.covariates.age(),
                sick_days: r.covariates.sick_days(),
            }
        })
        .collect()
}

fn fit_on(data: &Dataset, indices: &[usize], config: &CalibrationConfig) -> Result<CoefMatrix> {
    let design = Design::from_dataset(&data.subset(indices), &config.covariates);
    Ok(fit(&design, &config.fit_config)?.coef)
}

/// Scores of the held-out malaria-positive patients of each fold, each fold
/// scored by the model fitted on the other folds.
pub fn cross_validated_scores(data: &Dataset, config: &CalibrationConfig) -> Result<Vec<Vec<Scored>>> {
    config.validate()?;
    let counts = data.class_counts();
    if counts[2] == 0 || counts[3] == 0 {
        return Err(Error::Stratification(
            "both malaria monoinfections and coinfections are required".into(),
        ));
    }
    let labels = data.labels();
    let assignment = stratified_folds(&labels, config.folds, config.seed);
    (0..config.folds)
        .into_par_iter()
        .map(|f| {
            let (held, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| assignment[i] == f);
            if !held.iter().any(|&i| labels[i] == 3) {
                return Err(Error::Stratification(format!(
                    "fold {f} has no coinfection; reduce the number of folds"
                )));
            }
            let coef = fit_on(data, &train, config)?;
            Ok(score_records(&coef, data, &config.covariates, &held))
        })
        .collect()
}

/// Confusion matrix of the threshold rule on scored patients.
pub fn confusion_at(scores: &[Scored], gamma: f64, filter: Option<&AgeDaysFilter>) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for s in scores {
        cm.add(classify_values(s.prob, gamma, s.age, s.sick_days, filter), s.truth);
    }
    cm
}

/// Fold-averaged WMCR and error rates at each grid value.
pub fn cv_curve(
    fold_scores: &[Vec<Scored>],
    grid: &[f64],
    cost: f64,
    filter: Option<&AgeDaysFilter>,
) -> Result<Vec<CurvePoint>> {
    if fold_scores.is_empty() {
        return Err(Error::Spec("no folds".into()));
    }
    let k = fold_scores.len() as f64;
    grid.iter()
        .map(|&gamma| {
            let mut point = CurvePoint {
                gamma,
                wmcr: 0.0,
                fn_rate: 0.0,
                fp_rate: 0.0,
            };
            for scores in fold_scores {
                let cm = confusion_at(scores, gamma, filter);
                let n = cm.n() as f64;
                point.wmcr += cm.wmcr(cost)? / k;
                point.fn_rate += cm.fn_ as f64 / n / k;
                point.fp_rate += cm.fp as f64 / n / k;
            }
            Ok(point)
        })
        .collect()
}

/// Grid point with the smallest WMCR; ties go to the smallest gamma.
pub fn select_gamma(curve: &[CurvePoint]) -> Option<CurvePoint> {
    let mut best: Option<CurvePoint> = None;
    for &p in curve {
        if best.is_none_or(|b| p.wmcr < b.wmcr) {
            best = Some(p);
        }
    }
    best
}

/// Chooses gamma by `folds`-fold cross-validated WMCR.
///
/// The four-class model is fitted on the training folds and the held-out
/// malaria-positive patients are scored, coinfection being the positive
/// class.
pub fn calibrate_gamma(data: &Dataset, config: &CalibrationConfig) -> Result<CalibrationResult> {
    let fold_scores = cross_validated_scores(data, config)?;
    calibration_from_scores(&fold_scores, config, config.filter)
}

fn calibration_from_scores(
    fold_scores: &[Vec<Scored>],
    config: &CalibrationConfig,
    filter: Option<AgeDaysFilter>,
) -> Result<CalibrationResult> {
    let curve = cv_curve(fold_scores, &config.grid, config.cost, filter.as_ref())?;
    let best = select_gamma(&curve).expect("non-empty grid");
    Ok(CalibrationResult {
        gamma_star: best.gamma,
        wmcr_star: best.wmcr,
        curve,
        cost: config.cost,
        folds: config.folds,
        filter,
        n_scored: fold_scores.iter().map(Vec::len).sum(),
    })
}

/// Searches gamma jointly with the filter thresholds. Ties go to the
/// smallest gamma, then the smallest age and day thresholds.
pub fn calibrate_with_filter_grid(
    data: &Dataset,
    config: &CalibrationConfig,
    age_grid: &[f64],
    days_grid: &[f64],
) -> Result<CalibrationResult> {
    if age_grid.is_empty() || days_grid.is_empty() {
        return Err(Error::Spec("filter grids must be non-empty".into()));
    }
    let fold_scores = cross_validated_scores(data, config)?;
    let mut best: Option<CalibrationResult> = None;
    let mut ages = age_grid.to_vec();
    let mut days = days_grid.to_vec();
    ages.sort_by(f64::total_cmp);
    days.sort_by(f64::total_cmp);
    for &age_min in &ages {
        for &days_min in &days {
            let filter = AgeDaysFilter { age_min, days_min };
            let r = calibration_from_scores(&fold_scores, config, Some(filter))?;
            let better = best.as_ref().is_none_or(|b| {
                r.wmcr_star < b.wmcr_star || (r.wmcr_star == b.wmcr_star && r.gamma_star < b.gamma_star)
            });
            if better {
                best = Some(r);
            }
        }
    }
    Ok(best.expect("non-empty grids"))
}

/// Stratified split with `train_fraction` of each class in the training part.
pub fn holdout_split(labels: &[u8], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Spec(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let key = derive_seed(seed, tag::SPLIT, 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..4u8 {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut substream(key, class as u64));
        let cut = (members.len() as f64 * train_fraction).round() as usize;
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutResult {
    pub gamma: f64,
    pub filter: Option<AgeDaysFilter>,
    pub cost: f64,
    pub confusion: ConfusionMatrix,
    pub mcr: f64,
    pub wmcr: f64,
    pub n_train: usize,
}

/// Fits on two thirds of the data (stratified) and applies the rule to the
/// malaria-positive patients of the remaining third.
pub fn evaluate_holdout(
    data: &Dataset,
    config: &CalibrationConfig,
    gamma: f64,
    filter: Option<AgeDaysFilter>,
) -> Result<HoldoutResult> {
    let (train, test) = holdout_split(&data.labels(), 2.0 / 3.0, config.seed)?;
    let coef = fit_on(data, &train, config)?;
    let scores = score_records(&coef, data, &config.covariates, &test);
    let cm = confusion_at(&scores, gamma, filter.as_ref());
    Ok(HoldoutResult {
        gamma,
        filter,
        cost: config.cost,
        confusion: cm,
        mcr: cm.mcr()?,
        wmcr: cm.wmcr(config.cost)?,
        n_train: train.len(),
    })
}
