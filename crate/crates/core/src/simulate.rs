//! Synthetic cohorts drawn from a known multinomial logit.
//!
//! Covariates are sampled independently from per-covariate marginal laws and
//! labels from the model's class probabilities, so every estimator in the
//! crate can be checked against a known truth. Records are generated in
//! fixed-size blocks; block `b` reads random stream `b` of a key derived from
//! the seed, which makes the output independent of the thread count.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{
    CaseDefinition, Covariate, CovariateVector, Dataset, InfectionStatus, Record, ResponseClass, NUM_COVARIATES,
};
use crate::error::{Error, Result};
use crate::mlogit::{predict_proba_row, CoefMatrix};
use crate::rng::{derive_seed, substream, tag};

/// Records per random-stream block.
pub const BLOCK_SIZE: usize = 4096;

/// Marginal distribution of one covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MarginalLaw {
    Uniform { low: f64, high: f64 },
    TruncatedNormal { mean: f64, sd: f64, low: f64, high: f64 },
    Bernoulli { p: f64 },
}

impl MarginalLaw {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            MarginalLaw::Uniform { low, high } | MarginalLaw::TruncatedNormal { low, high, .. } => (low, high),
            MarginalLaw::Bernoulli { .. } => (0.0, 1.0),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::Spec(format!("{what}: {msg}")));
        match *self {
            MarginalLaw::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low <= high) {
                    return bad(format!("uniform bounds [{low}, {high}] are invalid"));
                }
            }
            MarginalLaw::TruncatedNormal { mean, sd, low, high } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return bad(format!("truncated normal needs finite mean and sd > 0, got ({mean}, {sd})"));
                }
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return bad(format!("truncated normal bounds [{low}, {high}] are invalid"));
                }
            }
            MarginalLaw::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("Bernoulli parameter {p} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MarginalLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            MarginalLaw::TruncatedNormal { mean, sd, low, high } => {
                truncated_normal(mean, sd, low, high, rng.random::<f64>())
            }
            MarginalLaw::Bernoulli { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarginalLaw::Uniform { low, high } => 0.5 * (low + high),
            MarginalLaw::TruncatedNormal { mean, sd, low, high } => {
                let std = Normal::standard();
                let (a, b) = ((low - mean) / sd, (high - mean) / sd);
                let z = std.cdf(b) - std.cdf(a);
                let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
                mean + sd * (pdf(a) - pdf(b)) / z
            }
            MarginalLaw::Bernoulli { p } => p,
        }
    }
}

/// Inverse-CDF draw from N(mean, sd²) truncated to [low, high], using the
/// lower tail for precision.
fn truncated_normal(mean: f64, sd: f64, low: f64, high: f64, u: f64) -> f64 {
    let std = Normal::standard();
    let (mut a, mut b) = ((low - mean) / sd, (high - mean) / sd);
    let mirrored = a > 0.0;
    if mirrored {
        (a, b) = (-b, -a);
    }
    let (fa, fb) = (std.cdf(a), std.cdf(b));
    let z = std.inverse_cdf(fa + u * (fb - fa)).clamp(a, b);
    let z = if mirrored { -z } else { z };
    (mean + sd * z).clamp(low, high)
}

/// Joint law of the covariates: independent marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, MarginalLaw>", into = "BTreeMap<String, MarginalLaw>")]
pub struct CovariateLaw {
    laws: [MarginalLaw; NUM_COVARIATES],
}

impl Default for CovariateLaw {
    /// Plausible febrile-cohort marginals; 58% male.
    fn default() -> Self {
        use MarginalLaw::*;
        CovariateLaw {
            laws: [
                TruncatedNormal { mean: 38.9, sd: 0.8, low: 38.0, high: 41.5 },
                TruncatedNormal { mean: 3.0, sd: 2.5, low: 0.0, high: 15.0 },
                TruncatedNormal { mean: 18.0, sd: 14.0, low: 1.0, high: 80.0 },
                Uniform { low: 0.0, high: 400.0 },
                Bernoulli { p: 0.58 },
                Bernoulli { p: 0.8 },
                Bernoulli { p: 0.3 },
                Bernoulli { p: 0.45 },
                Bernoulli { p: 0.4 },
                Bernoulli { p: 0.3 },
                Bernoulli { p: 0.3 },
                Bernoulli { p: 0.5 },
                Bernoulli { p: 0.12 },
                Bernoulli { p: 0.2 },
                Bernoulli { p: 0.03 },
            ],
        }
    }
}

impl CovariateLaw {
    pub fn get(&self, c: Covariate) -> MarginalLaw {
        self.laws[c.index()]
    }

    pub fn with(mut self, c: Covariate, law: MarginalLaw) -> Self {
        self.laws[c.index()] = law;
        self
    }

    /// Default law with the given entries replaced.
    pub fn from_overrides(overrides: &BTreeMap<String, MarginalLaw>) -> Result<Self> {
        let mut law = CovariateLaw::default();
        for (name, &m) in overrides {
            let c = Covariate::from_name(name)
                .ok_or_else(|| Error::Spec(format!("unknown covariate `{name}` in covariate law")))?;
            law.laws[c.index()] = m;
        }
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        for c in Covariate::ALL {
            let law = self.get(c);
            law.validate(c.name())?;
            let (low, high) = law.bounds();
            if c.is_binary() {
                if !matches!(law, MarginalLaw::Bernoulli { .. }) {
                    return Err(Error::Spec(format!("{c} is binary and needs a Bernoulli law")));
                }
            } else {
                if matches!(law, MarginalLaw::Bernoulli { .. }) {
                    return Err(Error::Spec(format!("{c} is continuous and cannot be Bernoulli")));
                }
                let floor = match c {
                    Covariate::Temperature => 38.0,
                    Covariate::Age => 1.0,
                    _ => 0.0,
                };
                if low < floor {
                    return Err(Error::Spec(format!("{c} lower bound {low} is below {floor}")));
                }
                if high < floor {
                    return Err(Error::Spec(format!("{c} upper bound {high} is below {floor}")));
                }
            }
        }
        Ok(())
    }
}

impl TryFrom<BTreeMap<String, MarginalLaw>> for CovariateLaw {
    type Error = Error;

    fn try_from(map: BTreeMap<String, MarginalLaw>) -> Result<Self> {
        CovariateLaw::from_overrides(&map)
    }
}

impl From<CovariateLaw> for BTreeMap<String, MarginalLaw> {
    fn from(law: CovariateLaw) -> Self {
        Covariate::ALL
            .iter()
            .map(|&c| (c.name().to_string(), law.get(c)))
            .collect()
    }
}

/// Rainy/dry regime switch: rainfall comes from one of two laws, and rainy
/// records get shifted malaria and coinfection intercepts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonSwitch {
    pub rainy_probability: f64,
    pub rainy_rainfall: MarginalLaw,
    pub dry_rainfall: MarginalLaw,
    /// Records with rainfall at or above this value count as rainy.
    pub rainy_threshold: f64,
    pub malaria_shift: f64,
    pub coinfection_shift: f64,
}

impl Default for SeasonSwitch {
    fn default() -> Self {
        SeasonSwitch {
            rainy_probability: 0.5,
            rainy_rainfall: MarginalLaw::Uniform { low: 150.0, high: 400.0 },
            dry_rainfall: MarginalLaw::Uniform { low: 0.0, high: 60.0 },
            rainy_threshold: 100.0,
            malaria_shift: 1.0,
            coinfection_shift: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub beta_true: CoefMatrix,
    #[serde(default)]
    pub covariate_law: CovariateLaw,
    pub seed: u64,
    #[serde(default)]
    pub season: Option<SeasonSwitch>,
}

impl GeneratorSpec {
    pub fn new(n: usize, beta_true: CoefMatrix, seed: u64) -> Self {
        GeneratorSpec {
            n,
            beta_true,
            covariate_law: CovariateLaw::default(),
            seed,
            season: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Spec("n must be at least 1".into()));
        }
        self.covariate_law.validate()?;
        self.beta_true.validate()?;
        if let Some(s) = &self.season {
            if !(0.0..=1.0).contains(&s.rainy_probability) {
                return Err(Error::Spec("rainy_probability outside [0, 1]".into()));
            }
            for law in [s.rainy_rainfall, s.dry_rainfall] {
                law.validate("season rainfall")?;
                if law.bounds().0 < 0.0 || matches!(law, MarginalLaw::Bernoulli { .. }) {
                    return Err(Error::Spec("season rainfall law must be continuous and non-negative".into()));
                }
            }
        }
        Ok(())
    }
}

fn block_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(BLOCK_SIZE))
        .map(|b| (b * BLOCK_SIZE, ((b + 1) * BLOCK_SIZE).min(n)))
        .collect()
}

/// Draws `spec.n` independent covariate vectors.
pub fn sample_covariates(spec: &GeneratorSpec) -> Result<Vec<CovariateVector>> {
    spec.validate()?;
    let key = derive_seed(spec.seed, tag::COVARIATES, 0);
    let blocks: Vec<Vec<CovariateVector>> = block_ranges(spec.n)
        .into_par_iter()
        .enumerate()
        .map(|(b, (start, end))| {
            let mut rng = substream(key, b as u64);
            (start..end)
                .map(|_| {
                    let mut values = [0.0; NUM_COVARIATES];
                    for c in Covariate::ALL {
                        let law = match (&spec.season, c) {
                            (Some(s), Covariate::Rainfall) => {
                                if rng.random::<f64>() < s.rainy_probability {
                                    s.rainy_rainfall
                                } else {
                                    s.dry_rainfall
                                }
                            }
                            _ => spec.covariate_law.get(c),
                        };
                        values[c.index()] = law.sample(&mut rng);
                    }
                    CovariateVector::new(values)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

fn draw_class<R: Rng + ?Sized>(probs: &[f64; 4], rng: &mut R) -> ResponseClass {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate().take(3) {
        acc += p;
        if u < acc {
            return ResponseClass::from_index(k).expect("class index");
        }
    }
    ResponseClass::Coinfection
}

fn labels_with_shift(
    xs: &[CovariateVector],
    beta: &CoefMatrix,
    seed: u64,
    season: Option<&SeasonSwitch>,
) -> Result<Vec<ResponseClass>> {
    beta.validate()?;
    let rows: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| beta.design_row(x))
        .collect::<Result<_>>()
        .map_err(|e| Error::Spec(format!("coefficients do not match covariates: {e}")))?;
    let shifted = season.map(|s| {
        let mut b = beta.clone();
        b.set(2, 0, beta.get(2, 0) + s.malaria_shift);
        b.set(3, 0, beta.get(3, 0) + s.coinfection_shift);
        (s.rainy_threshold, b)
    });
    let key = derive_seed(seed, tag::LABELS, 0);
    let blocks: Vec<Vec<ResponseClass>> = block_ranges(xs.len())
        .into_par_iter()
        .enumerate()
        .map(|(b, (start, end))| {
            let mut rng = substream(key, b as u64);
            (start..end)
                .map(|i| {
                    let coef = match &shifted {
                        Some((threshold, b)) if xs[i].get(Covariate::Rainfall) >= *threshold => b,
                        _ => beta,
                    };
                    draw_class(&predict_proba_row(coef, &rows[i]), &mut rng)
                })
                .collect()
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// Draws one label per covariate vector from the model's class probabilities.
pub fn sample_labels(xs: &[CovariateVector], beta: &CoefMatrix, seed: u64) -> Result<Vec<ResponseClass>> {
    labels_with_shift(xs, beta, seed, None)
}

/// Laboratory results consistent with `class` under both case definitions.
pub fn status_for(class: ResponseClass) -> InfectionStatus {
    InfectionStatus {
        malaria: class.is_malaria(),
        igm: class.is_arboviral(),
        igg: Some(false),
    }
}

/// Generates a full synthetic dataset.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    let xs = sample_covariates(spec)?;
    let labels = labels_with_shift(&xs, &spec.beta_true, spec.seed, spec.season.as_ref())?;
    let records = xs
        .into_iter()
        .zip(labels)
        .map(|(covariates, class)| Record {
            covariates,
            status: status_for(class),
            class,
        })
        .collect();
    Dataset::new(records, CaseDefinition::IgM)
}

/// Demonstration coefficients over all fifteen covariates.
///
/// Age, temperature, sick days, rainfall and four symptoms carry effects of
/// realistic size; the other covariates have none. Intercepts are set so the
/// class odds against class 0 at the mean covariate vector of `law` are
/// about 0.5 (arboviral), 1.3 (malaria) and 0.7 (coinfection).
pub fn demo_beta(law: &CovariateLaw) -> CoefMatrix {
    // per-unit log odds ratios for (arbo, malaria, coinfection)
    let effects: [(Covariate, [f64; 3]); 8] = [
        (Covariate::Age, [0.027, -0.025, 0.006]),
        (Covariate::Temperature, [0.01, 0.45, 0.38]),
        (Covariate::SickDays, [0.23, 0.01, 0.09]),
        (Covariate::Rainfall, [0.0022, 0.0064, 0.008]),
        (Covariate::NauseaVomiting, [-0.19, 0.77, 0.73]),
        (Covariate::Cough, [-0.24, -0.56, -0.78]),
        (Covariate::NasalCongestion, [-0.65, -2.3, -2.0]),
        (Covariate::JointPain, [0.42, 0.55, 0.64]),
    ];
    let target_log_odds = [0.5f64.ln(), 1.3f64.ln(), 0.7f64.ln()];
    let names: Vec<String> = Covariate::ALL.iter().map(|c| c.name().to_string()).collect();
    let mut beta = CoefMatrix::zeros(names);
    for (c, e) in effects {
        beta.set(1, c.index() + 1, e[0]);
        beta.set(2, c.index() + 1, e[1]);
        beta.set(3, c.index() + 1, e[2]);
    }
    for (k, &target) in target_log_odds.iter().enumerate() {
        let centre: f64 = Covariate::ALL
            .iter()
            .map(|&c| beta.get(k + 1, c.index() + 1) * law.get(c).mean())
            .sum();
        beta.set(k + 1, 0, target - centre);
    }
    beta
}
