//! Balanced undersampling ensembles for data with rare classes.
//!
//! Each of `B` sub-samples keeps every record of the minority classes and
//! draws `n_majority` records without replacement from each majority class.
//! The requested analyses run on every sub-sample and their results are
//! aggregated into selection frequencies, odds-ratio distributions and the
//! share of significant independence tests.

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Covariate, Dataset, ResponseClass};
use crate::effects::{odds_ratio_for, Contrast, IncrementSpec};
use crate::error::{Error, Result};
use crate::forest::{vsurf_select, ForestData, VsurfConfig};
use crate::mlogit::{fit, wald_independence, Design, FitConfig};
use crate::rng::{derive_seed, substream, tag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndersampleSpec {
    /// Records drawn from each majority class.
    pub n_majority: usize,
    pub majority_classes: Vec<ResponseClass>,
    /// Number of sub-samples.
    pub b: usize,
    pub seed: u64,
}

impl Default for UndersampleSpec {
    fn default() -> Self {
        UndersampleSpec {
            n_majority: 50,
            majority_classes: vec![ResponseClass::Other, ResponseClass::MalariaMono],
            b: 1000,
            seed: 0,
        }
    }
}

impl UndersampleSpec {
    pub fn is_majority(&self, class: ResponseClass) -> bool {
        self.majority_classes.contains(&class)
    }

    /// Checks the spec against class sizes.
    pub fn validate(&self, class_counts: [usize; 4]) -> Result<()> {
        if self.majority_classes.is_empty() {
            return Err(Error::Spec("no majority class given".into()));
        }
        for class in ResponseClass::ALL {
            let size = class_counts[class.index()];
            if self.is_majority(class) {
                if self.n_majority > size {
                    return Err(Error::Spec(format!(
                        "n_majority = {} exceeds the {size} records of class {}",
                        self.n_majority,
                        class.index()
                    )));
                }
            } else if size == 0 {
                return Err(Error::Spec(format!(
                    "minority class {} has no records",
                    class.index()
                )));
            }
        }
        Ok(())
    }

    /// Class counts of every sub-sample.
    pub fn subsample_counts(&self, class_counts: [usize; 4]) -> [usize; 4] {
        std::array::from_fn(|k| {
            let class = ResponseClass::ALL[k];
            if self.is_majority(class) {
                self.n_majority
            } else {
                class_counts[k]
            }
        })
    }
}

/// Indices into the original dataset, grouped by class in class order and in
/// original order within a class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubSample {
    pub draw_index: usize,
    pub indices: Vec<usize>,
}

/// Draws sub-sample `draw_index` from its own random stream.
pub fn undersample(data: &Dataset, spec: &UndersampleSpec, draw_index: usize) -> Result<SubSample> {
    spec.validate(data.class_counts())?;
    let mut by_class: [Vec<usize>; 4] = Default::default();
    for (i, r) in data.records().iter().enumerate() {
        by_class[r.class.index()].push(i);
    }
    let mut rng = substream(derive_seed(spec.seed, tag::UNDERSAMPLE, 0), draw_index as u64);
    let mut indices = Vec::new();
    for class in ResponseClass::ALL {
        let members = &by_class[class.index()];
        if spec.is_majority(class) {
            let mut picked = index::sample(&mut rng, members.len(), spec.n_majority).into_vec();
            picked.sort_unstable();
            indices.extend(picked.into_iter().map(|p| members[p]));
        } else {
            indices.extend_from_slice(members);
        }
    }
    Ok(SubSample {
        draw_index,
        indices,
    })
}

/// Analyses to run on each sub-sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAnalyses {
    pub covariates: Vec<Covariate>,
    /// Random-forest selection; the forest seed is replaced by one derived
    /// from the ensemble seed and the draw index.
    pub vsurf: Option<VsurfConfig>,
    pub fit: bool,
    pub wald: bool,
    /// Odds ratios for these increments and contrasts.
    pub odds: Vec<IncrementSpec>,
    pub contrasts: Vec<Contrast>,
    pub fit_config: FitConfig,
}

impl EnsembleAnalyses {
    pub fn new(covariates: Vec<Covariate>) -> Self {
        EnsembleAnalyses {
            covariates,
            vsurf: None,
            fit: false,
            wald: false,
            odds: Vec::new(),
            contrasts: Contrast::DISPLAY.to_vec(),
            fit_config: FitConfig::default(),
        }
    }

    fn needs_fit(&self) -> bool {
        self.fit || self.wald || !self.odds.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.covariates.is_empty() {
            return Err(Error::Spec("no covariates given".into()));
        }
        if self.vsurf.is_none() && !self.needs_fit() {
            return Err(Error::Spec("no analysis requested".into()));
        }
        for c in &self.contrasts {
            c.validate()?;
        }
        for spec in &self.odds {
            if Covariate::from_name(&spec.covariate).is_none_or(|c| !self.covariates.contains(&c)) {
                return Err(Error::Spec(format!(
                    "odds-ratio covariate `{}` is not among the fitted covariates",
                    spec.covariate
                )));
            }
        }
        Ok(())
    }
}

/// Results of one sub-sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleOutcome {
    pub draw_index: usize,
    /// Indices into the analysed covariates.
    pub selected: Option<Vec<usize>>,
    /// Mean MDA over the selection forests.
    pub importance: Option<Vec<f64>>,
    pub converged: Option<bool>,
    pub separation_flag: Option<bool>,
    /// `None` when the test was not requested or its covariance was singular.
    pub wald_p_value: Option<f64>,
    pub wald_failed: bool,
    /// Log odds ratios in `odds x contrasts` order.
    pub log_odds: Vec<f64>,
}

/// Runs the analyses on sub-sample `draw_index`.
pub fn run_subsample(
    data: &Dataset,
    spec: &UndersampleSpec,
    analyses: &EnsembleAnalyses,
    draw_index: usize,
) -> Result<SubsampleOutcome> {
    let sub = data.subset(&undersample(data, spec, draw_index)?.indices);
    let mut out = SubsampleOutcome {
        draw_index,
        selected: None,
        importance: None,
        converged: None,
        separation_flag: None,
        wald_p_value: None,
        wald_failed: false,
        log_odds: Vec::new(),
    };
    if let Some(vsurf) = &analyses.vsurf {
        let mut config = *vsurf;
        config.forest.seed = derive_seed(spec.seed, tag::SUBSAMPLE, draw_index as u64);
        let forest_data = ForestData::from_dataset(&sub, &analyses.covariates);
        let selection = vsurf_select(&forest_data, &config)?;
        let mut selected = selection.selected.clone();
        selected.sort_unstable();
        out.selected = Some(selected);
        out.importance = Some(selection.importance.mda);
    }
    if analyses.needs_fit() {
        let design = Design::from_dataset(&sub, &analyses.covariates);
        let result = fit(&design, &analyses.fit_config)?;
        out.converged = Some(result.converged);
        out.separation_flag = Some(result.separation_flag);
        if analyses.wald {
            match wald_independence(&result) {
                Ok(w) => out.wald_p_value = Some(w.p_value),
                Err(Error::SingularCovariance { .. }) => out.wald_failed = true,
                Err(e) => return Err(e),
            }
        }
        for inc in &analyses.odds {
            for &c in &analyses.contrasts {
                let or = odds_ratio_for(&result, c, inc, 0.95)?;
                out.log_odds.push(or.point.ln());
            }
        }
    }
    Ok(out)
}

/// Box-plot summary: type-7 quartiles and whiskers at the most extreme
/// values within 1.5 IQR of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub n_outliers: usize,
}

/// Type-7 quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    /// `None` for an empty sample.
    pub fn from_values(values: &[f64]) -> Option<BoxStats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = v.iter().copied().filter(|&x| x >= lo_fence && x <= hi_fence).collect();
        Some(BoxStats {
            n: v.len(),
            min: v[0],
            q1,
            median: quantile_sorted(&v, 0.5),
            q3,
            max: v[v.len() - 1],
            whisker_low: inside[0],
            whisker_high: inside[inside.len() - 1],
            n_outliers: v.len() - inside.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub counts: Vec<usize>,
    /// `counts / B`.
    pub frequency: Vec<f64>,
    /// Mean MDA of each covariate across sub-samples.
    pub importance: Vec<Option<BoxStats>>,
    pub empty_selections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldSummary {
    /// One entry per sub-sample; `None` where the covariance was singular.
    pub p_values: Vec<Option<f64>>,
    pub n_tested: usize,
    pub n_failed: usize,
    pub n_below_005: usize,
    /// `n_below_005 / n_tested`; `None` when nothing was tested.
    pub fraction_below_005: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsDistribution {
    pub covariate: String,
    pub d: f64,
    pub contrast: Contrast,
    /// Odds ratios of the reliable fits, in draw order.
    pub values: Vec<f64>,
    pub summary: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsSummary {
    pub distributions: Vec<OddsDistribution>,
    /// Sub-samples whose fit did not converge or was separated.
    pub n_excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFlags {
    pub draw_index: usize,
    pub converged: bool,
    pub separation_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub b: usize,
    pub n_majority: usize,
    pub seed: u64,
    pub covariates: Vec<String>,
    pub subsample_class_counts: [usize; 4],
    pub selection: Option<SelectionSummary>,
    pub fits: Option<Vec<FitFlags>>,
    pub wald: Option<WaldSummary>,
    pub odds: Option<OddsSummary>,
}

/// Runs `spec.b` sub-samples in parallel and aggregates them.
pub fn run_ensemble(data: &Dataset, spec: &UndersampleSpec, analyses: &EnsembleAnalyses) -> Result<EnsembleReport> {
    if spec.b == 0 {
        return Err(Error::Spec("B must be at least 1".into()));
    }
    spec.validate(data.class_counts())?;
    analyses.validate()?;
    let outcomes = (0..spec.b)
        .into_par_iter()
        .map(|b| run_subsample(data, spec, analyses, b))
        .collect::<Result<Vec<_>>>()?;
    aggregate(spec, analyses, data.class_counts(), outcomes)
}

/// Combines sub-sample outcomes; the result does not depend on their order.
pub fn aggregate(
    spec: &UndersampleSpec,
    analyses: &EnsembleAnalyses,
    class_counts: [usize; 4],
    mut outcomes: Vec<SubsampleOutcome>,
) -> Result<EnsembleReport> {
    outcomes.sort_by_key(|o| o.draw_index);
    let b = outcomes.len();
    if b == 0 {
        return Err(Error::Spec("no sub-sample outcomes".into()));
    }
    let p = analyses.covariates.len();

    let selection = analyses.vsurf.as_ref().map(|_| {
        let mut counts = vec![0usize; p];
        let mut empty = 0;
        let mut importance = vec![Vec::with_capacity(b); p];
        for o in &outcomes {
            let selected = o.selected.as_deref().unwrap_or(&[]);
            if selected.is_empty() {
                empty += 1;
            }
            for &j in selected {
                counts[j] += 1;
            }
            if let Some(mda) = &o.importance {
                for (j, &v) in mda.iter().enumerate() {
                    importance[j].push(v);
                }
            }
        }
        SelectionSummary {
            frequency: counts.iter().map(|&c| c as f64 / b as f64).collect(),
            counts,
            importance: importance.iter().map(|v| BoxStats::from_values(v)).collect(),
            empty_selections: empty,
        }
    });

    let fits = analyses.needs_fit().then(|| {
        outcomes
            .iter()
            .map(|o| FitFlags {
                draw_index: o.draw_index,
                converged: o.converged.unwrap_or(false),
                separation_flag: o.separation_flag.unwrap_or(false),
            })
            .collect::<Vec<_>>()
    });

    let wald = analyses.wald.then(|| {
        let p_values: Vec<Option<f64>> = outcomes.iter().map(|o| o.wald_p_value).collect();
        let n_tested = p_values.iter().flatten().count();
        let n_below = p_values.iter().flatten().filter(|&&p| p < 0.05).count();
        WaldSummary {
            n_tested,
            n_failed: outcomes.iter().filter(|o| o.wald_failed).count(),
            n_below_005: n_below,
            fraction_below_005: (n_tested > 0).then(|| n_below as f64 / n_tested as f64),
            p_values,
        }
    });

    let odds = (!analyses.odds.is_empty()).then(|| {
        let reliable: Vec<&SubsampleOutcome> = outcomes
            .iter()
            .filter(|o| o.converged == Some(true) && o.separation_flag == Some(false))
            .collect();
        let mut distributions = Vec::new();
        let mut slot = 0;
        for inc in &analyses.odds {
            for &contrast in &analyses.contrasts {
                let values: Vec<f64> = reliable.iter().map(|o| o.log_odds[slot].exp()).collect();
                distributions.push(OddsDistribution {
                    covariate: inc.covariate.clone(),
                    d: inc.d,
                    contrast,
                    summary: BoxStats::from_values(&values),
                    values,
                });
                slot += 1;
            }
        }
        OddsSummary {
            distributions,
            n_excluded: b - reliable.len(),
        }
    });

    Ok(EnsembleReport {
        b,
        n_majority: spec.n_majority,
        seed: spec.seed,
        covariates: analyses.covariates.iter().map(|c| c.name().to_string()).collect(),
        subsample_class_counts: spec.subsample_counts(class_counts),
        selection,
        fits,
        wald,
        odds,
    })
}

/// Selection frequencies as CSV: `covariate,count,frequency`.
pub fn write_frequency_csv<W: Write>(report: &EnsembleReport, sink: W) -> Result<()> {
    let sel = report
        .selection
        .as_ref()
        .ok_or_else(|| Error::Input("report has no selection results".into()))?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["covariate", "count", "frequency"])?;
    for (j, name) in report.covariates.iter().enumerate() {
        w.write_record([name.clone(), sel.counts[j].to_string(), sel.frequency[j].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn box_fields(s: &Option<BoxStats>) -> Vec<String> {
    match s {
        Some(s) => [s.n as f64, s.q1, s.median, s.q3, s.whisker_low, s.whisker_high]
            .iter()
            .map(|v| v.to_string())
            .chain([s.n_outliers.to_string()])
            .collect(),
        None => vec!["0".into(), String::new(), String::new(), String::new(), String::new(), String::new(), "0".into()],
    }
}

const BOX_HEADER: [&str; 7] = ["n", "q1", "median", "q3", "whisker_low", "whisker_high", "n_outliers"];

/// Odds-ratio box-plot data: one row per covariate and contrast.
pub fn write_odds_box_csv<W: Write>(report: &EnsembleReport, sink: W) -> Result<()> {
    let odds = report
        .odds
        .as_ref()
        .ok_or_else(|| Error::Input("report has no odds-ratio results".into()))?;
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["covariate", "contrast", "d"];
    header.extend(BOX_HEADER);
    w.write_record(&header)?;
    for dist in &odds.distributions {
        let mut row = vec![dist.covariate.clone(), dist.contrast.to_string(), dist.d.to_string()];
        row.extend(box_fields(&dist.summary));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Importance box-plot data: one row per covariate.
pub fn write_importance_box_csv<W: Write>(report: &EnsembleReport, sink: W) -> Result<()> {
    let sel = report
        .selection
        .as_ref()
        .ok_or_else(|| Error::Input("report has no selection results".into()))?;
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["covariate"];
    header.extend(BOX_HEADER);
    w.write_record(&header)?;
    for (j, name) in report.covariates.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(box_fields(&sel.importance[j]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
