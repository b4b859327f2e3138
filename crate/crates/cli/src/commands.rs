use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context as _, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use coinfection_core::diagnosis::{
    calibrate_gamma, calibrate_with_filter_grid, classify_values, coinfection_prob_row, evaluate_holdout, gamma_grid,
    holdout_split, AgeDaysFilter, CalibrationConfig, CalibrationResult,
};
use coinfection_core::effects::{canonical_increment_for, odds_ratio_table, Contrast, IncrementSpec};
use coinfection_core::ensemble::{
    run_ensemble, write_frequency_csv, write_importance_box_csv, write_odds_box_csv, EnsembleAnalyses, UndersampleSpec,
};
use coinfection_core::forest::{
    grow_forest, mda_importance, oob_error, vsurf_select, ForestConfig, ForestData, ImportanceReport, OobError,
    SelectionResult, VsurfConfig,
};
use coinfection_core::mlogit::{stepwise_aic, wald_independence};
use coinfection_core::simulate::{demo_beta, generate, CovariateLaw, GeneratorSpec, SeasonSwitch};
use coinfection_core::{
    dataset, ingest_csv, CaseDefinition, CoefMatrix, ColumnMap, Covariate, Dataset, Design, FitConfig, FitResult,
    ResponseClass,
};

use crate::output::OutDir;

pub struct Context {
    pub argv: Vec<String>,
    pub threads: usize,
}

/// Comma-separated covariate names, or `all`.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct CovariateList(Vec<Covariate>);

impl FromStr for CovariateList {
    type Err = coinfection_core::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Covariate::parse_list(s).map(CovariateList)
    }
}

/// Comma-separated class indices.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct ClassList(Vec<ResponseClass>);

impl FromStr for ClassList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .ok()
                    .and_then(ResponseClass::from_index)
                    .ok_or_else(|| format!("invalid class `{t}`, expected 0..=3"))
            })
            .collect::<Result<_, _>>()
            .map(ClassList)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Vsurf,
    Fit,
    Wald,
    Or,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Dataset CSV with the canonical header.
    #[arg(long)]
    pub input: PathBuf,

    /// Arboviral case definition: `igm` or `igm-igg`.
    #[arg(long, default_value = "igm")]
    pub mode: CaseDefinition,

    /// Header rename for a canonical field, as FIELD=HEADER (repeatable).
    #[arg(long = "rename", value_name = "FIELD=HEADER")]
    pub renames: Vec<String>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let mut map = ColumnMap::canonical();
        for r in &self.renames {
            let Some((field, header)) = r.split_once('=') else {
                bail!(coinfection_core::Error::Input(format!("rename `{r}` is not FIELD=HEADER")));
            };
            map = map.rename(field.trim(), header.trim());
        }
        let file = File::open(&self.input).with_context(|| format!("cannot open {}", self.input.display()))?;
        Ok(ingest_csv(BufReader::new(file), &map, self.mode)?)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitOptions {
    /// Convergence tolerance on the score and the Newton step.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,

    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,

    /// Ridge added to the information matrix.
    #[arg(long, default_value_t = 1e-8)]
    pub ridge: f64,
}

impl FitOptions {
    fn config(&self) -> FitConfig {
        FitConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            ridge: self.ridge,
            ..FitConfig::default()
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| coinfection_core::Error::Input(format!("{}: {e}", path.display())).into())
}

// ------------------------------------------------------------- simulate

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Number of patients.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Coefficient JSON `{"covariates": [...], "beta": [[...], [...], [...]]}`;
    /// built-in demonstration coefficients when absent.
    #[arg(long)]
    pub beta: Option<PathBuf>,

    /// Marginal laws by covariate name (JSON); unlisted covariates keep the
    /// defaults.
    #[arg(long)]
    pub covariate_law: Option<PathBuf>,

    /// Rainy/dry season switch (JSON).
    #[arg(long)]
    pub season: Option<PathBuf>,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn simulate(ctx: &Context, args: SimulateArgs) -> Result<()> {
    let law: CovariateLaw = match &args.covariate_law {
        Some(p) => read_json(p)?,
        None => CovariateLaw::default(),
    };
    let beta: CoefMatrix = match &args.beta {
        Some(p) => read_json(p)?,
        None => demo_beta(&law),
    };
    let season: Option<SeasonSwitch> = args.season.as_deref().map(read_json).transpose()?;
    let spec = GeneratorSpec {
        n: args.n,
        beta_true: beta,
        covariate_law: law,
        seed: args.seed,
        season,
    };
    let data = generate(&spec)?;
    let mut out = OutDir::create(&args.out_dir)?;
    out.with("data.csv", |w| dataset::write_csv(&data, w))?;
    out.json("generator.json", &spec)?;
    let inputs: Vec<&Path> = [&args.beta, &args.covariate_law, &args.season].into_iter().flatten().map(PathBuf::as_path).collect();
    out.finish(ctx, "simulate", &args, Some(args.seed), &inputs)
}

// ------------------------------------------------------------- summarize

#[derive(Debug, Args, Serialize)]
pub struct SummarizeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn summarize(ctx: &Context, args: SummarizeArgs) -> Result<()> {
    let data = args.data.load()?;
    let summary = dataset::summarize(&data)?;
    let mut out = OutDir::create(&args.out_dir)?;
    out.json("summary.json", &summary)?;
    out.finish(ctx, "summarize", &args, None, &[&args.data.input])
}

// ------------------------------------------------------------- fit

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    /// Covariates of the full model (comma-separated, or `all`).
    #[arg(long, default_value = "all")]
    pub covariates: CovariateList,

    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitOptions,

    /// Backward stepwise selection by AIC.
    #[arg(long)]
    pub stepwise: bool,

    /// Wald test of beta_3 = beta_1 + beta_2 on the final model.
    #[arg(long)]
    pub test_independence: bool,

    /// Recorded in the manifest; fitting itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn write_coefficients(out: &mut OutDir, fit: &FitResult) -> Result<()> {
    out.csv("coefficients.csv", |w| {
        w.write_record(["class", "term", "estimate", "std_error"])?;
        let mut terms = vec!["(intercept)".to_string()];
        terms.extend(fit.coef.covariate_names().iter().cloned());
        for k in 1..=3 {
            for (j, term) in terms.iter().enumerate() {
                w.write_record([
                    k.to_string(),
                    term.clone(),
                    fit.coef.get(k, j).to_string(),
                    fit.std_error(k, j).to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn fit(ctx: &Context, args: FitArgs) -> Result<()> {
    let data = args.data.load()?;
    let design = Design::from_dataset(&data, &args.covariates.0);
    let config = args.fit.config();
    let mut out = OutDir::create(&args.out_dir)?;
    let final_fit = if args.stepwise {
        let sw = stepwise_aic(&design, &config)?;
        out.json("stepwise.json", &sw)?;
        sw.fit
    } else {
        coinfection_core::mlogit::fit(&design, &config)?
    };
    out.json("fit.json", &final_fit)?;
    write_coefficients(&mut out, &final_fit)?;
    if args.test_independence {
        out.json("wald.json", &wald_independence(&final_fit)?)?;
    }
    out.finish(ctx, "fit", &args, Some(args.seed), &[&args.data.input])
}

// ------------------------------------------------------------- rf

#[derive(Debug, Args, Serialize)]
pub struct ForestOptions {
    #[arg(long, default_value_t = 500)]
    pub ntree: usize,

    /// Candidate covariates per node.
    #[arg(long, default_value_t = 3)]
    pub mtry: usize,

    #[arg(long, default_value_t = 1)]
    pub min_node_size: usize,

    #[arg(long)]
    pub max_depth: Option<usize>,
}

impl ForestOptions {
    fn config(&self, p: usize, seed: u64) -> ForestConfig {
        ForestConfig {
            ntree: self.ntree,
            mtry: self.mtry.min(p.max(1)),
            min_node_size: self.min_node_size,
            max_depth: self.max_depth,
            seed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RfArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value = "all")]
    pub covariates: CovariateList,

    #[command(flatten)]
    #[serde(flatten)]
    pub forest: ForestOptions,

    /// Run the two-stage VSURF selection.
    #[arg(long)]
    pub vsurf: bool,

    /// Forests in the VSURF importance stage.
    #[arg(long, default_value_t = 25)]
    pub n_forests: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct CovariateImportance {
    covariate: String,
    mda: f64,
    sd: f64,
    rank: usize,
    retained: Option<bool>,
    selected: Option<bool>,
}

#[derive(Debug, Serialize)]
struct NestedReport {
    covariates: Vec<String>,
    oob_error: f64,
}

#[derive(Debug, Serialize)]
struct VsurfReport {
    n_forests: usize,
    threshold: f64,
    retained: Vec<String>,
    nested: Vec<NestedReport>,
    selected: Vec<String>,
    empty_selection: bool,
}

#[derive(Debug, Serialize)]
struct RfReport {
    ntree: usize,
    mtry: usize,
    oob: Option<OobError>,
    importance: Vec<CovariateImportance>,
    vsurf: Option<VsurfReport>,
}

fn importance_rows(report: &ImportanceReport, selection: Option<&SelectionResult>) -> Vec<CovariateImportance> {
    let mut rank = vec![0; report.mda.len()];
    for (r, &j) in report.ranking.iter().enumerate() {
        rank[j] = r + 1;
    }
    (0..report.mda.len())
        .map(|j| CovariateImportance {
            covariate: report.names[j].clone(),
            mda: report.mda[j],
            sd: report.sd[j],
            rank: rank[j],
            retained: selection.map(|s| s.retained.contains(&j)),
            selected: selection.map(|s| s.is_selected(j)),
        })
        .collect()
}

pub fn rf(ctx: &Context, args: RfArgs) -> Result<()> {
    let data = args.data.load()?;
    let forest_data = ForestData::from_dataset(&data, &args.covariates.0);
    let names = forest_data.names().to_vec();
    let config = args.forest.config(forest_data.n_features(), args.seed);
    let report = if args.vsurf {
        let s = vsurf_select(&forest_data, &VsurfConfig { n_forests: args.n_forests, forest: config })?;
        let name_list = |idx: &[usize]| idx.iter().map(|&j| names[j].clone()).collect::<Vec<_>>();
        RfReport {
            ntree: config.ntree,
            mtry: config.mtry,
            oob: None,
            importance: importance_rows(&s.importance, Some(&s)),
            vsurf: Some(VsurfReport {
                n_forests: args.n_forests,
                threshold: s.threshold,
                retained: name_list(&s.retained),
                nested: s
                    .nested
                    .iter()
                    .map(|m| NestedReport { covariates: name_list(&m.features), oob_error: m.oob_error })
                    .collect(),
                selected: s.selected_names.clone(),
                empty_selection: s.empty_selection,
            }),
        }
    } else {
        let model = grow_forest(&forest_data, &config)?;
        let importance = mda_importance(&model, &forest_data, args.seed)?;
        RfReport {
            ntree: config.ntree,
            mtry: config.mtry,
            oob: Some(oob_error(&model, &forest_data)?),
            importance: importance_rows(&importance, None),
            vsurf: None,
        }
    };
    let mut out = OutDir::create(&args.out_dir)?;
    out.json("rf.json", &report)?;
    out.csv("importance.csv", |w| {
        w.write_record(["covariate", "mda", "sd", "rank", "selected"])?;
        for c in &report.importance {
            let selected = c.selected.map_or(String::new(), |s| s.to_string());
            w.write_record([c.covariate.clone(), c.mda.to_string(), c.sd.to_string(), c.rank.to_string(), selected])?;
        }
        Ok(())
    })?;
    out.finish(ctx, "rf", &args, Some(args.seed), &[&args.data.input])
}

// ------------------------------------------------------------- ensemble

#[derive(Debug, Args, Serialize)]
pub struct EnsembleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value = "all")]
    pub covariates: CovariateList,

    /// Number of sub-samples.
    #[arg(long, default_value_t = 1000)]
    pub b: usize,

    /// Records drawn from each majority class.
    #[arg(long, default_value_t = 50)]
    pub n_majority: usize,

    /// Classes to undersample.
    #[arg(long, default_value = "0,2")]
    pub majority_classes: ClassList,

    /// Analyses run on every sub-sample.
    #[arg(long, value_delimiter = ',', default_value = "vsurf")]
    pub analyses: Vec<Analysis>,

    #[command(flatten)]
    #[serde(flatten)]
    pub forest: ForestOptions,

    #[arg(long, default_value_t = 25)]
    pub n_forests: usize,

    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitOptions,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn ensemble(ctx: &Context, args: EnsembleArgs) -> Result<()> {
    let data = args.data.load()?;
    let covariates = args.covariates.0.clone();
    let spec = UndersampleSpec {
        n_majority: args.n_majority,
        majority_classes: args.majority_classes.0.clone(),
        b: args.b,
        seed: args.seed,
    };
    let has = |a| args.analyses.contains(&a);
    let mut analyses = EnsembleAnalyses::new(covariates.clone());
    if has(Analysis::Vsurf) {
        analyses.vsurf = Some(VsurfConfig {
            n_forests: args.n_forests,
            forest: args.forest.config(covariates.len(), args.seed),
        });
    }
    analyses.fit = has(Analysis::Fit);
    analyses.wald = has(Analysis::Wald);
    if has(Analysis::Or) {
        analyses.odds = covariates.iter().map(|&c| IncrementSpec::canonical(c)).collect();
    }
    analyses.fit_config = args.fit.config();

    let report = run_ensemble(&data, &spec, &analyses)?;
    let mut out = OutDir::create(&args.out_dir)?;
    out.json("ensemble.json", &report)?;
    if report.selection.is_some() {
        out.with("selection_frequency.csv", |w| write_frequency_csv(&report, w))?;
        out.with("importance_box.csv", |w| write_importance_box_csv(&report, w))?;
    }
    if report.odds.is_some() {
        out.with("odds_box.csv", |w| write_odds_box_csv(&report, w))?;
    }
    out.finish(ctx, "ensemble", &args, Some(args.seed), &[&args.data.input])
}

// ------------------------------------------------------------- odds

#[derive(Debug, Args, Serialize)]
pub struct OddsArgs {
    /// Fitted model JSON written by `fit` or `calibrate`.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub model: Option<PathBuf>,

    /// Dataset CSV to fit instead of reading a model.
    #[arg(long)]
    pub input: Option<PathBuf>,

    #[arg(long, default_value = "igm")]
    pub mode: CaseDefinition,

    /// Covariates of the model fitted from `--input`.
    #[arg(long, default_value = "all")]
    pub covariates: CovariateList,

    /// Contrast `k` (class k against class 0) or `k:l` (repeatable); the
    /// six standard contrasts when absent.
    #[arg(long = "contrast")]
    pub contrasts: Vec<Contrast>,

    /// Covariate to report (repeatable); all model covariates when absent.
    #[arg(long = "covariate")]
    pub covariate: Vec<String>,

    /// Increment for the covariate at the same position (repeatable);
    /// canonical increments otherwise.
    #[arg(long = "d")]
    pub d: Vec<f64>,

    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// A model file: either a full fit or bare coefficients.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ModelFile {
    Fit(Box<FitResult>),
    Coef(CoefMatrix),
}

impl ModelFile {
    fn coef(&self) -> &CoefMatrix {
        match self {
            ModelFile::Fit(f) => &f.coef,
            ModelFile::Coef(c) => c,
        }
    }
}

pub fn odds(ctx: &Context, args: OddsArgs) -> Result<()> {
    let (fit, input) = match (&args.model, &args.input) {
        (Some(path), _) => match read_json::<ModelFile>(path)? {
            ModelFile::Fit(f) => (*f, path.clone()),
            ModelFile::Coef(_) => bail!(coinfection_core::Error::Input(
                "odds ratios need a fitted model with its covariance, not bare coefficients".into()
            )),
        },
        (None, Some(path)) => {
            let data = DataArgs { input: path.clone(), mode: args.mode, renames: Vec::new() }.load()?;
            let design = Design::from_dataset(&data, &args.covariates.0);
            (coinfection_core::mlogit::fit(&design, &FitConfig::default())?, path.clone())
        }
        (None, None) => unreachable!("clap requires one of --model and --input"),
    };
    if args.d.len() > args.covariate.len() {
        bail!(coinfection_core::Error::Input("more --d values than --covariate names".into()));
    }
    let names: Vec<String> = if args.covariate.is_empty() {
        fit.coef.covariate_names().to_vec()
    } else {
        args.covariate.clone()
    };
    let specs = names
        .iter()
        .enumerate()
        .map(|(i, name)| IncrementSpec::new(name.clone(), args.d.get(i).copied().unwrap_or_else(|| canonical_increment_for(name))))
        .collect::<coinfection_core::Result<Vec<_>>>()?;
    let contrasts = if args.contrasts.is_empty() { Contrast::DISPLAY.to_vec() } else { args.contrasts.clone() };
    let table = odds_ratio_table(&fit, &specs, &contrasts, args.level)?;

    let mut out = OutDir::create(&args.out_dir)?;
    #[derive(Serialize)]
    struct OddsReport<'a> {
        level: f64,
        converged: bool,
        separation_flag: bool,
        odds_ratios: &'a [coinfection_core::effects::OddsRatioEstimate],
    }
    out.json(
        "odds.json",
        &OddsReport { level: args.level, converged: fit.converged, separation_flag: fit.separation_flag, odds_ratios: &table },
    )?;
    out.csv("odds.csv", |w| {
        w.write_record(["covariate", "d", "contrast", "odds_ratio", "ci_low", "ci_high", "level"])?;
        for e in &table {
            w.write_record([
                e.covariate.clone(),
                e.d.to_string(),
                e.contrast.to_string(),
                e.point.to_string(),
                e.ci_low.to_string(),
                e.ci_high.to_string(),
                e.level.to_string(),
            ])?;
        }
        Ok(())
    })?;
    out.finish(ctx, "odds", &args, None, &[&input])
}

// ------------------------------------------------------------- calibrate

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value = "all")]
    pub covariates: CovariateList,

    #[arg(long, default_value_t = 5)]
    pub folds: usize,

    /// Weight c of a false negative in the WMCR.
    #[arg(long, default_value_t = 2.0)]
    pub cost: f64,

    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,

    /// Age/sick-days filter applied to positive predictions, e.g.
    /// `age>10,sick_days>3`.
    #[arg(long)]
    pub filter: Option<AgeDaysFilter>,

    /// Search the filter thresholds jointly with gamma over these age
    /// values (comma-separated).
    #[arg(long, value_delimiter = ',', requires = "days_grid")]
    pub age_grid: Vec<f64>,

    /// Sick-day values for the joint filter search.
    #[arg(long, value_delimiter = ',', requires = "age_grid")]
    pub days_grid: Vec<f64>,

    /// Also evaluate the calibrated rule on a stratified 2:1 holdout split.
    #[arg(long)]
    pub holdout: bool,

    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitOptions,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn calibrate(ctx: &Context, args: CalibrateArgs) -> Result<()> {
    if args.filter.is_some() && !args.age_grid.is_empty() {
        bail!(coinfection_core::Error::Spec("--filter and a filter grid are mutually exclusive".into()));
    }
    let data = args.data.load()?;
    let mut config = CalibrationConfig::new(args.covariates.0.clone());
    config.folds = args.folds;
    config.cost = args.cost;
    config.grid = gamma_grid(args.grid_step)?;
    config.filter = args.filter;
    config.fit_config = args.fit.config();
    config.seed = args.seed;

    let result: CalibrationResult = if args.age_grid.is_empty() {
        calibrate_gamma(&data, &config)?
    } else {
        calibrate_with_filter_grid(&data, &config, &args.age_grid, &args.days_grid)?
    };

    let mut out = OutDir::create(&args.out_dir)?;
    out.json("calibration.json", &result)?;
    out.csv("curve.csv", |w| {
        w.write_record(["gamma", "wmcr", "fn", "fp"])?;
        for p in &result.curve {
            w.write_record([p.gamma.to_string(), p.wmcr.to_string(), p.fn_rate.to_string(), p.fp_rate.to_string()])?;
        }
        Ok(())
    })?;

    // the model handed to `predict`: fitted on the training part when a
    // holdout is evaluated, on everything otherwise
    let train: Vec<usize> = if args.holdout {
        let h = evaluate_holdout(&data, &config, result.gamma_star, result.filter)?;
        out.json("holdout.json", &h)?;
        holdout_split(&data.labels(), 2.0 / 3.0, config.seed)?.0
    } else {
        (0..data.len()).collect()
    };
    let design = Design::from_dataset(&data.subset(&train), &config.covariates);
    let model = coinfection_core::mlogit::fit(&design, &config.fit_config)?;
    out.json("model.json", &model)?;
    out.finish(ctx, "calibrate", &args, Some(args.seed), &[&args.data.input])
}

// ------------------------------------------------------------- predict

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Model JSON (a fit or bare coefficients).
    #[arg(long)]
    pub model: PathBuf,

    /// Patient CSV with a column per model covariate; `age` and
    /// `sick_days` are needed when a filter is given. An `id` column is
    /// copied through.
    #[arg(long)]
    pub input: PathBuf,

    /// Threshold on P(coinfection | malaria).
    #[arg(long)]
    pub gamma: f64,

    #[arg(long)]
    pub filter: Option<AgeDaysFilter>,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn predict(ctx: &Context, args: PredictArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.gamma) {
        bail!(coinfection_core::Error::Spec(format!("gamma {} outside [0, 1]", args.gamma)));
    }
    let model: ModelFile = read_json(&args.model)?;
    let coef = model.coef();
    coef.validate()?;

    let file = File::open(&args.input).with_context(|| format!("cannot open {}", args.input.display()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(file));
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            coinfection_core::Error::Schema(format!("patient file has no `{name}` column")).into()
        })
    };
    let model_cols = coef.covariate_names().iter().map(|n| column(n)).collect::<Result<Vec<_>>>()?;
    let filter_cols = match &args.filter {
        Some(_) => Some((column("age")?, column("sick_days")?)),
        None => None,
    };
    let id_col = headers.iter().position(|h| h == "id");

    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let value = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                coinfection_core::Error::RejectedRecord(format!(
                    "row {}: `{}` = `{raw}` is not a number",
                    r + 1,
                    &headers[c]
                ))
                .into()
            })
        };
        let mut x = Vec::with_capacity(model_cols.len() + 1);
        x.push(1.0);
        for &c in &model_cols {
            x.push(value(c)?);
        }
        let prob = coinfection_prob_row(coef, &x);
        let (age, days) = match filter_cols {
            Some((a, d)) => (value(a)?, value(d)?),
            None => (f64::NAN, f64::NAN),
        };
        let label = classify_values(prob, args.gamma, age, days, args.filter.as_ref());
        let id = id_col.and_then(|c| record.get(c)).map(str::to_string).unwrap_or_else(|| (r + 1).to_string());
        rows.push((id, prob, label));
    }

    let mut out = OutDir::create(&args.out_dir)?;
    let filter = args.filter.map(|f| f.to_string()).unwrap_or_default();
    out.csv("predictions.csv", |w| {
        w.write_record(["id", "prob", "label", "gamma", "filter"])?;
        for (id, prob, label) in &rows {
            w.write_record([id.clone(), prob.to_string(), (*label as u8).to_string(), args.gamma.to_string(), filter.clone()])?;
        }
        Ok(())
    })?;
    out.finish(ctx, "predict", &args, None, &[&args.model, &args.input])
}
