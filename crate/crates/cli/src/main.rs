//! `coinfection`: command-line entry point for the coinfection analysis
//! workflow.
//!
//! Every subcommand writes its outputs and a `manifest.json` into
//! `--out-dir`. Failures print one JSON error record on stderr; the exit
//! code is 1 for data and model errors and 2 for usage errors.

mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{
    CalibrateArgs, EnsembleArgs, FitArgs, OddsArgs, PredictArgs, RfArgs, SimulateArgs, SummarizeArgs,
};

#[derive(Debug, Parser)]
#[command(name = "coinfection", version, about = "Malaria-arbovirus coinfection analysis")]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not
    /// depend on this value.
    #[arg(long, global = true, env = "COINFECTION_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort from known coefficients.
    Simulate(SimulateArgs),
    /// Ingest a dataset and report its contingency table.
    Summarize(SummarizeArgs),
    /// Fit the multinomial logit, optionally with stepwise selection and
    /// the independence test.
    Fit(FitArgs),
    /// Random-forest importance and VSURF selection.
    Rf(RfArgs),
    /// Undersampling ensemble for the rare classes.
    Ensemble(EnsembleArgs),
    /// Odds ratios with confidence intervals.
    Odds(OddsArgs),
    /// Choose the coinfection threshold by cross-validated WMCR.
    Calibrate(CalibrateArgs),
    /// Score patients with a fitted model.
    Predict(PredictArgs),
}

fn error_record(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error_record("usage", e.render().to_string().trim()));
            return ExitCode::from(2);
        }
    };

    let threads = cli.threads.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    if threads == 0 {
        eprintln!("{}", error_record("usage", "--threads must be at least 1"));
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("{}", error_record("runtime", &e.to_string()));
        return ExitCode::FAILURE;
    }

    let ctx = commands::Context { argv, threads };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Summarize(a) => commands::summarize(&ctx, a),
        Command::Fit(a) => commands::fit(&ctx, a),
        Command::Rf(a) => commands::rf(&ctx, a),
        Command::Ensemble(a) => commands::ensemble(&ctx, a),
        Command::Odds(a) => commands::odds(&ctx, a),
        Command::Calibrate(a) => commands::calibrate(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<coinfection_core::Error>()
                .map_or("io", coinfection_core::Error::kind);
            eprintln!("{}", error_record(kind, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
