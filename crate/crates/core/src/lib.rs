//! Statistical toolkit for diagnosing malaria–arbovirus coinfection.
//!
//! The crate covers the whole analysis chain on four-class infection data:
//! record ingestion ([`dataset`]), synthetic cohorts with known parameters
//! ([`simulate`]), the multinomial logit model with stepwise selection and
//! the independence test ([`mlogit`]), random-forest importance and
//! two-stage variable selection ([`forest`]), undersampling ensembles for
//! rare classes ([`ensemble`]), odds ratios ([`effects`]) and the
//! coinfection-probability classifier with its threshold calibration
//! ([`diagnosis`]).

pub mod dataset;
pub mod diagnosis;
pub mod effects;
pub mod ensemble;
pub mod error;
pub mod forest;
pub mod mlogit;
pub mod rng;
pub mod simulate;

pub use dataset::{
    encode_response, ingest_csv, summarize, CaseDefinition, ColumnMap, ContingencyTable, Covariate,
    CovariateVector, Dataset, DropReport, InfectionStatus, Record, ResponseClass, NUM_COVARIATES,
};
pub use error::{Error, Result};
pub use mlogit::{CoefMatrix, Design, FitConfig, FitResult, WaldResult};
