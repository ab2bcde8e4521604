//! Accuracy metrics, solver-vs-surrogate timing and the encoding/physics
//! ablation.

mod ablation;
mod metrics;

pub use ablation::{
    run_ablation, AblationConfig, AblationEntry, AblationOptions, AblationResult, StationCurve,
};
pub use metrics::{
    benchmark, evaluate, histogram, median, mrae, BenchmarkTable, EvalOptions, EvalReport,
    Histogram, DEFAULT_COLLOCATION_POINTS, HISTOGRAM_BINS,
};

use thiserror::Error;

use crate::solver::{SolverError, StageDatum};
use crate::surrogate::SurrogateError;
use crate::training::TrainError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("mean of truth values is {0}; relative error is undefined")]
    NonPositiveTruth(f64),
    #[error("datum mismatch: field stores {field:?}, evaluation requested {requested:?}")]
    DatumMismatch {
        field: StageDatum,
        requested: StageDatum,
    },
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
