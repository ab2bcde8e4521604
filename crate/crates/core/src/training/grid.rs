use super::data::TrainingSet;
use super::loss::PhysicsOptions;
use super::trainer::train;
use super::{Result, TrainConfig, TrainError};
use crate::evaluation::mrae;
use crate::surrogate::SurrogateModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub lambda: f64,
    pub sigma: f64,
    /// Validation depth MRAE; `+inf` when training diverged.
    pub score: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best_lambda: f64,
    pub best_sigma: f64,
    pub table: Vec<GridCell>,
}

/// Trains one model per `(λ, σ)` pair for `budget_iters` iterations using
/// `base` for everything else and scores it on the validation split.
/// Ties go to the smaller σ, then the smaller λ.
pub fn grid_search(
    set: &TrainingSet,
    physics: &PhysicsOptions,
    lambdas: &[f64],
    sigmas: &[f64],
    budget_iters: u64,
    base: &TrainConfig,
) -> Result<GridSearchResult> {
    if lambdas.is_empty() || sigmas.is_empty() {
        return Err(TrainError::InvalidConfig(
            "grid search needs nonempty grids".into(),
        ));
    }
    let (_, val) = set.split(base.validation_fraction, base.seed);
    let val = if val.is_empty() { set.clone() } else { val };
    let points: Vec<[f64; 2]> = val.samples.iter().map(|s| [s.x_miles, s.t_hours]).collect();
    let truth: Vec<f64> = val.samples.iter().map(|s| s.h_ft).collect();

    let mut table = Vec::with_capacity(lambdas.len() * sigmas.len());
    for &sigma in sigmas {
        for &lambda in lambdas {
            let config = TrainConfig {
                lambda_physics: lambda,
                sigma,
                max_iterations: budget_iters,
                ..base.clone()
            };
            config.validate()?;
            let model = SurrogateModel::new(config.architecture(), set.normalization, config.seed)?;
            let score = match train(model, set, physics, &config) {
                Ok(outcome) => {
                    let pred: Vec<f64> = outcome
                        .model
                        .predict_batch(&points)?
                        .iter()
                        .map(|p| p.h)
                        .collect();
                    mrae(&pred, &truth).map_err(|e| TrainError::InvalidData(e.to_string()))?
                }
                Err(TrainError::Diverged { iteration, .. }) => {
                    log::warn!("λ={lambda} σ={sigma} diverged at iteration {iteration}");
                    f64::INFINITY
                }
                Err(TrainError::NonFiniteGradient { index }) => {
                    log::warn!("λ={lambda} σ={sigma}: non-finite gradient at {index}");
                    f64::INFINITY
                }
                Err(e) => return Err(e),
            };
            table.push(GridCell {
                lambda,
                sigma,
                score,
                diverged: score.is_infinite(),
            });
        }
    }

    let mut order: Vec<&GridCell> = table.iter().collect();
    order.sort_by(|a, b| {
        a.sigma
            .total_cmp(&b.sigma)
            .then(a.lambda.total_cmp(&b.lambda))
    });
    let mut best = order[0];
    for c in &order[1..] {
        if c.score < best.score {
            best = c;
        }
    }
    Ok(GridSearchResult {
        best_lambda: best.lambda,
        best_sigma: best.sigma,
        table,
    })
}
