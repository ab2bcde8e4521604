use std::time::Instant;

use super::adam::{learning_rate, AdamState};
use super::data::{Sampler, TrainingSet};
use super::loss::{data_loss, loss_and_grad, PhysicsOptions};
use super::{Result, TrainConfig, TrainError};
use crate::geometry::RiverScenario;
use crate::solver::FlowField;
use crate::surrogate::SurrogateModel;

/// Losses at one recorded iteration, measured before that iteration's update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: u64,
    pub data_loss: f64,
    pub physics_loss: f64,
    pub total_loss: f64,
    pub lr: f64,
    /// Supervised loss on the held-out split.
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights with the lowest validation loss seen.
    pub model: SurrogateModel,
    pub history: Vec<LossRecord>,
    pub best_iteration: u64,
    pub best_validation_loss: f64,
    pub iterations_run: u64,
    pub elapsed_seconds: f64,
}

impl TrainOutcome {
    /// Supervised loss of the last recorded iteration.
    pub fn final_data_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.data_loss)
    }
}

/// Builds the training set and a fresh model from `config`, then trains.
pub fn train_on_field(
    field: &FlowField,
    scenario: &RiverScenario,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let set = TrainingSet::from_field(field)?;
    let model = SurrogateModel::new(config.architecture(), set.normalization, config.seed)?;
    let physics = PhysicsOptions::for_scenario(scenario, config.extended_momentum);
    train(model, &set, &physics, config)
}

/// Runs `config.max_iterations` Adam steps on `data + λ physics`.
///
/// The architecture fields of `config` are not consulted; `model` is
/// trained as given. Collocation points are drawn uniformly over the
/// model's normalisation box each iteration.
pub fn train(
    model: SurrogateModel,
    set: &TrainingSet,
    physics: &PhysicsOptions,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    set.validate()?;
    if set.is_empty() {
        return Err(TrainError::InvalidData("training set is empty".into()));
    }
    let started = Instant::now();
    let (train_set, val_set) = set.split(config.validation_fraction, config.seed);
    let val_set = if val_set.is_empty() {
        train_set.clone()
    } else {
        val_set
    };

    let mut model = model;
    let mut sampler = Sampler::new(config.seed);
    let mut adam = AdamState::new(model.param_count());
    let mut history = Vec::new();
    let mut best = model.clone();
    let mut best_iteration = 0;
    let mut best_validation = f64::INFINITY;
    let mut initial_total = None;

    for i in 0..config.max_iterations {
        let batch = sampler.batch(&train_set, config.batch_size);
        let collocation = sampler.collocation(config.collocation_points_per_batch);
        let record = i % config.record_every == 0;
        let lr = learning_rate(
            config.lr_initial,
            config.lr_decay_rate,
            config.lr_decay_every,
            i,
        );

        let eval = match loss_and_grad(
            &model,
            &batch,
            &collocation,
            config.lambda_physics,
            record,
            physics,
        ) {
            Ok(e) => e,
            Err(TrainError::NonFinite(msg)) => {
                log::error!("iteration {i}: {msg}");
                return Err(TrainError::Diverged {
                    iteration: i,
                    history,
                });
            }
            Err(e) => return Err(e),
        };
        let initial = *initial_total.get_or_insert(eval.total);
        if !eval.total.is_finite() || eval.total > config.divergence_factor * initial {
            return Err(TrainError::Diverged {
                iteration: i,
                history,
            });
        }
        if let Some(index) = eval.grad.iter().position(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient { index });
        }

        if record {
            let validation = data_loss(&model, &val_set.samples)?;
            history.push(LossRecord {
                iteration: i,
                data_loss: eval.data,
                physics_loss: eval.physics.unwrap_or(f64::NAN),
                total_loss: eval.total,
                lr,
                validation_loss: validation,
            });
            log::info!(
                "iter {i}: data {:.4e} physics {:.4e} total {:.4e} val {:.4e} lr {lr:.2e}",
                eval.data,
                eval.physics.unwrap_or(f64::NAN),
                eval.total,
                validation
            );
            if validation < best_validation {
                best_validation = validation;
                best_iteration = i;
                best = model.clone();
            }
        }
        adam.step(model.weights_mut(), &eval.grad, lr);
    }

    if config.max_iterations > 0 {
        let validation = data_loss(&model, &val_set.samples)?;
        if !(validation.is_finite()) {
            return Err(TrainError::Diverged {
                iteration: config.max_iterations,
                history,
            });
        }
        if validation < best_validation {
            best_validation = validation;
            best_iteration = config.max_iterations;
            best = model;
        }
    } else {
        best_validation = data_loss(&best, &val_set.samples)?;
    }

    Ok(TrainOutcome {
        model: best,
        history,
        best_iteration,
        best_validation_loss: best_validation,
        iterations_run: config.max_iterations,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}
