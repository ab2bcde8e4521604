//! Hybrid data + physics training of the surrogate.

mod adam;
mod data;
mod grid;
mod loss;
mod trainer;

pub use adam::{learning_rate, AdamState};
pub(crate) use data::stream_rng;
pub use data::{Sample, Sampler, TrainingSet};
pub use grid::{grid_search, GridCell, GridSearchResult};
pub use loss::{
    data_loss, loss_and_grad, physics_loss, residuals, taped_data_term, taped_physics_term,
    total_loss, FrictionTerms, LossEval, PhysicsOptions, CHUNK_ROWS,
};
pub use trainer::{train, train_on_field, LossRecord, TrainOutcome};

use thiserror::Error;

use crate::autodiff::TapeError;
use crate::surrogate::{Activation, Architecture, Encoding, SurrogateError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("non-finite gradient at parameter index {index}")]
    NonFiniteGradient { index: usize },
    #[error("training diverged at iteration {iteration}")]
    Diverged {
        iteration: u64,
        history: Vec<LossRecord>,
    },
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the physics term; 0 gives pure supervision.
    pub lambda_physics: f64,
    /// Fourier scale; ignored when `fourier` is false.
    pub sigma: f64,
    pub fourier: bool,
    pub fourier_features: usize,
    pub width: usize,
    pub blocks: usize,
    pub activation: Activation,
    pub batch_size: usize,
    pub collocation_points_per_batch: usize,
    pub lr_initial: f64,
    pub lr_decay_rate: f64,
    pub lr_decay_every: u64,
    pub max_iterations: u64,
    pub seed: u64,
    pub validation_fraction: f64,
    pub record_every: u64,
    /// Adds friction and bed slope to the momentum residual.
    pub extended_momentum: bool,
    /// Abort when the total loss exceeds this multiple of its first value.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let arch = Architecture::default();
        Self {
            lambda_physics: 0.1,
            sigma: 4.0,
            fourier: true,
            fourier_features: 128,
            width: arch.width,
            blocks: arch.blocks,
            activation: arch.activation,
            batch_size: 1024,
            collocation_points_per_batch: 1024,
            lr_initial: 1e-3,
            lr_decay_rate: 0.5,
            lr_decay_every: 20_000,
            max_iterations: 100_000,
            seed: 0,
            validation_fraction: 0.1,
            record_every: 100,
            extended_momentum: false,
            divergence_factor: 1e6,
        }
    }
}

impl TrainConfig {
    /// Smaller network and batch for single-core runs.
    pub fn compact() -> Self {
        let arch = Architecture::compact();
        Self {
            width: arch.width,
            blocks: arch.blocks,
            batch_size: 256,
            collocation_points_per_batch: 256,
            ..Self::default()
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            encoding: if self.fourier {
                Encoding::Fourier {
                    features: self.fourier_features,
                    sigma: self.sigma,
                }
            } else {
                Encoding::Raw
            },
            width: self.width,
            blocks: self.blocks,
            activation: self.activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.lambda_physics >= 0.0 && self.lambda_physics.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda_physics));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be > 0, got {}", self.sigma));
        }
        if self.batch_size == 0 || self.collocation_points_per_batch == 0 {
            return bad("batch and collocation sizes must be positive".into());
        }
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return bad(format!(
                "learning rate must be > 0, got {}",
                self.lr_initial
            ));
        }
        if !(self.lr_decay_rate > 0.0 && self.lr_decay_rate < 1.0) {
            return bad(format!(
                "decay rate must be in (0, 1), got {}",
                self.lr_decay_rate
            ));
        }
        if self.lr_decay_every == 0 || self.record_every == 0 {
            return bad("decay interval and record interval must be positive".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation fraction must be in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        if !(self.divergence_factor > 1.0) {
            return bad("divergence factor must exceed 1".into());
        }
        self.architecture().validate()?;
        Ok(())
    }
}
