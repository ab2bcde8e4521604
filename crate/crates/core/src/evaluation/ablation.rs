use super::metrics::{evaluate, EvalOptions, EvalReport};
use super::Result;
use crate::geometry::RiverScenario;
use crate::solver::FlowField;
use crate::surrogate::{StageModel, SurrogateModel};
use crate::training::{
    data_loss, train, LossRecord, PhysicsOptions, TrainConfig, TrainError, TrainingSet,
};

/// The three configurations compared by the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationConfig {
    /// Raw coordinates, no physics term.
    Base,
    /// Fourier encoding, no physics term.
    FourierOnly,
    /// Fourier encoding and physics term.
    Full,
}

impl AblationConfig {
    pub const ALL: [AblationConfig; 3] = [Self::Base, Self::FourierOnly, Self::Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::FourierOnly => "fourier_only",
            Self::Full => "full",
        }
    }

    /// `base` with this configuration's encoding and λ applied.
    pub fn apply(self, base: &TrainConfig, sigma: f64, lambda: f64) -> TrainConfig {
        let (fourier, lambda_physics) = match self {
            Self::Base => (false, 0.0),
            Self::FourierOnly => (true, 0.0),
            Self::Full => (true, lambda),
        };
        TrainConfig {
            fourier,
            sigma,
            lambda_physics,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationOptions {
    pub budget_iters: u64,
    pub seed: u64,
    pub sigma: f64,
    pub lambda: f64,
    /// Index into the field's stations for the stage curves.
    pub curve_station: usize,
    /// Everything else about training (network size, batch, lr).
    pub train: TrainConfig,
}

impl Default for AblationOptions {
    fn default() -> Self {
        Self {
            budget_iters: 5_000,
            seed: 0,
            sigma: 4.0,
            lambda: 0.1,
            curve_station: 0,
            train: TrainConfig::compact(),
        }
    }
}

/// Predicted and true stage over time at one station.
#[derive(Debug, Clone, PartialEq)]
pub struct StationCurve {
    pub station_miles: f64,
    pub t_hours: Vec<f64>,
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AblationEntry {
    pub config: AblationConfig,
    pub train_config: TrainConfig,
    /// `None` when training diverged.
    pub report: Option<EvalReport>,
    /// Supervised loss of the returned weights over the whole training set.
    pub final_data_loss: f64,
    pub history: Vec<LossRecord>,
    pub curve: Option<StationCurve>,
    pub model: Option<SurrogateModel>,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub seed: u64,
    pub budget_iters: u64,
    pub entries: Vec<AblationEntry>,
}

impl AblationResult {
    pub fn entry(&self, config: AblationConfig) -> &AblationEntry {
        self.entries
            .iter()
            .find(|e| e.config == config)
            .expect("all three configurations are present")
    }

    /// `fourier_only` fits the training data better than `base`.
    pub fn fourier_beats_base(&self) -> Option<bool> {
        let (b, f) = (
            self.entry(AblationConfig::Base),
            self.entry(AblationConfig::FourierOnly),
        );
        (!b.diverged && !f.diverged).then(|| f.final_data_loss < b.final_data_loss)
    }

    /// Physics residual of `fourier_only` divided by that of `full`.
    pub fn physics_improvement(&self) -> Option<f64> {
        let f = self.entry(AblationConfig::FourierOnly).report.as_ref()?;
        let full = self.entry(AblationConfig::Full).report.as_ref()?;
        Some(f.physics_residual / full.physics_residual)
    }
}

/// Trains the three configurations on identical data with the same seed
/// and budget. A diverged configuration is marked and the rest still run.
pub fn run_ablation(
    scenario: &RiverScenario,
    field: &FlowField,
    opts: &AblationOptions,
) -> Result<AblationResult> {
    let set = TrainingSet::from_field(field)?;
    let physics_for = |c: &TrainConfig| PhysicsOptions::for_scenario(scenario, c.extended_momentum);
    let station = opts.curve_station.min(field.n_x() - 1);
    let mut entries = Vec::with_capacity(3);
    for config in AblationConfig::ALL {
        let base = TrainConfig {
            max_iterations: opts.budget_iters,
            seed: opts.seed,
            ..opts.train.clone()
        };
        let tc = config.apply(&base, opts.sigma, opts.lambda);
        let model = SurrogateModel::new(tc.architecture(), set.normalization, tc.seed)?;
        log::info!("ablation: training {}", config.name());
        match train(model, &set, &physics_for(&tc), &tc) {
            Ok(outcome) => {
                let report = evaluate(
                    &outcome.model,
                    field,
                    scenario,
                    &EvalOptions {
                        seed: opts.seed,
                        extended_momentum: tc.extended_momentum,
                        ..EvalOptions::default()
                    },
                )?;
                let final_data_loss = data_loss(&outcome.model, &set.samples)?;
                let curve = station_curve(&outcome.model, field, station)?;
                entries.push(AblationEntry {
                    config,
                    train_config: tc,
                    report: Some(report),
                    final_data_loss,
                    history: outcome.history,
                    curve: Some(curve),
                    model: Some(outcome.model),
                    diverged: false,
                });
            }
            Err(TrainError::Diverged { iteration, history }) => {
                log::warn!(
                    "ablation: {} diverged at iteration {iteration}",
                    config.name()
                );
                entries.push(AblationEntry {
                    config,
                    train_config: tc,
                    report: None,
                    final_data_loss: f64::INFINITY,
                    history,
                    curve: None,
                    model: None,
                    diverged: true,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(AblationResult {
        seed: opts.seed,
        budget_iters: opts.budget_iters,
        entries,
    })
}

fn station_curve(model: &dyn StageModel, field: &FlowField, xi: usize) -> Result<StationCurve> {
    let x = field.x_grid_miles[xi];
    let points: Vec<[f64; 2]> = field.t_grid_hours.iter().map(|&t| [x, t]).collect();
    let predicted = model.predict_batch(&points)?.iter().map(|p| p.h).collect();
    Ok(StationCurve {
        station_miles: x,
        t_hours: field.t_grid_hours.clone(),
        truth: field.station_series(xi),
        predicted,
    })
}
