//! Shared fixtures for the solver-versus-surrogate benchmarks.

use stagecast_core::geometry::{make_flood_wave_scenario, RiverScenario};
use stagecast_core::solver::{solve, FlowField, SolverConfig};
use stagecast_core::surrogate::SurrogateModel;
use stagecast_core::training::{TrainConfig, TrainingSet};

pub struct Fixture {
    pub scenario: RiverScenario,
    pub config: SolverConfig,
    pub field: FlowField,
    pub model: SurrogateModel,
    /// Every station/output-time pair of the field.
    pub points: Vec<[f64; 2]>,
}

/// Flood-wave scenario with an untrained compact model; inference cost
/// does not depend on the weights.
pub fn fixture(n_stations: usize, n_cells: usize) -> Fixture {
    let scenario = make_flood_wave_scenario(n_stations, 3.0, 0).expect("valid scenario");
    let config = SolverConfig {
        n_cells,
        ..SolverConfig::default()
    };
    let field = solve(&scenario, &config).expect("solver runs");
    let set = TrainingSet::from_field(&field).expect("depth field");
    let model = SurrogateModel::new(TrainConfig::compact().architecture(), set.normalization, 0)
        .expect("valid architecture");
    let points = field
        .t_grid_hours
        .iter()
        .flat_map(|&t| field.x_grid_miles.iter().map(move |&x| [x, t]))
        .collect();
    Fixture {
        scenario,
        config,
        field,
        model,
        points,
    }
}
