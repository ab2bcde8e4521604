use std::time::Instant;

use rand::Rng;

use super::{EvalError, Result};
use crate::geometry::RiverScenario;
use crate::solver::{solve, FlowField, SolverConfig, StageDatum};
use crate::surrogate::StageModel;
use crate::training::{physics_loss, PhysicsOptions};

pub const DEFAULT_COLLOCATION_POINTS: usize = 10_000;
pub const HISTOGRAM_BINS: usize = 20;

// RNG stream for evaluation collocation points.
const EVAL_STREAM: u64 = 5;

/// Summed absolute error over summed truth.
pub fn mrae(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(EvalError::InvalidInput(format!(
            "{} predictions for {} truth values",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(EvalError::InvalidInput("no points".into()));
    }
    let denom: f64 = truth.iter().sum();
    if !(denom > 0.0) {
        return Err(EvalError::NonPositiveTruth(denom / truth.len() as f64));
    }
    let num: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(num / denom)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Datum the comparison is made in; must match the field.
    pub datum: StageDatum,
    pub collocation_points: usize,
    pub seed: u64,
    pub extended_momentum: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            datum: StageDatum::Depth,
            collocation_points: DEFAULT_COLLOCATION_POINTS,
            seed: 0,
            extended_momentum: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub station_positions_miles: Vec<f64>,
    pub per_station_mrae: Vec<f64>,
    pub overall_mrae: f64,
    /// Mean squared PDE residual on uniform collocation points.
    pub physics_residual: f64,
    pub solver_seconds: f64,
    pub surrogate_seconds: f64,
    pub speedup: f64,
    pub n_eval_points: usize,
    pub datum: StageDatum,
}

impl EvalReport {
    /// Share of stations whose MRAE is at most `threshold`.
    pub fn fraction_of_stations_within(&self, threshold: f64) -> f64 {
        let n = self
            .per_station_mrae
            .iter()
            .filter(|&&e| e <= threshold)
            .count();
        n as f64 / self.per_station_mrae.len() as f64
    }
}

/// Scores `model` against `field` on its station/output-time grid.
///
/// The model predicts depth; with an elevation datum the bed elevation is
/// added before comparing. `solver_seconds` is taken from the field.
pub fn evaluate(
    model: &dyn StageModel,
    field: &FlowField,
    scenario: &RiverScenario,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if field.datum != opts.datum {
        return Err(EvalError::DatumMismatch {
            field: field.datum,
            requested: opts.datum,
        });
    }
    field.validate().map_err(EvalError::InvalidInput)?;
    if opts.collocation_points == 0 {
        return Err(EvalError::InvalidInput(
            "need at least one collocation point".into(),
        ));
    }
    let points = grid_points(field);

    let started = Instant::now();
    let preds = model.predict_batch(&points)?;
    let surrogate_seconds = started.elapsed().as_secs_f64();

    let nx = field.n_x();
    let stage: Vec<f64> = preds
        .iter()
        .zip(&points)
        .map(|(p, pt)| match opts.datum {
            StageDatum::Depth => p.h,
            StageDatum::Elevation => p.h + scenario.geometry.bed_elevation_at(pt[0]),
        })
        .collect();
    let overall = mrae(&stage, &field.h)?;
    let mut per_station = Vec::with_capacity(nx);
    for xi in 0..nx {
        let p: Vec<f64> = (0..field.n_t()).map(|ti| stage[ti * nx + xi]).collect();
        per_station.push(mrae(&p, &field.station_series(xi))?);
    }

    let domain = model.domain();
    let mut rng = crate::training::stream_rng(opts.seed, EVAL_STREAM);
    let colloc: Vec<[f64; 2]> = (0..opts.collocation_points)
        .map(|_| domain.denormalize([rng.random::<f64>(), rng.random::<f64>()]))
        .collect();
    let physics = physics_loss(
        model,
        &colloc,
        &PhysicsOptions::for_scenario(scenario, opts.extended_momentum),
    )?;

    let solver_seconds = field.wall_clock_seconds;
    Ok(EvalReport {
        station_positions_miles: field.x_grid_miles.clone(),
        per_station_mrae: per_station,
        overall_mrae: overall,
        physics_residual: physics,
        solver_seconds,
        surrogate_seconds,
        speedup: solver_seconds / surrogate_seconds,
        n_eval_points: points.len(),
        datum: opts.datum,
    })
}

fn grid_points(field: &FlowField) -> Vec<[f64; 2]> {
    field
        .t_grid_hours
        .iter()
        .flat_map(|&t| field.x_grid_miles.iter().map(move |&x| [x, t]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub solver_runs: Vec<f64>,
    pub surrogate_runs: Vec<f64>,
    pub solver_seconds: f64,
    pub surrogate_seconds: f64,
    pub speedup: f64,
    pub n_points: usize,
    pub n_cells: usize,
}

/// Median wall-clock of a full reference solve against surrogate
/// inference on the same station/output-time grid. One warm-up run of
/// each is discarded.
pub fn benchmark(
    model: &dyn StageModel,
    scenario: &RiverScenario,
    config: &SolverConfig,
    repetitions: usize,
) -> Result<BenchmarkTable> {
    if repetitions < 3 {
        return Err(EvalError::InvalidInput(format!(
            "need at least 3 repetitions, got {repetitions}"
        )));
    }
    let field = solve(scenario, config)?;
    let points = grid_points(&field);
    model.predict_batch(&points)?;

    let mut solver_runs = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let started = Instant::now();
        solve(scenario, config)?;
        solver_runs.push(started.elapsed().as_secs_f64());
    }
    let mut surrogate_runs = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let started = Instant::now();
        model.predict_batch(&points)?;
        surrogate_runs.push(started.elapsed().as_secs_f64());
    }
    let solver_seconds = median(&solver_runs);
    let surrogate_seconds = median(&surrogate_runs);
    Ok(BenchmarkTable {
        solver_runs,
        surrogate_runs,
        solver_seconds,
        surrogate_seconds,
        speedup: solver_seconds / surrogate_seconds,
        n_points: points.len(),
        n_cells: config.n_cells,
    })
}

/// Equal-width bin counts over `[0, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let max = values.iter().copied().fold(0.0, f64::max);
    let width = if max > 0.0 {
        max / bins as f64
    } else {
        1.0 / bins as f64
    };
    let edges = (0..=bins).map(|i| i as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let k = ((v / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { edges, counts }
}
