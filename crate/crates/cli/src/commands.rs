use std::path::{Path, PathBuf};

use stagecast_core::evaluation::{
    benchmark, evaluate, histogram, run_ablation, AblationOptions, EvalError, EvalOptions,
    HISTOGRAM_BINS,
};
use stagecast_core::geometry::{
    make_flood_wave_scenario, make_flood_wave_scenario_with, make_lake_at_rest_scenario,
    make_uniform_flow_scenario, FloodWaveOptions, RiverScenario,
};
use stagecast_core::io::{
    self, atomic_write, read_checkpoint, read_field, read_scenario, scenario_hash,
    write_checkpoint, write_field, write_scenario, Checkpoint, FieldFile, IoError,
};
use stagecast_core::solver::{check_mass_balance, solve, SolverConfig, SolverError, StageDatum};
use stagecast_core::surrogate::{Activation, FieldInterpolant};
use stagecast_core::training::{train_on_field, TrainConfig, TrainError};

use crate::{
    AblateArgs, ActivationArg, BenchmarkArgs, Command, DatumArg, EvalArgs, InterpolantArgs,
    ModelArgs, Preset, ScenarioArgs, ScenarioKind, SimulateArgs, SolverArgs, TrainArgs,
};

pub const EXIT_PARSE: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_CONSISTENCY: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Consistency(_) => EXIT_CONSISTENCY,
            _ => EXIT_PARSE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        let code = match e {
            SolverError::InvalidConfig(_) | SolverError::Scenario(_) => EXIT_PARSE,
            _ => EXIT_SOLVER,
        };
        Failure::new(code, format!("solver: {e}"))
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = match e {
            TrainError::Diverged { .. } | TrainError::NonFiniteGradient { .. } => EXIT_DIVERGENCE,
            _ => EXIT_PARSE,
        };
        Failure::new(code, format!("training: {e}"))
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Solver(s) => s.into(),
            EvalError::Train(t) => t.into(),
            EvalError::DatumMismatch { .. } => Failure::new(EXIT_CONSISTENCY, e.to_string()),
            other => Failure::new(EXIT_PARSE, other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Scenario(a) => scenario(a),
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Interpolant(a) => interpolant(a),
        Command::Eval(a) => eval(a),
        Command::Benchmark(a) => bench(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn scenario(a: ScenarioArgs) -> Result<()> {
    let s = match a.kind {
        ScenarioKind::FloodWave => make_flood_wave_scenario(a.stations, a.peak_factor, a.seed),
        ScenarioKind::SharpPulse => make_flood_wave_scenario_with(&FloodWaveOptions::sharp_pulse(
            a.stations,
            a.peak_factor,
            a.seed,
        )),
        ScenarioKind::LakeAtRest => make_lake_at_rest_scenario(a.stations, a.depth, a.hours),
        ScenarioKind::UniformFlow => make_uniform_flow_scenario(a.stations, a.discharge, a.hours),
    }
    .map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    write_scenario(&a.out, &s)?;
    println!(
        "scenario {} written to {}",
        scenario_hash(&s),
        a.out.display()
    );
    Ok(())
}

fn solver_config(a: &SolverArgs) -> Result<SolverConfig> {
    let mut c = SolverConfig::new(a.cells, a.cfl)?;
    if a.frictionless {
        c = c.frictionless();
    }
    Ok(c)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let s = read_scenario(&a.scenario)?;
    let config = solver_config(&a.solver)?;
    let field = solve(&s, &config)?;
    let mass = check_mass_balance(&field, &s);
    write_field(
        &a.out,
        &FieldFile {
            field: field.clone(),
            scenario_hash: scenario_hash(&s),
        },
    )?;
    println!("mass balance error: {mass:.3e}");
    println!("wall clock: {:.3} s", field.wall_clock_seconds);
    Ok(())
}

/// Scenario and field, with the field's provenance checked.
fn load_pair(scenario: &Path, field: &Path) -> Result<(RiverScenario, FieldFile)> {
    let s = read_scenario(scenario)?;
    let f = read_field(field)?;
    f.check_hash(&scenario_hash(&s))?;
    Ok((s, f))
}

fn train_config(m: &ModelArgs, default_iterations: Option<u64>) -> Result<TrainConfig> {
    let mut c = match m.preset {
        Preset::Large => TrainConfig::default(),
        Preset::Compact => TrainConfig::compact(),
    };
    if let Some(v) = default_iterations {
        c.max_iterations = v;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = m.$flag {
                c.$field = v;
            }
        )*};
    }
    set!(lambda => lambda_physics, sigma => sigma, features => fourier_features, width => width,
         blocks => blocks, iterations => max_iterations, batch_size => batch_size,
         collocation => collocation_points_per_batch, lr => lr_initial,
         decay_rate => lr_decay_rate, decay_every => lr_decay_every);
    if let Some(a) = m.activation {
        c.activation = match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Tanh => Activation::Tanh,
        };
    }
    c.fourier = !m.no_fourier;
    c.extended_momentum = m.extended_momentum;
    c.seed = m.seed;
    c.validate()?;
    Ok(c)
}

fn history_path(a: &TrainArgs) -> PathBuf {
    a.history.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".history.csv");
        PathBuf::from(p)
    })
}

fn train(a: TrainArgs) -> Result<()> {
    let (s, f) = load_pair(&a.scenario, &a.field)?;
    let config = train_config(&a.model, None)?;
    let history = history_path(&a);
    match train_on_field(&f.field, &s, &config) {
        Ok(outcome) => {
            write_checkpoint(&a.out, &Checkpoint::Network(outcome.model))?;
            atomic_write(&history, io::history_csv(&outcome.history).as_bytes())?;
            println!(
                "trained {} iterations; best validation loss {:.4e} at iteration {}",
                outcome.iterations_run, outcome.best_validation_loss, outcome.best_iteration
            );
            Ok(())
        }
        Err(TrainError::Diverged {
            iteration,
            history: partial,
        }) => {
            atomic_write(&history, io::history_csv(&partial).as_bytes())?;
            Err(Failure::new(
                EXIT_DIVERGENCE,
                format!(
                    "training diverged at iteration {iteration}; partial history in {}",
                    history.display()
                ),
            ))
        }
        Err(e) => Err(e.into()),
    }
}

fn interpolant(a: InterpolantArgs) -> Result<()> {
    let f = read_field(&a.field)?;
    let i = FieldInterpolant::new(&f.field).map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    write_checkpoint(&a.out, &Checkpoint::Interpolant(i))?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (s, f) = load_pair(&a.scenario, &a.field)?;
    let ck = read_checkpoint(&a.checkpoint)?;
    let opts = EvalOptions {
        datum: match a.datum {
            DatumArg::Depth => StageDatum::Depth,
            DatumArg::Elevation => StageDatum::Elevation,
        },
        collocation_points: a.collocation,
        seed: a.seed,
        extended_momentum: false,
    };
    if f.field.wall_clock_seconds == 0.0 {
        log::warn!(
            "{} not found; timing.json will report a zero solver time",
            io::field_timing_path(&a.field).display()
        );
    }
    let report = evaluate(ck.as_model(), &f.field, &s, &opts)?;
    let dir = &a.out_dir;
    atomic_write(
        &dir.join("report.csv"),
        io::eval_report_csv(&report).as_bytes(),
    )?;
    atomic_write(
        &dir.join("summary.json"),
        io::eval_summary_json(&report, a.seed).as_bytes(),
    )?;
    atomic_write(
        &dir.join("timing.json"),
        io::timing_json(&report).as_bytes(),
    )?;
    let h = histogram(&report.per_station_mrae, HISTOGRAM_BINS);
    atomic_write(&dir.join("histogram.csv"), io::histogram_csv(&h).as_bytes())?;
    println!("overall MRAE: {}", report.overall_mrae);
    println!("physics residual: {:.4e}", report.physics_residual);
    Ok(())
}

fn bench(a: BenchmarkArgs) -> Result<()> {
    let s = read_scenario(&a.scenario)?;
    let ck = read_checkpoint(&a.checkpoint)?;
    let config = solver_config(&a.solver)?;
    let table = benchmark(ck.as_model(), &s, &config, a.repetitions)?;
    atomic_write(
        &a.out_dir.join("benchmark.csv"),
        io::benchmark_csv(&table).as_bytes(),
    )?;
    atomic_write(
        &a.out_dir.join("benchmark.json"),
        io::benchmark_json(&table).as_bytes(),
    )?;
    println!("solver median: {:.4} s", table.solver_seconds);
    println!("surrogate median: {:.4} s", table.surrogate_seconds);
    println!("speedup: {}", three_sig(table.speedup));
    Ok(())
}

fn three_sig(v: f64) -> String {
    if !v.is_finite() || v == 0.0 {
        return format!("{v}");
    }
    let digits = 2 - v.abs().log10().floor() as i32;
    if digits >= 0 {
        format!("{:.*}", digits as usize, v)
    } else {
        let scale = 10f64.powi(-digits);
        format!("{}", (v / scale).round() * scale)
    }
}

fn ablate(a: AblateArgs) -> Result<()> {
    let (s, f) = load_pair(&a.scenario, &a.field)?;
    let train = train_config(&a.model, Some(5_000))?;
    let opts = AblationOptions {
        budget_iters: train.max_iterations,
        seed: train.seed,
        sigma: train.sigma,
        lambda: train.lambda_physics,
        curve_station: a.station,
        train,
    };
    let result = run_ablation(&s, &f.field, &opts)?;
    io::write_ablation(&a.out_dir, &result)?;
    for e in &result.entries {
        match &e.report {
            Some(r) => println!(
                "{:<13} data_loss {:.4e}  mrae {:.4}  physics {:.4e}",
                e.config.name(),
                e.final_data_loss,
                r.overall_mrae,
                r.physics_residual
            ),
            None => println!("{:<13} diverged", e.config.name()),
        }
    }
    if result.entries.iter().all(|e| e.diverged) {
        return Err(Failure::new(
            EXIT_DIVERGENCE,
            "every configuration diverged",
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::three_sig;

    #[test]
    fn three_significant_figures() {
        assert_eq!(three_sig(91.4321), "91.4");
        assert_eq!(three_sig(123.6), "124");
        assert_eq!(three_sig(1234.5), "1230");
        assert_eq!(three_sig(5.0), "5.00");
    }
}
