//! CSV and JSON renderings of reports. Timings go to their own files so
//! every other artifact is reproducible byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use super::checkpoint::{write_checkpoint, Checkpoint};
use super::{atomic_write, IoError, Result};
use crate::evaluation::{
    histogram, AblationResult, BenchmarkTable, EvalReport, Histogram, StationCurve, HISTOGRAM_BINS,
};
use crate::training::LossRecord;

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialise");
    s.push('\n');
    s
}

pub fn eval_report_csv(r: &EvalReport) -> String {
    let mut out = String::from("station_miles,mrae\n");
    for (x, e) in r.station_positions_miles.iter().zip(&r.per_station_mrae) {
        writeln!(out, "{x},{e}").unwrap();
    }
    out
}

/// Accuracy metrics only; see [`timing_json`] for wall-clock figures.
pub fn eval_summary_json(r: &EvalReport, seed: u64) -> String {
    pretty(&json!({
        "overall_mrae": r.overall_mrae,
        "physics_residual": r.physics_residual,
        "n_eval_points": r.n_eval_points,
        "n_stations": r.per_station_mrae.len(),
        "datum": r.datum.as_str(),
        "seed": seed,
        "per_station_mrae": r.per_station_mrae,
    }))
}

pub fn timing_json(r: &EvalReport) -> String {
    pretty(&json!({
        "solver_seconds": r.solver_seconds,
        "surrogate_seconds": r.surrogate_seconds,
        "speedup": r.speedup,
        "n_eval_points": r.n_eval_points,
    }))
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (k, c) in h.counts.iter().enumerate() {
        writeln!(out, "{},{},{c}", h.edges[k], h.edges[k + 1]).unwrap();
    }
    out
}

pub fn history_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("iteration,data_loss,physics_loss,total_loss,lr,validation_loss\n");
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration, r.data_loss, r.physics_loss, r.total_loss, r.lr, r.validation_loss
        )
        .unwrap();
    }
    out
}

pub fn parse_history_csv(text: &str) -> Result<Vec<LossRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == "iteration,data_loss,physics_loss,total_loss,lr,validation_loss" => {}
        _ => return Err(IoError::parse(1, "unexpected loss history header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || IoError::parse(i + 1, format!("malformed history row `{line}`"));
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
        out.push(LossRecord {
            iteration: f[0].parse().map_err(|_| bad())?,
            data_loss: num(1)?,
            physics_loss: num(2)?,
            total_loss: num(3)?,
            lr: num(4)?,
            validation_loss: num(5)?,
        });
    }
    Ok(out)
}

pub fn curve_csv(c: &StationCurve) -> String {
    let mut out = String::from("t_hours,truth_ft,predicted_ft\n");
    for k in 0..c.t_hours.len() {
        writeln!(out, "{},{},{}", c.t_hours[k], c.truth[k], c.predicted[k]).unwrap();
    }
    out
}

pub fn benchmark_csv(b: &BenchmarkTable) -> String {
    let mut out = String::from("method,run,seconds\n");
    for (k, s) in b.solver_runs.iter().enumerate() {
        writeln!(out, "solver,{k},{s}").unwrap();
    }
    for (k, s) in b.surrogate_runs.iter().enumerate() {
        writeln!(out, "surrogate,{k},{s}").unwrap();
    }
    out
}

pub fn benchmark_json(b: &BenchmarkTable) -> String {
    pretty(&json!({
        "solver_seconds": b.solver_seconds,
        "surrogate_seconds": b.surrogate_seconds,
        "speedup": b.speedup,
        "n_points": b.n_points,
        "n_cells": b.n_cells,
        "repetitions": b.solver_runs.len(),
    }))
}

pub fn ablation_summary_json(r: &AblationResult) -> String {
    let configs: Vec<Value> = r
        .entries
        .iter()
        .map(|e| {
            json!({
                "name": e.config.name(),
                "fourier": e.train_config.fourier,
                "sigma": e.train_config.sigma,
                "lambda": e.train_config.lambda_physics,
                "diverged": e.diverged,
                "final_data_loss": e.final_data_loss,
                "overall_mrae": e.report.as_ref().map(|r| r.overall_mrae),
                "physics_residual": e.report.as_ref().map(|r| r.physics_residual),
            })
        })
        .collect();
    pretty(&json!({
        "seed": r.seed,
        "budget_iters": r.budget_iters,
        "configs": configs,
        "fourier_beats_base": r.fourier_beats_base(),
        "physics_improvement": r.physics_improvement(),
    }))
}

/// Writes `ablation.json` plus one directory per configuration.
pub fn write_ablation(dir: &Path, r: &AblationResult) -> Result<()> {
    atomic_write(
        &dir.join("ablation.json"),
        ablation_summary_json(r).as_bytes(),
    )?;
    for e in &r.entries {
        let sub = dir.join(e.config.name());
        atomic_write(&sub.join("history.csv"), history_csv(&e.history).as_bytes())?;
        let config = pretty(&json!({
            "seed": r.seed,
            "budget_iters": r.budget_iters,
            "fourier": e.train_config.fourier,
            "sigma": e.train_config.sigma,
            "lambda": e.train_config.lambda_physics,
            "diverged": e.diverged,
        }));
        atomic_write(&sub.join("config.json"), config.as_bytes())?;
        if let Some(report) = &e.report {
            atomic_write(&sub.join("report.csv"), eval_report_csv(report).as_bytes())?;
            atomic_write(
                &sub.join("summary.json"),
                eval_summary_json(report, r.seed).as_bytes(),
            )?;
            atomic_write(&sub.join("timing.json"), timing_json(report).as_bytes())?;
            let h = histogram(&report.per_station_mrae, HISTOGRAM_BINS);
            atomic_write(&sub.join("histogram.csv"), histogram_csv(&h).as_bytes())?;
        }
        if let Some(c) = &e.curve {
            atomic_write(&sub.join("curve.csv"), curve_csv(c).as_bytes())?;
        }
        if let Some(m) = &e.model {
            write_checkpoint(&sub.join("model.ckpt"), &Checkpoint::Network(m.clone()))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::StageDatum;

    #[test]
    fn history_round_trip() {
        let h = vec![
            LossRecord {
                iteration: 0,
                data_loss: 1.5,
                physics_loss: 2e-7,
                total_loss: 1.5000002,
                lr: 1e-3,
                validation_loss: 1.6,
            },
            LossRecord {
                iteration: 100,
                data_loss: 0.1,
                physics_loss: 0.1 / 3.0,
                total_loss: 0.2,
                lr: 9.9e-4,
                validation_loss: 0.3,
            },
        ];
        assert_eq!(parse_history_csv(&history_csv(&h)).unwrap(), h);
        assert!(parse_history_csv("nope\n").is_err());
    }

    #[test]
    fn summary_excludes_timings() {
        let r = EvalReport {
            station_positions_miles: vec![0.0, 1.0],
            per_station_mrae: vec![0.01, 0.02],
            overall_mrae: 0.015,
            physics_residual: 1e-6,
            solver_seconds: 2.0,
            surrogate_seconds: 0.1,
            speedup: 20.0,
            n_eval_points: 10,
            datum: StageDatum::Depth,
        };
        let s = eval_summary_json(&r, 4);
        assert!(!s.contains("seconds"));
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["overall_mrae"], 0.015);
        assert_eq!(eval_report_csv(&r), "station_miles,mrae\n0,0.01\n1,0.02\n");
        let t: Value = serde_json::from_str(&timing_json(&r)).unwrap();
        assert_eq!(t["speedup"], 20.0);
    }

    #[test]
    fn histogram_rows() {
        let h = histogram(&[0.0, 1.0], 2);
        assert_eq!(histogram_csv(&h), "bin_lo,bin_hi,count\n0,0.5,1\n0.5,1,1\n");
    }
}
