use std::path::{Path, PathBuf};

use super::text::{parse_f64, Document, Writer};
use super::{atomic_write, read_text, IoError, Result};
use crate::solver::{FlowField, StageDatum, VolumeBudget};

pub const FIELD_UNITS: &str = "miles hours ft ft/s";

/// A solved field tagged with the hash of the scenario that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub field: FlowField,
    pub scenario_hash: String,
}

impl FieldFile {
    /// Fails unless the stored hash equals `expected`.
    pub fn check_hash(&self, expected: &str) -> Result<()> {
        if self.scenario_hash != expected {
            return Err(IoError::Consistency(format!(
                "field was produced from scenario {}, not {expected}",
                self.scenario_hash
            )));
        }
        Ok(())
    }
}

pub fn serialize_field(file: &FieldFile) -> String {
    let f = &file.field;
    let mut w = Writer::default();
    w.comment("stagecast field");
    w.section("field");
    w.entry("n_t", f.n_t());
    w.entry("n_x", f.n_x());
    w.entry("units", FIELD_UNITS);
    w.entry("datum", f.datum.as_str());
    w.entry("scenario_hash", &file.scenario_hash);
    match f.budget {
        Some(b) => {
            w.entry("initial_storage_ft3", b.initial_storage);
            w.entry("final_storage_ft3", b.final_storage);
            w.entry("inflow_ft3", b.inflow);
            w.entry("outflow_ft3", b.outflow);
        }
        None => w.entry("budget", "none"),
    }
    let nx = f.n_x();
    w.block(
        "data",
        &["t_hours", "x_miles", "h_ft", "u_fps"],
        (0..f.h.len()).map(|k| {
            let (ti, xi) = (k / nx, k % nx);
            [f.t_grid_hours[ti], f.x_grid_miles[xi], f.h[k], f.u[k]]
        }),
    );
    w.finish()
}

pub fn parse_field(text: &str) -> Result<FieldFile> {
    let mut doc = Document::parse(text)?;
    let mut s = doc.take("field")?;
    let budget_keys = [
        "initial_storage_ft3",
        "final_storage_ft3",
        "inflow_ft3",
        "outflow_ft3",
    ];
    let mut keys = vec!["n_t", "n_x", "units", "datum", "scenario_hash", "budget"];
    keys.extend(budget_keys);
    s.allow(&keys, &["data"])?;

    let n_t = s.usize("n_t")?;
    let n_x = s.usize("n_x")?;
    let (units, line) = s.raw("units")?;
    if units != FIELD_UNITS {
        return Err(IoError::parse(line, format!("unsupported units `{units}`")));
    }
    let (datum, line) = s.raw("datum")?;
    let datum = StageDatum::parse(&datum)
        .ok_or_else(|| IoError::parse(line, format!("unknown datum `{datum}`")))?;
    let (scenario_hash, _) = s.raw("scenario_hash")?;
    let budget = if s.entries.iter().any(|e| e.key == "budget") {
        let (v, line) = s.raw("budget")?;
        if v != "none" {
            return Err(IoError::parse(
                line,
                format!("unexpected budget value `{v}`"),
            ));
        }
        None
    } else {
        Some(VolumeBudget {
            initial_storage: s.f64(budget_keys[0])?,
            final_storage: s.f64(budget_keys[1])?,
            inflow: s.f64(budget_keys[2])?,
            outflow: s.f64(budget_keys[3])?,
        })
    };

    let block = s.block("data", &["t_hours", "x_miles", "h_ft", "u_fps"])?;
    s.finish()?;
    doc.finish()?;
    if block.rows.len() != n_t * n_x {
        return Err(IoError::parse(
            block.line,
            format!(
                "expected {} rows ({n_t} x {n_x}), found {}",
                n_t * n_x,
                block.rows.len()
            ),
        ));
    }
    let mut t_grid = vec![0.0; n_t];
    let mut x_grid = vec![0.0; n_x];
    let mut h = Vec::with_capacity(n_t * n_x);
    let mut u = Vec::with_capacity(n_t * n_x);
    for (k, (line, row)) in block.rows.iter().enumerate() {
        let (ti, xi) = (k / n_x, k % n_x);
        let t = parse_f64(&row[0], *line, "t_hours")?;
        let x = parse_f64(&row[1], *line, "x_miles")?;
        if xi == 0 {
            t_grid[ti] = t;
        } else if t.to_bits() != t_grid[ti].to_bits() {
            return Err(IoError::parse(*line, "rows are not ordered time-major"));
        }
        if ti == 0 {
            x_grid[xi] = x;
        } else if x.to_bits() != x_grid[xi].to_bits() {
            return Err(IoError::parse(
                *line,
                "station positions differ between times",
            ));
        }
        h.push(parse_f64(&row[2], *line, "h_ft")?);
        u.push(parse_f64(&row[3], *line, "u_fps")?);
    }
    let field = FlowField {
        x_grid_miles: x_grid,
        t_grid_hours: t_grid,
        h,
        u,
        wall_clock_seconds: 0.0,
        datum,
        budget,
    };
    field.validate().map_err(IoError::Invalid)?;
    Ok(FieldFile {
        field,
        scenario_hash,
    })
}

/// `<field path>.timing.json`: the solver wall clock, kept out of the field
/// file so that identical solves give identical files.
pub fn field_timing_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".timing.json");
    PathBuf::from(p)
}

/// Reads the field and, when its timing file exists, the solver wall clock.
/// Without one, `wall_clock_seconds` is 0.
pub fn read_field(path: &Path) -> Result<FieldFile> {
    let mut file = parse_field(&read_text(path)?)?;
    let timing = field_timing_path(path);
    if timing.exists() {
        let text = read_text(&timing)?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| IoError::parse(e.line(), e.to_string()))?;
        file.field.wall_clock_seconds = v["solver_seconds"].as_f64().ok_or_else(|| {
            IoError::parse(1, format!("{}: missing solver_seconds", timing.display()))
        })?;
    }
    Ok(file)
}

pub fn write_field(path: &Path, file: &FieldFile) -> Result<()> {
    atomic_write(path, serialize_field(file).as_bytes())?;
    let timing = serde_json::json!({ "solver_seconds": file.field.wall_clock_seconds });
    atomic_write(&field_timing_path(path), format!("{timing:#}\n").as_bytes())
}
