use std::path::Path;

use super::text::{parse_f64, Document, Writer};
use super::{atomic_write, read_text, sha256_hex, IoError, Result};
use crate::geometry::{BoundaryConditions, ChannelGeometry, RiverScenario, TimeSeries};

/// Canonical text form. Numbers use the shortest representation that
/// parses back to the same bits.
pub fn serialize_scenario(s: &RiverScenario) -> String {
    let g = &s.geometry;
    let b = &s.boundaries;
    let mut w = Writer::default();
    w.comment("stagecast scenario");
    w.section("geometry");
    w.entry("length_miles", g.length_miles);
    w.entry("bed_elevation_upstream_ft", g.bed_elevation_upstream_ft);
    w.entry("bed_slope_s0", g.bed_slope_s0);
    w.entry("width_ft", g.width_ft);
    w.entry("manning_n", g.manning_n);
    w.section("boundaries");
    w.entry("initial_depth_ft", b.initial_depth_ft);
    w.entry("initial_velocity_fps", b.initial_velocity_fps);
    w.block(
        "upstream_discharge",
        &["t_hours", "cfs"],
        b.upstream_discharge.points().iter().map(|&(t, q)| [t, q]),
    );
    w.block(
        "downstream_stage",
        &["t_hours", "ft"],
        b.downstream_stage.points().iter().map(|&(t, h)| [t, h]),
    );
    w.section("stations");
    w.block(
        "station_positions_miles",
        &["x_miles"],
        s.station_positions_miles.iter().map(|&x| [x]),
    );
    w.section("run");
    w.entry("t_total_hours", s.t_total_hours);
    w.entry("output_dt_hours", s.output_dt_hours);
    w.finish()
}

fn series(block: &super::text::Block) -> Result<TimeSeries> {
    let mut pts = Vec::with_capacity(block.rows.len());
    for (line, row) in &block.rows {
        pts.push((
            parse_f64(&row[0], *line, "time")?,
            parse_f64(&row[1], *line, "value")?,
        ));
    }
    TimeSeries::new(pts).map_err(|e| IoError::parse(block.line, format!("{}: {e}", block.name)))
}

pub fn parse_scenario(text: &str) -> Result<RiverScenario> {
    let mut doc = Document::parse(text)?;

    let mut g = doc.take("geometry")?;
    g.allow(
        &[
            "length_miles",
            "bed_elevation_upstream_ft",
            "bed_slope_s0",
            "width_ft",
            "manning_n",
        ],
        &[],
    )?;
    let geometry = ChannelGeometry {
        length_miles: g.f64("length_miles")?,
        bed_elevation_upstream_ft: g.f64("bed_elevation_upstream_ft")?,
        bed_slope_s0: g.f64("bed_slope_s0")?,
        width_ft: g.f64("width_ft")?,
        manning_n: g.f64("manning_n")?,
    };
    g.finish()?;

    let mut b = doc.take("boundaries")?;
    b.allow(
        &["initial_depth_ft", "initial_velocity_fps"],
        &["upstream_discharge", "downstream_stage"],
    )?;
    let initial_depth_ft = b.f64("initial_depth_ft")?;
    let initial_velocity_fps = b.f64("initial_velocity_fps")?;
    let upstream_discharge = series(&b.block("upstream_discharge", &["t_hours", "cfs"])?)?;
    let downstream_stage = series(&b.block("downstream_stage", &["t_hours", "ft"])?)?;
    b.finish()?;

    let mut st = doc.take("stations")?;
    st.allow(&[], &["station_positions_miles"])?;
    let block = st.block("station_positions_miles", &["x_miles"])?;
    let stations = block
        .rows
        .iter()
        .map(|(line, row)| parse_f64(&row[0], *line, "x_miles"))
        .collect::<Result<Vec<_>>>()?;
    st.finish()?;

    let mut run = doc.take("run")?;
    run.allow(&["t_total_hours", "output_dt_hours"], &[])?;
    let t_total_hours = run.f64("t_total_hours")?;
    let output_dt_hours = run.f64("output_dt_hours")?;
    run.finish()?;
    doc.finish()?;

    let scenario = RiverScenario {
        geometry,
        boundaries: BoundaryConditions {
            upstream_discharge,
            downstream_stage,
            initial_depth_ft,
            initial_velocity_fps,
        },
        station_positions_miles: stations,
        t_total_hours,
        output_dt_hours,
    };
    scenario
        .validate()
        .map_err(|e| IoError::Invalid(e.to_string()))?;
    Ok(scenario)
}

/// SHA-256 of the canonical serialisation, hex encoded.
pub fn scenario_hash(s: &RiverScenario) -> String {
    sha256_hex(serialize_scenario(s).as_bytes())
}

pub fn read_scenario(path: &Path) -> Result<RiverScenario> {
    parse_scenario(&read_text(path)?)
}

pub fn write_scenario(path: &Path, s: &RiverScenario) -> Result<()> {
    atomic_write(path, serialize_scenario(s).as_bytes())
}
