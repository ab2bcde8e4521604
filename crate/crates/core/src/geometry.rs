//! River channel geometry, boundary hydrographs and synthetic scenarios.
//!
//! Units are US customary at the interface: river miles, hours, feet,
//! cubic feet per second. The solver converts to feet and seconds
//! internally. Channels are rectangular and prismatic, so the flow area
//! is always `width * depth`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const FEET_PER_MILE: f64 = 5280.0;
pub const SECONDS_PER_HOUR: f64 = 3600.0;
/// Gravitational acceleration, ft/s².
pub const GRAVITY: f64 = 32.174;
/// Square of the US-unit Manning constant 1.486.
pub const MANNING_US_SQUARED: f64 = 2.208;
/// Mean station spacing of the synthetic river layouts, miles.
pub const DEFAULT_STATION_SPACING_MILES: f64 = 0.74;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
    #[error("t = {t} h is outside the series range [{first}, {last}]")]
    OutOfRange { t: f64, first: f64, last: f64 },
    #[error("invalid boundary conditions: {0}")]
    InvalidBoundaries(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Rectangular prismatic channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGeometry {
    pub length_miles: f64,
    pub bed_elevation_upstream_ft: f64,
    /// Positive means the bed drops in the flow direction.
    pub bed_slope_s0: f64,
    pub width_ft: f64,
    pub manning_n: f64,
}

impl ChannelGeometry {
    pub fn new(
        length_miles: f64,
        bed_elevation_upstream_ft: f64,
        bed_slope_s0: f64,
        width_ft: f64,
        manning_n: f64,
    ) -> Result<Self> {
        let geometry = Self {
            length_miles,
            bed_elevation_upstream_ft,
            bed_slope_s0,
            width_ft,
            manning_n,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.length_miles,
            self.bed_elevation_upstream_ft,
            self.bed_slope_s0,
            self.width_ft,
            self.manning_n,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidGeometry("non-finite field".into()));
        }
        if self.length_miles <= 0.0 {
            return Err(GeometryError::InvalidGeometry(format!(
                "length_miles must be > 0, got {}",
                self.length_miles
            )));
        }
        if self.width_ft <= 0.0 {
            return Err(GeometryError::InvalidGeometry(format!(
                "width_ft must be > 0, got {}",
                self.width_ft
            )));
        }
        if self.manning_n <= 0.0 {
            return Err(GeometryError::InvalidGeometry(format!(
                "manning_n must be > 0, got {}",
                self.manning_n
            )));
        }
        Ok(())
    }

    pub fn length_ft(&self) -> f64 {
        self.length_miles * FEET_PER_MILE
    }

    pub fn bed_elevation_at(&self, x_miles: f64) -> f64 {
        self.bed_elevation_upstream_ft - self.bed_slope_s0 * x_miles * FEET_PER_MILE
    }

    pub fn hydraulic_radius(&self, depth_ft: f64) -> f64 {
        self.width_ft * depth_ft / (self.width_ft + 2.0 * depth_ft)
    }

    /// Manning friction slope `n² u|u| / (2.208 R^(4/3))`.
    pub fn friction_slope(&self, depth_ft: f64, velocity_fps: f64) -> f64 {
        let r = self.hydraulic_radius(depth_ft);
        self.manning_n * self.manning_n * velocity_fps * velocity_fps.abs()
            / (MANNING_US_SQUARED * r.powf(4.0 / 3.0))
    }

    /// Velocity at which friction balances the bed slope for the given depth.
    pub fn normal_velocity(&self, depth_ft: f64) -> f64 {
        let r = self.hydraulic_radius(depth_ft);
        (self.bed_slope_s0.max(0.0) * MANNING_US_SQUARED * r.powf(4.0 / 3.0)).sqrt()
            / self.manning_n
    }

    /// Depth at which uniform flow carries `discharge_cfs`. Requires a
    /// positive bed slope.
    pub fn normal_depth(&self, discharge_cfs: f64) -> Result<f64> {
        if self.bed_slope_s0 <= 0.0 {
            return Err(GeometryError::InvalidGeometry(
                "normal depth needs a positive bed slope".into(),
            ));
        }
        if discharge_cfs <= 0.0 {
            return Err(GeometryError::InvalidGeometry(format!(
                "normal depth needs positive discharge, got {discharge_cfs}"
            )));
        }
        let q = |h: f64| self.normal_velocity(h) * self.width_ft * h;
        let (mut lo, mut hi) = (1e-6, 1.0);
        while q(hi) < discharge_cfs {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(GeometryError::InvalidGeometry(
                    "normal depth search did not bracket".into(),
                ));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q(mid) < discharge_cfs {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Piecewise-linear time series with strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    points: Vec<(f64, f64)>,
}

impl TimeSeries {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(GeometryError::InvalidSeries("empty series".into()));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(GeometryError::InvalidSeries("non-finite entry".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(GeometryError::InvalidSeries(format!(
                "times must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(Self { points })
    }

    pub fn constant(t_end: f64, value: f64) -> Result<Self> {
        Self::new(vec![(0.0, value), (t_end, value)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn first_time(&self) -> f64 {
        self.points[0].0
    }

    pub fn last_time(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    pub fn min_value(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn interpolate(&self, t: f64) -> Result<f64> {
        interpolate_boundary(self, t)
    }
}

/// Linear interpolation of `series` at `t` hours. Exact at knots; no
/// extrapolation.
pub fn interpolate_boundary(series: &TimeSeries, t: f64) -> Result<f64> {
    let pts = &series.points;
    let (first, last) = (series.first_time(), series.last_time());
    if !(t >= first && t <= last) {
        return Err(GeometryError::OutOfRange { t, first, last });
    }
    // index of the first knot with time > t
    let idx = pts.partition_point(|p| p.0 <= t);
    if idx == 0 {
        return Ok(pts[0].1);
    }
    let (t0, v0) = pts[idx - 1];
    if t == t0 || idx == pts.len() {
        return Ok(v0);
    }
    let (t1, v1) = pts[idx];
    let w = (t - t0) / (t1 - t0);
    Ok(v0 + w * (v1 - v0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions {
    pub upstream_discharge: TimeSeries,
    pub downstream_stage: TimeSeries,
    pub initial_depth_ft: f64,
    pub initial_velocity_fps: f64,
}

impl BoundaryConditions {
    pub fn validate(&self) -> Result<()> {
        if self.upstream_discharge.min_value() < 0.0 {
            return Err(GeometryError::InvalidBoundaries(
                "upstream discharge must be >= 0".into(),
            ));
        }
        if self.downstream_stage.min_value() <= 0.0 {
            return Err(GeometryError::InvalidBoundaries(
                "downstream stage must be > 0".into(),
            ));
        }
        if !(self.initial_depth_ft > 0.0) {
            return Err(GeometryError::InvalidBoundaries(format!(
                "initial_depth_ft must be > 0, got {}",
                self.initial_depth_ft
            )));
        }
        if !self.initial_velocity_fps.is_finite() {
            return Err(GeometryError::InvalidBoundaries(
                "initial_velocity_fps must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// One simulation: channel, boundaries, gauge stations and output cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct RiverScenario {
    pub geometry: ChannelGeometry,
    pub boundaries: BoundaryConditions,
    pub station_positions_miles: Vec<f64>,
    pub t_total_hours: f64,
    pub output_dt_hours: f64,
}

impl RiverScenario {
    pub fn new(
        geometry: ChannelGeometry,
        boundaries: BoundaryConditions,
        station_positions_miles: Vec<f64>,
        t_total_hours: f64,
        output_dt_hours: f64,
    ) -> Result<Self> {
        let scenario = Self {
            geometry,
            boundaries,
            station_positions_miles,
            t_total_hours,
            output_dt_hours,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.boundaries.validate()?;
        if !(self.t_total_hours > 0.0 && self.t_total_hours.is_finite()) {
            return Err(GeometryError::InvalidScenario(format!(
                "t_total_hours must be > 0, got {}",
                self.t_total_hours
            )));
        }
        if !(self.output_dt_hours > 0.0 && self.output_dt_hours.is_finite()) {
            return Err(GeometryError::InvalidScenario(format!(
                "output_dt_hours must be > 0, got {}",
                self.output_dt_hours
            )));
        }
        for (name, series) in [
            ("upstream_discharge", &self.boundaries.upstream_discharge),
            ("downstream_stage", &self.boundaries.downstream_stage),
        ] {
            if series.first_time() > 0.0 || series.last_time() < self.t_total_hours {
                return Err(GeometryError::InvalidScenario(format!(
                    "{name} must cover [0, {}] h",
                    self.t_total_hours
                )));
            }
        }
        let stations = &self.station_positions_miles;
        if stations.is_empty() {
            return Err(GeometryError::InvalidScenario("no stations".into()));
        }
        if stations.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GeometryError::InvalidScenario(
                "station positions must be strictly increasing".into(),
            ));
        }
        if stations
            .iter()
            .any(|&s| !(s >= 0.0 && s <= self.geometry.length_miles))
        {
            return Err(GeometryError::InvalidScenario(format!(
                "station positions must lie in [0, {}]",
                self.geometry.length_miles
            )));
        }
        Ok(())
    }

    /// Output times `0, dt, 2dt, ...` up to and including `t_total_hours`
    /// when it falls on the cadence.
    pub fn output_times(&self) -> Vec<f64> {
        let n = (self.t_total_hours / self.output_dt_hours + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * self.output_dt_hours).collect()
    }

    pub fn mean_station_spacing(&self) -> f64 {
        let s = &self.station_positions_miles;
        if s.len() < 2 {
            return 0.0;
        }
        (s[s.len() - 1] - s[0]) / (s.len() - 1) as f64
    }
}

/// Knobs for the synthetic single-pulse flood scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct FloodWaveOptions {
    pub n_stations: usize,
    pub peak_factor: f64,
    pub seed: u64,
    pub station_spacing_miles: f64,
    pub pulse_center_hours: f64,
    /// Standard deviation of the Gaussian pulse.
    pub pulse_width_hours: f64,
    pub t_total_hours: f64,
    pub output_dt_hours: f64,
    /// Knot spacing of the tabulated hydrographs.
    pub knot_dt_hours: f64,
}

impl Default for FloodWaveOptions {
    fn default() -> Self {
        Self {
            n_stations: 20,
            peak_factor: 3.0,
            seed: 0,
            station_spacing_miles: DEFAULT_STATION_SPACING_MILES,
            pulse_center_hours: 12.0,
            pulse_width_hours: 3.0,
            t_total_hours: 36.0,
            output_dt_hours: 0.5,
            knot_dt_hours: 0.25,
        }
    }
}

impl FloodWaveOptions {
    /// A narrow pulse, used where high-frequency content matters.
    pub fn sharp_pulse(n_stations: usize, peak_factor: f64, seed: u64) -> Self {
        Self {
            n_stations,
            peak_factor,
            seed,
            pulse_width_hours: 1.0,
            ..Self::default()
        }
    }
}

/// Synthetic flood-wave scenario with the default pulse shape.
pub fn make_flood_wave_scenario(
    n_stations: usize,
    peak_factor: f64,
    seed: u64,
) -> Result<RiverScenario> {
    make_flood_wave_scenario_with(&FloodWaveOptions {
        n_stations,
        peak_factor,
        seed,
        ..FloodWaveOptions::default()
    })
}

pub fn make_flood_wave_scenario_with(opts: &FloodWaveOptions) -> Result<RiverScenario> {
    if opts.n_stations < 4 {
        return Err(GeometryError::InvalidScenario(format!(
            "need at least 4 stations for spatial resolution, got {}",
            opts.n_stations
        )));
    }
    if !(opts.peak_factor >= 1.0) {
        return Err(GeometryError::InvalidScenario(format!(
            "peak_factor must be >= 1, got {}",
            opts.peak_factor
        )));
    }
    if !(opts.pulse_width_hours > 0.0 && opts.knot_dt_hours > 0.0) {
        return Err(GeometryError::InvalidScenario(
            "pulse width and knot spacing must be positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let baseflow: f64 = rng.random_range(15_000.0..25_000.0);
    let manning_n: f64 = rng.random_range(0.030..0.040);
    let width_ft: f64 = rng.random_range(450.0..550.0);
    let bed_slope = 1.0e-4;

    let stations: Vec<f64> = (0..opts.n_stations)
        .map(|i| i as f64 * opts.station_spacing_miles)
        .collect();
    let length_miles = stations[stations.len() - 1];
    let geometry = ChannelGeometry::new(length_miles, 100.0, bed_slope, width_ft, manning_n)?;

    let base_depth = geometry.normal_depth(baseflow)?;
    let base_velocity = baseflow / (width_ft * base_depth);

    let amplitude = opts.peak_factor - 1.0;
    let discharge = |t: f64| {
        let z = (t - opts.pulse_center_hours) / opts.pulse_width_hours;
        baseflow * (1.0 + amplitude * (-0.5 * z * z).exp())
    };

    // Knots on a regular grid, plus the pulse centre so the peak is exact.
    let n_knots = (opts.t_total_hours / opts.knot_dt_hours).ceil() as usize;
    let mut times: Vec<f64> = (0..=n_knots)
        .map(|k| (k as f64 * opts.knot_dt_hours).min(opts.t_total_hours))
        .collect();
    times.dedup();
    if opts.pulse_center_hours > 0.0 && opts.pulse_center_hours < opts.t_total_hours {
        times.push(opts.pulse_center_hours);
        times.sort_by(f64::total_cmp);
        times.dedup();
    }

    // Downstream stage follows the normal depth of the inflow, lagged by the
    // kinematic travel time, so the outlet neither pins nor reflects the wave.
    let kinematic_celerity = 5.0 / 3.0 * base_velocity;
    let lag_hours = geometry.length_ft() / kinematic_celerity / SECONDS_PER_HOUR;

    let mut upstream = Vec::with_capacity(times.len());
    let mut downstream = Vec::with_capacity(times.len());
    for &t in &times {
        let q = if amplitude == 0.0 {
            baseflow
        } else {
            discharge(t)
        };
        upstream.push((t, q));
        let q_lagged = if amplitude == 0.0 || t < lag_hours {
            baseflow
        } else {
            discharge(t - lag_hours)
        };
        downstream.push((t, geometry.normal_depth(q_lagged)?));
    }

    let boundaries = BoundaryConditions {
        upstream_discharge: TimeSeries::new(upstream)?,
        downstream_stage: TimeSeries::new(downstream)?,
        initial_depth_ft: base_depth,
        initial_velocity_fps: base_velocity,
    };
    RiverScenario::new(
        geometry,
        boundaries,
        stations,
        opts.t_total_hours,
        opts.output_dt_hours,
    )
}

/// Flat, frictionless still-water scenario.
pub fn make_lake_at_rest_scenario(
    n_stations: usize,
    depth_ft: f64,
    t_total_hours: f64,
) -> Result<RiverScenario> {
    let spacing = DEFAULT_STATION_SPACING_MILES;
    let stations: Vec<f64> = (0..n_stations).map(|i| i as f64 * spacing).collect();
    let length = spacing * (n_stations.max(2) - 1) as f64;
    let geometry = ChannelGeometry::new(length, 100.0, 0.0, 500.0, 0.035)?;
    let boundaries = BoundaryConditions {
        upstream_discharge: TimeSeries::constant(t_total_hours, 0.0)?,
        downstream_stage: TimeSeries::constant(t_total_hours, depth_ft)?,
        initial_depth_ft: depth_ft,
        initial_velocity_fps: 0.0,
    };
    RiverScenario::new(geometry, boundaries, stations, t_total_hours, 0.5)
}

/// Uniform flow at normal depth for `discharge_cfs` on a sloping channel.
pub fn make_uniform_flow_scenario(
    n_stations: usize,
    discharge_cfs: f64,
    t_total_hours: f64,
) -> Result<RiverScenario> {
    let spacing = DEFAULT_STATION_SPACING_MILES;
    let stations: Vec<f64> = (0..n_stations).map(|i| i as f64 * spacing).collect();
    let length = spacing * (n_stations.max(2) - 1) as f64;
    let geometry = ChannelGeometry::new(length, 100.0, 1.0e-4, 500.0, 0.035)?;
    let depth = geometry.normal_depth(discharge_cfs)?;
    let velocity = geometry.normal_velocity(depth);
    // Use the velocity implied by the bisected depth so Q = u w h holds exactly
    // at the boundary and S_f = S_0 holds in the interior.
    let discharge = velocity * geometry.width_ft * depth;
    let boundaries = BoundaryConditions {
        upstream_discharge: TimeSeries::constant(t_total_hours, discharge)?,
        downstream_stage: TimeSeries::constant(t_total_hours, depth)?,
        initial_depth_ft: depth,
        initial_velocity_fps: velocity,
    };
    RiverScenario::new(geometry, boundaries, stations, t_total_hours, 0.5)
}
