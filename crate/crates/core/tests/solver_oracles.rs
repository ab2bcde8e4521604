//! Reference solver checked against equilibria, symmetry, an independent
//! Lax-Friedrichs solver and its own refinement behaviour.

use stagecast_core::geometry::{
    make_flood_wave_scenario, make_lake_at_rest_scenario, make_uniform_flow_scenario,
    RiverScenario, FEET_PER_MILE, GRAVITY, MANNING_US_SQUARED, SECONDS_PER_HOUR,
};
use stagecast_core::solver::{check_mass_balance, solve, Integrator, SolverConfig};

/// First-order Lax-Friedrichs in conservative `(h, q = h u)` form, driven
/// by the same boundary data as the solver under test but with zeroth-order
/// extrapolation at the open ends. Returns station stages on the scenario's
/// output times, `[time][station]`.
fn lax_friedrichs_stages(s: &RiverScenario, n_cells: usize) -> Vec<Vec<f64>> {
    let geo = &s.geometry;
    let n = n_cells;
    let dx = geo.length_ft() / n as f64;
    let w = geo.width_ft;
    let mut h = vec![s.boundaries.initial_depth_ft; n + 1];
    let mut q = vec![s.boundaries.initial_depth_ft * s.boundaries.initial_velocity_fps; n + 1];
    let stations: Vec<f64> = s
        .station_positions_miles
        .iter()
        .map(|x| x * FEET_PER_MILE)
        .collect();
    let sample = |h: &[f64]| -> Vec<f64> {
        stations
            .iter()
            .map(|&x| {
                let p = (x / dx).min(n as f64);
                let i = (p.floor() as usize).min(n - 1);
                let a = p - i as f64;
                (1.0 - a) * h[i] + a * h[i + 1]
            })
            .collect()
    };
    let flux = |h: f64, q: f64| (q, q * q / h + 0.5 * GRAVITY * h * h);
    let source = |h: f64, q: f64| {
        let u = q / h;
        let r = w * h / (w + 2.0 * h);
        let sf = geo.manning_n.powi(2) * u * u.abs() / (MANNING_US_SQUARED * r.powf(4.0 / 3.0));
        GRAVITY * h * (geo.bed_slope_s0 - sf)
    };

    let outputs: Vec<f64> = s
        .output_times()
        .iter()
        .map(|t| t * SECONDS_PER_HOUR)
        .collect();
    let mut out = vec![sample(&h)];
    let mut t = 0.0;
    for &target in &outputs[1..] {
        while t < target {
            let speed = (0..=n)
                .map(|i| (q[i] / h[i]).abs() + (GRAVITY * h[i]).sqrt())
                .fold(0.0, f64::max);
            let dt = (0.9 * dx / speed).min(target - t);
            let r = dt / (2.0 * dx);
            let mut hn = h.clone();
            let mut qn = q.clone();
            for i in 1..n {
                let (fl0, fl1) = flux(h[i - 1], q[i - 1]);
                let (fr0, fr1) = flux(h[i + 1], q[i + 1]);
                let (ha, qa) = (0.5 * (h[i - 1] + h[i + 1]), 0.5 * (q[i - 1] + q[i + 1]));
                // source at the averaged state, else the odd-even mode grows
                hn[i] = ha - r * (fr0 - fl0);
                qn[i] = qa - r * (fr1 - fl1) + dt * source(ha, qa);
            }
            t += dt;
            let th = (t / SECONDS_PER_HOUR).min(s.t_total_hours);
            hn[0] = hn[1];
            qn[0] = s.boundaries.upstream_discharge.interpolate(th).unwrap() / w;
            hn[n] = s.boundaries.downstream_stage.interpolate(th).unwrap();
            qn[n] = hn[n] * qn[n - 1] / hn[n - 1];
            h = hn;
            q = qn;
        }
        out.push(sample(&h));
    }
    out
}

fn peak_time(times: &[f64], series: &[f64]) -> f64 {
    let k = series
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    times[k]
}

#[test]
fn flood_wave_travels_downstream_like_the_lax_friedrichs_oracle() {
    let s = make_flood_wave_scenario(20, 3.0, 7).unwrap();
    let field = solve(&s, &SolverConfig::new(400, 0.9).unwrap()).unwrap();
    let oracle = lax_friedrichs_stages(&s, 200);
    let inflow_peak = {
        let pts = s.boundaries.upstream_discharge.points();
        pts.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0
    };
    let times = &field.t_grid_hours;

    // The last station carries the prescribed outlet stage; stop before it.
    for k in 1..field.n_x() - 1 {
        let ours = field.station_series(k);
        let theirs: Vec<f64> = oracle.iter().map(|row| row[k]).collect();
        let t_ours = peak_time(times, &ours);
        let t_theirs = peak_time(times, &theirs);
        assert!(
            t_ours > inflow_peak,
            "station {k} peaks at {t_ours} h, inflow at {inflow_peak} h"
        );
        assert!(
            t_theirs > inflow_peak,
            "oracle station {k} peaks at {t_theirs} h"
        );
        let worst = ours
            .iter()
            .zip(&theirs)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        assert!(
            worst < 0.01,
            "station {k}: stage differs from the oracle by {worst}"
        );
    }
}

#[test]
fn lake_at_rest_holds_for_a_thousand_steps() {
    let s = make_lake_at_rest_scenario(10, 12.0, 24.0).unwrap();
    let cfg = SolverConfig::new(200, 0.9).unwrap().frictionless();
    let mut it = Integrator::new(&s, &cfg).unwrap();
    for _ in 0..1000 {
        it.step().unwrap();
    }
    for (&h, &u) in it.depths().iter().zip(it.velocities()) {
        assert!((h - 12.0).abs() < 1e-10, "depth drifted to {h}");
        assert!(u.abs() < 1e-10, "velocity drifted to {u}");
    }
}

#[test]
fn normal_depth_flow_holds_for_a_thousand_steps() {
    let s = make_uniform_flow_scenario(10, 20_000.0, 24.0).unwrap();
    let cfg = SolverConfig::new(200, 0.9).unwrap();
    let mut it = Integrator::new(&s, &cfg).unwrap();
    let (h0, u0) = (
        s.boundaries.initial_depth_ft,
        s.boundaries.initial_velocity_fps,
    );
    for _ in 0..1000 {
        it.step().unwrap();
    }
    for (&h, &u) in it.depths().iter().zip(it.velocities()) {
        assert!(((h - h0) / h0).abs() < 1e-6, "depth {h} vs {h0}");
        assert!(((u - u0) / u0).abs() < 1e-6, "velocity {u} vs {u0}");
    }
}

#[test]
fn lake_at_rest_mass_balance_is_zero() {
    let s = make_lake_at_rest_scenario(10, 8.0, 6.0).unwrap();
    let f = solve(&s, &SolverConfig::new(100, 0.9).unwrap().frictionless()).unwrap();
    assert!(check_mass_balance(&f, &s) < 1e-10);
}

#[test]
fn flood_wave_mass_balance_shrinks_with_refinement() {
    let s = make_flood_wave_scenario(20, 3.0, 7).unwrap();
    let errors: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&n| {
            let f = solve(&s, &SolverConfig::new(n, 0.9).unwrap()).unwrap();
            check_mass_balance(&f, &s)
        })
        .collect();
    assert!(errors[2] < 0.01, "{errors:?}");
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
}

#[test]
fn final_profile_converges_under_grid_doubling() {
    let s = make_flood_wave_scenario(20, 3.0, 7).unwrap();
    let profiles: Vec<Vec<f64>> = [100, 200, 400, 800]
        .iter()
        .map(|&n| {
            solve(&s, &SolverConfig::new(n, 0.9).unwrap())
                .unwrap()
                .final_profile()
                .to_vec()
        })
        .collect();
    let diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let d: Vec<f64> = profiles.windows(2).map(|p| diff(&p[0], &p[1])).collect();
    assert!(
        d[1] / d[0] < 0.8 && d[2] / d[1] < 0.8,
        "successive differences {d:?}"
    );
}

#[test]
fn symmetric_hump_stays_symmetric() {
    let s = make_lake_at_rest_scenario(10, 10.0, 24.0).unwrap();
    let cfg = SolverConfig::new(200, 0.9).unwrap().frictionless();
    let n = cfg.n_cells;
    let h: Vec<f64> = (0..=n)
        .map(|i| {
            let z = (i as f64 - n as f64 / 2.0) / 8.0;
            10.0 + 0.5 * (-z * z).exp()
        })
        .collect();
    let mut it = Integrator::with_state(&s, &cfg, h, vec![0.0; n + 1]).unwrap();
    // Short enough that neither wave front reaches a boundary.
    for _ in 0..40 {
        it.step().unwrap();
    }
    let (h, u) = (it.depths(), it.velocities());
    assert!(
        (h[n / 2 - 20] - 10.0).abs() > 1e-6,
        "waves should have moved"
    );
    for i in 0..=n {
        assert!((h[i] - h[n - i]).abs() < 1e-8, "h asymmetry at {i}");
        assert!((u[i] + u[n - i]).abs() < 1e-8, "u asymmetry at {i}");
    }
}
