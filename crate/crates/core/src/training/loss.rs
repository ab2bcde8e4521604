//! Supervised and physics-residual loss terms.
//!
//! The generic functions here score any [`StageModel`] in plain floating
//! point. The taped variants build the same terms on a [`Tape`] for the
//! network so the trainer can take weight gradients; the two are checked
//! against each other in tests.

use rayon::prelude::*;

use super::data::Sample;
use super::{Result, TrainError};
use crate::autodiff::{grad_weights, Func, Mat, Tape, Var, T_LANE, VALUE_LANE, X_LANE};
use crate::geometry::{RiverScenario, GRAVITY, MANNING_US_SQUARED};
use crate::parallel;
use crate::surrogate::{FlowPartials, StageModel, SurrogateModel};

/// Rows per tape when a batch is fanned out.
pub const CHUNK_ROWS: usize = 256;

/// Friction and bed-slope terms for the extended momentum residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionTerms {
    pub width_ft: f64,
    pub manning_n: f64,
    pub bed_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsOptions {
    pub gravity: f64,
    /// Adds `g (S_f - S_0)` to the momentum residual when present.
    pub friction: Option<FrictionTerms>,
}

impl Default for PhysicsOptions {
    fn default() -> Self {
        Self {
            gravity: GRAVITY,
            friction: None,
        }
    }
}

impl PhysicsOptions {
    pub fn for_scenario(scenario: &RiverScenario, extended_momentum: bool) -> Self {
        let g = &scenario.geometry;
        Self {
            gravity: GRAVITY,
            friction: extended_momentum.then_some(FrictionTerms {
                width_ft: g.width_ft,
                manning_n: g.manning_n,
                bed_slope: g.bed_slope_s0,
            }),
        }
    }
}

/// Continuity and momentum residuals at one point.
pub fn residuals(p: &FlowPartials, opts: &PhysicsOptions) -> (f64, f64) {
    let continuity = p.h_t + p.h_x * p.u + p.h * p.u_x;
    let mut momentum = p.u_t + p.u * p.u_x + opts.gravity * p.h_x;
    if let Some(f) = opts.friction {
        let r = f.width_ft * p.h / (f.width_ft + 2.0 * p.h);
        let sf =
            f.manning_n * f.manning_n * p.u * p.u.abs() / (MANNING_US_SQUARED * r.powf(4.0 / 3.0));
        momentum += opts.gravity * (sf - f.bed_slope);
    }
    (continuity, momentum)
}

/// `mean[(ĥ - h)² + (û - u)²]`
pub fn data_loss(model: &dyn StageModel, batch: &[Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(TrainError::InvalidData("empty batch".into()));
    }
    let points: Vec<[f64; 2]> = batch.iter().map(|s| [s.x_miles, s.t_hours]).collect();
    let preds = model.predict_batch(&points)?;
    let mut sum = 0.0;
    for (i, (p, s)) in preds.iter().zip(batch).enumerate() {
        if !p.h.is_finite() || !p.u.is_finite() {
            return Err(TrainError::NonFinite(format!(
                "prediction at sample {i} ({}, {})",
                s.x_miles, s.t_hours
            )));
        }
        sum += (p.h - s.h_ft).powi(2) + (p.u - s.u_fps).powi(2);
    }
    Ok(sum / batch.len() as f64)
}

/// Mean of squared continuity plus squared momentum residuals over
/// collocation points given as `(river mile, hours)`.
pub fn physics_loss(
    model: &dyn StageModel,
    collocation: &[[f64; 2]],
    opts: &PhysicsOptions,
) -> Result<f64> {
    if collocation.is_empty() {
        return Err(TrainError::InvalidData("empty collocation set".into()));
    }
    let partials = model.partials_batch(collocation)?;
    let mut sum = 0.0;
    for (i, p) in partials.iter().enumerate() {
        let (rc, rm) = residuals(p, opts);
        if !rc.is_finite() || !rm.is_finite() {
            return Err(TrainError::NonFinite(format!(
                "residual at collocation point {i}"
            )));
        }
        sum += rc * rc + rm * rm;
    }
    Ok(sum / collocation.len() as f64)
}

/// `data_loss + λ physics_loss`
pub fn total_loss(
    model: &dyn StageModel,
    batch: &[Sample],
    collocation: &[[f64; 2]],
    lambda: f64,
    opts: &PhysicsOptions,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(TrainError::InvalidConfig(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let data = data_loss(model, batch)?;
    if lambda == 0.0 {
        return Ok(data);
    }
    Ok(data + lambda * physics_loss(model, collocation, opts)?)
}

/// Records `weight * Σ[(ĥ - h)² + (û - u)²]` on the tape.
pub fn taped_data_term(
    tape: &mut Tape,
    model: &SurrogateModel,
    params: &[Var],
    batch: &[Sample],
    weight: f64,
) -> Result<Var> {
    let norm = model.normalization();
    let n = batch.len();
    let mut inputs = Vec::with_capacity(2 * n);
    let mut h_target = Vec::with_capacity(n);
    let mut u_target = Vec::with_capacity(n);
    for s in batch {
        let (v, _) = norm.normalize(s.x_miles, s.t_hours);
        inputs.extend_from_slice(&v);
        h_target.push(s.h_ft);
        u_target.push(s.u_fps);
    }
    let input = tape.input(Mat::from_vec(n, 2, inputs));
    let (h, u) = model.forward(tape, params, input)?;
    let ht = tape.input(Mat::from_vec(n, 1, h_target));
    let ut = tape.input(Mat::from_vec(n, 1, u_target));
    let dh = tape.sub(h, ht)?;
    let du = tape.sub(u, ut)?;
    let dh2 = tape.map(dh, Func::Square)?;
    let du2 = tape.map(du, Func::Square)?;
    let s = tape.add(dh2, du2)?;
    let s = tape.sum(s)?;
    Ok(tape.scale(s, weight)?)
}

/// Records `weight * Σ(r_c² + r_m²)` over normalised collocation points.
pub fn taped_physics_term(
    tape: &mut Tape,
    model: &SurrogateModel,
    params: &[Var],
    collocation_normalized: &[[f64; 2]],
    weight: f64,
    opts: &PhysicsOptions,
) -> Result<Var> {
    let norm = model.normalization();
    let (sx, st) = (norm.x_scale_ft(), norm.t_scale_seconds());
    let input = tape.dual_input(collocation_normalized);
    let (h, u) = model.forward(tape, params, input)?;

    let hv = tape.lane(h, VALUE_LANE)?;
    let uv = tape.lane(u, VALUE_LANE)?;
    let hx = tape.lane(h, X_LANE)?;
    let hx = tape.scale(hx, 1.0 / sx)?;
    let ht = tape.lane(h, T_LANE)?;
    let ht = tape.scale(ht, 1.0 / st)?;
    let ux = tape.lane(u, X_LANE)?;
    let ux = tape.scale(ux, 1.0 / sx)?;
    let ut = tape.lane(u, T_LANE)?;
    let ut = tape.scale(ut, 1.0 / st)?;

    // continuity: h_t + h_x u + h u_x
    let a = tape.mul(hx, uv)?;
    let b = tape.mul(hv, ux)?;
    let rc = tape.add(ht, a)?;
    let rc = tape.add(rc, b)?;

    // momentum: u_t + u u_x + g h_x
    let c = tape.mul(uv, ux)?;
    let ghx = tape.scale(hx, opts.gravity)?;
    let rm = tape.add(ut, c)?;
    let mut rm = tape.add(rm, ghx)?;
    if let Some(f) = opts.friction {
        let abs_u = tape.map(uv, Func::Abs)?;
        let uu = tape.mul(uv, abs_u)?;
        let wh = tape.scale(hv, f.width_ft)?;
        let perimeter = tape.scale(hv, 2.0)?;
        let perimeter = tape.offset(perimeter, f.width_ft)?;
        let radius = tape.div(wh, perimeter)?;
        let r43 = tape.map(radius, Func::Powf(4.0 / 3.0))?;
        let sf = tape.div(uu, r43)?;
        let sf = tape.scale(sf, f.manning_n * f.manning_n / MANNING_US_SQUARED)?;
        let src = tape.offset(sf, -f.bed_slope)?;
        let src = tape.scale(src, opts.gravity)?;
        rm = tape.add(rm, src)?;
    }

    let rc2 = tape.map(rc, Func::Square)?;
    let rm2 = tape.map(rm, Func::Square)?;
    let s = tape.add(rc2, rm2)?;
    let s = tape.sum(s)?;
    Ok(tape.scale(s, weight)?)
}

/// Loss values and the flattened weight gradient of `data + λ physics`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub data: f64,
    /// `None` when the physics term was not evaluated.
    pub physics: Option<f64>,
    pub total: f64,
    pub grad: Vec<f64>,
}

enum Work<'a> {
    Data(&'a [Sample]),
    Physics(&'a [[f64; 2]]),
}

/// Evaluates the hybrid loss and its gradient.
///
/// Batches are cut into fixed [`CHUNK_ROWS`] pieces, each taped and
/// differentiated independently, then reduced in chunk order, so the
/// result does not depend on the worker count. The physics term is only
/// differentiated when `lambda > 0`; with `want_physics` it is still
/// evaluated for reporting.
pub fn loss_and_grad(
    model: &SurrogateModel,
    batch: &[Sample],
    collocation_normalized: &[[f64; 2]],
    lambda: f64,
    want_physics: bool,
    opts: &PhysicsOptions,
) -> Result<LossEval> {
    if batch.is_empty() {
        return Err(TrainError::InvalidData("empty batch".into()));
    }
    let use_physics = lambda > 0.0 || want_physics;
    if use_physics && collocation_normalized.is_empty() {
        return Err(TrainError::InvalidData("empty collocation set".into()));
    }
    let mut work: Vec<Work> = batch.chunks(CHUNK_ROWS).map(Work::Data).collect();
    if use_physics {
        work.extend(collocation_normalized.chunks(CHUNK_ROWS).map(Work::Physics));
    }
    let n_data = batch.len() as f64;
    let n_phys = collocation_normalized.len() as f64;
    let shapes = model.param_shapes();
    let differentiate_physics = lambda > 0.0;

    let results: Vec<Result<(bool, f64, Option<Vec<f64>>)>> = parallel::install(|| {
        work.par_iter()
            .map(|item| {
                let mut tape = Tape::new();
                let params = model.register(&mut tape);
                let (is_data, term) = match item {
                    Work::Data(chunk) => (
                        true,
                        taped_data_term(&mut tape, model, &params, chunk, 1.0 / n_data)?,
                    ),
                    Work::Physics(chunk) => (
                        false,
                        taped_physics_term(&mut tape, model, &params, chunk, 1.0 / n_phys, opts)?,
                    ),
                };
                let value = tape.scalar(term);
                if !value.is_finite() {
                    return Err(TrainError::NonFinite(format!(
                        "{} term evaluated to {value}",
                        if is_data { "data" } else { "physics" }
                    )));
                }
                let grad = if is_data || differentiate_physics {
                    Some(grad_weights(&tape, term, &shapes)?)
                } else {
                    None
                };
                Ok((is_data, value, grad))
            })
            .collect()
    });

    let mut data = 0.0;
    let mut physics = 0.0;
    let mut grad = vec![0.0; model.param_count()];
    let mut phys_grad = vec![0.0; if differentiate_physics { grad.len() } else { 0 }];
    for r in results {
        let (is_data, value, g) = r?;
        if is_data {
            data += value;
            if let Some(g) = g {
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
        } else {
            physics += value;
            if let Some(g) = g {
                phys_grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
        }
    }
    let total = if differentiate_physics {
        grad.iter_mut()
            .zip(&phys_grad)
            .for_each(|(a, b)| *a += lambda * b);
        data + lambda * physics
    } else {
        data
    };
    Ok(LossEval {
        data,
        physics: use_physics.then_some(physics),
        total,
        grad,
    })
}
