use super::{FlowPartials, NormalizationBox, Prediction, Result, StageModel, SurrogateError};
use crate::geometry::{FEET_PER_MILE, SECONDS_PER_HOUR};
use crate::solver::FlowField;

/// Bilinear interpolant of a gridded field. Exact at grid nodes; used as a
/// stand-in model wherever the truth itself should be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldInterpolant {
    x: Vec<f64>,
    t: Vec<f64>,
    h: Vec<f64>,
    u: Vec<f64>,
}

impl FieldInterpolant {
    pub fn new(field: &FlowField) -> Result<Self> {
        Self::from_grid(
            field.x_grid_miles.clone(),
            field.t_grid_hours.clone(),
            field.h.clone(),
            field.u.clone(),
        )
    }

    pub fn from_grid(x: Vec<f64>, t: Vec<f64>, h: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || t.len() < 2 {
            return Err(SurrogateError::InvalidNormalization(
                "interpolant needs at least a 2 x 2 grid".into(),
            ));
        }
        if h.len() != x.len() * t.len() || u.len() != h.len() {
            return Err(SurrogateError::ManifestMismatch(
                "grid values do not match grid size".into(),
            ));
        }
        if let Some(index) = h.iter().chain(&u).position(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFiniteWeights { index });
        }
        Ok(Self { x, t, h, u })
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h
    }

    pub fn u_values(&self) -> &[f64] {
        &self.u
    }

    fn locate(grid: &[f64], v: f64) -> (usize, f64) {
        let v = v.clamp(grid[0], grid[grid.len() - 1]);
        let i = grid.partition_point(|g| *g <= v).clamp(1, grid.len() - 1) - 1;
        let w = (v - grid[i]) / (grid[i + 1] - grid[i]);
        (i, w)
    }

    fn eval(&self, values: &[f64], x: f64, t: f64) -> (f64, f64, f64) {
        let nx = self.x.len();
        let (i, wx) = Self::locate(&self.x, x);
        let (k, wt) = Self::locate(&self.t, t);
        let v00 = values[k * nx + i];
        let v01 = values[k * nx + i + 1];
        let v10 = values[(k + 1) * nx + i];
        let v11 = values[(k + 1) * nx + i + 1];
        let value = if wx == 0.0 && wt == 0.0 {
            v00
        } else {
            (1.0 - wt) * ((1.0 - wx) * v00 + wx * v01) + wt * ((1.0 - wx) * v10 + wx * v11)
        };
        let dx = ((1.0 - wt) * (v01 - v00) + wt * (v11 - v10)) / (self.x[i + 1] - self.x[i]);
        let dt = ((1.0 - wx) * (v10 - v00) + wx * (v11 - v01)) / (self.t[k + 1] - self.t[k]);
        (value, dx, dt)
    }
}

impl StageModel for FieldInterpolant {
    fn domain(&self) -> NormalizationBox {
        NormalizationBox {
            x_min: self.x[0],
            x_max: self.x[self.x.len() - 1],
            t_min: self.t[0],
            t_max: self.t[self.t.len() - 1],
        }
    }

    fn predict_batch(&self, points: &[[f64; 2]]) -> Result<Vec<Prediction>> {
        Ok(points
            .iter()
            .map(|&[x, t]| Prediction {
                h: self.eval(&self.h, x, t).0,
                u: self.eval(&self.u, x, t).0,
            })
            .collect())
    }

    fn partials_batch(&self, points: &[[f64; 2]]) -> Result<Vec<FlowPartials>> {
        Ok(points
            .iter()
            .map(|&[x, t]| {
                let (h, hx, ht) = self.eval(&self.h, x, t);
                let (u, ux, ut) = self.eval(&self.u, x, t);
                FlowPartials {
                    h,
                    u,
                    h_x: hx / FEET_PER_MILE,
                    h_t: ht / SECONDS_PER_HOUR,
                    u_x: ux / FEET_PER_MILE,
                    u_t: ut / SECONDS_PER_HOUR,
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_at_nodes_and_linear_between() {
        let x = vec![0.0, 1.0, 2.0];
        let t = vec![0.0, 1.0];
        let h = vec![1.0, 2.0, 3.0, 2.0, 3.0, 4.0];
        let u = vec![0.0; 6];
        let f = FieldInterpolant::from_grid(x, t, h, u).unwrap();
        let p = f
            .predict_batch(&[[1.0, 1.0], [0.5, 0.5], [2.0, 0.0]])
            .unwrap();
        assert_eq!(p[0].h, 3.0);
        assert_eq!(p[1].h, 2.0);
        assert_eq!(p[2].h, 3.0);
        let d = f.partials_batch(&[[0.5, 0.5]]).unwrap()[0];
        assert!((d.h_x * FEET_PER_MILE - 1.0).abs() < 1e-12);
        assert!((d.h_t * SECONDS_PER_HOUR - 1.0).abs() < 1e-12);
    }
}
