//! Implicit neural representation `(river mile, hours) -> (depth, velocity)`.

mod encoder;
mod interpolant;
mod model;

pub use encoder::FourierEncoder;
pub use interpolant::FieldInterpolant;
pub use model::{Activation, Architecture, Encoding, ParamSpec, SurrogateModel, DEPTH_FLOOR_FT};

use thiserror::Error;

use crate::autodiff::TapeError;
use crate::geometry::{FEET_PER_MILE, SECONDS_PER_HOUR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid normalisation box: {0}")]
    InvalidNormalization(String),
    #[error("non-finite weight at index {index}")]
    NonFiniteWeights { index: usize },
    #[error("weights do not match the manifest: {0}")]
    ManifestMismatch(String),
    #[error(transparent)]
    Tape(#[from] TapeError),
}

pub type Result<T> = std::result::Result<T, SurrogateError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Depth above bed, ft.
    pub h: f64,
    /// Velocity, ft/s.
    pub u: f64,
}

/// Depth, velocity and first partials in feet and seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowPartials {
    pub h: f64,
    pub u: f64,
    pub h_x: f64,
    pub h_t: f64,
    pub u_x: f64,
    pub u_t: f64,
}

/// Maps river miles and hours onto the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationBox {
    pub x_min: f64,
    pub x_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl NormalizationBox {
    pub fn new(x_min: f64, x_max: f64, t_min: f64, t_max: f64) -> Result<Self> {
        let b = Self {
            x_min,
            x_max,
            t_min,
            t_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.t_min, self.t_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.t_max > self.t_min;
        if ok {
            Ok(())
        } else {
            Err(SurrogateError::InvalidNormalization(format!("{self:?}")))
        }
    }

    /// Normalised coordinates, clamped into `[0, 1]²`; the flag reports
    /// whether clamping happened.
    pub fn normalize(&self, x_miles: f64, t_hours: f64) -> ([f64; 2], bool) {
        let xn = (x_miles - self.x_min) / (self.x_max - self.x_min);
        let tn = (t_hours - self.t_min) / (self.t_max - self.t_min);
        let (xc, tc) = (xn.clamp(0.0, 1.0), tn.clamp(0.0, 1.0));
        ([xc, tc], xc != xn || tc != tn)
    }

    pub fn denormalize(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.x_min + v[0] * (self.x_max - self.x_min),
            self.t_min + v[1] * (self.t_max - self.t_min),
        ]
    }

    /// Feet per unit of normalised x.
    pub fn x_scale_ft(&self) -> f64 {
        (self.x_max - self.x_min) * FEET_PER_MILE
    }

    /// Seconds per unit of normalised t.
    pub fn t_scale_seconds(&self) -> f64 {
        (self.t_max - self.t_min) * SECONDS_PER_HOUR
    }

    pub fn contains(&self, x_miles: f64, t_hours: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x_miles) && (self.t_min..=self.t_max).contains(&t_hours)
    }
}

/// Anything that predicts depth and velocity over a river reach.
pub trait StageModel: Send + Sync {
    fn domain(&self) -> NormalizationBox;

    /// Points are `(river mile, hours)`.
    fn predict_batch(&self, points: &[[f64; 2]]) -> Result<Vec<Prediction>>;

    /// Physical-unit partials at `(river mile, hours)` points.
    fn partials_batch(&self, points: &[[f64; 2]]) -> Result<Vec<FlowPartials>>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_round_trip_and_clamp() {
        let b = NormalizationBox::new(2.0, 12.0, 0.0, 48.0).unwrap();
        let (v, clamped) = b.normalize(7.0, 12.0);
        assert_eq!(v, [0.5, 0.25]);
        assert!(!clamped);
        assert_eq!(b.denormalize(v), [7.0, 12.0]);
        let (v, clamped) = b.normalize(-1.0, 60.0);
        assert_eq!(v, [0.0, 1.0]);
        assert!(clamped);
        assert!(NormalizationBox::new(1.0, 1.0, 0.0, 1.0).is_err());
    }
}
