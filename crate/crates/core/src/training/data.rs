use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Result, TrainError};
use crate::solver::{FlowField, StageDatum};
use crate::surrogate::NormalizationBox;

// RNG stream ids under the training seed.
pub(crate) const BATCH_STREAM: u64 = 2;
pub(crate) const COLLOCATION_STREAM: u64 = 3;
pub(crate) const SPLIT_STREAM: u64 = 4;

/// One supervised observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x_miles: f64,
    pub t_hours: f64,
    pub h_ft: f64,
    pub u_fps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<Sample>,
    pub normalization: NormalizationBox,
}

impl TrainingSet {
    /// Every station/output-time pair of a depth-datum field.
    pub fn from_field(field: &FlowField) -> Result<Self> {
        if field.datum != StageDatum::Depth {
            return Err(TrainError::InvalidData(
                "training targets must be depths above bed".into(),
            ));
        }
        field.validate().map_err(TrainError::InvalidData)?;
        let mut samples = Vec::with_capacity(field.h.len());
        for (ti, &t) in field.t_grid_hours.iter().enumerate() {
            for (xi, &x) in field.x_grid_miles.iter().enumerate() {
                samples.push(Sample {
                    x_miles: x,
                    t_hours: t,
                    h_ft: field.h_at(ti, xi),
                    u_fps: field.u_at(ti, xi),
                });
            }
        }
        let normalization = bounding_box(&samples)?;
        Ok(Self {
            samples,
            normalization,
        })
    }

    pub fn new(samples: Vec<Sample>, normalization: NormalizationBox) -> Result<Self> {
        let set = Self {
            samples,
            normalization,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.iter().any(|s| {
            ![s.x_miles, s.t_hours, s.h_ft, s.u_fps]
                .iter()
                .all(|v| v.is_finite())
        }) {
            return Err(TrainError::InvalidData("non-finite sample".into()));
        }
        if self
            .samples
            .iter()
            .any(|s| !self.normalization.contains(s.x_miles, s.t_hours))
        {
            return Err(TrainError::InvalidData(
                "normalisation box does not cover all samples".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Seeded random split into (training, validation). The validation
    /// part holds `ceil(fraction * n)` samples, at least one when
    /// `fraction > 0` and more than one sample exists.
    pub fn split(&self, fraction: f64, seed: u64) -> (TrainingSet, TrainingSet) {
        let n = self.samples.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = stream_rng(seed, SPLIT_STREAM);
        idx.shuffle(&mut rng);
        let mut n_val = (fraction * n as f64).ceil() as usize;
        if n_val >= n {
            n_val = n.saturating_sub(1);
        }
        let (val_idx, train_idx) = idx.split_at(n_val);
        let pick = |ids: &[usize]| {
            let mut ids = ids.to_vec();
            ids.sort_unstable();
            TrainingSet {
                samples: ids.iter().map(|&i| self.samples[i]).collect(),
                normalization: self.normalization,
            }
        };
        (pick(train_idx), pick(val_idx))
    }
}

fn bounding_box(samples: &[Sample]) -> Result<NormalizationBox> {
    let fold = |f: fn(&Sample) -> f64| {
        samples
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (x_min, x_max) = fold(|s| s.x_miles);
    let (t_min, t_max) = fold(|s| s.t_hours);
    NormalizationBox::new(x_min, x_max, t_min, t_max)
        .map_err(|e| TrainError::InvalidData(e.to_string()))
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws supervised batches (with replacement) and collocation points.
#[derive(Debug, Clone)]
pub struct Sampler {
    batch_rng: ChaCha8Rng,
    collocation_rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            batch_rng: stream_rng(seed, BATCH_STREAM),
            collocation_rng: stream_rng(seed, COLLOCATION_STREAM),
        }
    }

    pub fn batch(&mut self, set: &TrainingSet, size: usize) -> Vec<Sample> {
        let n = set.samples.len();
        (0..size)
            .map(|_| set.samples[self.batch_rng.random_range(0..n)])
            .collect()
    }

    /// Uniform points in the normalised unit square.
    pub fn collocation(&mut self, count: usize) -> Vec<[f64; 2]> {
        (0..count)
            .map(|_| {
                [
                    self.collocation_rng.random::<f64>(),
                    self.collocation_rng.random::<f64>(),
                ]
            })
            .collect()
    }
}
