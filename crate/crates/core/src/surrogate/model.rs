use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::encoder::FourierEncoder;
use super::{FlowPartials, NormalizationBox, Prediction, Result, StageModel, SurrogateError};
use crate::autodiff::{Func, Mat, Tape, Var, T_LANE, VALUE_LANE, X_LANE};

/// Depth floor added after the softplus output transform, ft.
pub const DEPTH_FLOOR_FT: f64 = 0.01;

/// Rows per forward pass when predicting large grids.
const PREDICT_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn func(self) -> Func {
        match self {
            Activation::Relu => Func::Relu,
            Activation::Tanh => Func::Tanh,
        }
    }
}

/// How normalised `(x, t)` reaches the input projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Encoding {
    Fourier {
        features: usize,
        sigma: f64,
    },
    /// Encoder bypassed: the two normalised coordinates feed the projection.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub encoding: Encoding,
    pub width: usize,
    pub blocks: usize,
    pub activation: Activation,
}

impl Default for Architecture {
    /// Six residual blocks of width 512 with ReLU, 128 Fourier rows at σ = 4.
    fn default() -> Self {
        Self {
            encoding: Encoding::Fourier {
                features: 128,
                sigma: 4.0,
            },
            width: 512,
            blocks: 6,
            activation: Activation::Relu,
        }
    }
}

impl Architecture {
    /// Reduced width and depth for single-core experiments.
    pub fn compact() -> Self {
        Self {
            width: 64,
            blocks: 3,
            ..Self::default()
        }
    }

    pub fn with_encoding(mut self, encoding: Encoding) -> Self {
        self.encoding = encoding;
        self
    }

    pub fn input_dim(&self) -> usize {
        match self.encoding {
            Encoding::Fourier { features, .. } => 2 * features,
            Encoding::Raw => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(SurrogateError::InvalidArchitecture(
                "width must be > 0".into(),
            ));
        }
        if let Encoding::Fourier { features, sigma } = self.encoding {
            if features == 0 {
                return Err(SurrogateError::InvalidArchitecture(
                    "need at least one Fourier row".into(),
                ));
            }
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(SurrogateError::InvalidArchitecture(format!(
                    "sigma must be > 0, got {sigma}"
                )));
            }
        }
        Ok(())
    }

    /// Parameter names and shapes in storage order.
    pub fn manifest(&self) -> Vec<ParamSpec> {
        let w = self.width;
        let mut specs = vec![
            ParamSpec::new("input.weight", self.input_dim(), w),
            ParamSpec::new("input.bias", 1, w),
        ];
        for k in 0..self.blocks {
            specs.push(ParamSpec::new(&format!("block{k}.inner.weight"), w, w));
            specs.push(ParamSpec::new(&format!("block{k}.inner.bias"), 1, w));
            specs.push(ParamSpec::new(&format!("block{k}.outer.weight"), w, w));
            specs.push(ParamSpec::new(&format!("block{k}.outer.bias"), 1, w));
        }
        specs.push(ParamSpec::new("head.weight", w, 2));
        specs.push(ParamSpec::new("head.bias", 1, 2));
        specs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSpec {
    pub fn new(name: &str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_string(),
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fourier encoder feeding a residual MLP, mapping river mile and hours to
/// depth and velocity.
#[derive(Debug)]
pub struct SurrogateModel {
    architecture: Architecture,
    encoder: Option<FourierEncoder>,
    manifest: Vec<ParamSpec>,
    weights: Vec<f64>,
    normalization: NormalizationBox,
    seed: u64,
    clamp_warnings: AtomicUsize,
}

impl Clone for SurrogateModel {
    fn clone(&self) -> Self {
        Self {
            architecture: self.architecture,
            encoder: self.encoder.clone(),
            manifest: self.manifest.clone(),
            weights: self.weights.clone(),
            normalization: self.normalization,
            seed: self.seed,
            clamp_warnings: AtomicUsize::new(self.clamp_warnings.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for SurrogateModel {
    fn eq(&self, other: &Self) -> bool {
        self.architecture == other.architecture
            && self.encoder == other.encoder
            && self.manifest == other.manifest
            && self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.to_bits() == b.to_bits())
            && self.normalization == other.normalization
            && self.seed == other.seed
    }
}

impl SurrogateModel {
    /// Fresh model: frozen encoder drawn from `seed`, fan-in scaled affine
    /// layers, and zeroed outer layers so every residual block starts as
    /// the identity.
    pub fn new(
        architecture: Architecture,
        normalization: NormalizationBox,
        seed: u64,
    ) -> Result<Self> {
        architecture.validate()?;
        normalization.validate()?;
        let encoder = match architecture.encoding {
            Encoding::Fourier { features, sigma } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Some(FourierEncoder::sample(features, sigma, &mut rng))
            }
            Encoding::Raw => None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let gain = match architecture.activation {
            Activation::Relu => 2.0,
            Activation::Tanh => 1.0,
        };
        let manifest = architecture.manifest();
        let mut weights = Vec::with_capacity(manifest.iter().map(ParamSpec::len).sum());
        for spec in &manifest {
            let zero = spec.name.ends_with(".bias") || spec.name.contains(".outer.");
            if zero {
                weights.extend(std::iter::repeat(0.0).take(spec.len()));
                continue;
            }
            let g = if spec.name.starts_with("head.") {
                1.0
            } else {
                gain
            };
            let std = (g / spec.rows as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            weights.extend((0..spec.len()).map(|_| normal.sample(&mut rng)));
        }
        Ok(Self {
            architecture,
            encoder,
            manifest,
            weights,
            normalization,
            seed,
            clamp_warnings: AtomicUsize::new(0),
        })
    }

    /// Reassembles a model from stored parts, rejecting non-finite weights.
    pub fn from_parts(
        architecture: Architecture,
        encoder: Option<FourierEncoder>,
        weights: Vec<f64>,
        normalization: NormalizationBox,
        seed: u64,
    ) -> Result<Self> {
        architecture.validate()?;
        normalization.validate()?;
        let manifest = architecture.manifest();
        let expected: usize = manifest.iter().map(ParamSpec::len).sum();
        if weights.len() != expected {
            return Err(SurrogateError::ManifestMismatch(format!(
                "expected {expected} weights, found {}",
                weights.len()
            )));
        }
        match (&architecture.encoding, &encoder) {
            (Encoding::Fourier { features, .. }, Some(enc)) if enc.features() == *features => {}
            (Encoding::Raw, None) => {}
            _ => {
                return Err(SurrogateError::ManifestMismatch(
                    "encoder does not match the architecture".into(),
                ))
            }
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(SurrogateError::NonFiniteWeights { index });
        }
        if let Some(enc) = &encoder {
            if let Some(index) = enc.frequencies().data.iter().position(|w| !w.is_finite()) {
                return Err(SurrogateError::NonFiniteWeights { index });
            }
        }
        Ok(Self {
            architecture,
            encoder,
            manifest,
            weights,
            normalization,
            seed,
            clamp_warnings: AtomicUsize::new(0),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn encoder(&self) -> Option<&FourierEncoder> {
        self.encoder.as_ref()
    }

    pub fn manifest(&self) -> &[ParamSpec] {
        &self.manifest
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn normalization(&self) -> &NormalizationBox {
        &self.normalization
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.manifest.iter().map(|s| (s.rows, s.cols)).collect()
    }

    /// Number of inputs clamped into the normalisation box so far.
    pub fn clamp_warnings(&self) -> usize {
        self.clamp_warnings.load(Ordering::Relaxed)
    }

    /// Puts every parameter on the tape as a leaf; ids follow the manifest.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        let mut offset = 0;
        self.manifest
            .iter()
            .enumerate()
            .map(|(id, spec)| {
                let data = self.weights[offset..offset + spec.len()].to_vec();
                offset += spec.len();
                tape.param(id, Mat::from_vec(spec.rows, spec.cols, data))
            })
            .collect()
    }

    /// Records the network on `tape` for normalised inputs `input` (plain
    /// or dual, `n x 2`). Returns depth and velocity nodes (`n x 1`).
    pub fn forward(&self, tape: &mut Tape, params: &[Var], input: Var) -> Result<(Var, Var)> {
        let act = self.architecture.activation.func();
        let features = match &self.encoder {
            Some(enc) => tape.fourier(input, enc.frequencies().clone())?,
            None => input,
        };
        let mut p = params.iter().copied();
        let mut next = || p.next().expect("parameter list matches manifest");
        let (w, b) = (next(), next());
        let z = tape.affine(features, w, Some(b))?;
        let mut a = tape.map(z, act)?;
        for _ in 0..self.architecture.blocks {
            let (w1, b1, w2, b2) = (next(), next(), next(), next());
            let z = tape.affine(a, w1, Some(b1))?;
            let z = tape.map(z, act)?;
            let z = tape.affine(z, w2, Some(b2))?;
            a = tape.add(a, z)?;
        }
        let (wh, bh) = (next(), next());
        let out = tape.affine(a, wh, Some(bh))?;
        let raw_h = tape.column(out, 0)?;
        let h = tape.map(raw_h, Func::Softplus)?;
        let h = tape.offset(h, DEPTH_FLOOR_FT)?;
        let u = tape.column(out, 1)?;
        Ok((h, u))
    }

    fn normalize_all(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        points
            .iter()
            .map(|&[x, t]| {
                let (v, clamped) = self.normalization.normalize(x, t);
                if clamped {
                    let n = self.clamp_warnings.fetch_add(1, Ordering::Relaxed);
                    if n == 0 {
                        log::warn!("input ({x}, {t}) outside the normalisation box; clamped");
                    }
                }
                v
            })
            .collect()
    }

    pub fn predict(&self, x_miles: f64, t_hours: f64) -> Result<Prediction> {
        Ok(self.predict_batch(&[[x_miles, t_hours]])?[0])
    }

    pub fn predict_batch(&self, points: &[[f64; 2]]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(PREDICT_CHUNK) {
            let normalized = self.normalize_all(chunk);
            let mut tape = Tape::new();
            let params = self.register(&mut tape);
            let n = normalized.len();
            let input = tape.input(Mat::from_vec(
                n,
                2,
                normalized.iter().flat_map(|v| v.iter().copied()).collect(),
            ));
            let (h, u) = self.forward(&mut tape, &params, input)?;
            let (hv, uv) = (tape.value(h), tape.value(u));
            out.extend((0..n).map(|i| Prediction {
                h: hv.data[i],
                u: uv.data[i],
            }));
        }
        Ok(out)
    }

    /// Depth, velocity and their partials in feet and seconds.
    pub fn partials_batch(&self, points: &[[f64; 2]]) -> Result<Vec<FlowPartials>> {
        let (sx, st) = (
            self.normalization.x_scale_ft(),
            self.normalization.t_scale_seconds(),
        );
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(PREDICT_CHUNK) {
            let normalized = self.normalize_all(chunk);
            let mut tape = Tape::new();
            let params = self.register(&mut tape);
            let input = tape.dual_input(&normalized);
            let (h, u) = self.forward(&mut tape, &params, input)?;
            let n = normalized.len();
            let (hv, uv) = (tape.value(h), tape.value(u));
            out.extend((0..n).map(|i| FlowPartials {
                h: hv.data[VALUE_LANE * n + i],
                u: uv.data[VALUE_LANE * n + i],
                h_x: hv.data[X_LANE * n + i] / sx,
                h_t: hv.data[T_LANE * n + i] / st,
                u_x: uv.data[X_LANE * n + i] / sx,
                u_t: uv.data[T_LANE * n + i] / st,
            }));
        }
        Ok(out)
    }

    /// Stable digest of the frozen encoder matrix.
    pub fn encoder_digest(&self) -> Option<String> {
        use sha2::{Digest, Sha256};
        self.encoder.as_ref().map(|e| {
            let mut hasher = Sha256::new();
            for v in &e.frequencies().data {
                hasher.update(v.to_le_bytes());
            }
            hex::encode(hasher.finalize())
        })
    }
}

impl StageModel for SurrogateModel {
    fn domain(&self) -> NormalizationBox {
        self.normalization
    }

    fn predict_batch(&self, points: &[[f64; 2]]) -> Result<Vec<Prediction>> {
        SurrogateModel::predict_batch(self, points)
    }

    fn partials_batch(&self, points: &[[f64; 2]]) -> Result<Vec<FlowPartials>> {
        SurrogateModel::partials_batch(self, points)
    }
}
