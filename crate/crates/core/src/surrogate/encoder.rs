use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Mat;

/// Frozen random Fourier feature map `v ↦ [cos(2π B v), sin(2π B v)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEncoder {
    freqs: Arc<Mat>,
    sigma: f64,
}

impl FourierEncoder {
    /// Draws an `m x 2` frequency matrix with i.i.d. `N(0, sigma²)` entries.
    pub fn sample(m: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, sigma).expect("sigma must be finite and positive");
        let data = (0..m * 2).map(|_| normal.sample(rng)).collect();
        Self {
            freqs: Arc::new(Mat::from_vec(m, 2, data)),
            sigma,
        }
    }

    pub fn seeded(m: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::sample(m, sigma, &mut rng)
    }

    pub fn from_matrix(freqs: Mat, sigma: f64) -> Self {
        assert_eq!(freqs.cols, 2, "frequency matrix must have two columns");
        Self {
            freqs: Arc::new(freqs),
            sigma,
        }
    }

    pub fn features(&self) -> usize {
        self.freqs.rows
    }

    pub fn output_dim(&self) -> usize {
        2 * self.freqs.rows
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn frequencies(&self) -> &Arc<Mat> {
        &self.freqs
    }

    /// Encodes one normalised input pair: cosine block, then sine block.
    pub fn encode(&self, v: [f64; 2]) -> Vec<f64> {
        let m = self.features();
        let mut out = vec![0.0; 2 * m];
        for j in 0..m {
            let z = 2.0
                * std::f64::consts::PI
                * (self.freqs.get(j, 0) * v[0] + self.freqs.get(j, 1) * v[1]);
            let (s, c) = z.sin_cos();
            out[j] = c;
            out[m + j] = s;
        }
        out
    }
}
