/// Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Exponential decay: `lr0 * rate^(iteration / every)` with a continuous
/// exponent.
pub fn learning_rate(lr0: f64, rate: f64, every: u64, iteration: u64) -> f64 {
    lr0 * rate.powf(iteration as f64 / every as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(2);
        let mut p = [1.0, -1.0];
        s.step(&mut p, &[3.0, -0.5], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut s = AdamState::new(1);
        let mut p = [5.0];
        for _ in 0..5000 {
            let g = [2.0 * (p[0] - 2.0)];
            s.step(&mut p, &g, 0.01);
        }
        assert!((p[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn schedule_halves() {
        assert_eq!(learning_rate(1e-3, 0.5, 20_000, 0), 1e-3);
        assert!((learning_rate(1e-3, 0.5, 20_000, 20_000) - 5e-4).abs() < 1e-18);
        assert!((learning_rate(1e-3, 0.5, 20_000, 40_000) - 2.5e-4).abs() < 1e-18);
    }
}
