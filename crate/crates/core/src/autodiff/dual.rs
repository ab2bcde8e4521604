//! Forward-mode dual numbers carrying two tangent directions, one per
//! network input coordinate.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// `value + dx·εx + dt·εt` with `εx² = εt² = εx·εt = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub value: f64,
    pub dx: f64,
    pub dt: f64,
}

impl Dual {
    pub const fn new(value: f64, dx: f64, dt: f64) -> Self {
        Self { value, dx, dt }
    }

    pub const fn constant(value: f64) -> Self {
        Self::new(value, 0.0, 0.0)
    }

    /// Seeded with `∂/∂x = 1`.
    pub const fn var_x(value: f64) -> Self {
        Self::new(value, 1.0, 0.0)
    }

    /// Seeded with `∂/∂t = 1`.
    pub const fn var_t(value: f64) -> Self {
        Self::new(value, 0.0, 1.0)
    }

    /// Applies a scalar function given its value and first derivative at
    /// `self.value`.
    #[inline]
    pub fn chain(self, f: f64, df: f64) -> Self {
        Self::new(f, df * self.dx, df * self.dt)
    }

    pub fn sin(self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }

    pub fn tanh(self) -> Self {
        let y = self.value.tanh();
        self.chain(y, 1.0 - y * y)
    }

    /// Subgradient 0 at the kink.
    pub fn relu(self) -> Self {
        if self.value > 0.0 {
            self
        } else {
            Self::constant(0.0)
        }
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn ln(self) -> Self {
        self.chain(self.value.ln(), 1.0 / self.value)
    }

    pub fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s)
    }

    pub fn powf(self, p: f64) -> Self {
        self.chain(self.value.powf(p), p * self.value.powf(p - 1.0))
    }

    pub fn square(self) -> Self {
        self.chain(self.value * self.value, 2.0 * self.value)
    }

    /// Subgradient 0 at zero.
    pub fn abs(self) -> Self {
        let s = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.chain(self.value.abs(), s)
    }

    pub fn softplus(self) -> Self {
        self.chain(softplus(self.value), sigmoid(self.value))
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl From<f64> for Dual {
    fn from(v: f64) -> Self {
        Self::constant(v)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.value + o.value, self.dx + o.dx, self.dt + o.dt)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.value - o.value, self.dx - o.dx, self.dt - o.dt)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(
            self.value * o.value,
            self.dx * o.value + self.value * o.dx,
            self.dt * o.value + self.value * o.dt,
        )
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.value;
        let v = self.value * inv;
        Dual::new(v, (self.dx - v * o.dx) * inv, (self.dt - v * o.dt) * inv)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.value, -self.dx, -self.dt)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, c: f64) -> Dual {
        Dual::new(self.value + c, self.dx, self.dt)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, c: f64) -> Dual {
        Dual::new(self.value * c, self.dx * c, self.dt * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn product_rule() {
        let x = Dual::var_x(2.0);
        let t = Dual::var_t(3.0);
        let f = x * t;
        assert_eq!(f, Dual::new(6.0, 3.0, 2.0));
    }

    #[test]
    fn sine_at_zero() {
        let f = Dual::var_x(0.0).sin();
        assert_eq!(f, Dual::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn relu_kink_uses_zero_subgradient() {
        assert_eq!(Dual::var_x(0.0).relu(), Dual::constant(0.0));
        assert_eq!(Dual::var_x(1.5).relu(), Dual::var_x(1.5));
    }

    #[test]
    fn softplus_is_stable() {
        assert!(softplus(800.0).is_finite());
        assert_eq!(softplus(-800.0), 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn sum_and_product_rules_hold(
            a in -1e3f64..1e3, ax in -10f64..10.0, at in -10f64..10.0,
            b in -1e3f64..1e3, bx in -10f64..10.0, bt in -10f64..10.0,
        ) {
            let f = Dual::new(a, ax, at);
            let g = Dual::new(b, bx, bt);
            let s = f + g;
            prop_assert_eq!(s.dx, ax + bx);
            prop_assert_eq!(s.dt, at + bt);
            let p = f * g;
            prop_assert_eq!(p.dx, ax * b + a * bx);
            prop_assert_eq!(p.dt, at * b + a * bt);
        }

        #[test]
        fn quotient_matches_finite_difference(a in 0.5f64..5.0, b in 0.5f64..5.0) {
            let f = Dual::var_x(a) / Dual::constant(b) + Dual::var_x(a).sin() / Dual::var_x(a);
            let g = |x: f64| x / b + x.sin() / x;
            let h = 1e-6;
            let fd = (g(a + h) - g(a - h)) / (2.0 * h);
            prop_assert!((f.dx - fd).abs() < 1e-7);
        }
    }
}
