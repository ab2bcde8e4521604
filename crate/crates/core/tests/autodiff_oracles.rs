//! Input partials and weight gradients checked against central finite
//! differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagecast_core::autodiff::{grad_weights, Tape};
use stagecast_core::geometry::FEET_PER_MILE;
use stagecast_core::surrogate::{
    Activation, Architecture, Encoding, NormalizationBox, SurrogateModel,
};
use stagecast_core::training::{
    loss_and_grad, physics_loss, taped_data_term, taped_physics_term, total_loss, FrictionTerms,
    PhysicsOptions, Sample,
};

fn boxed() -> NormalizationBox {
    NormalizationBox::new(0.0, 14.06, 0.0, 36.0).unwrap()
}

/// Model with every weight redrawn so zero-initialised layers take part.
fn random_model(arch: Architecture, seed: u64, scale: f64) -> SurrogateModel {
    let mut m = SurrogateModel::new(arch, boxed(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for w in m.weights_mut() {
        *w = rng.random_range(-scale..scale);
    }
    m
}

fn random_arch(rng: &mut ChaCha8Rng) -> Architecture {
    Architecture {
        encoding: if rng.random_bool(0.7) {
            Encoding::Fourier {
                features: rng.random_range(2..8),
                sigma: rng.random_range(0.5..3.0),
            }
        } else {
            Encoding::Raw
        },
        width: rng.random_range(3..12),
        blocks: rng.random_range(0..3),
        activation: if rng.random_bool(0.5) {
            Activation::Tanh
        } else {
            Activation::Relu
        },
    }
}

/// Five-point central difference of `(h, u)` along `e` (physical units per
/// unit of normalised input): truncation error is O(step^4), small next to
/// the Fourier curvature.
fn stencil(m: &SurrogateModel, p: [f64; 2], e: [f64; 2], step: f64) -> [f64; 2] {
    let at = |k: f64| {
        let v = m
            .predict(p[0] + k * step * e[0], p[1] + k * step * e[1])
            .unwrap();
        [v.h, v.u]
    };
    let (a, b, c, d) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
    [0, 1].map(|j| (-a[j] + 8.0 * b[j] - 8.0 * c[j] + d[j]) / (12.0 * step))
}

#[test]
fn input_partials_match_central_differences_on_random_networks() {
    let norm = boxed();
    let step = 1e-4;
    let (sx, st) = (norm.x_scale_ft(), norm.t_scale_seconds());
    let ex = [norm.x_max - norm.x_min, 0.0];
    let et = [0.0, norm.t_max - norm.t_min];
    let mut arch_rng = ChaCha8Rng::seed_from_u64(2024);
    let mut straddled = 0;
    for seed in 0..100u64 {
        let arch = random_arch(&mut arch_rng);
        let m = random_model(arch, seed, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut checked = 0;
        while checked < 5 {
            let p = norm.denormalize([rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)]);
            let d = m.partials_batch(&[p]).unwrap()[0];
            let (fx, ft) = (stencil(&m, p, ex, step), stencil(&m, p, et, step));
            // A ReLU kink inside the stencil makes the difference quotient
            // meaningless there; halving the step exposes it.
            let (hx, ht) = (
                stencil(&m, p, ex, step / 2.0),
                stencil(&m, p, et, step / 2.0),
            );
            let smooth = (0..2).all(|j| {
                (fx[j] - hx[j]).abs() < 1e-7 * fx[j].abs().max(1.0)
                    && (ft[j] - ht[j]).abs() < 1e-7 * ft[j].abs().max(1.0)
            });
            if !smooth {
                assert_eq!(
                    arch.activation,
                    Activation::Relu,
                    "tanh networks are smooth"
                );
                straddled += 1;
                continue;
            }
            // normalised units: d/dv = physical partial * scale
            let pairs = [
                (d.h_x * sx, fx[0]),
                (d.u_x * sx, fx[1]),
                (d.h_t * st, ft[0]),
                (d.u_t * st, ft[1]),
            ];
            for (ad, fd) in pairs {
                let rel = (ad - fd).abs() / fd.abs().max(1.0);
                assert!(
                    rel < 1e-5,
                    "seed {seed} {arch:?}: autodiff {ad}, finite difference {fd}"
                );
            }
            checked += 1;
        }
    }
    assert!(straddled < 50, "{straddled} points straddled a kink");
}

#[test]
fn physical_partials_follow_the_normalisation_chain_rule() {
    let arch = Architecture {
        activation: Activation::Tanh,
        ..Architecture::compact()
    };
    let m = random_model(arch, 3, 0.1);
    let norm = boxed();
    let d = m.partials_batch(&[[7.0, 18.0]]).unwrap()[0];
    let dx_miles = 1e-4 * (norm.x_max - norm.x_min);
    let v = m
        .predict_batch(&[[7.0 + dx_miles, 18.0], [7.0 - dx_miles, 18.0]])
        .unwrap();
    let fd_per_ft = (v[0].h - v[1].h) / (2.0 * dx_miles * FEET_PER_MILE);
    let rel = (d.h_x - fd_per_ft).abs() / fd_per_ft.abs();
    assert!(rel < 1e-4, "{} vs {fd_per_ft}", d.h_x);
}

fn two_by_eight(activation: Activation, seed: u64) -> SurrogateModel {
    let arch = Architecture {
        encoding: Encoding::Fourier {
            features: 4,
            sigma: 1.0,
        },
        width: 8,
        blocks: 1,
        activation,
    };
    random_model(arch, seed, 0.5)
}

fn fixtures(seed: u64) -> (Vec<Sample>, Vec<[f64; 2]>) {
    let norm = boxed();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = (0..16)
        .map(|_| {
            let [x, t] = norm.denormalize([rng.random(), rng.random()]);
            Sample {
                x_miles: x,
                t_hours: t,
                h_ft: rng.random_range(0.5..2.0),
                u_fps: rng.random_range(-1.0..1.0),
            }
        })
        .collect();
    let colloc = (0..16).map(|_| [rng.random(), rng.random()]).collect();
    (batch, colloc)
}

/// Max over weights of |g - fd| / max(|g|, |fd|, 1e-6 max|g|).
fn max_relative_error(g: &[f64], fd: &[f64]) -> f64 {
    let floor = 1e-6 * g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    g.iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn central_differences(m: &SurrogateModel, f: impl Fn(&SurrogateModel) -> f64) -> Vec<f64> {
    let step = 1e-5;
    let mut probe = m.clone();
    (0..m.param_count())
        .map(|i| {
            let w = m.weights()[i];
            probe.weights_mut()[i] = w + step;
            let up = f(&probe);
            probe.weights_mut()[i] = w - step;
            let down = f(&probe);
            probe.weights_mut()[i] = w;
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[test]
fn physics_loss_weight_gradient_matches_finite_differences() {
    let norm = boxed();
    let opts = PhysicsOptions::default();
    for activation in [Activation::Tanh, Activation::Relu] {
        let m = two_by_eight(activation, 11);
        let (_, colloc) = fixtures(5);
        let physical: Vec<[f64; 2]> = colloc.iter().map(|&v| norm.denormalize(v)).collect();
        let mut tape = Tape::new();
        let params = m.register(&mut tape);
        let l = taped_physics_term(&mut tape, &m, &params, &colloc, 1.0 / 16.0, &opts).unwrap();
        let g = grad_weights(&tape, l, &m.param_shapes()).unwrap();
        let fd = central_differences(&m, |p| physics_loss(p, &physical, &opts).unwrap());
        let err = max_relative_error(&g, &fd);
        assert!(err < 1e-3, "{activation:?}: max relative error {err}");
    }
}

#[test]
fn extended_momentum_gradient_matches_finite_differences() {
    let norm = boxed();
    let opts = PhysicsOptions {
        friction: Some(FrictionTerms {
            width_ft: 500.0,
            manning_n: 0.035,
            bed_slope: 1e-4,
        }),
        ..PhysicsOptions::default()
    };
    let m = two_by_eight(Activation::Tanh, 17);
    let (_, colloc) = fixtures(6);
    let physical: Vec<[f64; 2]> = colloc.iter().map(|&v| norm.denormalize(v)).collect();
    let mut tape = Tape::new();
    let params = m.register(&mut tape);
    let l = taped_physics_term(&mut tape, &m, &params, &colloc, 1.0 / 16.0, &opts).unwrap();
    let g = grad_weights(&tape, l, &m.param_shapes()).unwrap();
    let fd = central_differences(&m, |p| physics_loss(p, &physical, &opts).unwrap());
    let err = max_relative_error(&g, &fd);
    assert!(err < 1e-3, "max relative error {err}");
}

#[test]
fn hybrid_loss_gradient_matches_finite_differences() {
    let norm = boxed();
    let opts = PhysicsOptions::default();
    let m = two_by_eight(Activation::Tanh, 23);
    let (batch, colloc) = fixtures(9);
    let physical: Vec<[f64; 2]> = colloc.iter().map(|&v| norm.denormalize(v)).collect();
    for lambda in [0.0, 0.1, 1.0] {
        let eval = loss_and_grad(&m, &batch, &colloc, lambda, true, &opts).unwrap();
        let expected = total_loss(&m, &batch, &physical, lambda, &opts).unwrap();
        assert!((eval.total - expected).abs() <= 1e-12 * expected.abs());
        let fd = central_differences(&m, |p| {
            total_loss(p, &batch, &physical, lambda, &opts).unwrap()
        });
        let err = max_relative_error(&eval.grad, &fd);
        assert!(err < 1e-3, "lambda {lambda}: max relative error {err}");
    }
}

#[test]
fn gradient_is_linear_in_the_loss() {
    let opts = PhysicsOptions::default();
    let m = two_by_eight(Activation::Tanh, 29);
    let (batch, colloc) = fixtures(12);
    let shapes = m.param_shapes();
    let grad_of = |a: f64, b: f64| {
        let mut tape = Tape::new();
        let params = m.register(&mut tape);
        let l1 = taped_data_term(&mut tape, &m, &params, &batch, a).unwrap();
        let l2 = taped_physics_term(&mut tape, &m, &params, &colloc, b, &opts).unwrap();
        let l = tape.add(l1, l2).unwrap();
        grad_weights(&tape, l, &shapes).unwrap()
    };
    let (a, b) = (0.7, -2.5);
    let g1 = grad_of(1.0, 0.0);
    let g2 = grad_of(0.0, 1.0);
    let combined = grad_of(a, b);
    for i in 0..g1.len() {
        let expected = a * g1[i] + b * g2[i];
        let scale = expected.abs().max(1.0);
        assert!(
            (combined[i] - expected).abs() <= 1e-12 * scale,
            "weight {i}"
        );
    }
}
