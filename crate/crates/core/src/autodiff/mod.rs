//! Differentiation engine: forward-mode tangents for the two input
//! coordinates, nested under a reverse-mode tape for weight gradients.

mod dual;
pub mod matrix;
mod tape;

pub use dual::{sigmoid, softplus, Dual};
pub use matrix::Mat;
pub use tape::{
    Func, Gradients, Result, Tape, TapeError, Var, DUAL_LANES, T_LANE, VALUE_LANE, X_LANE,
};

/// Evaluates a taped scalar function of `(x, t)` together with both
/// partial derivatives.
///
/// The closure receives the tape and 1x1 dual nodes for `x` and `t`; it
/// must return a 1x1 node.
pub fn forward_dual<F>(f: F, x: f64, t: f64) -> Result<Dual>
where
    F: FnOnce(&mut Tape, Var, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let input = tape.dual_input(&[[x, t]]);
    let xv = tape.column(input, 0)?;
    let tv = tape.column(input, 1)?;
    let out = f(&mut tape, xv, tv)?;
    let value = tape.value(out);
    if value.cols != 1 || tape.rows(out) != 1 {
        return Err(TapeError::Shape {
            op: "forward_dual",
            detail: format!("expected a 1x1 result, got {:?}", value.shape()),
        });
    }
    if tape.lanes(out) == 1 {
        // the result never touched the inputs
        return Ok(Dual::constant(value.data[0]));
    }
    Ok(Dual::new(value.data[0], value.data[1], value.data[2]))
}

/// Reverse-mode gradient of `loss` for parameter ids `0..n_params`,
/// flattened in id order. Parameters the loss does not reach get zeros.
pub fn grad_weights(tape: &Tape, loss: Var, shapes: &[(usize, usize)]) -> Result<Vec<f64>> {
    let grads = tape.backward(loss)?;
    let mut out = Vec::with_capacity(shapes.iter().map(|(r, c)| r * c).sum());
    for (id, &(r, c)) in shapes.iter().enumerate() {
        match grads.get(id) {
            Some(g) => out.extend_from_slice(&g.data),
            None => out.extend(std::iter::repeat(0.0).take(r * c)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_inputs() {
        let d = forward_dual(|tape, x, t| tape.mul(x, t), 2.0, 3.0).unwrap();
        assert_eq!(d, Dual::new(6.0, 3.0, 2.0));
    }

    #[test]
    fn sine_of_x() {
        let d = forward_dual(|tape, x, _| tape.map(x, Func::Sin), 0.0, 4.2).unwrap();
        assert_eq!(d, Dual::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn constant_function_has_zero_partials() {
        let d = forward_dual(|tape, _, _| Ok(tape.input(Mat::scalar(5.0))), 1.0, 1.0).unwrap();
        assert_eq!(d, Dual::constant(5.0));
    }

    #[test]
    fn square_loss_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(0, Mat::scalar(3.0));
        let l = tape.map(w, Func::Square).unwrap();
        assert_eq!(grad_weights(&tape, l, &[(1, 1)]).unwrap(), vec![6.0]);
    }

    /// Sum of squared outputs of `W x` has gradient `2 (W x) xᵀ`, laid out
    /// here for a weight stored as `in x out` acting on a row vector.
    #[test]
    fn linear_layer_matches_closed_form() {
        let x = [0.5, -1.25, 2.0];
        let w: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.7).collect();
        let mut tape = Tape::new();
        let xi = tape.input(Mat::from_vec(1, 3, x.to_vec()));
        let wv = tape.param(0, Mat::from_vec(3, 2, w.clone()));
        let y = tape.affine(xi, wv, None).unwrap();
        let sq = tape.map(y, Func::Square).unwrap();
        let l = tape.sum(sq).unwrap();
        let g = grad_weights(&tape, l, &[(3, 2)]).unwrap();

        let y: Vec<f64> = (0..2)
            .map(|j| (0..3).map(|i| x[i] * w[i * 2 + j]).sum())
            .collect();
        for i in 0..3 {
            for j in 0..2 {
                let expected = 2.0 * y[j] * x[i];
                assert!((g[i * 2 + j] - expected).abs() < 1e-12);
            }
        }
    }
}
