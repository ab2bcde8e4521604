//! Reverse-mode tape over lane-structured matrices.
//!
//! Every node holds a matrix whose rows are split into `lanes` equal
//! blocks. A plain node has one lane. A dual node has three: values, then
//! the derivative of every value with respect to the first input
//! coordinate, then with respect to the second. Operations propagate the
//! tangent lanes forward exactly like [`Dual`](super::Dual) arithmetic,
//! and the backward pass differentiates through all lanes, so weight
//! gradients of anything built from the tangent lanes (a PDE residual,
//! say) come out right.

use std::sync::Arc;

use thiserror::Error;

use super::dual::{sigmoid, softplus};
use super::matrix::{matmul, matmul_at_b_acc, matmul_bt, matmul_bt_acc, Mat};

pub const VALUE_LANE: usize = 0;
pub const X_LANE: usize = 1;
pub const T_LANE: usize = 2;
pub const DUAL_LANES: usize = 3;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("unsupported primitive `{op}`: {reason}")]
    Unsupported { op: &'static str, reason: String },
    #[error("shape mismatch in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
    #[error("backward needs a 1x1 plain scalar, got {rows}x{cols} with {lanes} lane(s)")]
    NotScalar {
        rows: usize,
        cols: usize,
        lanes: usize,
    },
}

pub type Result<T> = std::result::Result<T, TapeError>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise scalar functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Relu,
    Tanh,
    Sin,
    Cos,
    Square,
    Softplus,
    Exp,
    Abs,
    Powf(f64),
}

impl Func {
    pub fn parse(name: &str) -> Result<Func> {
        Ok(match name {
            "relu" => Func::Relu,
            "tanh" => Func::Tanh,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "square" => Func::Square,
            "softplus" => Func::Softplus,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            other => {
                return Err(TapeError::Unsupported {
                    op: "map",
                    reason: format!("no primitive named `{other}`"),
                })
            }
        })
    }

    #[inline]
    fn value(self, v: f64) -> f64 {
        match self {
            Func::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Func::Tanh => v.tanh(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Square => v * v,
            Func::Softplus => softplus(v),
            Func::Exp => v.exp(),
            Func::Abs => v.abs(),
            Func::Powf(p) => v.powf(p),
        }
    }

    /// First and second derivative at `v`, given `y = f(v)`.
    #[inline]
    fn derivatives(self, v: f64, y: f64) -> (f64, f64) {
        match self {
            Func::Relu => (if v > 0.0 { 1.0 } else { 0.0 }, 0.0),
            Func::Tanh => {
                let d = 1.0 - y * y;
                (d, -2.0 * y * d)
            }
            Func::Sin => (v.cos(), -y),
            Func::Cos => (-v.sin(), -y),
            Func::Square => (2.0 * v, 2.0),
            Func::Softplus => {
                let s = sigmoid(v);
                (s, s * (1.0 - s))
            }
            Func::Exp => (y, y),
            Func::Abs => (
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                },
                0.0,
            ),
            Func::Powf(p) => (p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0)),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    Affine { x: Var, w: Var, b: Option<Var> },
    Fourier { x: Var, freqs: Arc<Mat> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var, f64),
    Map(Var, Func),
    Column(Var, usize),
    Lane(Var, usize),
    Sum(Var),
    Mean(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Affine { .. } => "affine",
            Op::Fourier { .. } => "fourier",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Map(..) => "map",
            Op::Column(..) => "column",
            Op::Lane(..) => "lane",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Input | Op::Param(_) => vec![],
            Op::Affine { x, w, b } => {
                let mut p = vec![x, w];
                p.extend(b);
                p
            }
            Op::Fourier { x, .. } => vec![x],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::Offset(a, _)
            | Op::Map(a, _)
            | Op::Column(a, _)
            | Op::Lane(a, _)
            | Op::Sum(a)
            | Op::Mean(a) => vec![a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Mat,
    lanes: usize,
    needs_grad: bool,
}

/// Weight gradients keyed by parameter id.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_param: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, param: usize) -> Option<&Mat> {
        self.by_param.get(param).and_then(Option::as_ref)
    }

    fn accumulate(&mut self, param: usize, g: Mat) {
        if self.by_param.len() <= param {
            self.by_param.resize(param + 1, None);
        }
        match &mut self.by_param[param] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

/// Append-only record of a forward computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn lanes(&self, v: Var) -> usize {
        self.nodes[v.0].lanes
    }

    /// Rows per lane.
    pub fn rows(&self, v: Var) -> usize {
        let n = &self.nodes[v.0];
        n.value.rows / n.lanes
    }

    /// The single entry of a 1x1 node's value lane.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    /// One lane of a node as a standalone matrix.
    pub fn lane_value(&self, v: Var, lane: usize) -> Mat {
        let n = self.rows(v);
        self.value(v).rows_slice(lane * n, (lane + 1) * n)
    }

    /// Plain constant leaf.
    pub fn input(&mut self, value: Mat) -> Var {
        self.push_leaf(Op::Input, value, 1, false)
    }

    /// Dual leaf for a batch of `(x, t)` rows, seeded with the unit tangent
    /// of each coordinate.
    pub fn dual_input(&mut self, points: &[[f64; 2]]) -> Var {
        let n = points.len();
        let mut m = Mat::zeros(DUAL_LANES * n, 2);
        for (i, p) in points.iter().enumerate() {
            m.set(i, 0, p[0]);
            m.set(i, 1, p[1]);
            m.set(X_LANE * n + i, 0, 1.0);
            m.set(T_LANE * n + i, 1, 1.0);
        }
        self.push_leaf(Op::Input, m, DUAL_LANES, false)
    }

    /// Trainable leaf. Gradients are reported under `id`.
    pub fn param(&mut self, id: usize, value: Mat) -> Var {
        self.push_leaf(Op::Param(id), value, 1, true)
    }

    fn push_leaf(&mut self, op: Op, value: Mat, lanes: usize, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            lanes,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let (value, lanes) = eval(&op, &self.nodes)?;
        let needs_grad = op.parents().iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            lanes,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// `x W + b`, bias applied to the value lane only.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        self.push(Op::Affine { x, w, b })
    }

    /// `[cos(2π x Bᵀ), sin(2π x Bᵀ)]` with a frozen frequency matrix `B`.
    pub fn fourier(&mut self, x: Var, freqs: Arc<Mat>) -> Result<Var> {
        self.push(Op::Fourier { x, freqs })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    /// Plain nodes only.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.push(Op::Scale(a, c))
    }

    /// Adds `c` to the value lane.
    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var> {
        self.push(Op::Offset(a, c))
    }

    pub fn map(&mut self, a: Var, f: Func) -> Result<Var> {
        self.push(Op::Map(a, f))
    }

    pub fn column(&mut self, a: Var, j: usize) -> Result<Var> {
        self.push(Op::Column(a, j))
    }

    /// Extracts one lane of a dual node as a plain node.
    pub fn lane(&mut self, a: Var, lane: usize) -> Result<Var> {
        self.push(Op::Lane(a, lane))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Mean(a))
    }

    /// Recomputes every node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Mat>> {
        let mut replayed: Vec<Node> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let (value, lanes) = match node.op {
                Op::Input | Op::Param(_) => (node.value.clone(), node.lanes),
                _ => eval(&node.op, &replayed)?,
            };
            replayed.push(Node {
                op: node.op.clone(),
                value,
                lanes,
                needs_grad: node.needs_grad,
            });
        }
        Ok(replayed.into_iter().map(|n| n.value).collect())
    }

    /// Reverse sweep from a plain 1x1 `loss`, returning the gradient for
    /// every parameter leaf it depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        if node.lanes != 1 || node.value.rows != 1 || node.value.cols != 1 {
            return Err(TapeError::NotScalar {
                rows: node.value.rows,
                cols: node.value.cols,
                lanes: node.lanes,
            });
        }
        let l = node.value.data[0];
        if !l.is_finite() {
            return Err(TapeError::NonFiniteLoss(l));
        }

        let mut adj: Vec<Option<Mat>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Mat::scalar(1.0));
        let mut grads = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backprop(node, g, &mut adj, &mut grads);
        }
        Ok(grads)
    }

    fn backprop(&self, node: &Node, g: Mat, adj: &mut [Option<Mat>], grads: &mut Gradients) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].needs_grad;
        match node.op {
            Op::Input => {}
            Op::Param(id) => grads.accumulate(id, g),
            Op::Affine { x, w, b } => {
                let xv = &nodes[x.0].value;
                let wv = &nodes[w.0].value;
                if wants(x) {
                    let slot = adj[x.0].get_or_insert_with(|| Mat::zeros(xv.rows, xv.cols));
                    matmul_bt_acc(&g, wv, slot);
                }
                if wants(w) {
                    let slot = adj[w.0].get_or_insert_with(|| Mat::zeros(wv.rows, wv.cols));
                    matmul_at_b_acc(xv, &g, slot);
                }
                if let Some(b) = b {
                    if wants(b) {
                        let n = g.rows / node.lanes;
                        let mut gb = Mat::zeros(1, g.cols);
                        for r in 0..n {
                            for (acc, v) in gb.data.iter_mut().zip(g.row(r)) {
                                *acc += v;
                            }
                        }
                        add_into(adj, b, gb);
                    }
                }
            }
            Op::Fourier { x, ref freqs } => {
                if !wants(x) {
                    return;
                }
                let xv = &nodes[x.0].value;
                let lanes = node.lanes;
                let n = xv.rows / lanes;
                let m = freqs.rows;
                let z = matmul_bt(xv, freqs).map(|v| TWO_PI * v);
                let mut gz = Mat::zeros(z.rows, m);
                for r in 0..n {
                    for j in 0..m {
                        let z0 = z.get(r, j);
                        let (s, c) = z0.sin_cos();
                        let mut acc = -g.get(r, j) * s + g.get(r, m + j) * c;
                        for d in 1..lanes {
                            let rd = d * n + r;
                            let zd = z.get(rd, j);
                            let (gc, gs) = (g.get(rd, j), g.get(rd, m + j));
                            acc += (-gc * c - gs * s) * zd;
                            gz.set(rd, j, -gc * s + gs * c);
                        }
                        gz.set(r, j, acc);
                    }
                }
                let mut gx = matmul(&gz, freqs);
                for v in gx.data.iter_mut() {
                    *v *= TWO_PI;
                }
                add_into(adj, x, gx);
            }
            Op::Add(a, b) => {
                if wants(a) {
                    add_into(adj, a, g.clone());
                }
                if wants(b) {
                    add_into(adj, b, g);
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    add_into(adj, a, g.clone());
                }
                if wants(b) {
                    add_into(adj, b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let lanes = node.lanes;
                if wants(a) {
                    add_into(adj, a, mul_adjoint(&g, bv, lanes));
                }
                if wants(b) {
                    add_into(adj, b, mul_adjoint(&g, av, lanes));
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if wants(a) {
                    let ga = Mat::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&bv.data).map(|(g, b)| g / b).collect(),
                    );
                    add_into(adj, a, ga);
                }
                if wants(b) {
                    let gb = Mat::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(av.data.iter().zip(&bv.data))
                            .map(|(g, (a, b))| -g * a / (b * b))
                            .collect(),
                    );
                    add_into(adj, b, gb);
                }
            }
            Op::Scale(a, c) => add_into(adj, a, g.map(|v| c * v)),
            Op::Offset(a, _) => add_into(adj, a, g),
            Op::Map(a, f) => {
                let av = &nodes[a.0].value;
                let y = &node.value;
                let lanes = node.lanes;
                let n = av.rows / lanes;
                let cols = av.cols;
                let mut ga = Mat::zeros(av.rows, cols);
                for idx in 0..n * cols {
                    let v = av.data[idx];
                    let (d1, d2) = f.derivatives(v, y.data[idx]);
                    let mut acc = g.data[idx] * d1;
                    for d in 1..lanes {
                        let k = d * n * cols + idx;
                        acc += g.data[k] * d2 * av.data[k];
                        ga.data[k] = g.data[k] * d1;
                    }
                    ga.data[idx] = acc;
                }
                add_into(adj, a, ga);
            }
            Op::Column(a, j) => {
                let av = &nodes[a.0].value;
                let mut ga = Mat::zeros(av.rows, av.cols);
                for r in 0..av.rows {
                    ga.set(r, j, g.data[r]);
                }
                add_into(adj, a, ga);
            }
            Op::Lane(a, lane) => {
                let av = &nodes[a.0].value;
                let n = g.rows;
                let mut ga = Mat::zeros(av.rows, av.cols);
                ga.data[lane * n * av.cols..(lane + 1) * n * av.cols].copy_from_slice(&g.data);
                add_into(adj, a, ga);
            }
            Op::Sum(a) | Op::Mean(a) => {
                let av = &nodes[a.0].value;
                let mut s = g.data[0];
                if matches!(node.op, Op::Mean(_)) {
                    s /= av.data.len() as f64;
                }
                add_into(
                    adj,
                    a,
                    Mat::from_vec(av.rows, av.cols, vec![s; av.data.len()]),
                );
            }
        }
    }
}

fn add_into(adj: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Adjoint of one factor of a lane-wise product given the other factor.
fn mul_adjoint(g: &Mat, other: &Mat, lanes: usize) -> Mat {
    let len = g.data.len() / lanes;
    let mut out = Mat::zeros(g.rows, g.cols);
    for idx in 0..len {
        let o0 = other.data[idx];
        let mut acc = g.data[idx] * o0;
        for d in 1..lanes {
            let k = d * len + idx;
            acc += g.data[k] * other.data[k];
            out.data[k] = g.data[k] * o0;
        }
        out.data[idx] = acc;
    }
    out
}

fn shape_err(op: &'static str, detail: String) -> TapeError {
    TapeError::Shape { op, detail }
}

fn eval(op: &Op, nodes: &[Node]) -> Result<(Mat, usize)> {
    let get = |v: Var| &nodes[v.0];
    match *op {
        Op::Input | Op::Param(_) => unreachable!("leaves are pushed directly"),
        Op::Affine { x, w, b } => {
            let (xn, wn) = (get(x), get(w));
            if wn.lanes != 1 {
                return Err(TapeError::Unsupported {
                    op: "affine",
                    reason: "weight matrix must be a plain node".into(),
                });
            }
            if xn.value.cols != wn.value.rows {
                return Err(shape_err(
                    "affine",
                    format!(
                        "x has {} columns, W has {} rows",
                        xn.value.cols, wn.value.rows
                    ),
                ));
            }
            let mut y = matmul(&xn.value, &wn.value);
            if let Some(b) = b {
                let bn = get(b);
                if bn.lanes != 1 || bn.value.rows != 1 || bn.value.cols != y.cols {
                    return Err(shape_err(
                        "affine",
                        "bias must be a plain 1 x out row".into(),
                    ));
                }
                let n = y.rows / xn.lanes;
                for r in 0..n {
                    let row = &mut y.data[r * y.cols..(r + 1) * y.cols];
                    for (v, bb) in row.iter_mut().zip(&bn.value.data) {
                        *v += bb;
                    }
                }
            }
            Ok((y, xn.lanes))
        }
        Op::Fourier { x, ref freqs } => {
            let xn = get(x);
            if xn.value.cols != freqs.cols {
                return Err(shape_err(
                    "fourier",
                    format!("x has {} columns, B has {}", xn.value.cols, freqs.cols),
                ));
            }
            let lanes = xn.lanes;
            let n = xn.value.rows / lanes;
            let m = freqs.rows;
            let z = matmul_bt(&xn.value, freqs);
            let mut y = Mat::zeros(xn.value.rows, 2 * m);
            for r in 0..n {
                for j in 0..m {
                    let z0 = TWO_PI * z.get(r, j);
                    let (s, c) = z0.sin_cos();
                    y.set(r, j, c);
                    y.set(r, m + j, s);
                    for d in 1..lanes {
                        let rd = d * n + r;
                        let zd = TWO_PI * z.get(rd, j);
                        y.set(rd, j, -s * zd);
                        y.set(rd, m + j, c * zd);
                    }
                }
            }
            Ok((y, lanes))
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            let (an, bn) = (get(a), get(b));
            same_layout(op.name(), an, bn)?;
            let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
            let data = an
                .value
                .data
                .iter()
                .zip(&bn.value.data)
                .map(|(x, y)| x + sign * y)
                .collect();
            Ok((Mat::from_vec(an.value.rows, an.value.cols, data), an.lanes))
        }
        Op::Mul(a, b) => {
            let (an, bn) = (get(a), get(b));
            same_layout("mul", an, bn)?;
            let lanes = an.lanes;
            let len = an.value.data.len() / lanes;
            let (av, bv) = (&an.value.data, &bn.value.data);
            let mut out = Mat::zeros(an.value.rows, an.value.cols);
            for idx in 0..len {
                out.data[idx] = av[idx] * bv[idx];
                for d in 1..lanes {
                    let k = d * len + idx;
                    out.data[k] = av[k] * bv[idx] + av[idx] * bv[k];
                }
            }
            Ok((out, lanes))
        }
        Op::Div(a, b) => {
            let (an, bn) = (get(a), get(b));
            if an.lanes != 1 || bn.lanes != 1 {
                return Err(TapeError::Unsupported {
                    op: "div",
                    reason: "division of dual nodes is not provided; extract lanes first".into(),
                });
            }
            same_layout("div", an, bn)?;
            let data = an
                .value
                .data
                .iter()
                .zip(&bn.value.data)
                .map(|(x, y)| x / y)
                .collect();
            Ok((Mat::from_vec(an.value.rows, an.value.cols, data), 1))
        }
        Op::Scale(a, c) => {
            let an = get(a);
            Ok((an.value.map(|v| c * v), an.lanes))
        }
        Op::Offset(a, c) => {
            let an = get(a);
            let mut y = an.value.clone();
            let len = y.data.len() / an.lanes;
            for v in &mut y.data[..len] {
                *v += c;
            }
            Ok((y, an.lanes))
        }
        Op::Map(a, f) => {
            let an = get(a);
            if let Func::Powf(_) = f {
                if an
                    .value
                    .data
                    .iter()
                    .take(an.value.data.len() / an.lanes)
                    .any(|&v| v <= 0.0)
                {
                    return Err(TapeError::Unsupported {
                        op: "powf",
                        reason: "powf is only provided for positive arguments".into(),
                    });
                }
            }
            let lanes = an.lanes;
            let len = an.value.data.len() / lanes;
            let av = &an.value.data;
            let mut out = Mat::zeros(an.value.rows, an.value.cols);
            for idx in 0..len {
                let v = av[idx];
                let y = f.value(v);
                out.data[idx] = y;
                if lanes > 1 {
                    let (d1, _) = f.derivatives(v, y);
                    for d in 1..lanes {
                        let k = d * len + idx;
                        out.data[k] = d1 * av[k];
                    }
                }
            }
            Ok((out, lanes))
        }
        Op::Column(a, j) => {
            let an = get(a);
            if j >= an.value.cols {
                return Err(shape_err(
                    "column",
                    format!("column {j} of a {}-column node", an.value.cols),
                ));
            }
            let data = (0..an.value.rows).map(|r| an.value.get(r, j)).collect();
            Ok((Mat::from_vec(an.value.rows, 1, data), an.lanes))
        }
        Op::Lane(a, lane) => {
            let an = get(a);
            if lane >= an.lanes {
                return Err(shape_err(
                    "lane",
                    format!("lane {lane} of a {}-lane node", an.lanes),
                ));
            }
            let n = an.value.rows / an.lanes;
            Ok((an.value.rows_slice(lane * n, (lane + 1) * n), 1))
        }
        Op::Sum(a) | Op::Mean(a) => {
            let an = get(a);
            if an.lanes != 1 {
                return Err(TapeError::Unsupported {
                    op: op.name(),
                    reason: "reductions apply to plain nodes; extract lanes first".into(),
                });
            }
            let mut s: f64 = an.value.data.iter().sum();
            if matches!(op, Op::Mean(_)) {
                s /= an.value.data.len() as f64;
            }
            Ok((Mat::scalar(s), 1))
        }
    }
}

fn same_layout(op: &'static str, a: &Node, b: &Node) -> Result<()> {
    if a.lanes != b.lanes || a.value.shape() != b.value.shape() {
        return Err(shape_err(
            op,
            format!(
                "{:?} x{} vs {:?} x{}",
                a.value.shape(),
                a.lanes,
                b.value.shape(),
                b.lanes
            ),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(0, Mat::scalar(3.0));
        let l = tape.mul(w, w).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(0).unwrap().data[0], 6.0);
    }

    #[test]
    fn rejects_non_scalar_and_non_finite_losses() {
        let mut tape = Tape::new();
        let w = tape.param(0, Mat::from_vec(1, 2, vec![1.0, 2.0]));
        assert!(matches!(tape.backward(w), Err(TapeError::NotScalar { .. })));
        let mut tape = Tape::new();
        let w = tape.param(0, Mat::scalar(f64::INFINITY));
        let l = tape.mul(w, w).unwrap();
        assert!(matches!(tape.backward(l), Err(TapeError::NonFiniteLoss(_))));
    }

    #[test]
    fn unsupported_primitives_fail_at_construction() {
        assert!(Func::parse("gelu").is_err());
        let mut tape = Tape::new();
        let x = tape.dual_input(&[[1.0, 2.0]]);
        let y = tape.dual_input(&[[3.0, 4.0]]);
        assert!(matches!(
            tape.div(x, y),
            Err(TapeError::Unsupported { op: "div", .. })
        ));
        assert!(tape.sum(x).is_err());
    }

    #[test]
    fn replay_is_bitwise() {
        let mut tape = Tape::new();
        let x = tape.dual_input(&[[0.3, 0.7], [0.1, 0.9]]);
        let w = tape.param(0, Mat::from_vec(2, 3, vec![0.2, -0.5, 1.1, 0.7, 0.3, -0.9]));
        let b = tape.param(1, Mat::from_vec(1, 3, vec![0.1, 0.0, -0.2]));
        let y = tape.affine(x, w, Some(b)).unwrap();
        let y = tape.map(y, Func::Tanh).unwrap();
        let c = tape.column(y, 1).unwrap();
        let d = tape.lane(c, X_LANE).unwrap();
        let s = tape.map(d, Func::Square).unwrap();
        let l = tape.mean(s).unwrap();
        let replayed = tape.replay().unwrap();
        for (i, v) in replayed.iter().enumerate() {
            assert_eq!(v, tape.value(Var(i)));
        }
        let _ = l;
    }

    #[test]
    fn backward_visits_only_reachable_nodes() {
        let mut tape = Tape::new();
        let a = tape.param(0, Mat::scalar(2.0));
        let b = tape.param(1, Mat::scalar(5.0));
        let l = tape.mul(a, a).unwrap();
        let _unused = tape.mul(b, b).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(0).unwrap().data[0], 4.0);
        assert!(g.get(1).is_none());
    }
}
