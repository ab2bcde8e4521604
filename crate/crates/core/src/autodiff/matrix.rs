//! Minimal row-major matrix backed by `matrixmultiply`.
//!
//! Each output element of a product accumulates over the inner dimension
//! in an order that depends only on that dimension, so a row's result does
//! not depend on how many other rows share the call.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `start..end` as a new matrix.
    pub fn rows_slice(&self, start: usize, end: usize) -> Mat {
        Mat::from_vec(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy)]
enum Layout {
    Normal,
    Transposed,
}

/// `c = alpha * op(a) * op(b) + beta * c` with the shapes checked.
fn gemm(alpha: f64, a: &Mat, la: Layout, b: &Mat, lb: Layout, beta: f64, c: &mut Mat) {
    let (m, k, rsa, csa) = match la {
        Layout::Normal => (a.rows, a.cols, a.cols as isize, 1),
        Layout::Transposed => (a.cols, a.rows, 1, a.cols as isize),
    };
    let (kb, n, rsb, csb) = match lb {
        Layout::Normal => (b.rows, b.cols, b.cols as isize, 1),
        Layout::Transposed => (b.cols, b.rows, 1, b.cols as isize),
    };
    assert_eq!(k, kb, "inner dimensions differ");
    assert_eq!((c.rows, c.cols), (m, n), "output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the pointers come from live slices whose extents match the
    // shapes and strides passed along; `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// `a * b`
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut c = Mat::zeros(a.rows, b.cols);
    gemm(1.0, a, Layout::Normal, b, Layout::Normal, 0.0, &mut c);
    c
}

/// `a * bᵀ`
pub fn matmul_bt(a: &Mat, b: &Mat) -> Mat {
    let mut c = Mat::zeros(a.rows, b.rows);
    gemm(1.0, a, Layout::Normal, b, Layout::Transposed, 0.0, &mut c);
    c
}

/// `c += aᵀ * b`
pub fn matmul_at_b_acc(a: &Mat, b: &Mat, c: &mut Mat) {
    gemm(1.0, a, Layout::Transposed, b, Layout::Normal, 1.0, c);
}

/// `c += a * bᵀ`
pub fn matmul_bt_acc(a: &Mat, b: &Mat, c: &mut Mat) {
    gemm(1.0, a, Layout::Normal, b, Layout::Transposed, 1.0, c);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        let mut c = Mat::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for k in 0..a.cols {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    fn filled(rows: usize, cols: usize, seed: f64) -> Mat {
        let data = (0..rows * cols)
            .map(|i| ((i as f64 + seed) * 0.731).sin())
            .collect();
        Mat::from_vec(rows, cols, data)
    }

    #[test]
    fn products_match_naive() {
        let a = filled(7, 5, 0.3);
        let b = filled(5, 3, 1.7);
        let c = matmul(&a, &b);
        let r = naive(&a, &b);
        for (x, y) in c.data.iter().zip(&r.data) {
            assert!((x - y).abs() < 1e-12);
        }
        let bt = Mat::from_vec(3, 5, (0..15).map(|i| b.get(i % 5, i / 5)).collect());
        let c2 = matmul_bt(&a, &bt);
        for (x, y) in c2.data.iter().zip(&r.data) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut acc = Mat::zeros(5, 3);
        matmul_at_b_acc(&a, &c, &mut acc);
        let r2 = naive(&a.clone_transposed(), &c);
        for (x, y) in acc.data.iter().zip(&r2.data) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut acc2 = Mat::zeros(7, 5);
        matmul_bt_acc(&c, &b, &mut acc2);
        let r3 = naive(&c, &b.clone_transposed());
        for (x, y) in acc2.data.iter().zip(&r3.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn row_results_do_not_depend_on_batch_size() {
        let a = filled(300, 96, 0.1);
        let w = filled(96, 64, 2.2);
        let full = matmul(&a, &w);
        for r in [0, 1, 17, 299] {
            let single = matmul(&a.rows_slice(r, r + 1), &w);
            assert_eq!(single.data, full.row(r).to_vec());
        }
    }

    impl Mat {
        fn clone_transposed(&self) -> Mat {
            let mut t = Mat::zeros(self.cols, self.rows);
            for i in 0..self.rows {
                for j in 0..self.cols {
                    t.set(j, i, self.get(i, j));
                }
            }
            t
        }
    }
}
