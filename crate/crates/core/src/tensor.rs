//! Row-major f64 matrices and the handful of GEMM shapes the model needs.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Clone, Copy)]
enum Layout {
    Plain,
    Transposed,
}

// c = beta * c + a' * b' where the primes apply the requested transposition.
fn gemm(a: &Matrix, la: Layout, b: &Matrix, lb: Layout, c: &mut Matrix, beta: f64) {
    let (m, k, rsa, csa) = match la {
        Layout::Plain => (a.rows, a.cols, a.cols as isize, 1),
        Layout::Transposed => (a.cols, a.rows, 1, a.cols as isize),
    };
    let (kb, n, rsb, csb) = match lb {
        Layout::Plain => (b.rows, b.cols, b.cols as isize, 1),
        Layout::Transposed => (b.cols, b.rows, 1, b.cols as isize),
    };
    assert_eq!(k, kb, "inner dimensions");
    assert_eq!((c.rows, c.cols), (m, n), "output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.data.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: dimensions and strides are checked against each buffer above;
    // `c` is borrowed mutably and cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
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

/// a · b
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm(a, Layout::Plain, b, Layout::Plain, &mut c, 0.0);
    c
}

/// a · bᵀ
pub fn matmul_bt(a: &Matrix, b: &Matrix) -> Matrix {
    let mut c = Matrix::zeros(a.rows, b.rows);
    gemm(a, Layout::Plain, b, Layout::Transposed, &mut c, 0.0);
    c
}

/// acc += aᵀ · b
pub fn add_matmul_at(acc: &mut Matrix, a: &Matrix, b: &Matrix) {
    gemm(a, Layout::Transposed, b, Layout::Plain, acc, 1.0);
}

/// Adds `bias` to every row.
pub fn add_row_bias(m: &mut Matrix, bias: &[f64]) {
    for r in 0..m.rows {
        for (x, b) in m.row_mut(r).iter_mut().zip(bias) {
            *x += b;
        }
    }
}

/// acc += column sums of `m`.
pub fn add_col_sums(acc: &mut [f64], m: &Matrix) {
    for r in 0..m.rows {
        for (a, x) in acc.iter_mut().zip(m.row(r)) {
            *a += x;
        }
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
    let lse = max + sum.ln();
    row.iter().map(|x| x - lse).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
