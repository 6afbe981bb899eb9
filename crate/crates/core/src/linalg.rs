//! Dense symmetric positive-definite solves for the small normal-equation
//! systems used by motion fitting and missing-target recovery.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] += v;
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky.
///
/// Returns `None` when a pivot falls below `rel_tol` times the largest
/// diagonal entry, i.e. the system is singular for practical purposes.
pub fn solve_spd(a: &SquareMatrix, b: &[f64], rel_tol: f64) -> Option<Vec<f64>> {
    let n = a.dim();
    assert_eq!(b.len(), n, "right-hand side length must match matrix");
    if n == 0 {
        return Some(Vec::new());
    }
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0f64, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let floor = rel_tol * scale;

    let mut l = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= floor {
            return None;
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }

    // forward then backward substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    Some(x)
}
