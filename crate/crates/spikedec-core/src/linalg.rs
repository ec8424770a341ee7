//! Small dense matrices and the few factorizations the solvers need.
//!
//! Problem sizes here are tiny (a handful of spikes, so matrices of order a
//! few dozen at most); plain Gaussian elimination with partial pivoting is
//! entirely adequate and keeps the dependency surface flat.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular or numerically rank-deficient (pivot {pivot:.3e} at step {step})")]
    RankDeficient { step: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::default(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// `max_i sum_j |m[i][j] - I[i][j]|`: the operator infinity norm of `M - I`,
/// complex entries contributing their modulus.
pub fn inf_norm_minus_identity(m: &Mat<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.rows() {
        let mut row = 0.0;
        for j in 0..m.cols() {
            let mut v = m[(i, j)];
            if i == j {
                v -= Complex64::new(1.0, 0.0);
            }
            row += v.norm();
        }
        worst = worst.max(row);
    }
    worst
}

/// Solve `A x = b` for complex square `A` by Gaussian elimination with
/// partial pivoting. `A` and `b` are consumed as working storage.
pub fn solve_complex(mut a: Mat<Complex64>, mut b: Vec<Complex64>) -> Result<Vec<Complex64>, LinalgError> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "solve_complex: A is {}x{}, b has length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let scale: f64 = a.data().iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    for k in 0..n {
        let (mut pivot_row, mut pivot_mag) = (k, a[(k, k)].norm());
        for i in k + 1..n {
            let mag = a[(i, k)].norm();
            if mag > pivot_mag {
                pivot_row = i;
                pivot_mag = mag;
            }
        }
        if pivot_mag < 1e-13 * scale {
            return Err(LinalgError::RankDeficient { step: k, pivot: pivot_mag });
        }
        if pivot_row != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(pivot_row, j)];
                a[(pivot_row, j)] = tmp;
            }
            b.swap(k, pivot_row);
        }
        let inv = a[(k, k)].inv();
        for i in k + 1..n {
            let factor = a[(i, k)] * inv;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in k..n {
                let akj = a[(k, j)];
                a[(i, j)] -= factor * akj;
            }
            let bk = b[k];
            b[i] -= factor * bk;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc -= a[(k, j)] * x[j];
        }
        x[k] = acc * a[(k, k)].inv();
    }
    Ok(x)
}

/// Invert a real square matrix by Gauss-Jordan elimination with partial
/// pivoting.
pub fn invert_real(a: &Mat<f64>) -> Result<Mat<f64>, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "invert_real: matrix is {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale: f64 = a.data().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let mut work = a.clone();
    let mut inv = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        inv[(i, i)] = 1.0;
    }
    for k in 0..n {
        let (mut pivot_row, mut pivot_mag) = (k, work[(k, k)].abs());
        for i in k + 1..n {
            let mag = work[(i, k)].abs();
            if mag > pivot_mag {
                pivot_row = i;
                pivot_mag = mag;
            }
        }
        if pivot_mag < 1e-13 * scale {
            return Err(LinalgError::RankDeficient { step: k, pivot: pivot_mag });
        }
        if pivot_row != k {
            for j in 0..n {
                let tmp = work[(k, j)];
                work[(k, j)] = work[(pivot_row, j)];
                work[(pivot_row, j)] = tmp;
                let tmp = inv[(k, j)];
                inv[(k, j)] = inv[(pivot_row, j)];
                inv[(pivot_row, j)] = tmp;
            }
        }
        let pivot_inv = 1.0 / work[(k, k)];
        for j in 0..n {
            work[(k, j)] *= pivot_inv;
            inv[(k, j)] *= pivot_inv;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            let factor = work[(i, k)];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                let wkj = work[(k, j)];
                work[(i, j)] -= factor * wkj;
                let ikj = inv[(k, j)];
                inv[(i, j)] -= factor * ikj;
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_solve_round_trip() {
        let a = Mat::from_fn(3, 3, |i, j| {
            Complex64::new((i * 3 + j) as f64 + if i == j { 5.0 } else { 0.0 }, (i as f64) - (j as f64))
        });
        let x_true = vec![
            Complex64::new(1.0, -2.0),
            Complex64::new(0.5, 0.25),
            Complex64::new(-3.0, 1.0),
        ];
        let mut b = vec![Complex64::new(0.0, 0.0); 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += a[(i, j)] * x_true[j];
            }
        }
        let x = solve_complex(a, b).unwrap();
        for (got, want) in x.iter().zip(&x_true) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = Mat::from_fn(2, 2, |i, _| Complex64::new(i as f64 + 1.0, 0.0));
        let err = solve_complex(a, vec![Complex64::new(1.0, 0.0); 2]).unwrap_err();
        assert!(matches!(err, LinalgError::RankDeficient { .. }));
    }

    #[test]
    fn real_inverse_round_trip() {
        let a = Mat::from_fn(4, 4, |i, j| {
            if i == j {
                4.0 + i as f64
            } else {
                1.0 / (1.0 + (i as f64 - j as f64).abs())
            }
        });
        let inv = invert_real(&a).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += a[(i, k)] * inv[(k, j)];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((acc - expect).abs() < 1e-12);
            }
        }
    }
}
