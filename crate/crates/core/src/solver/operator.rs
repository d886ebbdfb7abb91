use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A real linear map `R^cols -> R^rows` with its adjoint.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_adjoint(&self, r: &[f64], out: &mut [f64]);

    fn all_finite(&self) -> bool {
        true
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply(x, out)
    }
    fn apply_adjoint(&self, r: &[f64], out: &mut [f64]) {
        (**self).apply_adjoint(r, out)
    }
    fn all_finite(&self) -> bool {
        (**self).all_finite()
    }
}

/// Column-major dense matrix operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let m = self.matrix.nrows();
        let data = self.matrix.as_slice();
        out.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = &data[j * m..(j + 1) * m];
            for (o, a) in out.iter_mut().zip(col) {
                *o += xj * a;
            }
        }
    }

    fn apply_adjoint(&self, r: &[f64], out: &mut [f64]) {
        let m = self.matrix.nrows();
        let data = self.matrix.as_slice();
        for (j, o) in out.iter_mut().enumerate() {
            let col = &data[j * m..(j + 1) * m];
            *o = col.iter().zip(r).map(|(a, b)| a * b).sum();
        }
    }

    fn all_finite(&self) -> bool {
        self.matrix.iter().all(|v| v.is_finite())
    }
}

/// Largest eigenvalue of `A^T A` by power iteration.
pub fn spectral_norm_sq<O: LinearOperator + ?Sized>(op: &O, max_iter: usize, rel_tol: f64) -> f64 {
    let n = op.ncols();
    if n == 0 || op.nrows() == 0 {
        return 0.0;
    }
    // deterministic start with no special alignment
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i as f64) * 0.7).sin()).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    let mut av = vec![0.0; op.nrows()];
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        op.apply(&v, &mut av);
        op.apply_adjoint(&av, &mut w);
        let next = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if next == 0.0 {
            return 0.0;
        }
        v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / next);
        let done = (next - estimate).abs() <= rel_tol * next;
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_matches_nalgebra() {
        let m = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let op = DenseOperator::new(m.clone()).unwrap();
        let x = [0.5, -1.0, 0.0, 2.0];
        let mut out = [0.0; 3];
        op.apply(&x, &mut out);
        let expected = &m * nalgebra::DVector::from_row_slice(&x);
        for (a, b) in out.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let r = [1.0, -2.0, 0.5];
        let mut back = [0.0; 4];
        op.apply_adjoint(&r, &mut back);
        let expected = m.transpose() * nalgebra::DVector::from_row_slice(&r);
        for (a, b) in back.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 0.5]));
        let op = DenseOperator::new(m).unwrap();
        let l = spectral_norm_sq(&op, 200, 1e-12);
        assert!((l - 9.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_nan() {
        assert!(DenseOperator::new(DMatrix::from_element(1, 1, f64::NAN)).is_err());
    }
}
