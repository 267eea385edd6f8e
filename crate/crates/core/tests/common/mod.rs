#![allow(dead_code)]

use nalgebra::DMatrix;
use regiht::linops::{CsrMatrix, DenseMatrix, DenseVector};
use regiht::objectives::LeastSquares;
use regiht::rng::NormalSampler;

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.n_rows(), m.n_cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

pub fn random_dense(normals: &mut NormalSampler, m: usize, n: usize) -> DenseMatrix {
    DenseMatrix::new(m, n, normals.vec(m * n)).unwrap()
}

pub fn random_ls(normals: &mut NormalSampler, m: usize, n: usize) -> LeastSquares {
    let a = CsrMatrix::from_dense(m, n, &normals.vec(m * n)).unwrap();
    LeastSquares::new(a, DenseVector::new(normals.vec(m)).unwrap()).unwrap()
}

/// Symmetric PSD matrix with eigenvalues drawn from `[0, 1]`.
pub fn random_contraction(normals: &mut NormalSampler, d: usize) -> DenseMatrix {
    use rand::Rng;
    let q = DMatrix::from_vec(d, d, normals.vec(d * d)).qr().q();
    let lam: Vec<f64> = (0..d).map(|_| normals.rng().random_range(0.0..=1.0)).collect();
    let w = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lam)) * q.transpose();
    from_na(&((&w + w.transpose()) * 0.5))
}

/// Central-difference gradient error relative to `max(1, ||grad||)`.
pub fn fd_error(value: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let d = (value(&xp) - value(&xm)) / (2.0 * h);
        num += (d - grad[i]).powi(2);
        den += grad[i] * grad[i];
    }
    num.sqrt() / den.sqrt().max(1.0)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
