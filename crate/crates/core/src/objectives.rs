//! Convex objectives with gradients, curvature estimates and dense minimizers.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linops::{dot, CsrMatrix, DenseVector, LinearMap};

pub const DENSE_OPTIMUM_MAX_ITERS: usize = 100_000;

pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn value_grad(&self, x: &[f64]) -> Result<(f64, DenseVector)>;

    fn gradient(&self, x: &[f64]) -> Result<DenseVector> {
        Ok(self.value_grad(x)?.1)
    }

    /// Upper bound on the largest Hessian eigenvalue.
    fn beta_estimate(&self) -> f64;

    /// Lower bound on the smallest Hessian eigenvalue, when one is available.
    fn alpha_estimate(&self) -> Option<f64>;

    fn kappa(&self) -> Option<f64> {
        self.alpha_estimate()
            .filter(|a| *a > 0.0)
            .map(|a| self.beta_estimate() / a)
    }

    /// Minimizer of the unconstrained problem, to gradient norm `tol`.
    fn dense_optimum(&self, tol: f64) -> Result<DenseVector> {
        self.dense_optimum_from(&vec![0.0; self.dim()], tol)
    }

    fn dense_optimum_from(&self, x0: &[f64], tol: f64) -> Result<DenseVector> {
        gradient_descent_backtracking(self, x0, tol, DENSE_OPTIMUM_MAX_ITERS)
    }
}

fn check_len(expected: usize, x: &[f64]) -> Result<()> {
    Error::check_dim(expected, x.len())
}

fn finite_grad(g: Vec<f64>) -> Result<DenseVector> {
    DenseVector::new(g).map_err(|_| Error::NonFinite("gradient"))
}

pub(crate) fn gradient_descent_backtracking<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<DenseVector> {
    if tol <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }
    check_len(obj.dim(), x0)?;
    let mut x = x0.to_vec();
    let (mut f, mut g) = obj.value_grad(&x)?;
    let mut step = 1.0 / obj.beta_estimate().max(f64::MIN_POSITIVE);
    for _ in 0..max_iters {
        let gn2 = g.norm_sq();
        if gn2.sqrt() <= tol {
            return Ok(DenseVector::from_vec_unchecked(x));
        }
        loop {
            let trial: Vec<f64> = x.iter().zip(g.iter()).map(|(xi, gi)| xi - step * gi).collect();
            let ft = obj.value(&trial)?;
            let allowance = 4.0 * f64::EPSILON * f.abs();
            if ft <= f - 0.5 * step * gn2 + allowance || step < 1e-300 {
                x = trial;
                break;
            }
            step *= 0.5;
        }
        (f, g) = obj.value_grad(&x)?;
        step *= 1.5;
    }
    let residual = g.norm();
    if residual <= tol {
        return Ok(DenseVector::from_vec_unchecked(x));
    }
    Err(Error::NotConverged {
        what: "dense optimum",
        iterations: max_iters,
        residual,
        best: Some(Box::new(DenseVector::from_vec_unchecked(x))),
    })
}

/// Solves `(A^T A) x = rhs` by conjugate gradients from `x0`, stopping when the
/// residual norm falls to `tol`.
fn cg_normal<A: LinearMap + ?Sized>(
    a: &A,
    rhs: &[f64],
    x0: &[f64],
    tol: f64,
    max_iters: usize,
) -> std::result::Result<Vec<f64>, (Vec<f64>, f64)> {
    let apply = |v: &[f64]| a.mul_transpose_vec(&a.mul_vec(v));
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iters {
        if rr.sqrt() <= tol {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol {
        Ok(x)
    } else {
        Err((x, rr.sqrt()))
    }
}

/// Largest eigenvalue of `A^T A` by power iteration.
pub(crate) fn gram_top_eigenvalue<A: LinearMap + ?Sized>(a: &A) -> f64 {
    let n = a.n_cols();
    if n == 0 || a.n_rows() == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 97) as f64).collect();
    let mut lam = 0.0;
    for _ in 0..1000 {
        let nv = dot(&v, &v).sqrt();
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let w = a.mul_transpose_vec(&a.mul_vec(&v));
        let next = dot(&v, &w);
        v = w;
        if (next - lam).abs() <= 1e-12 * next.abs() {
            lam = next;
            break;
        }
        lam = next;
    }
    lam
}

/// Smallest eigenvalue of `A^T A` by inverse iteration with CG inner solves.
fn gram_bottom_eigenvalue<A: LinearMap + ?Sized>(a: &A) -> Option<f64> {
    let n = a.n_cols();
    if n == 0 || a.n_rows() < n {
        return None;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.013 * ((i * 104729) % 89) as f64).collect();
    let mut mu = f64::INFINITY;
    for _ in 0..300 {
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let y = cg_normal(a, &v, &vec![0.0; n], 1e-12, 20 * n + 100).ok()?;
        let ry = dot(&v, &y);
        if ry <= 0.0 {
            return None;
        }
        let next = 1.0 / ry;
        v = y;
        if (next - mu).abs() <= 1e-10 * next {
            mu = next;
            break;
        }
        mu = next;
    }
    let gv = a.mul_transpose_vec(&a.mul_vec(&v));
    let rq = dot(&v, &gv) / dot(&v, &v);
    Some(rq.min(mu))
}

/// `f(x) = 1/2 ||Ax - b||^2`.
#[derive(Debug)]
pub struct LeastSquares<A: LinearMap = CsrMatrix> {
    a: A,
    b: DenseVector,
    beta: OnceLock<f64>,
    alpha: OnceLock<Option<f64>>,
}

impl<A: LinearMap> LeastSquares<A> {
    pub fn new(a: A, b: DenseVector) -> Result<Self> {
        check_len(a.n_rows(), &b)?;
        Ok(LeastSquares {
            a,
            b,
            beta: OnceLock::new(),
            alpha: OnceLock::new(),
        })
    }

    /// Replaces the power-iteration estimate of the smoothness constant.
    pub fn with_beta(self, beta: f64) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(beta);
        LeastSquares { beta: cell, ..self }
    }

    /// Replaces the inverse-iteration estimate of the strong-convexity constant.
    pub fn with_alpha(self, alpha: Option<f64>) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(alpha);
        LeastSquares { alpha: cell, ..self }
    }

    pub fn design(&self) -> &A {
        &self.a
    }

    pub fn target(&self) -> &DenseVector {
        &self.b
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.a.n_cols(), x)?;
        let mut r = self.a.mul_vec(x);
        r.iter_mut().zip(self.b.iter()).for_each(|(ri, bi)| *ri -= bi);
        Ok(r)
    }
}

impl<A: LinearMap> Objective for LeastSquares<A> {
    fn dim(&self) -> usize {
        self.a.n_cols()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let r = self.residual(x)?;
        Ok(0.5 * dot(&r, &r))
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, DenseVector)> {
        let r = self.residual(x)?;
        let g = self.a.mul_transpose_vec(&r);
        Ok((0.5 * dot(&r, &r), finite_grad(g)?))
    }

    fn beta_estimate(&self) -> f64 {
        *self.beta.get_or_init(|| gram_top_eigenvalue(&self.a))
    }

    fn alpha_estimate(&self) -> Option<f64> {
        *self.alpha.get_or_init(|| {
            if self.a.n_cols() > 2000 {
                None
            } else {
                gram_bottom_eigenvalue(&self.a)
            }
        })
    }

    fn dense_optimum_from(&self, x0: &[f64], tol: f64) -> Result<DenseVector> {
        if tol <= 0.0 {
            return Err(Error::invalid("tolerance must be positive"));
        }
        check_len(self.dim(), x0)?;
        let rhs = self.a.mul_transpose_vec(&self.b);
        match cg_normal(&self.a, &rhs, x0, tol, DENSE_OPTIMUM_MAX_ITERS) {
            Ok(x) => DenseVector::new(x),
            Err((x, residual)) => Err(Error::NotConverged {
                what: "dense optimum",
                iterations: DENSE_OPTIMUM_MAX_ITERS,
                residual,
                best: DenseVector::new(x).ok().map(Box::new),
            }),
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss with labels in `{0, 1}` plus `rho/2 ||x||^2`.
#[derive(Debug)]
pub struct RidgeLogistic<A: LinearMap = CsrMatrix> {
    a: A,
    b: DenseVector,
    rho: f64,
    beta: OnceLock<f64>,
}

impl<A: LinearMap> RidgeLogistic<A> {
    pub fn new(a: A, b: DenseVector, rho: f64) -> Result<Self> {
        check_len(a.n_rows(), &b)?;
        if b.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::invalid("logistic labels must be 0 or 1"));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::invalid("rho must be finite and non-negative"));
        }
        Ok(RidgeLogistic {
            a,
            b,
            rho,
            beta: OnceLock::new(),
        })
    }

    pub fn design(&self) -> &A {
        &self.a
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

impl<A: LinearMap> Objective for RidgeLogistic<A> {
    fn dim(&self) -> usize {
        self.a.n_cols()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        check_len(self.dim(), x)?;
        let z = self.a.mul_vec(x);
        let loss: f64 = z.iter().zip(self.b.iter()).map(|(z, b)| softplus(*z) - b * z).sum();
        Ok(loss + 0.5 * self.rho * dot(x, x))
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, DenseVector)> {
        check_len(self.dim(), x)?;
        let z = self.a.mul_vec(x);
        let loss: f64 = z.iter().zip(self.b.iter()).map(|(z, b)| softplus(*z) - b * z).sum();
        let resid: Vec<f64> = z.iter().zip(self.b.iter()).map(|(z, b)| sigmoid(*z) - b).collect();
        let mut g = self.a.mul_transpose_vec(&resid);
        g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += self.rho * xi);
        Ok((loss + 0.5 * self.rho * dot(x, x), finite_grad(g)?))
    }

    fn beta_estimate(&self) -> f64 {
        *self.beta.get_or_init(|| 0.25 * gram_top_eigenvalue(&self.a) + self.rho)
    }

    fn alpha_estimate(&self) -> Option<f64> {
        (self.rho > 0.0).then_some(self.rho)
    }
}

/// A design matrix with centered, unit-norm columns, stored implicitly as the
/// original sparse matrix plus per-column shift and scale.
#[derive(Clone, Debug)]
pub struct PreprocessedDesign {
    raw: CsrMatrix,
    kept: Vec<usize>,
    dropped: Vec<usize>,
    mean: Vec<f64>,
    inv_scale: Vec<f64>,
}

impl PreprocessedDesign {
    pub fn kept_columns(&self) -> &[usize] {
        &self.kept
    }

    pub fn dropped_columns(&self) -> &[usize] {
        &self.dropped
    }

    /// Explicit form; generally dense because centering fills in zeros.
    pub fn to_csr(&self) -> CsrMatrix {
        let m = self.raw.n_rows();
        let k = self.kept.len();
        let mut entries = vec![0.0; m * k];
        for (r, row) in entries.chunks_mut(k.max(1)).enumerate().take(m) {
            for j in 0..k {
                row[j] = -self.mean[j] * self.inv_scale[j];
            }
            let (cols, vals) = self.raw.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if let Ok(j) = self.kept.binary_search(c) {
                    row[j] = (v - self.mean[j]) * self.inv_scale[j];
                }
            }
        }
        CsrMatrix::from_dense(m, k, &entries).expect("preprocessed entries are finite")
    }
}

impl LinearMap for PreprocessedDesign {
    fn n_rows(&self) -> usize {
        self.raw.n_rows()
    }

    fn n_cols(&self) -> usize {
        self.kept.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.kept.len());
        let mut scaled = vec![0.0; self.raw.n_cols()];
        let mut shift = 0.0;
        for (j, &c) in self.kept.iter().enumerate() {
            let xs = x[j] * self.inv_scale[j];
            scaled[c] = xs;
            shift += self.mean[j] * xs;
        }
        self.raw.apply(&scaled, out);
        out.iter_mut().for_each(|o| *o -= shift);
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(out.len(), self.kept.len());
        let full = self.raw.mul_transpose_vec(y);
        let total: f64 = y.iter().sum();
        for (j, &c) in self.kept.iter().enumerate() {
            out[j] = (full[c] - self.mean[j] * total) * self.inv_scale[j];
        }
    }
}

/// Centers every column and scales it to unit Euclidean norm. Columns that are
/// constant (zero after centering) are dropped and reported.
pub fn preprocess_design(a: &CsrMatrix) -> PreprocessedDesign {
    let m = a.n_rows();
    let n = a.n_cols();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    let mut raw_sq = vec![0.0; n];
    for r in 0..m {
        let (cols, vals) = a.row(r);
        for (c, v) in cols.iter().zip(vals) {
            sum[*c] += v;
            count[*c] += 1;
            raw_sq[*c] += v * v;
        }
    }
    let means: Vec<f64> = sum.iter().map(|s| if m > 0 { s / m as f64 } else { 0.0 }).collect();
    let mut centered_sq: Vec<f64> = (0..n)
        .map(|c| (m - count[c]) as f64 * means[c] * means[c])
        .collect();
    for r in 0..m {
        let (cols, vals) = a.row(r);
        for (c, v) in cols.iter().zip(vals) {
            let d = v - means[*c];
            centered_sq[*c] += d * d;
        }
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut mean = Vec::new();
    let mut inv_scale = Vec::new();
    for c in 0..n {
        let norm = centered_sq[c].sqrt();
        if norm > 1e-12 * raw_sq[c].sqrt().max(1.0) {
            kept.push(c);
            mean.push(means[c]);
            inv_scale.push(1.0 / norm);
        } else {
            dropped.push(c);
        }
    }
    PreprocessedDesign {
        raw: a.clone(),
        kept,
        dropped,
        mean,
        inv_scale,
    }
}

/// Restricted smoothness bound for a design with unit-norm columns: any
/// `s'`-sparse unit vector `u` has `||Au||^2 <= s'`.
pub fn smoothness_estimate(s_prime: usize) -> f64 {
    s_prime as f64
}

/// `max_i |central difference_i - grad_i| / (1 + |grad_i|)`.
pub fn gradient_check<O: Objective + ?Sized>(obj: &O, x: &[f64], h: f64) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::invalid("step must be positive"));
    }
    let g = obj.gradient(x)?;
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = obj.value(&probe)?;
        probe[i] = x[i] - h;
        let fm = obj.value(&probe)?;
        probe[i] = x[i];
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
    }
    Ok(worst)
}
