use crate::error::{Error, Result};
use crate::linops::{DenseMatrix, DenseVector};

const MAX_SWEEPS: usize = 80;
const ROTATION_TOL: f64 = 1e-15;

/// Thin singular value decomposition `M = U diag(sigma) V^T` with
/// `k = min(m, n)` columns in `U` and `V`.
#[derive(Clone, Debug)]
pub struct SvdTriple {
    pub u: DenseMatrix,
    pub sigma: DenseVector,
    pub v: DenseMatrix,
}

impl SvdTriple {
    pub fn rank_at(&self, rel_tol: f64) -> usize {
        let top = self.sigma.first().copied().unwrap_or(0.0);
        self.sigma.iter().filter(|s| **s > rel_tol * top && **s > 0.0).count()
    }

    /// `sum_{i<r} sigma_i u_i v_i^T`
    pub fn reconstruct(&self, r: usize) -> DenseMatrix {
        let (m, n) = (self.u.n_rows(), self.v.n_rows());
        let mut out = DenseMatrix::zeros(m, n);
        for k in 0..r.min(self.sigma.len()) {
            let s = self.sigma[k];
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let a = s * self.u[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * self.v[(j, k)];
                }
            }
        }
        out
    }
}

fn col_dot(a: &[Vec<f64>], p: usize, q: usize) -> f64 {
    a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum()
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Orthonormalizes `cols` in place (modified Gram-Schmidt, two passes), replacing
/// columns that collapse with standard basis vectors outside the current span.
fn orthonormalize(cols: &mut [Vec<f64>]) {
    let dim = cols.first().map_or(0, |c| c.len());
    let mut next_basis = 0;
    for j in 0..cols.len() {
        let mut attempts = 0;
        loop {
            for _ in 0..2 {
                for k in 0..j {
                    let d: f64 = cols[k].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                    let (done, cur) = cols.split_at_mut(j);
                    for (x, y) in cur[0].iter_mut().zip(&done[k]) {
                        *x -= d * y;
                    }
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-8 || attempts > dim {
                cols[j].iter_mut().for_each(|v| *v /= norm);
                break;
            }
            cols[j] = vec![0.0; dim];
            cols[j][next_basis % dim] = 1.0;
            next_basis += 1;
            attempts += 1;
        }
    }
}

fn columns_to_matrix(cols: &[Vec<f64>], n_rows: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n_rows, cols.len());
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// One-sided Jacobi SVD.
pub fn svd(m: &DenseMatrix) -> Result<SvdTriple> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if m.n_rows() < m.n_cols() {
        let t = svd(&m.transpose())?;
        return Ok(SvdTriple {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = col_dot(&a, p, p);
                let beta = col_dot(&a, q, q);
                let gamma = col_dot(&a, p, q);
                if gamma == 0.0 || gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }

    let norms: Vec<f64> = a.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let top = sigma.first().copied().unwrap_or(0.0);
    let mut u_cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| {
            if norms[j] > 1e-300 && norms[j] > 1e-14 * top {
                a[j].iter().map(|x| x / norms[j]).collect()
            } else {
                vec![0.0; rows]
            }
        })
        .collect();
    orthonormalize(&mut u_cols);
    let v_cols: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();

    let triple = SvdTriple {
        u: columns_to_matrix(&u_cols, rows),
        sigma: DenseVector::from_vec_unchecked(sigma),
        v: columns_to_matrix(&v_cols, cols),
    };
    if !converged {
        let residual = triple.reconstruct(cols).sub(m)?.frobenius();
        if residual > 1e-7 * (1.0 + m.frobenius()) {
            return Err(Error::NotConverged {
                what: "svd",
                iterations: MAX_SWEEPS,
                residual,
                best: None,
            });
        }
    }
    Ok(triple)
}

/// `H_r(M)`: best rank-`r` approximation in Frobenius norm.
pub fn hard_threshold_mat(m: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    let k = m.n_rows().min(m.n_cols());
    if r > k {
        return Err(Error::invalid(format!("rank {r} exceeds min dimension {k}")));
    }
    Ok(svd(m)?.reconstruct(r))
}

/// Orthogonal projector onto the column space of `M`.
pub fn projector_im(m: &DenseMatrix) -> Result<DenseMatrix> {
    let t = svd(m)?;
    let r = t.rank_at(1e-10);
    let basis = t.u.column_subset(r);
    basis.matmul_tr(&basis)
}

/// Symmetric eigendecomposition: eigenvalues descending, eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices. The input is symmetrized first.
pub fn sym_eigen(s: &DenseMatrix) -> Result<SymEigen> {
    if s.n_rows() != s.n_cols() {
        return Err(Error::invalid("eigendecomposition needs a square matrix"));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite("eigensolver input"));
    }
    let n = s.n_rows();
    let mut a = s.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius().max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off > 1e-10 * scale {
            return Err(Error::NotConverged {
                what: "symmetric eigensolver",
                iterations: MAX_SWEEPS,
                residual: off,
                best: None,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new)] = v[(k, old)];
        }
    }
    Ok(SymEigen { values, vectors })
}

impl SymEigen {
    /// `V diag(f(lambda)) V^T`
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.values.len();
        let mut out = DenseMatrix::zeros(n, n);
        for (k, lam) in self.values.iter().enumerate() {
            let fl = f(*lam);
            if fl == 0.0 {
                continue;
            }
            for i in 0..n {
                let a = fl * self.vectors[(i, k)];
                for j in 0..n {
                    out[(i, j)] += a * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

/// Square root of a symmetric PSD matrix; negative eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(sym_eigen(m)?.map_values(|l| l.max(0.0).sqrt()).symmetrize())
}

impl DenseMatrix {
    /// First `k` columns.
    pub fn column_subset(&self, k: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows(), k);
        for i in 0..self.n_rows() {
            for j in 0..k {
                out[(i, j)] = self[(i, j)];
            }
        }
        out
    }
}
