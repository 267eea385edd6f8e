//! Exhaustive reference solvers for tiny instances.

use crate::error::{Error, Result};
use crate::linops::{sym_eigen, CsrMatrix, DenseMatrix, DenseVector};

pub const MAX_ORACLE_DIM: usize = 14;
const PINV_CUTOFF: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub best_support: Vec<usize>,
    pub best_value: f64,
    pub x_opt: DenseVector,
}

/// Solves the symmetric PSD system `g x = rhs` by Cholesky, or by an
/// eigenvalue pseudoinverse when the factorization meets a tiny pivot.
fn psd_solve(g: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let k = rhs.len();
    let max_diag = (0..k).map(|i| g[(i, i)]).fold(0.0, f64::max);
    let mut l = DenseMatrix::zeros(k, k);
    let mut ok = true;
    'outer: for j in 0..k {
        let mut d = g[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if d <= PINV_CUTOFF * max_diag.max(f64::MIN_POSITIVE) * 1e3 {
            ok = false;
            break 'outer;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..k {
            let mut v = g[(i, j)];
            for p in 0..j {
                v -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = v / d;
        }
    }
    if ok {
        let mut y = rhs.to_vec();
        for i in 0..k {
            for p in 0..i {
                y[i] -= l[(i, p)] * y[p];
            }
            y[i] /= l[(i, i)];
        }
        for i in (0..k).rev() {
            for p in (i + 1)..k {
                y[i] -= l[(p, i)] * y[p];
            }
            y[i] /= l[(i, i)];
        }
        return Ok(y);
    }
    let e = sym_eigen(g)?;
    let top = e.values.first().copied().unwrap_or(0.0);
    let mut x = vec![0.0; k];
    for (idx, lam) in e.values.iter().enumerate() {
        if *lam <= PINV_CUTOFF * top || *lam <= 0.0 {
            continue;
        }
        let proj: f64 = (0..k).map(|i| e.vectors[(i, idx)] * rhs[i]).sum::<f64>() / lam;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += proj * e.vectors[(i, idx)];
        }
    }
    Ok(x)
}

struct Search<'a> {
    cols: Vec<Vec<f64>>,
    b: &'a [f64],
    s: usize,
    best: Option<(Vec<usize>, f64, Vec<f64>)>,
}

impl Search<'_> {
    fn evaluate(&mut self, support: &[usize]) -> Result<()> {
        let k = support.len();
        let m = self.b.len();
        let mut g = DenseMatrix::zeros(k, k);
        let mut rhs = vec![0.0; k];
        for (p, &i) in support.iter().enumerate() {
            rhs[p] = self.cols[i].iter().zip(self.b).map(|(a, b)| a * b).sum();
            for (q, &j) in support.iter().enumerate().skip(p) {
                let v: f64 = self.cols[i].iter().zip(&self.cols[j]).map(|(a, b)| a * b).sum();
                g[(p, q)] = v;
                g[(q, p)] = v;
            }
        }
        let coef = psd_solve(&g, &rhs)?;
        let mut r = self.b.to_vec();
        for (p, &i) in support.iter().enumerate() {
            for (row, ri) in r.iter_mut().enumerate().take(m) {
                *ri -= coef[p] * self.cols[i][row];
            }
        }
        let value = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        if self.best.as_ref().is_none_or(|(_, bv, _)| value < *bv) {
            self.best = Some((support.to_vec(), value, coef));
        }
        Ok(())
    }

    /// Depth-first over supports in lexicographic order, prefixes first.
    fn visit(&mut self, support: &mut Vec<usize>, next: usize) -> Result<()> {
        self.evaluate(support)?;
        if support.len() == self.s {
            return Ok(());
        }
        for i in next..self.cols.len() {
            support.push(i);
            self.visit(support, i + 1)?;
            support.pop();
        }
        Ok(())
    }
}

/// `min f(x) = 1/2 ||Ax - b||^2` over `||x||_0 <= s` by enumerating every support.
/// Exact ties keep the lexicographically smallest support.
pub fn best_sparse_ls(a: &CsrMatrix, b: &[f64], s: usize) -> Result<OracleResult> {
    let n = a.n_cols();
    Error::check_dim(a.n_rows(), b.len())?;
    if n > MAX_ORACLE_DIM {
        return Err(Error::invalid(format!(
            "oracle supports at most {MAX_ORACLE_DIM} columns, got {n}"
        )));
    }
    if s > n {
        return Err(Error::invalid(format!("s = {s} exceeds n = {n}")));
    }
    let dense = a.to_dense();
    let mut search = Search {
        cols: (0..n).map(|j| dense.column(j)).collect(),
        b,
        s,
        best: None,
    };
    search.visit(&mut Vec::new(), 0)?;
    let (support, value, coef) = search.best.expect("empty support is always evaluated");
    let mut x = vec![0.0; n];
    for (p, &i) in support.iter().enumerate() {
        x[i] = coef[p];
    }
    Ok(OracleResult {
        best_support: support,
        best_value: value,
        x_opt: DenseVector::new(x)?,
    })
}

/// Indices of the `k` largest `|x_i|` by a full stable sort, smaller index first on ties.
pub fn top_k_reference(x: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > x.len() {
        return Err(Error::invalid(format!("k = {k} exceeds dimension {}", x.len())));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()));
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    Ok(out)
}
