use crate::error::{Error, Result};
use crate::linops::DenseMatrix;

/// A linear map `R^n_cols -> R^n_rows` with a transpose product.
pub trait LinearMap: Send + Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// `out = A x`
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// `out = A^T y`
    fn apply_transpose(&self, y: &[f64], out: &mut [f64]);

    fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows()];
        self.apply(x, &mut out);
        out
    }

    fn mul_transpose_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols()];
        self.apply_transpose(y, &mut out);
        out
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 || row_offsets[0] != 0 {
            return Err(Error::invalid("row offsets must have n_rows + 1 entries starting at 0"));
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("row offsets must be non-decreasing"));
        }
        let nnz = row_offsets[n_rows];
        if col_indices.len() != nnz || values.len() != nnz {
            return Err(Error::invalid("column index and value arrays must have nnz entries"));
        }
        for r in 0..n_rows {
            let cols = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "column indices of row {r} are not strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c >= n_cols) {
                return Err(Error::invalid(format!("column index out of range in row {r}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("csr values"));
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from per-row `(column, value)` lists. Columns must be strictly increasing.
    pub fn from_rows(n_cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for row in rows {
            for &(c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        CsrMatrix::new(rows.len(), n_cols, offsets, cols, vals)
    }

    /// Stores every entry of a row-major dense array, including zeros.
    pub fn from_dense(n_rows: usize, n_cols: usize, entries: &[f64]) -> Result<Self> {
        Error::check_dim(n_rows * n_cols, entries.len())?;
        let row_offsets = (0..=n_rows).map(|r| r * n_cols).collect();
        let col_indices = (0..n_rows).flat_map(|_| 0..n_cols).collect();
        CsrMatrix::new(n_rows, n_cols, row_offsets, col_indices, entries.to_vec())
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        CsrMatrix::new(n, n, (0..=n).collect(), (0..n).collect(), diag.to_vec())
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix::diagonal(&vec![1.0; n]).expect("identity is valid")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    /// Keeps the listed columns (ascending) and renumbers them `0..cols.len()`.
    pub fn select_columns(&self, cols: &[usize]) -> CsrMatrix {
        let mut remap = vec![usize::MAX; self.n_cols];
        for (new, &old) in cols.iter().enumerate() {
            remap[old] = new;
        }
        let rows: Vec<Vec<(usize, f64)>> = (0..self.n_rows)
            .map(|r| {
                let (c, v) = self.row(r);
                c.iter()
                    .zip(v)
                    .filter(|(c, _)| remap[**c] != usize::MAX)
                    .map(|(c, v)| (remap[*c], *v))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(cols.len(), &rows).expect("column selection preserves ordering")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            let (c, v) = self.row(r);
            for (c, v) in c.iter().zip(v) {
                m[(r, *c)] = *v;
            }
        }
        m
    }
}

impl LinearMap for CsrMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(out.len(), self.n_rows);
        for (r, o) in out.iter_mut().enumerate() {
            let (c, v) = self.row(r);
            *o = c.iter().zip(v).map(|(c, v)| v * x[*c]).sum();
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.n_rows);
        assert_eq!(out.len(), self.n_cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, yr) in y.iter().enumerate() {
            if *yr == 0.0 {
                continue;
            }
            let (c, v) = self.row(r);
            for (c, v) in c.iter().zip(v) {
                out[*c] += v * yr;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_structure() {
        assert!(CsrMatrix::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(2, 3, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![0], vec![f64::NAN]).is_err());
        assert!(CsrMatrix::new(1, 3, vec![0, 2], vec![0, 2], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn products_match_dense() {
        let a = CsrMatrix::from_rows(3, &[vec![(0, 1.0), (2, 2.0)], vec![], vec![(1, -1.0)]]).unwrap();
        assert_eq!(a.mul_vec(&[1.0, 2.0, 3.0]), vec![7.0, 0.0, -2.0]);
        assert_eq!(a.mul_transpose_vec(&[1.0, 5.0, 2.0]), vec![1.0, -2.0, 2.0]);
        let d = a.to_dense();
        assert_eq!(d[(0, 2)], 2.0);
        assert_eq!(d[(2, 1)], -1.0);
    }

    #[test]
    fn column_selection_renumbers() {
        let a = CsrMatrix::from_dense(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = a.select_columns(&[0, 2]);
        assert_eq!(s.n_cols(), 2);
        assert_eq!(s.mul_vec(&[1.0, 1.0]), vec![4.0, 10.0]);
    }
}
