//! Synthetic problem generators and svmlight ingestion.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linops::{CsrMatrix, DenseMatrix, DenseVector, LinearMap};
use crate::objectives::{preprocess_design, LeastSquares, PreprocessedDesign};
use crate::rng::NormalSampler;

pub const DEFAULT_DELTA: f64 = 1e-3;

/// Diagonal least-squares instance on which IHT is stuck at `x_bad`.
#[derive(Clone, Debug)]
pub struct HardInstance {
    pub a: CsrMatrix,
    pub b: DenseVector,
    pub x_star: DenseVector,
    pub x_bad: DenseVector,
    pub delta: f64,
    pub kappa: usize,
    pub s: usize,
    pub s_prime: usize,
}

impl HardInstance {
    pub fn n(&self) -> usize {
        self.a.n_cols()
    }

    /// The objective with its exact curvature constants `beta = kappa`, `alpha = 1`.
    pub fn objective(&self) -> LeastSquares {
        LeastSquares::new(self.a.clone(), self.b.clone())
            .expect("generator keeps shapes consistent")
            .with_beta(self.kappa as f64)
            .with_alpha(Some(1.0))
    }

    /// `f(x_bad) - f(x*) = 0.5 s kappa^2 (1 - 4 delta) - 0.5 s'`
    pub fn predicted_gap(&self) -> f64 {
        let k2 = (self.kappa * self.kappa) as f64;
        0.5 * self.s as f64 * k2 * (1.0 - 4.0 * self.delta) - 0.5 * self.s_prime as f64
    }
}

/// Blocks `I1 = [0, s)`, `I2 = [s, s(kappa+1))`, `I3` the remaining `s kappa^2` indices.
pub fn gen_hard_instance(kappa: usize, s: usize, s_prime: usize, delta: f64) -> Result<HardInstance> {
    if kappa < 1 || s < 1 {
        return Err(Error::invalid("kappa and s must be at least 1"));
    }
    if s_prime < 1 {
        return Err(Error::invalid("s' must be at least 1"));
    }
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::invalid("delta must lie in (0, 1/4)"));
    }
    let i3 = s * kappa * kappa;
    if s_prime > i3 {
        return Err(Error::invalid(format!("s' = {s_prime} exceeds |I3| = {i3}")));
    }
    if 5 * s_prime > 3 * s * kappa * kappa {
        return Err(Error::invalid(format!(
            "s' = {s_prime} exceeds 0.6 s kappa^2 = {}",
            0.6 * i3 as f64
        )));
    }
    let k = kappa as f64;
    let i2_end = s * (kappa + 1);
    let n = i2_end + i3;
    let mut diag = vec![1.0; n];
    let mut b = vec![1.0; n];
    let mut x_star = vec![0.0; n];
    let mut x_bad = vec![0.0; n];
    let x1 = k * (1.0 - 4.0 * delta).sqrt();
    for i in 0..s {
        b[i] = x1;
        x_star[i] = x1;
    }
    for i in s..i2_end {
        diag[i] = k.sqrt();
        b[i] = k.sqrt() * (1.0 - 2.0 * delta).sqrt();
    }
    for v in x_bad.iter_mut().skip(i2_end).take(s_prime) {
        *v = 1.0;
    }
    Ok(HardInstance {
        a: CsrMatrix::diagonal(&diag)?,
        b: DenseVector::new(b)?,
        x_star: DenseVector::new(x_star)?,
        x_bad: DenseVector::new(x_bad)?,
        delta,
        kappa,
        s,
        s_prime,
    })
}

/// Gaussian measurements `b = A x_true` of a sparse Gaussian signal.
#[derive(Clone, Debug)]
pub struct RecoveryInstance {
    pub a: CsrMatrix,
    pub x_true: DenseVector,
    pub b: DenseVector,
    pub seed: u64,
}

impl RecoveryInstance {
    pub fn objective(&self) -> LeastSquares {
        LeastSquares::new(self.a.clone(), self.b.clone()).expect("generator keeps shapes consistent")
    }

    /// Centers and unit-normalizes the columns, then re-measures so that `x_true`
    /// stays an exact zero of the loss. Dropped columns are removed from `x_true`.
    pub fn normalized(&self) -> RecoveryInstance {
        let design = preprocess_design(&self.a);
        let a = design.to_csr();
        let x: Vec<f64> = design.kept_columns().iter().map(|&c| self.x_true[c]).collect();
        let b = a.mul_vec(&x);
        RecoveryInstance {
            a,
            x_true: DenseVector::from_vec_unchecked(x),
            b: DenseVector::from_vec_unchecked(b),
            seed: self.seed,
        }
    }
}

pub fn gen_recovery_instance(m: usize, n: usize, s: usize, seed: u64) -> Result<RecoveryInstance> {
    if m < 1 || n < 1 {
        return Err(Error::invalid("m and n must be at least 1"));
    }
    if s > n {
        return Err(Error::invalid(format!("s = {s} exceeds n = {n}")));
    }
    let mut normals = NormalSampler::new(seed);
    let a = CsrMatrix::from_dense(m, n, &normals.vec(m * n))?;
    let mut support = sample(normals.rng(), n, s).into_vec();
    support.sort_unstable();
    let mut x = vec![0.0; n];
    for i in support {
        x[i] = normals.sample();
    }
    let b = a.mul_vec(&x);
    Ok(RecoveryInstance {
        a,
        x_true: DenseVector::new(x)?,
        b: DenseVector::new(b)?,
        seed,
    })
}

/// Least squares with Hessian spectrum in `[1, kappa]` (both ends attained) and a
/// planted `s`-sparse minimizer with `f(x*) = 0`.
#[derive(Debug)]
pub struct PlantedQuadratic {
    pub objective: LeastSquares,
    pub x_star: DenseVector,
    pub s_star: Vec<usize>,
    pub f_star: f64,
    pub eigenvalues: Vec<f64>,
}

const ROTATION_LAYERS: usize = 3;

pub fn gen_planted_quadratic(n: usize, s: usize, kappa: f64, seed: u64) -> Result<PlantedQuadratic> {
    if s > n {
        return Err(Error::invalid(format!("s = {s} exceeds n = {n}")));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::invalid("kappa must be finite and at least 1"));
    }
    if n < 2 && kappa > 1.0 {
        return Err(Error::invalid("kappa > 1 needs n >= 2"));
    }
    let mut normals = NormalSampler::new(seed);
    let mut eig: Vec<f64> = (0..n).map(|_| 1.0 + (kappa - 1.0) * normals.rng().random::<f64>()).collect();
    if n >= 1 {
        eig[0] = 1.0;
    }
    if n >= 2 {
        eig[n - 1] = kappa;
    }

    // Q is a product of Givens layers; column i of Q scaled by sqrt(eig_i) is row i of A.
    let mut q = DenseMatrix::identity(n);
    for _ in 0..ROTATION_LAYERS {
        let perm = sample(normals.rng(), n, n).into_vec();
        for pair in perm.chunks_exact(2) {
            let (i, j) = (pair[0], pair[1]);
            let theta = 2.0 * std::f64::consts::PI * normals.rng().random::<f64>();
            let (sn, cs) = theta.sin_cos();
            for r in 0..n {
                let (qi, qj) = (q[(r, i)], q[(r, j)]);
                q[(r, i)] = cs * qi - sn * qj;
                q[(r, j)] = sn * qi + cs * qj;
            }
        }
    }
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let scale = eig[i].sqrt();
            (0..n)
                .filter(|&r| q[(r, i)] != 0.0)
                .map(|r| (r, scale * q[(r, i)]))
                .collect()
        })
        .collect();
    let a = CsrMatrix::from_rows(n, &rows)?;

    let mut s_star = sample(normals.rng(), n, s).into_vec();
    s_star.sort_unstable();
    let mut x = vec![0.0; n];
    for &i in &s_star {
        let v = normals.sample();
        x[i] = if v == 0.0 { 1.0 } else { v };
    }
    let b = a.mul_vec(&x);
    let objective = LeastSquares::new(a, DenseVector::new(b)?)?
        .with_beta(kappa)
        .with_alpha(Some(1.0));
    Ok(PlantedQuadratic {
        objective,
        x_star: DenseVector::new(x)?,
        s_star,
        f_star: 0.0,
        eigenvalues: eig,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

/// A preprocessed design with its targets.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub a: PreprocessedDesign,
    pub b: DenseVector,
    pub task: Task,
}

impl Dataset {
    /// Centers and scales the design. Classification labels in `{-1, +1}` are mapped to `{0, 1}`.
    pub fn from_raw(a: &CsrMatrix, labels: DenseVector, task: Task) -> Result<Self> {
        let b = match task {
            Task::Regression => labels,
            Task::Classification => {
                let mapped = labels
                    .iter()
                    .map(|v| match *v {
                        x if x == -1.0 || x == 0.0 => Ok(0.0),
                        1.0 => Ok(1.0),
                        x => Err(Error::invalid(format!("label {x} is not binary"))),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                DenseVector::new(mapped)?
            }
        };
        Ok(Dataset {
            a: preprocess_design(a),
            b,
            task,
        })
    }

    pub fn load(path: impl AsRef<Path>, task: Task) -> Result<Self> {
        let (a, labels) = load_svmlight(path)?;
        Dataset::from_raw(&a, labels, task)
    }

    pub fn dropped_columns(&self) -> &[usize] {
        self.a.dropped_columns()
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Reads `label index:value ...` lines with 1-based, strictly increasing indices.
/// Blank lines and `#` comments are ignored.
pub fn parse_svmlight<R: Read>(reader: R) -> Result<(CsrMatrix, DenseVector)> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut n_cols = 0;
    for (ln, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = ln + 1;
        let content = line.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, ch) in content.char_indices() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s0)) => {
                    tokens.push((s0, &content[s0..i]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s0) = start {
            tokens.push((s0, &content[s0..]));
        }
        let Some(&(label_col, label_tok)) = tokens.first() else {
            continue;
        };
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(line_no, label_col + 1, format!("bad label {label_tok:?}")))?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for &(col, tok) in &tokens[1..] {
            let col = col + 1;
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line_no, col, format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(line_no, col, format!("bad index {idx:?}")))?;
            if idx < 1 {
                return Err(parse_err(line_no, col, "indices are 1-based"));
            }
            if idx <= last {
                return Err(parse_err(line_no, col, "indices must be strictly increasing"));
            }
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(line_no, col, format!("bad value {val:?}")))?;
            last = idx;
            row.push((idx - 1, val));
        }
        n_cols = n_cols.max(last);
        rows.push(row);
        labels.push(label);
    }
    Ok((CsrMatrix::from_rows(n_cols, &rows)?, DenseVector::new(labels)?))
}

pub fn load_svmlight(path: impl AsRef<Path>) -> Result<(CsrMatrix, DenseVector)> {
    parse_svmlight(File::open(path)?)
}

pub fn write_svmlight<W: Write>(mut out: W, a: &CsrMatrix, labels: &[f64]) -> Result<()> {
    Error::check_dim(a.n_rows(), labels.len())?;
    for (r, label) in labels.iter().enumerate() {
        write!(out, "{label}")?;
        let (cols, vals) = a.row(r);
        for (c, v) in cols.iter().zip(vals) {
            write!(out, " {}:{v}", c + 1)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_svmlight(path: impl AsRef<Path>, a: &CsrMatrix, labels: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_svmlight(&mut w, a, labels)?;
    w.flush()?;
    Ok(())
}
