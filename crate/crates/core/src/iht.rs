//! Plain iterative hard thresholding.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linops::{threshold_slice, DenseVector};
use crate::objectives::Objective;

const EARLY_STOP_REL: f64 = 1e-12;
const EARLY_STOP_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct IhtConfig {
    pub s_prime: usize,
    pub eta: f64,
    pub max_iters: usize,
    /// Stop once the relative change of f stays below 1e-12 for 50 iterations.
    pub early_stop: bool,
    /// Fail with [`Error::Diverged`] once f exceeds this value.
    pub abort_above: Option<f64>,
}

impl IhtConfig {
    pub fn new(s_prime: usize, eta: f64, max_iters: usize) -> Self {
        IhtConfig {
            s_prime,
            eta,
            max_iters,
            early_stop: false,
            abort_above: None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.s_prime > dim {
            return Err(Error::invalid(format!(
                "s' = {} exceeds dimension {dim}",
                self.s_prime
            )));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid("step size must be finite and positive"));
        }
        Ok(())
    }
}

/// Which kind of update an iteration performed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Accepted,
    Reverted,
    Corrective,
    ProjectionWeightUpdate,
    RankOneWeightUpdate,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Accepted => "accepted",
            Branch::Reverted => "reverted",
            Branch::Corrective => "corrective",
            Branch::ProjectionWeightUpdate => "projection_weights",
            Branch::RankOneWeightUpdate => "rank_one_weights",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Branch::Accepted,
            Branch::Reverted,
            Branch::Corrective,
            Branch::ProjectionWeightUpdate,
            Branch::RankOneWeightUpdate,
        ]
        .into_iter()
        .find(|b| b.as_str() == s)
        .ok_or_else(|| Error::invalid(format!("unknown branch tag {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub f: f64,
    pub g: Option<f64>,
    pub support: usize,
    pub weight_mass: Option<f64>,
    pub branch: Option<Branch>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverTrace {
    records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub fn new() -> Self {
        SolverTrace::default()
    }

    /// Appends a record; iteration numbers must strictly increase.
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            assert!(record.iter > last.iter, "trace iterations must increase");
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn first(&self) -> Option<&TraceRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn best_f(&self) -> Option<f64> {
        self.records.iter().map(|r| r.f).min_by(f64::total_cmp)
    }
}

pub(crate) fn check_start<O: Objective + ?Sized>(obj: &O, x: &[f64], s_prime: usize) -> Result<()> {
    Error::check_dim(obj.dim(), x.len())?;
    let nnz = x.iter().filter(|v| **v != 0.0).count();
    if nnz > s_prime {
        return Err(Error::Precondition(format!(
            "iterate has {nnz} nonzeros but s' = {s_prime}"
        )));
    }
    Ok(())
}

/// Tracks the relative-change early-stopping rule.
#[derive(Default)]
pub(crate) struct Stagnation {
    quiet: usize,
}

impl Stagnation {
    pub(crate) fn observe(&mut self, prev: f64, next: f64) -> bool {
        let rel = (next - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        if rel < EARLY_STOP_REL {
            self.quiet += 1;
        } else {
            self.quiet = 0;
        }
        self.quiet >= EARLY_STOP_WINDOW
    }
}

pub(crate) fn check_abort(f: f64, abort_above: Option<f64>) -> Result<()> {
    match abort_above {
        Some(threshold) if !(f <= threshold) => Err(Error::Diverged {
            value: f,
            threshold,
        }),
        _ => Ok(()),
    }
}

/// `H_{s'}(x - eta * grad f(x))`.
pub fn iht_step<O: Objective + ?Sized>(obj: &O, x: &[f64], cfg: &IhtConfig) -> Result<DenseVector> {
    cfg.validate(obj.dim())?;
    check_start(obj, x, cfg.s_prime)?;
    let g = obj.gradient(x)?;
    let y: Vec<f64> = x.iter().zip(g.iter()).map(|(xi, gi)| xi - cfg.eta * gi).collect();
    DenseVector::new(threshold_slice(&y, cfg.s_prime)).map_err(|_| Error::NonFinite("iht step"))
}

/// Runs `max_iters` IHT steps from `x0`. Record 0 is the starting point.
pub fn iht_solve<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    cfg: &IhtConfig,
) -> Result<(DenseVector, SolverTrace)> {
    cfg.validate(obj.dim())?;
    check_start(obj, x0, cfg.s_prime)?;
    let mut x = DenseVector::new(x0.to_vec())?;
    let mut f = obj.value(&x)?;
    let mut trace = SolverTrace::new();
    trace.push(TraceRecord {
        iter: 0,
        f,
        g: None,
        support: x.nnz(),
        weight_mass: None,
        branch: None,
    });
    let mut stagnation = Stagnation::default();
    for t in 1..=cfg.max_iters {
        x = iht_step(obj, &x, cfg)?;
        let f_next = obj.value(&x)?;
        check_abort(f_next, cfg.abort_above)?;
        trace.push(TraceRecord {
            iter: t,
            f: f_next,
            g: None,
            support: x.nnz(),
            weight_mass: None,
            branch: Some(Branch::Accepted),
        });
        let stop = stagnation.observe(f, f_next);
        f = f_next;
        if cfg.early_stop && stop {
            break;
        }
    }
    Ok((x, trace))
}

/// Whether one IHT step maps `x` to itself exactly.
pub fn is_fixpoint<O: Objective + ?Sized>(obj: &O, x: &[f64], cfg: &IhtConfig) -> Result<bool> {
    Ok(iht_step(obj, x, cfg)?.as_slice() == x)
}

/// Index sets swapped by an IHT step from `x`: `(A, B)` with `A` entering and `B`
/// leaving the support.
pub fn iht_exchange_sets<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    cfg: &IhtConfig,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let next = iht_step(obj, x, cfg)?;
    let entering = (0..x.len()).filter(|&i| x[i] == 0.0 && next[i] != 0.0).collect();
    let leaving = (0..x.len()).filter(|&i| x[i] != 0.0 && next[i] == 0.0).collect();
    Ok((entering, leaving))
}

/// Exchange inequality for an IHT step with `xbar = x - eta * grad g(x)`:
/// `-||eta grad_A g||^2 + ||xbar_B||^2 <= -||eta grad_A' g||^2 + ||xbar_B'||^2`,
/// up to a relative roundoff allowance of 1e-12.
pub fn exchange_inequality_check<O: Objective + ?Sized>(
    obj_g: &O,
    x: &[f64],
    a: &[usize],
    b: &[usize],
    a_alt: &[usize],
    b_alt: &[usize],
    eta: f64,
) -> Result<bool> {
    Error::check_dim(obj_g.dim(), x.len())?;
    let in_bounds = |set: &[usize]| set.iter().all(|&i| i < x.len());
    if ![a, b, a_alt, b_alt].into_iter().all(in_bounds) {
        return Err(Error::invalid("index out of range"));
    }
    if a.iter().chain(a_alt).any(|&i| x[i] != 0.0) {
        return Err(Error::Precondition("A and A' must lie outside supp(x)".into()));
    }
    if b.iter().chain(b_alt).any(|&i| x[i] == 0.0) {
        return Err(Error::Precondition("B and B' must lie inside supp(x)".into()));
    }
    if a.len() != b.len() || a_alt.len() != b_alt.len() {
        return Err(Error::Precondition("swap sets must have matching sizes".into()));
    }
    let g = obj_g.gradient(x)?;
    let xbar: Vec<f64> = x.iter().zip(g.iter()).map(|(xi, gi)| xi - eta * gi).collect();
    let side = |aa: &[usize], bb: &[usize]| {
        let grad: f64 = aa.iter().map(|&i| (eta * g[i]).powi(2)).sum();
        let kept: f64 = bb.iter().map(|&i| xbar[i] * xbar[i]).sum();
        kept - grad
    };
    let lhs = side(a, b);
    let rhs = side(a_alt, b_alt);
    Ok(lhs <= rhs + 1e-12 * (1.0 + lhs.abs() + rhs.abs()))
}
