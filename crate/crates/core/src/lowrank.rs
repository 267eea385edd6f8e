//! Regularized local search for rank-constrained convex minimization.

use crate::error::{Error, Result};
use crate::iht::{Branch, SolverTrace, TraceRecord};
use crate::linops::{hard_threshold_mat, psd_sqrt, svd, sym_eigen, DenseMatrix};

pub const CORRECTIVE_MAX_ITERS: usize = 50_000;
pub const CORRECTIVE_TOL: f64 = 1e-7;
pub const MAX_DIM: usize = 128;

pub trait MatrixObjective: Send + Sync {
    fn shape(&self) -> (usize, usize);

    fn value_grad(&self, a: &DenseMatrix) -> Result<(f64, DenseMatrix)>;

    fn value(&self, a: &DenseMatrix) -> Result<f64> {
        Ok(self.value_grad(a)?.0)
    }

    fn gradient(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.value_grad(a)?.1)
    }

    fn beta_estimate(&self) -> f64;

    fn alpha_estimate(&self) -> Option<f64>;
}

fn check_shape(expected: (usize, usize), a: &DenseMatrix) -> Result<()> {
    if a.shape() != expected {
        return Err(Error::invalid(format!(
            "expected a {:?} matrix, got {:?}",
            expected,
            a.shape()
        )));
    }
    Ok(())
}

/// `f(A) = 1/2 ||A - B||_F^2`.
#[derive(Clone, Debug)]
pub struct FrobeniusTarget {
    pub b: DenseMatrix,
}

impl MatrixObjective for FrobeniusTarget {
    fn shape(&self) -> (usize, usize) {
        self.b.shape()
    }

    fn value_grad(&self, a: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        check_shape(self.shape(), a)?;
        let d = a.sub(&self.b)?;
        Ok((0.5 * d.frobenius_sq(), d))
    }

    fn beta_estimate(&self) -> f64 {
        1.0
    }

    fn alpha_estimate(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `f(A) = 1/2 sum_ij h_ij (A_ij - B_ij)^2` with positive `h`.
#[derive(Clone, Debug)]
pub struct WeightedFrobenius {
    b: DenseMatrix,
    h: DenseMatrix,
}

impl WeightedFrobenius {
    pub fn new(b: DenseMatrix, h: DenseMatrix) -> Result<Self> {
        check_shape(b.shape(), &h)?;
        if h.as_slice().iter().any(|v| *v <= 0.0) {
            return Err(Error::invalid("curvature weights must be positive"));
        }
        Ok(WeightedFrobenius { b, h })
    }
}

impl MatrixObjective for WeightedFrobenius {
    fn shape(&self) -> (usize, usize) {
        self.b.shape()
    }

    fn value_grad(&self, a: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        check_shape(self.shape(), a)?;
        let d = a.sub(&self.b)?;
        let (m, n) = d.shape();
        let grad: Vec<f64> = d.as_slice().iter().zip(self.h.as_slice()).map(|(d, h)| h * d).collect();
        let value = 0.5 * grad.iter().zip(d.as_slice()).map(|(g, d)| g * d).sum::<f64>();
        Ok((value, DenseMatrix::new(m, n, grad)?))
    }

    fn beta_estimate(&self) -> f64 {
        self.h.as_slice().iter().fold(0.0, |m, v| m.max(*v))
    }

    fn alpha_estimate(&self) -> Option<f64> {
        Some(self.h.as_slice().iter().fold(f64::INFINITY, |m, v| m.min(*v)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BranchTag {
    Corrective,
    ProjectionWeightUpdate,
    RankOneWeightUpdate,
}

impl From<BranchTag> for Branch {
    fn from(tag: BranchTag) -> Branch {
        match tag {
            BranchTag::Corrective => Branch::Corrective,
            BranchTag::ProjectionWeightUpdate => Branch::ProjectionWeightUpdate,
            BranchTag::RankOneWeightUpdate => Branch::RankOneWeightUpdate,
        }
    }
}

/// Iterate `A` with left and right weight matrices `W` (m x m) and `Y` (n x n).
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankState {
    pub a: DenseMatrix,
    pub w: DenseMatrix,
    pub y: DenseMatrix,
}

impl LowRankState {
    pub fn initial(m: usize, n: usize) -> Self {
        LowRankState {
            a: DenseMatrix::zeros(m, n),
            w: DenseMatrix::identity(m),
            y: DenseMatrix::identity(n),
        }
    }

    /// Describes every violated state invariant; empty when the state is valid.
    pub fn invariant_violations(&self, r_prime: usize) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for (name, mat) in [("W", &self.w), ("Y", &self.y)] {
            let asym = mat.asymmetry();
            if asym > 1e-10 {
                out.push(format!("{name} asymmetric by {asym:.3e}"));
            }
            let e = sym_eigen(mat)?;
            let hi = e.values.first().copied().unwrap_or(0.0);
            let lo = e.values.last().copied().unwrap_or(0.0);
            if lo < -1e-9 || hi > 1.0 + 1e-9 {
                out.push(format!("{name} spectrum [{lo:.3e}, {hi:.3e}] outside [0, 1]"));
            }
        }
        let sv = svd(&self.a)?;
        let top = sv.sigma.first().copied().unwrap_or(0.0);
        if let Some(extra) = sv.sigma.iter().skip(r_prime).find(|s| **s > 1e-9 * top) {
            out.push(format!("singular value {extra:.3e} beyond rank {r_prime}"));
        }
        Ok(out)
    }

    pub fn numeric_rank(&self) -> Result<usize> {
        Ok(svd(&self.a)?.rank_at(1e-9))
    }
}

/// `(beta/4) (<W, A A^T> + <Y, A^T A>)`.
pub fn phi(state: &LowRankState, beta: f64) -> Result<f64> {
    let aat = state.a.matmul_tr(&state.a)?;
    let ata = state.a.tr_matmul(&state.a)?;
    Ok(0.25 * beta * (state.w.inner(&aat)? + state.y.inner(&ata)?))
}

/// `g(A) = f(A) + phi(A)` for the weights in `state`.
pub fn reg_value<O: MatrixObjective + ?Sized>(obj: &O, state: &LowRankState) -> Result<f64> {
    Ok(obj.value(&state.a)? + phi(state, obj.beta_estimate())?)
}

fn with_a(state: &LowRankState, a: DenseMatrix) -> LowRankState {
    LowRankState {
        a,
        w: state.w.clone(),
        y: state.y.clone(),
    }
}

/// `grad f(A) + (beta/2) (W A + A Y)`.
pub fn reg_gradient<O: MatrixObjective + ?Sized>(obj: &O, state: &LowRankState) -> Result<DenseMatrix> {
    let (_, g) = reg_value_grad(obj, state)?;
    Ok(g)
}

fn reg_value_grad<O: MatrixObjective + ?Sized>(obj: &O, state: &LowRankState) -> Result<(f64, DenseMatrix)> {
    check_shape(obj.shape(), &state.a)?;
    let beta = obj.beta_estimate();
    let (f, gf) = obj.value_grad(&state.a)?;
    let wa = state.w.matmul(&state.a)?;
    let ay = state.a.matmul(&state.y)?;
    let reg = 0.25 * beta * (wa.inner(&state.a)? + ay.inner(&state.a)?);
    let g = gf.axpy(0.5 * beta, &wa.add(&ay)?)?;
    if !g.is_finite() {
        return Err(Error::NonFinite("regularized matrix gradient"));
    }
    Ok((f + reg, g))
}

/// How the gradient enters the candidate step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StepForm {
    /// `H_{r'-1}(A) - eta * H_1(grad g)`
    #[default]
    Scaled,
    /// `H_{r'-1}(A) - 0.5 * H_1(eta * grad g)`
    Halved,
}

pub fn candidate_step<O: MatrixObjective + ?Sized>(
    obj: &O,
    state: &LowRankState,
    r_prime: usize,
    eta: f64,
    form: StepForm,
) -> Result<DenseMatrix> {
    if r_prime < 1 {
        return Err(Error::invalid("r' must be at least 1"));
    }
    let k = state.a.n_rows().min(state.a.n_cols());
    let kept = hard_threshold_mat(&state.a, (r_prime - 1).min(k))?;
    let g = reg_gradient(obj, state)?;
    let coef = match form {
        StepForm::Scaled => eta,
        StepForm::Halved => 0.5 * eta,
    };
    kept.axpy(-coef, &hard_threshold_mat(&g, 1.min(k))?)
}

/// Minimizes `g(U X V^T)` over `X`, where `U`, `V` span the singular subspaces of `a_bar`.
pub fn corrective_step<O: MatrixObjective + ?Sized>(
    obj: &O,
    state: &LowRankState,
    a_bar: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_shape(obj.shape(), a_bar)?;
    let sv = svd(a_bar)?;
    let k = sv.rank_at(1e-12);
    if k == 0 {
        return Ok(DenseMatrix::zeros(a_bar.n_rows(), a_bar.n_cols()));
    }
    let u = sv.u.column_subset(k);
    let v = sv.v.column_subset(k);
    let step = 1.0 / (2.0 * obj.beta_estimate());
    let mut x = u.tr_matmul(a_bar)?.matmul(&v)?;
    let mut last = f64::INFINITY;
    for _ in 0..=CORRECTIVE_MAX_ITERS {
        let a = u.matmul(&x)?.matmul_tr(&v)?;
        let g = reg_gradient(obj, &with_a(state, a.clone()))?;
        let gx = u.tr_matmul(&g)?.matmul(&v)?;
        last = gx.frobenius();
        if last <= CORRECTIVE_TOL * (1.0 + g.frobenius()) {
            return Ok(a);
        }
        x = x.axpy(-step, &gx)?;
    }
    Err(Error::NotConverged {
        what: "corrective step",
        iterations: CORRECTIVE_MAX_ITERS,
        residual: last,
        best: None,
    })
}

/// Sum of the top `r` eigenvalues of a symmetric PSD matrix and the projector onto
/// their eigenvectors, skipping eigenvalues at or below `1e-10` of the largest.
fn top_eigen_projector(p: &DenseMatrix, r: usize) -> Result<(f64, DenseMatrix)> {
    let e = sym_eigen(p)?;
    let n = p.n_rows();
    let top = e.values.first().copied().unwrap_or(0.0).max(0.0);
    let trace: f64 = e.values.iter().take(r).map(|v| v.max(0.0)).sum();
    let mut proj = DenseMatrix::zeros(n, n);
    for (k, lam) in e.values.iter().enumerate().take(r) {
        if top == 0.0 || *lam <= 1e-10 * top {
            continue;
        }
        let col = e.vectors.column(k);
        proj = proj.add(&DenseMatrix::outer(&col, &col))?;
    }
    Ok((trace, proj))
}

/// Relative size of `<W, M>` against `Tr[M]` below which the two are treated as orthogonal.
const ORTHOGONAL_TOL: f64 = 1e-14;

/// `W - W M W / <W, M>`, or `W` unchanged when `<W, M> = 0`.
///
/// Evaluated as `W^{1/2} (I - N / Tr[N]) W^{1/2}` with `N = W^{1/2} M W^{1/2}`, which
/// stays PSD in floating point even when `<W, M>` is tiny.
fn rank_one_deflate(w: &DenseMatrix, w_half: &DenseMatrix, n: &DenseMatrix, m_trace: f64) -> Result<DenseMatrix> {
    let denom = n.trace();
    if denom <= ORTHOGONAL_TOL * m_trace || denom <= 0.0 {
        return Ok(w.clone());
    }
    let inner = DenseMatrix::identity(n.n_rows()).axpy(-1.0 / denom, n)?;
    Ok(w_half.matmul(&inner)?.matmul(w_half)?.symmetrize())
}

/// `W^{1/2} (I - Pi / r) W^{1/2}`
fn projection_deflate(w_half: &DenseMatrix, proj: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    let n = proj.n_rows();
    let inner = DenseMatrix::identity(n).axpy(-1.0 / r as f64, proj)?;
    Ok(w_half.matmul(&inner)?.matmul(w_half)?.symmetrize())
}

#[derive(Clone, Debug)]
pub enum IterateOutcome {
    Stepped {
        state: LowRankState,
        tag: BranchTag,
        delta: f64,
        g_before: f64,
        g_after: f64,
    },
    /// `g(A) < f*`: nothing left to gain.
    TargetReached { delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterateParams {
    pub r: usize,
    pub r_prime: usize,
    pub f_star: f64,
    pub eta: f64,
    pub form: StepForm,
}

/// One iteration: a corrective step when the candidate makes enough progress,
/// otherwise a projection or rank-one update of the weights.
pub fn local_search_iterate<O: MatrixObjective + ?Sized>(
    obj: &O,
    state: &LowRankState,
    params: &IterateParams,
) -> Result<IterateOutcome> {
    if params.r < 1 {
        return Err(Error::invalid("r must be at least 1"));
    }
    let beta = obj.beta_estimate();
    let g_before = reg_value(obj, state)?;
    let delta = g_before - params.f_star;
    if delta < 0.0 {
        return Ok(IterateOutcome::TargetReached { delta });
    }
    let a_bar = candidate_step(obj, state, params.r_prime, params.eta, params.form)?;
    let g_bar = reg_value(obj, &with_a(state, a_bar.clone()))?;

    let (next, tag) = if g_before - g_bar >= delta / params.r_prime as f64 {
        let a = corrective_step(obj, state, &a_bar)?;
        (with_a(state, a), BranchTag::Corrective)
    } else {
        let aat = state.a.matmul_tr(&state.a)?;
        let ata = state.a.tr_matmul(&state.a)?;
        let w_half = psd_sqrt(&state.w)?;
        let y_half = psd_sqrt(&state.y)?;
        let wa = w_half.matmul(&state.a)?;
        let ay = state.a.matmul(&y_half)?;
        let p = wa.matmul_tr(&wa)?.symmetrize();
        let q = ay.tr_matmul(&ay)?.symmetrize();
        let (tr_p, proj_p) = top_eigen_projector(&p, params.r)?;
        let (tr_q, proj_q) = top_eigen_projector(&q, params.r)?;
        if tr_p.max(tr_q) >= (0.4 / beta) * delta {
            let w = projection_deflate(&w_half, &proj_p, params.r)?;
            let y = projection_deflate(&y_half, &proj_q, params.r)?;
            (
                LowRankState {
                    a: state.a.clone(),
                    w,
                    y,
                },
                BranchTag::ProjectionWeightUpdate,
            )
        } else {
            let w = rank_one_deflate(&state.w, &w_half, &p, aat.trace())?;
            let y = rank_one_deflate(&state.y, &y_half, &q, ata.trace())?;
            (
                LowRankState {
                    a: state.a.clone(),
                    w,
                    y,
                },
                BranchTag::RankOneWeightUpdate,
            )
        }
    };
    let g_after = reg_value(obj, &next)?;
    Ok(IterateOutcome::Stepped {
        state: next,
        tag,
        delta,
        g_before,
        g_after,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankMode {
    /// Enforces the relaxed-rank lower bounds of the guarantee.
    Theory,
    /// Caps `r'` at `min(m, n)` and skips the lower bounds.
    Experimental,
}

#[derive(Clone, Debug)]
pub struct LocalSearchConfig {
    pub r: usize,
    pub r_prime: usize,
    pub f_star: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub mode: RankMode,
    pub form: StepForm,
    /// Defaults to `1/(2 beta)`.
    pub eta: Option<f64>,
    /// Evaluate state invariants after every iteration.
    pub check_invariants: bool,
}

impl LocalSearchConfig {
    pub fn new(r: usize, r_prime: usize, f_star: f64, eps: f64, max_iters: usize) -> Self {
        LocalSearchConfig {
            r,
            r_prime,
            f_star,
            eps,
            max_iters,
            mode: RankMode::Theory,
            form: StepForm::default(),
            eta: None,
            check_invariants: false,
        }
    }
}

/// Per-iteration bookkeeping beyond the scalar trace.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub tag: BranchTag,
    pub delta: f64,
    pub g_before: f64,
    pub g_after: f64,
    /// `Tr[I - W]` after the step.
    pub w_deficit: f64,
    pub y_deficit: f64,
    /// Smallest eigenvalue of `W - W'` and `Y - Y'`.
    pub w_decrease_min_eig: f64,
    pub y_decrease_min_eig: f64,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct LocalSearchRun {
    pub a: DenseMatrix,
    pub state: LowRankState,
    pub trace: SolverTrace,
    pub steps: Vec<StepInfo>,
    pub r_prime: usize,
    /// Stopped at `max_iters` without reaching `f* + eps`.
    pub incomplete: bool,
}

impl LocalSearchRun {
    pub fn branch_count(&self, tag: BranchTag) -> usize {
        self.steps.iter().filter(|s| s.tag == tag).count()
    }
}

fn deficit(m: &DenseMatrix) -> f64 {
    m.n_rows() as f64 - m.trace()
}

fn min_eig(m: &DenseMatrix) -> Result<f64> {
    Ok(sym_eigen(m)?.values.last().copied().unwrap_or(0.0))
}

/// Effective relaxed rank for the configuration.
pub fn effective_r_prime<O: MatrixObjective + ?Sized>(obj: &O, cfg: &LocalSearchConfig) -> Result<usize> {
    let (m, n) = obj.shape();
    match cfg.mode {
        RankMode::Experimental => Ok(cfg.r_prime.min(m.min(n))),
        RankMode::Theory => {
            let kappa = obj
                .alpha_estimate()
                .filter(|a| *a > 0.0)
                .map(|a| obj.beta_estimate() / a)
                .ok_or_else(|| Error::Precondition("theory mode needs a strong-convexity estimate".into()))?;
            let f0 = obj.value(&DenseMatrix::zeros(m, n))?;
            let log = ((f0 - cfg.f_star) / cfg.eps).ln().max(0.0);
            let need = (256 * cfg.r) as f64;
            let need = need.max(20.0 * cfg.r as f64 * (2.0 * kappa + log));
            if (cfg.r_prime as f64) < need {
                return Err(Error::Precondition(format!(
                    "r' = {} is below the required {need:.1}",
                    cfg.r_prime
                )));
            }
            Ok(cfg.r_prime)
        }
    }
}

/// Runs from `A = 0`, `W = I`, `Y = I` until `f(A) <= f* + eps` or `max_iters`.
pub fn local_search_solve<O: MatrixObjective + ?Sized>(obj: &O, cfg: &LocalSearchConfig) -> Result<LocalSearchRun> {
    let (m, n) = obj.shape();
    if m > MAX_DIM || n > MAX_DIM {
        return Err(Error::invalid(format!("dimensions are capped at {MAX_DIM}")));
    }
    if !(cfg.eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let r_prime = effective_r_prime(obj, cfg)?;
    let beta = obj.beta_estimate();
    let params = IterateParams {
        r: cfg.r,
        r_prime,
        f_star: cfg.f_star,
        eta: cfg.eta.unwrap_or(1.0 / (2.0 * beta)),
        form: cfg.form,
    };
    let mut state = LowRankState::initial(m, n);
    let mut trace = SolverTrace::new();
    let mut steps = Vec::new();
    let mut f = obj.value(&state.a)?;
    trace.push(TraceRecord {
        iter: 0,
        f,
        g: Some(reg_value(obj, &state)?),
        support: 0,
        weight_mass: Some(state.w.trace() + state.y.trace()),
        branch: None,
    });
    let mut reached = f <= cfg.f_star + cfg.eps;
    let mut iter = 0;
    while !reached && iter < cfg.max_iters {
        iter += 1;
        let (next, tag, delta, g_before, g_after) = match local_search_iterate(obj, &state, &params)? {
            IterateOutcome::TargetReached { .. } => {
                reached = true;
                break;
            }
            IterateOutcome::Stepped {
                state,
                tag,
                delta,
                g_before,
                g_after,
            } => (state, tag, delta, g_before, g_after),
        };
        let (w_dec, y_dec, violations) = if cfg.check_invariants {
            (
                min_eig(&state.w.sub(&next.w)?)?,
                min_eig(&state.y.sub(&next.y)?)?,
                next.invariant_violations(r_prime)?,
            )
        } else {
            (0.0, 0.0, Vec::new())
        };
        steps.push(StepInfo {
            tag,
            delta,
            g_before,
            g_after,
            w_deficit: deficit(&next.w),
            y_deficit: deficit(&next.y),
            w_decrease_min_eig: w_dec,
            y_decrease_min_eig: y_dec,
            violations,
        });
        state = next;
        f = obj.value(&state.a)?;
        trace.push(TraceRecord {
            iter,
            f,
            g: Some(g_after),
            support: state.numeric_rank()?,
            weight_mass: Some(state.w.trace() + state.y.trace()),
            branch: Some(tag.into()),
        });
        reached = f <= cfg.f_star + cfg.eps;
    }
    Ok(LocalSearchRun {
        a: state.a.clone(),
        state,
        trace,
        steps,
        r_prime,
        incomplete: !reached,
    })
}

/// `|<Pi, M>| <= Tr[H_r(M)] + 1e-9` for symmetric PSD `M` and a PSD `Pi` of rank
/// at most `r` with spectral norm at most one.
pub fn trace_ineq_check(pi: &DenseMatrix, m: &DenseMatrix, r: usize) -> Result<bool> {
    if pi.shape() != m.shape() || pi.n_rows() != pi.n_cols() {
        return Err(Error::invalid("Pi and M must be square of equal size"));
    }
    for (name, mat) in [("Pi", pi), ("M", m)] {
        if mat.asymmetry() > 1e-9 {
            return Err(Error::Precondition(format!("{name} is not symmetric")));
        }
    }
    let ep = sym_eigen(pi)?;
    let top = ep.values.first().copied().unwrap_or(0.0);
    let low = ep.values.last().copied().unwrap_or(0.0);
    let rank = ep.values.iter().filter(|v| **v > 1e-9).count();
    if low < -1e-9 || top > 1.0 + 1e-9 || rank > r {
        return Err(Error::Precondition(
            "Pi must be PSD with spectral norm <= 1 and rank <= r".into(),
        ));
    }
    let em = sym_eigen(m)?;
    if em.values.last().copied().unwrap_or(0.0) < -1e-9 * (1.0 + em.values[0].abs()) {
        return Err(Error::Precondition("M is not PSD".into()));
    }
    let bound: f64 = em.values.iter().take(r).map(|v| v.max(0.0)).sum();
    Ok(pi.inner(m)?.abs() <= bound + 1e-9)
}
