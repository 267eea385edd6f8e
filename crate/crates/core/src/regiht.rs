//! Regularized IHT with adaptively decreasing per-coordinate l2 weights.

use crate::error::{Error, Result};
use crate::iht::{check_abort, check_start, Branch, SolverTrace, Stagnation, TraceRecord};
use crate::linops::{threshold_slice, weighted_sq_norm_unchecked, DenseVector};
use crate::objectives::Objective;

pub const DEFAULT_ROUND_TH: f64 = 0.5;

/// Regularization weights; every entry is zero or lies in `[round_th, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
    round_th: f64,
}

impl WeightVector {
    pub fn ones(n: usize) -> Self {
        WeightVector {
            w: vec![1.0; n],
            round_th: DEFAULT_ROUND_TH,
        }
    }

    pub fn zeros(n: usize) -> Self {
        WeightVector {
            w: vec![0.0; n],
            round_th: DEFAULT_ROUND_TH,
        }
    }

    pub fn new(w: Vec<f64>, round_th: f64) -> Result<Self> {
        if !(round_th > 0.0 && round_th < 1.0) {
            return Err(Error::invalid("round_th must lie in (0, 1)"));
        }
        if let Some(bad) = w.iter().find(|v| !(**v == 0.0 || (**v >= round_th && **v <= 1.0))) {
            return Err(Error::invalid(format!(
                "weight {bad} is neither 0 nor in [{round_th}, 1]"
            )));
        }
        Ok(WeightVector { w, round_th })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn round_th(&self) -> f64 {
        self.round_th
    }

    /// `||w||_1`
    pub fn mass(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Mass with zero entries counted as `round_th`.
    pub fn lifted_mass(&self) -> f64 {
        self.w.iter().map(|v| if *v == 0.0 { self.round_th } else { *v }).sum()
    }

    /// `||1 - w||_1`
    pub fn deficit(&self) -> f64 {
        self.w.iter().map(|v| 1.0 - v).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegIhtConfig {
    pub s_prime: usize,
    pub eta: f64,
    /// Weight step size.
    pub c: f64,
    /// Number of iterations.
    pub t: usize,
    pub revert: bool,
    pub round_th: f64,
    pub early_stop: bool,
    pub abort_above: Option<f64>,
}

impl RegIhtConfig {
    pub fn new(s_prime: usize, eta: f64, c: f64, t: usize) -> Self {
        RegIhtConfig {
            s_prime,
            eta,
            c,
            t,
            revert: false,
            round_th: DEFAULT_ROUND_TH,
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
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::invalid("weight step size must be finite and non-negative"));
        }
        if !(self.round_th > 0.0 && self.round_th < 1.0) {
            return Err(Error::invalid("round_th must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Coefficient of the weighted norm in the revert test.
    pub fn reg_coefficient(&self) -> f64 {
        1.0 / (4.0 * self.eta)
    }
}

/// Weight step size presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CPreset {
    /// `c = s' / T`
    Experiment,
    /// `c = s' / (4T)`
    Theory,
}

impl CPreset {
    pub fn value(self, s_prime: usize, t: usize) -> f64 {
        let t = t.max(1) as f64;
        match self {
            CPreset::Experiment => s_prime as f64 / t,
            CPreset::Theory => s_prime as f64 / (4.0 * t),
        }
    }
}

/// `H_{s'}((1 - w/2) x - eta grad f(x))`.
pub fn regiht_step<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    w: &WeightVector,
    cfg: &RegIhtConfig,
) -> Result<DenseVector> {
    cfg.validate(obj.dim())?;
    check_start(obj, x, cfg.s_prime)?;
    Error::check_dim(x.len(), w.len())?;
    let g = obj.gradient(x)?;
    let y: Vec<f64> = x
        .iter()
        .zip(g.iter())
        .zip(w.as_slice())
        .map(|((xi, gi), wi)| (1.0 - 0.5 * wi) * xi - cfg.eta * gi)
        .collect();
    DenseVector::new(threshold_slice(&y, cfg.s_prime)).map_err(|_| Error::NonFinite("regularized step"))
}

/// `w_i <- w_i - c (w_i x_i)^2 / ||x||_w^2`, then entries below `round_th` drop to zero.
/// Skipped when `||x||_w^2 = 0`.
pub fn weight_update(x: &[f64], w: &WeightVector, c: f64, round_th: f64) -> Result<WeightVector> {
    Error::check_dim(w.len(), x.len())?;
    if !(round_th > 0.0 && round_th < 1.0) {
        return Err(Error::invalid("round_th must lie in (0, 1)"));
    }
    let ws = w.as_slice();
    let reg = weighted_sq_norm_unchecked(x, ws);
    if reg == 0.0 {
        return Ok(WeightVector {
            w: ws.to_vec(),
            round_th,
        });
    }
    let next = ws
        .iter()
        .zip(x)
        .map(|(wi, xi)| {
            let raw = wi - c * (wi * xi).powi(2) / reg;
            if raw < round_th {
                0.0
            } else {
                raw
            }
        })
        .collect();
    Ok(WeightVector { w: next, round_th })
}

/// `g(x) = f(x) + (lambda/2) ||x||_w^2` as an objective.
pub struct RegularizedObjective<'a, O: Objective + ?Sized> {
    inner: &'a O,
    weights: Vec<f64>,
    lambda: f64,
}

impl<'a, O: Objective + ?Sized> RegularizedObjective<'a, O> {
    pub fn new(inner: &'a O, weights: &[f64], lambda: f64) -> Result<Self> {
        Error::check_dim(inner.dim(), weights.len())?;
        Ok(RegularizedObjective {
            inner,
            weights: weights.to_vec(),
            lambda,
        })
    }
}

impl<O: Objective + ?Sized> Objective for RegularizedObjective<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.inner.value(x)? + 0.5 * self.lambda * weighted_sq_norm_unchecked(x, &self.weights))
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, DenseVector)> {
        let (f, g) = self.inner.value_grad(x)?;
        let grad = g
            .iter()
            .zip(x)
            .zip(&self.weights)
            .map(|((gi, xi), wi)| gi + self.lambda * wi * xi)
            .collect();
        let value = f + 0.5 * self.lambda * weighted_sq_norm_unchecked(x, &self.weights);
        Ok((value, DenseVector::new(grad)?))
    }

    fn beta_estimate(&self) -> f64 {
        let wmax = self.weights.iter().fold(0.0f64, |m, v| m.max(*v));
        self.inner.beta_estimate() + self.lambda * wmax
    }

    fn alpha_estimate(&self) -> Option<f64> {
        let wmin = self.weights.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        self.inner.alpha_estimate().map(|a| a + self.lambda * wmin.clamp(0.0, 1.0))
    }
}

/// Known optimum and curvature used to evaluate the per-iteration dichotomy.
#[derive(Clone, Debug)]
pub struct DichotomyContext {
    pub s_star: Vec<usize>,
    pub f_star: f64,
    pub kappa: f64,
    pub beta: f64,
}

/// Both alternatives of the progress/correlation dichotomy, with raw quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct DichotomyReport {
    pub progress_holds: bool,
    pub correlation_holds: bool,
    pub g_x: f64,
    pub g_next: f64,
    /// Required upper bound on `g(x')`.
    pub progress_rhs: f64,
    /// `||x_{S*}||^2_{w^2}`
    pub support_mass: f64,
    /// `||x||_w^2 / (4 kappa + 6)`
    pub support_mass_floor: f64,
    /// `(beta/2) ||x_{S*}||^2_{w^2}`
    pub scaled_support_mass: f64,
    /// `(g(x) - f*) / (8 kappa + 8)`
    pub gap_floor: f64,
}

impl DichotomyReport {
    pub fn either(&self) -> bool {
        self.progress_holds || self.correlation_holds
    }
}

/// Evaluates the two alternatives for one regularized step `x -> x_next` taken with weights `w`.
#[allow(clippy::too_many_arguments)]
pub fn dichotomy_check<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    w: &WeightVector,
    x_next: &[f64],
    ctx: &DichotomyContext,
    s_prime: usize,
    eta: f64,
) -> Result<DichotomyReport> {
    let n = obj.dim();
    Error::check_dim(n, x.len())?;
    Error::check_dim(n, x_next.len())?;
    Error::check_dim(n, w.len())?;
    let s = ctx.s_star.len() as f64;
    let floor = (128.0 * ctx.kappa + 2.0) * s;
    if (s_prime as f64) < floor {
        return Err(Error::Precondition(format!(
            "s' = {s_prime} is below (128 kappa + 2) s = {floor}"
        )));
    }
    let mass_floor = n as f64 - s_prime as f64 / 2.0;
    if w.mass() < mass_floor {
        return Err(Error::Precondition(format!(
            "||w||_1 = {} is below n - s'/2 = {mass_floor}",
            w.mass()
        )));
    }
    let eta_req = 1.0 / (2.0 * ctx.beta);
    if (eta - eta_req).abs() > 1e-12 * eta_req {
        return Err(Error::Precondition(format!(
            "eta = {eta} differs from 1/(2 beta) = {eta_req}"
        )));
    }
    let ws = w.as_slice();
    let half_beta = 0.5 * ctx.beta;
    let g_x = obj.value(x)? + half_beta * weighted_sq_norm_unchecked(x, ws);
    let g_next = obj.value(x_next)? + half_beta * weighted_sq_norm_unchecked(x_next, ws);
    let gap = g_x - ctx.f_star;
    let progress_rhs = if gap > 0.0 {
        g_x - gap / (16.0 * ctx.kappa)
    } else {
        g_x
    };
    let progress_holds = g_next <= progress_rhs + 1e-12 * (1.0 + g_x.abs());

    let support_mass: f64 = ctx.s_star.iter().map(|&i| (ws[i] * x[i]).powi(2)).sum();
    let support_mass_floor = weighted_sq_norm_unchecked(x, ws) / (4.0 * ctx.kappa + 6.0);
    let scaled_support_mass = half_beta * support_mass;
    let gap_floor = gap / (8.0 * ctx.kappa + 8.0);
    let correlation_holds = support_mass >= support_mass_floor && scaled_support_mass >= gap_floor;

    Ok(DichotomyReport {
        progress_holds,
        correlation_holds,
        g_x,
        g_next,
        progress_rhs,
        support_mass,
        support_mass_floor,
        scaled_support_mass,
        gap_floor,
    })
}

#[derive(Clone, Debug)]
pub struct RegIhtRun {
    pub x: DenseVector,
    pub weights: WeightVector,
    pub trace: SolverTrace,
    pub reverts: usize,
    /// One report per iteration when a [`DichotomyContext`] was supplied.
    pub dichotomy: Vec<DichotomyReport>,
}

/// Runs `cfg.t` iterations of the regularized step and weight update from `x0`
/// with all weights starting at one.
pub fn regiht_solve<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    cfg: &RegIhtConfig,
    diagnostics: Option<&DichotomyContext>,
) -> Result<RegIhtRun> {
    let n = obj.dim();
    let w0 = WeightVector::new(vec![1.0; n], cfg.round_th)?;
    regiht_solve_from(obj, x0, w0, cfg, diagnostics)
}

pub fn regiht_solve_from<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    w0: WeightVector,
    cfg: &RegIhtConfig,
    diagnostics: Option<&DichotomyContext>,
) -> Result<RegIhtRun> {
    cfg.validate(obj.dim())?;
    check_start(obj, x0, cfg.s_prime)?;
    Error::check_dim(obj.dim(), w0.len())?;
    let lam = cfg.reg_coefficient();
    let mut x = DenseVector::new(x0.to_vec())?;
    let mut w = w0;
    let mut f = obj.value(&x)?;
    let mut trace = SolverTrace::new();
    trace.push(TraceRecord {
        iter: 0,
        f,
        g: Some(f + lam * weighted_sq_norm_unchecked(&x, w.as_slice())),
        support: x.nnz(),
        weight_mass: Some(w.mass()),
        branch: None,
    });
    let mut reverts = 0;
    let mut dichotomy = Vec::new();
    let mut stagnation = Stagnation::default();

    for t in 1..=cfg.t {
        let candidate = regiht_step(obj, &x, &w, cfg)?;
        if let Some(ctx) = diagnostics {
            dichotomy.push(dichotomy_check(obj, &x, &w, &candidate, ctx, cfg.s_prime, cfg.eta)?);
        }
        let w_next = weight_update(&x, &w, cfg.c, cfg.round_th)?;
        let f_cand = obj.value(&candidate)?;
        let mut branch = Branch::Accepted;
        let (x_next, f_next) = if cfg.revert {
            let g_cand = f_cand + lam * weighted_sq_norm_unchecked(&candidate, w_next.as_slice());
            let g_stay = f + lam * weighted_sq_norm_unchecked(&x, w_next.as_slice());
            if g_cand > g_stay {
                branch = Branch::Reverted;
                reverts += 1;
                (x.clone(), f)
            } else {
                (candidate, f_cand)
            }
        } else {
            (candidate, f_cand)
        };
        check_abort(f_next, cfg.abort_above)?;
        trace.push(TraceRecord {
            iter: t,
            f: f_next,
            g: Some(f_next + lam * weighted_sq_norm_unchecked(&x_next, w_next.as_slice())),
            support: x_next.nnz(),
            weight_mass: Some(w_next.mass()),
            branch: Some(branch),
        });
        let stop = stagnation.observe(f, f_next);
        x = x_next;
        w = w_next;
        f = f_next;
        if cfg.early_stop && stop {
            break;
        }
    }
    Ok(RegIhtRun {
        x,
        weights: w,
        trace,
        reverts,
        dichotomy,
    })
}

/// Parameters for the provable guarantee.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryParams {
    pub s_prime: usize,
    pub eta: f64,
    pub c: f64,
    pub t: usize,
    /// Lower end `8 s (4 kappa + 6) / T` of the admissible weight step window.
    pub c_window_low: f64,
    /// Upper end `s' / (4T)` of the window.
    pub c_window_high: f64,
    pub window_feasible: bool,
}

fn ceil_tolerant(v: f64) -> f64 {
    (v - 1e-9 * v.abs().max(1.0)).ceil()
}

/// `s' = ceil((128 kappa + 2) s)`, `eta = 1/(2 beta)`,
/// `T = max(1, ceil(64 (kappa + 1) ln(f_gap / eps)))`, `c = s' / (4T)`.
pub fn theory_params(kappa: f64, beta: f64, s: usize, f_gap: f64, eps: f64) -> Result<TheoryParams> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::invalid("kappa must be finite and at least 1"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta must be finite and positive"));
    }
    if !(f_gap > 0.0 && eps > 0.0) {
        return Err(Error::invalid("f_gap and eps must be positive"));
    }
    let s_prime = ceil_tolerant((128.0 * kappa + 2.0) * s as f64) as usize;
    let log = (f_gap / eps).ln().max(0.0);
    let t = (ceil_tolerant(64.0 * (kappa + 1.0) * log) as usize).max(1);
    let c = s_prime as f64 / (4.0 * t as f64);
    let c_window_low = 8.0 * s as f64 * (4.0 * kappa + 6.0) / t as f64;
    Ok(TheoryParams {
        s_prime,
        eta: 1.0 / (2.0 * beta),
        c,
        t,
        c_window_low,
        c_window_high: c,
        window_feasible: c_window_low <= c,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightMassReport {
    /// `sum(wbar^0) - sum(wbar^T)` with zeros lifted to `round_th`.
    pub lifted_decrease: f64,
    /// `c T`
    pub decrease_bound: f64,
    /// `||1 - w^T||_1`
    pub deficit: f64,
    /// `2 (c T + ||1 - wbar^0||_1)`, which is `2 c T` from all-ones weights.
    pub deficit_bound: f64,
}

impl WeightMassReport {
    pub fn holds(&self) -> bool {
        let slack = 1e-12 * (1.0 + self.decrease_bound);
        self.lifted_decrease <= self.decrease_bound + slack
            && self.deficit <= self.deficit_bound + 2.0 * slack
    }
}

/// Total weight decrease over `iters` updates of step `c`.
pub fn weight_mass_bounds(w0: &WeightVector, w_final: &WeightVector, c: f64, iters: usize) -> WeightMassReport {
    let ct = c * iters as f64;
    let start_deficit = w0.len() as f64 - w0.lifted_mass();
    WeightMassReport {
        lifted_decrease: w0.lifted_mass() - w_final.lifted_mass(),
        decrease_bound: ct,
        deficit: w_final.deficit(),
        deficit_bound: 2.0 * (ct + start_deficit),
    }
}
