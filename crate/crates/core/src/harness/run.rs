use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::harness::config::{AlgoKind, DataSpec, ExperimentConfig, StartSpec, TaskKind};
use crate::harness::report::{CsvRow, RunRecord};
use crate::iht::{iht_solve, IhtConfig, SolverTrace};
use crate::instances::{gen_hard_instance, gen_planted_quadratic, gen_recovery_instance, Dataset, Task};
use crate::linops::DenseMatrix;
use crate::lowrank::{local_search_solve, FrobeniusTarget, LocalSearchConfig, MatrixObjective, RankMode};
use crate::objectives::{LeastSquares, Objective, RidgeLogistic};
use crate::regiht::{
    regiht_solve, theory_params, weight_mass_bounds, DichotomyContext, RegIhtConfig, WeightMassReport,
    WeightVector,
};
use crate::rng::NormalSampler;

/// How the independent runs of a batch are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    /// Rayon work stealing. Falls back to sequential without the `parallel` feature.
    #[default]
    Parallel,
    Sequential,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Stopped early once f exceeded the abort threshold.
    Diverged { value: f64, threshold: f64 },
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    /// Position of the step size in the sweep.
    pub eta_index: usize,
    pub status: RunStatus,
    pub wall_seconds: f64,
    /// `f(0)`, the scale of the excess column.
    pub f_origin: f64,
    /// Unconstrained optimum value, when it could be computed.
    pub f_dense: Option<f64>,
    pub reverts: usize,
    pub dichotomy_checked: usize,
    pub dichotomy_violations: usize,
    pub weight_mass: Option<WeightMassReport>,
    /// RegIHT weights after the last iteration.
    pub final_weights: Option<Vec<f64>>,
    /// Low-rank invariant violations summed over iterations.
    pub invariant_violations: usize,
}

impl RunOutcome {
    pub fn final_f(&self) -> Option<f64> {
        match self.status {
            RunStatus::Completed => self.record.rows.last().map(|r| r.f),
            _ => None,
        }
    }

    /// `(f_final - f**) / f(0)`, or `f_final / f(0)` when no baseline is known.
    pub fn final_excess(&self) -> Option<f64> {
        let f = self.final_f()?;
        Some((f - self.f_dense.unwrap_or(0.0)) / self.f_origin)
    }
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub config_hash: String,
    pub outcomes: Vec<RunOutcome>,
}

impl BatchResult {
    pub fn failures(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o.status, RunStatus::Failed(_)))
            .count()
    }

    pub fn records(&self) -> Vec<RunRecord> {
        self.outcomes.iter().map(|o| o.record.clone()).collect()
    }
}

enum Problem {
    Vector {
        obj: Box<dyn Objective>,
        x0: Vec<f64>,
        s_star: Option<Vec<usize>>,
    },
    Matrix(FrobeniusTarget),
}

struct Prepared {
    problem: Problem,
    f_origin: f64,
    f_dense: Option<f64>,
}

fn dense_baseline(obj: &dyn Objective) -> Option<f64> {
    let zero = vec![0.0; obj.dim()];
    let g0 = obj.gradient(&zero).ok()?.norm();
    let tol = 1e-10 * g0.max(1.0);
    match obj.dense_optimum(tol) {
        Ok(x) => obj.value(&x).ok(),
        Err(Error::NotConverged { best: Some(x), .. }) => obj.value(&x).ok(),
        Err(_) => None,
    }
}

fn low_rank_target(m: usize, n: usize, rank: usize, seed: u64) -> Result<FrobeniusTarget> {
    if rank > m.min(n) {
        return Err(Error::invalid(format!("rank {rank} exceeds min({m}, {n})")));
    }
    let mut normals = NormalSampler::new(seed);
    let mut b = DenseMatrix::zeros(m, n);
    for _ in 0..rank {
        let u = normals.vec(m);
        let v = normals.vec(n);
        b = b.add(&DenseMatrix::outer(&u, &v))?;
    }
    Ok(FrobeniusTarget { b })
}

fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let vector = |obj: Box<dyn Objective>, x0: Vec<f64>, s_star: Option<Vec<usize>>, f_dense: Option<f64>| {
        let f_origin = obj.value(&vec![0.0; obj.dim()])?;
        let f_dense = f_dense.or_else(|| dense_baseline(obj.as_ref()));
        Ok(Prepared {
            problem: Problem::Vector { obj, x0, s_star },
            f_origin,
            f_dense,
        })
    };
    match &cfg.data {
        DataSpec::Svmlight(path) => {
            let task = match cfg.task {
                TaskKind::Ls => Task::Regression,
                TaskKind::Logistic => Task::Classification,
            };
            let data = Dataset::load(path, task)?;
            let n = data.a.kept_columns().len();
            let obj: Box<dyn Objective> = match cfg.task {
                TaskKind::Ls => Box::new(LeastSquares::new(data.a, data.b)?),
                TaskKind::Logistic => Box::new(RidgeLogistic::new(data.a, data.b, cfg.rho)?),
            };
            vector(obj, vec![0.0; n], None, None)
        }
        DataSpec::Hard { kappa, s, delta } => {
            let h = gen_hard_instance(*kappa, *s, cfg.s_prime(), *delta)?;
            let x0 = match cfg.start.unwrap_or(StartSpec::Bad) {
                StartSpec::Bad => h.x_bad.to_vec(),
                StartSpec::Zero => vec![0.0; h.n()],
            };
            vector(Box::new(h.objective()), x0, Some(h.x_star.support()), None)
        }
        DataSpec::Recovery { m, n, s, normalize } => {
            let inst = gen_recovery_instance(*m, *n, *s, seed)?;
            let inst = if *normalize { inst.normalized() } else { inst };
            let dim = inst.x_true.len();
            vector(Box::new(inst.objective()), vec![0.0; dim], Some(inst.x_true.support()), None)
        }
        DataSpec::Planted { n, s, kappa } => {
            let p = gen_planted_quadratic(*n, *s, *kappa, seed)?;
            vector(Box::new(p.objective), vec![0.0; *n], Some(p.s_star), Some(p.f_star))
        }
        DataSpec::LowRankTarget { m, n, rank } => {
            let t = low_rank_target(*m, *n, *rank, seed)?;
            let f_origin = t.value(&DenseMatrix::zeros(*m, *n))?;
            Ok(Prepared {
                problem: Problem::Matrix(t),
                f_origin,
                f_dense: Some(0.0),
            })
        }
    }
}

struct Job {
    prepared: Arc<Prepared>,
    algo: AlgoKind,
    seed: u64,
    eta: f64,
    eta_index: usize,
}

fn rows_from_trace(trace: &SolverTrace, f_origin: f64, f_dense: Option<f64>) -> Vec<CsvRow> {
    trace
        .records()
        .iter()
        .map(|r| CsvRow {
            iter: r.iter,
            f: r.f,
            excess: match f_dense {
                Some(fd) if f_origin != 0.0 => Some((r.f - fd) / f_origin),
                _ => None,
            },
            g: r.g,
            support: r.support,
            weight_mass: r.weight_mass,
            branch: r.branch,
        })
        .collect()
}

fn run_job(cfg: &ExperimentConfig, hash: &str, job: &Job) -> RunOutcome {
    let start = Instant::now();
    let mut outcome = RunOutcome {
        record: RunRecord {
            run_id: format!("{hash}-{}-{}-{}", job.algo.as_str(), job.seed, job.eta_index),
            algo: job.algo,
            seed: job.seed,
            eta: job.eta,
            c: None,
            rows: Vec::new(),
        },
        eta_index: job.eta_index,
        status: RunStatus::Completed,
        wall_seconds: 0.0,
        f_origin: job.prepared.f_origin,
        f_dense: job.prepared.f_dense,
        reverts: 0,
        dichotomy_checked: 0,
        dichotomy_violations: 0,
        weight_mass: None,
        final_weights: None,
        invariant_violations: 0,
    };
    if let Err(e) = execute(cfg, job, &mut outcome) {
        outcome.status = match e {
            Error::Diverged { value, threshold } => RunStatus::Diverged { value, threshold },
            other => RunStatus::Failed(other.to_string()),
        };
    }
    outcome.wall_seconds = start.elapsed().as_secs_f64();
    outcome
}

fn execute(cfg: &ExperimentConfig, job: &Job, out: &mut RunOutcome) -> Result<()> {
    let p = &job.prepared;
    match (&p.problem, job.algo) {
        (Problem::Vector { obj, x0, s_star }, AlgoKind::Iht | AlgoKind::RegIht) => {
            let f_start = obj.value(x0)?;
            let abort = Some(cfg.abort_factor * f_start.max(1.0));
            let (s_prime, eta, c, iters, diag) = if cfg.theory_mode {
                let kappa = obj
                    .kappa()
                    .ok_or_else(|| Error::Precondition("theory mode needs a condition number".into()))?;
                let f_star = p.f_dense.unwrap_or(0.0);
                let tp = theory_params(
                    kappa,
                    obj.beta_estimate(),
                    cfg.s,
                    f_start - f_star,
                    cfg.eps_rel * p.f_origin,
                )?;
                let diag = s_star.as_ref().map(|s| DichotomyContext {
                    s_star: s.clone(),
                    f_star,
                    kappa,
                    beta: obj.beta_estimate(),
                });
                (tp.s_prime, tp.eta, tp.c, tp.t, diag)
            } else {
                let sp = cfg.s_prime();
                (sp, job.eta, cfg.c.value(sp, cfg.iters), cfg.iters, None)
            };
            out.record.eta = eta;
            let trace = if job.algo == AlgoKind::Iht {
                let mut ic = IhtConfig::new(s_prime, eta, iters);
                ic.early_stop = cfg.early_stop;
                ic.abort_above = abort;
                iht_solve(obj.as_ref(), x0, &ic)?.1
            } else {
                out.record.c = Some(c);
                let mut rc = RegIhtConfig::new(s_prime, eta, c, iters);
                rc.revert = cfg.revert();
                rc.early_stop = cfg.early_stop;
                rc.abort_above = abort;
                let run = regiht_solve(obj.as_ref(), x0, &rc, diag.as_ref())?;
                out.reverts = run.reverts;
                out.dichotomy_checked = run.dichotomy.len();
                out.dichotomy_violations = run.dichotomy.iter().filter(|d| !d.either()).count();
                out.weight_mass = Some(weight_mass_bounds(
                    &WeightVector::new(vec![1.0; obj.dim()], rc.round_th)?,
                    &run.weights,
                    c,
                    run.trace.len() - 1,
                ));
                out.final_weights = Some(run.weights.as_slice().to_vec());
                run.trace
            };
            out.record.rows = rows_from_trace(&trace, p.f_origin, p.f_dense);
            Ok(())
        }
        (Problem::Matrix(target), AlgoKind::LowRank) => {
            let mut lc = LocalSearchConfig::new(cfg.s, cfg.s_prime(), 0.0, cfg.eps_rel * p.f_origin, cfg.iters);
            lc.mode = if cfg.theory_mode {
                RankMode::Theory
            } else {
                RankMode::Experimental
            };
            lc.eta = Some(job.eta);
            lc.check_invariants = true;
            let run = local_search_solve(target, &lc)?;
            out.invariant_violations = run.steps.iter().map(|s| s.violations.len()).sum();
            out.record.rows = rows_from_trace(&run.trace, p.f_origin, p.f_dense);
            Ok(())
        }
        _ => Err(Error::Config(format!(
            "algorithm {} does not apply to this data source",
            job.algo.as_str()
        ))),
    }
}

fn seed_dependent(data: &DataSpec) -> bool {
    !matches!(data, DataSpec::Svmlight(_) | DataSpec::Hard { .. })
}

fn step_values(cfg: &ExperimentConfig, algo: AlgoKind, p: &Prepared) -> Vec<f64> {
    match (&p.problem, algo) {
        (_, _) if cfg.theory_mode && algo != AlgoKind::LowRank => vec![f64::NAN],
        (Problem::Matrix(t), _) => match cfg.eta {
            crate::harness::config::StepSpec::Fixed(v) => vec![v],
            _ => vec![1.0 / (2.0 * t.beta_estimate())],
        },
        (Problem::Vector { obj, .. }, _) => cfg.eta.values(cfg.s, cfg.s_prime(), obj.beta_estimate()),
    }
}

fn failed(hash: &str, algo: AlgoKind, seed: u64, msg: String) -> RunOutcome {
    RunOutcome {
        record: RunRecord {
            run_id: format!("{hash}-{}-{seed}-0", algo.as_str()),
            algo,
            seed,
            eta: f64::NAN,
            c: None,
            rows: Vec::new(),
        },
        eta_index: 0,
        status: RunStatus::Failed(msg),
        wall_seconds: 0.0,
        f_origin: f64::NAN,
        f_dense: None,
        reverts: 0,
        dichotomy_checked: 0,
        dichotomy_violations: 0,
        weight_mass: None,
        final_weights: None,
        invariant_violations: 0,
    }
}

#[cfg(feature = "parallel")]
fn map_jobs<T: Sync, U: Send>(items: &[T], exec: Execution, f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    match exec {
        Execution::Parallel => items.par_iter().map(f).collect(),
        Execution::Sequential => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_jobs<T: Sync, U: Send>(items: &[T], _exec: Execution, f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Runs every (seed, algorithm, step size) combination of the configuration.
/// Failures are recorded per run and never abort the batch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<BatchResult> {
    run_experiment_with(cfg, Execution::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, exec: Execution) -> Result<BatchResult> {
    cfg.validate()?;
    let hash = cfg.hash();
    let prep_seeds: Vec<u64> = if seed_dependent(&cfg.data) {
        cfg.seeds.clone()
    } else {
        vec![cfg.seeds[0]]
    };
    let prepared: Vec<std::result::Result<Arc<Prepared>, String>> =
        map_jobs(&prep_seeds, exec, |&seed| prepare(cfg, seed).map(Arc::new).map_err(|e| e.to_string()));

    let mut outcomes = Vec::new();
    let mut jobs = Vec::new();
    for (k, &seed) in cfg.seeds.iter().enumerate() {
        let entry = if seed_dependent(&cfg.data) { &prepared[k] } else { &prepared[0] };
        for &algo in &cfg.algos {
            match entry {
                Err(msg) => outcomes.push(failed(&hash, algo, seed, msg.clone())),
                Ok(p) => {
                    for (eta_index, eta) in step_values(cfg, algo, p).into_iter().enumerate() {
                        jobs.push(Job {
                            prepared: Arc::clone(p),
                            algo,
                            seed,
                            eta,
                            eta_index,
                        });
                    }
                }
            }
        }
    }
    outcomes.extend(map_jobs(&jobs, exec, |job| run_job(cfg, &hash, job)));
    outcomes.sort_by(|a, b| {
        (a.record.seed, a.record.algo, a.eta_index).cmp(&(b.record.seed, b.record.algo, b.eta_index))
    });
    Ok(BatchResult {
        config_hash: hash,
        outcomes,
    })
}
