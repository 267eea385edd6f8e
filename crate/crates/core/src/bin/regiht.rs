use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regiht::harness::{
    best_per_seed, emit_csv, excess_bands, run_experiment_with, BatchResult, Execution, ExperimentConfig, RunStatus,
};
use regiht::iht::{is_fixpoint, IhtConfig};
use regiht::instances::{gen_hard_instance, gen_recovery_instance, save_svmlight, DEFAULT_DELTA};
use regiht::linops::DenseMatrix;
use regiht::lowrank::trace_ineq_check;
use regiht::objectives::{gradient_check, Objective};
use regiht::rng::NormalSampler;
use regiht::Result;

#[derive(Parser)]
#[command(name = "regiht", version, about = "Sparse and low-rank solvers with adaptive regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its trace.
    Solve(ExperimentArgs),
    /// Run a sweep and summarize the best run per seed.
    Bench {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Run the sweep on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Write a hard instance in svmlight format.
    GenHard {
        #[arg(long)]
        kappa: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        s_prime: usize,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a Gaussian sparse recovery instance in svmlight format.
    GenRecovery {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Center and unit-normalize the columns first.
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quick numerical self-checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    s_prime: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    /// A seed, a list `1,2,3`, or a range `0..20`.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    theory_mode: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    revert: Option<String>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_kv(&std::fs::read_to_string(path)?)?;
        }
        let overrides = [
            ("algo", &self.algo),
            ("s", &self.s),
            ("s_prime", &self.s_prime),
            ("eta", &self.eta),
            ("c", &self.c),
            ("iters", &self.iters),
            ("seeds", &self.seed),
            ("data", &self.data),
            ("task", &self.task),
            ("rho", &self.rho),
            ("theory_mode", &self.theory_mode),
            ("revert", &self.revert),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_trace(cfg: &ExperimentConfig, batch: &BatchResult) -> Result<()> {
    let records = batch.records();
    match &cfg.out {
        Some(path) => emit_csv(BufWriter::new(File::create(path)?), &records),
        None => emit_csv(io::stdout().lock(), &records),
    }
}

fn report_failures(batch: &BatchResult) {
    for o in &batch.outcomes {
        match &o.status {
            RunStatus::Failed(msg) => eprintln!("run {} failed: {msg}", o.record.run_id),
            RunStatus::Diverged { value, threshold } => {
                eprintln!("run {} diverged: f = {value:e} above {threshold:e}", o.record.run_id)
            }
            RunStatus::Completed => {}
        }
    }
}

fn solve(args: &ExperimentArgs) -> Result<bool> {
    let cfg = args.load()?;
    let batch = run_experiment_with(&cfg, Execution::Parallel)?;
    write_trace(&cfg, &batch)?;
    report_failures(&batch);
    for ((algo, seed), o) in best_per_seed(&batch.outcomes) {
        eprintln!(
            "{} seed {seed}: best eta {:e}, final f {:e}",
            algo.as_str(),
            o.record.eta,
            o.final_f().unwrap_or(f64::NAN)
        );
    }
    Ok(batch.failures() == 0)
}

fn bench(args: &ExperimentArgs, sequential: bool) -> Result<bool> {
    let cfg = args.load()?;
    let exec = if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let start = std::time::Instant::now();
    let batch = run_experiment_with(&cfg, exec)?;
    let elapsed = start.elapsed().as_secs_f64();
    if cfg.out.is_some() {
        write_trace(&cfg, &batch)?;
    }
    report_failures(&batch);
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "config {} ({} runs, {elapsed:.2} s)", batch.config_hash, batch.outcomes.len())?;
    for (algo, band) in excess_bands(&batch.outcomes) {
        let err = match band.stderr {
            Some(e) => format!("{e:.3e}"),
            None => "n/a (single seed)".into(),
        };
        writeln!(
            stdout,
            "{:<8} mean excess {:.6e}  stderr {err}  seeds {}",
            algo.as_str(),
            band.mean,
            band.n
        )?;
    }
    Ok(batch.failures() == 0)
}

fn line(ok: bool, name: &str) -> bool {
    println!("{} {name}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn check(seed: u64) -> Result<bool> {
    let mut all = true;

    let mut fix = true;
    for (s_prime, kappa) in [(4, 4), (10, 10)] {
        let h = gen_hard_instance(kappa, 2, s_prime, DEFAULT_DELTA)?;
        let obj = h.objective();
        for i in 0..=8 {
            let eta = 2f64.powi(-i) / kappa as f64;
            fix &= is_fixpoint(&obj, &h.x_bad, &IhtConfig::new(s_prime, eta, 1))?;
        }
    }
    all &= line(fix, "hard instance start is an IHT fixpoint");

    let inst = gen_recovery_instance(40, 60, 5, seed)?;
    let obj = inst.objective();
    let mut normals = NormalSampler::new(seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let x = normals.vec(obj.dim());
        worst = worst.max(gradient_check(&obj, &x, 1e-5)?);
    }
    all &= line(worst <= 1e-5, "least-squares gradient matches finite differences");

    let mut trace_ok = true;
    for _ in 0..50 {
        let d = 6;
        let g = DenseMatrix::new(d, d, normals.vec(d * d))?;
        let m = g.matmul_tr(&g)?.symmetrize();
        let u = DenseMatrix::new(d, 2, normals.vec(d * 2))?;
        let q = regiht::linops::projector_im(&u)?;
        trace_ok &= trace_ineq_check(&q, &m, 2)?;
    }
    all &= line(trace_ok, "trace inequality on random projectors");
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => solve(args),
        Command::Bench { args, sequential } => bench(args, *sequential),
        Command::GenHard {
            kappa,
            s,
            s_prime,
            delta,
            out,
        } => gen_hard_instance(*kappa, *s, *s_prime, *delta)
            .and_then(|h| save_svmlight(out, &h.a, &h.b))
            .map(|_| true),
        Command::GenRecovery {
            m,
            n,
            s,
            seed,
            normalize,
            out,
        } => gen_recovery_instance(*m, *n, *s, *seed)
            .map(|i| if *normalize { i.normalized() } else { i })
            .and_then(|i| save_svmlight(out, &i.a, &i.b))
            .map(|_| true),
        Command::Check { seed } => check(*seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
