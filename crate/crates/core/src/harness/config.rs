use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::instances::DEFAULT_DELTA;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Ls,
    Logistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgoKind {
    Iht,
    RegIht,
    LowRank,
}

impl AlgoKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgoKind::Iht => "iht",
            AlgoKind::RegIht => "regiht",
            AlgoKind::LowRank => "lowrank",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "iht" => Ok(AlgoKind::Iht),
            "regiht" => Ok(AlgoKind::RegIht),
            "lowrank" => Ok(AlgoKind::LowRank),
            _ => Err(Error::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// Where the problem comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Svmlight(PathBuf),
    Hard { kappa: usize, s: usize, delta: f64 },
    Recovery { m: usize, n: usize, s: usize, normalize: bool },
    Planted { n: usize, s: usize, kappa: f64 },
    LowRankTarget { m: usize, n: usize, rank: usize },
}

fn kv_fields(body: &str) -> Result<Vec<(&str, &str)>> {
    body.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("expected key=value in data spec, got {p:?}")))
        })
        .collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {v:?} for {key}"))),
    }
}

impl DataSpec {
    /// `hard:kappa=20,s=2`, `recovery:m=100,n=800,s=20`, `planted:n=600,s=2,kappa=2`,
    /// `lowrank:m=32,n=32,rank=1`, `svm:PATH`, or a bare path.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let Some((kind, body)) = spec.split_once(':') else {
            return Ok(DataSpec::Svmlight(PathBuf::from(spec)));
        };
        let fields = kv_fields(body);
        let get = |fields: &[(&str, &str)], key: &str| -> Result<Option<String>> {
            Ok(fields.iter().find(|(k, _)| *k == key).map(|(_, v)| v.to_string()))
        };
        let need = |fields: &[(&str, &str)], key: &str| -> Result<String> {
            get(fields, key)?.ok_or_else(|| Error::Config(format!("data spec missing {key}")))
        };
        match kind {
            "svm" => Ok(DataSpec::Svmlight(PathBuf::from(body))),
            "hard" => {
                let f = fields?;
                Ok(DataSpec::Hard {
                    kappa: num("kappa", &need(&f, "kappa")?)?,
                    s: num("s", &need(&f, "s")?)?,
                    delta: get(&f, "delta")?.map(|v| num("delta", &v)).transpose()?.unwrap_or(DEFAULT_DELTA),
                })
            }
            "recovery" => {
                let f = fields?;
                Ok(DataSpec::Recovery {
                    m: num("m", &need(&f, "m")?)?,
                    n: num("n", &need(&f, "n")?)?,
                    s: num("s", &need(&f, "s")?)?,
                    normalize: get(&f, "normalize")?.map(|v| flag("normalize", &v)).transpose()?.unwrap_or(true),
                })
            }
            "planted" => {
                let f = fields?;
                Ok(DataSpec::Planted {
                    n: num("n", &need(&f, "n")?)?,
                    s: num("s", &need(&f, "s")?)?,
                    kappa: num("kappa", &need(&f, "kappa")?)?,
                })
            }
            "lowrank" => {
                let f = fields?;
                Ok(DataSpec::LowRankTarget {
                    m: num("m", &need(&f, "m")?)?,
                    n: num("n", &need(&f, "n")?)?,
                    rank: num("rank", &need(&f, "rank")?)?,
                })
            }
            _ => Ok(DataSpec::Svmlight(PathBuf::from(spec))),
        }
    }

    pub fn canonical(&self) -> String {
        match self {
            DataSpec::Svmlight(p) => format!("svm:{}", p.display()),
            DataSpec::Hard { kappa, s, delta } => format!("hard:kappa={kappa},s={s},delta={delta}"),
            DataSpec::Recovery { m, n, s, normalize } => {
                format!("recovery:m={m},n={n},s={s},normalize={normalize}")
            }
            DataSpec::Planted { n, s, kappa } => format!("planted:n={n},s={s},kappa={kappa}"),
            DataSpec::LowRankTarget { m, n, rank } => format!("lowrank:m={m},n={n},rank={rank}"),
        }
    }
}

/// Reference quantity that anchors a step-size grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepBase {
    InvS,
    InvSPrime,
    InvBeta,
}

impl StepBase {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "s" => Ok(StepBase::InvS),
            "s'" | "s_prime" => Ok(StepBase::InvSPrime),
            "beta" => Ok(StepBase::InvBeta),
            _ => Err(Error::Config(format!("unknown step base {s:?}"))),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            StepBase::InvS => "s",
            StepBase::InvSPrime => "s'",
            StepBase::InvBeta => "beta",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepSpec {
    Fixed(f64),
    /// `2^i / base` for `i` in `lo..=hi`.
    Pow2 { base: StepBase, lo: i32, hi: i32 },
    /// `factor^k / base` for `k` in `0..count`.
    Mult { base: StepBase, factor: f64, count: usize },
}

impl StepSpec {
    pub const POW2_DEFAULT: (i32, i32) = (0, 8);
    pub const MULT_DEFAULT_COUNT: usize = 25;

    /// `0.05`, `pow2/s`, `pow2/beta:-8..0`, `mult1.2/s`, `mult1.2/s:25`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(v) = s.parse::<f64>() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config("step size must be positive".into()));
            }
            return Ok(StepSpec::Fixed(v));
        }
        let (head, range) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        let (kind, base) = head
            .split_once('/')
            .ok_or_else(|| Error::Config(format!("bad step spec {s:?}")))?;
        let base = StepBase::parse(base)?;
        if kind == "pow2" {
            let (lo, hi) = match range {
                None => Self::POW2_DEFAULT,
                Some(r) => {
                    let (a, b) = r
                        .split_once("..")
                        .ok_or_else(|| Error::Config(format!("bad exponent range {r:?}")))?;
                    (num("eta", a)?, num("eta", b)?)
                }
            };
            if lo > hi {
                return Err(Error::Config("empty exponent range".into()));
            }
            Ok(StepSpec::Pow2 { base, lo, hi })
        } else if let Some(f) = kind.strip_prefix("mult") {
            let factor: f64 = num("eta", f)?;
            let count = range.map(|r| num("eta", r)).transpose()?.unwrap_or(Self::MULT_DEFAULT_COUNT);
            if !(factor > 1.0) || count == 0 {
                return Err(Error::Config("multiplicative grid needs factor > 1 and count > 0".into()));
            }
            Ok(StepSpec::Mult { base, factor, count })
        } else {
            Err(Error::Config(format!("bad step spec {s:?}")))
        }
    }

    pub fn canonical(&self) -> String {
        match self {
            StepSpec::Fixed(v) => format!("{v}"),
            StepSpec::Pow2 { base, lo, hi } => format!("pow2/{}:{lo}..{hi}", base.as_str()),
            StepSpec::Mult { base, factor, count } => format!("mult{factor}/{}:{count}", base.as_str()),
        }
    }

    pub fn values(&self, s: usize, s_prime: usize, beta: f64) -> Vec<f64> {
        let base = |b: StepBase| match b {
            StepBase::InvS => 1.0 / s.max(1) as f64,
            StepBase::InvSPrime => 1.0 / s_prime.max(1) as f64,
            StepBase::InvBeta => 1.0 / beta,
        };
        match self {
            StepSpec::Fixed(v) => vec![*v],
            StepSpec::Pow2 { base: b, lo, hi } => (*lo..=*hi).map(|i| base(*b) * 2f64.powi(i)).collect(),
            StepSpec::Mult { base: b, factor, count } => {
                (0..*count).map(|k| base(*b) * factor.powi(k as i32)).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CSpec {
    /// `s' / T`
    Experiment,
    /// `s' / (4T)`
    Theory,
    Fixed(f64),
}

impl CSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "s'/T" | "experiment" => Ok(CSpec::Experiment),
            "s'/(4T)" | "s'/4T" | "theory" => Ok(CSpec::Theory),
            v => {
                let c: f64 = num("c", v)?;
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(Error::Config("c must be finite and non-negative".into()));
                }
                Ok(CSpec::Fixed(c))
            }
        }
    }

    pub fn canonical(&self) -> String {
        match self {
            CSpec::Experiment => "s'/T".into(),
            CSpec::Theory => "s'/(4T)".into(),
            CSpec::Fixed(v) => format!("{v}"),
        }
    }

    pub fn value(&self, s_prime: usize, t: usize) -> f64 {
        let t = t.max(1) as f64;
        match self {
            CSpec::Experiment => s_prime as f64 / t,
            CSpec::Theory => s_prime as f64 / (4.0 * t),
            CSpec::Fixed(v) => *v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartSpec {
    Zero,
    /// The stuck point of a hard instance.
    Bad,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub data: DataSpec,
    pub algos: Vec<AlgoKind>,
    /// Sparsity (or rank) of the target.
    pub s: usize,
    /// Relaxed sparsity (or rank); defaults to `s`.
    pub s_prime: Option<usize>,
    pub eta: StepSpec,
    pub c: CSpec,
    pub iters: usize,
    pub seeds: Vec<u64>,
    pub rho: f64,
    pub out: Option<PathBuf>,
    pub theory_mode: bool,
    /// Defaults to on in theory mode and off otherwise.
    pub revert: Option<bool>,
    /// Target accuracy relative to `f(0)` for theory parameters and low-rank runs.
    pub eps_rel: f64,
    pub start: Option<StartSpec>,
    pub early_stop: bool,
    /// Runs whose objective exceeds this multiple of `max(f(x0), 1)` are stopped as diverged.
    pub abort_factor: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskKind::Ls,
            data: DataSpec::Recovery {
                m: 100,
                n: 800,
                s: 20,
                normalize: true,
            },
            algos: vec![AlgoKind::Iht, AlgoKind::RegIht],
            s: 20,
            s_prime: None,
            eta: StepSpec::Pow2 {
                base: StepBase::InvS,
                lo: StepSpec::POW2_DEFAULT.0,
                hi: StepSpec::POW2_DEFAULT.1,
            },
            c: CSpec::Experiment,
            iters: 240,
            seeds: vec![0],
            rho: 0.1,
            out: None,
            theory_mode: false,
            revert: None,
            eps_rel: 1e-6,
            start: None,
            early_stop: false,
            abort_factor: 1e6,
        }
    }
}

fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (num("seeds", a.trim())?, num("seeds", b.trim())?);
        if a >= b {
            return Err(Error::Config("empty seed range".into()));
        }
        return Ok((a..b).collect());
    }
    v.split(',').map(|x| num("seeds", x.trim())).collect()
}

impl ExperimentConfig {
    pub fn s_prime(&self) -> usize {
        self.s_prime.unwrap_or(self.s)
    }

    pub fn revert(&self) -> bool {
        self.revert.unwrap_or(self.theory_mode)
    }

    /// Applies one `key = value` setting. Keys mirror the command-line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "task" => {
                self.task = match value {
                    "ls" => TaskKind::Ls,
                    "logistic" => TaskKind::Logistic,
                    _ => return Err(Error::Config(format!("unknown task {value:?}"))),
                }
            }
            "data" => self.data = DataSpec::parse(value)?,
            "algo" => {
                self.algos = value
                    .split(',')
                    .map(|a| AlgoKind::parse(a.trim()))
                    .collect::<Result<Vec<_>>>()?
            }
            "s" | "r" => self.s = num(&key, value)?,
            "s_prime" | "r_prime" => self.s_prime = Some(num(&key, value)?),
            "eta" => self.eta = StepSpec::parse(value)?,
            "c" => self.c = CSpec::parse(value)?,
            "iters" | "t" => self.iters = num(&key, value)?,
            "seed" | "seeds" => self.seeds = parse_seeds(value)?,
            "rho" => {
                let rho: f64 = num(&key, value)?;
                if !(rho >= 0.0) {
                    return Err(Error::Config("rho must be non-negative".into()));
                }
                self.rho = rho;
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "theory_mode" => self.theory_mode = flag(&key, value)?,
            "revert" => self.revert = Some(flag(&key, value)?),
            "eps_rel" => self.eps_rel = num(&key, value)?,
            "start" => {
                self.start = Some(match value {
                    "zero" => StartSpec::Zero,
                    "bad" => StartSpec::Bad,
                    _ => return Err(Error::Config(format!("unknown start {value:?}"))),
                })
            }
            "early_stop" => self.early_stop = flag(&key, value)?,
            "abort_factor" => self.abort_factor = num(&key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Flat `key = value` lines; blank lines and `#` comments are skipped.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.algos.is_empty() {
            return Err(Error::Config("no algorithm selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        if self.s_prime() < 1 {
            return Err(Error::Config("s' must be at least 1".into()));
        }
        if !(self.eps_rel > 0.0) {
            return Err(Error::Config("eps_rel must be positive".into()));
        }
        let lowrank_data = matches!(self.data, DataSpec::LowRankTarget { .. });
        let lowrank_algo = self.algos.contains(&AlgoKind::LowRank);
        if lowrank_algo && (!lowrank_data || self.algos.len() > 1) {
            return Err(Error::Config("lowrank runs alone on lowrank data".into()));
        }
        if lowrank_data && !lowrank_algo {
            return Err(Error::Config("lowrank data needs the lowrank algorithm".into()));
        }
        if self.task == TaskKind::Logistic && !matches!(self.data, DataSpec::Svmlight(_)) {
            return Err(Error::Config("logistic task needs an svmlight data source".into()));
        }
        Ok(())
    }

    /// Every setting, one `key=value` per line in a fixed order.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let task = match self.task {
            TaskKind::Ls => "ls",
            TaskKind::Logistic => "logistic",
        };
        let algos: Vec<&str> = self.algos.iter().map(|a| a.as_str()).collect();
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let start = match self.start {
            None => "default",
            Some(StartSpec::Zero) => "zero",
            Some(StartSpec::Bad) => "bad",
        };
        let _ = writeln!(out, "task={task}");
        let _ = writeln!(out, "data={}", self.data.canonical());
        let _ = writeln!(out, "algo={}", algos.join(","));
        let _ = writeln!(out, "s={}", self.s);
        let _ = writeln!(out, "s_prime={}", self.s_prime());
        let _ = writeln!(out, "eta={}", self.eta.canonical());
        let _ = writeln!(out, "c={}", self.c.canonical());
        let _ = writeln!(out, "iters={}", self.iters);
        let _ = writeln!(out, "seeds={}", seeds.join(","));
        let _ = writeln!(out, "rho={}", self.rho);
        let _ = writeln!(out, "theory_mode={}", self.theory_mode);
        let _ = writeln!(out, "revert={}", self.revert());
        let _ = writeln!(out, "eps_rel={}", self.eps_rel);
        let _ = writeln!(out, "start={start}");
        let _ = writeln!(out, "early_stop={}", self.early_stop);
        let _ = writeln!(out, "abort_factor={}", self.abort_factor);
        out
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`]. The output path is excluded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let cfg = ExperimentConfig::from_kv(
            "# recovery sweep\n\
             data = recovery:m=100,n=800,s=30\n\
             algo = iht,regiht\n\
             s = 30\n\
             eta = mult1.2/s:25\n\
             c = s'/T\n\
             iters = 240\n\
             seeds = 0..20\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds.len(), 20);
        assert_eq!(cfg.s_prime(), 30);
        assert_eq!(
            cfg.eta,
            StepSpec::Mult {
                base: StepBase::InvS,
                factor: 1.2,
                count: 25
            }
        );
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(ExperimentConfig::from_kv("nonsense").is_err());
        assert!(ExperimentConfig::from_kv("colour = red").is_err());
        assert!(ExperimentConfig::from_kv("eta = pow2/x").is_err());
        assert!(ExperimentConfig::from_kv("seeds = 3..3").is_err());
    }

    #[test]
    fn step_grids() {
        let p = StepSpec::parse("pow2/s").unwrap();
        let v = p.values(4, 4, 1.0);
        assert_eq!(v.len(), 9);
        assert_eq!(v[0], 0.25);
        assert_eq!(v[8], 64.0);
        let b = StepSpec::parse("pow2/beta:-8..0").unwrap().values(2, 480, 20.0);
        assert_eq!(b[8], 0.05);
        assert_eq!(b[0], 0.05 / 256.0);
        assert_eq!(StepSpec::parse("0.5").unwrap().values(1, 1, 1.0), vec![0.5]);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.out = Some("x.csv".into());
        assert_eq!(a.hash(), b.hash());
        b.set("iters", "241").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn data_specs_round_trip() {
        for s in [
            "hard:kappa=20,s=2,delta=0.001",
            "recovery:m=100,n=800,s=10,normalize=true",
            "planted:n=600,s=2,kappa=2",
            "lowrank:m=32,n=32,rank=1",
        ] {
            assert_eq!(DataSpec::parse(s).unwrap().canonical(), s);
        }
        assert_eq!(DataSpec::parse("data/x.svm").unwrap(), DataSpec::Svmlight("data/x.svm".into()));
    }
}
