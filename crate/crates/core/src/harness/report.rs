use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::harness::config::AlgoKind;
use crate::harness::run::RunOutcome;
use crate::iht::Branch;

pub const CSV_HEADER: [&str; 12] = [
    "run_id",
    "algo",
    "seed",
    "eta",
    "c",
    "iter",
    "f",
    "excess",
    "g",
    "support",
    "weight_mass",
    "branch",
];

/// One iteration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub iter: usize,
    pub f: f64,
    pub excess: Option<f64>,
    pub g: Option<f64>,
    pub support: usize,
    pub weight_mass: Option<f64>,
    pub branch: Option<Branch>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub algo: AlgoKind,
    pub seed: u64,
    pub eta: f64,
    pub c: Option<f64>,
    pub rows: Vec<CsvRow>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes the trace rows of every record. Runs without rows produce no lines.
pub fn emit_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for rec in records {
        for row in &rec.rows {
            w.write_record([
                rec.run_id.clone(),
                rec.algo.as_str().to_string(),
                rec.seed.to_string(),
                fmt_f64(rec.eta),
                fmt_opt(rec.c),
                row.iter.to_string(),
                fmt_f64(row.f),
                fmt_opt(row.excess),
                fmt_opt(row.g),
                row.support.to_string(),
                fmt_opt(row.weight_mass),
                row.branch.map(|b| b.as_str().to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, line: usize, col: usize) -> Result<T> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        line,
        column: col + 1,
        message: format!("cannot parse {:?} as {}", raw, CSV_HEADER[col]),
    })
}

fn opt_field<T: std::str::FromStr>(rec: &csv::StringRecord, line: usize, col: usize) -> Result<Option<T>> {
    if rec.get(col).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        field(rec, line, col).map(Some)
    }
}

/// Inverse of [`emit_csv`]. Consecutive rows with the same `run_id` form one record.
pub fn parse_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "unexpected header".into(),
        });
    }
    let mut records: Vec<RunRecord> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let algo_raw = rec.get(1).unwrap_or("");
        let algo = AlgoKind::parse(algo_raw).map_err(|_| Error::Parse {
            line,
            column: 2,
            message: format!("unknown algorithm {algo_raw:?}"),
        })?;
        let row = CsvRow {
            iter: field(&rec, line, 5)?,
            f: field(&rec, line, 6)?,
            excess: opt_field(&rec, line, 7)?,
            g: opt_field(&rec, line, 8)?,
            support: field(&rec, line, 9)?,
            weight_mass: opt_field(&rec, line, 10)?,
            branch: opt_field(&rec, line, 11)?,
        };
        let run_id = rec.get(0).unwrap_or("");
        match records.last_mut() {
            Some(last) if last.run_id == run_id => last.rows.push(row),
            _ => records.push(RunRecord {
                run_id: run_id.to_string(),
                algo,
                seed: field(&rec, line, 2)?,
                eta: field(&rec, line, 3)?,
                c: opt_field(&rec, line, 4)?,
                rows: vec![row],
            }),
        }
    }
    Ok(records)
}

/// Lowest final f per (algorithm, seed) among completed runs. Ties keep the earlier step size.
pub fn best_per_seed(outcomes: &[RunOutcome]) -> BTreeMap<(AlgoKind, u64), &RunOutcome> {
    let mut best: BTreeMap<(AlgoKind, u64), &RunOutcome> = BTreeMap::new();
    for o in outcomes {
        let Some(f) = o.final_f() else { continue };
        let key = (o.record.algo, o.record.seed);
        let better = match best.get(&key) {
            None => true,
            Some(cur) => {
                let cf = cur.final_f().unwrap_or(f64::INFINITY);
                f < cf || (f == cf && o.eta_index < cur.eta_index)
            }
        };
        if better {
            best.insert(key, o);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; `None` for a single value.
    pub stderr: Option<f64>,
}

impl Band {
    pub fn single_seed(&self) -> bool {
        self.n == 1
    }
}

pub fn stderr_band(values: &[f64]) -> Option<Band> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = (n > 1).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Some(Band { n, mean, stderr })
}

/// Mean and standard error of each group.
pub fn stderr_bands<K: Ord + Clone>(groups: &BTreeMap<K, Vec<f64>>) -> BTreeMap<K, Band> {
    groups
        .iter()
        .filter_map(|(k, v)| stderr_band(v).map(|b| (k.clone(), b)))
        .collect()
}

/// Bands of the best-per-seed final excess, grouped by algorithm.
pub fn excess_bands(outcomes: &[RunOutcome]) -> BTreeMap<AlgoKind, Band> {
    let mut groups: BTreeMap<AlgoKind, Vec<f64>> = BTreeMap::new();
    for ((algo, _), o) in best_per_seed(outcomes) {
        if let Some(e) = o.final_excess() {
            groups.entry(algo).or_default().push(e);
        }
    }
    stderr_bands(&groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<RunRecord> {
        vec![
            RunRecord {
                run_id: "abc-iht-0-0".into(),
                algo: AlgoKind::Iht,
                seed: 0,
                eta: 0.1,
                c: None,
                rows: vec![
                    CsvRow {
                        iter: 0,
                        f: 1.0 / 3.0,
                        excess: Some(1.0),
                        g: None,
                        support: 0,
                        weight_mass: None,
                        branch: None,
                    },
                    CsvRow {
                        iter: 1,
                        f: 1e-300,
                        excess: Some(-0.0),
                        g: None,
                        support: 2,
                        weight_mass: None,
                        branch: Some(Branch::Accepted),
                    },
                ],
            },
            RunRecord {
                run_id: "abc-regiht-0-0".into(),
                algo: AlgoKind::RegIht,
                seed: 0,
                eta: std::f64::consts::PI,
                c: Some(2.0 / 7.0),
                rows: vec![CsvRow {
                    iter: 0,
                    f: 2.5,
                    excess: None,
                    g: Some(3.125),
                    support: 1,
                    weight_mass: Some(9.75),
                    branch: Some(Branch::Reverted),
                }],
            },
        ]
    }

    #[test]
    fn header_is_exact() {
        let mut buf = Vec::new();
        emit_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "run_id,algo,seed,eta,c,iter,f,excess,g,support,weight_mass,branch\n"
        );
    }

    #[test]
    fn round_trip() {
        let recs = sample();
        let mut buf = Vec::new();
        emit_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("3.3333333333333331e-1"));
        assert_eq!(parse_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn parse_reports_position() {
        let text = "run_id,algo,seed,eta,c,iter,f,excess,g,support,weight_mass,branch\n\
                    x,iht,0,0.1,,zero,1.0,,,0,,\n";
        match parse_csv(text.as_bytes()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 6)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn band_examples() {
        let b = stderr_band(&[1.0, 3.0]).unwrap();
        assert_eq!((b.mean, b.stderr), (2.0, Some(1.0)));
        let single = stderr_band(&[4.0]).unwrap();
        assert!(single.single_seed() && single.stderr.is_none());
        assert!(stderr_band(&[]).is_none());
    }
}
