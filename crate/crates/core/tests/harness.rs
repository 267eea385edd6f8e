use std::collections::BTreeMap;

use proptest::prelude::*;
use regiht::harness::{
    best_per_seed, emit_csv, excess_bands, parse_csv, run_experiment, run_experiment_with, stderr_band,
    stderr_bands, AlgoKind, CsvRow, Execution, ExperimentConfig, RunRecord, RunStatus, StepSpec, CSV_HEADER,
};
use regiht::iht::Branch;

fn config(text: &str) -> ExperimentConfig {
    let cfg = ExperimentConfig::from_kv(text).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn zero_iterations_give_the_initial_row_only() {
    let cfg = config("data = recovery:m=20,n=40,s=3\ns = 3\nalgo = iht\neta = 0.1\niters = 0\nseeds = 4\n");
    let batch = run_experiment(&cfg).unwrap();
    assert_eq!(batch.outcomes.len(), 1);
    let rows = &batch.outcomes[0].record.rows;
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].iter, 0);
    assert_eq!(rows[0].support, 0);
}

#[test]
fn sweeps_produce_one_run_per_step_and_seed() {
    let cfg = config("data = recovery:m=20,n=40,s=3\ns = 3\nalgo = iht,regiht\neta = pow2/s:0..3\niters = 5\nseeds = 0..3\n");
    let batch = run_experiment(&cfg).unwrap();
    assert_eq!(batch.outcomes.len(), 2 * 4 * 3);
    assert_eq!(batch.failures(), 0);
    let mut ids: Vec<&str> = batch.outcomes.iter().map(|o| o.record.run_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), 24);
    for o in &batch.outcomes {
        assert!(o.record.run_id.starts_with(&batch.config_hash));
        for row in &o.record.rows {
            assert!(row.excess.unwrap() >= -1e-12);
        }
    }
}

#[test]
fn parallel_and_sequential_batches_agree() {
    let cfg = config("data = recovery:m=30,n=60,s=4\ns = 4\neta = pow2/s:0..4\niters = 30\nseeds = 0..4\n");
    let par = run_experiment_with(&cfg, Execution::Parallel).unwrap();
    let seq = run_experiment_with(&cfg, Execution::Sequential).unwrap();
    assert_eq!(par.records(), seq.records());
}

#[test]
fn csv_file_round_trip() {
    let cfg = config("data = recovery:m=20,n=40,s=3\ns = 3\neta = pow2/s:0..1\niters = 10\nseeds = 0,1\n");
    let batch = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    emit_csv(std::fs::File::create(&path).unwrap(), &batch.records()).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let back = parse_csv(text.as_bytes()).unwrap();
    assert_eq!(back, batch.records());
}

#[test]
fn config_hash_is_a_reproducibility_key() {
    let text = "data = recovery:m=20,n=40,s=3\ns = 3\neta = pow2/s\niters = 10\nseeds = 0..2\n";
    let a = config(text);
    let b = config(&format!("# same run\n{text}out = elsewhere.csv\n"));
    assert_eq!(a.hash(), b.hash());
    assert_eq!(run_experiment(&a).unwrap().records(), run_experiment(&b).unwrap().records());
    let c = config(&text.replace("iters = 10", "iters = 11"));
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn solver_errors_do_not_abort_the_batch() {
    // s' larger than n makes every run fail individually.
    let cfg = config("data = recovery:m=10,n=8,s=2\ns = 2\ns_prime = 9\nalgo = iht\neta = 0.1\niters = 3\nseeds = 0,1\n");
    let batch = run_experiment(&cfg).unwrap();
    assert_eq!(batch.outcomes.len(), 2);
    assert_eq!(batch.failures(), 2);
    assert!(matches!(batch.outcomes[0].status, RunStatus::Failed(_)));
}

#[test]
fn theory_runs_with_reverts_have_monotone_g() {
    let cfg = config(
        "data = planted:n=1200,s=2,kappa=3\ns = 2\nalgo = regiht\ntheory_mode = true\nrevert = true\niters = 400\nseeds = 0..3\n",
    );
    let batch = run_experiment(&cfg).unwrap();
    assert_eq!(batch.failures(), 0);
    for o in &batch.outcomes {
        let gs: Vec<f64> = o.record.rows.iter().map(|r| r.g.unwrap()).collect();
        assert!(gs.windows(2).all(|p| p[1] <= p[0]), "{}", o.record.run_id);
    }
}

#[test]
fn identical_values_have_zero_stderr() {
    let band = stderr_band(&[0.25; 7]).unwrap();
    assert_eq!((band.n, band.mean, band.stderr), (7, 0.25, Some(0.0)));
    let band = stderr_band(&[1.0, 3.0]).unwrap();
    assert_eq!((band.mean, band.stderr), (2.0, Some(1.0)));
    let single = stderr_band(&[5.0]).unwrap();
    assert!(single.single_seed() && single.stderr.is_none());
    assert!(stderr_band(&[]).is_none());
}

#[test]
fn bands_match_independent_recomputation() {
    let cfg = config("data = recovery:m=40,n=120,s=6\ns = 6\neta = pow2/s:0..4\niters = 60\nseeds = 0..20\n");
    let batch = run_experiment(&cfg).unwrap();
    let bands = excess_bands(&batch.outcomes);
    for algo in [AlgoKind::Iht, AlgoKind::RegIht] {
        // Best final excess per seed, picked by hand.
        let mut per_seed: BTreeMap<u64, f64> = BTreeMap::new();
        for o in batch.outcomes.iter().filter(|o| o.record.algo == algo) {
            let Some(e) = o.final_excess() else { continue };
            let slot = per_seed.entry(o.record.seed).or_insert(f64::INFINITY);
            *slot = slot.min(e);
        }
        let values: Vec<f64> = per_seed.values().copied().collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let band = &bands[&algo];
        assert_eq!(band.n, 20);
        assert!((band.mean - mean).abs() <= 1e-12 * mean.abs().max(1e-300));
        assert!((band.stderr.unwrap() - (var / n).sqrt()).abs() <= 1e-9 * (var / n).sqrt().max(1e-300));
    }
    let mut groups = BTreeMap::new();
    groups.insert("a", vec![1.0, 3.0]);
    groups.insert("b", vec![2.0]);
    let out = stderr_bands(&groups);
    assert_eq!(out["a"].stderr, Some(1.0));
    assert!(out["b"].single_seed());
    assert_eq!(best_per_seed(&batch.outcomes).len(), 40);
}

#[test]
fn hard_instance_sweep_separates_the_solvers() {
    let cfg = config(
        "data = hard:kappa=20,s=2\ns = 2\ns_prime = 480\neta = pow2/beta:-8..0\nc = s'/T\niters = 2000\nseeds = 0\n",
    );
    let batch = run_experiment(&cfg).unwrap();
    let best = best_per_seed(&batch.outcomes);
    let iht = best[&(AlgoKind::Iht, 0)];
    let reg = best[&(AlgoKind::RegIht, 0)];
    let f0 = iht.record.rows[0].f;
    assert!(iht.record.rows.iter().all(|r| r.f >= f0));
    assert!(reg.final_f().unwrap() <= 0.3 * reg.record.rows[0].f);
}

#[test]
fn recovery_batch_with_twenty_seeds() {
    let cfg = config("seeds = 0..20\n");
    assert_eq!(cfg.iters, 240);
    assert!(matches!(cfg.eta, StepSpec::Pow2 { .. }));
    let batch = run_experiment(&cfg).unwrap();
    let bands = excess_bands(&batch.outcomes);
    let (iht, reg) = (&bands[&AlgoKind::Iht], &bands[&AlgoKind::RegIht]);
    assert!(reg.mean <= iht.mean, "regiht {:e} vs iht {:e}", reg.mean, iht.mean);
}

fn row_strategy() -> impl Strategy<Value = CsvRow> {
    let opt = || prop::option::of(prop::num::f64::NORMAL);
    (
        0usize..10_000,
        prop::num::f64::NORMAL,
        opt(),
        opt(),
        0usize..1000,
        opt(),
        prop::option::of(prop::sample::select(vec![
            Branch::Accepted,
            Branch::Reverted,
            Branch::Corrective,
            Branch::ProjectionWeightUpdate,
            Branch::RankOneWeightUpdate,
        ])),
    )
        .prop_map(|(iter, f, excess, g, support, weight_mass, branch)| CsvRow {
            iter,
            f,
            excess,
            g,
            support,
            weight_mass,
            branch,
        })
}

fn record_strategy() -> impl Strategy<Value = RunRecord> {
    (
        "[a-f0-9]{4}",
        prop::sample::select(vec![AlgoKind::Iht, AlgoKind::RegIht, AlgoKind::LowRank]),
        0u64..1000,
        prop::num::f64::POSITIVE,
        prop::option::of(prop::num::f64::POSITIVE),
        prop::collection::vec(row_strategy(), 1..6),
    )
        .prop_map(|(id, algo, seed, eta, c, rows)| RunRecord {
            run_id: format!("{id}-{}-{seed}", algo.as_str()),
            algo,
            seed,
            eta,
            c,
            rows,
        })
}

proptest! {
    #[test]
    fn csv_round_trips(records in prop::collection::vec(record_strategy(), 0..5)) {
        // Consecutive records must carry distinct ids to stay separable.
        let mut records = records;
        for (i, r) in records.iter_mut().enumerate() {
            r.run_id = format!("{}-{i}", r.run_id);
        }
        let mut buf = Vec::new();
        emit_csv(&mut buf, &records).unwrap();
        prop_assert_eq!(parse_csv(buf.as_slice()).unwrap(), records);
    }
}
