mod common;

use common::{max_abs_diff, to_na};
use proptest::prelude::*;
use regiht::instances::{
    gen_hard_instance, gen_planted_quadratic, gen_recovery_instance, load_svmlight, parse_svmlight, save_svmlight,
    write_svmlight, Dataset, Task, DEFAULT_DELTA,
};
use regiht::iht::{iht_step, IhtConfig};
use regiht::linops::{CsrMatrix, LinearMap};
use regiht::objectives::Objective;
use regiht::oracle::best_sparse_ls;
use regiht::rng::NormalSampler;

#[test]
fn recovery_instance_shape_and_determinism() {
    let inst = gen_recovery_instance(30, 50, 5, 9).unwrap();
    assert_eq!((inst.a.n_rows(), inst.a.n_cols()), (30, 50));
    assert_eq!(inst.x_true.nnz(), 5);
    assert!(max_abs_diff(&inst.a.mul_vec(inst.x_true.as_slice()), inst.b.as_slice()) == 0.0);
    let again = gen_recovery_instance(30, 50, 5, 9).unwrap();
    assert_eq!(inst.x_true, again.x_true);
    assert_eq!(inst.b, again.b);
    let other = gen_recovery_instance(30, 50, 5, 10).unwrap();
    assert_ne!(inst.b, other.b);
}

#[test]
fn recovery_with_empty_support_has_zero_targets() {
    let inst = gen_recovery_instance(10, 20, 0, 1).unwrap();
    assert!(inst.b.iter().all(|v| *v == 0.0));
    assert!(gen_recovery_instance(10, 20, 21, 1).is_err());
}

#[test]
fn normalized_recovery_keeps_an_exact_zero() {
    let inst = gen_recovery_instance(25, 40, 4, 2).unwrap().normalized();
    let obj = inst.objective();
    assert!(obj.value(inst.x_true.as_slice()).unwrap() < 1e-24);
    let dense = to_na(&inst.a.to_dense());
    for j in 0..dense.ncols() {
        let col = dense.column(j);
        assert!(col.sum().abs() < 1e-12);
        assert!((col.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn planted_spectrum_and_minimizer() {
    for (n, s, kappa, seed) in [(12, 3, 4.0, 1), (30, 5, 20.0, 2), (9, 9, 1.5, 3)] {
        let p = gen_planted_quadratic(n, s, kappa, seed).unwrap();
        let a = to_na(&p.objective.design().to_dense());
        let eig = (a.transpose() * &a).symmetric_eigenvalues();
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(0.0, f64::max);
        assert!((lo - 1.0).abs() < 1e-9 && (hi - kappa).abs() < 1e-9 * kappa);
        assert_eq!(p.x_star.nnz(), s);
        assert_eq!(p.x_star.support(), p.s_star);
        assert!(p.objective.value(p.x_star.as_slice()).unwrap() < 1e-24);
    }
}

#[test]
fn unit_condition_number_recovers_in_one_step() {
    let p = gen_planted_quadratic(20, 4, 1.0, 5).unwrap();
    let next = iht_step(&p.objective, &[0.0; 20], &IhtConfig::new(4, 1.0, 1)).unwrap();
    assert!(max_abs_diff(next.as_slice(), p.x_star.as_slice()) < 1e-12);
}

#[test]
fn hard_instance_gap_matches_formula() {
    for (kappa, s, s_prime) in [(4, 2, 4), (10, 2, 10), (20, 3, 50)] {
        let h = gen_hard_instance(kappa, s, s_prime, DEFAULT_DELTA).unwrap();
        let obj = h.objective();
        assert_eq!(h.n(), s * (kappa + 1) + s * kappa * kappa);
        assert_eq!(h.x_star.nnz(), s);
        assert!(h.x_bad.nnz() <= s_prime);
        let gap = obj.value(h.x_bad.as_slice()).unwrap() - obj.value(h.x_star.as_slice()).unwrap();
        assert!((gap - h.predicted_gap()).abs() <= 1e-9 * (1.0 + gap.abs()));
    }
    assert!(gen_hard_instance(4, 2, 4, 0.3).is_err());
}

#[test]
fn svmlight_empty_input() {
    let (a, y) = parse_svmlight("".as_bytes()).unwrap();
    assert_eq!((a.n_rows(), a.n_cols(), y.len()), (0, 0, 0));
    let (a, y) = parse_svmlight("# only a comment\n\n".as_bytes()).unwrap();
    assert_eq!((a.n_rows(), y.len()), (0, 0));
}

#[test]
fn svmlight_reports_positions() {
    let err = parse_svmlight("1 1:2 3:4\n0 2:1 2:3\n".as_bytes()).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
    assert!(parse_svmlight("1 0:1\n".as_bytes()).is_err());
    assert!(parse_svmlight("x 1:1\n".as_bytes()).is_err());
    assert!(parse_svmlight("1 1=2\n".as_bytes()).is_err());
}

#[test]
fn svmlight_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..100 {
        let inst = gen_recovery_instance(6, 5, 2, seed).unwrap();
        let path = dir.path().join(format!("inst{seed}.svm"));
        save_svmlight(&path, &inst.a, inst.b.as_slice()).unwrap();
        let (a, b) = load_svmlight(&path).unwrap();
        assert_eq!(a.to_dense(), inst.a.to_dense());
        assert_eq!(b, inst.b);
    }
}

#[test]
fn classification_labels_are_mapped() {
    let (a, y) = parse_svmlight("-1 1:1 2:3\n1 1:2\n0 2:1\n".as_bytes()).unwrap();
    let ds = Dataset::from_raw(&a, y.clone(), Task::Classification).unwrap();
    assert_eq!(ds.b.as_slice(), &[0.0, 1.0, 0.0]);
    let bad = Dataset::from_raw(&a, regiht::linops::DenseVector::new(vec![2.0, 0.0, 1.0]).unwrap(), Task::Classification);
    assert!(bad.is_err());
    assert_eq!(Dataset::from_raw(&a, y, Task::Regression).unwrap().b.as_slice(), &[-1.0, 1.0, 0.0]);
}

/// Every support of size at most `s`, by plain bitmask enumeration and nalgebra least squares.
fn exhaustive_best(a: &CsrMatrix, b: &[f64], s: usize) -> f64 {
    let dense = to_na(&a.to_dense());
    let bv = nalgebra::DVector::from_column_slice(b);
    let n = dense.ncols();
    let mut best = 0.5 * bv.norm_squared();
    for mask in 1u32..(1 << n) {
        if mask.count_ones() as usize > s {
            continue;
        }
        let cols: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let sub = dense.select_columns(&cols);
        let x = sub.clone().svd(true, true).solve(&bv, 1e-12).unwrap();
        best = best.min(0.5 * (sub * x - &bv).norm_squared());
    }
    best
}

#[test]
fn oracle_matches_exhaustive_enumeration() {
    let mut normals = NormalSampler::new(41);
    for (m, n) in [(8, 6), (5, 8), (12, 10)] {
        let a = CsrMatrix::from_dense(m, n, &normals.vec(m * n)).unwrap();
        let b = normals.vec(m);
        let mut prev = f64::INFINITY;
        for s in 0..=n.min(4) {
            let ours = best_sparse_ls(&a, &b, s).unwrap();
            let reference = exhaustive_best(&a, &b, s);
            assert!((ours.best_value - reference).abs() <= 1e-6, "{} vs {reference}", ours.best_value);
            assert!(ours.best_value <= prev + 1e-12);
            assert!(ours.x_opt.nnz() <= s);
            prev = ours.best_value;
        }
    }
}

#[test]
fn oracle_rejects_large_inputs() {
    let a = CsrMatrix::from_dense(1, 15, &[1.0; 15]).unwrap();
    assert!(best_sparse_ls(&a, &[1.0], 2).is_err());
}

proptest! {
    #[test]
    fn svmlight_text_round_trip(
        rows in prop::collection::vec(prop::collection::vec(prop::option::of(-1e6f64..1e6), 4), 1..8),
        labels in prop::collection::vec(-3i32..3, 8),
    ) {
        let entries: Vec<f64> = rows.iter().flatten().map(|v| v.unwrap_or(0.0)).collect();
        let a = CsrMatrix::from_dense(rows.len(), 4, &entries).unwrap();
        let y: Vec<f64> = labels[..rows.len()].iter().map(|v| *v as f64).collect();
        let mut buf = Vec::new();
        write_svmlight(&mut buf, &a, &y).unwrap();
        let (back, yb) = parse_svmlight(buf.as_slice()).unwrap();
        prop_assert_eq!(yb.as_slice(), &y[..]);
        prop_assert_eq!(back.n_rows(), a.n_rows());
        let (d0, d1) = (a.to_dense(), back.to_dense());
        for r in 0..a.n_rows() {
            for c in 0..back.n_cols() {
                prop_assert_eq!(d0[(r, c)], d1[(r, c)]);
            }
        }
    }
}
