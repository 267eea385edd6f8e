mod common;

use common::random_ls;
use rand::Rng;
use regiht::iht::{iht_solve, iht_step, is_fixpoint, IhtConfig};
use regiht::instances::{gen_hard_instance, gen_planted_quadratic, DEFAULT_DELTA};
use regiht::objectives::Objective;
use regiht::regiht::{regiht_solve, regiht_step, weight_update, RegIhtConfig, WeightVector};
use regiht::rng::NormalSampler;

#[test]
fn iht_converges_on_planted_instance() {
    let p = gen_planted_quadratic(200, 5, 2.0, 3).unwrap();
    let obj = &p.objective;
    let cfg = IhtConfig::new(5, 1.0 / obj.beta_estimate(), 500);
    let (x, trace) = iht_solve(obj, &vec![0.0; 200], &cfg).unwrap();
    assert!(obj.value(&x).unwrap() <= 1e-6);
    assert!(trace.records().iter().all(|r| r.support <= 5));
}

#[test]
fn iht_makes_no_progress_on_hard_instance() {
    let h = gen_hard_instance(20, 2, 480, DEFAULT_DELTA).unwrap();
    let obj = h.objective();
    let f0 = obj.value(&h.x_bad).unwrap();
    for i in 0..=8 {
        let cfg = IhtConfig::new(480, 2f64.powi(-i) / 20.0, 200);
        let (_, trace) = iht_solve(&obj, &h.x_bad, &cfg).unwrap();
        assert!(trace.records().iter().all(|r| r.f >= f0));
    }
}

#[test]
fn restricted_optimum_is_a_fixpoint() {
    let mut normals = NormalSampler::new(21);
    let obj = random_ls(&mut normals, 12, 6);
    let x = obj.dense_optimum(1e-13).unwrap();
    // Full support: the restricted gradient vanishes, so one step moves by roundoff only.
    let next = iht_step(&obj, &x, &IhtConfig::new(6, 0.5 / obj.beta_estimate(), 1)).unwrap();
    assert!(common::max_abs_diff(next.as_slice(), x.as_slice()) < 1e-10);
}

#[test]
fn random_points_are_not_fixpoints() {
    let mut normals = NormalSampler::new(22);
    for _ in 0..20 {
        let obj = random_ls(&mut normals, 10, 6);
        let mut x = normals.vec(6);
        x[5] = 0.0;
        let cfg = IhtConfig::new(5, 1.0 / obj.beta_estimate(), 1);
        let step = iht_step(&obj, &x, &cfg).unwrap();
        assert_eq!(is_fixpoint(&obj, &x, &cfg).unwrap(), step.as_slice() == x.as_slice());
        assert!(!is_fixpoint(&obj, &x, &cfg).unwrap());
    }
}

#[test]
fn zero_weights_match_plain_iht_bitwise() {
    let mut normals = NormalSampler::new(23);
    for _ in 0..20 {
        let obj = random_ls(&mut normals, 8, 7);
        let mut x = normals.vec(7);
        x[0] = 0.0;
        x[3] = 0.0;
        let eta = normals.rng().random_range(0.1..1.0) / obj.beta_estimate();
        let plain = iht_step(&obj, &x, &IhtConfig::new(5, eta, 1)).unwrap();
        let reg = regiht_step(&obj, &x, &WeightVector::zeros(7), &RegIhtConfig::new(5, eta, 0.0, 1)).unwrap();
        assert_eq!(plain.as_slice(), reg.as_slice());
    }
}

#[test]
fn weight_update_replay() {
    let w = WeightVector::ones(2);
    let a = weight_update(&[1.0, 1.0], &w, 0.6, 0.5).unwrap();
    assert!((a.as_slice()[0] - 0.7).abs() < 1e-15 && (a.as_slice()[1] - 0.7).abs() < 1e-15);
    let b = weight_update(&[1.0, 1.0], &w, 1.2, 0.5).unwrap();
    assert_eq!(b.as_slice(), &[0.0, 0.0]);
    let untouched = weight_update(&[0.0, 0.0], &w, 1.0, 0.5).unwrap();
    assert_eq!(untouched.as_slice(), &[1.0, 1.0]);
}

#[test]
fn regiht_escapes_hard_instance() {
    let h = gen_hard_instance(20, 2, 480, DEFAULT_DELTA).unwrap();
    let obj = h.objective();
    let f0 = obj.value(&h.x_bad).unwrap();
    let cfg = RegIhtConfig::new(480, 0.05, 480.0 / 2000.0, 2000);
    let run = regiht_solve(&obj, &h.x_bad, &cfg, None).unwrap();
    assert!(obj.value(&run.x).unwrap() <= 0.3 * f0);
}

#[test]
fn weight_mass_stays_within_budget() {
    let mut normals = NormalSampler::new(24);
    let obj = random_ls(&mut normals, 30, 40);
    let (c, t) = (0.05, 300);
    let run = regiht_solve(&obj, &vec![0.0; 40], &RegIhtConfig::new(5, 0.5 / obj.beta_estimate(), c, t), None)
        .unwrap();
    let w = run.weights.as_slice();
    let lifted: f64 = w.iter().map(|&v| if v == 0.0 { 0.5 } else { v }).sum();
    assert!(40.0 - lifted <= c * t as f64 + 1e-9);
    assert!(w.iter().map(|v| 1.0 - v).sum::<f64>() <= 2.0 * c * t as f64 + 1e-9);
    // Each recorded mass differs from the previous one by at most c before rounding.
    let masses: Vec<f64> = run.trace.records().iter().map(|r| r.weight_mass.unwrap()).collect();
    assert!(masses.windows(2).all(|p| p[1] <= p[0] + 1e-12));
}
