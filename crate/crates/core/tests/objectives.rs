mod common;

use common::{fd_error, max_abs_diff, random_ls, to_na};
use nalgebra::DVector;
use rand::Rng;
use regiht::linops::{CsrMatrix, DenseVector, LinearMap};
use regiht::objectives::{gradient_check, preprocess_design, smoothness_estimate, LeastSquares, Objective, RidgeLogistic};
use regiht::rng::NormalSampler;

#[test]
fn least_squares_gradient_matches_finite_differences() {
    let mut normals = NormalSampler::new(11);
    let obj = random_ls(&mut normals, 6, 4);
    for _ in 0..20 {
        let x = normals.vec(4);
        let g = obj.gradient(&x).unwrap();
        assert!(fd_error(|v| obj.value(v).unwrap(), &x, &g) <= 1e-5);
        assert!(gradient_check(&obj, &DenseVector::new(x).unwrap(), 1e-5).unwrap() <= 1e-5);
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut normals = NormalSampler::new(12);
    let a = CsrMatrix::from_dense(20, 5, &normals.vec(100)).unwrap();
    let labels: Vec<f64> = (0..20).map(|_| normals.rng().random_range(0..2) as f64).collect();
    let obj = RidgeLogistic::new(a, DenseVector::new(labels).unwrap(), 0.1).unwrap();
    for _ in 0..20 {
        let x = normals.vec(5);
        let g = obj.gradient(&x).unwrap();
        assert!(fd_error(|v| obj.value(v).unwrap(), &x, &g) <= 1e-5);
        assert!(gradient_check(&obj, &DenseVector::new(x).unwrap(), 1e-5).unwrap() <= 1e-5);
    }
}

#[test]
fn gradient_check_of_linear_objective_is_roundoff() {
    // With a zero design the loss is constant and the ridge term is absent.
    let a = CsrMatrix::from_dense(3, 2, &[0.0; 6]).unwrap();
    let obj = LeastSquares::new(a, DenseVector::new(vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
    let err = gradient_check(&obj, &DenseVector::new(vec![0.3, -0.7]).unwrap(), 1e-5).unwrap();
    assert!(err < 1e-10);
}

#[test]
fn dense_optimum_matches_normal_equations() {
    let mut normals = NormalSampler::new(13);
    for (m, n) in [(12, 5), (30, 8), (9, 9)] {
        let obj = random_ls(&mut normals, m, n);
        let a = to_na(&obj.design().to_dense());
        let b = DVector::from_vec(obj.target().to_vec());
        let reference = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
        let ours = obj.dense_optimum(1e-12).unwrap();
        assert!(max_abs_diff(ours.as_slice(), reference.as_slice()) < 1e-6);
    }
}

#[test]
fn dense_optimum_from_optimum_stays_put() {
    let mut normals = NormalSampler::new(14);
    let obj = random_ls(&mut normals, 10, 4);
    let x = obj.dense_optimum(1e-12).unwrap();
    let again = obj.dense_optimum_from(&x, 1e-8).unwrap();
    assert!(max_abs_diff(x.as_slice(), again.as_slice()) < 1e-10);
}

#[test]
fn logistic_optimum_is_stationary() {
    let mut normals = NormalSampler::new(15);
    let a = CsrMatrix::from_dense(30, 4, &normals.vec(120)).unwrap();
    let labels: Vec<f64> = (0..30).map(|_| normals.rng().random_range(0..2) as f64).collect();
    let obj = RidgeLogistic::new(a, DenseVector::new(labels).unwrap(), 0.05).unwrap();
    let x = obj.dense_optimum(1e-9).unwrap();
    assert!(obj.gradient(&x).unwrap().norm() <= 1e-9);
}

#[test]
fn preprocessing_explicit_and_implicit_agree() {
    let mut normals = NormalSampler::new(16);
    let a = CsrMatrix::from_dense(4, 3, &normals.vec(12)).unwrap();
    let implicit = preprocess_design(&a);
    let explicit = implicit.to_csr();
    for _ in 0..100 {
        let x = normals.vec(implicit.n_cols());
        let y = normals.vec(implicit.n_rows());
        assert!(max_abs_diff(&implicit.mul_vec(&x), &explicit.mul_vec(&x)) < 1e-12);
        assert!(max_abs_diff(&implicit.mul_transpose_vec(&y), &explicit.mul_transpose_vec(&y)) < 1e-12);
    }
}

#[test]
fn preprocessed_columns_are_centered_unit_vectors() {
    let a = CsrMatrix::from_dense(2, 3, &[1.0, 5.0, 2.0, -1.0, 5.0, 0.0]).unwrap();
    let p = preprocess_design(&a);
    assert_eq!(p.dropped_columns(), &[1]);
    let d = p.to_csr().to_dense();
    let h = 1.0 / 2f64.sqrt();
    assert!((d[(0, 0)] - h).abs() < 1e-15 && (d[(1, 0)] + h).abs() < 1e-15);
}

#[test]
fn sparse_smoothness_bound_holds() {
    let mut normals = NormalSampler::new(17);
    let a = CsrMatrix::from_dense(20, 12, &normals.vec(240)).unwrap();
    let p = preprocess_design(&a);
    let s_prime = 3;
    let bound = smoothness_estimate(s_prime);
    for _ in 0..200 {
        let idx = rand::seq::index::sample(normals.rng(), p.n_cols(), s_prime).into_vec();
        let mut u = vec![0.0; p.n_cols()];
        for &i in &idx {
            u[i] = normals.sample();
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let au = p.mul_vec(&u);
        assert!(au.iter().map(|v| v * v).sum::<f64>() <= bound + 1e-12);
    }
    assert_eq!(smoothness_estimate(10), 10.0);
    assert_eq!(smoothness_estimate(1), 1.0);
}

#[test]
fn curvature_estimates_bracket_the_spectrum() {
    let mut normals = NormalSampler::new(18);
    let obj = random_ls(&mut normals, 15, 6);
    let a = to_na(&obj.design().to_dense());
    let eig = (a.transpose() * &a).symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!((obj.beta_estimate() - hi).abs() <= 1e-6 * hi);
    let alpha = obj.alpha_estimate().unwrap();
    assert!((alpha - lo).abs() <= 1e-6 * hi);
}
