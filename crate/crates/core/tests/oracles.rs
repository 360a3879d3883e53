//! Library results against the independent reference code in `common`.

mod common;

use faer::Mat;
use funnystrom::functions::matrix_function_dense;
use funnystrom::linalg::{best_rank_k, schatten_norm};
use funnystrom::nystrom::{nystrom_factor, projection_one_sided};
use funnystrom::sketch::{build_basis, rpcholesky, rpcholesky_basis};
use funnystrom::{
    funnystrom, nystrom_truncated, NormKind, OrthonormalBasis, ScalarFunction, Scheme, SketchConfig, SpsdMatrix,
};

use common::*;

fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn gaussian_q(n: usize, l: usize, seed: u64) -> OrthonormalBasis {
    OrthonormalBasis::explicit(gaussian(n, l, seed)).unwrap()
}

#[test]
fn eigenvalues_match_jacobi() {
    for seed in 0..10 {
        let a = random_spsd(12, 0.0, seed);
        let (values, _) = jacobi_eigen(&to_dense(a.entries()));
        let top = values[0];
        for (x, y) in a.eigenvalues().iter().zip(&values) {
            assert!((x - y).abs() <= 1e-12 * top, "seed {seed}: {x} vs {y}");
        }
    }
}

#[test]
fn jacobi_reconstructs_input() {
    let a = to_dense(random_spsd(9, 0.1, 3).entries());
    let (values, vectors) = jacobi_eigen(&a);
    let back = spectral(&values, &vectors, |d| d);
    assert!(max_abs_diff(&a, &back) < 1e-12 * frobenius(&a));
}

#[test]
fn nystrom_matches_direct_formula() {
    for seed in 0..20 {
        let n = 8 + (seed as usize % 7);
        let l = 2 + (seed as usize % 4);
        let a = random_spsd(n, 0.0, seed);
        let q = gaussian_q(n, l, seed + 100);
        let direct = nystrom_direct(&to_dense(a.entries()), &to_dense(q.matrix()));
        let lib = to_dense(nystrom_factor(&a, &q).unwrap().to_dense().as_ref());
        let scale = frobenius(&to_dense(a.entries()));
        assert!(max_abs_diff(&direct, &lib) < 1e-10 * scale, "seed {seed}");
    }
}

#[test]
fn truncated_nystrom_matches_truncated_direct() {
    for seed in 0..20 {
        let a = random_spsd(10, 0.0, seed);
        let q = gaussian_q(10, 5, seed + 7);
        let direct = best_rank_k_direct(&nystrom_direct(&to_dense(a.entries()), &to_dense(q.matrix())), 3);
        let lib = to_dense(nystrom_truncated(&a, &q, 3).unwrap().to_dense().as_ref());
        assert!(max_abs_diff(&direct, &lib) < 1e-10 * a.lambda_max(), "seed {seed}");
    }
}

#[test]
fn best_rank_k_matches_jacobi() {
    let a = random_spsd(11, 0.0, 42);
    for k in 1..=11 {
        let lib = to_dense(best_rank_k(&a, k).unwrap().to_dense().as_ref());
        let direct = best_rank_k_direct(&to_dense(a.entries()), k);
        assert!(max_abs_diff(&lib, &direct) < 1e-11 * a.lambda_max(), "k = {k}");
    }
}

#[test]
fn funnystrom_is_f_of_the_nystrom_eigenvalues() {
    let f = ScalarFunction::sqrt();
    for seed in 0..10 {
        let a = random_spsd(9, 0.0, seed);
        let q = gaussian_q(9, 4, seed + 1);
        let nys = nystrom_truncated(&a, &q, 3).unwrap();
        let lib = to_dense(funnystrom(&nys, &f).unwrap().to_dense().as_ref());
        let (values, vectors) = jacobi_eigen(&to_dense(nys.to_dense().as_ref()));
        let top3: Vec<f64> = values.iter().take(3).copied().collect();
        let direct = spectral(&top3, &vectors, |d| d.max(0.0).sqrt());
        assert!(
            max_abs_diff(&lib, &direct) < 1e-9 * a.lambda_max().sqrt(),
            "seed {seed}"
        );
    }
}

#[test]
fn matrix_function_matches_jacobi() {
    let a = random_spsd(8, 0.0, 5);
    for f in [
        ScalarFunction::sqrt(),
        ScalarFunction::log1p(),
        ScalarFunction::min_one(),
    ] {
        let lib = to_dense(matrix_function_dense(&a, &f).unwrap().as_ref());
        let (values, vectors) = jacobi_eigen(&to_dense(a.entries()));
        let direct = spectral(&values, &vectors, |d| f.eval(d.max(0.0)));
        assert!(
            max_abs_diff(&lib, &direct) < 1e-11 * (1.0 + a.lambda_max()),
            "{}",
            f.name()
        );
    }
}

#[test]
fn schatten_norms_match_jacobi() {
    let a = to_dense(random_spsd(7, 0.0, 8).entries());
    let b = to_dense(random_spsd(7, 0.0, 9).entries());
    let d = sub(&a, &b);
    let (values, _) = jacobi_eigen(&d);
    let sv: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let m = from_dense(&d);
    let cases = [
        (NormKind::Nuclear, sv.iter().sum::<f64>()),
        (NormKind::Frobenius, sv.iter().map(|s| s * s).sum::<f64>().sqrt()),
        (NormKind::Operator, sv.iter().fold(0.0, |x: f64, &s| x.max(s))),
        (
            NormKind::Schatten(3.0),
            sv.iter().map(|s| s.powi(3)).sum::<f64>().cbrt(),
        ),
    ];
    for (kind, expected) in cases {
        let got = schatten_norm(m.as_ref(), kind).unwrap();
        assert!(
            (got - expected).abs() < 1e-12 * expected,
            "{}: {got} vs {expected}",
            kind.name()
        );
    }
}

#[test]
fn gittens_mahoney_identity() {
    for seed in 0..10 {
        let a = random_spsd(9, 0.0, seed);
        let q = gaussian_q(9, 3, seed + 50);
        let ad = to_dense(a.entries());
        let (values, vectors) = jacobi_eigen(&ad);
        let half = spectral(&values, &vectors, |d| d.max(0.0).sqrt());
        let hq = matmul(&half, &to_dense(q.matrix()));
        let proj = matmul(
            &matmul(&hq, &pinv_sym(&matmul(&transpose(&hq), &hq), 1e-12)),
            &transpose(&hq),
        );
        let rhs = matmul(&matmul(&half, &proj), &half);
        let lhs = to_dense(nystrom_factor(&a, &q).unwrap().to_dense().as_ref());
        assert!(max_abs_diff(&lhs, &rhs) < 1e-10 * frobenius(&ad), "seed {seed}");
    }
}

#[test]
fn one_sided_projection_error_matches_direct() {
    for seed in 0..10 {
        let a = random_spsd(10, 0.0, seed);
        let q = gaussian_q(10, 4, seed + 3);
        let ad = to_dense(a.entries());
        let qd = to_dense(q.matrix());
        let b = matmul(&matmul(&qd, &transpose(&qd)), &ad);
        // (B)_(2) = U_2 U_2^T B with U from the Gram matrix B B^T.
        let (_, u) = jacobi_eigen(&matmul(&b, &transpose(&b)));
        let u2: Dense = u.iter().map(|r| r[..2].to_vec()).collect();
        let b2 = matmul(&matmul(&u2, &transpose(&u2)), &b);
        let direct = frobenius(&sub(&ad, &b2));
        let lib = projection_one_sided(&a, &q, 2).unwrap().to_dense();
        let got = frobenius(&sub(&ad, &to_dense(lib.as_ref())));
        assert!(
            (got - direct).abs() < 1e-10 * frobenius(&ad),
            "seed {seed}: {got} vs {direct}"
        );
    }
}

#[test]
fn rpcholesky_forced_pivot() {
    let a = SpsdMatrix::from_diagonal(&[0.0, 0.0, 5.0, 0.0]).unwrap();
    let run = rpcholesky(&a, 1, 17).unwrap();
    assert_eq!(run.pivots, vec![2]);
}

#[test]
fn rpcholesky_rank_one_is_exact_after_one_pivot() {
    let v = [1.0, -2.0, 0.5, 3.0];
    let a = SpsdMatrix::new(Mat::from_fn(4, 4, |i, j| v[i] * v[j])).unwrap();
    let run = rpcholesky(&a, 1, 4).unwrap();
    assert!(*run.residual_traces.last().unwrap() < 1e-13);
    let approx = &run.factor * run.factor.transpose();
    for i in 0..4 {
        for j in 0..4 {
            assert!((approx[(i, j)] - v[i] * v[j]).abs() < 1e-13);
        }
    }
}

#[test]
fn rpcholesky_basis_nystrom_matches_column_formula() {
    let a = random_spsd(30, 0.0, 12);
    let basis = rpcholesky_basis(&a, 10, 99).unwrap();
    let again = rpcholesky_basis(&a, 10, 99).unwrap();
    assert_eq!(basis.pivots, again.pivots);
    let direct = nystrom_direct(&to_dense(a.entries()), &to_dense(basis.matrix()));
    let lib = to_dense(nystrom_factor(&a, &basis).unwrap().to_dense().as_ref());
    assert!(max_abs_diff(&direct, &lib) < 1e-10 * a.lambda_max());
}

#[test]
fn square_basis_recovers_best_rank_k() {
    let a = random_spsd(8, 0.0, 21);
    let cfg = SketchConfig::new(3, 8, 0, 1).unwrap();
    let q = build_basis(&a, Scheme::Gaussian, &cfg).unwrap();
    let lib = to_dense(nystrom_truncated(&a, &q, 3).unwrap().to_dense().as_ref());
    let direct = best_rank_k_direct(&to_dense(a.entries()), 3);
    assert!(max_abs_diff(&lib, &direct) < 1e-9 * a.lambda_max());
}
