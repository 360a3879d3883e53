//! Reference implementations used as oracles. Nothing here shares code with
//! the library's decompositions: eigenpairs come from a cyclic Jacobi sweep
//! on plain `Vec<Vec<f64>>` matrices.
#![allow(dead_code, clippy::needless_range_loop)]

use faer::{Mat, MatRef};
use funnystrom::random::normal_sampler;
use funnystrom::SpsdMatrix;

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: MatRef<'_, f64>) -> Dense {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_dense(d: &Dense) -> Mat<f64> {
    let cols = d.first().map_or(0, |r| r.len());
    Mat::from_fn(d.len(), cols, |i, j| d[i][j])
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, m, p) = (a.len(), b.len(), b.first().map_or(0, |r| r.len()));
    let mut c = vec![vec![0.0; p]; n];
    for i in 0..n {
        for l in 0..m {
            let x = a[i][l];
            for j in 0..p {
                c[i][j] += x * b[l][j];
            }
        }
    }
    c
}

pub fn transpose(a: &Dense) -> Dense {
    let cols = a.first().map_or(0, |r| r.len());
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn sub(a: &Dense, b: &Dense) -> Dense {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect())
        .collect()
}

pub fn frobenius(a: &Dense) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns values in
/// descending order with eigenvectors as columns.
pub fn jacobi_eigen(a: &Dense) -> (Vec<f64>, Dense) {
    let n = a.len();
    let mut m = a.clone();
    let mut v: Dense = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let total: f64 = m.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-32 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

/// `sum_i g(d_i) v_i v_i^T` over the given eigenpairs.
pub fn spectral(values: &[f64], vectors: &Dense, g: impl Fn(f64) -> f64) -> Dense {
    let n = vectors.len();
    let mut out = vec![vec![0.0; n]; n];
    for (c, &d) in values.iter().enumerate() {
        let w = g(d);
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[i][j] += w * vectors[i][c] * vectors[j][c];
            }
        }
    }
    out
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix with relative cutoff.
pub fn pinv_sym(a: &Dense, rel_tol: f64) -> Dense {
    let (values, vectors) = jacobi_eigen(a);
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    spectral(
        &values,
        &vectors,
        |d| if d.abs() > rel_tol * top { 1.0 / d } else { 0.0 },
    )
}

/// `A Q (Q^T A Q)^+ Q^T A` evaluated literally.
pub fn nystrom_direct(a: &Dense, q: &Dense) -> Dense {
    let aq = matmul(a, q);
    let core = matmul(&transpose(q), &aq);
    let mid = pinv_sym(&core, 1e-12);
    matmul(&matmul(&aq, &mid), &transpose(&aq))
}

/// Best rank-`k` approximation of a symmetric matrix by top eigenpairs.
pub fn best_rank_k_direct(a: &Dense, k: usize) -> Dense {
    let (values, vectors) = jacobi_eigen(a);
    let top: Vec<f64> = values.iter().take(k).copied().collect();
    spectral(&top, &vectors, |d| d)
}

/// Random SPSD matrix `U diag(values) U^T` with eigenvalues uniform in
/// `[floor, 1]` times a random scale.
pub fn random_spsd(n: usize, floor: f64, seed: u64) -> SpsdMatrix {
    let mut s = normal_sampler(seed, 99);
    let scale = 10f64.powf(2.0 * s.uniform() - 1.0);
    let values: Vec<f64> = (0..n).map(|_| scale * (floor + (1.0 - floor) * s.uniform())).collect();
    let u = s.orthogonal(n);
    SpsdMatrix::from_eigen(&values, u).unwrap()
}

/// Dense n x l Gaussian matrix.
pub fn gaussian(n: usize, l: usize, seed: u64) -> Mat<f64> {
    normal_sampler(seed, 98).matrix(n, l)
}
