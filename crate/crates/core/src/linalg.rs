//! Dense symmetric linear algebra on top of `faer`.
//!
//! Everything here is deterministic: decompositions are recomputed from
//! scratch, eigenvalues are returned in descending order with ties kept in
//! the order the solver produced them, and eigenvector signs are normalized
//! so that the largest-magnitude entry of every eigenvector is positive.

use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nystrom::LowRankFactor;

/// Relative threshold (w.r.t. the largest eigenvalue magnitude) below which
/// negative eigenvalues are clamped to zero instead of rejected.
pub const PSD_TOL: f64 = 1e-10;
/// Relative symmetry tolerance, scaled by `max(1, ||A||_F)`.
pub const SYM_TOL: f64 = 1e-12;
/// Default pseudoinverse cutoff relative to the largest diagonal entry.
pub const PINV_REL_TOL: f64 = 1e-12;
/// Rank decision threshold for orthonormalization, relative to the largest pivot.
pub const RANK_REL_TOL: f64 = 1e-12;

/// Eigendecomposition with eigenvalues sorted in descending order.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
    /// Number of slightly negative eigenvalues that were clamped to zero.
    pub clamped: usize,
}

/// A dense symmetric positive semidefinite matrix together with its
/// eigendecomposition.
#[derive(Clone, Debug)]
pub struct SpsdMatrix {
    entries: Mat<f64>,
    eig: SymEig,
}

impl SpsdMatrix {
    /// Validates symmetry and semidefiniteness. The stored entries are the
    /// symmetric part of the input.
    pub fn new(entries: Mat<f64>) -> Result<Self> {
        let entries = symmetrize_checked(entries.as_ref())?;
        let eig = psd_eig(entries.as_ref())?;
        Ok(Self { entries, eig })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::new(Mat::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::NotSquare { rows: n, cols: r.len() });
            }
        }
        Self::new(Mat::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Builds `U diag(values) U^T` for orthonormal `U` and caches the given
    /// pair as the eigendecomposition. Values are sorted descending.
    pub fn from_eigen(values: &[f64], vectors: Mat<f64>) -> Result<Self> {
        let n = values.len();
        if vectors.nrows() != n || vectors.ncols() != n {
            return Err(Error::DimensionMismatch {
                left: n,
                right: vectors.ncols(),
            });
        }
        if let Some(&bad) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::NotPsd {
                lambda_min: bad,
                lambda_max: values.iter().cloned().fold(f64::NAN, f64::max),
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let u = Mat::from_fn(n, n, |i, j| vectors[(i, order[j])]);
        let entries = symmetrize(spectral_product(u.as_ref(), &sorted).as_ref());
        Ok(Self {
            entries,
            eig: SymEig {
                values: sorted,
                vectors: u,
                clamped: 0,
            },
        })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> MatRef<'_, f64> {
        self.entries.as_ref()
    }

    pub fn eig(&self) -> &SymEig {
        &self.eig
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.values
    }

    pub fn lambda_max(&self) -> f64 {
        self.eig.values.first().copied().unwrap_or(0.0)
    }

    /// `A^{1/2}` from the cached eigendecomposition.
    pub fn sqrt(&self) -> Mat<f64> {
        let roots: Vec<f64> = self.eig.values.iter().map(|v| v.max(0.0).sqrt()).collect();
        symmetrize(spectral_product(self.eig.vectors.as_ref(), &roots).as_ref())
    }

    pub fn frobenius_sq(&self) -> f64 {
        let f = self.entries.norm_l2();
        f * f
    }
}

/// Schatten norm selector. `Nuclear`, `Frobenius` and `Operator` are the
/// `p = 1`, `p = 2` and `p = inf` members of the family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Nuclear,
    Frobenius,
    Operator,
    Schatten(f64),
}

impl NormKind {
    /// Maps Schatten aliases onto their named forms so that both evaluate
    /// through the same code path.
    pub fn canonical(self) -> Result<NormKind> {
        match self {
            NormKind::Schatten(p) if p.is_nan() || p < 1.0 => Err(Error::InvalidP(p)),
            NormKind::Schatten(p) if p == 1.0 => Ok(NormKind::Nuclear),
            NormKind::Schatten(p) if p == 2.0 => Ok(NormKind::Frobenius),
            NormKind::Schatten(p) if p == f64::INFINITY => Ok(NormKind::Operator),
            other => Ok(other),
        }
    }

    pub fn p(self) -> f64 {
        match self {
            NormKind::Nuclear => 1.0,
            NormKind::Frobenius => 2.0,
            NormKind::Operator => f64::INFINITY,
            NormKind::Schatten(p) => p,
        }
    }

    pub fn name(self) -> String {
        match self {
            NormKind::Nuclear => "nuclear".into(),
            NormKind::Frobenius => "frobenius".into(),
            NormKind::Operator => "operator".into(),
            NormKind::Schatten(p) => format!("schatten{p}"),
        }
    }

    pub fn parse(s: &str) -> Result<NormKind> {
        let t = s.trim().to_ascii_lowercase();
        let kind = match t.as_str() {
            "nuclear" | "trace" | "*" => NormKind::Nuclear,
            "frobenius" | "fro" | "f" => NormKind::Frobenius,
            "operator" | "spectral" | "op" | "2" => NormKind::Operator,
            other => {
                let p = other
                    .strip_prefix("schatten")
                    .unwrap_or(other)
                    .trim_start_matches([':', '='])
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("unknown norm {s:?}")))?;
                NormKind::Schatten(p)
            }
        };
        kind.canonical()
    }
}

/// Singular values of a matrix, descending. Every Schatten norm of the
/// matrix is a function of this vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularSpectrum(Vec<f64>);

impl SingularSpectrum {
    /// The dense SVD occasionally returns a few NaN values for finite input
    /// at n in the thousands. Such results are retried on the transpose and
    /// then through the eigenvalues of `M^T M`, which lose accuracy only for
    /// singular values below `~1e-8 sigma_1`.
    pub fn of_matrix(m: MatRef<'_, f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Ok(Self(Vec::new()));
        }
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let sv = m.singular_values().map_err(|e| Error::Convergence(format!("{e:?}")))?;
        if all_finite(&sv) {
            return Ok(Self(sv));
        }
        if let Ok(sv) = m.transpose().to_owned().singular_values() {
            if all_finite(&sv) {
                return Ok(Self(sv));
            }
        }
        let gram = if m.nrows() >= m.ncols() {
            m.transpose() * m
        } else {
            m * m.transpose()
        };
        let ev = gram
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Convergence(format!("{e:?}")))?;
        if !all_finite(&ev) {
            return Err(Error::Convergence("singular values are not finite".into()));
        }
        Ok(Self::from_values(ev.into_iter().map(|x| x.max(0.0).sqrt()).collect()))
    }

    /// Singular values of a symmetric matrix, read off as `|lambda_i|`.
    pub fn of_symmetric(m: MatRef<'_, f64>) -> Result<Self> {
        if m.nrows() == 0 {
            return Ok(Self(Vec::new()));
        }
        let mut sv: Vec<f64> = m
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Convergence(format!("{e:?}")))?
            .into_iter()
            .map(f64::abs)
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        Ok(Self(sv))
    }

    pub fn from_values(mut values: Vec<f64>) -> Self {
        for v in values.iter_mut() {
            *v = v.abs();
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// `sum sigma_i^p` for finite `p`.
    pub fn power_sum(&self, p: f64) -> f64 {
        if p == 1.0 {
            return self.0.iter().sum();
        }
        if p == 2.0 {
            return self.0.iter().map(|s| s * s).sum();
        }
        self.0.iter().map(|s| s.powf(p)).sum()
    }

    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        let kind = kind.canonical()?;
        let top = self.0.first().copied().unwrap_or(0.0);
        Ok(match kind {
            NormKind::Nuclear => self.0.iter().sum(),
            NormKind::Frobenius => self.0.iter().map(|s| s * s).sum::<f64>().sqrt(),
            NormKind::Operator => top,
            NormKind::Schatten(p) => {
                if top == 0.0 {
                    0.0
                } else {
                    top * self.0.iter().map(|s| (s / top).powf(p)).sum::<f64>().powf(1.0 / p)
                }
            }
        })
    }
}

/// Orthogonal projector onto the span of an orthonormal basis.
#[derive(Clone, Debug)]
pub struct Projector {
    basis: Mat<f64>,
}

impl Projector {
    /// Projector onto `range(m)`, computed through a rank-revealing QR.
    pub fn onto_range(m: MatRef<'_, f64>) -> Self {
        Self {
            basis: orthonormalize(m, RANK_REL_TOL).0,
        }
    }

    pub fn from_orthonormal(basis: Mat<f64>) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> MatRef<'_, f64> {
        self.basis.as_ref()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// `P x = V (V^T x)`.
    pub fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        let coeffs = self.basis.transpose() * x;
        &self.basis * &coeffs
    }

    pub fn dense(&self) -> Mat<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// Symmetric eigendecomposition with the semidefiniteness rule applied:
/// values below `-PSD_TOL * max|lambda|` are rejected, values in between are
/// clamped to zero.
pub fn sym_eig(a: MatRef<'_, f64>) -> Result<SymEig> {
    let sym = symmetrize_checked(a)?;
    psd_eig(sym.as_ref())
}

/// Eigendecomposition of a symmetric matrix (indefinite allowed), sorted
/// descending. Only the lower triangle is read.
pub fn symmetric_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    if n == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Convergence(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let raw: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| raw[y].total_cmp(&raw[x]));
    let u_raw = evd.U();
    let mut u = Mat::from_fn(n, n, |i, j| u_raw[(i, order[j])]);
    for j in 0..n {
        let mut pivot = 0.0f64;
        for i in 0..n {
            if u[(i, j)].abs() > pivot.abs() + 1e-14 {
                pivot = u[(i, j)];
            }
        }
        if pivot < 0.0 {
            for i in 0..n {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
    Ok((order.iter().map(|&i| raw[i]).collect(), u))
}

fn psd_eig(a: MatRef<'_, f64>) -> Result<SymEig> {
    let (mut values, vectors) = symmetric_eigen(a)?;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = -PSD_TOL * scale;
    let lambda_min = values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if lambda_min < floor {
        return Err(Error::NotPsd {
            lambda_min,
            lambda_max: scale,
        });
    }
    let mut clamped = 0;
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
            clamped += 1;
        }
    }
    Ok(SymEig {
        values,
        vectors,
        clamped,
    })
}

fn symmetrize_checked(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    let tol = SYM_TOL * a.norm_l2().max(1.0);
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            let d = (a[(i, j)] - a[(j, i)]).abs();
            if !(d <= worst) {
                worst = d;
            }
        }
    }
    if !(worst <= tol) {
        return Err(Error::NotSymmetric {
            max_asymmetry: worst,
            tolerance: tol,
        });
    }
    Ok(symmetrize(a))
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: MatRef<'_, f64>) -> Mat<f64> {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            m[(i, i)]
        } else {
            0.5 * (m[(i, j)] + m[(j, i)])
        }
    })
}

/// `U diag(values) U^T` using the leading `values.len()` columns of `U`.
pub fn spectral_product(u: MatRef<'_, f64>, values: &[f64]) -> Mat<f64> {
    let k = values.len();
    let scaled = Mat::from_fn(u.nrows(), k, |i, j| u[(i, j)] * values[j]);
    &scaled * u.subcols(0, k).transpose()
}

/// Schatten norm computed from the singular values of `m`.
pub fn schatten_norm(m: MatRef<'_, f64>, kind: NormKind) -> Result<f64> {
    let kind = kind.canonical()?;
    SingularSpectrum::of_matrix(m)?.norm(kind)
}

/// Best rank-`k` approximation `A_(k)` from the top `k` eigenpairs.
pub fn best_rank_k(a: &SpsdMatrix, k: usize) -> Result<LowRankFactor> {
    let n = a.n();
    if k > n {
        return Err(Error::RankOutOfRange { k, max: n });
    }
    let eig = a.eig();
    Ok(LowRankFactor::new_unchecked(
        eig.vectors.subcols(0, k).to_owned(),
        eig.values[..k].to_vec(),
    ))
}

/// Loewner order test `A - B >= 0`, i.e. `lambda_min(A - B) >= -tol * max(lambda_max(A), 1)`.
pub fn psd_order(a: &SpsdMatrix, b: &SpsdMatrix, tol: f64) -> Result<bool> {
    psd_order_dense(a.entries(), b.entries(), tol)
}

/// [`psd_order`] on raw symmetric matrices.
pub fn psd_order_dense(a: MatRef<'_, f64>, b: MatRef<'_, f64>, tol: f64) -> Result<bool> {
    Ok(loewner_gap(a, b)? >= -tol * lambda_max_sym(a)?.max(1.0))
}

/// `lambda_min(A - B)`.
pub fn loewner_gap(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    let diff = symmetrize((a - b).as_ref());
    if diff.nrows() == 0 {
        return Ok(0.0);
    }
    let ev = diff
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Convergence(format!("{e:?}")))?;
    Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
}

fn lambda_max_sym(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let ev = symmetrize(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Convergence(format!("{e:?}")))?;
    Ok(ev.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Entrywise `D_i^{-1/2}` for `D_i > rel_tol * max(D)`, zero otherwise.
/// Negative entries are clamped to zero first.
pub fn pinv_sqrt(d: &[f64], rel_tol: f64) -> Vec<f64> {
    let top = d.iter().fold(0.0f64, |m, &v| m.max(v));
    let cut = rel_tol * top;
    d.iter()
        .map(|&v| {
            let v = v.max(0.0);
            if top > 0.0 && v > cut {
                1.0 / v.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// Orthonormal basis for `range(y)` by column-pivoted Householder QR.
/// Columns whose pivot falls below `rel_tol * |R_11|` are dropped; the flag
/// reports whether that happened.
pub fn orthonormalize(y: MatRef<'_, f64>, rel_tol: f64) -> (Mat<f64>, bool) {
    let (n, m) = (y.nrows(), y.ncols());
    if m == 0 || n == 0 {
        return (Mat::zeros(n, 0), m > 0);
    }
    let qr = y.col_piv_qr();
    let r = qr.thin_R();
    let top = r[(0, 0)].abs();
    let width = m.min(n);
    let rank = if top == 0.0 || !top.is_finite() {
        0
    } else {
        (0..width).take_while(|&i| r[(i, i)].abs() > rel_tol * top).count()
    };
    let q = qr.compute_thin_Q();
    (q.subcols(0, rank).to_owned(), rank < m)
}

/// `||Q^T Q - I||_F`.
pub fn orthonormality_defect(q: MatRef<'_, f64>) -> f64 {
    let g = q.transpose() * q;
    let k = g.nrows();
    (&g - Mat::<f64>::identity(k, k)).norm_l2()
}
