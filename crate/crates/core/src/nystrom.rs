//! Rank-truncated Nyström approximation, its matrix-function lift, and the
//! projection baselines it is compared against.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::functions::ScalarFunction;
use crate::linalg::{
    orthonormality_defect, pinv_sqrt, spectral_product, symmetric_eigen, symmetrize, SpsdMatrix, PINV_REL_TOL,
};
use crate::sketch::OrthonormalBasis;

/// `U_hat diag(lambda_hat) U_hat^T` with orthonormal `U_hat` and descending,
/// nonnegative `lambda_hat`.
#[derive(Clone, Debug)]
pub struct LowRankFactor {
    u_hat: Mat<f64>,
    lambda_hat: Vec<f64>,
}

impl LowRankFactor {
    pub fn new(u_hat: Mat<f64>, lambda_hat: Vec<f64>) -> Result<Self> {
        if u_hat.ncols() != lambda_hat.len() {
            return Err(Error::DimensionMismatch {
                left: u_hat.ncols(),
                right: lambda_hat.len(),
            });
        }
        let defect = orthonormality_defect(u_hat.as_ref());
        if defect > 1e-10 {
            return Err(Error::InvalidConfig(format!(
                "factor columns are not orthonormal (defect {defect:e})"
            )));
        }
        if let Some(&bad) = lambda_hat.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::NotPsd {
                lambda_min: bad,
                lambda_max: lambda_hat.first().copied().unwrap_or(0.0),
            });
        }
        let mut f = Self::new_unchecked(u_hat, lambda_hat);
        f.sort_descending();
        Ok(f)
    }

    pub(crate) fn new_unchecked(u_hat: Mat<f64>, lambda_hat: Vec<f64>) -> Self {
        Self { u_hat, lambda_hat }
    }

    fn sort_descending(&mut self) {
        let k = self.lambda_hat.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| self.lambda_hat[b].total_cmp(&self.lambda_hat[a]));
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return;
        }
        let u = &self.u_hat;
        self.u_hat = Mat::from_fn(u.nrows(), k, |i, j| u[(i, order[j])]);
        self.lambda_hat = order.iter().map(|&i| self.lambda_hat[i]).collect();
    }

    pub fn n(&self) -> usize {
        self.u_hat.nrows()
    }

    /// Number of stored terms.
    pub fn k(&self) -> usize {
        self.lambda_hat.len()
    }

    pub fn u_hat(&self) -> MatRef<'_, f64> {
        self.u_hat.as_ref()
    }

    pub fn lambda_hat(&self) -> &[f64] {
        &self.lambda_hat
    }

    /// Leading `k` terms.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k > self.k() {
            return Err(Error::RankOutOfRange { k, max: self.k() });
        }
        Ok(Self::new_unchecked(
            self.u_hat.subcols(0, k).to_owned(),
            self.lambda_hat[..k].to_vec(),
        ))
    }

    pub fn to_dense(&self) -> Mat<f64> {
        symmetrize(spectral_product(self.u_hat.as_ref(), &self.lambda_hat).as_ref())
    }

    /// `||U diag(lambda) U^T||_F^2 = sum lambda_i^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.lambda_hat.iter().map(|l| l * l).sum()
    }
}

/// Non-symmetric rank-`k` approximation stored as a truncated SVD
/// `left diag(sigma) right^T`.
#[derive(Clone, Debug)]
pub struct SvdFactor {
    pub left: Mat<f64>,
    pub sigma: Vec<f64>,
    pub right: Mat<f64>,
}

impl SvdFactor {
    pub fn to_dense(&self) -> Mat<f64> {
        let scaled = Mat::from_fn(self.left.nrows(), self.sigma.len(), |i, j| {
            self.left[(i, j)] * self.sigma[j]
        });
        &scaled * self.right.transpose()
    }
}

/// The rank actually used for a basis. A request above the basis width is an
/// error, unless the basis reported a rank collapse, in which case the rank
/// is reduced to the achieved width.
pub fn effective_rank(k: usize, q: &OrthonormalBasis) -> Result<usize> {
    let ell = q.ell();
    if k <= ell {
        Ok(k)
    } else if q.rank_collapsed {
        Ok(ell)
    } else {
        Err(Error::RankOutOfRange { k, max: ell })
    }
}

fn check_basis(a: &SpsdMatrix, q: &OrthonormalBasis) -> Result<()> {
    if q.n() != a.n() {
        return Err(Error::DimensionMismatch {
            left: a.n(),
            right: q.n(),
        });
    }
    Ok(())
}

/// Eigenpairs of `Q^T A Q`, descending, negative round-off clamped to zero.
fn core_eig(q: MatRef<'_, f64>, aq: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let c = symmetrize((q.transpose() * aq).as_ref());
    let (mut d, v) = symmetric_eigen(c.as_ref())?;
    for x in d.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    Ok((d, v))
}

/// All `ell` terms of `A Q (Q^T A Q)^+ Q^T A` in factored form.
pub fn nystrom_factor(a: &SpsdMatrix, q: &OrthonormalBasis) -> Result<LowRankFactor> {
    check_basis(a, q)?;
    let qm = q.matrix();
    let ell = qm.ncols();
    let n = a.n();
    if ell == 0 {
        return Ok(LowRankFactor::new_unchecked(Mat::zeros(n, 0), Vec::new()));
    }
    let aq = a.entries() * qm;
    let (d, v) = core_eig(qm, aq.as_ref())?;
    let s = pinv_sqrt(&d, PINV_REL_TOL);
    let vs = Mat::from_fn(ell, ell, |i, j| v[(i, j)] * s[j]);
    let b = &aq * &vs;
    let svd = b.thin_svd().map_err(|e| Error::Convergence(format!("{e:?}")))?;
    let sig = svd.S().column_vector();
    let lambda: Vec<f64> = (0..ell).map(|i| sig[i] * sig[i]).collect();
    let mut f = LowRankFactor::new_unchecked(svd.U().to_owned(), lambda);
    f.sort_descending();
    Ok(f)
}

/// Rank-`k` truncation of the Nyström approximation from `q`.
pub fn nystrom_truncated(a: &SpsdMatrix, q: &OrthonormalBasis, k: usize) -> Result<LowRankFactor> {
    let k = effective_rank(k, q)?;
    nystrom_factor(a, q)?.truncate(k)
}

/// `U_hat f(Lambda_hat) U_hat^T`, re-sorted descending.
pub fn funnystrom(nys: &LowRankFactor, f: &ScalarFunction) -> Result<LowRankFactor> {
    let values = nys
        .lambda_hat
        .iter()
        .map(|&l| f.eval_checked(l.max(0.0)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(&bad) = values.iter().find(|v| **v < 0.0) {
        return Err(Error::DomainError {
            function: f.name(),
            x: bad,
        });
    }
    let mut out = LowRankFactor::new_unchecked(nys.u_hat.clone(), values);
    out.sort_descending();
    Ok(out)
}

/// `Q (Q^T A)_(k)`.
pub fn projection_one_sided(a: &SpsdMatrix, q: &OrthonormalBasis, k: usize) -> Result<SvdFactor> {
    check_basis(a, q)?;
    let k = effective_rank(k, q)?;
    let qm = q.matrix();
    let n = a.n();
    if qm.ncols() == 0 {
        return Ok(SvdFactor {
            left: Mat::zeros(n, 0),
            sigma: Vec::new(),
            right: Mat::zeros(n, 0),
        });
    }
    let m = qm.transpose() * a.entries();
    let svd = m.thin_svd().map_err(|e| Error::Convergence(format!("{e:?}")))?;
    let sig = svd.S().column_vector();
    let left = qm * svd.U().subcols(0, k);
    Ok(SvdFactor {
        left,
        sigma: (0..k).map(|i| sig[i]).collect(),
        right: svd.V().subcols(0, k).to_owned(),
    })
}

/// `Q (Q^T A Q)_(k) Q^T`.
pub fn projection_two_sided(a: &SpsdMatrix, q: &OrthonormalBasis, k: usize) -> Result<LowRankFactor> {
    check_basis(a, q)?;
    let k = effective_rank(k, q)?;
    let qm = q.matrix();
    if qm.ncols() == 0 {
        return Ok(LowRankFactor::new_unchecked(Mat::zeros(a.n(), 0), Vec::new()));
    }
    let aq = a.entries() * qm;
    let (d, v) = core_eig(qm, aq.as_ref())?;
    let u = qm * v.subcols(0, k);
    Ok(LowRankFactor::new_unchecked(u, d[..k].to_vec()))
}

/// Singular values of `Q^T A`, descending.
pub fn sketch_singular_values(a: &SpsdMatrix, q: &OrthonormalBasis) -> Result<Vec<f64>> {
    check_basis(a, q)?;
    let m = q.matrix().transpose() * a.entries();
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    m.singular_values().map_err(|e| Error::Convergence(format!("{e:?}")))
}
