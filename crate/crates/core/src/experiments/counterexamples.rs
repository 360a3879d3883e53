use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{matrix_function_dense, operator_monotone_probe, ScalarFunction};
use crate::linalg::{
    best_rank_k, loewner_gap, orthonormalize, schatten_norm, NormKind, SpsdMatrix, PSD_TOL, RANK_REL_TOL,
};
use crate::metrics::{matrices_digest, Relation, TheoremVerdict};
use crate::nystrom::{nystrom_factor, projection_one_sided};
use crate::random::normal_sampler;
use crate::sketch::OrthonormalBasis;

/// The 5x5 matrix of the operator-norm counterexample, entries as printed.
pub const EQ14_MATRIX: [[f64; 5]; 5] = [
    [9.627, 1.538, -0.717, 1.418, -0.309],
    [1.538, 8.084, 1.904, -1.868, 0.573],
    [-0.717, 1.904, 1.353, -1.538, -1.300],
    [1.418, -1.868, -1.538, 2.534, 0.169],
    [-0.309, 0.573, -1.300, 0.169, 6.055],
];

/// Pairs of trials drawn when confirming that `min{1, x}` is not operator monotone.
const PROBE_PAIRS: usize = 400;
const PROBE_SEED: u64 = 2024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessRatio {
    /// `||A - A_hat|| / ||A - A_(k)|| - 1`
    pub eps_original: f64,
    /// `||f(A) - f(A_hat)|| / ||f(A) - f(A_(k))|| - 1`
    pub eps_function: f64,
}

impl ExcessRatio {
    pub fn ratio(&self) -> f64 {
        self.eps_function / self.eps_original
    }
}

fn spsd(m: Mat<f64>) -> Result<SpsdMatrix> {
    SpsdMatrix::new(m)
}

/// Relative excess errors of a given approximation `A_hat` (not truncated)
/// and of `f(A_hat)`, both against the optimal rank-`k` error.
pub fn excess_ratio(
    a: &SpsdMatrix,
    a_hat: &SpsdMatrix,
    k: usize,
    f: &ScalarFunction,
    norm: NormKind,
) -> Result<ExcessRatio> {
    let a_k = spsd(best_rank_k(a, k)?.to_dense())?;
    let f_a = matrix_function_dense(a, f)?;
    let f_a_k = matrix_function_dense(&a_k, f)?;
    let f_hat = matrix_function_dense(a_hat, f)?;
    let opt = schatten_norm((a.entries() - a_k.entries()).as_ref(), norm)?;
    let err = schatten_norm((a.entries() - a_hat.entries()).as_ref(), norm)?;
    let f_opt = schatten_norm((&f_a - &f_a_k).as_ref(), norm)?;
    let f_err = schatten_norm((&f_a - &f_hat).as_ref(), norm)?;
    Ok(ExcessRatio {
        eps_original: err / opt - 1.0,
        eps_function: f_err / f_opt - 1.0,
    })
}

fn outer(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), v.len(), |i, j| v[i] * v[j])
}

struct Example {
    id: &'static str,
    a: SpsdMatrix,
    a_hat: SpsdMatrix,
    f: ScalarFunction,
    /// (norm, published strict lower bound on the ratio)
    bounds: Vec<(NormKind, f64)>,
    /// whether `A >= A_hat` holds in the example
    below: bool,
}

fn examples() -> Result<Vec<Example>> {
    let s = 0.5f64.sqrt();
    let v3 = [0.0, s, s];
    let a3 = SpsdMatrix::from_diagonal(&[1.0, 1.0, 0.0])?;
    let p = outer(&v3);
    let hat3 = &p * a3.entries() * &p;
    Ok(vec![
        Example {
            id: "ex5.1",
            a: SpsdMatrix::from_diagonal(&[1.1, 0.1])?,
            a_hat: spsd(outer(&[1.0, 0.095]))?,
            f: ScalarFunction::min_one(),
            bounds: vec![(NormKind::Nuclear, 1.158)],
            below: true,
        },
        Example {
            id: "ex5.2",
            a: SpsdMatrix::from_diagonal(&[1.01, 0.01])?,
            a_hat: spsd(outer(&[1.01, 0.01]))?,
            f: ScalarFunction::min_one(),
            bounds: vec![(NormKind::Operator, 1.402)],
            below: false,
        },
        Example {
            id: "ex5.3",
            a: a3,
            a_hat: spsd(hat3)?,
            f: ScalarFunction::sqrt(),
            bounds: vec![(NormKind::Nuclear, 1.095), (NormKind::Frobenius, 1.049)],
            below: false,
        },
    ])
}

/// Half a unit in the last printed digit.
fn half_unit(digits_after_point: i32, exponent: i32) -> f64 {
    0.5 * 10f64.powi(exponent - digits_after_point)
}

/// Quantities of the 5x5 operator-norm example with `Q = [e1 e2 e3]`, `k = 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eq14Values {
    pub lambda_min: f64,
    pub eps_projection: f64,
    pub eps_nystrom: f64,
    /// `||A - A_hat||_2`, untruncated Nyström.
    pub nystrom_error: f64,
    /// `||A - Q Q^T A||_2`
    pub projection_error: f64,
    /// `||A - (P_Q A)_(2)||_2`
    pub remark_q: f64,
    /// `||A - (P_{AQ} A)_(2)||_2`
    pub remark_aq: f64,
}

pub fn eq14_matrix() -> Result<SpsdMatrix> {
    SpsdMatrix::from_rows(&EQ14_MATRIX.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

pub fn eq14_values() -> Result<Eq14Values> {
    let a = eq14_matrix()?;
    let k = 2;
    let q = OrthonormalBasis::standard_columns(5, &[0, 1, 2])?;
    let op = |m: Mat<f64>| schatten_norm(m.as_ref(), NormKind::Operator);
    let opt = a.eigenvalues()[k];

    let full = nystrom_factor(&a, &q)?;
    let nys_k = full.truncate(k)?;
    let proj_k = projection_one_sided(&a, &q, k)?;
    let qm = q.matrix();
    let resid = a.entries() - qm * (qm.transpose() * a.entries());

    let (aq, _) = orthonormalize((a.entries() * qm).as_ref(), RANK_REL_TOL);
    let aq = OrthonormalBasis::explicit(aq)?;
    let proj_aq = projection_one_sided(&a, &aq, k)?;

    let remark_q = op(a.entries() - proj_k.to_dense())?;
    Ok(Eq14Values {
        lambda_min: *a.eigenvalues().last().unwrap(),
        eps_projection: remark_q / opt - 1.0,
        eps_nystrom: op(a.entries() - nys_k.to_dense())? / opt - 1.0,
        nystrom_error: op(a.entries() - full.to_dense())?,
        projection_error: op(resid)?,
        remark_q,
        remark_aq: op(a.entries() - proj_aq.to_dense())?,
    })
}

/// Every check of the counterexample verifier, failed ones included.
pub fn counterexample_checks() -> Result<Vec<TheoremVerdict>> {
    let mut out = Vec::new();
    for ex in examples()? {
        let digest = matrices_digest(ex.id, &[ex.a.entries(), ex.a_hat.entries()]);
        for &(norm, bound) in &ex.bounds {
            let r = excess_ratio(&ex.a, &ex.a_hat, 1, &ex.f, norm)?;
            out.push(TheoremVerdict::compare(
                format!("{}_{}_ratio", ex.id, norm.name()),
                Relation::Gt,
                r.ratio(),
                bound,
                0.0,
                &digest,
                0,
            ));
        }
        let gap = loewner_gap(ex.a.entries(), ex.a_hat.entries())?;
        let tol = PSD_TOL * ex.a.lambda_max().max(1.0);
        out.push(if ex.below {
            TheoremVerdict::compare(format!("{}_psd_below", ex.id), Relation::Le, -gap, 0.0, tol, &digest, 0)
        } else {
            TheoremVerdict::compare(
                format!("{}_not_psd_below", ex.id),
                Relation::Gt,
                -gap,
                tol,
                0.0,
                &digest,
                0,
            )
        });
    }

    let probe = operator_monotone_probe(&ScalarFunction::min_one(), PROBE_PAIRS, PROBE_SEED)?;
    out.push(TheoremVerdict::compare(
        "min1_not_operator_monotone",
        Relation::Gt,
        probe.violations as f64,
        0.0,
        0.0,
        "-",
        PROBE_SEED,
    ));

    let a = eq14_matrix()?;
    let v = eq14_values()?;
    let digest = matrices_digest("eq14", &[a.entries()]);
    let within = |id: &str, measured: f64, published: f64, tol: f64| {
        TheoremVerdict::compare(id, Relation::Within, measured, published, tol, &digest, 0)
    };
    out.push(TheoremVerdict::compare(
        "eq14_psd",
        Relation::Le,
        -v.lambda_min,
        0.0,
        0.0,
        &digest,
        0,
    ));
    out.push(within(
        "eq14_eps_projection_operator",
        v.eps_projection,
        2.59e-8,
        half_unit(2, -8),
    ));
    out.push(within(
        "eq14_eps_nystrom_operator",
        v.eps_nystrom,
        5.75e-3,
        half_unit(2, -3),
    ));
    out.push(within("eq14_nystrom_error", v.nystrom_error, 3.75, half_unit(2, 0)));
    out.push(within(
        "eq14_projection_error",
        v.projection_error,
        6.24,
        half_unit(2, 0),
    ));
    out.push(within("eq14_remark_q", v.remark_q, 6.449, half_unit(3, 0)));
    out.push(within("eq14_remark_aq", v.remark_aq, 6.455, half_unit(3, 0)));
    out.push(TheoremVerdict::compare(
        "eq14_remark_strict",
        Relation::Gt,
        v.remark_aq,
        v.remark_q,
        0.0,
        &digest,
        0,
    ));
    Ok(out)
}

/// Fails with `MismatchWithPaper` on the first check that does not reproduce.
pub fn verify_counterexamples() -> Result<Vec<TheoremVerdict>> {
    let checks = counterexample_checks()?;
    if let Some(bad) = checks.iter().find(|c| !c.holds) {
        let expected = match bad.relation {
            Relation::Gt => format!("> {}", bad.rhs),
            Relation::Le => format!("<= {} + {:e}", bad.rhs, bad.slack_used),
            Relation::Within => format!("{} +/- {:e}", bad.rhs, bad.slack_used),
        };
        return Err(Error::MismatchWithPaper {
            id: bad.theorem_id.clone(),
            measured: bad.lhs,
            expected,
        });
    }
    Ok(checks)
}

/// Observed ratios for a guarantee with no known proof or counterexample:
/// `A >= A_hat`, `f` concave and non-decreasing but not operator monotone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenCellSurvey {
    pub norm: NormKind,
    pub trials: usize,
    /// Largest `eps_function / eps_original` seen.
    pub max_ratio: f64,
    /// Trials with `eps_function > eps_original`.
    pub exceeded: usize,
}

/// Random 2x2 and 3x3 diagonal `A` with a rank-one Nyström approximation
/// (so `A >= A_hat`), `k = 1`, `f = min{1, x}`.
pub fn open_cell_survey(trials: usize, seed: u64) -> Result<Vec<OpenCellSurvey>> {
    let f = ScalarFunction::min_one();
    let mut rng = normal_sampler(seed, 7);
    let norms = [NormKind::Frobenius, NormKind::Operator];
    let mut out: Vec<OpenCellSurvey> = norms
        .iter()
        .map(|&norm| OpenCellSurvey {
            norm,
            trials: 0,
            max_ratio: f64::NEG_INFINITY,
            exceeded: 0,
        })
        .collect();
    for t in 0..trials {
        let n = 2 + t % 2;
        let diag: Vec<f64> = (0..n).map(|_| 2.5 * rng.uniform()).collect();
        let a = SpsdMatrix::from_diagonal(&diag)?;
        let q = OrthonormalBasis::explicit(rng.matrix(n, 1))?;
        let a_hat = spsd(nystrom_factor(&a, &q)?.to_dense())?;
        for s in out.iter_mut() {
            let r = excess_ratio(&a, &a_hat, 1, &f, s.norm)?;
            if !(r.eps_original > 1e-9 && r.eps_function.is_finite()) {
                continue;
            }
            s.trials += 1;
            s.max_ratio = s.max_ratio.max(r.ratio());
            if r.eps_function > r.eps_original + 1e-12 {
                s.exceeded += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_reproduce() {
        let checks = verify_counterexamples().unwrap();
        for c in &checks {
            assert!(c.holds, "{}", c.line());
        }
        assert!(checks.len() >= 15);
    }

    #[test]
    fn eq14_values_match_direct_evaluation() {
        let v = eq14_values().unwrap();
        assert!(v.lambda_min > 0.0);
        assert!((v.remark_q - 6.448926).abs() < 1e-5);
        assert!((v.remark_aq - 6.455061).abs() < 1e-5);
    }

    #[test]
    fn counterexamples_are_deterministic() {
        let a = counterexample_checks().unwrap();
        let b = counterexample_checks().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.lhs.to_bits(), y.lhs.to_bits());
        }
    }
}
