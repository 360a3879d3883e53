//! Relative-error metrics and checkers for the Nyström / funNyström bounds.

use std::fmt;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::functions::{matrix_function_dense, ScalarFunction};
use crate::linalg::{
    loewner_gap, orthonormalize, spectral_product, symmetric_eigen, NormKind, SingularSpectrum, SpsdMatrix, PSD_TOL,
    RANK_REL_TOL,
};
use crate::nystrom::{
    effective_rank, funnystrom, nystrom_factor, projection_one_sided, projection_two_sided, sketch_singular_values,
    LowRankFactor,
};
use crate::sketch::OrthonormalBasis;

/// Relative slack applied to every theorem conclusion.
pub const THEOREM_SLACK: f64 = 1e-9;
/// Floor for the slack scale, relative to the size of the full quantity
/// (`||f(A)||` in the relevant norm). Keeps exact-rank cases with `rhs = 0`
/// from failing on round-off.
pub const SLACK_FLOOR: f64 = 1e-6;
/// Optimal errors below this fraction of the full norm count as zero.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// A column of the ε table: a Schatten norm or the eigenvalue maxima.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Norm(NormKind),
    Eigenvalue,
}

impl Metric {
    pub fn name(self) -> String {
        match self {
            Metric::Norm(kind) => kind.name(),
            Metric::Eigenvalue => "eigenvalue".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Metric> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eigenvalue" | "eigenvalues" | "eig" => Ok(Metric::Eigenvalue),
            other => Ok(Metric::Norm(NormKind::parse(other)?)),
        }
    }

    /// Metrics for which `eps_projection >= eps_nystrom >= eps_funnystrom`
    /// is guaranteed (operator monotone `f`).
    pub fn full_ordering(self) -> bool {
        matches!(
            self,
            Metric::Eigenvalue | Metric::Norm(NormKind::Nuclear) | Metric::Norm(NormKind::Frobenius)
        )
    }

    /// Metrics for which `eps_nystrom >= eps_funnystrom` is guaranteed.
    pub fn fun_ordering(self) -> bool {
        self.full_ordering() || self == Metric::Norm(NormKind::Operator)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueErrors {
    pub projection: f64,
    pub nystrom: f64,
    pub funnystrom: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub scheme: String,
    pub n: usize,
    pub k: usize,
    pub ell: usize,
    pub q: usize,
    pub seed: u64,
    pub function: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    /// Optimal error and method error both vanish; ε reported as 0.
    Exact,
    /// Optimal error vanishes but the method error does not; ε is infinite.
    Infinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub metric: Metric,
    pub eps_projection: f64,
    pub eps_nystrom: f64,
    pub eps_funnystrom: f64,
    pub eigenvalue_errors: EigenvalueErrors,
    /// Set when `||A - A_(k)|| = 0` (or the `f(A)` analogue) in this metric.
    pub degenerate: Option<Degenerate>,
    pub meta: ReportMeta,
}

impl ErrorReport {
    /// Describes a violated ordering guarantee, if any. `tol` is absolute on ε.
    pub fn ordering_violation(&self, tol: f64) -> Option<String> {
        let (p, n, f) = (self.eps_projection, self.eps_nystrom, self.eps_funnystrom);
        if [p, n, f].iter().any(|x| x.is_nan()) {
            return Some(format!("{}: NaN in eps ({p:e}, {n:e}, {f:e})", self.metric));
        }
        if self.metric.full_ordering() && p < n - tol {
            return Some(format!("{}: eps_projection {p:e} < eps_nystrom {n:e}", self.metric));
        }
        if self.metric.fun_ordering() && n < f - tol {
            return Some(format!("{}: eps_nystrom {n:e} < eps_funnystrom {f:e}", self.metric));
        }
        None
    }
}

fn relative_excess(num: f64, den: f64, scale: f64) -> (f64, Option<Degenerate>) {
    let tiny = DEGENERATE_TOL * scale.max(f64::MIN_POSITIVE);
    if den <= tiny {
        if num <= tiny {
            (0.0, Some(Degenerate::Exact))
        } else {
            (f64::INFINITY, Some(Degenerate::Infinite))
        }
    } else {
        (num / den - 1.0, None)
    }
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Per-matrix quantities shared by every basis evaluated against `A` and `f`.
pub struct ErrorContext<'a> {
    a: &'a SpsdMatrix,
    f: ScalarFunction,
    f_dense: Mat<f64>,
    /// `f(lambda_i)`, descending.
    f_lambda: Vec<f64>,
}

impl<'a> ErrorContext<'a> {
    pub fn new(a: &'a SpsdMatrix, f: &ScalarFunction) -> Result<Self> {
        let f_dense = matrix_function_dense(a, f)?;
        let f_lambda = sorted_desc(
            a.eigenvalues()
                .iter()
                .map(|&l| f.eval_checked(l.max(0.0)))
                .collect::<Result<Vec<_>>>()?,
        );
        Ok(Self {
            a,
            f: f.clone(),
            f_dense,
            f_lambda,
        })
    }

    pub fn matrix(&self) -> &SpsdMatrix {
        self.a
    }

    pub fn function(&self) -> &ScalarFunction {
        &self.f
    }

    /// One report per metric. Decompositions of the three error matrices are
    /// computed once and shared across norms.
    pub fn reports(
        &self,
        q: &OrthonormalBasis,
        k: usize,
        metrics: &[Metric],
        meta: &ReportMeta,
    ) -> Result<Vec<ErrorReport>> {
        let a = self.a;
        let k = effective_rank(k, q)?;
        let nys = nystrom_factor(a, q)?.truncate(k)?;
        let fun = funnystrom(&nys, &self.f)?;
        let lambda = a.eigenvalues();

        let sigma = sketch_singular_values(a, q)?;
        let eig = EigenvalueErrors {
            projection: max_relative_gap(&lambda[..k], &pad(&sigma, k)),
            nystrom: max_relative_gap(&lambda[..k], nys.lambda_hat()),
            funnystrom: max_relative_gap(&self.f_lambda[..k], fun.lambda_hat()),
        };

        let needs_norms = metrics.iter().any(|m| matches!(m, Metric::Norm(_)));
        let spectra = if needs_norms {
            let proj = projection_one_sided(a, q, k)?;
            let e_proj = a.entries() - proj.to_dense();
            let e_nys = a.entries() - nys.to_dense();
            let e_fun = &self.f_dense - fun.to_dense();
            Some((
                SingularSpectrum::of_matrix(e_proj.as_ref())?,
                SingularSpectrum::of_symmetric(e_nys.as_ref())?,
                SingularSpectrum::of_symmetric(e_fun.as_ref())?,
            ))
        } else {
            None
        };
        let tail = SingularSpectrum::from_values(lambda[k..].to_vec());
        let f_tail = SingularSpectrum::from_values(self.f_lambda[k..].to_vec());
        let full = SingularSpectrum::from_values(lambda.to_vec());
        let f_full = SingularSpectrum::from_values(self.f_lambda.clone());

        let mut out = Vec::with_capacity(metrics.len());
        for &metric in metrics {
            let report = match metric {
                Metric::Eigenvalue => ErrorReport {
                    metric,
                    eps_projection: eig.projection,
                    eps_nystrom: eig.nystrom,
                    eps_funnystrom: eig.funnystrom,
                    eigenvalue_errors: eig,
                    degenerate: None,
                    meta: meta.clone(),
                },
                Metric::Norm(kind) => {
                    let kind = kind.canonical()?;
                    let (sp, sn, sf) = spectra.as_ref().expect("norm spectra computed");
                    let scale = full.norm(kind)?;
                    let f_scale = f_full.norm(kind)?;
                    let opt = tail.norm(kind)?;
                    let f_opt = f_tail.norm(kind)?;
                    let (ep, d1) = relative_excess(sp.norm(kind)?, opt, scale);
                    let (en, d2) = relative_excess(sn.norm(kind)?, opt, scale);
                    let (ef, d3) = relative_excess(sf.norm(kind)?, f_opt, f_scale);
                    ErrorReport {
                        metric: Metric::Norm(kind),
                        eps_projection: ep,
                        eps_nystrom: en,
                        eps_funnystrom: ef,
                        eigenvalue_errors: eig,
                        degenerate: d1.or(d2).or(d3),
                        meta: meta.clone(),
                    }
                }
            };
            out.push(report);
        }
        Ok(out)
    }
}

fn pad(v: &[f64], k: usize) -> Vec<f64> {
    (0..k).map(|i| v.get(i).copied().unwrap_or(0.0)).collect()
}

/// `max_i (exact_i - approx_i) / exact_i`, skipping vanishing `exact_i`.
fn max_relative_gap(exact: &[f64], approx: &[f64]) -> f64 {
    let top = exact.first().copied().unwrap_or(0.0).abs();
    exact
        .iter()
        .zip(approx)
        .filter(|(e, _)| **e > DEGENERATE_TOL * top)
        .map(|(e, a)| (e - a) / e)
        .fold(0.0, f64::max)
}

/// Convenience wrapper around [`ErrorContext`] for a single norm.
pub fn error_report(
    a: &SpsdMatrix,
    q: &OrthonormalBasis,
    k: usize,
    f: &ScalarFunction,
    metric: Metric,
) -> Result<ErrorReport> {
    let meta = ReportMeta {
        scheme: q.provenance.scheme.name().into(),
        n: a.n(),
        k,
        ell: q.ell(),
        q: q.provenance.q,
        seed: q.provenance.seed,
        function: f.name(),
    };
    let mut r = ErrorContext::new(a, f)?.reports(q, k, &[metric], &meta)?;
    Ok(r.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TheoremId {
    NuclearBlackbox,
    FrobeniusBlackbox,
    SchattenBlackbox(f64),
    SpectralBlackbox,
    EigAbs,
    EigRel,
    FrobeniusGreybox,
    NuclearGreybox,
    SpectralExactK,
    EigGreybox,
}

impl TheoremId {
    pub fn all() -> Vec<TheoremId> {
        let mut v = vec![TheoremId::NuclearBlackbox, TheoremId::FrobeniusBlackbox];
        v.extend(SCHATTEN_GRID.iter().map(|&p| TheoremId::SchattenBlackbox(p)));
        v.extend([
            TheoremId::SpectralBlackbox,
            TheoremId::EigAbs,
            TheoremId::EigRel,
            TheoremId::FrobeniusGreybox,
            TheoremId::NuclearGreybox,
            TheoremId::SpectralExactK,
            TheoremId::EigGreybox,
        ]);
        v
    }

    pub fn name(self) -> String {
        match self {
            TheoremId::NuclearBlackbox => "T_nuclear_blackbox".into(),
            TheoremId::FrobeniusBlackbox => "T_frobenius_blackbox".into(),
            TheoremId::SchattenBlackbox(p) => format!("T_schatten_blackbox[p={p}]"),
            TheoremId::SpectralBlackbox => "T_spectral_blackbox".into(),
            TheoremId::EigAbs => "T_eig_abs".into(),
            TheoremId::EigRel => "T_eig_rel".into(),
            TheoremId::FrobeniusGreybox => "T_frobenius_greybox".into(),
            TheoremId::NuclearGreybox => "T_nuclear_greybox".into(),
            TheoremId::SpectralExactK => "T_spectral_exact_k".into(),
            TheoremId::EigGreybox => "T_eig_greybox".into(),
        }
    }

    /// Checkers whose hypotheses involve `f` being operator monotone.
    pub fn needs_operator_monotone(self) -> bool {
        matches!(
            self,
            TheoremId::NuclearBlackbox
                | TheoremId::FrobeniusBlackbox
                | TheoremId::SchattenBlackbox(_)
                | TheoremId::SpectralBlackbox
        )
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Tolerance on the relative eigenvalue gaps of the grey-box check.
pub const EIG_GAP_TOL: f64 = 1e-10;

/// Schatten exponents exercised by the black-box checker.
pub const SCHATTEN_GRID: [f64; 4] = [1.0, 1.5, 2.0, 3.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `lhs <= rhs + slack`
    Le,
    /// `lhs > rhs` strictly, no slack
    Gt,
    /// `|lhs - rhs| <= slack`
    Within,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    pub theorem_id: String,
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub slack_used: f64,
    /// ε extracted from the premise, where the theorem has one.
    pub epsilon: Option<f64>,
    pub relation: Relation,
    pub inputs_digest: String,
    pub seed: u64,
}

impl TheoremVerdict {
    fn new(id: String, lhs: f64, rhs: f64, scale: f64, epsilon: Option<f64>, digest: &str, seed: u64) -> Self {
        let slack = THEOREM_SLACK * rhs.abs().max(SLACK_FLOOR * scale.abs());
        Self {
            theorem_id: id,
            holds: lhs <= rhs + slack,
            lhs,
            rhs,
            slack_used: slack,
            epsilon,
            relation: Relation::Le,
            inputs_digest: digest.to_string(),
            seed,
        }
    }

    /// Verdict with an explicit relation and slack, for checks that are not
    /// black-box inequalities (published constants, strict bounds).
    pub fn compare(
        id: impl Into<String>,
        relation: Relation,
        lhs: f64,
        rhs: f64,
        slack: f64,
        digest: &str,
        seed: u64,
    ) -> Self {
        let holds = match relation {
            Relation::Le => lhs <= rhs + slack,
            Relation::Gt => lhs > rhs,
            Relation::Within => (lhs - rhs).abs() <= slack,
        };
        Self {
            theorem_id: id.into(),
            holds,
            lhs,
            rhs,
            slack_used: slack,
            epsilon: None,
            relation,
            inputs_digest: digest.to_string(),
            seed,
        }
    }

    /// `id<TAB>PASS|FAIL<TAB>lhs=..<TAB>rhs=..<TAB>slack=..<TAB>seed=..`
    pub fn line(&self) -> String {
        format!(
            "{}\t{}\tlhs={:.17e}\trhs={:.17e}\tslack={:.3e}\tseed={}",
            self.theorem_id,
            if self.holds { "PASS" } else { "FAIL" },
            self.lhs,
            self.rhs,
            self.slack_used,
            self.seed
        )
    }
}

/// Everything a checker may need: the matrix, a basis, the target rank and `f`.
#[derive(Clone, Debug)]
pub struct TheoremInstance {
    pub a: SpsdMatrix,
    pub q: OrthonormalBasis,
    pub k: usize,
    pub f: ScalarFunction,
    pub seed: u64,
}

impl TheoremInstance {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        feed(&mut h, self.a.entries());
        feed(&mut h, self.q.matrix());
        h.update((self.k as u64).to_le_bytes());
        h.update(self.f.name().as_bytes());
        hex16(&h.finalize())
    }
}

/// Digest of a list of matrices and a label, in the format of [`TheoremInstance::digest`].
pub fn matrices_digest(label: &str, mats: &[MatRef<'_, f64>]) -> String {
    let mut h = Sha256::new();
    for m in mats {
        feed(&mut h, *m);
    }
    h.update(label.as_bytes());
    hex16(&h.finalize())
}

fn feed(h: &mut Sha256, m: MatRef<'_, f64>) {
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            h.update(m[(i, j)].to_le_bytes());
        }
    }
}

fn hex16(bytes: &[u8]) -> String {
    bytes[..16].iter().map(|b| format!("{b:02x}")).collect()
}

fn hypothesis(theorem: TheoremId, reason: impl Into<String>) -> Error {
    Error::HypothesisNotMet {
        theorem: theorem.name(),
        reason: reason.into(),
    }
}

/// Runs one checker on the Nyström approximation built from `inst.q`.
pub fn verify_theorem(id: TheoremId, inst: &TheoremInstance) -> Result<TheoremVerdict> {
    let a = &inst.a;
    let k = effective_rank(inst.k, &inst.q)?;
    if k >= a.n() {
        return Err(hypothesis(id, "k must be smaller than n"));
    }
    let digest = inst.digest();
    let full = nystrom_factor(a, &inst.q)?;
    match id {
        TheoremId::NuclearBlackbox
        | TheoremId::FrobeniusBlackbox
        | TheoremId::SchattenBlackbox(_)
        | TheoremId::SpectralBlackbox => {
            if !inst.f.flags().operator_monotone {
                return Err(hypothesis(id, format!("{} is not operator monotone", inst.f)));
            }
            if id == TheoremId::SpectralBlackbox {
                let b = full.truncate(k)?;
                return spectral_blackbox(a, &b, k, &inst.f, &digest, inst.seed);
            }
            let p = match id {
                TheoremId::NuclearBlackbox => 1.0,
                TheoremId::FrobeniusBlackbox => 2.0,
                TheoremId::SchattenBlackbox(p) => p,
                _ => unreachable!(),
            };
            schatten_blackbox(id, p, a, &full, k, &inst.f, &digest, inst.seed)
        }
        TheoremId::EigAbs | TheoremId::EigRel => {
            let lambda_hat = full.truncate(k)?.lambda_hat().to_vec();
            eigen_blackbox(id, a, &lambda_hat, k, &inst.f, &digest, inst.seed)
        }
        TheoremId::FrobeniusGreybox | TheoremId::NuclearGreybox => {
            let kind = if id == TheoremId::FrobeniusGreybox {
                NormKind::Frobenius
            } else {
                NormKind::Nuclear
            };
            let lambda = a.eigenvalues();
            let proj = projection_one_sided(a, &inst.q, k)?;
            let proj_err = SingularSpectrum::of_matrix((a.entries() - proj.to_dense()).as_ref())?;
            let tail = SingularSpectrum::from_values(lambda[k..].to_vec());
            let full_spec = SingularSpectrum::from_values(lambda.to_vec());
            let nys_k = full.truncate(k)?;
            let (premise, opt, lhs, scale) = if kind == NormKind::Frobenius {
                let lhs = full_spec.power_sum(2.0) - nys_k.frobenius_sq();
                (
                    proj_err.power_sum(2.0),
                    tail.power_sum(2.0),
                    lhs,
                    full_spec.power_sum(2.0),
                )
            } else {
                let e = SingularSpectrum::of_symmetric((a.entries() - nys_k.to_dense()).as_ref())?;
                (
                    proj_err.power_sum(1.0),
                    tail.power_sum(1.0),
                    e.power_sum(1.0),
                    full_spec.power_sum(1.0),
                )
            };
            let eps = premise_epsilon(id, premise, opt, scale)?;
            Ok(TheoremVerdict::new(
                id.name(),
                lhs,
                (1.0 + eps) * opt,
                scale,
                Some(eps),
                &digest,
                inst.seed,
            ))
        }
        TheoremId::SpectralExactK => {
            if inst.q.ell() != inst.k {
                return Err(hypothesis(
                    id,
                    format!("basis has {} columns, need exactly k = {}", inst.q.ell(), inst.k),
                ));
            }
            let qm = inst.q.matrix();
            let resid = a.entries() - qm * (qm.transpose() * a.entries());
            let premise = SingularSpectrum::of_matrix(resid.as_ref())?.norm(NormKind::Operator)?;
            let opt = a.eigenvalues()[k];
            let scale = a.lambda_max();
            let eps = premise_epsilon(id, premise, opt, scale)?;
            let lhs =
                SingularSpectrum::of_symmetric((a.entries() - full.to_dense()).as_ref())?.norm(NormKind::Operator)?;
            Ok(TheoremVerdict::new(
                id.name(),
                lhs,
                (1.0 + eps) * opt,
                scale,
                Some(eps),
                &digest,
                inst.seed,
            ))
        }
        TheoremId::EigGreybox => {
            let lambda = a.eigenvalues();
            let sigma = pad(&sketch_singular_values(a, &inst.q)?, k);
            let lhat = full.truncate(k)?;
            let top = lambda[0];
            let mut worst = f64::NEG_INFINITY;
            for i in 0..k {
                if lambda[i] <= DEGENERATE_TOL * top {
                    continue;
                }
                let lower = (sigma[i] - lhat.lambda_hat()[i]) / lambda[i];
                let upper = (lhat.lambda_hat()[i] - lambda[i]) / lambda[i];
                worst = worst.max(lower).max(upper);
            }
            // Relative gaps: round-off sits near 1e-15, so the tolerance is fixed
            // rather than scaled off the unit right-hand side.
            Ok(TheoremVerdict::compare(
                id.name(),
                Relation::Le,
                worst.max(-1.0),
                0.0,
                EIG_GAP_TOL,
                &digest,
                inst.seed,
            ))
        }
    }
}

/// ε such that `premise = (1 + ε) opt`, clamped at zero.
fn premise_epsilon(id: TheoremId, premise: f64, opt: f64, scale: f64) -> Result<f64> {
    if opt <= DEGENERATE_TOL * scale {
        return Err(hypothesis(id, "optimal rank-k error vanishes"));
    }
    Ok((premise / opt - 1.0).max(0.0))
}

fn check_below(id: TheoremId, a: &SpsdMatrix, a_hat: &LowRankFactor) -> Result<()> {
    let gap = loewner_gap(a.entries(), a_hat.to_dense().as_ref())?;
    if gap < -1e-10 * a.lambda_max().max(1.0) {
        return Err(hypothesis(id, format!("A - A_hat has eigenvalue {gap:e}")));
    }
    Ok(())
}

/// Schatten black box: premise `||A||^p - ||A_hat_(k)||^p <= (1+ε) ||A - A_(k)||^p`
/// (difference form `||A - A_hat_(k)||_*` at `p = 1`), conclusion in p-th powers.
#[allow(clippy::too_many_arguments)]
pub fn schatten_blackbox(
    id: TheoremId,
    p: f64,
    a: &SpsdMatrix,
    a_hat: &LowRankFactor,
    k: usize,
    f: &ScalarFunction,
    digest: &str,
    seed: u64,
) -> Result<TheoremVerdict> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidP(p));
    }
    check_below(id, a, a_hat)?;
    let hat_k = a_hat.truncate(k.min(a_hat.k()))?;
    let lambda = a.eigenvalues();
    let full = SingularSpectrum::from_values(lambda.to_vec());
    let tail = SingularSpectrum::from_values(lambda[k..].to_vec()).power_sum(p);
    let premise = if p == 1.0 {
        SingularSpectrum::of_symmetric((a.entries() - hat_k.to_dense()).as_ref())?.power_sum(1.0)
    } else {
        full.power_sum(p) - SingularSpectrum::from_values(hat_k.lambda_hat().to_vec()).power_sum(p)
    };
    let eps = premise_epsilon(id, premise, tail, full.power_sum(p))?;

    let f_a = matrix_function_dense(a, f)?;
    let f_lambda = sorted_desc(lambda.iter().map(|&l| f.eval(l.max(0.0))).collect());
    let f_tail = SingularSpectrum::from_values(f_lambda[k..].to_vec()).power_sum(p);
    let f_scale = SingularSpectrum::from_values(f_lambda).power_sum(p);
    let fun = funnystrom(&hat_k, f)?;
    let lhs = SingularSpectrum::of_symmetric((&f_a - fun.to_dense()).as_ref())?.power_sum(p);
    Ok(TheoremVerdict::new(
        id.name(),
        lhs,
        (1.0 + eps) * f_tail,
        f_scale,
        Some(eps),
        digest,
        seed,
    ))
}

/// Operator-norm black box for any SPSD `B` given in factored form:
/// `||f(A) - f(B)_(r)||_2 <= (1+ε) f(lambda_{k+1})` with `r = rank(B)`.
pub fn spectral_blackbox(
    a: &SpsdMatrix,
    b: &LowRankFactor,
    k: usize,
    f: &ScalarFunction,
    digest: &str,
    seed: u64,
) -> Result<TheoremVerdict> {
    let id = TheoremId::SpectralBlackbox;
    let lambda = a.eigenvalues();
    if k >= lambda.len() {
        return Err(hypothesis(id, "k must be smaller than n"));
    }
    let top = b.lambda_hat().first().copied().unwrap_or(0.0);
    let r = b
        .lambda_hat()
        .iter()
        .take_while(|&&l| l > RANK_REL_TOL * top && top > 0.0)
        .count();
    let b_r = b.truncate(r)?;
    let diff = SingularSpectrum::of_symmetric((a.entries() - b_r.to_dense()).as_ref())?.norm(NormKind::Operator)?;
    let eps = premise_epsilon(id, diff, lambda[k], lambda[0])?;
    let f_a = matrix_function_dense(a, f)?;
    let f_b = funnystrom(&b_r, f)?;
    let lhs = SingularSpectrum::of_symmetric((&f_a - f_b.to_dense()).as_ref())?.norm(NormKind::Operator)?;
    let f_next = f.eval(lambda[k]);
    let f_top = f.eval(lambda[0]);
    Ok(TheoremVerdict::new(
        id.name(),
        lhs,
        (1.0 + eps) * f_next,
        f_top,
        Some(eps),
        digest,
        seed,
    ))
}

/// Eigenvalue black box. `EigAbs` needs `0 <= lambda_i - lambda_hat_i <= ε lambda_{k+1}`
/// with `ε <= 1`; `EigRel` uses `ε lambda_i`. The verdict compares
/// normalized quantities: `max_i (f(lambda_i) - f(lambda_hat_i)) / f(lambda_{k+1})`
/// (resp. `/ f(lambda_i)`) against ε.
pub fn eigen_blackbox(
    id: TheoremId,
    a: &SpsdMatrix,
    lambda_hat: &[f64],
    k: usize,
    f: &ScalarFunction,
    digest: &str,
    seed: u64,
) -> Result<TheoremVerdict> {
    let lambda = a.eigenvalues();
    if lambda_hat.len() < k || k >= lambda.len() {
        return Err(hypothesis(id, "need k estimates and k < n"));
    }
    let top = lambda[0];
    let tol = PSD_TOL * top;
    if let Some(i) = (0..k).find(|&i| lambda[i] - lambda_hat[i] < -tol) {
        return Err(hypothesis(id, format!("estimate {i} exceeds the eigenvalue")));
    }
    let flags = f.flags();
    if !(flags.concave && flags.non_decreasing) {
        return Err(hypothesis(id, format!("{f} is not concave and non-decreasing")));
    }
    let next = lambda[k];
    let (eps, lhs) = match id {
        TheoremId::EigAbs => {
            if next <= DEGENERATE_TOL * top {
                return Err(hypothesis(id, "lambda_{k+1} vanishes"));
            }
            let eps = (0..k)
                .map(|i| ((lambda[i] - lambda_hat[i]) / next).max(0.0))
                .fold(0.0, f64::max);
            if eps > 1.0 {
                return Err(hypothesis(id, format!("premise epsilon {eps} exceeds 1")));
            }
            let fn_next = f.eval(next);
            if !(fn_next > 0.0) {
                return Err(hypothesis(id, "f(lambda_{k+1}) vanishes"));
            }
            let lhs = (0..k)
                .map(|i| (f.eval(lambda[i]) - f.eval(lambda_hat[i].max(0.0))) / fn_next)
                .fold(f64::NEG_INFINITY, f64::max);
            (eps, lhs)
        }
        TheoremId::EigRel => {
            let mut eps = 0.0f64;
            let mut lhs = f64::NEG_INFINITY;
            for i in 0..k {
                if lambda[i] <= DEGENERATE_TOL * top {
                    continue;
                }
                eps = eps.max(((lambda[i] - lambda_hat[i]) / lambda[i]).max(0.0));
                let fl = f.eval(lambda[i]);
                if fl > 0.0 {
                    lhs = lhs.max((fl - f.eval(lambda_hat[i].max(0.0))) / fl);
                }
            }
            (eps.min(1.0), lhs)
        }
        _ => unreachable!("eigen_blackbox called with {id}"),
    };
    // the lower bound 0 <= f(lambda_i) - f(lambda_hat_i) follows from monotonicity
    Ok(TheoremVerdict::new(id.name(), lhs, eps, 1.0, Some(eps), digest, seed))
}

fn frobenius_sq(m: MatRef<'_, f64>) -> f64 {
    let f = m.norm_l2();
    f * f
}

fn basis_of(m: MatRef<'_, f64>) -> Result<OrthonormalBasis> {
    let (q, collapsed) = orthonormalize(m, RANK_REL_TOL);
    let mut b = OrthonormalBasis::explicit(q)?;
    b.rank_collapsed |= collapsed;
    Ok(b)
}

/// `||A - (P_Q A)_(k)||_F^2`.
fn one_sided_err(a: &SpsdMatrix, q: &OrthonormalBasis, k: usize) -> Result<f64> {
    let p = projection_one_sided(a, q, k.min(q.ell()))?;
    Ok(frobenius_sq((a.entries() - p.to_dense()).as_ref()))
}

/// `||A - (P_Q A P_Q)_(k)||_F^2`.
fn two_sided_err(a: &SpsdMatrix, q: &OrthonormalBasis, k: usize) -> Result<f64> {
    let p = projection_two_sided(a, q, k.min(q.ell()))?;
    Ok(frobenius_sq((a.entries() - p.to_dense()).as_ref()))
}

/// The six squared-Frobenius terms of the projection / Nyström chain:
/// `[||A-(P_AQ A)_k||, ||A-(P_AQ A P_AQ)_k||, ||A-Â_k||, ||A||-||Â_k||,
///   ||A-(P_{A^1/2 Q} A P_{A^1/2 Q})_k||, ||A-(P_Q A)_k||]`, all squared.
/// Each term should not exceed the next; terms 4 and 5 are equal.
pub fn frobenius_chain(a: &SpsdMatrix, q: &OrthonormalBasis, k: usize) -> Result<[f64; 6]> {
    let k = effective_rank(k, q)?;
    let aq = basis_of((a.entries() * q.matrix()).as_ref())?;
    let half = basis_of((a.sqrt() * q.matrix()).as_ref())?;
    let nys = nystrom_factor(a, q)?.truncate(k)?;
    Ok([
        one_sided_err(a, &aq, k)?,
        two_sided_err(a, &aq, k)?,
        frobenius_sq((a.entries() - nys.to_dense()).as_ref()),
        a.frobenius_sq() - nys.frobenius_sq(),
        two_sided_err(a, &half, k)?,
        one_sided_err(a, q, k)?,
    ])
}

/// Checks of the consequences of the chain: projecting onto `AQ` beats
/// projecting onto `Q` (one- and two-sided, and the rectangular version with
/// `(A A^T)^{p/2}`), two-sided on `AQ` beats one-sided on `Q`, and truncated
/// Nyström beats the one-sided projection. All in Frobenius norm.
pub fn remark_checks(inst: &TheoremInstance) -> Result<Vec<TheoremVerdict>> {
    let a = &inst.a;
    let q = &inst.q;
    let k = effective_rank(inst.k, q)?;
    let digest = inst.digest();
    let scale = a.frobenius_sq();
    let aq = basis_of((a.entries() * q.matrix()).as_ref())?;
    let one_q = one_sided_err(a, q, k)?;
    let one_aq = one_sided_err(a, &aq, k)?;
    let two_q = two_sided_err(a, q, k)?;
    let two_aq = two_sided_err(a, &aq, k)?;
    let nys = nystrom_factor(a, q)?.truncate(k)?;
    let nys_err = frobenius_sq((a.entries() - nys.to_dense()).as_ref());
    let v = |id: &str, lhs: f64, rhs: f64| TheoremVerdict::new(id.into(), lhs, rhs, scale, None, &digest, inst.seed);
    let mut out = vec![
        v("R_subspace_one_sided", one_aq, one_q),
        v("R_subspace_two_sided", two_aq, two_q),
    ];
    for p in [1u32, 2] {
        let (lhs, rhs) = rectangular_remark(a.entries(), q.matrix(), k, p)?;
        out.push(v(&format!("R_rectangular[p={p}]"), lhs, rhs));
    }
    out.push(v("R_two_sided_from_one_sided", two_aq, one_q));
    out.push(v("R_nystrom_beats_projection", nys_err, one_q));
    Ok(out)
}

/// `(||M - (P_{(M M^T)^{p/2} Q} M)_(k)||_F^2, ||M - (P_Q M)_(k)||_F^2)` for a
/// rectangular `M` with `n` rows and an `n x l` basis `Q`.
pub fn rectangular_remark(m: MatRef<'_, f64>, q: MatRef<'_, f64>, k: usize, p: u32) -> Result<(f64, f64)> {
    if q.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch {
            left: m.nrows(),
            right: q.nrows(),
        });
    }
    let gram = m * m.transpose();
    let (vals, vecs) = symmetric_eigen(gram.as_ref())?;
    let powered: Vec<f64> = vals.iter().map(|v| v.max(0.0).powf(p as f64 / 2.0)).collect();
    let w = spectral_product(vecs.as_ref(), &powered);
    let (qp, _) = orthonormalize((&w * q).as_ref(), RANK_REL_TOL);
    Ok((one_sided_rect(m, qp.as_ref(), k)?, one_sided_rect(m, q, k)?))
}

fn one_sided_rect(m: MatRef<'_, f64>, q: MatRef<'_, f64>, k: usize) -> Result<f64> {
    if q.ncols() == 0 {
        return Ok(frobenius_sq(m));
    }
    let c = q.transpose() * m;
    let svd = c.thin_svd().map_err(|e| Error::Convergence(format!("{e:?}")))?;
    let k = k.min(q.ncols());
    let s = svd.S().column_vector();
    let u = svd.U();
    let v = svd.V();
    let left = Mat::from_fn(q.ncols(), k, |i, j| u[(i, j)] * s[j]);
    let approx = q * (&left * v.subcols(0, k).transpose());
    Ok(frobenius_sq((m - approx).as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::best_rank_k;
    use crate::random::normal_sampler;

    fn spectrum_matrix(values: &[f64], seed: u64) -> SpsdMatrix {
        let u = normal_sampler(seed, 0).orthogonal(values.len());
        SpsdMatrix::from_eigen(values, u).unwrap()
    }

    fn instance(n: usize, ell: usize, k: usize, seed: u64, f: ScalarFunction) -> TheoremInstance {
        let values: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-1.5)).collect();
        let a = spectrum_matrix(&values, seed);
        let g = a.entries() * normal_sampler(seed, 9).matrix(n, ell);
        let q = OrthonormalBasis::explicit(g).unwrap();
        TheoremInstance { a, q, k, f, seed }
    }

    #[test]
    fn exact_low_rank_is_degenerate_exact() {
        let a = SpsdMatrix::from_diagonal(&[3.0, 2.0, 0.0, 0.0]).unwrap();
        let q = OrthonormalBasis::standard_columns(4, &[0, 1]).unwrap();
        let r = error_report(&a, &q, 2, &ScalarFunction::sqrt(), Metric::Norm(NormKind::Nuclear)).unwrap();
        assert_eq!(r.degenerate, Some(Degenerate::Exact));
        assert_eq!((r.eps_projection, r.eps_nystrom, r.eps_funnystrom), (0.0, 0.0, 0.0));
    }

    #[test]
    fn metric_parsing() {
        assert_eq!(Metric::parse("eig").unwrap(), Metric::Eigenvalue);
        assert_eq!(Metric::parse("fro").unwrap(), Metric::Norm(NormKind::Frobenius));
        assert!(Metric::parse("nope").is_err());
    }

    #[test]
    fn reports_respect_ordering() {
        let inst = instance(30, 8, 4, 3, ScalarFunction::log1p());
        let ctx = ErrorContext::new(&inst.a, &inst.f).unwrap();
        let metrics = [
            Metric::Norm(NormKind::Nuclear),
            Metric::Norm(NormKind::Frobenius),
            Metric::Norm(NormKind::Operator),
            Metric::Eigenvalue,
        ];
        for r in ctx.reports(&inst.q, inst.k, &metrics, &ReportMeta::default()).unwrap() {
            assert!(r.ordering_violation(1e-9).is_none(), "{r:?}");
            assert!(r.eps_projection >= -1e-12 && r.eps_nystrom >= -1e-12);
        }
    }

    #[test]
    fn nuclear_blackbox_on_exact_truncation_has_zero_epsilon() {
        let values: Vec<f64> = (1..=8).map(|i| 1.0 / i as f64).collect();
        let a = spectrum_matrix(&values, 4);
        let best = best_rank_k(&a, 3).unwrap();
        let v = schatten_blackbox(
            TheoremId::NuclearBlackbox,
            1.0,
            &a,
            &best,
            3,
            &ScalarFunction::sqrt(),
            "x",
            0,
        )
        .unwrap();
        assert!(v.epsilon.unwrap() < 1e-12);
        assert!(v.holds);
        assert!((v.lhs - v.rhs).abs() <= 1e-12 * v.rhs);
    }

    #[test]
    fn spectral_blackbox_with_low_rank_b_and_shifted_f() {
        let values: Vec<f64> = (1..=10).map(|i| 2.0 / i as f64).collect();
        let a = spectrum_matrix(&values, 5);
        let f = ScalarFunction::ridge(1.0).unwrap().shifted(0.5).unwrap();
        let b = best_rank_k(&a, 2).unwrap();
        let v = spectral_blackbox(&a, &b, 4, &f, "x", 0).unwrap();
        assert!(v.holds, "{v:?}");
        // B = A_(2) against k = 4: ε = lambda_3 / lambda_5 - 1
        assert!((v.epsilon.unwrap() - (values[2] / values[4] - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn all_checkers_hold_on_a_good_basis() {
        let inst = instance(25, 8, 4, 6, ScalarFunction::sqrt());
        for id in TheoremId::all() {
            match verify_theorem(id, &inst) {
                Ok(v) => assert!(v.holds, "{}", v.line()),
                Err(Error::HypothesisNotMet { .. }) => {
                    assert!(matches!(id, TheoremId::SpectralExactK | TheoremId::EigAbs))
                }
                Err(e) => panic!("{id}: {e}"),
            }
        }
    }

    #[test]
    fn spectral_exact_k_requires_k_columns() {
        let inst = instance(20, 4, 4, 7, ScalarFunction::sqrt());
        assert!(verify_theorem(TheoremId::SpectralExactK, &inst).unwrap().holds);
        let wide = instance(20, 6, 4, 7, ScalarFunction::sqrt());
        assert!(matches!(
            verify_theorem(TheoremId::SpectralExactK, &wide),
            Err(Error::HypothesisNotMet { .. })
        ));
    }

    #[test]
    fn blackbox_rejects_non_monotone_function() {
        let inst = instance(12, 4, 2, 8, ScalarFunction::min_one());
        assert!(matches!(
            verify_theorem(TheoremId::NuclearBlackbox, &inst),
            Err(Error::HypothesisNotMet { .. })
        ));
    }

    #[test]
    fn remarks_hold_and_coincide_on_eigenbasis() {
        let inst = instance(20, 6, 3, 9, ScalarFunction::sqrt());
        for v in remark_checks(&inst).unwrap() {
            assert!(v.holds, "{}", v.line());
        }
        // Q = leading eigenvectors: every error equals the optimal one
        let a = inst.a.clone();
        let q = OrthonormalBasis::explicit(a.eig().vectors.subcols(0, 3).to_owned()).unwrap();
        let chain = frobenius_chain(&a, &q, 3).unwrap();
        let opt: f64 = a.eigenvalues()[3..].iter().map(|l| l * l).sum();
        for t in chain {
            assert!((t - opt).abs() <= 1e-10 * a.frobenius_sq(), "{chain:?}");
        }
    }

    #[test]
    fn rectangular_remark_on_random_matrix() {
        let mut s = normal_sampler(10, 0);
        let m = s.matrix(12, 7);
        let q = OrthonormalBasis::explicit(s.matrix(12, 4)).unwrap();
        for p in 1..=3 {
            let (lhs, rhs) = rectangular_remark(m.as_ref(), q.matrix(), 2, p).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-12), "p={p}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn verdict_line_format() {
        let v = TheoremVerdict::new("T_x".into(), 1.0, 2.0, 2.0, None, "abc", 7);
        assert!(v.holds);
        assert!(v.line().starts_with("T_x\tPASS\tlhs=1.00000000000000000e0"));
        assert!(v.line().ends_with("seed=7"));
    }

    #[test]
    fn nan_eps_is_an_ordering_violation() {
        let mut r = ErrorReport {
            metric: Metric::Norm(NormKind::Frobenius),
            eps_projection: 1.0,
            eps_nystrom: 0.5,
            eps_funnystrom: 0.25,
            eigenvalue_errors: EigenvalueErrors::default(),
            degenerate: None,
            meta: ReportMeta::default(),
        };
        assert!(r.ordering_violation(1e-9).is_none());
        r.eps_projection = f64::NAN;
        assert!(r.ordering_violation(1e-9).unwrap().contains("NaN"));
    }

    #[test]
    fn singular_spectrum_matches_gram_route() {
        let m = crate::random::normal_sampler(5, 0).matrix(7, 4);
        let sv = SingularSpectrum::of_matrix(m.as_ref()).unwrap();
        let gram = m.transpose() * &m;
        let ev = SingularSpectrum::from_values(
            gram.self_adjoint_eigenvalues(faer::Side::Lower)
                .unwrap()
                .into_iter()
                .map(f64::sqrt)
                .collect(),
        );
        for (a, b) in sv.values().iter().zip(ev.values()) {
            assert!((a - b).abs() < 1e-12 * sv.values()[0]);
        }
    }
}
