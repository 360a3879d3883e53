//! Scalar functions on `[0, inf)` and their lift to SPSD matrices.

use std::collections::BTreeMap;
use std::fmt;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{loewner_gap, spectral_product, SpsdMatrix};
use crate::random::normal_sampler;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FunctionKind {
    Identity,
    Sqrt,
    /// `x^alpha`, `alpha` in `[0, 1]`.
    Power {
        alpha: f64,
    },
    /// `log(1 + x)`.
    Log1p,
    /// `x / (x + lambda)`, `lambda > 0`.
    Ridge {
        lambda: f64,
    },
    /// `min{1, x}`: concave and non-decreasing, not operator monotone.
    MinOne,
    /// `x^2`: convex control.
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionFlags {
    pub operator_monotone: bool,
    pub concave: bool,
    pub non_decreasing: bool,
}

/// A named scalar map with its classification. An optional constant shift
/// `c >= 0` turns `f` into `f + c`, which keeps every flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarFunction {
    pub kind: FunctionKind,
    #[serde(default)]
    pub shift: f64,
}

impl ScalarFunction {
    pub fn identity() -> Self {
        Self::plain(FunctionKind::Identity)
    }
    pub fn sqrt() -> Self {
        Self::plain(FunctionKind::Sqrt)
    }
    pub fn log1p() -> Self {
        Self::plain(FunctionKind::Log1p)
    }
    pub fn min_one() -> Self {
        Self::plain(FunctionKind::MinOne)
    }
    pub fn square() -> Self {
        Self::plain(FunctionKind::Square)
    }

    pub fn power(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!("power exponent {alpha} outside [0, 1]")));
        }
        Ok(Self::plain(FunctionKind::Power { alpha }))
    }

    pub fn ridge(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ridge parameter {lambda} must be positive"
            )));
        }
        Ok(Self::plain(FunctionKind::Ridge { lambda }))
    }

    pub fn shifted(mut self, c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidConfig(format!("shift {c} must be nonnegative")));
        }
        self.shift += c;
        Ok(self)
    }

    fn plain(kind: FunctionKind) -> Self {
        Self { kind, shift: 0.0 }
    }

    /// Looks a function up by name. Recognized parameters: `alpha` (power,
    /// default 0.5), `lambda` (ridge, default 1) and `shift` (any, default 0).
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let base = match name.trim().to_ascii_lowercase().as_str() {
            "identity" | "x" | "id" => Self::identity(),
            "sqrt" | "x^0.5" => Self::sqrt(),
            "power" | "pow" => Self::power(params.get("alpha").copied().unwrap_or(0.5))?,
            "log1p" | "log(1+x)" => Self::log1p(),
            "ridge" | "x/(x+1)" => Self::ridge(params.get("lambda").copied().unwrap_or(1.0))?,
            "min1" | "min(1,x)" | "min_one" => Self::min_one(),
            "square" | "x^2" => Self::square(),
            _ => return Err(Error::UnknownFunction(name.to_string())),
        };
        match params.get("shift") {
            Some(&c) => base.shifted(c),
            None => Ok(base),
        }
    }

    /// Parses `name` or `name:key=value,key=value`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, rest) = match spec.split_once(':') {
            Some((n, r)) => (n, r),
            None => (spec, ""),
        };
        let mut params = BTreeMap::new();
        for kv in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad function parameter {kv:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad function parameter {kv:?}")))?;
            params.insert(k.trim().to_string(), v);
        }
        Self::from_name(name, &params)
    }

    pub fn name(&self) -> String {
        let base = match &self.kind {
            FunctionKind::Identity => "identity".to_string(),
            FunctionKind::Sqrt => "sqrt".to_string(),
            FunctionKind::Power { alpha } => format!("power(alpha={alpha})"),
            FunctionKind::Log1p => "log1p".to_string(),
            FunctionKind::Ridge { lambda } => format!("ridge(lambda={lambda})"),
            FunctionKind::MinOne => "min1".to_string(),
            FunctionKind::Square => "square".to_string(),
        };
        if self.shift != 0.0 {
            format!("{base}+{}", self.shift)
        } else {
            base
        }
    }

    pub fn flags(&self) -> FunctionFlags {
        let (om, concave) = match self.kind {
            FunctionKind::Identity
            | FunctionKind::Sqrt
            | FunctionKind::Power { .. }
            | FunctionKind::Log1p
            | FunctionKind::Ridge { .. } => (true, true),
            FunctionKind::MinOne => (false, true),
            FunctionKind::Square => (false, false),
        };
        FunctionFlags {
            operator_monotone: om,
            concave,
            non_decreasing: true,
        }
    }

    pub fn value_at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    /// Evaluates `f(x)`; negative arguments give NaN.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return f64::NAN;
        }
        let y = match self.kind {
            FunctionKind::Identity => x,
            FunctionKind::Sqrt => x.sqrt(),
            FunctionKind::Power { alpha } => {
                if alpha == 0.0 {
                    1.0
                } else {
                    x.powf(alpha)
                }
            }
            FunctionKind::Log1p => x.ln_1p(),
            FunctionKind::Ridge { lambda } => x / (x + lambda),
            FunctionKind::MinOne => x.min(1.0),
            FunctionKind::Square => x * x,
        };
        y + self.shift
    }

    pub fn eval_checked(&self, x: f64) -> Result<f64> {
        let y = self.eval(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::DomainError {
                function: self.name(),
                x,
            })
        }
    }
}

impl fmt::Display for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// The functions used throughout the verification suites.
pub fn catalog() -> Vec<ScalarFunction> {
    vec![
        ScalarFunction::identity(),
        ScalarFunction::sqrt(),
        ScalarFunction::power(0.3).unwrap(),
        ScalarFunction::log1p(),
        ScalarFunction::ridge(1.0).unwrap(),
        ScalarFunction::min_one(),
    ]
}

/// `f(A) = U f(Lambda) U^T`. Eigenvectors are shared with `A`.
pub fn apply_matrix_function(a: &SpsdMatrix, f: &ScalarFunction) -> Result<SpsdMatrix> {
    let eig = a.eig();
    let values = eig
        .values
        .iter()
        .map(|&l| {
            let y = f.eval_checked(l.max(0.0))?;
            if y < 0.0 {
                return Err(Error::DomainError {
                    function: f.name(),
                    x: l,
                });
            }
            Ok(y)
        })
        .collect::<Result<Vec<_>>>()?;
    SpsdMatrix::from_eigen(&values, eig.vectors.clone())
}

/// Dense `f(A)` without wrapping it in an [`SpsdMatrix`].
pub fn matrix_function_dense(a: &SpsdMatrix, f: &ScalarFunction) -> Result<Mat<f64>> {
    let eig = a.eig();
    let values = eig
        .values
        .iter()
        .map(|&l| f.eval_checked(l.max(0.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(spectral_product(eig.vectors.as_ref(), &values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConcaveClause {
    /// `f(x)/x` is non-increasing.
    RatioDecreasing,
    /// `f(tx) <= t f(x)` for `t >= 1`.
    ScaleUp,
    /// `f(tx) >= t f(x)` for `0 <= t <= 1`.
    ScaleDown,
    /// `x -> f(x) - f(x - t)` is non-increasing for fixed `t >= 0`.
    DifferenceDecreasing,
}

impl ConcaveClause {
    pub const ALL: [ConcaveClause; 4] = [
        ConcaveClause::RatioDecreasing,
        ConcaveClause::ScaleUp,
        ConcaveClause::ScaleDown,
        ConcaveClause::DifferenceDecreasing,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConcaveClause::RatioDecreasing => "(i) f(x)/x decreasing",
            ConcaveClause::ScaleUp => "(ii) f(tx) <= t f(x), t >= 1",
            ConcaveClause::ScaleDown => "(iii) f(tx) >= t f(x), 0 <= t <= 1",
            ConcaveClause::DifferenceDecreasing => "(iv) f(x) - f(x - t) decreasing",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClauseOutcome {
    pub clause: ConcaveClause,
    pub checked: usize,
    pub violations: usize,
    /// Largest violation margin seen, with its inputs.
    pub worst: Option<(f64, String)>,
}

impl ClauseOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcaveReport {
    pub function: String,
    pub outcomes: Vec<ClauseOutcome>,
}

impl ConcaveReport {
    pub fn clause(&self, c: ConcaveClause) -> &ClauseOutcome {
        self.outcomes.iter().find(|o| o.clause == c).unwrap()
    }

    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(ClauseOutcome::passed)
    }

    /// First failing clause as a [`Error::PropertyViolation`].
    pub fn into_result(self) -> Result<ConcaveReport> {
        if let Some(o) = self.outcomes.iter().find(|o| !o.passed()) {
            let (margin, inputs) = o.worst.clone().unwrap_or((0.0, String::new()));
            return Err(Error::PropertyViolation {
                function: self.function.clone(),
                clause: o.clause.label().to_string(),
                inputs,
                margin,
            });
        }
        Ok(self)
    }
}

const SCALAR_TOL: f64 = 1e-12;

/// Samples the four concavity consequences on random inputs in `(0, 1000]`.
/// The first sample of every clause is the fixed probe `x = 1, t = 2`.
pub fn check_concave_properties(f: &ScalarFunction, samples: usize, seed: u64) -> ConcaveReport {
    let mut rng = normal_sampler(seed, 0);
    let mut outcomes: Vec<ClauseOutcome> = ConcaveClause::ALL
        .iter()
        .map(|&clause| ClauseOutcome {
            clause,
            checked: 0,
            violations: 0,
            worst: None,
        })
        .collect();
    let tol = |a: f64, b: f64| SCALAR_TOL * a.abs().max(b.abs()).max(1.0);
    let record = |o: &mut ClauseOutcome, margin: f64, allowed: f64, inputs: String| {
        o.checked += 1;
        if margin > allowed {
            o.violations += 1;
            if o.worst.as_ref().is_none_or(|(m, _)| margin > *m) {
                o.worst = Some((margin, inputs));
            }
        }
    };
    for s in 0..samples {
        let (x, y, t_up, t_down, shift) = if s == 0 {
            (1.0, 2.0, 2.0, 0.5, 0.5)
        } else {
            let a = 1000.0 * (1.0 - rng.uniform());
            let b = 1000.0 * (1.0 - rng.uniform());
            let t_up = 1.0 + 9.0 * rng.uniform();
            let t_down = rng.uniform();
            (a.min(b), a.max(b), t_up, t_down, a.min(b) * rng.uniform())
        };

        let (rx, ry) = (f.eval(x) / x, f.eval(y) / y);
        record(&mut outcomes[0], ry - rx, tol(rx, ry), format!("x={x}, y={y}"));

        let (lhs, rhs) = (f.eval(t_up * x), t_up * f.eval(x));
        record(&mut outcomes[1], lhs - rhs, tol(lhs, rhs), format!("x={x}, t={t_up}"));

        let (lhs, rhs) = (f.eval(t_down * x), t_down * f.eval(x));
        record(&mut outcomes[2], rhs - lhs, tol(lhs, rhs), format!("x={x}, t={t_down}"));

        // both arguments stay >= 0 since shift <= x <= y
        let (dx, dy) = (f.eval(x) - f.eval(x - shift), f.eval(y) - f.eval(y - shift));
        record(
            &mut outcomes[3],
            dy - dx,
            tol(f.eval(x), f.eval(y)),
            format!("x={x}, y={y}, t={shift}"),
        );
    }
    ConcaveReport {
        function: f.name(),
        outcomes,
    }
}

/// Result of probing `B >= C => f(B) >= f(C)` on random pairs.
#[derive(Clone, Debug)]
pub struct MonotoneProbe {
    pub pairs: usize,
    pub violations: usize,
    /// Most negative `lambda_min(f(B) - f(C)) / max(f(lambda_1(B)), 1)` seen.
    pub worst_gap: f64,
    pub witness: Option<(Mat<f64>, Mat<f64>)>,
}

impl MonotoneProbe {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Loewner-order tolerance for the operator monotone probe, relative to `f(lambda_1(B))`.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Draws `pairs` random SPSD pairs `B = C + H H^T` of size 2 or 3 with
/// eigenvalues spread around 1 and checks `f(B) >= f(C)`.
pub fn operator_monotone_probe(f: &ScalarFunction, pairs: usize, seed: u64) -> Result<MonotoneProbe> {
    let mut rng = normal_sampler(seed, 1);
    let mut probe = MonotoneProbe {
        pairs,
        violations: 0,
        worst_gap: 0.0,
        witness: None,
    };
    for p in 0..pairs {
        let n = 2 + p % 2;
        let g = rng.matrix(n, n);
        let h = rng.matrix(n, 1 + p % n);
        let scale_c = (4.0 * rng.uniform() - 2.0).exp();
        let scale_h = (4.0 * rng.uniform() - 2.0).exp();
        let c = (&g * g.transpose()) * faer::Scale(scale_c / n as f64);
        let b = &c + (&h * h.transpose()) * faer::Scale(scale_h / n as f64);
        let (bm, cm) = (SpsdMatrix::new(b.clone())?, SpsdMatrix::new(c.clone())?);
        let fb = apply_matrix_function(&bm, f)?;
        let fc = apply_matrix_function(&cm, f)?;
        let gap = loewner_gap(fb.entries(), fc.entries())?;
        let rel = gap / fb.lambda_max().max(1.0);
        if rel < probe.worst_gap {
            probe.worst_gap = rel;
        }
        if rel < -MONOTONE_TOL {
            probe.violations += 1;
            if probe.witness.is_none() {
                probe.witness = Some((b, c));
            }
        }
    }
    Ok(probe)
}
