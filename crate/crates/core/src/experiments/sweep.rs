use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::functions::ScalarFunction;
use crate::linalg::{NormKind, SpsdMatrix};
use crate::metrics::{ErrorContext, ErrorReport, Metric, ReportMeta};
use crate::mmio::fmt_f64;
use crate::random::{substream, SKETCH_STREAM_BASE};
use crate::sketch::{build_basis, Scheme, SketchConfig};

use super::generate::{generate_matrix, GeneratorSpec};

/// Dimension used for desk-scale runs when a config does not set `desk_n`.
pub const DEFAULT_DESK_N: usize = 300;

/// Absolute tolerance on ε for the per-row ordering and the monotone trend.
pub const ORDERING_TOL: f64 = 1e-9;

/// Sketch width as a function of `k` and `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EllRule {
    Fixed(usize),
    /// `ell = k`
    K,
    /// `ell = k + q`
    KPlusQ,
    /// `ell = (q + 1) k`, the width of a block Krylov space.
    Krylov,
}

impl EllRule {
    pub fn resolve(self, k: usize, q: usize) -> usize {
        match self {
            EllRule::Fixed(l) => l,
            EllRule::K => k,
            EllRule::KPlusQ => k + q,
            EllRule::Krylov => (q + 1) * k,
        }
    }

    pub fn parse(s: &str) -> Result<EllRule> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.to_ascii_lowercase().as_str() {
            "k" => Ok(EllRule::K),
            "k+q" | "q+k" => Ok(EllRule::KPlusQ),
            "(q+1)k" | "(q+1)*k" | "k(q+1)" | "k*(q+1)" => Ok(EllRule::Krylov),
            other => other
                .parse()
                .map(EllRule::Fixed)
                .map_err(|_| Error::InvalidConfig(format!("cannot read ell = {s:?}"))),
        }
    }
}

impl fmt::Display for EllRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EllRule::Fixed(l) => write!(f, "{l}"),
            EllRule::K => f.write_str("k"),
            EllRule::KPlusQ => f.write_str("k+q"),
            EllRule::Krylov => f.write_str("(q+1)k"),
        }
    }
}

impl Serialize for EllRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EllRule::Fixed(l) => s.serialize_u64(*l as u64),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for EllRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(l) => Ok(EllRule::Fixed(l)),
            Raw::Text(s) => EllRule::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl FunctionSpec {
    pub fn build(&self) -> Result<ScalarFunction> {
        ScalarFunction::from_name(&self.name, &self.params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn parse(s: &str) -> Result<Scale> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "paper" | "full" => Ok(Scale::Paper),
            other => Err(Error::InvalidConfig(format!("unknown scale {other:?}"))),
        }
    }
}

fn default_reps() -> usize {
    1
}

fn default_metrics() -> Vec<String> {
    ["nuclear", "frobenius", "operator", "eigenvalue"]
        .map(String::from)
        .to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub generator: GeneratorSpec,
    /// Dimension substituted for desk-scale runs of synthetic generators.
    #[serde(default)]
    pub desk_n: Option<usize>,
    pub scheme: Scheme,
    pub k: usize,
    pub q_values: Vec<usize>,
    pub ell: EllRule,
    pub function: FunctionSpec,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.q_values.is_empty() {
            return Err(Error::InvalidConfig("q_values must not be empty".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        if self.scheme == Scheme::Explicit {
            return Err(Error::InvalidConfig("experiments need a randomized scheme".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidConfig("metrics must not be empty".into()));
        }
        self.parsed_metrics()?;
        self.function.build()?;
        for &q in &self.q_values {
            SketchConfig::new(self.k, self.ell.resolve(self.k, q), q, self.seed)?;
        }
        if let Some(n) = self.generator.n() {
            self.check_fits(n)?;
        }
        if let Some(d) = self.desk_n {
            self.check_fits(d)?;
        }
        Ok(())
    }

    fn check_fits(&self, n: usize) -> Result<()> {
        for &q in &self.q_values {
            let width = match self.scheme {
                Scheme::BlockKrylov => (q + 1) * self.k,
                _ => self.ell.resolve(self.k, q),
            };
            if width >= n {
                return Err(Error::InvalidConfig(format!(
                    "q = {q} needs a basis of width {width}, which does not fit n = {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn parsed_metrics(&self) -> Result<Vec<Metric>> {
        self.metrics.iter().map(|m| Metric::parse(m)).collect()
    }

    /// The generator actually used at `scale`.
    pub fn generator_at(&self, scale: Scale) -> GeneratorSpec {
        match (scale, self.generator.n()) {
            (Scale::Desk, Some(n)) => self.generator.with_n(self.desk_n.unwrap_or(DEFAULT_DESK_N).min(n)),
            _ => self.generator.clone(),
        }
    }
}

/// Sketch seed of repetition `rep`, derived from the master seed.
pub fn repetition_seed(master: u64, rep: usize) -> u64 {
    substream(master, SKETCH_STREAM_BASE + rep as u64).next_u64()
}

/// One row per (repetition, q, metric), ordered by repetition, then by the
/// position of `q` in the sweep, then by metric. Sweep points of a repetition
/// share one Gaussian draw / pivot stream.
pub fn run_experiment(cfg: &ExperimentConfig, scale: Scale) -> Result<Vec<ErrorReport>> {
    cfg.validate()?;
    let a = generate_matrix(&cfg.generator_at(scale), cfg.seed)?;
    run_on_matrix(cfg, &a)
}

pub fn run_on_matrix(cfg: &ExperimentConfig, a: &SpsdMatrix) -> Result<Vec<ErrorReport>> {
    cfg.check_fits(a.n())?;
    let f = cfg.function.build()?;
    let metrics = cfg.parsed_metrics()?;
    let ctx = ErrorContext::new(a, &f)?;
    let points: Vec<(usize, usize)> = (0..cfg.repetitions)
        .flat_map(|r| cfg.q_values.iter().map(move |&q| (r, q)))
        .collect();
    let blocks: Vec<Vec<ErrorReport>> = points
        .par_iter()
        .map(|&(rep, q)| {
            let seed = repetition_seed(cfg.seed, rep);
            let sk = SketchConfig::new(cfg.k, cfg.ell.resolve(cfg.k, q), q, seed)?;
            let basis = build_basis(a, cfg.scheme, &sk)?;
            let meta = ReportMeta {
                scheme: cfg.scheme.name().into(),
                n: a.n(),
                k: cfg.k,
                ell: basis.ell(),
                q,
                seed,
                function: f.name(),
            };
            ctx.reports(&basis, cfg.k, &metrics, &meta)
        })
        .collect::<Result<_>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

pub const CSV_HEADER: &str = "scheme,n,k,ell,q,seed,function,norm,eps_projection,eps_nystrom,eps_funnystrom";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv_row(r: &ErrorReport) -> String {
    let m = &r.meta;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        csv_field(&m.scheme),
        m.n,
        m.k,
        m.ell,
        m.q,
        m.seed,
        csv_field(&m.function),
        r.metric.name(),
        fmt_f64(r.eps_projection),
        fmt_f64(r.eps_nystrom),
        fmt_f64(r.eps_funnystrom)
    )
}

pub fn to_csv(rows: &[ErrorReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

/// Rows breaking the ordering guarantees of their metric.
pub fn ordering_violations(rows: &[ErrorReport], tol: f64) -> Vec<String> {
    rows.iter()
        .filter_map(|r| {
            r.ordering_violation(tol)
                .map(|v| format!("q={} seed={}: {v}", r.meta.q, r.meta.seed))
        })
        .collect()
}

/// Places where Frobenius `eps_projection` grows with `q` within a repetition.
/// Only sweeps whose bases are nested in `q` (or related by one more power
/// step) make this a guarantee.
pub fn frobenius_trend_violations(rows: &[ErrorReport], tol: f64) -> Vec<String> {
    let mut by_seed: BTreeMap<u64, Vec<&ErrorReport>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == Metric::Norm(NormKind::Frobenius)) {
        by_seed.entry(r.meta.seed).or_default().push(r);
    }
    let mut out = Vec::new();
    for (seed, mut rs) in by_seed {
        rs.sort_by_key(|r| r.meta.q);
        for w in rs.windows(2) {
            if w[1].eps_projection > w[0].eps_projection + tol {
                out.push(format!(
                    "seed={seed}: eps_projection rises from {:e} (q={}) to {:e} (q={})",
                    w[0].eps_projection, w[0].meta.q, w[1].eps_projection, w[1].meta.q
                ));
            }
        }
    }
    out
}
