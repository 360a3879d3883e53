//! Orthonormal bases for Nyström: Gaussian sketches, subspace iteration,
//! block Krylov and randomly pivoted Cholesky column selection.

use std::fmt;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_defect, orthonormalize, SpsdMatrix, RANK_REL_TOL};
use crate::random::{normal_sampler, SKETCH_STREAM_BASE};

/// Orthonormality tolerance for produced bases.
pub const ORTH_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Gaussian,
    SubspaceIteration,
    BlockKrylov,
    #[serde(alias = "rp_cholesky")]
    Rpcholesky,
    Explicit,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Gaussian => "gaussian",
            Scheme::SubspaceIteration => "subspace_iteration",
            Scheme::BlockKrylov => "block_krylov",
            Scheme::Rpcholesky => "rpcholesky",
            Scheme::Explicit => "explicit",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian" => Ok(Scheme::Gaussian),
            "subspace_iteration" | "subspace" | "power" => Ok(Scheme::SubspaceIteration),
            "block_krylov" | "krylov" => Ok(Scheme::BlockKrylov),
            "rpcholesky" | "rp_cholesky" | "rpchol" => Ok(Scheme::Rpcholesky),
            "explicit" => Ok(Scheme::Explicit),
            _ => Err(Error::Parse(format!("unknown basis scheme {s:?}"))),
        }
    }

    /// Schemes that build a basis from a random draw.
    pub const RANDOMIZED: [Scheme; 4] = [
        Scheme::Gaussian,
        Scheme::SubspaceIteration,
        Scheme::BlockKrylov,
        Scheme::Rpcholesky,
    ];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchConfig {
    pub k: usize,
    pub ell: usize,
    pub q: usize,
    pub seed: u64,
}

impl SketchConfig {
    pub fn new(k: usize, ell: usize, q: usize, seed: u64) -> Result<Self> {
        let cfg = Self { k, ell, q, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.ell < self.k {
            return Err(Error::InvalidConfig(format!(
                "ell = {} is smaller than k = {}",
                self.ell, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub scheme: Scheme,
    pub q: usize,
    pub seed: u64,
    pub block_width: usize,
}

#[derive(Clone, Debug)]
pub struct OrthonormalBasis {
    q: Mat<f64>,
    pub provenance: Provenance,
    /// Set when the achieved rank is below the requested width (a collapsed
    /// sketch, or RPCholesky running out of residual diagonal).
    pub rank_collapsed: bool,
    /// Pivot indices for column-selection bases.
    pub pivots: Option<Vec<usize>>,
}

impl OrthonormalBasis {
    /// Wraps user-supplied columns. Columns that already are orthonormal to
    /// `ORTH_TOL` are kept verbatim; otherwise their span is re-orthonormalized.
    pub fn explicit(columns: Mat<f64>) -> Result<Self> {
        if columns.ncols() > columns.nrows() {
            return Err(Error::InvalidConfig(format!(
                "basis has {} columns but only {} rows",
                columns.ncols(),
                columns.nrows()
            )));
        }
        let width = columns.ncols();
        let (q, collapsed) = if orthonormality_defect(columns.as_ref()) <= ORTH_TOL {
            (columns, false)
        } else {
            orthonormalize(columns.as_ref(), RANK_REL_TOL)
        };
        Ok(Self {
            provenance: Provenance {
                scheme: Scheme::Explicit,
                q: 0,
                seed: 0,
                block_width: width,
            },
            q,
            rank_collapsed: collapsed,
            pivots: None,
        })
    }

    /// `[e_{i_1} ... e_{i_l}]`.
    pub fn standard_columns(n: usize, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidConfig(format!("column index {bad} outside 0..{n}")));
        }
        let q = Mat::from_fn(n, indices.len(), |i, j| if indices[j] == i { 1.0 } else { 0.0 });
        let mut b = Self::explicit(q)?;
        b.pivots = Some(indices.to_vec());
        Ok(b)
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.q.as_ref()
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn ell(&self) -> usize {
        self.q.ncols()
    }
}

/// `orth(Omega)` for `q = 0`, otherwise `orth(A^q Omega)` with a
/// re-orthonormalization after every multiplication.
pub fn gaussian_basis(a: &SpsdMatrix, cfg: &SketchConfig) -> Result<OrthonormalBasis> {
    cfg.validate()?;
    let n = a.n();
    if cfg.ell > n {
        return Err(Error::RankOutOfRange { k: cfg.ell, max: n });
    }
    let omega = sketch_matrix(n, cfg.ell, cfg.seed);
    let (mut q, mut collapsed) = orthonormalize(omega.as_ref(), RANK_REL_TOL);
    for _ in 0..cfg.q {
        let y = a.entries() * &q;
        let (next, c) = orthonormalize(y.as_ref(), RANK_REL_TOL);
        q = next;
        collapsed |= c;
    }
    let scheme = if cfg.q == 0 {
        Scheme::Gaussian
    } else {
        Scheme::SubspaceIteration
    };
    Ok(OrthonormalBasis {
        q,
        provenance: Provenance {
            scheme,
            q: cfg.q,
            seed: cfg.seed,
            block_width: cfg.ell,
        },
        rank_collapsed: collapsed,
        pivots: None,
    })
}

/// The Gaussian test matrix drawn for a sketch seed.
pub fn sketch_matrix(n: usize, width: usize, seed: u64) -> Mat<f64> {
    normal_sampler(seed, SKETCH_STREAM_BASE).matrix(n, width)
}

/// Basis for `range([Omega, A Omega, ..., A^q Omega])` with block width `k`.
/// Each new block is orthogonalized twice against all previous blocks and
/// then rank-revealed; a final pass re-orthonormalizes the whole basis.
pub fn krylov_basis(a: &SpsdMatrix, cfg: &SketchConfig) -> Result<OrthonormalBasis> {
    cfg.validate()?;
    let n = a.n();
    let width = cfg.k;
    if (cfg.q + 1) * width > n {
        return Err(Error::InvalidConfig(format!(
            "Krylov width {} exceeds n = {n}",
            (cfg.q + 1) * width
        )));
    }
    let omega = sketch_matrix(n, width, cfg.seed);
    let (first, mut collapsed) = orthonormalize(omega.as_ref(), RANK_REL_TOL);
    let mut blocks: Vec<Mat<f64>> = vec![first];
    let mut basis = blocks[0].clone();
    for _ in 0..cfg.q {
        let prev = blocks.last().unwrap();
        if prev.ncols() == 0 {
            collapsed = true;
            break;
        }
        let w = a.entries() * prev;
        let scale = max_column_norm(w.as_ref());
        let mut r = w;
        for _ in 0..2 {
            let coeffs = basis.transpose() * &r;
            r = &r - &basis * &coeffs;
        }
        let block = rank_revealed(r.as_ref(), RANK_REL_TOL * scale);
        if block.ncols() < width {
            collapsed = true;
        }
        basis = hcat(basis.as_ref(), block.as_ref());
        blocks.push(block);
    }
    let (q, c) = orthonormalize(basis.as_ref(), RANK_REL_TOL);
    collapsed |= c;
    Ok(OrthonormalBasis {
        q,
        provenance: Provenance {
            scheme: Scheme::BlockKrylov,
            q: cfg.q,
            seed: cfg.seed,
            block_width: width,
        },
        rank_collapsed: collapsed,
        pivots: None,
    })
}

fn max_column_norm(m: MatRef<'_, f64>) -> f64 {
    (0..m.ncols()).map(|j| m.col(j).norm_l2()).fold(0.0, f64::max)
}

/// Orthonormal columns for the part of `r` whose pivots exceed `abs_tol`.
fn rank_revealed(r: MatRef<'_, f64>, abs_tol: f64) -> Mat<f64> {
    let n = r.nrows();
    if r.ncols() == 0 || max_column_norm(r) <= abs_tol {
        return Mat::zeros(n, 0);
    }
    let qr = r.col_piv_qr();
    let rr = qr.thin_R();
    let width = r.ncols().min(n);
    let rank = (0..width).take_while(|&i| rr[(i, i)].abs() > abs_tol).count();
    qr.compute_thin_Q().subcols(0, rank).to_owned()
}

fn hcat(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let ca = a.ncols();
    Mat::from_fn(a.nrows(), ca + b.ncols(), |i, j| {
        if j < ca {
            a[(i, j)]
        } else {
            b[(i, j - ca)]
        }
    })
}

/// Outcome of a sequential randomly pivoted Cholesky run.
#[derive(Clone, Debug)]
pub struct RpCholesky {
    pub pivots: Vec<usize>,
    /// Low-rank Cholesky factor `F` with `A ~ F F^T`.
    pub factor: Mat<f64>,
    /// Residual trace before any pivot and after each one.
    pub residual_traces: Vec<f64>,
    /// Residual diagonal was exhausted before `ell` pivots.
    pub stopped_early: bool,
}

/// Picks `ell` pivots one at a time with probability proportional to the
/// clamped residual diagonal, applying a rank-1 Cholesky update after each.
pub fn rpcholesky(a: &SpsdMatrix, ell: usize, seed: u64) -> Result<RpCholesky> {
    let n = a.n();
    if ell == 0 || ell > n {
        return Err(Error::RankOutOfRange { k: ell, max: n });
    }
    let ae = a.entries();
    let mut d: Vec<f64> = (0..n).map(|i| ae[(i, i)].max(0.0)).collect();
    let trace0: f64 = d.iter().sum();
    if trace0 <= 0.0 {
        return Err(Error::InvalidConfig("matrix diagonal is identically zero".into()));
    }
    let exhausted = 1e-14 * trace0;
    let mut rng = normal_sampler(seed, SKETCH_STREAM_BASE);
    let mut factor = Mat::<f64>::zeros(n, ell);
    let mut pivots = Vec::with_capacity(ell);
    let mut traces = vec![trace0];
    let mut stopped_early = false;
    for step in 0..ell {
        let total: f64 = d.iter().sum();
        if total <= exhausted {
            stopped_early = true;
            break;
        }
        let target = rng.uniform() * total;
        let mut acc = 0.0;
        let mut s = None;
        for (i, &di) in d.iter().enumerate() {
            if di <= 0.0 {
                continue;
            }
            acc += di;
            s = Some(i);
            if acc > target {
                break;
            }
        }
        let s = s.expect("positive residual mass has a positive entry");
        let mut g: Vec<f64> = (0..n).map(|i| ae[(i, s)]).collect();
        for j in 0..step {
            let fs = factor[(s, j)];
            if fs != 0.0 {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi -= factor[(i, j)] * fs;
                }
            }
        }
        let pivot = g[s];
        if !(pivot > 0.0) {
            stopped_early = true;
            break;
        }
        let inv = 1.0 / pivot.sqrt();
        for i in 0..n {
            let f = g[i] * inv;
            factor[(i, step)] = f;
            d[i] = (d[i] - f * f).max(0.0);
        }
        d[s] = 0.0;
        pivots.push(s);
        traces.push(d.iter().sum());
    }
    let factor = factor.subcols(0, pivots.len()).to_owned();
    Ok(RpCholesky {
        pivots,
        factor,
        residual_traces: traces,
        stopped_early,
    })
}

/// `Q = [e_{i_1} ... e_{i_l}]` at the RPCholesky pivots.
pub fn rpcholesky_basis(a: &SpsdMatrix, ell: usize, seed: u64) -> Result<OrthonormalBasis> {
    let run = rpcholesky(a, ell, seed)?;
    let mut b = OrthonormalBasis::standard_columns(a.n(), &run.pivots)?;
    b.provenance = Provenance {
        scheme: Scheme::Rpcholesky,
        q: 0,
        seed,
        block_width: 1,
    };
    b.rank_collapsed = run.stopped_early;
    Ok(b)
}

/// Dispatches on `scheme`. `Gaussian` and `SubspaceIteration` share one code
/// path; `Explicit` is rejected since it needs caller-supplied columns.
pub fn build_basis(a: &SpsdMatrix, scheme: Scheme, cfg: &SketchConfig) -> Result<OrthonormalBasis> {
    match scheme {
        Scheme::Gaussian => gaussian_basis(a, &SketchConfig { q: 0, ..*cfg }),
        Scheme::SubspaceIteration => gaussian_basis(a, cfg),
        Scheme::BlockKrylov => krylov_basis(a, cfg),
        Scheme::Rpcholesky => {
            cfg.validate()?;
            rpcholesky_basis(a, cfg.ell, cfg.seed)
        }
        Scheme::Explicit => Err(Error::InvalidConfig(
            "explicit bases are constructed from given columns".into(),
        )),
    }
}
