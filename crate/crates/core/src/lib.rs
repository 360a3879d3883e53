//! Truncated Nyström approximation of SPSD matrices, the funNyström lift to
//! matrix functions, and numerical checks of the accompanying error bounds.

// `!(x >= 0.0)` style tests are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::redundant_guards)]

pub mod error;
pub mod experiments;
pub mod functions;
pub mod linalg;
pub mod metrics;
pub mod mmio;
pub mod nystrom;
pub mod random;
pub mod sketch;

pub use error::{Error, Result};
pub use functions::ScalarFunction;
pub use linalg::{NormKind, SpsdMatrix};
pub use nystrom::{funnystrom, nystrom_truncated, LowRankFactor};
pub use sketch::{OrthonormalBasis, Scheme, SketchConfig};

/// Caps the worker threads used by sweeps, suites and dense kernels.
/// `0` keeps the default (one per available core). Call once, early.
pub fn configure_threads(threads: usize) -> Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    faer::set_global_parallelism(faer::Par::rayon(threads));
    Ok(())
}
