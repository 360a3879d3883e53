//! Matrix generators, parameter sweeps over basis schemes, the counterexample
//! verifier and the randomized theorem suites.

mod counterexamples;
mod generate;
mod suites;
mod sweep;

pub use counterexamples::*;
pub use generate::*;
pub use suites::*;
pub use sweep::*;
