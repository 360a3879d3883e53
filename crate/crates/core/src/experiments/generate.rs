use std::path::PathBuf;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SpsdMatrix;
use crate::mmio::read_matrix_market;
use crate::random::{normal_sampler, GENERATOR_STREAM};

/// Default exponent of the power-mean kernel `((i/n)^p + (j/n)^p)^(1/p)`.
pub const KERNEL_POWER: f64 = 10.0;

fn default_exponent() -> f64 {
    KERNEL_POWER
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// `A_ij = ((i/n)^p + (j/n)^p)^(1/p)` for `i, j = 1..n`, `p = exponent`.
    /// For `p = 10` the matrix is indefinite and generation fails; negative
    /// `p` gives a PSD kernel close to `min(i, j) / n`.
    KernelPower {
        n: usize,
        #[serde(default = "default_exponent")]
        exponent: f64,
    },
    /// `U diag(1, 1/2, ..., 1/n) U^T` with Haar `U`.
    HarmonicSpectrum {
        n: usize,
    },
    /// `U diag(e^-1, ..., e^-n) U^T` with Haar `U`.
    ExponentialSpectrum {
        n: usize,
    },
    /// Matrix Market file.
    File {
        path: PathBuf,
    },
    Inline {
        rows: Vec<Vec<f64>>,
    },
}

impl GeneratorSpec {
    /// Declared dimension, if the spec states one without reading anything.
    pub fn n(&self) -> Option<usize> {
        match self {
            GeneratorSpec::KernelPower { n, .. }
            | GeneratorSpec::HarmonicSpectrum { n }
            | GeneratorSpec::ExponentialSpectrum { n } => Some(*n),
            GeneratorSpec::Inline { rows } => Some(rows.len()),
            GeneratorSpec::File { .. } => None,
        }
    }

    /// Same family at dimension `n`. File and inline matrices are returned unchanged.
    pub fn with_n(&self, n: usize) -> GeneratorSpec {
        match self {
            GeneratorSpec::KernelPower { exponent, .. } => GeneratorSpec::KernelPower { n, exponent: *exponent },
            GeneratorSpec::HarmonicSpectrum { .. } => GeneratorSpec::HarmonicSpectrum { n },
            GeneratorSpec::ExponentialSpectrum { .. } => GeneratorSpec::ExponentialSpectrum { n },
            other => other.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == Some(0) {
            return Err(Error::InvalidConfig("generator dimension must be positive".into()));
        }
        if let GeneratorSpec::KernelPower { exponent, .. } = self {
            if !(exponent.is_finite() && *exponent != 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "kernel exponent {exponent} must be finite and nonzero"
                )));
            }
        }
        Ok(())
    }
}

/// Fails with `NotPsd` unless `lambda_min >= -PSD_TOL * lambda_max`.
pub fn kernel_power(n: usize, p: f64) -> Result<SpsdMatrix> {
    let nf = n as f64;
    let entries = Mat::from_fn(n, n, |i, j| {
        let x = ((i + 1) as f64 / nf).powf(p);
        let y = ((j + 1) as f64 / nf).powf(p);
        (x + y).powf(1.0 / p)
    });
    SpsdMatrix::new(entries)
}

/// `U diag(values) U^T` with `U` Haar-distributed, drawn from the generator stream of `seed`.
pub fn rotated_spectrum(values: &[f64], seed: u64) -> Result<SpsdMatrix> {
    let u = normal_sampler(seed, GENERATOR_STREAM).orthogonal(values.len());
    SpsdMatrix::from_eigen(values, u)
}

pub fn harmonic_spectrum(n: usize) -> Vec<f64> {
    (1..=n).map(|i| 1.0 / i as f64).collect()
}

pub fn exponential_spectrum(n: usize) -> Vec<f64> {
    (1..=n).map(|i| (-(i as f64)).exp()).collect()
}

pub fn generate_matrix(spec: &GeneratorSpec, seed: u64) -> Result<SpsdMatrix> {
    spec.validate()?;
    match spec {
        GeneratorSpec::KernelPower { n, exponent } => kernel_power(*n, *exponent),
        GeneratorSpec::HarmonicSpectrum { n } => rotated_spectrum(&harmonic_spectrum(*n), seed),
        GeneratorSpec::ExponentialSpectrum { n } => rotated_spectrum(&exponential_spectrum(*n), seed),
        GeneratorSpec::File { path } => SpsdMatrix::new(read_matrix_market(path)?),
        GeneratorSpec::Inline { rows } => SpsdMatrix::from_rows(rows),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;

    #[test]
    fn exponential_spectrum_is_recovered() {
        let a = generate_matrix(&GeneratorSpec::ExponentialSpectrum { n: 4 }, 3).unwrap();
        let eig = sym_eig(a.entries()).unwrap();
        for (i, v) in eig.values.iter().enumerate() {
            assert!((v - (-(i as f64 + 1.0)).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_trace() {
        let a = generate_matrix(&GeneratorSpec::HarmonicSpectrum { n: 5 }, 9).unwrap();
        let trace: f64 = (0..5).map(|i| a.entries()[(i, i)]).sum();
        let expected: f64 = (1..=5).map(|i| 1.0 / i as f64).sum();
        assert!((trace - expected).abs() < 1e-13);
    }

    #[test]
    fn kernel_power_with_printed_exponent_is_indefinite() {
        let err = kernel_power(200, KERNEL_POWER).unwrap_err();
        match err {
            Error::NotPsd { lambda_min, lambda_max } => assert!(lambda_min < -0.1 * lambda_max),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kernel_power_negative_exponent_is_psd() {
        let a = kernel_power(200, -KERNEL_POWER).unwrap();
        let max_entry = (0..200)
            .flat_map(|i| (0..200).map(move |j| (i, j)))
            .map(|(i, j)| a.entries()[(i, j)])
            .fold(0.0, f64::max);
        let eig = sym_eig(a.entries()).unwrap();
        assert!(eig.values[199] >= -1e-10 * eig.values[0]);
        assert!(eig.values[0] > 0.0 && eig.values[0] <= 200.0 * max_entry);
    }

    #[test]
    fn config_round_trip() {
        let spec: GeneratorSpec = serde_json::from_str(r#"{"kind":"kernel_power","n":12}"#).unwrap();
        assert_eq!(
            spec,
            GeneratorSpec::KernelPower {
                n: 12,
                exponent: KERNEL_POWER
            }
        );
        assert_eq!(spec.with_n(5).n(), Some(5));
        assert!(GeneratorSpec::HarmonicSpectrum { n: 0 }.validate().is_err());
    }
}
