//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha20 stream keyed by a 64-bit
//! master seed (`seed_from_u64`) and selected with `set_stream(id)`; distinct
//! consumers use distinct stream ids so runs never share state. Standard
//! normals use the Box–Muller transform, consuming two uniforms per pair of
//! variates and handing out the cosine branch first. Dense random matrices
//! are filled column by column, so the first `k` columns of an `n x l` draw
//! equal an `n x k` draw from the same stream.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Stream id reserved for matrix generators.
pub const GENERATOR_STREAM: u64 = 0;
/// First stream id handed to sketches; repetition `r` uses `SKETCH_STREAM_BASE + r`.
pub const SKETCH_STREAM_BASE: u64 = 1 << 20;

pub fn substream(master: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Box–Muller normal sampler over a uniform source.
pub struct NormalSampler<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> NormalSampler<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn into_inner(self) -> R {
        self.rng
    }

    /// Column-major `rows x cols` matrix of independent N(0, 1) entries.
    pub fn matrix(&mut self, rows: usize, cols: usize) -> Mat<f64> {
        let mut m = Mat::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = self.sample();
            }
        }
        m
    }

    /// Haar-distributed orthogonal matrix: Q from the QR factorization of a
    /// Gaussian matrix with the signs of `diag(R)` folded into Q.
    pub fn orthogonal(&mut self, n: usize) -> Mat<f64> {
        let g = self.matrix(n, n);
        let qr = g.qr();
        let r = qr.R();
        let mut q = qr.compute_Q();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                for i in 0..n {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        q
    }
}

pub fn normal_sampler(master: u64, stream: u64) -> NormalSampler<ChaCha20Rng> {
    NormalSampler::new(substream(master, stream))
}
