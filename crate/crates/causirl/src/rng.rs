//! Seeded random streams.
//!
//! All randomness in this crate flows through ChaCha8 streams derived from a
//! single master seed and a purpose tag, so any run is reproducible from
//! `(seed, tag)` alone and independent substreams never collide. Gaussian
//! variates come from a Box-Muller transform over the stream's uniforms,
//! which keeps the bit pattern identical across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive an independent ChaCha8 stream from a master seed and a purpose tag.
pub fn substream(master_seed: u64, tag: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Standard-normal source backed by Box-Muller over a ChaCha8 stream.
///
/// Pairs are generated together and the spare is cached, so draws are a pure
/// function of the underlying stream position.
pub struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng, spare: None }
    }

    pub fn from_seed(master_seed: u64, tag: &str) -> Self {
        Self::new(substream(master_seed, tag))
    }

    /// One draw from N(0, 1).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
