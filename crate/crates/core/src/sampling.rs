//! Deterministic sampling helpers shared by the consistency and certificate checks.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reproducible uniform sampler over an axis-aligned box `[-half_width, half_width]^n`.
pub struct BoxSampler {
    rng: ChaCha8Rng,
    half_width: f64,
}

impl BoxSampler {
    pub fn new(seed: u64, half_width: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            half_width,
        }
    }

    pub fn sample(&mut self, dim: usize) -> DVector<f64> {
        let w = self.half_width;
        DVector::from_fn(dim, |_, _| self.rng.random_range(-w..=w))
    }

    /// Like [`sample`](Self::sample) but resamples until the point is not the origin.
    pub fn sample_nonzero(&mut self, dim: usize) -> DVector<f64> {
        loop {
            let v = self.sample(dim);
            if dim == 0 || v.norm() > 1e-12 {
                return v;
            }
        }
    }
}
