//! Counter-addressed random streams.
//!
//! Every draw is a pure function of `(seed, particle_id, step_index, counter)`,
//! so a particle's noise does not depend on how work is split across threads,
//! on how many other particles exist, or on whether the path is re-simulated
//! later (the Girsanov reweighting relies on the latter).

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const PARTICLE_MIX: u64 = 0xD1B5_4A32_D192_ED03;
const STEP_MIX: u64 = 0xAEF1_7502_108E_F2D9;

/// SplitMix64 finalizer.
#[inline]
fn fmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream for one particle at one step.
#[derive(Debug, Clone)]
pub struct CounterStream {
    key: u64,
    counter: u64,
}

impl CounterStream {
    #[inline]
    pub fn new(seed: u64, particle: u64, step: u64) -> Self {
        let k = fmix(seed.wrapping_add(GOLDEN));
        let k = fmix(k ^ particle.wrapping_mul(PARTICLE_MIX));
        let key = fmix(k ^ step.wrapping_mul(STEP_MIX));
        Self { key, counter: 0 }
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for z in out.iter_mut() {
            *z = self.normal();
        }
    }
}

impl RngCore for CounterStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        fmix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Derive an independent sub-seed, e.g. for initial-law sampling versus
/// Brownian increments.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    fmix(fmix(seed ^ GOLDEN) ^ purpose.wrapping_mul(PARTICLE_MIX))
}
