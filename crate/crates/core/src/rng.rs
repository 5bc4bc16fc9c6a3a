//! Reproducible random streams.
//!
//! Every random quantity in the crate is drawn from a [`GaussianStream`]
//! keyed by a 64-bit seed. Seeds for sub-streams (one per Monte Carlo path,
//! one per driving component, one for auxiliary Brownian motions) are derived
//! from a master seed with [`derive_seed`], so results never depend on the
//! order in which paths are scheduled on worker threads.
//!
//! Splitting rule: starting from `h = mix64(master ^ SEED_SALT)`, each tag
//! `τ` is absorbed as `h = mix64(h ^ mix64(τ + GOLDEN_GAMMA))`, where
//! `mix64` is the SplitMix64 finaliser.
//!
//! Uniforms come from ChaCha8 (a counter-based block generator) using the top
//! 53 bits of each output word; normals are produced by the Marsaglia polar
//! method. Both choices are fixed so that output is bit-reproducible.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const SEED_SALT: u64 = 0x6a09_e667_f3bc_c908;

/// Tag namespaces used with [`derive_seed`].
pub mod tags {
    pub const PATH: u64 = 1;
    pub const COMPONENT: u64 = 2;
    pub const AUX_BROWNIAN: u64 = 3;
    pub const BATCH: u64 = 4;
}

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = mix64(master ^ SEED_SALT);
    for &tag in tags {
        h = mix64(h ^ mix64(tag.wrapping_add(GOLDEN_GAMMA)));
    }
    h
}

/// Seed of Monte Carlo path `index` under `master`.
pub fn path_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, &[tags::PATH, index])
}

pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        loop {
            let bits = self.rng.next_u64() >> 11;
            if bits != 0 {
                return bits as f64 * (1.0 / (1u64 << 53) as f64);
            }
        }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.normal();
        }
    }
}
