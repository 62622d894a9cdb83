//! Seeded random streams.
//!
//! Every random decision in the simulator is drawn from a SplitMix64
//! generator (`rand_xoshiro::SplitMix64`) whose 64-bit seed is derived from
//! the master seed, a [`Domain`] tag and two integer coordinates:
//!
//! ```text
//! h = mix(master ^ mix(domain))
//! h = mix(h ^ a * 0x9E37_79B9_7F4A_7C15)
//! h = mix(h ^ b * 0xC2B2_AE3D_27D4_EB4F)
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. Integer ranges are sampled from
//! `u64` ranges only, so replays are bit-identical across platforms.
//!
//! Stream coordinates used by the crate:
//!
//! | domain        | a                  | b              |
//! |---------------|--------------------|----------------|
//! | `Join`        | churn event index  | layer index    |
//! | `ExtraLayer`  | churn event index  | extra layer    |
//! | `Rfa`         | peer id            | 0              |
//! | `Replica`     | experiment key     | replica index  |
//! | `Pit`         | replica index      | depth/variant  |

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

/// Tags separating independent families of random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Join = 1,
    ExtraLayer = 2,
    Rfa = 3,
    Replica = 4,
    Pit = 5,
    Sampling = 6,
}

/// A deterministic source of independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSource {
    master: u64,
}

/// The generator handed out by [`RandomSource::stream`].
pub type Stream = SplitMix64;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    fn key(&self, domain: Domain, a: u64, b: u64) -> u64 {
        let mut h = mix(self.master ^ mix(domain as u64));
        h = mix(h ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        mix(h ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
    }

    /// The stream at coordinates `(domain, a, b)`.
    pub fn stream(&self, domain: Domain, a: u64, b: u64) -> Stream {
        SplitMix64::seed_from_u64(self.key(domain, a, b))
    }

    /// A child source, e.g. one per Monte Carlo replica.
    pub fn derive(&self, domain: Domain, a: u64, b: u64) -> RandomSource {
        RandomSource::new(self.key(domain, a, b))
    }
}

/// Uniform index in `0..n`. Panics if `n == 0`.
#[inline]
pub fn uniform_index<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

/// Uniform real in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn uniform_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
