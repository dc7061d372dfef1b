use std::f64::consts::TAU;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// ChaCha8 keyed by `seed` (expanded with the PCG32 routine of
/// `SeedableRng::seed_from_u64`) on an explicit stream. Frames draw from
/// stream `frame`; scenario construction uses [`SCENARIO_STREAM`].
///
/// * uniform: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`
/// * normal: Box-Muller cosine branch, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`
#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

pub const SCENARIO_STREAM: u64 = u64::MAX;

impl SimRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        Self(r)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (TAU * u2).cos()
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}
