//! Minimal deterministic generator for reproducible experiments.
//!
//! Trial `i` of a run seeds its own stream as `Prng::substream(seed, i)`, so
//! any trial can be reproduced in isolation and results do not depend on
//! platform or iteration order.

#[derive(Clone, Debug)]
pub struct Prng(u64);

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng(splitmix64(seed ^ 0xd1b54a32d192ed03))
    }

    /// Independent stream for counter `i` under a master seed.
    pub fn substream(seed: u64, i: u64) -> Self {
        Prng::new(splitmix64(seed).wrapping_add(i.wrapping_mul(0x9e3779b97f4a7c15)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = splitmix64(self.0);
        self.0
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit() * (hi - lo)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n.max(1)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
