//! Counter-based deterministic random numbers.
//!
//! All stochastic pieces of the pipeline (weight init, dropout masks,
//! synthetic data) draw from this generator so that a run is a pure
//! function of its seeds. Dropout keys its stream by a stable per-site
//! salt rather than by call order, so adding or removing unrelated ops
//! does not shift anyone else's mask.

/// SplitMix64 scramble of a 64-bit word. Used both as a stream mixer and
/// as the per-step output function.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sequential generator: a seeded counter pushed through SplitMix64.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            state: splitmix64(seed ^ 0x5851_f42d_4c95_7f2d),
            counter: 0,
        }
    }

    /// Derive an independent stream for a named sub-component.
    pub fn derive(&self, salt: u64) -> Rng {
        Rng {
            state: splitmix64(self.state ^ splitmix64(salt)),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = splitmix64(self.state.wrapping_add(self.counter.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        self.counter += 1;
        out
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64().max(1e-300);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn uniform_vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }

    pub fn normal_vec(&mut self, n: usize, std: f64) -> Vec<f64> {
        (0..n).map(|_| self.normal() * std).collect()
    }
}

/// Stateless dropout decision: one hash per element, keyed by
/// (seed, site salt, element index). Returns true when the element survives.
#[inline]
pub fn dropout_keep(seed: u64, salt: u64, index: u64, rate: f64) -> bool {
    let h = splitmix64(splitmix64(seed ^ salt.rotate_left(17)) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93));
    let u = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    u >= rate
}

/// Hash a string into a stable salt for keyed streams.
pub fn salt_from_name(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ() {
        let root = Rng::new(7);
        let mut a = root.derive(1);
        let mut b = root.derive(2);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_in_range() {
        let mut r = Rng::new(3);
        for _ in 0..1000 {
            let v = r.uniform(-2.0, 5.0);
            assert!((-2.0..5.0).contains(&v));
        }
    }

    #[test]
    fn dropout_keep_matches_rate_roughly() {
        let n = 20_000;
        let kept = (0..n).filter(|&i| dropout_keep(1, 2, i, 0.25)).count();
        let frac = kept as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.02, "kept fraction {frac}");
    }
}
