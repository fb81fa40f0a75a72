//! Deterministic random numbers.
//!
//! Everything downstream (phantom jitter, patch sampling, bootstrap
//! resampling) must replay bit-identically from a 64-bit seed, on any
//! platform. We use SplitMix64 (Vigna's constants), which is tiny,
//! branch-free and passes BigCrush when used as a 64-bit generator.
//! Parallel code derives one child generator per work item via
//! [`Rng::derive`] instead of sharing a stream.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Independent child generator for work item `stream`. Deterministic in
    /// (seed, stream) and unaffected by draws made from `self`, so parallel
    /// loops can derive per-index generators up front.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Rng::new(mix64(seed.wrapping_add(GAMMA.wrapping_mul(stream.wrapping_add(1)))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Rejection sampling, so there is no modulo
    /// bias and the stream is identical on every platform.
    pub fn range_usize(&mut self, n: usize) -> usize {
        assert!(n > 0, "range_usize needs n > 0");
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal draw (Box-Muller; consumes two uniforms).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// In-place Fisher-Yates shuffle; every permutation equally likely.
pub fn fisher_yates_shuffle<T>(items: &mut [T], rng: &mut Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.range_usize(i + 1);
        items.swap(i, j);
    }
}
