//! Counter-based pseudo-random stream (splitmix64).
//!
//! Every consumer derives its own stream from (seed, salt) pairs, so
//! results are reproducible no matter how work is scheduled. Quality is
//! ample for Monte Carlo sampling and multistart scattering; this is
//! not a cryptographic generator.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub(crate) struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { state: seed }
    }

    /// Independent stream addressed by up to two salts. Each salt is
    /// diffused through the output function before mixing, so adjacent
    /// ids (particle 1, 2, 3...) land in unrelated states.
    pub fn stream(seed: u64, salt_a: u64, salt_b: u64) -> Self {
        let mut s = CounterRng::new(seed);
        s.state = s.state.wrapping_add(mix(salt_a.wrapping_mul(GOLDEN) ^ 0xA076_1D64_78BD_642F));
        s.state = s.state.wrapping_add(mix(salt_b.wrapping_mul(GOLDEN) ^ 0xE703_7ED1_A0B4_28DB));
        s
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform on (0, 1]; never returns 0, so ln() is always finite.
    pub fn next_f64_open(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard exponential via inversion.
    pub fn next_exp(&mut self) -> f64 {
        -self.next_f64_open().ln()
    }
}

fn mix(v: u64) -> u64 {
    let mut z = v;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
