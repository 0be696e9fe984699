//! Seeded pseudo-random number generation with a fixed algorithm.
//!
//! Everything that must be bit-reproducible across runs and platforms
//! (dataset rendering, weight initialization, shuffle order) draws from
//! this generator rather than a platform or library default whose stream
//! could change between versions.

/// xorshift64* generator (shifts 12/25/27, multiplier 0x2545F4914F6CDD1D).
///
/// Seeds are passed through the splitmix64 finalizer (increment
/// 0x9E3779B97F4A7C15, mix constants 0xBF58476D1CE4E5B9 and
/// 0x94D049BB133111EB) so that small or zero seeds still produce a
/// well-mixed nonzero state.
#[derive(Debug, Clone)]
pub struct Xorshift64Star {
    state: u64,
}

const SPLITMIX_INC: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(SPLITMIX_INC);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Xorshift64Star {
    pub fn new(seed: u64) -> Self {
        let mut state = splitmix64(seed);
        if state == 0 {
            state = SPLITMIX_INC;
        }
        Xorshift64Star { state }
    }

    /// Generator for an independent substream, e.g. one stream per image
    /// index so items can be produced in any order.
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        Self::new(seed ^ stream.wrapping_add(1).wrapping_mul(SPLITMIX_INC))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform in `0..bound` (`bound > 0`); used for shuffle indices.
    pub fn next_below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}
