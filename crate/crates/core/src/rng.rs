//! Deterministic pseudo-random generator used by every stochastic step in
//! the pipeline (dataset split, weight init, epoch shuffles, simulator
//! walks).
//!
//! The algorithm is part of the model-file contract: a model trained with a
//! given seed must be byte-identical across runs, so the generator is pinned
//! here rather than taken from a crate whose stream semantics may change.
//! See `docs/model-format.md` for the normative description.
//!
//! Construction: the 64-bit seed is expanded with splitmix64 into the four
//! words of xoshiro256** state. Sub-streams (`with_stream`) xor a
//! splitmix64-mixed stream id into the seed before expansion, giving
//! decorrelated sequences from one user-facing seed.

/// splitmix64 step: advances `state` and returns the mixed output.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256** seeded via splitmix64.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Generator seeded directly from `seed`.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    /// Decorrelated sub-stream of `seed`. See [`stream`] for the ids in
    /// use.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut sm = stream;
        Rng::new(seed ^ splitmix64(&mut sm))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1): the top 53 bits scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]: (top 53 bits + 1) scaled by 2^-53. Safe as a log
    /// argument.
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be nonzero. Plain modulo: the
    /// bias is ~n/2^64, irrelevant at our scales, and the mapping is
    /// trivially pinnable.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// Uniform in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box–Muller (cosine branch). Consumes exactly two
    /// uniforms per call; the sine branch is discarded to keep the stream
    /// layout simple to document.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// In-place Fisher–Yates shuffle: for i from len-1 down to 1, swap
    /// element i with element `below(i+1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// RNG stream ids (see `Rng::with_stream`).
pub mod stream {
    /// Dataset split shuffle.
    pub const SPLIT: u64 = 1;
    /// Weight initialization draws.
    pub const INIT: u64 = 2;
    /// Per-epoch mini-batch shuffles.
    pub const SHUFFLE: u64 = 3;
    /// Synthetic cluster dataset.
    pub const SYNTH: u64 = 4;
    /// Simulator walks: device `i` uses `WALK_BASE + i`.
    pub const WALK_BASE: u64 = 100;
}
