//! Counter-based random number generation.
//!
//! Every random quantity in the crate is a pure function of
//! `(seed, stream, index, counter)`, so Monte Carlo loops can be
//! parallelised arbitrarily while reproducing bit-identical output.
//! The generator is SplitMix64 evaluated at a random-access counter:
//! `output(k) = finalize(key + (k+1) * GOLDEN)`.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain-separation tags for independent substreams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Brownian increments, one substream per path index.
    Brownian = 1,
    /// Initial points drawn from the standard Gaussian.
    Initial = 2,
    /// Monte Carlo quadrature nodes for high-dimensional smoothing.
    Quadrature = 3,
    /// Lattice pair sampling for maximal-function statistics.
    Pairs = 4,
}

#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A random-access SplitMix64 substream.
#[derive(Clone, Copy, Debug)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    /// Substream keyed by `(seed, stream, index)`.
    pub fn new(seed: u64, stream: Stream, index: u64) -> Self {
        let key = finalize(
            finalize(seed ^ GOLDEN.wrapping_mul(stream as u64 + 1))
                ^ index.wrapping_mul(0xd605_bbb5_8c8a_bc03).wrapping_add(stream as u64),
        );
        CounterRng { key }
    }

    /// The `k`-th raw word of this substream.
    #[inline]
    pub fn word(&self, k: u64) -> u64 {
        finalize(self.key.wrapping_add((k.wrapping_add(1)).wrapping_mul(GOLDEN)))
    }

    /// The `k`-th uniform variate in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, k: u64) -> f64 {
        ((self.word(k) >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// The `k`-th standard normal variate (Box-Muller, cosine branch).
    #[inline]
    pub fn normal(&self, k: u64) -> f64 {
        let u1 = self.uniform(2 * k);
        let u2 = self.uniform(2 * k + 1);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fill `out` with the standard Gaussian point number `k` of this
    /// substream (`out.len()` coordinates).
    pub fn gaussian_point(&self, k: u64, out: &mut [f64]) {
        let d = out.len() as u64;
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.normal(k * d + j as u64);
        }
    }
}
