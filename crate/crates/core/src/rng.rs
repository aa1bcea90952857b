//! Deterministic, splittable random streams.
//!
//! Every stream is keyed by `(root_seed, stream_id)` and backed by ChaCha20,
//! whose 64-bit stream selector gives independent sequences per id. Nothing
//! about a stream depends on the order in which other streams are consumed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// A single-owner random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform draw in `[lo, hi)`; returns `lo` when the range is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        if hi <= lo {
            return lo;
        }
        self.inner.random_range(lo..=hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index over an empty range");
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.inner.random::<f64>() < p
        }
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(rand_distr::StandardNormal)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }

    /// Derive a child stream whose key depends only on this stream's key and `id`.
    pub fn child(&self, id: u64) -> RngStream {
        derive_stream(mix(self.root_seed, self.stream_id), id)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Open the stream keyed by `(root_seed, stream_id)`.
pub fn derive_stream(root_seed: u64, stream_id: u64) -> RngStream {
    let mut inner = ChaCha20Rng::seed_from_u64(root_seed);
    inner.set_stream(stream_id);
    RngStream {
        root_seed,
        stream_id,
        inner,
    }
}

/// SplitMix64 finalizer over two words, used to build composite stream keys.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b.rotate_left(32))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream-id namespaces so unrelated consumers never share a stream.
pub mod streams {
    pub const REGIME: u64 = 1;
    pub const CAPACITY: u64 = 2;
    pub const DEMAND: u64 = 16;
    pub const DRIFT: u64 = 64;
    pub const INIT: u64 = 128;
    pub const SHUFFLE: u64 = 129;
    pub const SWAP: u64 = 130;
    pub const SPLIT: u64 = 131;
    pub const ROUND: u64 = 132;
    pub const CALIBRATION: u64 = 133;
    pub const GRID: u64 = 134;
    pub const CORPUS: u64 = 135;
    pub const FINETUNE: u64 = 136;
}
