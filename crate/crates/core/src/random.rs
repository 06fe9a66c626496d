//! Seed derivation and keyed random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream keyed by
//! `(seed, stream index)`, so parallel work produces the same numbers no
//! matter how it is scheduled.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a hash of the little-endian seed bytes followed by `purpose`.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(purpose.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// The random stream with index `stream` under `seed`.
pub fn keyed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws letters with fixed probabilities by inversion of the cumulative sums.
#[derive(Clone, Debug)]
pub struct LetterSampler {
    cumulative: Vec<f64>,
}

impl LetterSampler {
    pub fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = f64::INFINITY;
        }
        LetterSampler { cumulative }
    }

    pub fn draw<R: RngExt>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative.iter().position(|&c| u < c).unwrap_or(0)
    }
}
