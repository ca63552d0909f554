//! Seeded randomness.
//!
//! Every stochastic routine takes a `u64` seed and builds its own
//! [`ChaCha8Rng`]. Child seeds for independent sub-tasks (the L dictionaries
//! of an ensemble, the restarts of a clustering) come from [`split_seed`].

use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives the seed of sub-task `index` from a master seed.
///
/// SplitMix64 finalizer over `master + (index + 1) * golden_gamma`, so nearby
/// masters and indices map to unrelated streams.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `amount` distinct indices, each draw proportional to the weights
/// of the indices not yet drawn.
pub fn weighted_without_replacement(
    rng: &mut Rng,
    weights: &[f64],
    amount: usize,
) -> Result<Vec<usize>> {
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if positive < amount {
        return Err(Error::NotEnoughSamples {
            needed: amount,
            available: positive,
        });
    }
    if amount == 0 {
        return Ok(Vec::new());
    }
    let mut dist = WeightedIndex::new(weights.iter().map(|w| w.max(0.0)))
        .map_err(|e| Error::invalid(alloc::format!("sampling weights: {e}")))?;
    let mut out = Vec::with_capacity(amount);
    for k in 0..amount {
        let i = dist.sample(rng);
        out.push(i);
        if k + 1 < amount {
            dist.update_weights(&[(i, &0.0)])
                .map_err(|e| Error::invalid(alloc::format!("sampling weights: {e}")))?;
        }
    }
    Ok(out)
}

/// Draws `amount` indices independently (with replacement) proportional to `weights`.
pub fn weighted_with_replacement(
    rng: &mut Rng,
    weights: &[f64],
    amount: usize,
) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(weights.iter().map(|w| w.max(0.0)))
        .map_err(|e| Error::invalid(alloc::format!("sampling weights: {e}")))?;
    Ok((0..amount).map(|_| dist.sample(rng)).collect())
}
