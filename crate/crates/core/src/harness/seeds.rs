//! Counter-based seed derivation.
//!
//! A seed key packs `(purpose, trial, generation, index)` into 64 bits; the
//! key is mixed with the master seed through a bijection, so distinct keys
//! under one master seed always give distinct seeds.

use crate::error::{Error, Result};

const TRIAL_BITS: u32 = 12;
const GENERATION_BITS: u32 = 28;
const INDEX_BITS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Optimizer = 0,
    Search = 1,
    Reevaluation = 2,
    Baseline = 3,
    Scan = 4,
    Evaluate = 5,
}

/// SplitMix64 finalizer; a bijection on `u64`.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, purpose: Purpose, trial: u64, generation: u64, index: u64) -> Result<u64> {
    if trial >= 1 << TRIAL_BITS || generation >= 1 << GENERATION_BITS || index >= 1 << INDEX_BITS {
        return Err(Error::InvalidArgument(format!(
            "seed counters out of range: trial {trial}, generation {generation}, index {index}"
        )));
    }
    let key = ((purpose as u64) << (TRIAL_BITS + GENERATION_BITS + INDEX_BITS))
        | (trial << (GENERATION_BITS + INDEX_BITS))
        | (generation << INDEX_BITS)
        | index;
    Ok(mix(key ^ mix(master)))
}

/// Separate seed for the reservoir weights of one evaluation, so it does not
/// share a generator with the task data drawn from `eval_seed`.
pub fn reservoir_seed(eval_seed: u64) -> u64 {
    mix(eval_seed ^ 0x6A09_E667_F3BC_C908)
}
