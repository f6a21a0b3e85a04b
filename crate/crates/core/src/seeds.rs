//! Derives independent deterministic seeds from one run seed, so parameter
//! initialization and per-epoch shuffles draw from unrelated streams.

/// SplitMix64 finalizer over the seed xored with a stream tag.
pub(crate) fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) const ROW_INIT: u64 = 1;
pub(crate) const COL_INIT: u64 = 2;
pub(crate) const SHUFFLE: u64 = 3;
pub(crate) const SINGLE_INIT: u64 = 4;
