//! Seed derivation. Every random stream in a run is derived from one base
//! seed and a stream label:
//!
//! ```text
//! derive_seed(base, label) = splitmix64(base ^ fnv1a64(label))
//! ```
//!
//! so distinct labels give independent-looking streams and the mapping is
//! stable across platforms and releases.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, label: &str) -> u64 {
    splitmix64(base ^ fnv1a64(label.as_bytes()))
}

/// Seed for the `index`-th item of a labeled family, e.g. per-row Monte Carlo.
pub fn derive_indexed(base: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive_seed(base, label) ^ splitmix64(index))
}
