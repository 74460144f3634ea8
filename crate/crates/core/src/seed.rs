//! Seed derivation so that per-scene randomness is independent of processing order.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn derive_seed(global: u64, key: &str) -> u64 {
    splitmix64(global ^ splitmix64(fnv1a(key.as_bytes())))
}

pub fn derive_seed_n(global: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(global), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}
