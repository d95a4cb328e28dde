//! Deterministic 64-bit mixers used for bucket hashing, shard routing,
//! string tokenization, and seed derivation.

/// SplitMix64 finalizer. Bijective on u64, good avalanche.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}

/// Seeded multiply-xor-shift mixer; distinct seeds give independent hash
/// functions for the two cuckoo buckets.
#[inline]
pub fn seeded_mix(x: u64, seed: u64) -> u64 {
    mix64(x ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// FNV-1a over bytes; used for file checksums and config digests.
#[inline]
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashes an arbitrary token (e.g. a categorical string) to a 64-bit
/// feature id under a per-slot seed.
#[inline]
pub fn hash_token(token: &str, seed: u64) -> u64 {
    seeded_mix(fnv1a(token.as_bytes()), seed)
}

/// Derives a component seed from the experiment's master seed and a label,
/// so one 64-bit seed reproducibly fans out to every RNG consumer.
#[inline]
pub fn derive_seed(master: u64, label: &str) -> u64 {
    seeded_mix(fnv1a(label.as_bytes()), master)
}
