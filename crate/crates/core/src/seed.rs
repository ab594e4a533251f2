//! Seed derivation helpers.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the trie node at heap position `code` (root 1, children 2k and 2k+1).
/// The code depends only on the root-to-node path, so deepening a trie keeps
/// every existing node's seed.
pub fn node_seed(seed: u64, code: u64) -> u64 {
    seed ^ mix64(code)
}
