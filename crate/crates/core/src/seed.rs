//! Seed derivation. Every random stream in a run is derived from one master
//! seed so that no component draws from ambient entropy.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for `(master, path...)`. The top bit is
/// cleared so derived seeds fit a signed 64-bit integer (TOML's limit).
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p))) >> 1
}
