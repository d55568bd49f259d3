//! Deterministic seed derivation.
//!
//! Training loops need many independent random streams (shuffling, attack
//! initialization per sample per epoch, probe attacks). Deriving each
//! stream's seed from the run seed plus its coordinates keeps every stream
//! independent of execution order, so results do not change when the work is
//! parallelized or when an unrelated stream is added.

/// splitmix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a coordinate path.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &part in path {
        h = splitmix64(h ^ splitmix64(part.wrapping_add(0x51_7c_c1_b7_27_22_0a_95)));
    }
    h
}

/// Stable tag values so call sites don't collide by accident.
pub mod stream {
    pub const SHUFFLE: u64 = 1;
    pub const ATTACK: u64 = 2;
    pub const PROBE: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const DATA: u64 = 5;
}
