//! Stage-keyed seed derivation.
//!
//! Every source of randomness in the pipeline draws its seed from one master
//! seed through `derive`, keyed by a stage name (and optionally an epoch or
//! index), so individual stages are reproducible in isolation.

/// Splitmix64 step, the standard finalizer-based generator.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string, used to fold stage names into the seed stream.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive a stage seed from the master seed and a stage name.
pub fn derive(master: u64, stage: &str) -> u64 {
    let mut state = master ^ fnv1a(stage.as_bytes());
    splitmix64(&mut state)
}

/// Derive a per-index seed (e.g. per epoch or per run) under a stage.
pub fn derive_indexed(master: u64, stage: &str, index: u64) -> u64 {
    let mut state = derive(master, stage) ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    splitmix64(&mut state)
}
