//! Counter-based seed derivation.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trial `trial` of sweep point `index` under `master`.
pub fn mix(master: u64, index: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ index) ^ trial.rotate_left(32))
}
