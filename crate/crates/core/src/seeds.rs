//! Seed hierarchy: every random stream is derived from the run seed and
//! the coordinates of its consumer (worker, update, episode, ...).

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(parts: &[u64]) -> u64 {
    parts.iter().fold(0x0DDB_1A5E_5BAD_5EED, |h, &p| splitmix(h ^ p))
}

/// Training scenes have the top bit set; evaluation seed lists stay below
/// it, so the two sets never overlap.
pub fn training_scene(parts: &[u64]) -> u64 {
    derive(parts) | (1 << 63)
}

pub fn is_training_scene(seed: u64) -> bool {
    seed >> 63 == 1
}

// stream tags
pub const TAG_SCENE: u64 = 1;
pub const TAG_EPISODE: u64 = 2;
pub const TAG_SAMPLING: u64 = 3;
pub const TAG_CURIOSITY: u64 = 4;
pub const TAG_SHUFFLE: u64 = 5;
pub const TAG_INIT: u64 = 6;
pub const TAG_EVAL: u64 = 7;
