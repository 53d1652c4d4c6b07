//! Deterministic, purpose-separated random streams.
//!
//! Every stochastic component (init, per-iteration batch draws, shell noise)
//! derives its own ChaCha8 stream from the single run seed plus a label, so
//! adding or reordering consumers never shifts anybody else's draws. Labels
//! are mixed with a SplitMix64 absorber — cheap, stable across platforms, and
//! good enough separation for seeding a real generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a labelled stream, optionally indexed (iteration, chunk).
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut state = root;
    let _ = splitmix64(&mut state);
    for chunk in label.as_bytes().chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        state ^= u64::from_le_bytes(word);
        let _ = splitmix64(&mut state);
    }
    state ^= index;
    splitmix64(&mut state)
}

/// Labelled generator: `derive_rng(seed, "surface-batch", iter)`.
pub fn derive_rng(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, index))
}
