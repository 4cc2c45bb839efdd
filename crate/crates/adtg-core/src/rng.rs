//! Deterministic RNG streams derived from a single root seed.
//!
//! Every randomized operation takes a `u64` seed and derives named
//! sub-streams with [`child`]. Stream identity is `(seed, label, indices)`,
//! hashed through SHA-256, so results never depend on scheduling or worker
//! count: two call sites that derive the same `(label, indices)` from the
//! same seed observe the same stream, and nothing else observes it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `(seed, label, indices)`.
pub fn child(seed: u64, label: &str, indices: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0xffu8]); // domain separator between seed and label
    hasher.update(label.as_bytes());
    for ix in indices {
        hasher.update([0xfeu8]);
        hasher.update(ix.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Instantiate the stream for a derived seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand: derive a child seed and open its stream.
pub fn substream(seed: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    stream(child(seed, label, indices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible() {
        let mut a = substream(7, "unit", &[1, 2]);
        let mut b = substream(7, "unit", &[1, 2]);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn labels_and_indices_separate_streams() {
        let base: u64 = substream(7, "unit", &[1]).random();
        assert_ne!(base, substream(7, "unit", &[2]).random());
        assert_ne!(base, substream(7, "other", &[1]).random());
        assert_ne!(base, substream(8, "unit", &[1]).random());
    }

    #[test]
    fn index_boundaries_do_not_collide() {
        // ("ab", [1]) vs ("a", [?]) style collisions are prevented by the
        // separator bytes.
        assert_ne!(child(0, "ab", &[1]), child(0, "a", &[98, 1]));
    }
}
