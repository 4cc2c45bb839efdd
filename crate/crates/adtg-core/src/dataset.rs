//! Terrain dataset records shared by the guidance and curriculum layers.

use crate::heightfield::Heightmap;
use crate::rng;

use rand::Rng;

/// Where a dataset record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Seed,
    Synthesized,
    Procedural,
}

impl Origin {
    pub fn as_str(&self) -> &'static str {
        match self {
            Origin::Seed => "seed",
            Origin::Synthesized => "synthesized",
            Origin::Procedural => "procedural",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "seed" => Some(Origin::Seed),
            "synthesized" => Some(Origin::Synthesized),
            "procedural" => Some(Origin::Procedural),
            _ => None,
        }
    }
}

/// A terrain with its measured difficulty inside the curriculum dataset.
///
/// `success_rate` is `None` until the terrain has been evaluated with a
/// policy; records without a measured rate stay out of selection and
/// synthesis-source pools.
#[derive(Debug, Clone)]
pub struct TerrainRecord {
    pub id: u64,
    pub map: Heightmap,
    pub success_rate: Option<f64>,
    pub last_eval_epoch: u64,
    pub origin: Origin,
}

impl TerrainRecord {
    pub fn new(id: u64, map: Heightmap, origin: Origin) -> Self {
        Self { id, map, success_rate: None, last_eval_epoch: 0, origin }
    }

    pub fn measured(&self) -> bool {
        self.success_rate.is_some()
    }
}

/// Uniform sub-sample of at most `cap` record indices, deterministic in
/// `seed`. With `len <= cap` this is the identity permutation.
pub fn subsample_indices(len: usize, cap: usize, seed: u64) -> Vec<usize> {
    if len <= cap {
        return (0..len).collect();
    }
    // Partial Fisher-Yates: the first `cap` entries of a seeded shuffle.
    let mut idx: Vec<usize> = (0..len).collect();
    let mut r = rng::substream(seed, "dataset.subsample", &[]);
    for i in 0..cap {
        let j = r.random_range(i..len);
        idx.swap(i, j);
    }
    idx.truncate(cap);
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_caps_pool_size() {
        let idx = subsample_indices(2000, 1000, 9);
        assert_eq!(idx.len(), 1000);
        let mut seen = std::collections::HashSet::new();
        for i in &idx {
            assert!(*i < 2000);
            assert!(seen.insert(*i), "duplicate index {i}");
        }
    }

    #[test]
    fn subsample_is_identity_when_small() {
        assert_eq!(subsample_indices(5, 1000, 3), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn subsample_is_deterministic() {
        assert_eq!(subsample_indices(500, 100, 4), subsample_indices(500, 100, 4));
        assert_ne!(subsample_indices(500, 100, 4), subsample_indices(500, 100, 5));
    }
}
