//! Seeded randomness and with-replacement minibatch index sampling.
//!
//! Every stochastic draw in the crate flows through [`RandomSource`], a thin
//! wrapper over a ChaCha8 stream cipher RNG. ChaCha output is specified by the
//! cipher itself, so a 64-bit seed reproduces the identical draw sequence on
//! every platform — which is what makes whole runs byte-for-byte replayable.
//!
//! Minibatches are sampled uniformly *with replacement*, matching the
//! independence assumptions behind the estimator variance bounds: a batch may
//! contain duplicate indices and the minibatch mean counts them with
//! multiplicity.

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StormError};

/// Seeded RNG handle; cloneable so tests can replay a draw sequence.
#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha8Rng,
    seed: u64,
}

impl RandomSource {
    /// Creates a source from a 64-bit seed.
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    /// The seed this source was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent substream (same seed, distinct ChaCha stream).
    /// Used to decouple problem generation from run randomness.
    pub fn substream(&self, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        Self {
            rng,
            seed: self.seed,
        }
    }

    /// One uniform index in `0..pool`.
    pub fn draw_index(&mut self, pool: usize) -> usize {
        debug_assert!(pool > 0);
        // Uniform::from is unbiased (rejection sampling), unlike `% pool`.
        Uniform::from(0..pool).sample(&mut self.rng)
    }

    /// Uniform f64 in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut self.rng)
    }

    /// Raw 64-bit output (used by tests that replay the stream).
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Samples `size` indices uniformly with replacement from `0..pool`.
    pub fn sample_batch(&mut self, pool: usize, size: usize) -> Result<IndexBatch> {
        if pool == 0 {
            return Err(StormError::InvalidArgument(
                "cannot sample from an empty component pool".into(),
            ));
        }
        if size == 0 {
            return Err(StormError::InvalidArgument(
                "batch size must be at least 1".into(),
            ));
        }
        let dist = Uniform::from(0..pool);
        let indices = (0..size).map(|_| dist.sample(&mut self.rng)).collect();
        Ok(IndexBatch { indices, pool })
    }
}

/// A multiset of component indices addressing a pool of finite-sum components.
///
/// Indices are 0-based in code. Serialized form is 1-based (`indices` field
/// holds `j + 1`), matching the convention used by every on-disk artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexBatch {
    indices: Vec<usize>,
    pool: usize,
}

impl IndexBatch {
    /// Builds a batch from 0-based indices, validating range and non-emptiness.
    pub fn new(indices: Vec<usize>, pool: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(StormError::InvalidArgument(
                "index batch must not be empty".into(),
            ));
        }
        for &j in &indices {
            if j >= pool {
                return Err(StormError::IndexOutOfRange { index: j, pool });
            }
        }
        Ok(Self { indices, pool })
    }

    /// The full-enumeration batch `[0, 1, ..., pool-1]`; the minibatch mean
    /// over it equals the exact finite-sum mean.
    pub fn enumeration(pool: usize) -> Result<Self> {
        if pool == 0 {
            return Err(StormError::InvalidArgument(
                "cannot enumerate an empty component pool".into(),
            ));
        }
        Ok(Self {
            indices: (0..pool).collect(),
            pool,
        })
    }

    /// Number of entries, counting duplicates.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    /// True when the batch holds no indices (unreachable via constructors).
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Size of the pool this batch addresses.
    pub fn pool(&self) -> usize {
        self.pool
    }

    /// Iterates the 0-based indices in draw order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    /// 0-based indices in draw order.
    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }
}

/// Serialized image of an [`IndexBatch`]: 1-based indices plus the pool size.
#[derive(Serialize, Deserialize)]
struct IndexBatchWire {
    pool: usize,
    indices: Vec<usize>,
}

impl Serialize for IndexBatch {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        IndexBatchWire {
            pool: self.pool,
            indices: self.indices.iter().map(|&j| j + 1).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IndexBatch {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = IndexBatchWire::deserialize(deserializer)?;
        for &j in &wire.indices {
            if j == 0 || j > wire.pool {
                return Err(serde::de::Error::custom(format!(
                    "serialized index {} outside 1..={}",
                    j, wire.pool
                )));
            }
        }
        IndexBatch::new(
            wire.indices.into_iter().map(|j| j - 1).collect(),
            wire.pool,
        )
        .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_reproduces_batch() {
        let mut a = RandomSource::from_seed(7);
        let mut b = RandomSource::from_seed(7);
        let ba = a.sample_batch(100, 32).unwrap();
        let bb = b.sample_batch(100, 32).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn different_streams_diverge() {
        let base = RandomSource::from_seed(7);
        let mut s0 = base.substream(0);
        let mut s1 = base.substream(1);
        assert_ne!(s0.next_u64(), s1.next_u64());
    }

    #[test]
    fn batch_indices_in_range() {
        let mut rng = RandomSource::from_seed(3);
        let batch = rng.sample_batch(5, 1000).unwrap();
        assert_eq!(batch.len(), 1000);
        assert!(batch.iter().all(|j| j < 5));
        // All five indices should appear in a batch this large.
        for j in 0..5 {
            assert!(batch.iter().any(|i| i == j), "index {j} never drawn");
        }
    }

    #[test]
    fn zero_size_and_empty_pool_rejected() {
        let mut rng = RandomSource::from_seed(1);
        assert!(rng.sample_batch(10, 0).is_err());
        assert!(rng.sample_batch(0, 4).is_err());
        assert!(IndexBatch::new(vec![], 3).is_err());
        assert!(IndexBatch::enumeration(0).is_err());
    }

    #[test]
    fn out_of_range_index_rejected() {
        let err = IndexBatch::new(vec![0, 3], 3).unwrap_err();
        assert!(matches!(
            err,
            StormError::IndexOutOfRange { index: 3, pool: 3 }
        ));
    }

    #[test]
    fn serialization_is_one_based_and_round_trips() {
        let batch = IndexBatch::new(vec![0, 2, 2], 4).unwrap();
        let json = serde_json::to_string(&batch).unwrap();
        assert_eq!(json, r#"{"pool":4,"indices":[1,3,3]}"#);
        let back: IndexBatch = serde_json::from_str(&json).unwrap();
        assert_eq!(back, batch);
    }

    #[test]
    fn deserialization_rejects_zero_index() {
        let err = serde_json::from_str::<IndexBatch>(r#"{"pool":4,"indices":[0,1]}"#);
        assert!(err.is_err());
    }

    #[test]
    fn enumeration_covers_pool_once() {
        let batch = IndexBatch::enumeration(4).unwrap();
        assert_eq!(batch.as_slice(), &[0, 1, 2, 3]);
    }
}
