//! CVT centroid construction: Lloyd's k-means over uniform samples of the
//! unit square.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::{Descriptor, QdError};

pub const DEFAULT_SAMPLES: usize = 25_000;
pub const MAX_LLOYD_ITERATIONS: usize = 100;
pub const LLOYD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    pub seed: u64,
    pub centroids: Vec<Descriptor>,
}

impl CentroidSet {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Exhaustive nearest-centroid lookup. `CvtArchive` uses a k-d tree
    /// built over the same points.
    pub fn nearest_linear(&self, d: &Descriptor) -> Option<usize> {
        super::kdtree::linear_nearest(&self.centroids, d)
    }
}

/// The sample stream k-means runs on: `n` points, each drawn as `(x, y)` from
/// a ChaCha8 generator seeded with `seed`.
pub fn uniform_samples(n: usize, seed: u64) -> Vec<Descriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            Descriptor::new(x, y)
        })
        .collect()
}

/// Runs Lloyd's algorithm on `n_samples` uniform points. Initial centroids are
/// the first `k` samples; empty clusters keep their previous position.
/// Iteration stops after `MAX_LLOYD_ITERATIONS` rounds or once no centroid
/// moves by more than `LLOYD_TOLERANCE`.
pub fn generate_centroids(k: usize, n_samples: usize, seed: u64) -> Result<CentroidSet, QdError> {
    if k == 0 {
        return Err(QdError::InvalidCentroidCount);
    }
    if n_samples < k {
        return Err(QdError::TooFewSamples { k, n_samples });
    }
    let samples = uniform_samples(n_samples, seed);
    let mut centroids: Vec<Descriptor> = samples[..k].to_vec();

    for _ in 0..MAX_LLOYD_ITERATIONS {
        let tree = KdTree::build(&centroids);
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for s in &samples {
            let c = tree.nearest(s).expect("k >= 1");
            sums[c][0] += s.x();
            sums[c][1] += s.y();
            counts[c] += 1;
        }
        let mut max_shift = 0.0f64;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if counts[c] == 0 {
                continue;
            }
            let n = counts[c] as f64;
            let next = Descriptor::new(sums[c][0] / n, sums[c][1] / n);
            max_shift = max_shift.max(next.dist2(centroid).sqrt());
            *centroid = next;
        }
        if max_shift < LLOYD_TOLERANCE {
            break;
        }
    }
    Ok(CentroidSet { seed, centroids })
}
