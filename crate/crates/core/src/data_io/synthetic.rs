//! Seeded synthetic datasets for tests and desk-scale experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, SparseRow};
use crate::error::{Error, Result};

/// Attribute cardinalities of the one-hot layout used by [`mushrooms_like`].
/// 22 categorical attributes expanding to 112 binary features.
pub const MUSHROOMS_CARDINALITIES: [usize; 22] = [6, 4, 8, 2, 9, 2, 2, 2, 10, 2, 4, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 7];

pub const MUSHROOMS_ROWS: usize = 8124;
pub const MUSHROOMS_DIM: usize = 112;

// Margin standard deviation is roughly sqrt(22) times this.
const PLANTED_WEIGHT_SCALE: f64 = 0.65;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// A stand-in for the LIBSVM `mushrooms` file with the same shape: every row
/// one-hot encodes 22 categorical attributes (112 binary features, 22
/// non-zeros per row) and labels follow a planted logistic model.
pub fn mushrooms_like(m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::invalid("synthetic dataset needs at least one row"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Per-attribute category frequencies and planted per-category weights.
    let attrs: Vec<(Vec<f64>, Vec<f64>)> = MUSHROOMS_CARDINALITIES
        .iter()
        .map(|&k| {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let cdf = raw
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w / total;
                    Some(*acc)
                })
                .collect();
            let weights = (0..k)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    PLANTED_WEIGHT_SCALE * z
                })
                .collect();
            (cdf, weights)
        })
        .collect();

    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let mut indices = Vec::with_capacity(MUSHROOMS_CARDINALITIES.len());
        let mut margin = 0.0;
        let mut offset = 0u32;
        for (k, (cdf, weights)) in MUSHROOMS_CARDINALITIES.iter().zip(&attrs) {
            let u: f64 = rng.random();
            let cat = cdf.iter().position(|&c| u < c).unwrap_or(k - 1);
            indices.push(offset + cat as u32);
            margin += weights[cat];
            offset += *k as u32;
        }
        let y = if rng.random::<f64>() < sigmoid(margin) {
            1.0
        } else {
            -1.0
        };
        let values = vec![1.0; indices.len()];
        rows.push(SparseRow::new(indices, values)?);
        labels.push(y);
    }
    Dataset::new(rows, labels, MUSHROOMS_DIM, format!("mushrooms-like@{seed}"))
}

/// Dense standard-normal features with labels from a planted logistic model.
pub fn gaussian(m: usize, d: usize, seed: u64) -> Result<Dataset> {
    if m == 0 || d == 0 {
        return Err(Error::invalid("synthetic dataset needs m >= 1 and d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let a: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t: f64 = a.iter().zip(&truth).map(|(u, v)| u * v).sum();
        let y = if rng.random::<f64>() < sigmoid(t) { 1.0 } else { -1.0 };
        rows.push(SparseRow::from_dense(&a));
        labels.push(y);
    }
    Dataset::new(rows, labels, d, format!("gaussian-{m}x{d}@{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mushrooms_like_shape() {
        assert_eq!(MUSHROOMS_CARDINALITIES.iter().sum::<usize>(), MUSHROOMS_DIM);
        let ds = mushrooms_like(500, 3).unwrap();
        assert_eq!(ds.len(), 500);
        assert_eq!(ds.dim(), MUSHROOMS_DIM);
        assert!(ds.rows().iter().all(|r| r.nnz() == 22));
        let pos = ds.labels().iter().filter(|&&y| y > 0.0).count();
        assert!(pos > 50 && pos < 450, "labels should be mixed, got {pos} positives");
        assert_eq!(ds, mushrooms_like(500, 3).unwrap());
    }

    #[test]
    fn gaussian_shape() {
        let ds = gaussian(20, 5, 1).unwrap();
        assert_eq!((ds.len(), ds.dim()), (20, 5));
    }
}
