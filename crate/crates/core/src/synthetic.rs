//! Seeded synthetic tables with groups of strongly correlated features.
//!
//! Each group of features shares one latent factor; every feature is the
//! factor plus independent noise. The class is a quantile bucket of a noisy
//! sum of the first few factors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub dims: usize,
    /// Features per latent factor.
    pub group_size: usize,
    pub classes: usize,
    /// Standard deviation of the per-feature noise.
    pub noise: f64,
    /// Probability that a row's class is replaced by a random one.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            rows: 1000,
            dims: 10,
            group_size: 2,
            classes: 2,
            noise: 0.3,
            label_noise: 0.05,
            seed: 0,
        }
    }
}

/// Generates a table with features `f0..` and class `class` (labels `c0..`).
/// Features are rounded to two decimals.
pub fn correlated_table(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.rows == 0 || spec.dims == 0 || spec.group_size == 0 || spec.classes == 0 {
        return Err(Error::InvalidParameter(
            "rows, dims, group size and classes must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups = spec.dims.div_ceil(spec.group_size);
    let informative = groups.min(3);

    let mut columns = vec![Vec::with_capacity(spec.rows); spec.dims];
    let mut scores = Vec::with_capacity(spec.rows);
    for _ in 0..spec.rows {
        let latent: Vec<f64> = (0..groups).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (d, col) in columns.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = latent[d / spec.group_size] + spec.noise * e;
            col.push((v * 100.0).round() / 100.0);
        }
        let e: f64 = StandardNormal.sample(&mut rng);
        scores.push(latent[..informative].iter().sum::<f64>() + 0.5 * e);
    }

    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..spec.classes)
        .map(|q| sorted[q * spec.rows / spec.classes])
        .collect();
    let classes: Vec<u32> = scores
        .iter()
        .map(|s| {
            if rng.random_bool(spec.label_noise.clamp(0.0, 1.0)) {
                rng.random_range(0..spec.classes as u32)
            } else {
                cuts.iter().filter(|&&c| *s >= c).count() as u32
            }
        })
        .collect();
    Dataset::from_numeric(columns, &classes)
}
