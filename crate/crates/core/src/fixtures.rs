//! Synthetic descriptor datasets whose geometry follows a taxonomy.
//!
//! Every non-root node gets a random direction scaled by its depth; a leaf's
//! cluster centre is the sum of the offsets on its path. Siblings therefore
//! share all but the last offset and sit closer than non-siblings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::{Dataset, DatasetError, Sample};
use crate::scalar::Scalar;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub samples_per_leaf: usize,
    pub event_size: usize,
    pub dimension: usize,
    /// Length of the level-1 offsets.
    pub top_scale: f64,
    /// Each level's offsets are this fraction of the level above.
    pub scale_decay: f64,
    /// Per-feature standard deviation of sample noise.
    pub noise: f64,
    /// Per-feature standard deviation of the shift shared by an event.
    pub event_noise: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            samples_per_leaf: 200,
            event_size: 10,
            dimension: 16,
            top_scale: 1.0,
            scale_decay: 0.6,
            noise: 0.05,
            event_noise: 0.02,
            seed: 42,
        }
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Cluster centre of every node (the root sits at the origin).
pub fn node_centres(taxonomy: &Taxonomy, cfg: &FixtureConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centres = vec![vec![0.0; cfg.dimension]; taxonomy.len()];
    for (idx, node) in taxonomy.nodes().iter().enumerate() {
        let Some(parent) = node.parent else { continue };
        let scale = cfg.top_scale * cfg.scale_decay.powi(node.depth as i32 - 1);
        let dir = random_direction(rng, cfg.dimension);
        centres[idx] = centres[parent]
            .iter()
            .zip(&dir)
            .map(|(c, d)| c + scale * d)
            .collect();
    }
    centres
}

pub fn generate<T: Scalar>(taxonomy: &Taxonomy, cfg: &FixtureConfig) -> Result<Dataset<T>, DatasetError> {
    if cfg.dimension == 0 || cfg.event_size == 0 || cfg.samples_per_leaf == 0 {
        return Err(DatasetError::Ratios("fixture sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centres = node_centres(taxonomy, cfg, &mut rng);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| DatasetError::Ratios(e.to_string()))?;
    let event_noise = Normal::new(0.0, cfg.event_noise).map_err(|e| DatasetError::Ratios(e.to_string()))?;

    let mut samples = Vec::with_capacity(taxonomy.leaves().len() * cfg.samples_per_leaf);
    for &leaf in taxonomy.leaves() {
        let id = taxonomy.id(leaf);
        let mut shift = vec![0.0; cfg.dimension];
        for n in 0..cfg.samples_per_leaf {
            let event = n / cfg.event_size;
            if n % cfg.event_size == 0 {
                shift = (0..cfg.dimension).map(|_| event_noise.sample(&mut rng)).collect();
            }
            let features = centres[leaf]
                .iter()
                .zip(&shift)
                .map(|(c, s)| T::of(c + s + noise.sample(&mut rng)))
                .collect();
            samples.push(Sample {
                sample_id: format!("{id}-{n:05}"),
                event_id: format!("{id}-ev{event:04}"),
                label: id.to_string(),
                timestamp: None,
                features,
            });
        }
    }
    Dataset::with_dimension(samples, cfg.dimension)
}
