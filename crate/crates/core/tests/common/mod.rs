#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenetree::classifiers::{NodeClassifier, SoftmaxClassifier};
use scenetree::hierarchy::HierarchicalModel;
use scenetree::Taxonomy;

/// Random tree with at most `max_nodes` nodes and depth at most `max_depth`.
pub fn random_taxonomy(rng: &mut ChaCha8Rng, max_nodes: usize, max_depth: usize) -> Taxonomy {
    let n = rng.random_range(1..=max_nodes);
    let mut depth = vec![0usize];
    let mut entries: Vec<(String, Option<String>)> = vec![("n0".into(), None)];
    for i in 1..n {
        let candidates: Vec<usize> = (0..i).filter(|&p| depth[p] < max_depth).collect();
        let p = candidates[rng.random_range(0..candidates.len())];
        depth.push(depth[p] + 1);
        entries.push((format!("n{i}"), Some(format!("n{p}"))));
    }
    Taxonomy::from_parent_list(&entries).unwrap()
}

pub fn random_model(
    rng: &mut ChaCha8Rng,
    taxonomy: Taxonomy,
    dim: usize,
    prior: f64,
) -> HierarchicalModel<f64> {
    let classifiers = taxonomy
        .branching_nodes()
        .map(|node| {
            let ids: Vec<String> = taxonomy
                .node(node)
                .children
                .iter()
                .map(|&c| taxonomy.id(c).to_string())
                .collect();
            let k = ids.len();
            let w = (0..k * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            (
                taxonomy.id(node).to_string(),
                NodeClassifier::Softmax(SoftmaxClassifier::from_parts(ids, dim, w, b).unwrap()),
            )
        })
        .collect();
    HierarchicalModel::from_parts(taxonomy, classifiers, prior, dim).unwrap()
}

pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
