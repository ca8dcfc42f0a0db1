//! Per-node classifiers arranged along a taxonomy, combined top-down.
//!
//! The joint probability of a node is the root prior times the product of
//! the conditionals along its path from the root:
//!
//! ```text
//! P(node, x) = P(root) · Π P(child, x | parent, x)
//! ```
//!
//! Each conditional comes from the classifier trained at the parent over its
//! children. Nodes with a single child pass their probability through
//! unchanged. Nodes with few siblings therefore tend to collect more mass
//! than crowded ones; no correction is applied.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    ClassifierError, ConstantClassifier, KnnClassifier, NodeClassifier, ProbabilisticClassifier,
    SoftmaxClassifier, TrainConfig,
};
use crate::dataset::{oversample_indices, Sample};
use crate::jsonfmt::to_sorted_json;
use crate::scalar::{argmax, Scalar};
use crate::taxonomy::{NodeIndex, Taxonomy, TaxonomyError};

/// Version written to and required from model files.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("classifier at node {node:?} failed")]
    Classifier { node: String, source: ClassifierError },
    #[error("expected {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("invalid model structure: {0}")]
    Structure(String),
    #[error("empty training set")]
    EmptyTraining,
    #[error("sample {sample:?}: label {label:?} is not a taxonomy leaf")]
    Label { sample: String, label: String },
    #[error("root prior must lie in [0, 1], got {0}")]
    Prior(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupted model file: {0}")]
    Corrupted(String),
    #[error("taxonomy hash mismatch: model has {model}, supplied taxonomy has {supplied}")]
    TaxonomyMismatch { model: String, supplied: String },
    #[error("model stores {found} parameters, requested {expected}")]
    ScalarMismatch { found: String, expected: String },
}

/// How to read off a meta-class at a given level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Argmax of the joint probabilities of that level's members.
    Direct,
    /// Ancestor of the most probable leaf.
    FromLeaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierChoice {
    Softmax,
    Knn { k: usize },
}

/// Settings for training a whole model.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    pub classifier: ClassifierChoice,
    pub train: TrainConfig,
    /// Oversample each node's children to equal counts before training.
    pub balance: bool,
    /// Worker threads for per-node training; results do not depend on it.
    pub jobs: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            classifier: ClassifierChoice::Softmax,
            train: TrainConfig::default(),
            balance: true,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Structure<T> {
    /// One classifier per node with two or more children.
    PerNode(Vec<Option<NodeClassifier<T>>>),
    /// A single classifier over all leaves; inner nodes sum their leaves.
    Flat(NodeClassifier<T>),
}

/// Training record for one classifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeLog {
    pub node: String,
    pub classifier: String,
    pub samples: usize,
    pub balanced_samples: usize,
    pub epoch_losses: Vec<f64>,
    /// Accuracy on validation samples routed to this node, after each epoch.
    pub validation_accuracy: Vec<f64>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct TrainingLog {
    pub nodes: Vec<NodeLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel<T> {
    taxonomy: Taxonomy,
    structure: Structure<T>,
    root_prior: T,
    dimension: usize,
    warnings: Vec<String>,
    levels: Vec<Vec<NodeIndex>>,
}

/// Joint probabilities for every node given one input.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalPrediction<T> {
    /// Indexed like [`Taxonomy::nodes`].
    pub joint: Vec<T>,
    /// Most probable member of each level, carry-down included.
    pub per_level_argmax: Vec<NodeIndex>,
    pub leaf_argmax: NodeIndex,
}

impl<T: Scalar> HierarchicalPrediction<T> {
    pub fn joint_of(&self, taxonomy: &Taxonomy, node: &str) -> Result<T, TaxonomyError> {
        Ok(self.joint[taxonomy.index_of(node)?])
    }

    pub fn at_level(
        &self,
        taxonomy: &Taxonomy,
        level: usize,
        mode: PredictionMode,
    ) -> Result<NodeIndex, TaxonomyError> {
        if level > taxonomy.max_depth() {
            return Err(TaxonomyError::LevelOutOfRange {
                level,
                max: taxonomy.max_depth(),
            });
        }
        Ok(match mode {
            PredictionMode::Direct => self.per_level_argmax[level],
            PredictionMode::FromLeaf => taxonomy.representative_at(self.leaf_argmax, level),
        })
    }

    /// Leaves ordered by decreasing joint probability, taxonomy order on ties.
    pub fn top_leaves(&self, taxonomy: &Taxonomy, n: usize) -> Vec<(NodeIndex, T)> {
        let mut leaves: Vec<(NodeIndex, T)> = taxonomy.leaves().iter().map(|&l| (l, self.joint[l])).collect();
        leaves.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite joints").then(a.0.cmp(&b.0)));
        leaves.truncate(n);
        leaves
    }

    pub fn to_map(&self, taxonomy: &Taxonomy) -> BTreeMap<String, T> {
        self.joint
            .iter()
            .enumerate()
            .map(|(i, &p)| (taxonomy.id(i).to_string(), p))
            .collect()
    }
}

fn node_seed(seed: u64, node: NodeIndex) -> u64 {
    seed ^ (node as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Routes samples to a node: `(sample index, child position)` for every
/// sample whose leaf lies under `node`.
fn route(taxonomy: &Taxonomy, node: NodeIndex, leaves: &[NodeIndex]) -> Vec<(usize, usize)> {
    let children = &taxonomy.node(node).children;
    leaves
        .iter()
        .enumerate()
        .filter_map(|(i, &leaf)| {
            let child = taxonomy.child_towards(node, leaf)?;
            let pos = children.iter().position(|&c| c == child)?;
            Some((i, pos))
        })
        .collect()
}

fn resolve_leaves<T>(taxonomy: &Taxonomy, samples: &[Sample<T>]) -> Result<Vec<NodeIndex>, ModelError> {
    samples
        .iter()
        .map(|s| {
            taxonomy.leaf_index(&s.label).map_err(|_| ModelError::Label {
                sample: s.sample_id.clone(),
                label: s.label.clone(),
            })
        })
        .collect()
}

/// Everything one node's trainer needs.
struct NodeJob<'a, T> {
    node_id: String,
    class_ids: Vec<String>,
    features: Vec<&'a [T]>,
    targets: Vec<usize>,
    validation: Vec<(&'a [T], usize)>,
    seed: u64,
}

fn node_accuracy<T: Scalar, C: ProbabilisticClassifier<T>>(c: &C, data: &[(&[T], usize)]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let hits = data
        .iter()
        .filter(|(x, y)| c.predict_proba(x).ok().and_then(|p| argmax(&p)) == Some(*y))
        .count();
    hits as f64 / data.len() as f64
}

fn train_node<T: Scalar>(
    job: NodeJob<'_, T>,
    cfg: &HierarchyConfig,
) -> Result<(NodeClassifier<T>, NodeLog), ModelError> {
    let k = job.class_ids.len();
    let mut log = NodeLog {
        node: job.node_id.clone(),
        classifier: String::new(),
        samples: job.features.len(),
        balanced_samples: 0,
        epoch_losses: Vec::new(),
        validation_accuracy: Vec::new(),
        warning: None,
    };
    let mut present = vec![0usize; k];
    for &t in &job.targets {
        present[t] += 1;
    }
    let missing: Vec<&str> = job
        .class_ids
        .iter()
        .zip(&present)
        .filter(|(_, &n)| n == 0)
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() {
        let warning = format!(
            "node {:?}: no training samples for {:?}; using uniform conditionals",
            job.node_id, missing
        );
        log::warn!("{warning}");
        log.classifier = "constant".into();
        log.warning = Some(warning);
        return Ok((
            NodeClassifier::Constant(ConstantClassifier::uniform(job.class_ids)),
            log,
        ));
    }

    let order: Vec<usize> = if cfg.balance {
        oversample_indices(&job.targets, job.seed)
    } else {
        (0..job.targets.len()).collect()
    };
    let features: Vec<&[T]> = order.iter().map(|&i| job.features[i]).collect();
    let targets: Vec<usize> = order.iter().map(|&i| job.targets[i]).collect();
    log.balanced_samples = features.len();
    let wrap = |source| ModelError::Classifier {
        node: job.node_id.clone(),
        source,
    };

    let classifier = match cfg.classifier {
        ClassifierChoice::Softmax => {
            let train_cfg = TrainConfig {
                seed: job.seed,
                ..cfg.train
            };
            let mut losses = Vec::new();
            let mut accuracy = Vec::new();
            let c = SoftmaxClassifier::train_with(
                &features,
                &targets,
                job.class_ids,
                &train_cfg,
                |model, stats| {
                    losses.push(stats.loss.as_f64());
                    if !job.validation.is_empty() {
                        accuracy.push(node_accuracy(model, &job.validation));
                    }
                },
            )
            .map_err(wrap)?;
            log.epoch_losses = losses;
            log.validation_accuracy = accuracy;
            NodeClassifier::Softmax(c)
        }
        ClassifierChoice::Knn { k } => {
            let k = k.min(features.len());
            let c = KnnClassifier::train(&features, &targets, job.class_ids, k).map_err(wrap)?;
            if !job.validation.is_empty() {
                log.validation_accuracy.push(node_accuracy(&c, &job.validation));
            }
            NodeClassifier::Knn(c)
        }
    };
    log.classifier = classifier.kind().into();
    Ok((classifier, log))
}

fn run_jobs<T: Scalar>(
    jobs: Vec<NodeJob<'_, T>>,
    cfg: &HierarchyConfig,
) -> Result<Vec<(NodeClassifier<T>, NodeLog)>, ModelError> {
    if cfg.jobs <= 1 {
        return jobs.into_iter().map(|j| train_node(j, cfg)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| ModelError::Structure(format!("thread pool: {e}")))?;
    pool.install(|| jobs.into_par_iter().map(|j| train_node(j, cfg)).collect())
}

impl<T: Scalar> HierarchicalModel<T> {
    /// Assembles a per-node model from explicit classifiers keyed by node id.
    pub fn from_parts(
        taxonomy: Taxonomy,
        classifiers: Vec<(String, NodeClassifier<T>)>,
        root_prior: T,
        dimension: usize,
    ) -> Result<Self, ModelError> {
        let mut slots: Vec<Option<NodeClassifier<T>>> = vec![None; taxonomy.len()];
        for (id, c) in classifiers {
            let idx = taxonomy.index_of(&id)?;
            let node = taxonomy.node(idx);
            if node.children.len() < 2 {
                return Err(ModelError::Structure(format!(
                    "node {id:?} has {} children and takes no classifier",
                    node.children.len()
                )));
            }
            let expected: Vec<&str> = node.children.iter().map(|&ch| taxonomy.id(ch)).collect();
            if c.class_ids()
                .iter()
                .map(String::as_str)
                .ne(expected.iter().copied())
            {
                return Err(ModelError::Structure(format!(
                    "classifier at {id:?} predicts {:?}, children are {:?}",
                    c.class_ids(),
                    expected
                )));
            }
            if slots[idx].replace(c).is_some() {
                return Err(ModelError::Structure(format!("two classifiers for {id:?}")));
            }
        }
        for idx in taxonomy.branching_nodes() {
            if slots[idx].is_none() {
                return Err(ModelError::Structure(format!(
                    "node {:?} has no classifier",
                    taxonomy.id(idx)
                )));
            }
        }
        Self::assemble(
            taxonomy,
            Structure::PerNode(slots),
            root_prior,
            dimension,
            Vec::new(),
        )
    }

    /// Wraps a classifier over all leaves (in taxonomy leaf order).
    pub fn flat(
        taxonomy: Taxonomy,
        classifier: NodeClassifier<T>,
        root_prior: T,
        dimension: usize,
    ) -> Result<Self, ModelError> {
        let expected: Vec<&str> = taxonomy.leaves().iter().map(|&l| taxonomy.id(l)).collect();
        if classifier
            .class_ids()
            .iter()
            .map(String::as_str)
            .ne(expected.iter().copied())
        {
            return Err(ModelError::Structure(
                "flat classifier classes must be the taxonomy leaves in order".into(),
            ));
        }
        Self::assemble(
            taxonomy,
            Structure::Flat(classifier),
            root_prior,
            dimension,
            Vec::new(),
        )
    }

    fn assemble(
        taxonomy: Taxonomy,
        structure: Structure<T>,
        root_prior: T,
        dimension: usize,
        warnings: Vec<String>,
    ) -> Result<Self, ModelError> {
        if !(root_prior.is_finite() && root_prior >= T::zero() && root_prior <= T::one()) {
            return Err(ModelError::Prior(root_prior.as_f64()));
        }
        let classifiers: Vec<(usize, &NodeClassifier<T>)> = match &structure {
            Structure::PerNode(slots) => slots
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.as_ref().map(|c| (i, c)))
                .collect(),
            Structure::Flat(c) => vec![(taxonomy.root(), c)],
        };
        for (idx, c) in classifiers {
            if let Some(d) = c.dimension() {
                if d != dimension {
                    return Err(ModelError::Structure(format!(
                        "classifier at {:?} expects {d} features, model has {dimension}",
                        taxonomy.id(idx)
                    )));
                }
            }
        }
        let levels = (0..=taxonomy.max_depth())
            .map(|l| taxonomy.level_members(l))
            .collect::<Result<_, _>>()?;
        Ok(HierarchicalModel {
            taxonomy,
            structure,
            root_prior,
            dimension,
            warnings,
            levels,
        })
    }

    /// Trains one classifier per branching node.
    pub fn train(
        taxonomy: &Taxonomy,
        samples: &[Sample<T>],
        cfg: &HierarchyConfig,
    ) -> Result<(Self, TrainingLog), ModelError> {
        Self::train_validated(taxonomy, samples, &[], cfg)
    }

    /// Like [`train`](Self::train), logging per-epoch node accuracy on
    /// `validation`.
    pub fn train_validated(
        taxonomy: &Taxonomy,
        samples: &[Sample<T>],
        validation: &[Sample<T>],
        cfg: &HierarchyConfig,
    ) -> Result<(Self, TrainingLog), ModelError> {
        let dimension = Self::check_training(samples)?;
        let leaves = resolve_leaves(taxonomy, samples)?;
        let val_leaves = resolve_leaves(taxonomy, validation)?;

        let jobs: Vec<NodeJob<'_, T>> = taxonomy
            .branching_nodes()
            .map(|node| {
                let routed = route(taxonomy, node, &leaves);
                NodeJob {
                    node_id: taxonomy.id(node).to_string(),
                    class_ids: taxonomy
                        .node(node)
                        .children
                        .iter()
                        .map(|&c| taxonomy.id(c).to_string())
                        .collect(),
                    features: routed
                        .iter()
                        .map(|&(i, _)| samples[i].features.as_slice())
                        .collect(),
                    targets: routed.iter().map(|&(_, t)| t).collect(),
                    validation: route(taxonomy, node, &val_leaves)
                        .into_iter()
                        .map(|(i, t)| (validation[i].features.as_slice(), t))
                        .collect(),
                    seed: node_seed(cfg.train.seed, node),
                }
            })
            .collect();
        let nodes: Vec<NodeIndex> = taxonomy.branching_nodes().collect();

        let mut slots: Vec<Option<NodeClassifier<T>>> = vec![None; taxonomy.len()];
        let mut log = TrainingLog::default();
        let mut warnings = Vec::new();
        for (node, (classifier, node_log)) in nodes.into_iter().zip(run_jobs(jobs, cfg)?) {
            slots[node] = Some(classifier);
            warnings.extend(node_log.warning.clone());
            log.nodes.push(node_log);
        }
        let model = Self::assemble(
            taxonomy.clone(),
            Structure::PerNode(slots),
            T::one(),
            dimension,
            warnings,
        )?;
        Ok((model, log))
    }

    /// Trains a single classifier over all leaves.
    pub fn train_flat(
        taxonomy: &Taxonomy,
        samples: &[Sample<T>],
        validation: &[Sample<T>],
        cfg: &HierarchyConfig,
    ) -> Result<(Self, TrainingLog), ModelError> {
        let dimension = Self::check_training(samples)?;
        let leaf_pos = |l: NodeIndex| taxonomy.leaves().iter().position(|&x| x == l).expect("leaf");
        let leaves = resolve_leaves(taxonomy, samples)?;
        let val_leaves = resolve_leaves(taxonomy, validation)?;
        let job = NodeJob {
            node_id: taxonomy.id(taxonomy.root()).to_string(),
            class_ids: taxonomy
                .leaves()
                .iter()
                .map(|&l| taxonomy.id(l).to_string())
                .collect(),
            features: samples.iter().map(|s| s.features.as_slice()).collect(),
            targets: leaves.iter().map(|&l| leaf_pos(l)).collect(),
            validation: validation
                .iter()
                .zip(&val_leaves)
                .map(|(s, &l)| (s.features.as_slice(), leaf_pos(l)))
                .collect(),
            seed: node_seed(cfg.train.seed, taxonomy.root()),
        };
        let (classifier, node_log) = train_node(job, cfg)?;
        let warnings = node_log.warning.iter().cloned().collect();
        let model = Self::assemble(
            taxonomy.clone(),
            Structure::Flat(classifier),
            T::one(),
            dimension,
            warnings,
        )?;
        Ok((
            model,
            TrainingLog {
                nodes: vec![node_log],
            },
        ))
    }

    fn check_training(samples: &[Sample<T>]) -> Result<usize, ModelError> {
        let first = samples.first().ok_or(ModelError::EmptyTraining)?;
        let dimension = first.features.len();
        for s in samples {
            if s.features.len() != dimension {
                return Err(ModelError::Dimension {
                    expected: dimension,
                    found: s.features.len(),
                });
            }
        }
        Ok(dimension)
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn root_prior(&self) -> T {
        self.root_prior
    }

    pub fn set_root_prior(&mut self, prior: T) -> Result<(), ModelError> {
        if !(prior.is_finite() && prior >= T::zero() && prior <= T::one()) {
            return Err(ModelError::Prior(prior.as_f64()));
        }
        self.root_prior = prior;
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.structure, Structure::Flat(_))
    }

    /// Classifier deciding among the children of `node`, if it has one.
    pub fn classifier(&self, node: NodeIndex) -> Option<&NodeClassifier<T>> {
        match &self.structure {
            Structure::PerNode(slots) => slots.get(node).and_then(Option::as_ref),
            Structure::Flat(c) => (node == self.taxonomy.root()).then_some(c),
        }
    }

    pub fn infer(&self, x: &[T]) -> Result<HierarchicalPrediction<T>, ModelError> {
        self.infer_with_prior(x, self.root_prior)
    }

    /// Inference with a per-sample root probability, e.g. from a separate
    /// food/non-food detector.
    pub fn infer_with_prior(&self, x: &[T], prior: T) -> Result<HierarchicalPrediction<T>, ModelError> {
        if x.len() != self.dimension {
            return Err(ModelError::Dimension {
                expected: self.dimension,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        if !(prior.is_finite() && prior >= T::zero()) {
            return Err(ModelError::Prior(prior.as_f64()));
        }
        let tax = &self.taxonomy;
        let mut joint = vec![T::zero(); tax.len()];
        joint[tax.root()] = prior;
        match &self.structure {
            Structure::PerNode(slots) => {
                // parents precede children in node order
                for (idx, node) in tax.nodes().iter().enumerate() {
                    match node.children.as_slice() {
                        [] => {}
                        [only] => joint[*only] = joint[idx],
                        children => {
                            let c = slots[idx].as_ref().expect("branching node has a classifier");
                            let probs = c.predict_proba(x).map_err(|source| ModelError::Classifier {
                                node: node.id.clone(),
                                source,
                            })?;
                            for (&child, &p) in children.iter().zip(&probs) {
                                joint[child] = joint[idx] * p;
                            }
                        }
                    }
                }
            }
            Structure::Flat(c) => {
                let probs = c.predict_proba(x).map_err(|source| ModelError::Classifier {
                    node: tax.id(tax.root()).to_string(),
                    source,
                })?;
                if tax.len() > 1 {
                    for (&leaf, &p) in tax.leaves().iter().zip(&probs) {
                        joint[leaf] = prior * p;
                    }
                    for idx in (0..tax.len()).rev() {
                        let children = &tax.node(idx).children;
                        if !children.is_empty() {
                            joint[idx] = children.iter().map(|&ch| joint[ch]).sum();
                        }
                    }
                }
            }
        }
        let per_level_argmax = self
            .levels
            .iter()
            .map(|members| {
                let values: Vec<T> = members.iter().map(|&m| joint[m]).collect();
                members[argmax(&values).expect("levels are non-empty")]
            })
            .collect();
        let leaf_values: Vec<T> = tax.leaves().iter().map(|&l| joint[l]).collect();
        let leaf_argmax = tax.leaves()[argmax(&leaf_values).expect("a tree has a leaf")];
        Ok(HierarchicalPrediction {
            joint,
            per_level_argmax,
            leaf_argmax,
        })
    }

    pub fn predict_at_level(
        &self,
        x: &[T],
        level: usize,
        mode: PredictionMode,
    ) -> Result<NodeIndex, ModelError> {
        if level > self.taxonomy.max_depth() {
            return Err(TaxonomyError::LevelOutOfRange {
                level,
                max: self.taxonomy.max_depth(),
            }
            .into());
        }
        Ok(self.infer(x)?.at_level(&self.taxonomy, level, mode)?)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let file = ModelFile::from_model(self);
        to_sorted_json(&file).map_err(|e| ModelError::Corrupted(e.to_string()))
    }

    /// Parses a model file; `taxonomy`, when given, must match the one the
    /// model was trained with.
    pub fn from_json(text: &str, taxonomy: Option<&Taxonomy>) -> Result<Self, ModelError> {
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::Corrupted(e.to_string()))?;
        let version = probe
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| ModelError::Corrupted("missing format_version".into()))?;
        if version != u64::from(MODEL_FORMAT_VERSION) {
            return Err(ModelError::Version {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_value(probe).map_err(|e| ModelError::Corrupted(e.to_string()))?;
        file.into_model(taxonomy)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, taxonomy: Option<&Taxonomy>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?, taxonomy)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    kind: String,
    scalar: String,
    taxonomy_hash: String,
    taxonomy: String,
    root_prior: f64,
    dimension: usize,
    classifiers: BTreeMap<String, ClassifierBlock>,
    warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum ClassifierBlock {
    Softmax {
        class_ids: Vec<String>,
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    Knn {
        class_ids: Vec<String>,
        k: usize,
        samples: Vec<KnnRow>,
    },
    Constant {
        class_ids: Vec<String>,
        probabilities: Vec<f64>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnnRow {
    label: usize,
    features: Vec<f64>,
}

fn to_f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64s<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

impl ClassifierBlock {
    fn from_classifier<T: Scalar>(c: &NodeClassifier<T>, dimension: usize) -> ClassifierBlock {
        let class_ids = c.class_ids().to_vec();
        match c {
            NodeClassifier::Softmax(s) => ClassifierBlock::Softmax {
                class_ids,
                weights: if dimension == 0 {
                    vec![Vec::new(); s.bias().len()]
                } else {
                    s.weights().chunks(dimension).map(to_f64s).collect()
                },
                bias: to_f64s(s.bias()),
            },
            NodeClassifier::Knn(k) => ClassifierBlock::Knn {
                class_ids,
                k: k.k(),
                samples: k
                    .stored()
                    .map(|(f, label)| KnnRow {
                        label,
                        features: to_f64s(f),
                    })
                    .collect(),
            },
            NodeClassifier::Constant(k) => ClassifierBlock::Constant {
                class_ids,
                probabilities: to_f64s(k.probabilities()),
            },
        }
    }

    fn into_classifier<T: Scalar>(self, dimension: usize) -> Result<NodeClassifier<T>, ClassifierError> {
        Ok(match self {
            ClassifierBlock::Softmax {
                class_ids,
                weights,
                bias,
            } => {
                if weights.iter().any(|row| row.len() != dimension) {
                    return Err(ClassifierError::Malformed("weight row length".into()));
                }
                let flat: Vec<f64> = weights.concat();
                NodeClassifier::Softmax(SoftmaxClassifier::from_parts(
                    class_ids,
                    dimension,
                    from_f64s(&flat),
                    from_f64s(&bias),
                )?)
            }
            ClassifierBlock::Knn {
                class_ids,
                k,
                samples,
            } => {
                let (features, labels) = samples
                    .into_iter()
                    .map(|r| (from_f64s(&r.features), r.label))
                    .unzip();
                NodeClassifier::Knn(KnnClassifier::from_parts(
                    class_ids, dimension, k, features, labels,
                )?)
            }
            ClassifierBlock::Constant {
                class_ids,
                probabilities,
            } => NodeClassifier::Constant(ConstantClassifier::new(class_ids, from_f64s(&probabilities))?),
        })
    }
}

impl ModelFile {
    fn from_model<T: Scalar>(m: &HierarchicalModel<T>) -> ModelFile {
        let tax = &m.taxonomy;
        let (kind, classifiers) = match &m.structure {
            Structure::PerNode(slots) => (
                "hierarchical",
                slots
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| {
                        c.as_ref().map(|c| {
                            (
                                tax.id(i).to_string(),
                                ClassifierBlock::from_classifier(c, m.dimension),
                            )
                        })
                    })
                    .collect(),
            ),
            Structure::Flat(c) => (
                "flat",
                BTreeMap::from([(
                    tax.id(tax.root()).to_string(),
                    ClassifierBlock::from_classifier(c, m.dimension),
                )]),
            ),
        };
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: kind.into(),
            scalar: T::TAG.into(),
            taxonomy_hash: tax.content_hash(),
            taxonomy: tax.to_text(),
            root_prior: m.root_prior.as_f64(),
            dimension: m.dimension,
            classifiers,
            warnings: m.warnings.clone(),
        }
    }

    fn into_model<T: Scalar>(self, supplied: Option<&Taxonomy>) -> Result<HierarchicalModel<T>, ModelError> {
        if self.scalar != T::TAG {
            return Err(ModelError::ScalarMismatch {
                found: self.scalar,
                expected: T::TAG.into(),
            });
        }
        let taxonomy = Taxonomy::parse(&self.taxonomy)
            .map_err(|e| ModelError::Corrupted(format!("embedded taxonomy: {e}")))?;
        if taxonomy.content_hash() != self.taxonomy_hash {
            return Err(ModelError::Corrupted(
                "embedded taxonomy does not match its hash".into(),
            ));
        }
        if let Some(t) = supplied {
            let supplied_hash = t.content_hash();
            if supplied_hash != self.taxonomy_hash {
                return Err(ModelError::TaxonomyMismatch {
                    model: self.taxonomy_hash,
                    supplied: supplied_hash,
                });
            }
        }
        let dimension = self.dimension;
        let mut blocks = Vec::new();
        for (node, block) in self.classifiers {
            let c = block
                .into_classifier(dimension)
                .map_err(|source| ModelError::Classifier {
                    node: node.clone(),
                    source,
                })?;
            blocks.push((node, c));
        }
        let prior = T::of(self.root_prior);
        let mut model = match self.kind.as_str() {
            "hierarchical" => HierarchicalModel::from_parts(taxonomy, blocks, prior, dimension)?,
            "flat" => {
                let mut blocks = blocks.into_iter();
                let (node, c) = blocks
                    .next()
                    .ok_or_else(|| ModelError::Corrupted("flat model without classifier".into()))?;
                if blocks.next().is_some() || node != taxonomy.id(taxonomy.root()) {
                    return Err(ModelError::Corrupted(
                        "flat model must hold one root classifier".into(),
                    ));
                }
                HierarchicalModel::flat(taxonomy, c, prior, dimension)?
            }
            other => return Err(ModelError::Corrupted(format!("unknown model kind {other:?}"))),
        };
        model.warnings = self.warnings;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(ids: &[&str], probs: &[f64]) -> NodeClassifier<f64> {
        NodeClassifier::Constant(
            ConstantClassifier::new(ids.iter().map(|s| s.to_string()).collect(), probs.to_vec()).unwrap(),
        )
    }

    fn uniform_default() -> HierarchicalModel<f64> {
        let t = Taxonomy::food_scenes();
        let classifiers = t
            .branching_nodes()
            .map(|n| {
                let ids = t.node(n).children.iter().map(|&c| t.id(c).to_string()).collect();
                (
                    t.id(n).to_string(),
                    NodeClassifier::Constant(ConstantClassifier::uniform(ids)),
                )
            })
            .collect();
        HierarchicalModel::from_parts(t, classifiers, 1.0, 3).unwrap()
    }

    #[test]
    fn dining_room_chain() {
        let t = Taxonomy::parse(
            "food-related\n  eating\n    eating indoor\n      dining room\n      bar\n    eating outdoor\n      picnic area\n  preparing\n    kitchen\n",
        )
        .unwrap();
        let m = HierarchicalModel::from_parts(
            t.clone(),
            vec![
                (
                    "food-related".into(),
                    constant(&["eating", "preparing"], &[0.9, 0.1]),
                ),
                (
                    "eating".into(),
                    constant(&["eating-indoor", "eating-outdoor"], &[0.8, 0.2]),
                ),
                (
                    "eating-indoor".into(),
                    constant(&["dining-room", "bar"], &[0.5, 0.5]),
                ),
            ],
            1.0,
            2,
        )
        .unwrap();
        let p = m.infer(&[0.0, 0.0]).unwrap();
        assert!((p.joint_of(&t, "dining room").unwrap() - 0.36).abs() < 1e-12);
        assert_eq!(
            p.joint_of(&t, "kitchen").unwrap(),
            p.joint_of(&t, "preparing").unwrap()
        );
    }

    #[test]
    fn uniform_chain_on_default_tree() {
        let m = uniform_default();
        let t = m.taxonomy().clone();
        let p = m.infer(&[0.1, 0.2, 0.3]).unwrap();
        let expected = 1.0 / 3.0 * 0.5 / 7.0;
        assert!((p.joint_of(&t, "restaurant").unwrap() - expected).abs() < 1e-15);
        assert_eq!(p.joint_of(&t, "kitchen").unwrap(), 1.0 / 3.0);
        let leaves: f64 = t.leaves().iter().map(|&l| p.joint[l]).sum();
        assert!((leaves - 1.0).abs() < 1e-12);
        // kitchen and the preparing branch keep a full third of the mass
        assert_eq!(t.id(p.leaf_argmax), "kitchen");
        assert_eq!(t.id(p.per_level_argmax[1]), "eating");
    }

    #[test]
    fn direct_and_from_leaf_disagree() {
        let t = Taxonomy::parse(
            "root\n  eating\n    indoor\n      a\n      b\n      c\n      d\n      e\n      f\n      g\n    outdoor\n      picnic area\n",
        )
        .unwrap();
        let m = HierarchicalModel::from_parts(
            t.clone(),
            vec![
                ("eating".into(), constant(&["indoor", "outdoor"], &[0.6, 0.4])),
                (
                    "indoor".into(),
                    constant(
                        &["a", "b", "c", "d", "e", "f", "g"],
                        &[0.14, 0.14, 0.14, 0.14, 0.14, 0.15, 0.15],
                    ),
                ),
            ],
            1.0,
            1,
        )
        .unwrap();
        let x = [0.0];
        let direct = m.predict_at_level(&x, 2, PredictionMode::Direct).unwrap();
        let from_leaf = m.predict_at_level(&x, 2, PredictionMode::FromLeaf).unwrap();
        assert_eq!(t.id(direct), "indoor");
        assert_eq!(t.id(from_leaf), "outdoor");
        assert_eq!(m.predict_at_level(&x, 0, PredictionMode::Direct).unwrap(), 0);
        assert_eq!(m.predict_at_level(&x, 0, PredictionMode::FromLeaf).unwrap(), 0);
        assert!(m.predict_at_level(&x, 4, PredictionMode::Direct).is_err());
    }

    #[test]
    fn single_path_modes_agree() {
        let t = Taxonomy::parse("a\n  b\n    c\n      d\n").unwrap();
        let m = HierarchicalModel::<f64>::from_parts(t, Vec::new(), 0.7, 2).unwrap();
        let p = m.infer(&[1.0, 2.0]).unwrap();
        assert!(p.joint.iter().all(|&v| v == 0.7));
        for level in 0..=3 {
            assert_eq!(
                p.at_level(m.taxonomy(), level, PredictionMode::Direct).unwrap(),
                p.at_level(m.taxonomy(), level, PredictionMode::FromLeaf).unwrap()
            );
        }
    }

    #[test]
    fn structure_is_validated() {
        let t = Taxonomy::parse("r\n  a\n  b\n").unwrap();
        assert!(HierarchicalModel::<f64>::from_parts(t.clone(), Vec::new(), 1.0, 1).is_err());
        let wrong = vec![("r".to_string(), constant(&["b", "a"], &[0.5, 0.5]))];
        assert!(HierarchicalModel::from_parts(t.clone(), wrong, 1.0, 1).is_err());
        let ok = vec![("r".to_string(), constant(&["a", "b"], &[0.5, 0.5]))];
        assert!(HierarchicalModel::from_parts(t.clone(), ok, 1.5, 1).is_err());
        let leafy = vec![("a".to_string(), constant(&["a", "b"], &[0.5, 0.5]))];
        assert!(HierarchicalModel::from_parts(t, leafy, 1.0, 1).is_err());
    }

    #[test]
    fn inference_rejects_bad_input() {
        let m = uniform_default();
        assert!(matches!(
            m.infer(&[0.0]),
            Err(ModelError::Dimension {
                expected: 3,
                found: 1
            })
        ));
        assert!(matches!(
            m.infer(&[0.0, f64::INFINITY, 0.0]),
            Err(ModelError::NonFinite)
        ));
    }

    fn two_leaf_samples() -> Vec<Sample<f64>> {
        (0..20)
            .map(|i| Sample {
                sample_id: format!("s{i}"),
                event_id: format!("e{}", i / 5),
                label: if i % 2 == 0 { "a".into() } else { "b".into() },
                timestamp: None,
                features: if i % 2 == 0 {
                    vec![0.0, 1.0]
                } else {
                    vec![1.0, 0.0]
                },
            })
            .collect()
    }

    #[test]
    fn two_leaf_tree_trains_one_classifier() {
        let t = Taxonomy::parse("r\n  a\n  b\n").unwrap();
        let (m, log) =
            HierarchicalModel::train(&t, &two_leaf_samples(), &HierarchyConfig::default()).unwrap();
        assert_eq!(log.nodes.len(), 1);
        assert!(m.classifier(0).is_some());
        let p = m.infer(&[0.0, 1.0]).unwrap();
        assert_eq!(t.id(p.leaf_argmax), "a");
    }

    #[test]
    fn missing_child_falls_back_to_uniform() {
        let t = Taxonomy::parse("r\n  a\n  b\n  c\n").unwrap();
        let (m, log) =
            HierarchicalModel::train(&t, &two_leaf_samples(), &HierarchyConfig::default()).unwrap();
        assert_eq!(m.classifier(0).unwrap().kind(), "constant");
        assert!(log.nodes[0].warning.as_deref().unwrap().contains("\"c\""));
        assert_eq!(m.warnings().len(), 1);
        let p = m.infer(&[0.0, 1.0]).unwrap();
        assert!(p.joint[1..].iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn training_errors() {
        let t = Taxonomy::parse("r\n  a\n  b\n").unwrap();
        let cfg = HierarchyConfig::default();
        assert!(matches!(
            HierarchicalModel::<f64>::train(&t, &[], &cfg),
            Err(ModelError::EmptyTraining)
        ));
        let mut bad = two_leaf_samples();
        bad[3].label = "zebra".into();
        assert!(matches!(
            HierarchicalModel::train(&t, &bad, &cfg),
            Err(ModelError::Label { .. })
        ));
    }

    #[test]
    fn json_round_trip_and_checks() {
        let t = Taxonomy::parse("r\n  a\n  b\n").unwrap();
        let (m, _) = HierarchicalModel::train(&t, &two_leaf_samples(), &HierarchyConfig::default()).unwrap();
        let json = m.to_json().unwrap();
        let back = HierarchicalModel::<f64>::from_json(&json, Some(&t)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), json);

        let bumped = json.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            HierarchicalModel::<f64>::from_json(&bumped, None),
            Err(ModelError::Version { found: 2, .. })
        ));
        let other = Taxonomy::parse("r\n  a\n  b\n  c\n").unwrap();
        assert!(matches!(
            HierarchicalModel::<f64>::from_json(&json, Some(&other)),
            Err(ModelError::TaxonomyMismatch { .. })
        ));
        assert!(matches!(
            HierarchicalModel::<f64>::from_json(&json[..json.len() / 2], None),
            Err(ModelError::Corrupted(_))
        ));
        assert!(matches!(
            HierarchicalModel::<f32>::from_json(&json, None),
            Err(ModelError::ScalarMismatch { .. })
        ));
    }
}
