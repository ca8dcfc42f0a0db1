//! Hierarchical scene classification over a semantic taxonomy.
//!
//! A [`Taxonomy`](taxonomy::Taxonomy) arranges scene classes as leaves under
//! meta-classes. One probabilistic classifier per branching node estimates
//! the conditional probability of each child, and inference multiplies the
//! conditionals along every root-to-node path. The crate also covers the
//! evaluation workflow around the model: event-aware splits, oversampling,
//! precision/recall/F1, per-level accuracy and silhouette analysis.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

pub mod classifiers;
pub mod dataset;
pub mod fixtures;
pub mod hierarchy;
pub mod jsonfmt;
pub mod metrics;
pub mod scalar;
pub mod taxonomy;

pub use classifiers::{ProbabilisticClassifier, TrainConfig};
pub use hierarchy::{ClassifierChoice, HierarchyConfig, ModelError, PredictionMode};
pub use scalar::Scalar;
pub use taxonomy::{Taxonomy, TaxonomyError};

pub type Sample = dataset::Sample<f64>;
pub type SampleF32 = dataset::Sample<f32>;
pub type Dataset = dataset::Dataset<f64>;
pub type DatasetF32 = dataset::Dataset<f32>;
pub type Model = hierarchy::HierarchicalModel<f64>;
pub type ModelF32 = hierarchy::HierarchicalModel<f32>;
pub type Prediction = hierarchy::HierarchicalPrediction<f64>;
pub type PredictionF32 = hierarchy::HierarchicalPrediction<f32>;
pub type Softmax = classifiers::SoftmaxClassifier<f64>;
pub type SoftmaxF32 = classifiers::SoftmaxClassifier<f32>;
pub type Knn = classifiers::KnnClassifier<f64>;
pub type KnnF32 = classifiers::KnnClassifier<f32>;
pub type Report = metrics::ClassificationReport<f64>;
