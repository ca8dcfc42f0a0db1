//! Probabilistic classifiers used at taxonomy nodes and as flat baselines.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("no training samples")]
    Empty,
    #[error("expected {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite input value")]
    NonFinite,
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("label index {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("k = {k} exceeds the {stored} stored samples")]
    KTooLarge { k: usize, stored: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Malformed(String),
}

/// Hyper-parameters for mini-batch softmax training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.1,
            l2_penalty: 1e-4,
            batch_size: 8,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.epochs < 1 {
            return Err(ClassifierError::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::Config("learning_rate must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(ClassifierError::Config("l2_penalty must be non-negative".into()));
        }
        if self.batch_size < 1 {
            return Err(ClassifierError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Common interface of every node classifier.
pub trait ProbabilisticClassifier<T: Scalar> {
    fn class_ids(&self) -> &[String];

    /// Feature dimension, or `None` when the classifier ignores its input.
    fn dimension(&self) -> Option<usize>;

    /// Distribution over [`class_ids`](Self::class_ids).
    fn predict_proba(&self, x: &[T]) -> Result<Vec<T>, ClassifierError>;
}

fn check_input<T: Scalar>(x: &[T], expected: Option<usize>) -> Result<(), ClassifierError> {
    if let Some(expected) = expected {
        if x.len() != expected {
            return Err(ClassifierError::Dimension {
                expected,
                found: x.len(),
            });
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFinite);
    }
    Ok(())
}

/// Numerically stable softmax: the largest logit is subtracted first.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient of the training objective with respect to weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    /// Row-major, `classes × dimension`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Progress reported after each epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats<T> {
    pub epoch: usize,
    pub loss: T,
}

/// Multinomial logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier<T> {
    class_ids: Vec<String>,
    dimension: usize,
    /// Row-major, `classes × dimension`.
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> SoftmaxClassifier<T> {
    pub fn from_parts(
        class_ids: Vec<String>,
        dimension: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self, ClassifierError> {
        let k = class_ids.len();
        if k == 0 {
            return Err(ClassifierError::Malformed(
                "softmax needs at least one class".into(),
            ));
        }
        if weights.len() != k * dimension || bias.len() != k {
            return Err(ClassifierError::Malformed(format!(
                "expected {k}x{dimension} weights and {k} biases, got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(ClassifierError::Malformed("non-finite parameter".into()));
        }
        Ok(SoftmaxClassifier {
            class_ids,
            dimension,
            weights,
            bias,
        })
    }

    pub fn zeros(class_ids: Vec<String>, dimension: usize) -> Self {
        let k = class_ids.len();
        SoftmaxClassifier {
            class_ids,
            dimension,
            weights: vec![T::zero(); k * dimension],
            bias: vec![T::zero(); k],
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weight_norm(&self) -> T {
        self.weights.iter().map(|&w| w * w).sum::<T>().sqrt()
    }

    /// Trains on `labels` that index into `class_ids`.
    pub fn train(
        features: &[&[T]],
        labels: &[usize],
        class_ids: Vec<String>,
        cfg: &TrainConfig,
    ) -> Result<Self, ClassifierError> {
        Self::train_with(features, labels, class_ids, cfg, |_, _| {})
    }

    /// Like [`train`](Self::train), calling `on_epoch` after every epoch.
    ///
    /// When only one class occurs in `labels` and `class_ids` has a single
    /// entry, training is skipped: a one-class softmax is always certain.
    pub fn train_with<F>(
        features: &[&[T]],
        labels: &[usize],
        class_ids: Vec<String>,
        cfg: &TrainConfig,
        mut on_epoch: F,
    ) -> Result<Self, ClassifierError>
    where
        F: FnMut(&Self, EpochStats<T>),
    {
        cfg.validate()?;
        if features.is_empty() {
            return Err(ClassifierError::Empty);
        }
        if features.len() != labels.len() {
            return Err(ClassifierError::Malformed(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dimension = features[0].len();
        for x in features {
            check_input(x, Some(dimension))?;
        }
        let k = class_ids.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(ClassifierError::Label {
                label: bad,
                classes: k,
            });
        }
        let mut model = Self::zeros(class_ids, dimension);
        if k == 1 {
            return Ok(model);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for w in model.weights.iter_mut() {
            *w = T::of(rng.random_range(-0.01..=0.01));
        }
        let lr = T::of(cfg.learning_rate);
        let l2 = T::of(cfg.l2_penalty);
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut batch_x: Vec<&[T]> = Vec::with_capacity(cfg.batch_size);
        let mut batch_y: Vec<usize> = Vec::with_capacity(cfg.batch_size);

        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                batch_x.clear();
                batch_y.clear();
                for &i in chunk {
                    batch_x.push(features[i]);
                    batch_y.push(labels[i]);
                }
                let (_, grad) = model.loss_and_gradient(&batch_x, &batch_y, l2);
                for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
                    *w -= lr * *g;
                }
                for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
                    *b -= lr * *g;
                }
            }
            let loss = model.loss(features, labels, l2);
            if !loss.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
                return Err(ClassifierError::Diverged { epoch });
            }
            on_epoch(&model, EpochStats { epoch, loss });
        }
        Ok(model)
    }

    fn logits(&self, x: &[T]) -> Vec<T> {
        self.weights
            .chunks(self.dimension.max(1))
            .zip(&self.bias)
            .map(|(row, &b)| {
                if self.dimension == 0 {
                    b
                } else {
                    row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>() + b
                }
            })
            .collect()
    }

    fn log_softmax_at(&self, x: &[T], label: usize) -> T {
        let z = self.logits(x);
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = z.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        z[label] - lse
    }

    /// Mean cross-entropy plus `l2 / 2 · ‖W‖²`.
    pub fn loss(&self, features: &[&[T]], labels: &[usize], l2: T) -> T {
        let n = T::of_usize(features.len());
        let ce: T = features
            .iter()
            .zip(labels)
            .map(|(x, &y)| -self.log_softmax_at(x, y))
            .sum::<T>()
            / n;
        let sq: T = self.weights.iter().map(|&w| w * w).sum();
        ce + l2 * sq / T::of(2.0)
    }

    /// Objective value and its analytic gradient.
    pub fn loss_and_gradient(&self, features: &[&[T]], labels: &[usize], l2: T) -> (T, Gradient<T>) {
        let k = self.class_ids.len();
        let d = self.dimension;
        let n = T::of_usize(features.len());
        let mut gw = vec![T::zero(); k * d];
        let mut gb = vec![T::zero(); k];
        let mut ce = T::zero();
        for (x, &y) in features.iter().zip(labels) {
            let z = self.logits(x);
            let max = z.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = z.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            ce += lse - z[y];
            let p = softmax(&z);
            for c in 0..k {
                let delta = if c == y { p[c] - T::one() } else { p[c] };
                gb[c] += delta;
                for (g, &v) in gw[c * d..(c + 1) * d].iter_mut().zip(x.iter()) {
                    *g += delta * v;
                }
            }
        }
        for g in gw.iter_mut().chain(gb.iter_mut()) {
            *g /= n;
        }
        for (g, &w) in gw.iter_mut().zip(&self.weights) {
            *g += l2 * w;
        }
        let sq: T = self.weights.iter().map(|&w| w * w).sum();
        (
            ce / n + l2 * sq / T::of(2.0),
            Gradient {
                weights: gw,
                bias: gb,
            },
        )
    }

    /// Copy with every parameter replaced; used by finite-difference checks.
    pub fn with_parameters(&self, weights: Vec<T>, bias: Vec<T>) -> Result<Self, ClassifierError> {
        Self::from_parts(self.class_ids.clone(), self.dimension, weights, bias)
    }
}

impl<T: Scalar> ProbabilisticClassifier<T> for SoftmaxClassifier<T> {
    fn class_ids(&self) -> &[String] {
        &self.class_ids
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn predict_proba(&self, x: &[T]) -> Result<Vec<T>, ClassifierError> {
        check_input(x, Some(self.dimension))?;
        Ok(softmax(&self.logits(x)))
    }
}

/// k-nearest-neighbour vote fractions under Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnClassifier<T> {
    class_ids: Vec<String>,
    dimension: usize,
    k: usize,
    features: Vec<Vec<T>>,
    labels: Vec<usize>,
}

impl<T: Scalar> KnnClassifier<T> {
    pub fn train(
        features: &[&[T]],
        labels: &[usize],
        class_ids: Vec<String>,
        k: usize,
    ) -> Result<Self, ClassifierError> {
        if features.is_empty() {
            return Err(ClassifierError::Empty);
        }
        let dimension = features[0].len();
        let stored = features.iter().map(|x| x.to_vec()).collect();
        Self::from_parts(class_ids, dimension, k, stored, labels.to_vec())
    }

    pub fn from_parts(
        class_ids: Vec<String>,
        dimension: usize,
        k: usize,
        features: Vec<Vec<T>>,
        labels: Vec<usize>,
    ) -> Result<Self, ClassifierError> {
        if k == 0 {
            return Err(ClassifierError::Config("k must be at least 1".into()));
        }
        if k > features.len() {
            return Err(ClassifierError::KTooLarge {
                k,
                stored: features.len(),
            });
        }
        if features.len() != labels.len() {
            return Err(ClassifierError::Malformed(
                "features and labels differ in length".into(),
            ));
        }
        for x in &features {
            check_input(x, Some(dimension))?;
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_ids.len()) {
            return Err(ClassifierError::Label {
                label: bad,
                classes: class_ids.len(),
            });
        }
        Ok(KnnClassifier {
            class_ids,
            dimension,
            k,
            features,
            labels,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn stored(&self) -> impl Iterator<Item = (&[T], usize)> {
        self.features
            .iter()
            .map(Vec::as_slice)
            .zip(self.labels.iter().copied())
    }

    /// Stored-sample indices of the `k` nearest neighbours; equal distances
    /// are ordered by index.
    pub fn neighbours(&self, x: &[T]) -> Result<Vec<usize>, ClassifierError> {
        check_input(x, Some(self.dimension))?;
        let mut ranked: Vec<(T, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (squared_distance(f, x), i))
            .collect();
        ranked.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
        });
        Ok(ranked.into_iter().take(self.k).map(|(_, i)| i).collect())
    }
}

impl<T: Scalar> ProbabilisticClassifier<T> for KnnClassifier<T> {
    fn class_ids(&self) -> &[String] {
        &self.class_ids
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn predict_proba(&self, x: &[T]) -> Result<Vec<T>, ClassifierError> {
        let mut votes = vec![0usize; self.class_ids.len()];
        for i in self.neighbours(x)? {
            votes[self.labels[i]] += 1;
        }
        let k = T::of_usize(self.k);
        Ok(votes.into_iter().map(|v| T::of_usize(v) / k).collect())
    }
}

/// Fixed distribution regardless of input. Serves as the fallback for nodes
/// that could not be trained and for hand-built models.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantClassifier<T> {
    class_ids: Vec<String>,
    probabilities: Vec<T>,
}

impl<T: Scalar> ConstantClassifier<T> {
    pub fn new(class_ids: Vec<String>, probabilities: Vec<T>) -> Result<Self, ClassifierError> {
        if class_ids.is_empty() || class_ids.len() != probabilities.len() {
            return Err(ClassifierError::Malformed(
                "constant classifier needs one probability per class".into(),
            ));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(ClassifierError::Malformed(
                "probabilities must be finite and >= 0".into(),
            ));
        }
        Ok(ConstantClassifier {
            class_ids,
            probabilities,
        })
    }

    pub fn uniform(class_ids: Vec<String>) -> Self {
        let k = T::of_usize(class_ids.len());
        let probabilities = vec![T::one() / k; class_ids.len()];
        ConstantClassifier {
            class_ids,
            probabilities,
        }
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }
}

impl<T: Scalar> ProbabilisticClassifier<T> for ConstantClassifier<T> {
    fn class_ids(&self) -> &[String] {
        &self.class_ids
    }

    fn dimension(&self) -> Option<usize> {
        None
    }

    fn predict_proba(&self, x: &[T]) -> Result<Vec<T>, ClassifierError> {
        check_input(x, None)?;
        Ok(self.probabilities.clone())
    }
}

/// Classifier kinds a node can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeClassifier<T> {
    Softmax(SoftmaxClassifier<T>),
    Knn(KnnClassifier<T>),
    Constant(ConstantClassifier<T>),
}

impl<T: Scalar> NodeClassifier<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            NodeClassifier::Softmax(_) => "softmax",
            NodeClassifier::Knn(_) => "knn",
            NodeClassifier::Constant(_) => "constant",
        }
    }

    fn inner(&self) -> &dyn ProbabilisticClassifier<T> {
        match self {
            NodeClassifier::Softmax(c) => c,
            NodeClassifier::Knn(c) => c,
            NodeClassifier::Constant(c) => c,
        }
    }
}

impl<T: Scalar> ProbabilisticClassifier<T> for NodeClassifier<T> {
    fn class_ids(&self) -> &[String] {
        self.inner().class_ids()
    }

    fn dimension(&self) -> Option<usize> {
        self.inner().dimension()
    }

    fn predict_proba(&self, x: &[T]) -> Result<Vec<T>, ClassifierError> {
        self.inner().predict_proba(x)
    }
}
