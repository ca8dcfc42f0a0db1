//! Classification metrics, per-level evaluation and silhouette analysis.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::Sample;
use crate::hierarchy::{HierarchicalModel, ModelError, PredictionMode};
use crate::scalar::{euclidean, Scalar};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("{truths} truths but {preds} predictions")]
    LengthMismatch { truths: usize, preds: usize },
    #[error("label {0:?} is not among the evaluated classes")]
    UnknownLabel(String),
    #[error("silhouette needs at least two classes")]
    SingleClass,
    #[error("descriptor {index} has {found} values, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new<S: AsRef<str>>(
        truths: &[S],
        preds: &[S],
        classes: &[String],
    ) -> Result<ConfusionMatrix, MetricsError> {
        if truths.len() != preds.len() {
            return Err(MetricsError::LengthMismatch {
                truths: truths.len(),
                preds: preds.len(),
            });
        }
        if truths.is_empty() {
            return Err(MetricsError::Empty);
        }
        let pos: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let lookup = |s: &S| {
            pos.get(s.as_ref())
                .copied()
                .ok_or_else(|| MetricsError::UnknownLabel(s.as_ref().to_string()))
        };
        let k = classes.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (t, p) in truths.iter().zip(preds) {
            counts[lookup(t)?][lookup(p)?] += 1;
        }
        Ok(ConfusionMatrix {
            classes: classes.to_vec(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(c);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Convenience wrapper matching the functional style of the other metrics.
pub fn confusion_matrix<S: AsRef<str>>(
    truths: &[S],
    preds: &[S],
    classes: &[String],
) -> Result<ConfusionMatrix, MetricsError> {
    ConfusionMatrix::new(truths, preds, classes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics<T> {
    pub class: String,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub support: u64,
    /// Set when a metric had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragedMetrics<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Macro,
    Weighted,
}

fn ratio<T: Scalar>(num: u64, den: u64) -> (T, bool) {
    if den == 0 {
        (T::zero(), true)
    } else {
        (T::of(num as f64) / T::of(den as f64), false)
    }
}

fn check_nonempty(cm: &ConfusionMatrix) -> Result<(), MetricsError> {
    if cm.classes.is_empty() || cm.total() == 0 {
        Err(MetricsError::Empty)
    } else {
        Ok(())
    }
}

/// Precision, recall and F1 for every class. Zero denominators give 0.
pub fn per_class<T: Scalar>(cm: &ConfusionMatrix) -> Result<Vec<ClassMetrics<T>>, MetricsError> {
    check_nonempty(cm)?;
    Ok((0..cm.classes.len())
        .map(|c| {
            let tp = cm.counts[c][c];
            let support = cm.support(c);
            let (precision, zp) = ratio::<T>(tp, cm.predicted(c));
            let (recall, zr) = ratio::<T>(tp, support);
            let denom = precision + recall;
            let (f1, zf) = if denom == T::zero() {
                (T::zero(), true)
            } else {
                (T::of(2.0) * precision * recall / denom, false)
            };
            ClassMetrics {
                class: cm.classes[c].clone(),
                precision,
                recall,
                f1,
                support,
                zero_division: zp || zr || zf,
            }
        })
        .collect())
}

/// Macro (unweighted) or support-weighted mean of the per-class metrics.
pub fn precision_recall_f1<T: Scalar>(
    cm: &ConfusionMatrix,
    averaging: Averaging,
) -> Result<AveragedMetrics<T>, MetricsError> {
    let rows = per_class::<T>(cm)?;
    let weights: Vec<T> = match averaging {
        Averaging::Macro => vec![T::one(); rows.len()],
        Averaging::Weighted => rows.iter().map(|r| T::of(r.support as f64)).collect(),
    };
    let total: T = weights.iter().copied().sum();
    let mean = |f: &dyn Fn(&ClassMetrics<T>) -> T| {
        rows.iter().zip(&weights).map(|(r, &w)| w * f(r)).sum::<T>() / total
    };
    Ok(AveragedMetrics {
        precision: mean(&|r| r.precision),
        recall: mean(&|r| r.recall),
        f1: mean(&|r| r.f1),
    })
}

pub fn accuracy<T: Scalar>(cm: &ConfusionMatrix) -> Result<T, MetricsError> {
    check_nonempty(cm)?;
    let trace: u64 = (0..cm.classes.len()).map(|c| cm.counts[c][c]).sum();
    Ok(T::of(trace as f64) / T::of(cm.total() as f64))
}

/// Mean per-class recall (balanced accuracy). A class without true
/// instances contributes a recall of 0.
pub fn weighted_accuracy<T: Scalar>(cm: &ConfusionMatrix) -> Result<T, MetricsError> {
    let rows = per_class::<T>(cm)?;
    let k = T::of_usize(rows.len());
    Ok(rows.iter().map(|r| r.recall).sum::<T>() / k)
}

/// Full evaluation of one label set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport<T> {
    pub samples: u64,
    pub accuracy: T,
    pub weighted_accuracy: T,
    pub macro_avg: AveragedMetrics<T>,
    pub weighted_avg: AveragedMetrics<T>,
    pub per_class: Vec<ClassMetrics<T>>,
    /// Classes that have predictions but no true instances.
    pub zero_support: Vec<String>,
    pub confusion: ConfusionMatrix,
}

impl<T: Scalar> ClassificationReport<T> {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self, MetricsError> {
        let per_class = per_class::<T>(&cm)?;
        Ok(ClassificationReport {
            samples: cm.total(),
            accuracy: accuracy(&cm)?,
            weighted_accuracy: weighted_accuracy(&cm)?,
            macro_avg: precision_recall_f1(&cm, Averaging::Macro)?,
            weighted_avg: precision_recall_f1(&cm, Averaging::Weighted)?,
            zero_support: per_class
                .iter()
                .filter(|r| r.support == 0)
                .map(|r| r.class.clone())
                .collect(),
            per_class,
            confusion: cm,
        })
    }

    /// Builds the report over classes that occur in `truths` or `preds`,
    /// ordered as in `order`.
    pub fn from_labels(truths: &[String], preds: &[String], order: &[String]) -> Result<Self, MetricsError> {
        let classes: Vec<String> = order
            .iter()
            .filter(|c| truths.contains(c) || preds.contains(c))
            .cloned()
            .collect();
        Self::from_confusion(ConfusionMatrix::new(truths, preds, &classes)?)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|r| r.class.len())
            .max()
            .unwrap_or(5)
            .max(12);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}",
            "class", "precision", "recall", "f1", "support"
        );
        for r in &self.per_class {
            let flag = if r.zero_division { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}{flag}",
                r.class,
                r.precision.as_f64(),
                r.recall.as_f64(),
                r.f1.as_f64(),
                r.support
            );
        }
        for (name, avg) in [
            ("macro avg", &self.macro_avg),
            ("weighted avg", &self.weighted_avg),
        ] {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                name,
                avg.precision.as_f64(),
                avg.recall.as_f64(),
                avg.f1.as_f64(),
                self.samples
            );
        }
        let _ = writeln!(out, "accuracy           {:.4}", self.accuracy.as_f64());
        let _ = writeln!(out, "weighted accuracy  {:.4}", self.weighted_accuracy.as_f64());
        if self.per_class.iter().any(|r| r.zero_division) {
            let _ = writeln!(out, "* a zero denominator was reported as 0");
        }
        out
    }
}

/// Accuracy and weighted accuracy for one prediction mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelScores<T> {
    pub accuracy: T,
    pub weighted_accuracy: T,
}

/// One row of the per-level table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport<T> {
    pub level: usize,
    pub classes: Vec<String>,
    pub direct: LevelScores<T>,
    pub from_leaf: LevelScores<T>,
    /// Samples whose direct and leaf-derived labels differ at this level.
    pub disagreements: u64,
}

/// Per-sample predictions gathered during evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub leaf_truth: Vec<String>,
    pub leaf_pred: Vec<String>,
    /// `[level][sample]`
    pub level_truth: Vec<Vec<String>>,
    pub level_direct: Vec<Vec<String>>,
    pub level_from_leaf: Vec<Vec<String>>,
}

/// Runs inference over `samples` and records labels at every level.
pub fn predict_all<T: Scalar>(
    model: &HierarchicalModel<T>,
    samples: &[Sample<T>],
) -> Result<Predictions, MetricsError> {
    let tax = model.taxonomy();
    let levels = tax.max_depth() + 1;
    let results: Vec<_> = samples
        .par_iter()
        .map(|s| -> Result<_, MetricsError> {
            let leaf = tax.leaf_index(&s.label).map_err(ModelError::from)?;
            let p = model.infer(&s.features)?;
            let mut rows = Vec::with_capacity(levels);
            for level in 0..levels {
                rows.push((
                    tax.id(tax.representative_at(leaf, level)).to_string(),
                    tax.id(p
                        .at_level(tax, level, PredictionMode::Direct)
                        .map_err(ModelError::from)?)
                        .to_string(),
                    tax.id(p
                        .at_level(tax, level, PredictionMode::FromLeaf)
                        .map_err(ModelError::from)?)
                        .to_string(),
                ));
            }
            Ok((tax.id(leaf).to_string(), tax.id(p.leaf_argmax).to_string(), rows))
        })
        .collect::<Result<_, _>>()?;
    let mut out = Predictions {
        leaf_truth: Vec::new(),
        leaf_pred: Vec::new(),
        level_truth: vec![Vec::new(); levels],
        level_direct: vec![Vec::new(); levels],
        level_from_leaf: vec![Vec::new(); levels],
    };
    for (truth, pred, rows) in results {
        out.leaf_truth.push(truth);
        out.leaf_pred.push(pred);
        for (level, (t, d, f)) in rows.into_iter().enumerate() {
            out.level_truth[level].push(t);
            out.level_direct[level].push(d);
            out.level_from_leaf[level].push(f);
        }
    }
    Ok(out)
}

fn level_scores<T: Scalar>(
    truth: &[String],
    pred: &[String],
    order: &[String],
) -> Result<LevelScores<T>, MetricsError> {
    let r = ClassificationReport::<T>::from_labels(truth, pred, order)?;
    Ok(LevelScores {
        accuracy: r.accuracy,
        weighted_accuracy: r.weighted_accuracy,
    })
}

/// Accuracy per taxonomy level in both prediction modes, against the
/// ground-truth ancestor of each sample's leaf.
pub fn per_level_report<T: Scalar>(
    model: &HierarchicalModel<T>,
    samples: &[Sample<T>],
) -> Result<Vec<LevelReport<T>>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let preds = predict_all(model, samples)?;
    levels_from_predictions(model, &preds)
}

pub fn levels_from_predictions<T: Scalar>(
    model: &HierarchicalModel<T>,
    preds: &Predictions,
) -> Result<Vec<LevelReport<T>>, MetricsError> {
    let tax = model.taxonomy();
    (0..=tax.max_depth())
        .map(|level| {
            let order = tax.nodes_at_level(level).map_err(ModelError::from)?;
            let truth = &preds.level_truth[level];
            let direct = &preds.level_direct[level];
            let from_leaf = &preds.level_from_leaf[level];
            Ok(LevelReport {
                level,
                classes: order.clone(),
                direct: level_scores(truth, direct, &order)?,
                from_leaf: level_scores(truth, from_leaf, &order)?,
                disagreements: direct.iter().zip(from_leaf).filter(|(a, b)| a != b).count() as u64,
            })
        })
        .collect()
}

pub fn level_table<T: Scalar>(levels: &[LevelReport<T>]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6}  {:>10}  {:>10}  {:>13}  {:>13}  {:>13}",
        "level", "acc", "w-acc", "from-leaf acc", "from-leaf w-acc", "disagreements"
    );
    for l in levels {
        let _ = writeln!(
            out,
            "L{:<5}  {:>10.4}  {:>10.4}  {:>13.4}  {:>15.4}  {:>13}",
            l.level,
            l.direct.accuracy.as_f64(),
            l.direct.weighted_accuracy.as_f64(),
            l.from_leaf.accuracy.as_f64(),
            l.from_leaf.weighted_accuracy.as_f64(),
            l.disagreements
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SilhouetteReport<T> {
    pub mean: T,
    /// Mean score per class, classes in first-appearance order.
    pub per_class: Vec<(String, T)>,
    /// Score of every sample, input order.
    pub samples: Vec<T>,
}

impl<T: Scalar> SilhouetteReport<T> {
    /// Per-class bars as aligned text.
    pub fn to_table(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|(c, _)| c.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        for (class, score) in &self.per_class {
            let s = score.as_f64();
            let bar = "#".repeat((s.max(0.0) * 40.0).round() as usize);
            let _ = writeln!(out, "{class:<width$}  {s:>7.4}  {bar}");
        }
        let _ = writeln!(out, "{:<width$}  {:>7.4}", "mean", self.mean.as_f64());
        out
    }
}

/// Mean silhouette coefficient with Euclidean distance.
///
/// For each sample, `a` is the mean distance to the rest of its class and
/// `b` the smallest mean distance to another class; the score is
/// `(b - a) / max(a, b)`. Samples alone in their class score 0.
pub fn silhouette_score<T: Scalar, S: AsRef<str> + Sync>(
    descriptors: &[Vec<T>],
    labels: &[S],
) -> Result<SilhouetteReport<T>, MetricsError> {
    if descriptors.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            truths: labels.len(),
            preds: descriptors.len(),
        });
    }
    if descriptors.is_empty() {
        return Err(MetricsError::Empty);
    }
    let dim = descriptors[0].len();
    if let Some((index, d)) = descriptors.iter().enumerate().find(|(_, d)| d.len() != dim) {
        return Err(MetricsError::Dimension {
            index,
            expected: dim,
            found: d.len(),
        });
    }
    let mut class_names: Vec<String> = Vec::new();
    let mut class_of: HashMap<&str, usize> = HashMap::new();
    let assignment: Vec<usize> = labels
        .iter()
        .map(|l| {
            *class_of.entry(l.as_ref()).or_insert_with(|| {
                class_names.push(l.as_ref().to_string());
                class_names.len() - 1
            })
        })
        .collect();
    let k = class_names.len();
    if k < 2 {
        return Err(MetricsError::SingleClass);
    }
    let mut sizes = vec![0usize; k];
    for &c in &assignment {
        sizes[c] += 1;
    }

    // each sample is independent; the sums below run in input order
    let scores: Vec<T> = (0..descriptors.len())
        .into_par_iter()
        .map(|i| {
            let own = assignment[i];
            if sizes[own] == 1 {
                return T::zero();
            }
            let mut sums = vec![T::zero(); k];
            for (j, d) in descriptors.iter().enumerate() {
                if j != i {
                    sums[assignment[j]] += euclidean(&descriptors[i], d);
                }
            }
            let a = sums[own] / T::of_usize(sizes[own] - 1);
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / T::of_usize(sizes[c]))
                .fold(T::infinity(), T::min);
            let m = a.max(b);
            if m == T::zero() {
                T::zero()
            } else {
                (b - a) / m
            }
        })
        .collect();

    let n = T::of_usize(scores.len());
    let mean = scores.iter().copied().sum::<T>() / n;
    let mut class_sums = vec![T::zero(); k];
    for (&s, &c) in scores.iter().zip(&assignment) {
        class_sums[c] += s;
    }
    let per_class = class_names
        .into_iter()
        .zip(class_sums.into_iter().zip(&sizes))
        .map(|(name, (sum, &size))| (name, sum / T::of_usize(size)))
        .collect();
    Ok(SilhouetteReport {
        mean,
        per_class,
        samples: scores,
    })
}
