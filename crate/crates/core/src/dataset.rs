//! Descriptor datasets, event-aware splitting and oversampling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::taxonomy::{Taxonomy, TaxonomyError};

const FIXED_COLUMNS: [&str; 4] = ["sample_id", "event_id", "label", "timestamp"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("empty file")]
    Empty,
    #[error("missing or malformed header: {0}")]
    Header(String),
    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric feature at row {row}, column {column}: {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-finite feature at row {row}")]
    NonFinite { row: usize },
    #[error("sample {sample:?} has {found} features, dataset dimension is {expected}")]
    Dimension {
        sample: String,
        expected: usize,
        found: usize,
    },
    #[error("sample {sample:?}: label {label:?} is not a taxonomy leaf ({source})")]
    Label {
        sample: String,
        label: String,
        source: TaxonomyError,
    },
    #[error("invalid split ratios: {0}")]
    Ratios(String),
    #[error("{events} events cannot fill {needed} splits")]
    TooFewEvents { events: usize, needed: usize },
    #[error("no samples to balance")]
    NothingToBalance,
    #[error("split file: {0}")]
    SplitFile(String),
}

/// One image descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub sample_id: String,
    pub event_id: String,
    pub label: String,
    pub timestamp: Option<String>,
    pub features: Vec<T>,
}

/// Samples in file order, grouped into events.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    samples: Vec<Sample<T>>,
    dimension: usize,
    // events in order of first appearance
    events: Vec<(String, Vec<usize>)>,
}

impl<T: Scalar> Dataset<T> {
    pub fn from_samples(samples: Vec<Sample<T>>) -> Result<Dataset<T>, DatasetError> {
        let dimension = samples.first().map(|s| s.features.len()).unwrap_or(0);
        Self::with_dimension(samples, dimension)
    }

    pub fn with_dimension(samples: Vec<Sample<T>>, dimension: usize) -> Result<Dataset<T>, DatasetError> {
        let mut events: Vec<(String, Vec<usize>)> = Vec::new();
        let mut by_id: HashMap<String, usize> = HashMap::new();
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dimension {
                return Err(DatasetError::Dimension {
                    sample: s.sample_id.clone(),
                    expected: dimension,
                    found: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite { row: i + 1 });
            }
            let slot = *by_id.entry(s.event_id.clone()).or_insert_with(|| {
                events.push((s.event_id.clone(), Vec::new()));
                events.len() - 1
            });
            events[slot].1.push(i);
        }
        Ok(Dataset {
            samples,
            dimension,
            events,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset<T>, DatasetError> {
        let file = std::fs::File::open(path)?;
        Self::read(file)
    }

    /// Reads the CSV layout `sample_id,event_id,label,timestamp,f0,...`.
    pub fn read<R: Read>(reader: R) -> Result<Dataset<T>, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            None => return Err(DatasetError::Empty),
            Some(h) => h?,
        };
        let header: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
        if header.len() < FIXED_COLUMNS.len() || header[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
            return Err(DatasetError::Header(format!(
                "expected {} followed by f0..f{{D-1}}, found {:?}",
                FIXED_COLUMNS.join(","),
                header
            )));
        }
        for (j, name) in header[FIXED_COLUMNS.len()..].iter().enumerate() {
            if *name != format!("f{j}") {
                return Err(DatasetError::Header(format!(
                    "feature column {j} is named {name:?}, expected \"f{j}\""
                )));
            }
        }
        let dimension = header.len() - FIXED_COLUMNS.len();

        let mut samples = Vec::new();
        for (i, record) in records.enumerate() {
            let row = i + 1;
            let record = record?;
            if record.len() == 1 && record[0].trim().is_empty() {
                continue;
            }
            if record.len() != header.len() {
                return Err(DatasetError::Ragged {
                    row,
                    expected: header.len(),
                    found: record.len(),
                });
            }
            let mut features = Vec::with_capacity(dimension);
            for (j, cell) in record.iter().skip(FIXED_COLUMNS.len()).enumerate() {
                let cell = cell.trim();
                let v = T::from_str(cell).map_err(|_| DatasetError::NonNumeric {
                    row,
                    column: header[FIXED_COLUMNS.len() + j].clone(),
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite { row });
                }
                features.push(v);
            }
            let timestamp = record[3].trim();
            samples.push(Sample {
                sample_id: record[0].trim().to_string(),
                event_id: record[1].trim().to_string(),
                label: record[2].trim().to_string(),
                timestamp: (!timestamp.is_empty()).then(|| timestamp.to_string()),
                features,
            });
        }
        if samples.is_empty() {
            return Err(DatasetError::Empty);
        }
        Self::with_dimension(samples, dimension)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        write_samples(writer, &self.samples, self.dimension)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        self.write(std::fs::File::create(path)?)
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn events(&self) -> &[(String, Vec<usize>)] {
        &self.events
    }

    pub fn event_ids(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|(id, _)| id.as_str())
    }

    /// Checks that every label names a leaf of `taxonomy`.
    pub fn validate_labels(&self, taxonomy: &Taxonomy) -> Result<(), DatasetError> {
        for s in &self.samples {
            taxonomy
                .leaf_index(&s.label)
                .map_err(|source| DatasetError::Label {
                    sample: s.sample_id.clone(),
                    label: s.label.clone(),
                    source,
                })?;
        }
        Ok(())
    }

    /// Samples whose event belongs to `events`, in dataset order.
    pub fn select_events(&self, events: &BTreeSet<String>) -> Vec<Sample<T>> {
        self.samples
            .iter()
            .filter(|s| events.contains(&s.event_id))
            .cloned()
            .collect()
    }
}

pub fn write_samples<T: Scalar, W: Write>(
    writer: W,
    samples: &[Sample<T>],
    dimension: usize,
) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..dimension).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![
            s.sample_id.clone(),
            s.event_id.clone(),
            s.label.clone(),
            s.timestamp.clone().unwrap_or_default(),
        ];
        row.extend(s.features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Target fractions of images for train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<SplitRatios, DatasetError> {
        let r = SplitRatios {
            train,
            validation,
            test,
        };
        let all = r.as_array();
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(DatasetError::Ratios(format!(
                "every ratio must be positive, got {train}, {validation}, {test}"
            )));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(DatasetError::Ratios(format!("ratios sum to {sum}, not 1")));
        }
        Ok(r)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

impl FromStr for SplitRatios {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(DatasetError::Ratios(format!(
                "expected three comma-separated values, got {}",
                parts.len()
            )));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| DatasetError::Ratios(format!("{p:?} is not a number")))?;
        }
        SplitRatios::new(v[0], v[1], v[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::SplitFile(format!("unknown split {other:?}"))),
        }
    }
}

/// Disjoint event sets for the three splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
    /// Fraction of images per split (train, validation, test).
    pub achieved_ratios: [f64; 3],
}

impl SplitAssignment {
    pub fn events(&self, split: Split) -> &BTreeSet<String> {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn split_of(&self, event: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|&s| self.events(s).contains(event))
    }

    /// Writes `event_id,split` rows in dataset event order.
    pub fn write_csv<T: Scalar, W: Write>(
        &self,
        dataset: &Dataset<T>,
        writer: W,
    ) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["event_id", "split"])?;
        for id in dataset.event_ids() {
            if let Some(split) = self.split_of(id) {
                w.write_record([id, split.as_str()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a split file and recomputes achieved ratios against `dataset`.
    pub fn read_csv<T: Scalar, R: Read>(
        dataset: &Dataset<T>,
        reader: R,
    ) -> Result<SplitAssignment, DatasetError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "event_id" || &headers[1] != "split" {
            return Err(DatasetError::SplitFile(format!(
                "expected header event_id,split, found {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut sets: [BTreeSet<String>; 3] = Default::default();
        let mut seen = BTreeSet::new();
        for record in rdr.records() {
            let record = record?;
            let event = record[0].trim().to_string();
            let split: Split = record[1].parse()?;
            if !seen.insert(event.clone()) {
                return Err(DatasetError::SplitFile(format!("event {event:?} listed twice")));
            }
            sets[split as usize].insert(event);
        }
        let [train, validation, test] = sets;
        let mut assignment = SplitAssignment {
            train,
            validation,
            test,
            seed: 0,
            achieved_ratios: [0.0; 3],
        };
        assignment.achieved_ratios = assignment.image_ratios(dataset);
        Ok(assignment)
    }

    fn image_ratios<T: Scalar>(&self, dataset: &Dataset<T>) -> [f64; 3] {
        let mut counts = [0usize; 3];
        for (id, members) in dataset.events() {
            if let Some(s) = self.split_of(id) {
                counts[s as usize] += members.len();
            }
        }
        let total: usize = counts.iter().sum();
        counts.map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
    }
}

/// Assigns whole events to train/validation/test.
///
/// Events are shuffled with `seed`, then each goes to the split whose image
/// count lags its target the most. Once the remaining events are only just
/// enough to give every empty split one event, they are forced into the
/// empty splits.
pub fn split_by_events<T: Scalar>(
    dataset: &Dataset<T>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    let ratios = SplitRatios::new(ratios.train, ratios.validation, ratios.test)?;
    let n_events = dataset.events().len();
    if n_events < 3 {
        return Err(DatasetError::TooFewEvents {
            events: n_events,
            needed: 3,
        });
    }
    let mut order: Vec<usize> = (0..n_events).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = dataset.len() as f64;
    let targets = ratios.as_array().map(|r| r * total);
    let mut counts = [0usize; 3];
    let mut event_counts = [0usize; 3];
    let mut sets: [BTreeSet<String>; 3] = Default::default();

    for (placed, &e) in order.iter().enumerate() {
        let remaining = n_events - placed;
        let empty: Vec<usize> = (0..3).filter(|&s| event_counts[s] == 0).collect();
        let candidates: Vec<usize> = if remaining <= empty.len() {
            empty
        } else {
            (0..3).collect()
        };
        let mut best = candidates[0];
        let mut best_deficit = targets[best] - counts[best] as f64;
        for &s in &candidates[1..] {
            let deficit = targets[s] - counts[s] as f64;
            if deficit > best_deficit {
                best = s;
                best_deficit = deficit;
            }
        }
        let (id, members) = &dataset.events()[e];
        counts[best] += members.len();
        event_counts[best] += 1;
        sets[best].insert(id.clone());
    }

    let [train, validation, test] = sets;
    let mut assignment = SplitAssignment {
        train,
        validation,
        test,
        seed,
        achieved_ratios: [0.0; 3],
    };
    assignment.achieved_ratios = assignment.image_ratios(dataset);
    Ok(assignment)
}

/// One cross-validation fold over events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFold {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Partitions shuffled events round-robin into `k` folds.
pub fn kfold_by_events<T: Scalar>(
    dataset: &Dataset<T>,
    k: usize,
    seed: u64,
) -> Result<Vec<EventFold>, DatasetError> {
    let n_events = dataset.events().len();
    if k < 2 {
        return Err(DatasetError::Ratios(format!("k must be at least 2, got {k}")));
    }
    if k > n_events {
        return Err(DatasetError::TooFewEvents {
            events: n_events,
            needed: k,
        });
    }
    let mut order: Vec<usize> = (0..n_events).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds: Vec<BTreeSet<String>> = vec![BTreeSet::new(); k];
    for (pos, &e) in order.iter().enumerate() {
        folds[pos % k].insert(dataset.events()[e].0.clone());
    }
    Ok((0..k)
        .map(|i| EventFold {
            test: folds[i].clone(),
            train: folds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, f)| f.iter().cloned())
                .collect(),
        })
        .collect())
}

/// Indices that balance `labels` by duplicating minority-class members.
///
/// Every input index appears at least once. Each class is topped up to the
/// largest class count by cycling through reshuffled copies of its members,
/// and the combined list is shuffled.
pub fn oversample_indices<L: Ord + Clone>(labels: &[L], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.clone()).or_default().push(i);
    }
    let target = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut out: Vec<usize> = (0..labels.len()).collect();
    for members in by_class.values() {
        let mut needed = target - members.len();
        while needed > 0 {
            let mut pass = members.clone();
            pass.shuffle(&mut rng);
            let take = needed.min(pass.len());
            out.extend_from_slice(&pass[..take]);
            needed -= take;
        }
    }
    out.shuffle(&mut rng);
    out
}

/// Balances classes to the largest class count; duplicates keep their
/// original `sample_id`.
pub fn oversample_balance<T: Clone>(
    samples: &[Sample<T>],
    seed: u64,
) -> Result<Vec<Sample<T>>, DatasetError> {
    if samples.is_empty() {
        return Err(DatasetError::NothingToBalance);
    }
    let labels: Vec<&str> = samples.iter().map(|s| s.label.as_str()).collect();
    Ok(oversample_indices(&labels, seed)
        .into_iter()
        .map(|i| samples[i].clone())
        .collect())
}
