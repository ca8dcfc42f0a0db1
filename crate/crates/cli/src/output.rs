use std::fs;
use std::path::{Path, PathBuf};

use scenetree::dataset::SplitAssignment;
use scenetree::jsonfmt::{round_sig, to_report_json};
use scenetree::{Dataset, Taxonomy};
use serde::Serialize;

use crate::failure::{Classify, Failure};

/// Formats a probability or score for CSV output.
pub fn number(x: f64) -> String {
    let r = round_sig(x, 12);
    if r != 0.0 && r.abs() < 1e-4 {
        format!("{r:e}")
    } else {
        r.to_string()
    }
}

pub fn taxonomy(path: Option<&PathBuf>) -> Result<Taxonomy, Failure> {
    match path {
        None => Ok(Taxonomy::food_scenes()),
        Some(p) => {
            let text = fs::read_to_string(p).usage(format!("reading taxonomy {}", p.display()))?;
            Taxonomy::parse(&text).usage(format!("parsing taxonomy {}", p.display()))
        }
    }
}

pub fn dataset(path: &Path) -> Result<Dataset, Failure> {
    Dataset::load(path).usage(format!("reading dataset {}", path.display()))
}

pub fn splits(dataset: &Dataset, path: &Path) -> Result<SplitAssignment, Failure> {
    let file = fs::File::open(path).usage(format!("opening split file {}", path.display()))?;
    let assignment =
        SplitAssignment::read_csv(dataset, file).usage(format!("reading split file {}", path.display()))?;
    let known: std::collections::BTreeSet<&str> = dataset.event_ids().collect();
    let unknown = [&assignment.train, &assignment.validation, &assignment.test]
        .into_iter()
        .flatten()
        .filter(|e| !known.contains(e.as_str()))
        .count();
    if unknown > 0 {
        log::warn!("{unknown} events in {} are not in the dataset", path.display());
    }
    Ok(assignment)
}

pub fn out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).usage(format!("creating {}", dir.display()))
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).usage(format!("writing {}", path.display()))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), Failure> {
    let text = to_report_json(value).compute(format!("serialising {}", path.display()))?;
    write(path, text)
}
