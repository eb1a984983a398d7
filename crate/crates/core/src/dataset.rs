//! ESC-50 manifest ingestion, the class/category taxonomy and the seeded
//! stratified train/validation split.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SplitMix64;

pub const N_CLASSES: u32 = 50;
pub const N_CATEGORIES: u32 = 5;
pub const CLASSES_PER_CATEGORY: u32 = 10;

pub const CATEGORY_NAMES: [&str; 5] = [
    "Animals",
    "Natural soundscapes and water sounds",
    "Human non-speech sounds",
    "Interior/domestic sounds",
    "Exterior/urban noises",
];

/// Roman numerals used for category column headers.
pub const CATEGORY_LABELS: [&str; 5] = ["I", "II", "III", "IV", "V"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub filename: String,
    pub fold: u8,
    pub class_id: u32,
    pub class_name: String,
    pub category_id: u32,
}

pub fn category_of(class_id: u32) -> Result<u32> {
    if class_id >= N_CLASSES {
        return Err(Error::Range(format!("class id {class_id} outside 0..{N_CLASSES}")));
    }
    Ok(class_id / CLASSES_PER_CATEGORY)
}

/// Reads the dataset's `meta/esc50.csv` (or any CSV with at least the
/// `filename`, `fold`, `target` and `category` columns).
pub fn parse_manifest(csv_path: impl AsRef<Path>) -> Result<Vec<ClipRecord>> {
    let path = csv_path.as_ref();
    let file = std::fs::File::open(path)?;
    parse_manifest_reader(file)
}

pub fn parse_manifest_reader<R: std::io::Read>(reader: R) -> Result<Vec<ClipRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Manifest(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Manifest(format!("missing column '{name}'")))
    };
    let (c_file, c_fold, c_target, c_category) = (column("filename")?, column("fold")?, column("target")?, column("category")?);

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Manifest(e.to_string()))?;
        let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        let filename = field(c_file).to_string();
        let target: i64 = field(c_target)
            .parse()
            .map_err(|_| Error::Manifest(format!("row {}: target '{}' is not an integer", line + 2, field(c_target))))?;
        if !(0..N_CLASSES as i64).contains(&target) {
            return Err(Error::Range(format!("row {}: target {target} outside 0..{N_CLASSES}", line + 2)));
        }
        let fold: u8 = field(c_fold)
            .parse()
            .map_err(|_| Error::Manifest(format!("row {}: fold '{}' is not an integer", line + 2, field(c_fold))))?;
        if !seen.insert(filename.clone()) {
            return Err(Error::Duplicate(format!("filename '{filename}' listed twice")));
        }
        let class_id = target as u32;
        records.push(ClipRecord {
            filename,
            fold,
            class_id,
            class_name: field(c_category).to_string(),
            category_id: category_of(class_id)?,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub train: Vec<ClipRecord>,
    pub validation: Vec<ClipRecord>,
    pub seed: u64,
}

/// Within each class (ascending id, records sorted by filename) a single
/// SplitMix64 stream seeded with `seed` shuffles the records; the first
/// `round(n · train_fraction)` go to training, clamped to `1..n` so both
/// sides keep at least one record.
pub fn stratified_split(records: &[ClipRecord], train_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(format!("train fraction {train_fraction} must be in (0, 1)")));
    }
    let mut by_class: BTreeMap<u32, Vec<&ClipRecord>> = BTreeMap::new();
    for r in records {
        by_class.entry(r.class_id).or_default().push(r);
    }
    let mut rng = SplitMix64::new(seed);
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (class_id, mut group) in by_class {
        if group.len() < 2 {
            return Err(Error::Stratification(format!(
                "class {class_id} has {} record(s); at least 2 are needed",
                group.len()
            )));
        }
        group.sort_by(|a, b| a.filename.cmp(&b.filename));
        rng.shuffle(&mut group);
        let n = group.len();
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        train.extend(group[..n_train].iter().map(|r| (*r).clone()));
        validation.extend(group[n_train..].iter().map(|r| (*r).clone()));
    }
    Ok(SplitAssignment { train, validation, seed })
}

/// On-disk split: `{"seed": .., "train": [filenames], "validation": [filenames]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

impl From<&SplitAssignment> for SplitFile {
    fn from(s: &SplitAssignment) -> Self {
        Self {
            seed: s.seed,
            train: s.train.iter().map(|r| r.filename.clone()).collect(),
            validation: s.validation.iter().map(|r| r.filename.clone()).collect(),
        }
    }
}

impl SplitFile {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Resolves filenames back to manifest records.
    pub fn resolve(&self, records: &[ClipRecord]) -> Result<SplitAssignment> {
        let index: HashMap<&str, &ClipRecord> = records.iter().map(|r| (r.filename.as_str(), r)).collect();
        let lookup = |names: &[String]| -> Result<Vec<ClipRecord>> {
            names
                .iter()
                .map(|n| {
                    index
                        .get(n.as_str())
                        .map(|r| (*r).clone())
                        .ok_or_else(|| Error::Manifest(format!("split lists '{n}' which is not in the manifest")))
                })
                .collect()
        };
        Ok(SplitAssignment {
            train: lookup(&self.train)?,
            validation: lookup(&self.validation)?,
            seed: self.seed,
        })
    }
}
