//! Labeled samples, the four-way train/test split, and data sources.

mod cifar;
mod synthetic;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, derive_rng};

pub use cifar::{
    load_cifar10, load_cifar10_raw, ChannelStats, Cifar10Side, RawImages, CIFAR_CHANNELS, CIFAR_CLASSES, CIFAR_DIM,
    CIFAR_RECORD_BYTES, CIFAR_SIDE,
};
pub use synthetic::gen_synthetic;

/// One labeled example. Features are shared, so cloning a sample is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Arc<[f64]>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: impl Into<Arc<[f64]>>, label: usize) -> Self {
        Sample {
            features: features.into(),
            label,
        }
    }
}

/// An ordered list of samples with a common dimension and class count.
///
/// Positions in `samples` are identities: cohesion matrices index rows and
/// columns by them.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    samples: Vec<Sample>,
    dim: usize,
    classes: usize,
}

impl LabeledSet {
    pub fn new(samples: Vec<Sample>, dim: usize, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::arg("class count must be positive"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::arg(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                )));
            }
            if s.label >= classes {
                return Err(Error::arg(format!(
                    "sample {i} has label {} but there are only {classes} classes",
                    s.label
                )));
            }
        }
        Ok(LabeledSet { samples, dim, classes })
    }

    pub fn empty(dim: usize, classes: usize) -> Self {
        LabeledSet {
            samples: Vec::new(),
            dim,
            classes,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn get(&self, i: usize) -> Option<&Sample> {
        self.samples.get(i)
    }

    /// The samples at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<LabeledSet> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::arg(format!("index {i} out of range for set of {}", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledSet {
            samples,
            dim: self.dim,
            classes: self.classes,
        })
    }

    /// Concatenates two sets over the same feature space.
    pub fn concat(&self, other: &LabeledSet) -> Result<LabeledSet> {
        if self.dim != other.dim || self.classes != other.classes {
            return Err(Error::arg("cannot concatenate sets of different shape"));
        }
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        Ok(LabeledSet {
            samples,
            dim: self.dim,
            classes: self.classes,
        })
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Writes the set as CSV with header `label,f0,..,f{n-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut header = Vec::with_capacity(self.dim + 1);
        header.push("label".to_string());
        header.extend((0..self.dim).map(|i| format!("f{i}")));
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for s in &self.samples {
            let mut row = Vec::with_capacity(self.dim + 1);
            row.push(s.label.to_string());
            row.extend(s.features.iter().map(|v| format!("{v:?}")));
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a set written by [`LabeledSet::write_csv`].
    pub fn read_csv(path: &Path, classes: usize) -> Result<LabeledSet> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let dim = r.headers().map_err(|e| csv_err(path, e))?.len().saturating_sub(1);
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let label: usize = rec
                .get(0)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(format!("{}: bad label", path.display())))?;
            let features = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::format(format!("{}: bad feature {v}", path.display())))
                })
                .collect::<Result<Vec<_>>>()?;
            samples.push(Sample::new(features, label));
        }
        LabeledSet::new(samples, dim, classes)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(format!("{}: {other:?}", path.display())),
    }
}

/// Positions of each split within the original train and test sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub retain_train: Vec<usize>,
    pub compact_train: Vec<usize>,
    pub retain_test: Vec<usize>,
    pub compact_test: Vec<usize>,
}

/// The four-way split: retain/compact on each of the train and test sides.
/// `compact_train` is the set A and `compact_test` the set B between which
/// cohesion is measured.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub retain_train: LabeledSet,
    pub compact_train: LabeledSet,
    pub retain_test: LabeledSet,
    pub compact_test: LabeledSet,
    pub split_seed: u64,
    pub indices: SplitIndices,
}

impl DatasetBundle {
    /// Rebuilds a bundle from recorded split positions.
    pub fn from_indices(train: &LabeledSet, test: &LabeledSet, indices: SplitIndices, split_seed: u64) -> Result<Self> {
        check_partition(train.len(), &indices.retain_train, &indices.compact_train, "train")?;
        check_partition(test.len(), &indices.retain_test, &indices.compact_test, "test")?;
        Ok(DatasetBundle {
            retain_train: train.select(&indices.retain_train)?,
            compact_train: train.select(&indices.compact_train)?,
            retain_test: test.select(&indices.retain_test)?,
            compact_test: test.select(&indices.compact_test)?,
            split_seed,
            indices,
        })
    }

    /// The full training side (retain followed by compact), which is what
    /// the trainer consumes.
    pub fn full_train(&self) -> LabeledSet {
        self.retain_train
            .concat(&self.compact_train)
            .expect("both halves come from one set")
    }
}

fn check_partition(n: usize, retain: &[usize], compact: &[usize], side: &str) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in retain.iter().chain(compact) {
        if i >= n || seen[i] {
            return Err(Error::arg(format!(
                "{side} split indices do not partition 0..{n} (offending index {i})"
            )));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::arg(format!("{side} split indices do not cover 0..{n}")));
    }
    Ok(())
}

/// Splits `train` and `test` into retain and compact parts.
///
/// Compact sets are drawn without replacement and stratified by class:
/// each class gets `compact_size / C` slots, and the remainder is handed out
/// one slot at a time following a seeded class permutation. Classes that run
/// out of samples pass their slots on in the same order.
pub fn make_splits(train: &LabeledSet, test: &LabeledSet, compact_size: usize, seed: u64) -> Result<DatasetBundle> {
    if compact_size > train.len() || compact_size > test.len() {
        return Err(Error::arg(format!(
            "compact size {compact_size} exceeds a side (train {}, test {})",
            train.len(),
            test.len()
        )));
    }
    if train.dim() != test.dim() || train.classes() != test.classes() {
        return Err(Error::arg("train and test sets differ in shape"));
    }
    let compact_train = stratified_pick(train, compact_size, seed, rng::TAG_SPLIT_TRAIN);
    let compact_test = stratified_pick(test, compact_size, seed, rng::TAG_SPLIT_TEST);
    let indices = SplitIndices {
        retain_train: complement(train.len(), &compact_train),
        compact_train,
        retain_test: complement(test.len(), &compact_test),
        compact_test,
    };
    DatasetBundle::from_indices(train, test, indices, seed)
}

fn complement(n: usize, picked: &[usize]) -> Vec<usize> {
    let mut taken = vec![false; n];
    for &i in picked {
        taken[i] = true;
    }
    (0..n).filter(|&i| !taken[i]).collect()
}

/// Seeded class-stratified draw of `k` positions, returned in ascending order.
pub(crate) fn stratified_pick(set: &LabeledSet, k: usize, seed: u64, tag: u64) -> Vec<usize> {
    pick_by_labels(&set.labels(), set.classes(), k, seed, tag)
}

fn pick_by_labels(labels: &[usize], classes: usize, k: usize, seed: u64, tag: u64) -> Vec<usize> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }

    let mut order: Vec<usize> = (0..classes).collect();
    order.shuffle(&mut derive_rng(seed, &[tag, rng::TAG_SPLIT_CLASSES]));

    let available = |c: usize| by_class.get(&c).map_or(0, Vec::len);
    let mut quota = vec![0usize; classes];
    let mut remaining = k;
    // Round-robin over the permuted classes, one slot per visit, skipping
    // classes that are exhausted. Equivalent to base + remainder when every
    // class has enough samples.
    while remaining > 0 {
        let mut progressed = false;
        for &c in &order {
            if remaining == 0 {
                break;
            }
            if quota[c] < available(c) {
                quota[c] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        debug_assert!(progressed, "k <= set.len() guarantees progress");
        if !progressed {
            break;
        }
    }

    let mut picked = Vec::with_capacity(k);
    for c in 0..classes {
        if quota[c] == 0 {
            continue;
        }
        let mut members = by_class[&c].clone();
        members.shuffle(&mut derive_rng(seed, &[tag, c as u64]));
        picked.extend_from_slice(&members[..quota[c]]);
    }
    picked.sort_unstable();
    picked
}

/// A seeded class-stratified subset of `set` with `k` samples, keeping the
/// original relative order.
pub fn stratified_subset(set: &LabeledSet, k: usize, seed: u64) -> Result<LabeledSet> {
    if k > set.len() {
        return Err(Error::arg(format!(
            "subset of {k} requested from a set of {}",
            set.len()
        )));
    }
    set.select(&stratified_pick(set, k, seed, rng::TAG_SUBSET))
}

/// Ascending positions of the subset [`stratified_subset`] would pick, from
/// the labels alone.
pub fn stratified_indices(labels: &[usize], classes: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > labels.len() {
        return Err(Error::arg(format!(
            "subset of {k} requested from a set of {}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::arg(format!("label {bad} outside {classes} classes")));
    }
    Ok(pick_by_labels(labels, classes, k, seed, rng::TAG_SUBSET))
}
