//! Dataset representation and construction.
//!
//! Datasets are immutable after construction: features are a dense row-major
//! `f32` matrix, labels are class indices. Every generation operation is a
//! pure function of its inputs and seed.

mod cache;
mod idx;
mod synthetic;

pub use cache::{read_cache, write_cache};
pub use idx::{carve_validation, load_digit_splits, load_idx_digits};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which split a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Train => write!(f, "train"),
            Role::Val => write!(f, "val"),
            Role::Test => write!(f, "test"),
        }
    }
}

/// A labeled dataset: dense feature matrix plus integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    role: Role,
    features: Array2<f32>,
    labels: Vec<u32>,
    num_classes: u32,
}

impl LabeledDataset {
    /// Builds a dataset, validating shape, label range, and finiteness.
    pub fn new(
        name: impl Into<String>,
        role: Role,
        features: Array2<f32>,
        labels: Vec<u32>,
        num_classes: u32,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Config(format!(
                "feature rows ({}) != label count ({})",
                features.nrows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Config(format!(
                "label {bad} out of range [0, {num_classes})"
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("non-finite feature value".into()));
        }
        Ok(Self {
            name: name.into(),
            role,
            features,
            labels,
            num_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Number of examples.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes as usize
    }

    /// Feature row of example `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f32] {
        let m = self.dim();
        &self.features.as_slice().expect("row-major layout")[i * m..(i + 1) * m]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    /// Per-class example counts, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes as usize];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }

    /// New dataset containing the given rows, in the given order.
    pub fn select(&self, indices: &[usize], name: impl Into<String>, role: Role) -> Result<Self> {
        let m = self.dim();
        let mut feats = Vec::with_capacity(indices.len() * m);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Domain(format!("index {i} out of bounds")));
            }
            feats.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        let features = Array2::from_shape_vec((indices.len(), m), feats)
            .expect("shape follows from construction");
        Self::new(name, role, features, labels, self.num_classes)
    }

    /// Writes the dataset as CSV with header `label,f0,...,f{m-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "label")?;
        for j in 0..self.dim() {
            write!(out, ",f{j}")?;
        }
        writeln!(out)?;
        for i in 0..self.len() {
            write!(out, "{}", self.labels[i])?;
            for &x in self.row(i) {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Per-class keep fractions for inducing class imbalance on a train split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImbalanceSpec {
    /// class -> keep fraction in (0, 1]. Classes not listed are kept whole.
    pub per_class_keep: BTreeMap<u32, f64>,
    pub seed: u64,
}

impl ImbalanceSpec {
    fn validate(&self) -> Result<()> {
        for (&class, &keep) in &self.per_class_keep {
            if !(keep > 0.0 && keep <= 1.0) {
                return Err(Error::Config(format!(
                    "keep fraction for class {class} must be in (0, 1], got {keep}"
                )));
            }
        }
        Ok(())
    }
}

/// Subsamples each class of a train split to `floor(keep * count)` examples,
/// chosen uniformly without replacement under the spec seed. The relative
/// order of retained examples is preserved.
pub fn induce_imbalance(ds: &LabeledDataset, spec: &ImbalanceSpec) -> Result<LabeledDataset> {
    if ds.role() != Role::Train {
        return Err(Error::Domain(format!(
            "imbalance induction requires a train split, got {}",
            ds.role()
        )));
    }
    spec.validate()?;
    let counts = ds.class_counts();
    for &class in spec.per_class_keep.keys() {
        if class as usize >= counts.len() || counts[class as usize] == 0 {
            return Err(Error::Config(format!(
                "class {class} in imbalance spec is absent from dataset"
            )));
        }
    }

    let mut retained: Vec<usize> = Vec::with_capacity(ds.len());
    for class in 0..ds.num_classes() as u32 {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        match spec.per_class_keep.get(&class) {
            None => retained.extend_from_slice(&members),
            Some(&keep) => {
                let take = (keep * members.len() as f64).floor() as usize;
                let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
                rng.set_stream(u64::from(class) + 1);
                let mut shuffled = members;
                shuffled.shuffle(&mut rng);
                let mut kept: Vec<usize> = shuffled.into_iter().take(take).collect();
                kept.sort_unstable();
                retained.extend(kept);
            }
        }
    }
    retained.sort_unstable();
    ds.select(&retained, format!("{}-imbalanced", ds.name), Role::Train)
}
