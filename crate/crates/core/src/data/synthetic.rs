//! Deterministic synthetic dataset generation.
//!
//! Examples are drawn from unit-covariance Gaussian blobs, one per class,
//! with pairwise mean distance `separation`. All three splits share the same
//! class-conditional distributions; only the class ratios differ, which is
//! what produces the train/val/test label shift.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Role};
use crate::error::{Error, Result};

/// Specification for [`generate_synthetic`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Number of examples in each split.
    pub n_total: usize,
    pub n_features: usize,
    /// Class ratios for the train, val, and test splits; each must sum to 1.
    pub class_ratios: [Vec<f64>; 3],
    pub seed: u64,
    /// Distance between any two class means.
    pub separation: f64,
}

impl SyntheticSpec {
    pub fn num_classes(&self) -> usize {
        self.class_ratios[0].len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 {
            return Err(Error::Config("n_total must be positive".into()));
        }
        if self.n_features == 0 {
            return Err(Error::Config("n_features must be >= 1".into()));
        }
        let c = self.num_classes();
        if c < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.n_features < c {
            return Err(Error::Config(format!(
                "n_features ({}) must be >= number of classes ({c}) to place class means",
                self.n_features
            )));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::Config("separation must be finite and >= 0".into()));
        }
        for (split, ratios) in ["train", "val", "test"].iter().zip(&self.class_ratios) {
            if ratios.len() != c {
                return Err(Error::Config(format!(
                    "{split} ratios have {} classes, expected {c}",
                    ratios.len()
                )));
            }
            if ratios.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
                return Err(Error::Config(format!("{split} ratios must be >= 0")));
            }
            let sum: f64 = ratios.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "{split} ratios sum to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` examples to classes; realized
/// counts deviate from `ratio * n` by less than one example per class.
fn class_counts(ratios: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = ratios.iter().map(|r| (r * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ratios[a] * n as f64 - counts[a] as f64;
        let fb = ratios[b] * n as f64 - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().take(n - assigned) {
        counts[c] += 1;
    }
    counts
}

/// Class mean for class `c`: `separation / sqrt(2)` along coordinate axis
/// `c`, so every pair of means is exactly `separation` apart.
fn class_mean_coord(class: usize, coord: usize, separation: f64) -> f64 {
    if coord == class {
        separation / std::f64::consts::SQRT_2
    } else {
        0.0
    }
}

fn generate_split(spec: &SyntheticSpec, split_idx: usize, role: Role) -> LabeledDataset {
    let n = spec.n_total;
    let m = spec.n_features;
    let counts = class_counts(&spec.class_ratios[split_idx], n);

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    rng.set_stream(split_idx as u64);

    let mut labels: Vec<u32> = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat(class as u32).take(count));
    }
    labels.shuffle(&mut rng);

    let mut feats: Vec<f32> = Vec::with_capacity(n * m);
    for &y in &labels {
        for j in 0..m {
            let z: f64 = StandardNormal.sample(&mut rng);
            feats.push((class_mean_coord(y as usize, j, spec.separation) + z) as f32);
        }
    }
    let features = Array2::from_shape_vec((n, m), feats).expect("shape by construction");
    LabeledDataset::new(
        format!("synthetic-{role}"),
        role,
        features,
        labels,
        spec.num_classes() as u32,
    )
    .expect("generated data satisfies invariants")
}

/// Generates deterministic (train, val, test) splits per the spec.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    Ok((
        generate_split(spec, 0, Role::Train),
        generate_split(spec, 1, Role::Val),
        generate_split(spec, 2, Role::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn appendix_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_total: 5000,
            n_features: 10,
            class_ratios: [vec![0.1, 0.9], vec![0.6, 0.4], vec![0.9, 0.1]],
            seed: 17,
            separation: 2.0,
        }
    }

    #[test]
    fn imbalanced_splits_have_requested_counts() {
        let (train, val, test) = generate_synthetic(&appendix_spec()).unwrap();
        assert_eq!(train.class_counts(), vec![500, 4500]);
        assert_eq!(val.class_counts(), vec![3000, 2000]);
        assert_eq!(test.class_counts(), vec![4500, 500]);
        assert_eq!(train.dim(), 10);
        assert_eq!(train.role(), Role::Train);
    }

    #[test]
    fn balanced_ratios_give_equal_counts() {
        let spec = SyntheticSpec {
            n_total: 400,
            n_features: 4,
            class_ratios: [vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]],
            seed: 1,
            separation: 1.0,
        };
        for ds in [generate_synthetic(&spec).unwrap().0, generate_synthetic(&spec).unwrap().1] {
            assert_eq!(ds.class_counts(), vec![200, 200]);
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = appendix_spec();
        let (a, _, _) = generate_synthetic(&spec).unwrap();
        let (b, _, _) = generate_synthetic(&spec).unwrap();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn splits_use_distinct_streams() {
        let (train, val, _) = generate_synthetic(&appendix_spec()).unwrap();
        assert_ne!(train.row(0), val.row(0));
    }

    #[test]
    fn invalid_ratios_rejected() {
        let mut spec = appendix_spec();
        spec.class_ratios[1] = vec![0.7, 0.7];
        assert!(matches!(
            generate_synthetic(&spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn class_means_are_separated() {
        let sep = 3.0;
        let d2: f64 = (0..10)
            .map(|j| {
                let a = class_mean_coord(0, j, sep);
                let b = class_mean_coord(1, j, sep);
                (a - b) * (a - b)
            })
            .sum();
        assert!((d2.sqrt() - sep).abs() < 1e-12);
    }

    #[test]
    fn largest_remainder_never_off_by_one_or_more() {
        let ratios = vec![0.21, 0.33, 0.46];
        let counts = class_counts(&ratios, 1000);
        assert_eq!(counts.iter().sum::<usize>(), 1000);
        for (c, &r) in counts.iter().zip(&ratios) {
            assert!((*c as f64 - r * 1000.0).abs() < 1.0);
        }
    }
}
