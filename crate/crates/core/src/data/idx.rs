//! Loader for the standard IDX digit corpus (big-endian magic numbers
//! 0x00000803 for image files, 0x00000801 for label files).

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{LabeledDataset, Role};
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const NUM_CLASSES: u32 = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn read_u32_be(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        if end > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: "truncated file while reading u32".into(),
            });
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    fn read_bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("truncated file: expected {} bytes of payload", n),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

/// Parses an IDX image file into an n x (rows*cols) matrix scaled to [0, 1].
fn parse_images(bytes: &[u8]) -> Result<Array2<f32>> {
    let mut r = Reader::new(bytes);
    let magic = r.read_u32_be()?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"),
        });
    }
    let n = r.read_u32_be()? as usize;
    let rows = r.read_u32_be()? as usize;
    let cols = r.read_u32_be()? as usize;
    let pixels = r.read_bytes(n * rows * cols)?;
    let feats: Vec<f32> = pixels.iter().map(|&p| f32::from(p) / 255.0).collect();
    Ok(Array2::from_shape_vec((n, rows * cols), feats).expect("shape by construction"))
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    let mut r = Reader::new(bytes);
    let magic = r.read_u32_be()?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}"),
        });
    }
    let n = r.read_u32_be()? as usize;
    let raw = r.read_bytes(n)?;
    for (i, &y) in raw.iter().enumerate() {
        if u32::from(y) >= NUM_CLASSES {
            return Err(Error::Format {
                offset: (8 + i) as u64,
                message: format!("label {y} out of range [0, {NUM_CLASSES})"),
            });
        }
    }
    Ok(raw.iter().map(|&y| u32::from(y)).collect())
}

fn load_pair(dir: &Path, images: &str, labels: &str, name: &str, role: Role) -> Result<LabeledDataset> {
    let feats = parse_images(&std::fs::read(dir.join(images))?)?;
    let labs = parse_labels(&std::fs::read(dir.join(labels))?)?;
    if feats.nrows() != labs.len() {
        return Err(Error::Format {
            offset: 4,
            message: format!(
                "image count ({}) != label count ({}) for {name}",
                feats.nrows(),
                labs.len()
            ),
        });
    }
    LabeledDataset::new(name, role, feats, labs, NUM_CLASSES)
}

/// Loads the raw digit corpus from a directory holding the four standard
/// IDX files. Returns (train, test); see [`carve_validation`] for the
/// validation split.
pub fn load_idx_digits(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = load_pair(dir, TRAIN_IMAGES, TRAIN_LABELS, "digits-train", Role::Train)?;
    let test = load_pair(dir, TEST_IMAGES, TEST_LABELS, "digits-test", Role::Test)?;
    Ok((train, test))
}

/// Carves a validation split from the tail of the seeded shuffle of `train`.
/// Both outputs preserve the original relative row order and are
/// index-disjoint by construction.
pub fn carve_validation(
    train: &LabeledDataset,
    val_size: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if val_size >= train.len() {
        return Err(Error::Config(format!(
            "validation size {val_size} must be smaller than train size {}",
            train.len()
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let (keep, val) = order.split_at(train.len() - val_size);
    let mut keep = keep.to_vec();
    let mut val = val.to_vec();
    keep.sort_unstable();
    val.sort_unstable();
    Ok((
        train.select(&keep, train.name(), Role::Train)?,
        train.select(&val, format!("{}-val", train.name()), Role::Val)?,
    ))
}

/// Convenience loader: (train, val, test) with a validation split of
/// `val_size` (default 5000 at the call sites) carved from the train set.
pub fn load_digit_splits(
    dir: &Path,
    val_size: usize,
    val_seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let (train, test) = load_idx_digits(dir)?;
    let (train, val) = carve_validation(&train, val_size, val_seed)?;
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Writes a minimal IDX pair: 2x2 images whose first pixel equals the
    /// label value and whose second pixel equals the row position.
    fn write_corpus(dir: &Path, train_labels: &[u8], test_labels: &[u8]) {
        for (images, labels, data) in [
            (TRAIN_IMAGES, TRAIN_LABELS, train_labels),
            (TEST_IMAGES, TEST_LABELS, test_labels),
        ] {
            let n = data.len() as u32;
            let mut img = Vec::new();
            img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
            img.extend_from_slice(&n.to_be_bytes());
            img.extend_from_slice(&2u32.to_be_bytes());
            img.extend_from_slice(&2u32.to_be_bytes());
            for (i, &y) in data.iter().enumerate() {
                img.extend_from_slice(&[y, i as u8, 255, 128]);
            }
            std::fs::write(dir.join(images), img).unwrap();

            let mut lab = Vec::new();
            lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
            lab.extend_from_slice(&n.to_be_bytes());
            lab.extend_from_slice(data);
            std::fs::write(dir.join(labels), lab).unwrap();
        }
    }

    #[test]
    fn loads_crafted_corpus() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), &[5, 0, 4, 1, 9, 2], &[7, 2]);
        let (train, test) = load_idx_digits(dir.path()).unwrap();
        assert_eq!(train.len(), 6);
        assert_eq!(test.len(), 2);
        assert_eq!(train.dim(), 4);
        // First training label read back through the loader.
        assert_eq!(train.label(0), 5);
        // Pixel scaling to [0, 1].
        assert!((train.row(0)[0] - 5.0 / 255.0).abs() < 1e-7);
        assert!((train.row(0)[2] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn corrupted_magic_names_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), &[1, 2, 3], &[1]);
        let path = dir.path().join(TRAIN_IMAGES);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = 0xff;
        std::fs::write(&path, bytes).unwrap();
        match load_idx_digits(dir.path()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), &[1, 2, 3], &[1]);
        let path = dir.path().join(TRAIN_IMAGES);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match load_idx_digits(dir.path()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, (bytes.len() - 3) as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn validation_carve_sizes_and_disjointness() {
        let dir = tempfile::tempdir().unwrap();
        let labels: Vec<u8> = (0..60u8).map(|i| i % 10).collect();
        write_corpus(dir.path(), &labels, &[0]);
        let (train, val, test) = load_digit_splits(dir.path(), 10, 123).unwrap();
        assert_eq!(train.len(), 50);
        assert_eq!(val.len(), 10);
        assert_eq!(test.len(), 1);
        assert_eq!(val.role(), Role::Val);
        // The second pixel encodes the original row position, so the carve
        // must partition 0..60 between train and val with no overlap.
        let orig = |ds: &LabeledDataset, i: usize| (ds.row(i)[1] * 255.0).round() as u32;
        let mut seen: Vec<u32> = (0..train.len()).map(|i| orig(&train, i)).collect();
        seen.extend((0..val.len()).map(|i| orig(&val, i)));
        seen.sort_unstable();
        let expected: Vec<u32> = (0..60).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn carve_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let labels: Vec<u8> = (0..40u8).map(|i| i % 10).collect();
        write_corpus(dir.path(), &labels, &[0]);
        let (train, _) = load_idx_digits(dir.path()).unwrap();
        let (a_train, a_val) = carve_validation(&train, 8, 7).unwrap();
        let (b_train, b_val) = carve_validation(&train, 8, 7).unwrap();
        assert_eq!(a_train.labels(), b_train.labels());
        assert_eq!(a_val.features(), b_val.features());
    }
}
