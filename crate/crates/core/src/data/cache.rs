//! On-disk binary cache, one file per split.
//!
//! Layout: little-endian header (n_rows: u32, n_cols: u32, n_classes: u32),
//! row-major f32 features, then u32 labels. Deliberately trivial to parse
//! from any language.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{LabeledDataset, Role};
use crate::error::{Error, Result};

pub fn write_cache(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&(ds.len() as u32).to_le_bytes())?;
    out.write_all(&(ds.dim() as u32).to_le_bytes())?;
    out.write_all(&(ds.num_classes() as u32).to_le_bytes())?;
    for i in 0..ds.len() {
        for &x in ds.row(i) {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    for &y in ds.labels() {
        out.write_all(&y.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_cache(path: &Path, name: impl Into<String>, role: Role) -> Result<LabeledDataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let take_u32 = |pos: usize| -> Result<u32> {
        bytes
            .get(pos..pos + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or(Error::Format {
                offset: pos as u64,
                message: "truncated header".into(),
            })
    };
    let n_rows = take_u32(0)? as usize;
    let n_cols = take_u32(4)? as usize;
    let n_classes = take_u32(8)?;

    let feat_bytes = n_rows * n_cols * 4;
    let expected = 12 + feat_bytes + n_rows * 4;
    if bytes.len() != expected {
        return Err(Error::Format {
            offset: bytes.len().min(expected) as u64,
            message: format!("expected {expected} bytes, file has {}", bytes.len()),
        });
    }
    let feats: Vec<f32> = bytes[12..12 + feat_bytes]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let labels: Vec<u32> = bytes[12 + feat_bytes..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let features = Array2::from_shape_vec((n_rows, n_cols), feats).expect("size checked above");
    LabeledDataset::new(name, role, features, labels, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    #[test]
    fn cache_round_trip_is_bitwise() {
        let spec = SyntheticSpec {
            n_total: 64,
            n_features: 5,
            class_ratios: [vec![0.3, 0.7], vec![0.5, 0.5], vec![0.5, 0.5]],
            seed: 5,
            separation: 2.0,
        };
        let (train, _, _) = generate_synthetic(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.bin");
        write_cache(&train, &path).unwrap();
        let back = read_cache(&path, train.name(), Role::Train).unwrap();
        assert_eq!(back.features(), train.features());
        assert_eq!(back.labels(), train.labels());
        assert_eq!(back.num_classes(), train.num_classes());
    }

    #[test]
    fn truncated_cache_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, [1, 0]).unwrap();
        match read_cache(&path, "bad", Role::Train) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn csv_export_has_documented_header() {
        let spec = SyntheticSpec {
            n_total: 4,
            n_features: 3,
            class_ratios: [vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]],
            seed: 2,
            separation: 1.0,
        };
        let (train, _, _) = generate_synthetic(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        train.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "label,f0,f1,f2");
        assert_eq!(lines.count(), 4);
    }
}
