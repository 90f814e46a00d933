//! Dataset manifests, train/test splitting and minibatch scheduling.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    /// Image path relative to the manifest's directory.
    pub path: String,
    pub angle_rad: f64,
}

/// Ordered list of labeled images.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    /// Directory that record paths are resolved against.
    pub root: PathBuf,
}

pub const MANIFEST_HEADER: [&str; 2] = ["path", "angle_rad"];

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>, root: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            records,
            root: root.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.path.is_empty() {
                return Err(Error::InvalidData(format!("record {i}: empty path")));
            }
            if !r.angle_rad.is_finite() {
                return Err(Error::InvalidData(format!(
                    "record {i}: non-finite angle {}",
                    r.angle_rad
                )));
            }
            if !seen.insert(r.path.as_str()) {
                return Err(Error::InvalidData(format!(
                    "record {i}: duplicate path {}",
                    r.path
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, index: usize) -> PathBuf {
        self.root.join(&self.records[index].path)
    }

    pub fn angles(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.angle_rad).collect()
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidData(format!("manifest encode: {e}"));
        w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for r in &self.records {
            // `{}` on f64 is the shortest representation that parses back exactly
            w.write_record([r.path.as_str(), &format!("{}", r.angle_rad)])
                .map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidData(format!("manifest encode: {e}")))
    }

    pub fn from_csv_bytes(bytes: &[u8], root: impl Into<PathBuf>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(bytes);
        let headers = rdr
            .headers()
            .map_err(|e| Error::InvalidData(format!("manifest header: {e}")))?;
        if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
            return Err(Error::InvalidData(format!(
                "manifest header must be `path,angle_rad`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::InvalidData(format!("manifest row {i}: {e}")))?;
            let angle_rad = row[1]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidData(format!("manifest row {i}: angle: {e}")))?;
            records.push(ManifestRecord {
                path: row[0].to_string(),
                angle_rad,
            });
        }
        Self::new(records, root)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_csv_bytes(&bytes, root)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Number of training items for a split of `n` items; floor with a guard
/// against products like `0.29 * 100 = 28.999999999999996`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Seeded shuffle, then the first `floor(fraction * N)` records train and
/// the remainder test.
pub fn split_dataset(
    manifest: &DatasetManifest,
    spec: SplitSpec,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if manifest.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty manifest".into()));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let order = shuffled_indices(manifest.len(), spec.seed, 0);
    let n_train = train_count(manifest.len(), spec.train_fraction);
    let pick = |idx: &[usize]| DatasetManifest {
        records: idx.iter().map(|&i| manifest.records[i].clone()).collect(),
        root: manifest.root.clone(),
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

pub fn shuffled_indices(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, stream));
    idx
}

/// Index batches for one epoch. The order is a deterministic function of
/// `(seed, epoch)`; a short final batch is kept.
pub fn epoch_batches(n: usize, batch: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let order = shuffled_indices(n, seed, 1 + epoch as u64);
    Ok(order.chunks(batch).map(<[usize]>::to_vec).collect())
}

/// Borrowing variant of [`epoch_batches`] over a slice of items.
pub fn minibatches<T>(items: &[T], batch: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<&T>>> {
    Ok(epoch_batches(items.len(), batch, seed, epoch)?
        .into_iter()
        .map(|b| b.into_iter().map(|i| &items[i]).collect())
        .collect())
}
