use std::path::Path;

use serde::{Deserialize, Serialize};

use super::idx::{parse_images, parse_labels, read_maybe_gz};
use crate::error::{PcError, Result};
use crate::numeric::{Matrix, Rng};

/// Pixel normalization `((p / 255) − mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { mean: 0.5, std: 0.5 }
    }
}

impl Normalization {
    /// Maps a `[0, 1]` intensity to the normalized value.
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }

    pub fn pixel(&self, p: u8) -> f64 {
        self.normalize(p as f64 / 255.0)
    }
}

/// Labelled samples: normalized features, class indices and one-hot targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Matrix,
    pub labels: Vec<usize>,
    pub one_hot: Matrix,
    pub num_classes: usize,
}

/// One mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Matrix,
    pub y: Matrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(PcError::CountMismatch {
                images: images.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(PcError::InvalidConfig(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        let one_hot = Matrix::from_fn(labels.len(), num_classes, |r, c| {
            if labels[r] == c {
                1.0
            } else {
                0.0
            }
        });
        Ok(Dataset {
            images,
            labels,
            one_hot,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.images.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            one_hot: self.one_hot.select_rows(idx),
            num_classes: self.num_classes,
        }
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Random `(train, validation)` split with a fixed seed.
    pub fn split_validation(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(PcError::InvalidConfig(format!(
                "validation fraction must lie in [0, 1), got {fraction}"
            )));
        }
        let perm = Rng::new(seed).permutation(self.len());
        let n_val = (self.len() as f64 * fraction).round() as usize;
        let (val, train) = perm.split_at(n_val);
        Ok((self.subset(train), self.subset(val)))
    }

    /// Batches for one epoch. With `shuffle`, the order depends only on
    /// `(seed, epoch)`; the final partial batch is included.
    pub fn batches(&self, batch_size: usize, seed: u64, epoch: u64, shuffle: bool) -> BatchIterator<'_> {
        let order = if shuffle {
            Rng::new(seed).fork(epoch).permutation(self.len())
        } else {
            (0..self.len()).collect()
        };
        BatchIterator {
            data: self,
            order,
            batch_size: batch_size.max(1),
            cursor: 0,
        }
    }
}

pub struct BatchIterator<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl BatchIterator<'_> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for BatchIterator<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let idx = &self.order[self.cursor..end];
        self.cursor = end;
        Some(Batch {
            x: self.data.images.select_rows(idx),
            y: self.data.one_hot.select_rows(idx),
            labels: idx.iter().map(|&i| self.data.labels[i]).collect(),
        })
    }
}

/// Loads an IDX image/label pair with the default normalization.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    load_idx_with(images_path, labels_path, Normalization::default(), 10)
}

pub fn load_idx_with(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    norm: Normalization,
    num_classes: usize,
) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = parse_images(&read_maybe_gz(ip)?, ip)?;
    let labels = parse_labels(&read_maybe_gz(lp)?, lp)?;
    if images.count != labels.len() {
        return Err(PcError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let dim = images.rows * images.cols;
    let table: Vec<f64> = (0..=255u8).map(|p| norm.pixel(p)).collect();
    let data = images.pixels.iter().map(|&p| table[p as usize]).collect();
    let x = Matrix::from_vec(images.count, dim, data)?;
    let num_classes = num_classes.max(labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0));
    Dataset::new(x, labels.into_iter().map(usize::from).collect(), num_classes)
}

/// Class-conditional Gaussian blobs: class means drawn from `N(0, 3²)` per
/// coordinate, unit-variance noise around them, labels assigned round-robin.
pub fn synthetic_gaussian(n: usize, dim: usize, classes: usize, rng: &mut Rng) -> Result<Dataset> {
    if classes == 0 || dim == 0 {
        return Err(PcError::InvalidConfig("dim and classes must be positive".into()));
    }
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| 3.0 * rng.normal()).collect())
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let x = Matrix::from_fn(n, dim, |r, c| means[labels[r]][c] + rng.normal());
    Dataset::new(x, labels, classes)
}
