//! Dataset parsing and the pixel-position sampler.

mod cifar;
mod idx;
mod pixels;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cifar::{parse_cifar_binary, CIFAR_RECORD_LEN};
pub use idx::{parse_idx, serialize_idx_images, serialize_idx_labels, IdxPart, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use pixels::{build_pixel_distribution, sample_rc_init, sample_uniform_init, PixelDistribution};

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("bad magic {found:#010x}")]
    BadMagic { found: u32 },
    #[error("truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("dimension product overflows")]
    DimensionOverflow,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("stream length {0} is not a multiple of the record size")]
    RecordSize(usize),
    #[error("label {label} out of range at record {index}")]
    LabelRange { index: usize, label: u8 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("expected {expected}, found {found}")]
    WrongPart { expected: &'static str, found: &'static str },
    #[error("pixel value {0} outside [0, 1]")]
    PixelRange(f32),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

/// Images stored channel-planar (`N x C x H x W`) with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    images: Vec<f32>,
    labels: Vec<u8>,
    shape: Vec<usize>,
    split: Split,
}

impl LabeledImages {
    pub fn new(images: Vec<f32>, labels: Vec<u8>, shape: Vec<usize>, split: Split) -> Result<Self, DataError> {
        let len: usize = shape.iter().product();
        if len == 0 || images.len() != labels.len() * len {
            return Err(DataError::CountMismatch {
                images: images.len().checked_div(len).unwrap_or(0),
                labels: labels.len(),
            });
        }
        if let Some(&v) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DataError::PixelRange(v));
        }
        Ok(Self {
            images,
            labels,
            shape,
            split,
        })
    }

    /// Joins an image part and a label part.
    pub fn from_parts(images: IdxPart, labels: IdxPart, split: Split) -> Result<Self, DataError> {
        let (data, shape) = match images {
            IdxPart::Images { data, rows, cols, .. } => (data, vec![1, rows, cols]),
            IdxPart::Labels(_) => {
                return Err(DataError::WrongPart {
                    expected: "images",
                    found: "labels",
                })
            }
        };
        let labels = match labels {
            IdxPart::Labels(l) => l,
            IdxPart::Images { .. } => {
                return Err(DataError::WrongPart {
                    expected: "labels",
                    found: "images",
                })
            }
        };
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
            return Err(DataError::LabelRange { index, label });
        }
        Self::new(data, labels, shape, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn image_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// The first `n` examples (or all of them).
    pub fn head(&self, n: usize) -> Self {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    /// Examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut images = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Self {
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            shape: self.shape.clone(),
            split: self.split,
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Loads an IDX image file and its label file.
pub fn load_idx_pair(images: &Path, labels: &Path, split: Split) -> Result<LabeledImages, DataError> {
    let im = parse_idx(&read_file(images)?)?;
    let lb = parse_idx(&read_file(labels)?)?;
    LabeledImages::from_parts(im, lb, split)
}

/// Loads and concatenates CIFAR-10 binary batch files.
pub fn load_cifar_batches(paths: &[impl AsRef<Path>], split: Split) -> Result<LabeledImages, DataError> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let part = parse_cifar_binary(&read_file(p.as_ref())?)?;
        images.extend_from_slice(part.images());
        labels.extend_from_slice(part.labels());
    }
    LabeledImages::new(images, labels, vec![3, 32, 32], split)
}
