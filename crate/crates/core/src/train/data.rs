//! In-memory datasets: IDX files (MNIST layout) and seeded synthetic blobs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sample_shape: [usize; 3],
    features: Vec<f32>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        sample_shape: [usize; 3],
        features: Vec<f32>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || features.len() != per * labels.len() {
            return Err(Error::Shape(format!(
                "{} feature values for {} samples of shape {sample_shape:?}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self {
            sample_shape,
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> [usize; 3] {
        self.sample_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Samples `indices` as an NCHW batch plus labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let per: usize = self.sample_shape.iter().product();
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} out of range for {} samples",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.features[i * per..(i + 1) * per]);
            labels.push(self.labels[i]);
        }
        let [c, h, w] = self.sample_shape;
        Ok((Tensor::new(vec![indices.len(), c, h, w], data)?, labels))
    }

    /// Splits off the first `n` samples.
    pub fn split(mut self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot split {} samples at {n}",
                self.len()
            )));
        }
        let per: usize = self.sample_shape.iter().product();
        let tail_f = self.features.split_off(n * per);
        let tail_l = self.labels.split_off(n);
        let tail = Dataset {
            sample_shape: self.sample_shape,
            features: tail_f,
            labels: tail_l,
            num_classes: self.num_classes,
        };
        Ok((self, tail))
    }

    /// The first `n` samples (or all of them).
    pub fn truncate(mut self, n: usize) -> Dataset {
        let per: usize = self.sample_shape.iter().product();
        self.labels.truncate(n);
        self.features.truncate(n * per);
        self
    }
}

/// Gaussian blobs: each class is a mixture of `blobs_per_class` isotropic
/// clusters whose centres are drawn uniformly from [-1, 1]^features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub samples: usize,
    pub features: usize,
    pub classes: usize,
    pub blobs_per_class: usize,
    /// Standard deviation of every cluster.
    pub spread: f32,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            samples: 24_000,
            features: 16,
            classes: 4,
            blobs_per_class: 6,
            spread: 0.45,
            seed: 7,
        }
    }
}

/// Samples of the default blob task used for training; the rest are held
/// out for evaluation.
pub const DESK_TRAIN_SAMPLES: usize = 20_000;

/// The default blob task split into 20 000 training and 4 000 held-out
/// samples.
pub fn desk_scale_task() -> Result<(Dataset, Dataset)> {
    synthetic_blobs(&BlobConfig::default())?.split(DESK_TRAIN_SAMPLES)
}

pub fn synthetic_blobs(cfg: &BlobConfig) -> Result<Dataset> {
    if cfg.samples == 0 || cfg.features == 0 || cfg.classes == 0 || cfg.blobs_per_class == 0 {
        return Err(Error::InvalidArgument(format!(
            "blob config must be positive everywhere: {cfg:?}"
        )));
    }
    if !(cfg.spread.is_finite() && cfg.spread >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "blob spread must be finite and >= 0, got {}",
            cfg.spread
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centres: Vec<f32> = (0..cfg.classes * cfg.blobs_per_class * cfg.features)
        .map(|_| rng.gen_range(-1.0f32..=1.0))
        .collect();
    let mut labels: Vec<usize> = (0..cfg.samples).map(|i| i % cfg.classes).collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(cfg.samples * cfg.features);
    for &label in &labels {
        let blob = label * cfg.blobs_per_class + rng.gen_range(0..cfg.blobs_per_class);
        let centre = &centres[blob * cfg.features..(blob + 1) * cfg.features];
        for &c in centre {
            let z: f32 = rng.sample(StandardNormal);
            features.push(c + cfg.spread * z);
        }
    }
    Dataset::new([cfg.features, 1, 1], features, labels, cfg.classes)
}

const IDX_U8_IMAGES: u32 = 0x0000_0803;
const IDX_U8_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            what,
            detail: "truncated header".into(),
        })
}

/// Parses an unsigned-byte IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let what = "IDX image file";
    let magic = be_u32(bytes, 0, what)?;
    if magic != IDX_U8_IMAGES {
        return Err(Error::Format {
            what,
            detail: format!("magic {magic:#010x}, expected {IDX_U8_IMAGES:#010x}"),
        });
    }
    let n = be_u32(bytes, 4, what)? as usize;
    let rows = be_u32(bytes, 8, what)? as usize;
    let cols = be_u32(bytes, 12, what)? as usize;
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(Error::Format {
            what,
            detail: format!("{} pixel bytes for {n}x{rows}x{cols}", body.len()),
        });
    }
    Ok((n, rows, cols, body))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let what = "IDX label file";
    let magic = be_u32(bytes, 0, what)?;
    if magic != IDX_U8_LABELS {
        return Err(Error::Format {
            what,
            detail: format!("magic {magic:#010x}, expected {IDX_U8_LABELS:#010x}"),
        });
    }
    let n = be_u32(bytes, 4, what)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format {
            what,
            detail: format!("{} label bytes for {n} labels", body.len()),
        });
    }
    Ok(body)
}

/// Image/label IDX pair with pixels scaled to [0, 1]. The class count is
/// one more than the largest label.
pub fn idx_dataset(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::Format {
            what: "IDX pair",
            detail: format!("{n} images but {} labels", labels.len()),
        });
    }
    let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let features = pixels.iter().map(|&p| f32::from(p) / 255.0).collect();
    Dataset::new(
        [1, rows, cols],
        features,
        labels.iter().map(|&l| l as usize).collect(),
        classes,
    )
}

pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    idx_dataset(&std::fs::read(images)?, &std::fs::read(labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, r: u32, c: u32, px: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_U8_IMAGES, n, r, c] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(px);
        v
    }

    fn idx_labels(l: &[u8]) -> Vec<u8> {
        let mut v = IDX_U8_LABELS.to_be_bytes().to_vec();
        v.extend_from_slice(&(l.len() as u32).to_be_bytes());
        v.extend_from_slice(l);
        v
    }

    #[test]
    fn idx_round_trip() {
        let d = idx_dataset(
            &idx_images(2, 2, 2, &[0, 255, 51, 102, 1, 2, 3, 4]),
            &idx_labels(&[3, 1]),
        )
        .unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.num_classes(), 4);
        assert_eq!(d.sample_shape(), [1, 2, 2]);
        let (x, y) = d.batch(&[0]).unwrap();
        assert_eq!(x.data(), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(y, vec![3]);
    }

    #[test]
    fn idx_rejects_bad_headers() {
        assert!(parse_idx_images(&idx_labels(&[1])).is_err());
        assert!(parse_idx_images(&idx_images(2, 2, 2, &[0; 7])).is_err());
        assert!(idx_dataset(&idx_images(1, 1, 1, &[0]), &idx_labels(&[0, 1])).is_err());
        assert!(parse_idx_labels(&[0, 0, 8]).is_err());
    }

    #[test]
    fn blobs_are_seeded_and_balanced() {
        let cfg = BlobConfig {
            samples: 400,
            ..BlobConfig::default()
        };
        let a = synthetic_blobs(&cfg).unwrap();
        assert_eq!(a, synthetic_blobs(&cfg).unwrap());
        assert_ne!(
            a,
            synthetic_blobs(&BlobConfig {
                seed: 8,
                ..cfg.clone()
            })
            .unwrap()
        );
        for c in 0..4 {
            assert_eq!(a.labels().iter().filter(|&&l| l == c).count(), 100);
        }
        let (tr, te) = a.split(300).unwrap();
        assert_eq!((tr.len(), te.len()), (300, 100));
    }
}
