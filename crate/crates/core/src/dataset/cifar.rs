//! CIFAR-10 binary batches: records of one label byte followed by 3072 pixel
//! bytes, R plane then G then B, each plane 32x32 row-major.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabeledSet, Sample};
use crate::error::{Error, Result};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CHANNELS: usize = 3;
pub const CIFAR_DIM: usize = CIFAR_CHANNELS * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_RECORD_BYTES: usize = CIFAR_DIM + 1;
pub const CIFAR_CLASSES: usize = 10;

const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILES: [&str; 1] = ["test_batch.bin"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cifar10Side {
    Train,
    Test,
}

impl Cifar10Side {
    fn files(self) -> &'static [&'static str] {
        match self {
            Cifar10Side::Train => &TRAIN_FILES,
            Cifar10Side::Test => &TEST_FILES,
        }
    }
}

/// Undecoded images as stored on disk.
#[derive(Debug, Clone)]
pub struct RawImages {
    pub labels: Vec<u8>,
    /// `labels.len() * CIFAR_DIM` bytes in record order.
    pub pixels: Vec<u8>,
}

impl RawImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * CIFAR_DIM..(i + 1) * CIFAR_DIM]
    }

    /// Parses concatenated records.
    pub fn parse(bytes: &[u8], origin: &str) -> Result<Self> {
        if !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
            return Err(Error::format(format!(
                "{origin}: {} bytes is not a whole number of {CIFAR_RECORD_BYTES}-byte records",
                bytes.len()
            )));
        }
        let n = bytes.len() / CIFAR_RECORD_BYTES;
        let mut labels = Vec::with_capacity(n);
        let mut pixels = Vec::with_capacity(n * CIFAR_DIM);
        for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
            if rec[0] as usize >= CIFAR_CLASSES {
                return Err(Error::format(format!("{origin}: record {i} has label byte {}", rec[0])));
            }
            labels.push(rec[0]);
            pixels.extend_from_slice(&rec[1..]);
        }
        Ok(RawImages { labels, pixels })
    }

    /// Scales pixels to [0,1], standardizes each channel with `stats`, and
    /// keeps the images at `indices` (all of them when `None`).
    pub fn to_labeled_set(&self, stats: &ChannelStats, indices: Option<&[usize]>) -> Result<LabeledSet> {
        let all: Vec<usize>;
        let indices = match indices {
            Some(ix) => ix,
            None => {
                all = (0..self.len()).collect();
                &all
            }
        };
        let plane = CIFAR_SIDE * CIFAR_SIDE;
        let samples = indices
            .iter()
            .map(|&i| {
                if i >= self.len() {
                    return Err(Error::arg(format!("image index {i} out of range")));
                }
                let img = self.image(i);
                let features: Vec<f64> = img
                    .iter()
                    .enumerate()
                    .map(|(p, &v)| {
                        let ch = p / plane;
                        (v as f64 / 255.0 - stats.mean[ch]) / stats.std[ch]
                    })
                    .collect();
                Ok(Sample::new(features, self.labels[i] as usize))
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledSet::new(samples, CIFAR_DIM, CIFAR_CLASSES)
    }
}

/// Per-channel mean and population standard deviation of pixels scaled to [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; CIFAR_CHANNELS],
    pub std: [f64; CIFAR_CHANNELS],
}

impl ChannelStats {
    pub fn from_images(images: &RawImages) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::arg("cannot compute channel statistics of no images"));
        }
        let plane = CIFAR_SIDE * CIFAR_SIDE;
        let count = (images.len() * plane) as f64;
        let mut sum = [0u64; CIFAR_CHANNELS];
        let mut sum_sq = [0u64; CIFAR_CHANNELS];
        for i in 0..images.len() {
            for (ch, px) in images.image(i).chunks_exact(plane).enumerate() {
                for &v in px {
                    sum[ch] += v as u64;
                    sum_sq[ch] += (v as u64) * (v as u64);
                }
            }
        }
        // exact integer moments, then a single division
        let mut mean = [0.0; CIFAR_CHANNELS];
        let mut std = [0.0; CIFAR_CHANNELS];
        for ch in 0..CIFAR_CHANNELS {
            let m = sum[ch] as f64 / count;
            let var = sum_sq[ch] as f64 / count - m * m;
            mean[ch] = m / 255.0;
            std[ch] = var.max(0.0).sqrt() / 255.0;
            if std[ch] == 0.0 {
                std[ch] = 1.0;
            }
        }
        Ok(ChannelStats { mean, std })
    }
}

/// Reads every batch file of one side.
pub fn load_cifar10_raw(dir: &Path, side: Cifar10Side) -> Result<RawImages> {
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for name in side.files() {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let part = RawImages::parse(&bytes, &path.display().to_string())?;
        labels.extend(part.labels);
        pixels.extend(part.pixels);
    }
    Ok(RawImages { labels, pixels })
}

/// Loads one side, normalized with statistics of the training side.
pub fn load_cifar10(dir: &Path, side: Cifar10Side) -> Result<LabeledSet> {
    let train = load_cifar10_raw(dir, Cifar10Side::Train)?;
    let stats = ChannelStats::from_images(&train)?;
    match side {
        Cifar10Side::Train => train.to_labeled_set(&stats, None),
        Cifar10Side::Test => load_cifar10_raw(dir, Cifar10Side::Test)?.to_labeled_set(&stats, None),
    }
}
