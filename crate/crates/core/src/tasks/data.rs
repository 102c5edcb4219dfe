//! In-memory image datasets shared by the training tasks.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// Labeled grayscale images with pixels already scaled into [0, 1].
#[derive(Debug, Clone)]
pub struct ImageSet {
    pixels: Vec<f64>,
    labels: Vec<usize>,
}

impl ImageSet {
    pub fn new(pixels: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() * IMAGE_PIXELS != pixels.len() {
            return Err(Error::dataset("memory", format!("{} pixels for {} labels", pixels.len(), labels.len())));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::dataset("memory", "pixel outside [0,1]"));
        }
        Ok(ImageSet { pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.pixels[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
    }

    /// Keep only the listed digits, remapping labels to their position in
    /// `digits` (so (3, 6) becomes classes 0 and 1).
    pub fn filter_digits(&self, digits: &[usize]) -> ImageSet {
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for i in 0..self.len() {
            if let Some(pos) = digits.iter().position(|&d| d == self.labels[i]) {
                pixels.extend_from_slice(self.image(i));
                labels.push(pos);
            }
        }
        ImageSet { pixels, labels }
    }

    /// Deterministic prefix subset.
    pub fn take(&self, limit: usize) -> ImageSet {
        let n = limit.min(self.len());
        ImageSet {
            pixels: self.pixels[..n * IMAGE_PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Row-major 4x4 average pooling: 16 features per image in [0, 1].
    pub fn features16(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.len() * 16);
        for i in 0..self.len() {
            let img = self.image(i);
            for by in 0..4 {
                for bx in 0..4 {
                    let mut acc = 0.0;
                    for y in 0..7 {
                        for x in 0..7 {
                            acc += img[(by * 7 + y) * IMAGE_SIDE + bx * 7 + x];
                        }
                    }
                    data.push(acc / 49.0);
                }
            }
        }
        Tensor::new(vec![self.len(), 16], data).expect("pooled feature shape")
    }

    /// [B, 1, 28, 28] tensor for the listed rows.
    pub fn image_batch(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * IMAGE_PIXELS);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::dataset("memory", format!("index {i} of {}", self.len())));
            }
            data.extend_from_slice(self.image(i));
        }
        Tensor::new(vec![indices.len(), 1, IMAGE_SIDE, IMAGE_SIDE], data)
    }

    pub fn label_batch(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Feature rows [B, 16] for the listed indices.
    pub fn feature_batch(&self, features: &Tensor, indices: &[usize]) -> Result<Tensor> {
        let cols = features.shape()[1];
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(&features.data()[i * cols..(i + 1) * cols]);
        }
        Tensor::new(vec![indices.len(), cols], data)
    }
}

/// Seeded epoch shuffle of 0..n.
pub fn shuffled_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed, "shuffle", &[epoch as u64]);
    idx.shuffle(&mut r);
    idx
}

/// Synthetic two-class image set for unit tests: class 0 bright in the top
/// half, class 1 bright in the bottom half, plus seeded noise.
pub fn synthetic_two_class(n: usize, seed: u64) -> ImageSet {
    let mut r = rng::stream(seed, "synthetic", &[]);
    let mut pixels = Vec::with_capacity(n * IMAGE_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        for y in 0..IMAGE_SIDE {
            for _x in 0..IMAGE_SIDE {
                let base = if (y < IMAGE_SIDE / 2) == (class == 0) { 0.8 } else { 0.1 };
                let noise: f64 = rand::Rng::random_range(&mut r, -0.1..0.1);
                pixels.push((base + noise).clamp(0.0, 1.0));
            }
        }
        labels.push(class);
    }
    ImageSet { pixels, labels }
}

/// Synthetic ten-class set for unit tests: each digit lights one of ten
/// horizontal bands.
pub fn synthetic_ten_class(n: usize, seed: u64) -> ImageSet {
    let mut r = rng::stream(seed, "synthetic10", &[]);
    let mut pixels = Vec::with_capacity(n * IMAGE_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 10;
        let band = class * 2 + 4; // rows 4..24
        for y in 0..IMAGE_SIDE {
            for _x in 0..IMAGE_SIDE {
                let base = if y >= band && y < band + 2 { 0.9 } else { 0.05 };
                let noise: f64 = rand::Rng::random_range(&mut r, -0.05..0.05);
                pixels.push((base + noise).clamp(0.0, 1.0));
            }
        }
        labels.push(class);
    }
    ImageSet { pixels, labels }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_is_row_major_blocks() {
        // One image: block (0,0) all ones, everything else zero.
        let mut pixels = vec![0.0; IMAGE_PIXELS];
        for y in 0..7 {
            for x in 0..7 {
                pixels[y * IMAGE_SIDE + x] = 1.0;
            }
        }
        let set = ImageSet::new(pixels, vec![0]).unwrap();
        let f = set.features16();
        assert_eq!(f.shape(), &[1, 16]);
        assert_eq!(f.data()[0], 1.0);
        assert!(f.data()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn filter_remaps_labels() {
        let set = synthetic_ten_class(30, 1);
        let pair = set.filter_digits(&[3, 6]);
        assert_eq!(pair.len(), 6);
        assert!(pair.labels().iter().all(|&l| l < 2));
        // Original digit 3 images got label 0.
        let f36 = set.filter_digits(&[6, 3]);
        assert_eq!(pair.labels()[0], 1 - f36.labels()[0]);
    }

    #[test]
    fn shuffle_is_seeded_and_complete() {
        let a = shuffled_indices(50, 7, 0);
        let b = shuffled_indices(50, 7, 0);
        let c = shuffled_indices(50, 7, 1);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn batch_extraction_shapes() {
        let set = synthetic_two_class(8, 2);
        let imgs = set.image_batch(&[0, 3, 5]).unwrap();
        assert_eq!(imgs.shape(), &[3, 1, 28, 28]);
        let feats = set.features16();
        let rows = set.feature_batch(&feats, &[1, 2]).unwrap();
        assert_eq!(rows.shape(), &[2, 16]);
        assert_eq!(set.label_batch(&[0, 1]), vec![0, 1]);
        assert!(set.image_batch(&[99]).is_err());
    }

    #[test]
    fn validation() {
        assert!(ImageSet::new(vec![0.5; IMAGE_PIXELS], vec![0, 1]).is_err());
        assert!(ImageSet::new(vec![2.0; IMAGE_PIXELS], vec![0]).is_err());
    }
}
