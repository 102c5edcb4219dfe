//! IDX-format MNIST ingestion.

use crate::error::{Error, Result};
use crate::tasks::data::{ImageSet, IMAGE_SIDE};
use std::path::{Path, PathBuf};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Dataset root: $HPQS_DATA_ROOT or ./data.
pub fn dataset_root() -> PathBuf {
    std::env::var_os("HPQS_DATA_ROOT").map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::dataset(
                path.display().to_string(),
                "file not found; run scripts/prepare_mnist.py to fetch and convert the dataset, \
                 or point HPQS_DATA_ROOT at a directory containing mnist/ IDX files",
            )
        } else {
            Error::io(path.display().to_string(), e)
        }
    })
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    let end = at + 4;
    if bytes.len() < end {
        return Err(Error::dataset(path.display().to_string(), "truncated header"));
    }
    Ok(u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]))
}

/// Pixels of an IDX3 image file, normalized to [0,1], row-major per image.
pub fn load_idx_images(path: &Path) -> Result<(usize, Vec<f64>)> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::dataset(
            path.display().to_string(),
            format!("bad magic {magic:#010x}, expected {IMAGE_MAGIC:#010x} (IDX3 images)"),
        ));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::dataset(
            path.display().to_string(),
            format!("{rows}x{cols} images, expected {IMAGE_SIDE}x{IMAGE_SIDE}"),
        ));
    }
    let want = 16 + n * rows * cols;
    if bytes.len() != want {
        return Err(Error::dataset(
            path.display().to_string(),
            format!("{} bytes, expected {want} for {n} images", bytes.len()),
        ));
    }
    let pixels = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((n, pixels))
}

/// Labels of an IDX1 label file; every label must be a digit.
pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::dataset(
            path.display().to_string(),
            format!("bad magic {magic:#010x}, expected {LABEL_MAGIC:#010x} (IDX1 labels)"),
        ));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    if bytes.len() != 8 + n {
        return Err(Error::dataset(
            path.display().to_string(),
            format!("{} bytes, expected {} for {n} labels", bytes.len(), 8 + n),
        ));
    }
    let labels: Vec<usize> = bytes[8..].iter().map(|&b| b as usize).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::dataset(path.display().to_string(), format!("label {bad} out of range")));
    }
    Ok(labels)
}

pub fn load_split(images: &Path, labels: &Path) -> Result<ImageSet> {
    let (n, pixels) = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::dataset(
            images.display().to_string(),
            format!("{n} images but {} labels", labels.len()),
        ));
    }
    ImageSet::new(pixels, labels)
}

pub struct MnistPair {
    pub train: ImageSet,
    pub test: ImageSet,
}

/// Standard four-file layout under `<root>/mnist/`.
pub fn load_mnist(root: &Path) -> Result<MnistPair> {
    let dir = root.join("mnist");
    Ok(MnistPair {
        train: load_split(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?,
        test: load_split(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?,
    })
}
