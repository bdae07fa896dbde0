//! Dataset ingestion, image export and portable serialization.
//!
//! Images are flat channel-major vectors (red plane, green plane, blue plane,
//! row-major within each plane), matching the CIFAR-10 binary layout. 2-D
//! views are computed where needed, never stored.

mod synthetic;
mod tensor;

pub use synthetic::{synthetic_dataset, write_cifar_layout};
pub use tensor::{load_tensor, read_container, save_tensor, write_container, TensorHeader, MAGIC};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGE_WIDTH: usize = 32;
pub const IMAGE_HEIGHT: usize = 32;
pub const IMAGE_CHANNELS: usize = 3;
/// Elements per image: 32 x 32 x 3.
pub const IMAGE_LEN: usize = IMAGE_WIDTH * IMAGE_HEIGHT * IMAGE_CHANNELS;
pub const CLASS_COUNT: usize = 10;
const RECORD_BYTES: usize = 1 + IMAGE_LEN;

/// One dataset sample: intensities in [0, 1], a class label and a stable id.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub pixels: Vec<f32>,
    pub label: u8,
    pub id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn batch_files(self) -> &'static [&'static str] {
        match self {
            Split::Train => &[
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            Split::Test => &["test_batch.bin"],
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Load one CIFAR-10 binary batch file. Each record is one label byte
/// followed by 3072 pixel bytes; pixels are scaled to [0, 1] by /255.
/// Ids are assigned sequentially starting at `first_id`.
pub fn load_cifar10_batch(path: &Path, first_id: u32) -> Result<Vec<LabeledImage>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % RECORD_BYTES != 0 {
        let offset = (bytes.len() / RECORD_BYTES * RECORD_BYTES) as u64;
        return Err(Error::format(
            path,
            offset,
            format!(
                "file length {} is not a multiple of the {}-byte record size",
                bytes.len(),
                RECORD_BYTES
            ),
        ));
    }
    let mut images = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    for (rec, chunk) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let label = chunk[0];
        if label as usize >= CLASS_COUNT {
            return Err(Error::format(
                path,
                (rec * RECORD_BYTES) as u64,
                format!("label {label} out of range"),
            ));
        }
        let pixels = chunk[1..].iter().map(|&b| b as f32 / 255.0).collect();
        images.push(LabeledImage {
            pixels,
            label,
            id: first_id + rec as u32,
        });
    }
    Ok(images)
}

/// Load a CIFAR-10 split from a directory holding the standard binary
/// batch files. Record order is preserved and ids are sequential across
/// batches.
pub fn load_cifar10(dir: &Path, split: Split) -> Result<Vec<LabeledImage>> {
    let mut images = Vec::new();
    for name in split.batch_files() {
        let batch = load_cifar10_batch(&dir.join(name), images.len() as u32)?;
        images.extend(batch);
    }
    Ok(images)
}

fn to_rgb8(pixels: &[f32], width: usize, height: usize) -> Result<Vec<u8>> {
    let plane = width * height;
    if pixels.len() != plane * IMAGE_CHANNELS {
        return Err(Error::Shape {
            expected: plane * IMAGE_CHANNELS,
            got: pixels.len(),
        });
    }
    let quantize = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut rgb = Vec::with_capacity(plane * 3);
    for i in 0..plane {
        rgb.push(quantize(pixels[i]));
        rgb.push(quantize(pixels[plane + i]));
        rgb.push(quantize(pixels[2 * plane + i]));
    }
    Ok(rgb)
}

/// Export a channel-major image or template as binary PPM (P6, 8-bit).
pub fn save_ppm(path: &Path, pixels: &[f32], width: usize, height: usize) -> Result<()> {
    let rgb = to_rgb8(pixels, width, height)?;
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&rgb);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Export a channel-major image or template as 8-bit PNG.
pub fn save_png(path: &Path, pixels: &[f32], width: usize, height: usize) -> Result<()> {
    let rgb = to_rgb8(pixels, width, height)?;
    let img = image::RgbImage::from_raw(width as u32, height as u32, rgb)
        .expect("buffer length checked above");
    img.save(path)
        .map_err(|e| Error::format(path, 0, format!("png encode: {e}")))
}
