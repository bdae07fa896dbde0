//! Deterministic synthetic dataset in the CIFAR-10 layout.
//!
//! Ten texture classes rendered at low contrast over random gradient
//! backgrounds with clutter blobs, positional jitter and per-channel gain
//! jitter, so class manifolds overlap the way photographs do and
//! classifiers get no free ceiling. Used by tests and smoke runs when the
//! real dataset is not on disk; generation is a pure function of
//! (seed, sample index).

use std::f32::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{LabeledImage, IMAGE_LEN, IMAGE_WIDTH};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

const W: usize = IMAGE_WIDTH;
const H: usize = super::IMAGE_HEIGHT;

/// Class texture in [-1, 1] at unit contrast.
fn texture(class: u8, x: f32, y: f32, jx: f32, jy: f32, phase: f32, freq: f32) -> f32 {
    match class {
        0 => (2.0 * PI * freq * (y + jy) / 8.0 + phase).sin(),
        1 => (2.0 * PI * freq * (x + jx) / 8.0 + phase).sin(),
        2 => (2.0 * PI * freq * (x + y + jx) / 11.0 + phase).sin(),
        3 | 4 => {
            let r = ((x - 16.0 - jx).powi(2) + (y - 16.0 - jy).powi(2)).sqrt();
            let inside = 2.0 / (1.0 + ((r - 9.0 * freq) / 1.5).exp()) - 1.0;
            if class == 3 {
                inside
            } else {
                -inside
            }
        }
        5 => {
            let cell = 5.0 * freq;
            let cx = ((x + jx) / cell).floor() as i32;
            let cy = ((y + jy) / cell).floor() as i32;
            if (cx + cy) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
        6 => {
            let r = ((x - 16.0 - jx).powi(2) + (y - 16.0 - jy).powi(2)).sqrt();
            (2.0 * PI * freq * r / 7.0 + phase).sin()
        }
        7 => (2.0 * PI * freq * (x - y + jx) / 11.0 + phase).sin(),
        8 => {
            let anchors = [(8.0, 8.0), (24.0, 10.0), (14.0, 24.0)];
            let mut v: f32 = -0.8;
            for (ax, ay) in anchors {
                let d2 = (x - ax - jx).powi(2) + (y - ay - jy).powi(2);
                v += 1.8 * (-d2 / (2.0 * (3.4 * freq).powi(2))).exp();
            }
            v.clamp(-1.0, 1.0)
        }
        _ => {
            let m = 5.0 + jx.abs();
            let edge = x.min(y).min(31.0 - x).min(31.0 - y);
            if (edge - m).abs() < 2.0 {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Per-class color tints; moderate, so color alone does not separate classes.
const TINTS: [[f32; 3]; 10] = [
    [1.0, 0.8, 0.8],
    [0.8, 1.0, 0.8],
    [0.8, 0.8, 1.0],
    [1.0, 0.95, 0.75],
    [0.75, 0.95, 1.0],
    [1.0, 0.8, 1.0],
    [0.95, 0.9, 0.8],
    [0.8, 0.9, 0.95],
    [0.9, 1.0, 0.85],
    [0.9, 0.9, 0.9],
];

fn synth_image(class: u8, rng: &mut ChaCha8Rng) -> Vec<f32> {
    // Background: a smooth gradient in a random direction.
    let bg_angle: f32 = rng.random_range(0.0..2.0 * PI);
    let (bx, by) = (bg_angle.cos(), bg_angle.sin());
    let bg_amp: f32 = rng.random_range(0.05..0.20);
    let bg_base: f32 = rng.random_range(0.38..0.55);
    // Class signal at low contrast. Jitter is mild so each class keeps a
    // stable mean spatial structure, the way photo classes do.
    let amp: f32 = rng.random_range(0.18..0.40);
    let jx: f32 = rng.random_range(-2.0..2.0);
    let jy: f32 = rng.random_range(-2.0..2.0);
    let phase: f32 = rng.random_range(-0.5..0.5);
    let freq: f32 = rng.random_range(0.9..1.15);
    // Clutter: a few soft blobs unrelated to the class.
    let blob_count = rng.random_range(1..=3usize);
    let blobs: Vec<(f32, f32, f32, f32)> = (0..blob_count)
        .map(|_| {
            (
                rng.random_range(0.0..31.0),
                rng.random_range(0.0..31.0),
                rng.random_range(2.5..6.0),
                rng.random_range(-0.30..0.32),
            )
        })
        .collect();

    let mut plane = vec![0.0f32; W * H];
    for y in 0..H {
        for x in 0..W {
            let (xf, yf) = (x as f32, y as f32);
            let along = (bx * (xf - 15.5) + by * (yf - 15.5)) / 15.5;
            let mut v = bg_base + bg_amp * along + amp * texture(class, xf, yf, jx, jy, phase, freq);
            for &(cx, cy, sigma, a) in &blobs {
                let d2 = (xf - cx).powi(2) + (yf - cy).powi(2);
                v += a * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            plane[y * W + x] = v;
        }
    }

    let mut pixels = Vec::with_capacity(IMAGE_LEN);
    for ch in 0..3 {
        let gain = TINTS[class as usize][ch] * rng.random_range(0.85..1.0);
        for &v in &plane {
            let noise: f32 = rng.random_range(-0.06..0.06);
            pixels.push((v * gain + noise).clamp(0.0, 1.0));
        }
    }
    pixels
}

/// Generate `per_class` samples of each of the ten classes, class-interleaved
/// so any prefix is class-balanced.
pub fn synthetic_dataset(per_class: usize, seed: u64) -> Vec<LabeledImage> {
    let mut images = Vec::with_capacity(per_class * 10);
    for rep in 0..per_class {
        for class in 0..10u8 {
            let id = (rep * 10 + class as usize) as u32;
            let mut rng = stream_rng(seed, id as u64);
            images.push(LabeledImage {
                pixels: synth_image(class, &mut rng),
                label: class,
                id,
            });
        }
    }
    images
}

/// Write images as standard CIFAR-10 binary batch files (five train batches
/// plus one test batch) under `dir`.
pub fn write_cifar_layout(dir: &Path, train: &[LabeledImage], test: &[LabeledImage]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let encode = |images: &[LabeledImage]| {
        let mut bytes = Vec::with_capacity(images.len() * (1 + IMAGE_LEN));
        for img in images {
            bytes.push(img.label);
            bytes.extend(img.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
        bytes
    };
    let per_batch = train.len().div_ceil(5).max(1);
    for (i, name) in super::Split::Train.batch_files().iter().enumerate() {
        let lo = (i * per_batch).min(train.len());
        let hi = ((i + 1) * per_batch).min(train.len());
        let path = dir.join(name);
        fs::write(&path, encode(&train[lo..hi])).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join("test_batch.bin");
    fs::write(&path, encode(test)).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_cifar10, Split};

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let a = synthetic_dataset(3, 9);
        let b = synthetic_dataset(3, 9);
        assert_eq!(a.len(), 30);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.pixels, y.pixels);
            assert!(x.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn round_trips_through_cifar_layout() {
        let dir = tempfile::tempdir().unwrap();
        let train = synthetic_dataset(2, 1);
        let test = synthetic_dataset(1, 2);
        write_cifar_layout(dir.path(), &train, &test).unwrap();
        let back = load_cifar10(dir.path(), Split::Train).unwrap();
        assert_eq!(back.len(), train.len());
        for (orig, loaded) in train.iter().zip(&back) {
            assert_eq!(orig.label, loaded.label);
            // Quantized to 8 bits on disk.
            for (a, b) in orig.pixels.iter().zip(&loaded.pixels) {
                assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
        assert_eq!(load_cifar10(dir.path(), Split::Test).unwrap().len(), 10);
    }
}
