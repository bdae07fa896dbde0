//! Inference-time input perturbations: calibrated Gaussian noise and a
//! parametric rain-streak renderer. Nothing in the learning or classifier
//! training paths accepts these; perturbations exist only for evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rain streak parameters. Ranges are sampled per streak (count once per
/// image); angles are degrees from the horizontal axis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RainPreset {
    pub count: (u32, u32),
    pub length_px: (f64, f64),
    pub angle_deg: (f64, f64),
    pub brightness: (f64, f64),
    pub alpha: (f64, f64),
}

impl RainPreset {
    /// Covers roughly 2-5% of pixels at 32x32.
    pub fn light() -> Self {
        RainPreset {
            count: (2, 4),
            length_px: (4.0, 8.0),
            angle_deg: (70.0, 110.0),
            brightness: (0.8, 1.0),
            alpha: (0.4, 0.8),
        }
    }

    /// Covers roughly 10-20% of pixels at 32x32.
    pub fn heavy() -> Self {
        RainPreset {
            count: (7, 13),
            length_px: (6.0, 12.0),
            angle_deg: (70.0, 110.0),
            brightness: (0.8, 1.0),
            alpha: (0.4, 0.8),
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "light" => Ok(Self::light()),
            "heavy" => Ok(Self::heavy()),
            other => Err(Error::Config(format!("unknown rain preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo <= hi && lo.is_finite() && hi.is_finite();
        if self.count.0 > self.count.1 {
            return Err(Error::Config("rain count range is reversed".into()));
        }
        if !ordered(self.length_px) || self.length_px.0 < 0.0 {
            return Err(Error::Config("bad rain length range".into()));
        }
        if !ordered(self.angle_deg) {
            return Err(Error::Config("bad rain angle range".into()));
        }
        if !ordered(self.brightness) {
            return Err(Error::Config("bad rain brightness range".into()));
        }
        if !ordered(self.alpha) || self.alpha.0 < 0.0 || self.alpha.1 > 1.0 {
            return Err(Error::Config("rain alpha must stay within [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PerturbationKind {
    Awgn { snr_db: f64 },
    Rain { preset: RainPreset },
}

/// A perturbation to apply at inference time, with its own seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PerturbationSpec {
    #[serde(flatten)]
    pub kind: PerturbationKind,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn awgn(snr_db: f64, seed: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::Config("awgn snr_db must be finite".into()));
        }
        Ok(PerturbationSpec {
            kind: PerturbationKind::Awgn { snr_db },
            seed,
        })
    }

    pub fn rain(preset: RainPreset, seed: u64) -> Result<Self> {
        preset.validate()?;
        Ok(PerturbationSpec {
            kind: PerturbationKind::Rain { preset },
            seed,
        })
    }

    /// Apply to a channel-major image of `width` x `height` x 3.
    pub fn apply(&self, image: &[f32], width: usize, height: usize) -> Result<Vec<f32>> {
        match &self.kind {
            PerturbationKind::Awgn { snr_db } => add_awgn(image, *snr_db, self.seed),
            PerturbationKind::Rain { preset } => {
                synthesize_rain(image, width, height, preset, self.seed)
            }
        }
    }
}

/// Additive white Gaussian noise at an exact pre-clipping SNR.
///
/// Signal power is the mean squared pixel value over all channels. The
/// realized noise field is rescaled so the requested SNR holds exactly
/// before the final clip to [0, 1]. `snr_db = +inf` means "clean" and
/// returns the image unchanged.
pub fn add_awgn(image: &[f32], snr_db: f64, seed: u64) -> Result<Vec<f32>> {
    if image.is_empty() {
        return Err(Error::Domain("awgn: empty image".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(image.to_vec());
    }
    if !snr_db.is_finite() {
        return Err(Error::Domain("awgn: snr_db must be finite or +inf".into()));
    }
    let n = image.len();
    let signal_power: f64 = image.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / n as f64;
    if signal_power == 0.0 {
        return Err(Error::Domain("awgn: all-zero image has undefined SNR".into()));
    }
    let sigma = (signal_power / 10f64.powf(snr_db / 10.0)).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let sum_sq: f64 = raw.iter().map(|z| z * z).sum();
    if sum_sq == 0.0 {
        return Err(Error::Numeric("awgn: degenerate noise draw".into()));
    }
    // Normalize the realization so mean(noise^2) == sigma^2 exactly.
    let scale = sigma * (n as f64 / sum_sq).sqrt();
    Ok(image
        .iter()
        .zip(&raw)
        .map(|(&v, z)| ((v as f64 + z * scale) as f32).clamp(0.0, 1.0))
        .collect())
}

/// Measured SNR in dB between a clean and a perturbed image; +inf when the
/// two are identical.
pub fn measure_snr(clean: &[f32], perturbed: &[f32]) -> Result<f64> {
    if clean.len() != perturbed.len() {
        return Err(Error::Shape {
            expected: clean.len(),
            got: perturbed.len(),
        });
    }
    let signal: f64 = clean.iter().map(|&v| (v as f64) * (v as f64)).sum();
    let noise: f64 = clean
        .iter()
        .zip(perturbed)
        .map(|(&c, &p)| {
            let d = p as f64 - c as f64;
            d * d
        })
        .sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Render rain streaks onto a channel-major image.
///
/// Streaks are anti-aliased segments blended as
/// `pixel <- (1 - a) * pixel + a * brightness` with `a` scaled by pixel
/// coverage; untouched pixels are bit-identical to the input.
pub fn synthesize_rain(
    image: &[f32],
    width: usize,
    height: usize,
    preset: &RainPreset,
    seed: u64,
) -> Result<Vec<f32>> {
    preset.validate()?;
    let plane = width * height;
    if image.len() != plane * 3 {
        return Err(Error::Shape {
            expected: plane * 3,
            got: image.len(),
        });
    }
    let mut out = image.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let streaks = rng.random_range(preset.count.0..=preset.count.1);

    let mut coverage = vec![0.0f32; plane];
    let mut touched: Vec<usize> = Vec::new();
    for _ in 0..streaks {
        let cx: f64 = rng.random_range(0.0..width as f64);
        let cy: f64 = rng.random_range(0.0..height as f64);
        let len = sample_range(&mut rng, preset.length_px);
        let angle = sample_range(&mut rng, preset.angle_deg).to_radians();
        let brightness = sample_range(&mut rng, preset.brightness) as f32;
        let alpha = sample_range(&mut rng, preset.alpha) as f32;

        let (dx, dy) = (angle.cos(), angle.sin());
        let steps = (len * 4.0).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64 - 0.5;
            let px = cx + t * len * dx;
            let py = cy + t * len * dy;
            splat(px, py, width, height, &mut coverage, &mut touched);
        }
        for &idx in &touched {
            let a = alpha * coverage[idx].min(1.0);
            for ch in 0..3 {
                let p = &mut out[ch * plane + idx];
                *p = ((1.0 - a) * *p + a * brightness).clamp(0.0, 1.0);
            }
            coverage[idx] = 0.0;
        }
        touched.clear();
    }
    Ok(out)
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Bilinear splat of one sample point; coverage per pixel is the max over
/// samples so repeated samples along the segment do not over-count.
fn splat(px: f64, py: f64, width: usize, height: usize, coverage: &mut [f32], touched: &mut Vec<usize>) {
    let x0 = px.floor();
    let y0 = py.floor();
    let fx = (px - x0) as f32;
    let fy = (py - y0) as f32;
    for (ox, oy, w) in [
        (0i64, 0i64, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        let x = x0 as i64 + ox;
        let y = y0 as i64 + oy;
        if w > 0.0 && (0..width as i64).contains(&x) && (0..height as i64).contains(&y) {
            let idx = y as usize * width + x as usize;
            if coverage[idx] == 0.0 {
                touched.push(idx);
            }
            coverage[idx] = coverage[idx].max(w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::IMAGE_LEN;
    use crate::rng::stream_rng;

    fn test_image(seed: u64) -> Vec<f32> {
        let mut rng = stream_rng(seed, 0);
        (0..IMAGE_LEN).map(|_| rng.random_range(0.05..0.95)).collect()
    }

    #[test]
    fn infinite_snr_is_identity() {
        let img = test_image(1);
        assert_eq!(add_awgn(&img, f64::INFINITY, 3).unwrap(), img);
    }

    #[test]
    fn awgn_rejects_all_zero_image() {
        assert!(matches!(
            add_awgn(&[0.0; 16], 20.0, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn awgn_is_deterministic_per_seed() {
        let img = test_image(2);
        assert_eq!(add_awgn(&img, 20.0, 7).unwrap(), add_awgn(&img, 20.0, 7).unwrap());
        assert_ne!(add_awgn(&img, 20.0, 7).unwrap(), add_awgn(&img, 20.0, 8).unwrap());
    }

    #[test]
    fn preclip_snr_matches_target() {
        // Regenerate the exact unclipped noise field and measure it.
        let img = test_image(3);
        for snr in [40.0, 25.0, 12.0] {
            let noisy = add_awgn(&img, snr, 11).unwrap();
            // At 12 dB and intensities in [0.05, 0.95] clipping can bite, so
            // measure against the unclipped sum instead of the stored image.
            let unclipped: Vec<f32> = {
                let n = img.len();
                let signal_power: f64 =
                    img.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n as f64;
                let sigma = (signal_power / 10f64.powf(snr / 10.0)).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(11);
                let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let sum_sq: f64 = raw.iter().map(|z| z * z).sum();
                let scale = sigma * (n as f64 / sum_sq).sqrt();
                img.iter()
                    .zip(&raw)
                    .map(|(&v, z)| (v as f64 + z * scale) as f32)
                    .collect()
            };
            let measured = measure_snr(&img, &unclipped).unwrap();
            assert!(
                (measured - snr).abs() < 0.2,
                "snr {snr}: measured {measured}"
            );
            // And the clipped output stays in range.
            assert!(noisy.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn measure_snr_hand_example() {
        // Ratio of powers is (0.5 / 0.05)^2 = 100 -> 20 dB.
        let clean = vec![0.5f32; IMAGE_LEN];
        let noisy: Vec<f32> = clean
            .iter()
            .enumerate()
            .map(|(i, &v)| if i % 2 == 0 { v + 0.05 } else { v - 0.05 })
            .collect();
        let snr = measure_snr(&clean, &noisy).unwrap();
        assert!((snr - 20.0).abs() < 1e-5, "got {snr}");
        assert_eq!(measure_snr(&clean, &clean).unwrap(), f64::INFINITY);
    }

    #[test]
    fn lower_snr_means_larger_distortion() {
        let img = test_image(4);
        let mut last = 0.0;
        for snr in [40.0, 30.0, 20.0, 10.0] {
            let noisy = add_awgn(&img, snr, 5).unwrap();
            let l2: f64 = img
                .iter()
                .zip(&noisy)
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum();
            assert!(l2 > last, "distortion not increasing at {snr} dB");
            last = l2;
        }
    }

    #[test]
    fn noise_field_is_white() {
        let img = vec![0.5f32; IMAGE_LEN];
        let noisy = add_awgn(&img, 20.0, 9).unwrap();
        let noise: Vec<f64> = img
            .iter()
            .zip(&noisy)
            .map(|(&c, &p)| p as f64 - c as f64)
            .collect();
        let n = noise.len();
        let mean = noise.iter().sum::<f64>() / n as f64;
        let var: f64 = noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        for lag in 1..=4 {
            let mut acc = 0.0;
            for i in 0..n - lag {
                acc += (noise[i] - mean) * (noise[i + lag] - mean);
            }
            let r = acc / ((n - lag) as f64 * var);
            assert!(
                r.abs() < 4.0 / (n as f64).sqrt(),
                "lag {lag} autocorrelation {r}"
            );
        }
    }

    #[test]
    fn empty_count_range_leaves_image_unchanged() {
        let img = test_image(5);
        let preset = RainPreset {
            count: (0, 0),
            ..RainPreset::light()
        };
        assert_eq!(synthesize_rain(&img, 32, 32, &preset, 3).unwrap(), img);
    }

    #[test]
    fn rain_is_local_and_in_range() {
        let img = test_image(6);
        let out = synthesize_rain(&img, 32, 32, &RainPreset::heavy(), 17).unwrap();
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        let plane = 32 * 32;
        let mut any_touched = false;
        for i in 0..plane {
            let touched = (0..3).any(|ch| out[ch * plane + i] != img[ch * plane + i]);
            if touched {
                any_touched = true;
            } else {
                // Untouched pixels are bit-identical on every channel.
                for ch in 0..3 {
                    assert_eq!(out[ch * plane + i].to_bits(), img[ch * plane + i].to_bits());
                }
            }
        }
        assert!(any_touched);
    }

    fn mean_coverage(preset: &RainPreset, seeds: std::ops::Range<u64>) -> f64 {
        let img = vec![0.2f32; IMAGE_LEN];
        let plane = 32 * 32;
        let mut total = 0.0;
        let count = seeds.end - seeds.start;
        for seed in seeds {
            let out = synthesize_rain(&img, 32, 32, preset, seed).unwrap();
            let touched = (0..plane)
                .filter(|&i| (0..3).any(|ch| out[ch * plane + i] != img[ch * plane + i]))
                .count();
            total += touched as f64 / plane as f64;
        }
        total / count as f64
    }

    #[test]
    fn heavy_rain_covers_more_than_light() {
        let light = mean_coverage(&RainPreset::light(), 0..100);
        let heavy = mean_coverage(&RainPreset::heavy(), 0..100);
        assert!(heavy > light, "heavy {heavy} <= light {light}");
        // Calibrated coverage bands.
        assert!((0.02..=0.05).contains(&light), "light coverage {light}");
        assert!((0.10..=0.20).contains(&heavy), "heavy coverage {heavy}");
    }

    #[test]
    fn rain_rejects_bad_shape() {
        assert!(matches!(
            synthesize_rain(&[0.0; 10], 32, 32, &RainPreset::light(), 1),
            Err(Error::Shape { .. })
        ));
    }
}
