//! Image-to-spike-train conversion.
//!
//! Each input element becomes one spike generator whose programmed rate maps
//! linearly from intensity, darker pixels spiking faster.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingMode {
    /// Bernoulli spiking at the programmed rate in every timestep.
    Poisson,
    /// Fixed inter-spike interval with a random initial phase.
    PeriodicRandomPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub mode: EncodingMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            f_min: 20.0,
            f_max: 200.0,
            mode: EncodingMode::Poisson,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max.is_finite()) {
            return Err(Error::Config("encoder: need 0 <= f_min < f_max".into()));
        }
        Ok(())
    }
}

/// An encoded image: one programmed spike frequency per input element.
#[derive(Debug, Clone)]
pub struct SpikeTrainSet {
    pub frequencies: Vec<f32>,
    pub mode: EncodingMode,
    pub f_min: f64,
    pub f_max: f64,
    pub seed: u64,
}

/// Map intensities in [0, 1] to spike frequencies:
/// `f = f_min + (1 - intensity) * (f_max - f_min)`.
pub fn encode_image(image: &[f32], config: &EncoderConfig, seed: u64) -> Result<SpikeTrainSet> {
    config.validate()?;
    let span = config.f_max - config.f_min;
    let mut frequencies = Vec::with_capacity(image.len());
    for (i, &v) in image.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("intensity {v} at element {i} outside [0, 1]")));
        }
        let f = config.f_min + (1.0 - v as f64) * span;
        frequencies.push(f.clamp(config.f_min, config.f_max) as f32);
    }
    Ok(SpikeTrainSet {
        frequencies,
        mode: config.mode,
        f_min: config.f_min,
        f_max: config.f_max,
        seed,
    })
}

impl SpikeTrainSet {
    pub fn train_count(&self) -> usize {
        self.frequencies.len()
    }

    /// Spike step indices of one train over `n_steps` steps of `dt_ms`.
    /// Each train draws from its own seed-derived stream, so realizations
    /// are independent of how many other trains exist.
    pub fn spike_steps_for(&self, train: usize, n_steps: u32, dt_ms: f64) -> Vec<u32> {
        let f = self.frequencies[train] as f64;
        let mut rng = stream_rng(self.seed, train as u64);
        let mut steps = Vec::new();
        match self.mode {
            EncodingMode::Poisson => {
                // Bernoulli-per-step process sampled through geometric gaps.
                let p = f * dt_ms / 1000.0;
                if p <= 0.0 {
                    return steps;
                }
                if p >= 1.0 {
                    return (0..n_steps).collect();
                }
                let ln_q = (1.0 - p).ln();
                let mut pos = -1.0f64;
                loop {
                    let u: f64 = rng.random();
                    let gap = 1.0 + ((1.0 - u).ln() / ln_q).floor();
                    pos += gap;
                    if pos >= n_steps as f64 {
                        return steps;
                    }
                    steps.push(pos as u32);
                }
            }
            EncodingMode::PeriodicRandomPhase => {
                if f <= 0.0 {
                    return steps;
                }
                let period_ms = 1000.0 / f;
                let mut t = rng.random::<f64>() * period_ms;
                let duration = n_steps as f64 * dt_ms;
                while t < duration {
                    let step = (t / dt_ms) as u32;
                    if steps.last() != Some(&step) {
                        steps.push(step.min(n_steps - 1));
                    }
                    t += period_ms;
                }
                steps
            }
        }
    }

    /// Per-step lists of spiking train indices (ascending within a step).
    pub fn spike_buckets(&self, n_steps: u32, dt_ms: f64) -> Vec<Vec<u32>> {
        let mut buckets = vec![Vec::new(); n_steps as usize];
        for train in 0..self.train_count() {
            for step in self.spike_steps_for(train, n_steps, dt_ms) {
                buckets[step as usize].push(train as u32);
            }
        }
        buckets
    }
}
