//! Stochastic spike-timing-dependent plasticity.
//!
//! Conductance moves by soft-bounded magnitudes and every move is gated by a
//! Bernoulli draw whose probability decays with the pre/post timing gap and
//! whose time constant stretches with the presynaptic train frequency.
//!
//! Two depression triggers exist, each toggleable for ablation:
//! * `ltd_on_silent` - at a postsynaptic spike, synapses with no presynaptic
//!   spike inside the potentiation window are depression candidates, with the
//!   gap measured to their most recent presynaptic spike.
//! * `ltd_on_pre_after_post` - a presynaptic spike arriving after the
//!   neuron's most recent postsynaptic spike is a depression candidate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledImage;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::snn::{encode_image, SnnModel};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct StdpParams {
    /// Potentiation magnitude scale.
    pub alpha_p: f64,
    /// Potentiation soft-bound exponent.
    pub beta_p: f64,
    /// Depression magnitude scale.
    pub alpha_d: f64,
    /// Depression soft-bound exponent.
    pub beta_d: f64,
    /// Conductance bounds.
    pub g_min: f64,
    pub g_max: f64,
    /// Potentiation timing window (ms).
    pub t_window: f64,
    /// Probability scale factors, in [0, 1].
    pub gamma_pot: f64,
    pub gamma_dep: f64,
    /// Probability time constants (ms).
    pub tau_pot: f64,
    pub tau_dep: f64,
    /// Frequency-modulation gains for the time constants.
    pub phi_pot: f64,
    pub phi_dep: f64,
    /// Input frequency bounds (Hz), shared with the encoder.
    pub f_min: f64,
    pub f_max: f64,
    /// Depression triggers (see module docs).
    pub ltd_on_silent: bool,
    pub ltd_on_pre_after_post: bool,
}

impl Default for StdpParams {
    fn default() -> Self {
        StdpParams {
            alpha_p: 0.01,
            beta_p: 3.0,
            alpha_d: 0.02,
            beta_d: 3.0,
            g_min: 0.0,
            g_max: 1.0,
            t_window: 20.0,
            gamma_pot: 0.5,
            gamma_dep: 0.5,
            tau_pot: 10.0,
            tau_dep: 40.0,
            phi_pot: 2.0,
            phi_dep: 2.0,
            f_min: 20.0,
            f_max: 200.0,
            // Pre-after-post depression defaults off: paired with saturating
            // potentiation it scales with input rate and inverts receptive
            // fields at high frequencies (see config notes).
            ltd_on_silent: true,
            ltd_on_pre_after_post: false,
        }
    }
}

impl StdpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_min < self.g_max) {
            return Err(Error::Config("stdp: g_min must be < g_max".into()));
        }
        if !(self.t_window > 0.0) {
            return Err(Error::Config("stdp: t_window must be > 0".into()));
        }
        if !(self.tau_pot > 0.0 && self.tau_dep > 0.0) {
            return Err(Error::Config("stdp: tau_pot and tau_dep must be > 0".into()));
        }
        for (name, g) in [("gamma_pot", self.gamma_pot), ("gamma_dep", self.gamma_dep)] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("stdp: {name} must be in [0, 1]")));
            }
        }
        if !(self.alpha_p >= 0.0 && self.alpha_d >= 0.0) {
            return Err(Error::Config("stdp: alpha values must be >= 0".into()));
        }
        if !(self.phi_pot >= 0.0 && self.phi_dep >= 0.0) {
            return Err(Error::Config("stdp: phi values must be >= 0".into()));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max) {
            return Err(Error::Config("stdp: need 0 <= f_min < f_max".into()));
        }
        Ok(())
    }

    fn check_g(&self, g: f64) -> Result<()> {
        if !(self.g_min..=self.g_max).contains(&g) {
            return Err(Error::Domain(format!(
                "conductance {g} outside [{}, {}]",
                self.g_min, self.g_max
            )));
        }
        Ok(())
    }

    fn frequency_fraction(&self, f: f64) -> Result<f64> {
        if !(self.f_min..=self.f_max).contains(&f) {
            return Err(Error::Domain(format!(
                "frequency {f} outside [{}, {}]",
                self.f_min, self.f_max
            )));
        }
        Ok((f - self.f_min) / (self.f_max - self.f_min))
    }

    /// Potentiation magnitude: alpha_p * exp(-beta_p * (g - g_min) / range).
    pub fn delta_g_pot(&self, g: f64) -> Result<f64> {
        self.check_g(g)?;
        let x = (g - self.g_min) / (self.g_max - self.g_min);
        Ok(self.alpha_p * (-self.beta_p * x).exp())
    }

    /// Depression magnitude: alpha_d * exp(-beta_d * (g_max - g) / range).
    pub fn delta_g_dep(&self, g: f64) -> Result<f64> {
        self.check_g(g)?;
        let x = (self.g_max - g) / (self.g_max - self.g_min);
        Ok(self.alpha_d * (-self.beta_d * x).exp())
    }

    /// Potentiation probability for a pre-then-post gap `delta_t >= 0` (ms)
    /// and presynaptic train frequency `f` (Hz).
    pub fn p_pot(&self, delta_t: f64, f: f64) -> Result<f64> {
        if delta_t < 0.0 {
            return Err(Error::Domain(format!("p_pot: delta_t {delta_t} < 0")));
        }
        let boost = self.phi_pot * self.frequency_fraction(f)?;
        let p = self.gamma_pot * (-delta_t / (self.tau_pot * (1.0 + boost))).exp();
        Ok(p.clamp(0.0, 1.0))
    }

    /// Depression probability. The paper-form exponent only yields a
    /// probability for post-then-pre gaps, so the magnitude of `delta_t`
    /// (stored as t_post - t_pre) is used.
    pub fn p_dep(&self, delta_t: f64, f: f64) -> Result<f64> {
        let boost = self.phi_dep * self.frequency_fraction(f)?;
        let p = self.gamma_dep * (-delta_t.abs() / (self.tau_dep * (1.0 + boost))).exp();
        Ok(p.clamp(0.0, 1.0))
    }
}

/// Plasticity events applied by one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateCounts {
    pub ltp: u32,
    pub ltd: u32,
}

/// Apply plasticity for one postsynaptic spike at `post_time`.
///
/// Synapses are visited in ascending index order. A synapse whose most
/// recent presynaptic spike falls inside `[post_time - t_window, post_time]`
/// is a potentiation candidate; otherwise, with `ltd_on_silent`, a synapse
/// that has ever fired is a depression candidate. One uniform draw is
/// consumed per candidate and none otherwise, so a scripted trace can replay
/// the exact RNG stream.
pub fn stdp_update(
    params: &StdpParams,
    g_row: &mut [f32],
    frequencies: &[f32],
    last_pre: &[f64],
    post_time: f64,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateCounts> {
    if g_row.len() != frequencies.len() || g_row.len() != last_pre.len() {
        return Err(Error::Shape {
            expected: g_row.len(),
            got: frequencies.len().min(last_pre.len()),
        });
    }
    let mut counts = UpdateCounts::default();
    for i in 0..g_row.len() {
        if !last_pre[i].is_finite() {
            continue; // never fired: no timing gap exists
        }
        let delta_t = post_time - last_pre[i];
        let g = g_row[i] as f64;
        if delta_t <= params.t_window {
            if rng.random::<f64>() < params.p_pot(delta_t, frequencies[i] as f64)? {
                g_row[i] = ((g + params.delta_g_pot(g)?) as f32).min(params.g_max as f32);
                counts.ltp += 1;
            }
        } else if params.ltd_on_silent
            && rng.random::<f64>() < params.p_dep(delta_t, frequencies[i] as f64)?
        {
            g_row[i] = ((g - params.delta_g_dep(g)?) as f32).max(params.g_min as f32);
            counts.ltd += 1;
        }
    }
    Ok(counts)
}

/// Depression candidate for a presynaptic spike at `pre_time` arriving after
/// the neuron's most recent postsynaptic spike. Consumes one draw when the
/// gate applies, none otherwise. Returns whether a depression was applied.
pub fn depress_on_pre_spike(
    params: &StdpParams,
    g: &mut f32,
    frequency: f64,
    last_post: f64,
    pre_time: f64,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    if !params.ltd_on_pre_after_post || !last_post.is_finite() || last_post >= pre_time {
        return Ok(false);
    }
    let delta_t = last_post - pre_time; // <= 0 by construction
    if rng.random::<f64>() < params.p_dep(delta_t, frequency)? {
        let old = *g as f64;
        *g = ((old - params.delta_g_dep(old)?) as f32).max(params.g_min as f32);
        return Ok(true);
    }
    Ok(false)
}

/// Seed conductance rows from randomly chosen training images: each row
/// becomes the inverted-intensity pattern of one image, scaled into the
/// middle of the conductance range. Label-free, like the rest of training;
/// gives each neuron a distinct initial preference so winner rotation can
/// bind neurons to recurring structure quickly at small presentation
/// budgets.
pub fn seed_from_samples(model: &mut SnnModel, images: &[LabeledImage], seed: u64) -> Result<()> {
    if images.is_empty() {
        return Err(Error::Config("seed_from_samples: empty dataset".into()));
    }
    let n = model.input_len();
    for img in images {
        if img.pixels.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: img.pixels.len(),
            });
        }
    }
    use rand::Rng;
    let stdp = model.stdp();
    let (g_min, g_max) = (stdp.g_min as f32, stdp.g_max as f32);
    let range = g_max - g_min;
    // Patterns span the middle half of the range; jitter keeps rows distinct
    // even when the same image is drawn twice.
    let mut rng = crate::rng::stream_rng(seed, 0);
    for j in 0..model.neuron_count() {
        let pick = rng.random_range(0..images.len());
        let pixels = images[pick].pixels.clone();
        let row = model.g_row_mut(j);
        for (g, &x) in row.iter_mut().zip(&pixels) {
            let jitter: f32 = rng.random_range(-0.02..0.02);
            *g = (g_min + range * (0.3 + 0.4 * (1.0 - x) + jitter)).clamp(g_min, g_max);
        }
    }
    Ok(())
}

/// Per-epoch training log line.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_conductance: f64,
    pub mean_spikes_per_presentation: f64,
}

/// Unsupervised training: present every image for `duration_ms` with
/// learning on, resetting neuron state between presentations. Labels are
/// ignored. Deterministic given the seed.
pub fn train_unsupervised(
    model: &mut SnnModel,
    images: &[LabeledImage],
    epochs: usize,
    duration_ms: f64,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    for img in images {
        if img.pixels.len() != model.input_len() {
            return Err(Error::Shape {
                expected: model.input_len(),
                got: img.pixels.len(),
            });
        }
    }
    let mut log = Vec::with_capacity(epochs);
    // Threshold offsets persist across presentations within this run only.
    let mut theta = vec![0.0f64; model.neuron_count()];
    for epoch in 0..epochs {
        let epoch_seed = derive_seed(seed, epoch as u64);
        let mut total_spikes: u64 = 0;
        for (idx, img) in images.iter().enumerate() {
            let pseed = derive_seed(epoch_seed, idx as u64);
            let spikes = encode_image(&img.pixels, &model.encoder(), derive_seed(pseed, 0))?;
            let trace =
                model.present_adaptive(&spikes, duration_ms, true, derive_seed(pseed, 1), &mut theta)?;
            total_spikes += trace.total_spikes() as u64;
        }
        log.push(EpochStats {
            epoch,
            mean_conductance: model.mean_conductance(),
            mean_spikes_per_presentation: total_spikes as f64 / images.len().max(1) as f64,
        });
    }
    Ok(log)
}
