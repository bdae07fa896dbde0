//! Three-level spiking network: spike-train encoder, a fully connected layer
//! of LIF neurons with plastic input synapses, and a lateral-inhibition
//! layer that suppresses all peers whenever a neuron fires.

mod encoder;
mod lif;

pub use encoder::{encode_image, EncoderConfig, EncodingMode, SpikeTrainSet};
pub use lif::{current_from_active, step_lif, synaptic_current, LifNeuronState, LifParams};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_container, write_container};
use crate::error::{Error, Result};
use crate::plasticity::{depress_on_pre_spike, stdp_update, StdpParams};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InhibitionParams {
    /// Freeze duration after an inhibitory signal (ms).
    pub t_inh: f64,
    /// Potential decrement applied once at inhibition onset.
    pub dv_inh: f64,
}

impl Default for InhibitionParams {
    fn default() -> Self {
        InhibitionParams {
            t_inh: 15.0,
            dv_inh: 100.0,
        }
    }
}

impl InhibitionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_inh >= 0.0 && self.dv_inh >= 0.0) {
            return Err(Error::Config("inhibition: t_inh and dv_inh must be >= 0".into()));
        }
        Ok(())
    }
}

/// Slow per-neuron threshold adaptation used during unsupervised training.
///
/// Lateral inhibition alone lets one strong neuron win every presentation,
/// which collapses learning onto a single receptive field. Raising a
/// neuron's effective threshold by `theta_plus` at each of its spikes and
/// letting the offset decay with time constant `tau_theta_ms` rotates wins
/// across the population. The offsets are training state, reset at the
/// start of every training run and never serialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomeostasisParams {
    pub enabled: bool,
    pub theta_plus: f64,
    pub tau_theta_ms: f64,
}

impl Default for HomeostasisParams {
    fn default() -> Self {
        HomeostasisParams {
            enabled: true,
            theta_plus: 3.0,
            tau_theta_ms: 1500.0,
        }
    }
}

impl HomeostasisParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_plus >= 0.0 && self.tau_theta_ms > 0.0) {
            return Err(Error::Config(
                "homeostasis: theta_plus must be >= 0 and tau_theta_ms > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Spike times recorded for one presentation.
#[derive(Debug, Clone)]
pub struct PresentationTrace {
    pub dt: f64,
    /// Per-neuron spike step indices.
    pub spike_steps: Vec<Vec<u32>>,
    /// Per-neuron, per-step membrane potential; populated only when the
    /// presentation was run with recording enabled.
    pub potentials: Option<Vec<Vec<f64>>>,
}

impl PresentationTrace {
    pub fn spike_counts(&self) -> Vec<u32> {
        self.spike_steps.iter().map(|s| s.len() as u32).collect()
    }

    pub fn total_spikes(&self) -> u32 {
        self.spike_steps.iter().map(|s| s.len() as u32).sum()
    }

    pub fn spike_times_ms(&self, neuron: usize) -> Vec<f64> {
        self.spike_steps[neuron]
            .iter()
            .map(|&s| s as f64 * self.dt)
            .collect()
    }
}

/// Everything about a model except its learned conductances.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnnHyperparams {
    pub lif: LifParams,
    pub inhibition: InhibitionParams,
    pub stdp: StdpParams,
    pub encoder: EncoderConfig,
    pub homeostasis: HomeostasisParams,
}

impl SnnHyperparams {
    pub fn validate(&self) -> Result<()> {
        self.lif.validate()?;
        self.inhibition.validate()?;
        self.stdp.validate()?;
        self.encoder.validate()?;
        self.homeostasis.validate()?;
        if self.stdp.f_min != self.encoder.f_min || self.stdp.f_max != self.encoder.f_max {
            return Err(Error::Config(
                "snn: stdp and encoder frequency bounds must match".into(),
            ));
        }
        Ok(())
    }
}

/// The learned state: one conductance row per neuron over all inputs, plus
/// every hyperparameter needed to reproduce encoding and simulation.
#[derive(Debug, Clone)]
pub struct SnnModel {
    neuron_count: usize,
    input_len: usize,
    /// Row-major, neuron-major conductances, each in [g_min, g_max].
    g: Vec<f32>,
    params: SnnHyperparams,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnnModelHeader {
    kind: String,
    format_version: u32,
    neuron_count: usize,
    input_len: usize,
    #[serde(flatten)]
    params: SnnHyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

impl SnnModel {
    /// Build an untrained model with conductances drawn uniformly from the
    /// middle fifth of the allowed range.
    pub fn new(
        neuron_count: usize,
        input_len: usize,
        params: SnnHyperparams,
        init_seed: u64,
    ) -> Result<Self> {
        if neuron_count == 0 || input_len == 0 {
            return Err(Error::Config("snn: neuron_count and input_len must be > 0".into()));
        }
        params.validate()?;
        use rand::Rng;
        let mut rng = stream_rng(init_seed, 0);
        let range = params.stdp.g_max - params.stdp.g_min;
        let (lo, hi) = (params.stdp.g_min + 0.4 * range, params.stdp.g_min + 0.6 * range);
        let g = (0..neuron_count * input_len)
            .map(|_| rng.random_range(lo..hi) as f32)
            .collect();
        Ok(SnnModel {
            neuron_count,
            input_len,
            g,
            params,
        })
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn hyperparams(&self) -> SnnHyperparams {
        self.params
    }

    pub fn lif(&self) -> LifParams {
        self.params.lif
    }

    pub fn inhibition(&self) -> InhibitionParams {
        self.params.inhibition
    }

    pub fn stdp(&self) -> StdpParams {
        self.params.stdp
    }

    pub fn encoder(&self) -> EncoderConfig {
        self.params.encoder
    }

    pub fn homeostasis(&self) -> HomeostasisParams {
        self.params.homeostasis
    }

    pub fn g_row(&self, neuron: usize) -> &[f32] {
        &self.g[neuron * self.input_len..(neuron + 1) * self.input_len]
    }

    pub fn conductances(&self) -> &[f32] {
        &self.g
    }

    pub(crate) fn g_row_mut(&mut self, neuron: usize) -> &mut [f32] {
        &mut self.g[neuron * self.input_len..(neuron + 1) * self.input_len]
    }

    pub fn mean_conductance(&self) -> f64 {
        self.g.iter().map(|&v| v as f64).sum::<f64>() / self.g.len() as f64
    }

    #[cfg(test)]
    pub(crate) fn set_conductances(&mut self, g: Vec<f32>) {
        assert_eq!(g.len(), self.neuron_count * self.input_len);
        self.g = g;
    }

    /// Present an encoded image for `duration_ms`, applying plasticity when
    /// `learning` is on. Neuron state is fresh at every call; only the
    /// conductances persist.
    pub fn present(
        &mut self,
        spikes: &SpikeTrainSet,
        duration_ms: f64,
        learning: bool,
        seed: u64,
    ) -> Result<PresentationTrace> {
        let params = SimParams::of(self, spikes, duration_ms)?;
        run_sim(params, &mut self.g, spikes, learning, seed, false, None)
    }

    /// Presentation with persistent per-neuron threshold offsets, carried
    /// across presentations by the training loop.
    pub fn present_adaptive(
        &mut self,
        spikes: &SpikeTrainSet,
        duration_ms: f64,
        learning: bool,
        seed: u64,
        theta: &mut [f64],
    ) -> Result<PresentationTrace> {
        if theta.len() != self.neuron_count {
            return Err(Error::Shape {
                expected: self.neuron_count,
                got: theta.len(),
            });
        }
        let params = SimParams::of(self, spikes, duration_ms)?;
        run_sim(params, &mut self.g, spikes, learning, seed, false, Some(theta))
    }

    /// Read-only presentation: same dynamics with learning off.
    pub fn respond(
        &self,
        spikes: &SpikeTrainSet,
        duration_ms: f64,
        seed: u64,
    ) -> Result<PresentationTrace> {
        let params = SimParams::of(self, spikes, duration_ms)?;
        let mut g = self.g.clone();
        run_sim(params, &mut g, spikes, false, seed, false, None)
    }

    /// Presentation with the per-step membrane trajectory recorded; used by
    /// diagnostics and tests.
    pub fn present_recorded(
        &mut self,
        spikes: &SpikeTrainSet,
        duration_ms: f64,
        learning: bool,
        seed: u64,
    ) -> Result<PresentationTrace> {
        let params = SimParams::of(self, spikes, duration_ms)?;
        run_sim(params, &mut self.g, spikes, learning, seed, true, None)
    }

    pub fn save(&self, path: &Path, seed: Option<u64>, config_hash: Option<String>) -> Result<()> {
        let header = SnnModelHeader {
            kind: "snn_model".to_owned(),
            format_version: 1,
            neuron_count: self.neuron_count,
            input_len: self.input_len,
            params: self.params,
            seed,
            config_hash,
        };
        write_container(path, &header, &self.g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, g): (SnnModelHeader, Vec<f32>) = read_container(path, |h: &SnnModelHeader| {
            if h.kind != "snn_model" {
                return Err(Error::format(path, 8, format!("kind {:?} is not snn_model", h.kind)));
            }
            if h.format_version != 1 {
                return Err(Error::format(
                    path,
                    8,
                    format!("unsupported format version {}", h.format_version),
                ));
            }
            Ok(h.neuron_count * h.input_len)
        })?;
        let model = SnnModel {
            neuron_count: header.neuron_count,
            input_len: header.input_len,
            g,
            params: header.params,
        };
        model.params.validate()?;
        let (lo, hi) = (model.params.stdp.g_min as f32, model.params.stdp.g_max as f32);
        if model.g.iter().any(|&v| !(lo..=hi).contains(&v)) {
            return Err(Error::format(path, 8, "conductance outside bounds"));
        }
        Ok(model)
    }
}

/// Validated scalar parameters for one simulation run.
#[derive(Clone, Copy)]
struct SimParams {
    d: usize,
    n: usize,
    n_steps: u32,
    lif: LifParams,
    inhibition: InhibitionParams,
    stdp: StdpParams,
    homeostasis: HomeostasisParams,
}

impl SimParams {
    fn of(model: &SnnModel, spikes: &SpikeTrainSet, duration_ms: f64) -> Result<Self> {
        if spikes.train_count() != model.input_len {
            return Err(Error::Shape {
                expected: model.input_len,
                got: spikes.train_count(),
            });
        }
        let dt = model.params.lif.dt;
        if !(duration_ms > 0.0) {
            return Err(Error::Config("presentation duration must be > 0".into()));
        }
        let n_steps = (duration_ms / dt).round();
        if (n_steps * dt - duration_ms).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "duration {duration_ms} ms is not a multiple of dt {dt} ms"
            )));
        }
        Ok(SimParams {
            d: model.neuron_count,
            n: model.input_len,
            n_steps: n_steps as u32,
            lif: model.params.lif,
            inhibition: model.params.inhibition,
            stdp: model.params.stdp,
            homeostasis: model.params.homeostasis,
        })
    }
}

/// Time-stepped simulation of all neurons.
///
/// Step order: presynaptic pulses land (updating last-pre times), then
/// neurons integrate and fire in ascending index order (a spike immediately
/// inhibits every other neuron, so later-indexed neurons are already frozen
/// within the same step), then plasticity runs on the conductances as they
/// were when the step's currents were computed. Each neuron owns an
/// independent RNG stream, so plasticity can be replayed or parallelized
/// without changing results.
fn run_sim(
    p: SimParams,
    g: &mut [f32],
    spikes: &SpikeTrainSet,
    learning: bool,
    seed: u64,
    record_potentials: bool,
    theta: Option<&mut [f64]>,
) -> Result<PresentationTrace> {
    let buckets = spikes.spike_buckets(p.n_steps, p.lif.dt);
    let mut states: Vec<LifNeuronState> =
        (0..p.d).map(|_| LifNeuronState::new(p.lif.v_reset)).collect();
    let mut no_theta = Vec::new();
    let adapt = theta.is_some() && p.homeostasis.enabled;
    let theta = theta.unwrap_or(&mut no_theta);
    let theta_decay = if adapt {
        (-p.lif.dt / p.homeostasis.tau_theta_ms).exp()
    } else {
        1.0
    };
    let mut last_pre = vec![f64::NEG_INFINITY; p.n];
    let mut spike_steps: Vec<Vec<u32>> = vec![Vec::new(); p.d];
    let mut potentials: Vec<Vec<f64>> = if record_potentials {
        vec![Vec::with_capacity(p.n_steps as usize); p.d]
    } else {
        Vec::new()
    };
    let mut rngs: Vec<_> = if learning {
        (0..p.d).map(|j| stream_rng(seed, j as u64)).collect()
    } else {
        Vec::new()
    };
    let mut spiked_now: Vec<usize> = Vec::new();
    let gate_pre_after_post = p.stdp.ltd_on_pre_after_post;

    for step in 0..p.n_steps {
        let now = step as f64 * p.lif.dt;
        let actives = &buckets[step as usize];
        for &i in actives {
            last_pre[i as usize] = now;
        }

        spiked_now.clear();
        for j in 0..p.d {
            let frozen = now < states[j].inhibited_until;
            if !frozen {
                let row = &g[j * p.n..(j + 1) * p.n];
                let current = current_from_active(actives, row);
                let lif = if adapt {
                    theta[j] *= theta_decay;
                    LifParams {
                        v_threshold: p.lif.v_threshold + theta[j],
                        ..p.lif
                    }
                } else {
                    p.lif
                };
                if step_lif(&mut states[j], current, &lif, now)? {
                    if adapt {
                        theta[j] += p.homeostasis.theta_plus;
                    }
                    spike_steps[j].push(step);
                    spiked_now.push(j);
                    for (m, state) in states.iter_mut().enumerate() {
                        if m == j {
                            continue;
                        }
                        if now >= state.inhibited_until {
                            state.v -= p.inhibition.dv_inh;
                        }
                        state.inhibited_until = state.inhibited_until.max(now + p.inhibition.t_inh);
                    }
                }
            }
            if record_potentials {
                potentials[j].push(states[j].v);
            }
        }

        if learning {
            for &j in &spiked_now {
                let row = &mut g[j * p.n..(j + 1) * p.n];
                stdp_update(&p.stdp, row, &spikes.frequencies, &last_pre, now, &mut rngs[j])?;
            }
            if gate_pre_after_post && !actives.is_empty() {
                for j in 0..p.d {
                    let last_post = match states[j].last_spike_time {
                        Some(t) if t < now => t,
                        _ => continue,
                    };
                    let row = &mut g[j * p.n..(j + 1) * p.n];
                    for &i in actives {
                        depress_on_pre_spike(
                            &p.stdp,
                            &mut row[i as usize],
                            spikes.frequencies[i as usize] as f64,
                            last_post,
                            now,
                            &mut rngs[j],
                        )?;
                    }
                }
            }
        }
    }

    Ok(PresentationTrace {
        dt: p.lif.dt,
        spike_steps,
        potentials: record_potentials.then_some(potentials),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn small_model(d: usize, n: usize, v_threshold: f64) -> SnnModel {
        let params = SnnHyperparams {
            lif: LifParams {
                v_threshold,
                ..LifParams::default()
            },
            ..SnnHyperparams::default()
        };
        SnnModel::new(d, n, params, 7).unwrap()
    }

    fn encoded(n: usize, intensity: f32, seed: u64) -> SpikeTrainSet {
        encode_image(&vec![intensity; n], &EncoderConfig::default(), seed).unwrap()
    }

    #[test]
    fn zero_conductance_model_never_spikes() {
        let mut model = small_model(4, 32, 5.0);
        model.set_conductances(vec![0.0; 4 * 32]);
        // Force bounds that admit zero.
        let trace = model.respond(&encoded(32, 0.0, 1), 100.0, 2).unwrap();
        assert_eq!(trace.total_spikes(), 0);
    }

    #[test]
    fn single_neuron_has_no_inhibition() {
        // One neuron: spike count equals a simulation where inhibition can
        // never trigger because there are no peers.
        let mut model = small_model(1, 64, 8.0);
        let spikes = encoded(64, 0.2, 3);
        let trace = model.present(&spikes, 200.0, false, 5).unwrap();
        assert!(trace.total_spikes() > 0);
        // Rerun with an absurd inhibition strength: identical outcome.
        let mut harsh = small_model(1, 64, 8.0);
        harsh.params.inhibition = InhibitionParams { t_inh: 1e9, dv_inh: 1e9 };
        let trace2 = harsh.present(&spikes, 200.0, false, 5).unwrap();
        assert_eq!(trace.spike_steps, trace2.spike_steps);
    }

    #[test]
    fn first_spike_ties_break_by_index_and_inhibit_peers() {
        // Two identical neurons see identical input; index 0 wins the first
        // spike and the peer is inhibited from the same step.
        let mut model = small_model(2, 64, 8.0);
        let mid = vec![0.5f32; 2 * 64];
        model.set_conductances(mid);
        let spikes = encoded(64, 0.0, 9);
        let trace = model.present_recorded(&spikes, 200.0, false, 4).unwrap();
        let counts = trace.spike_counts();
        assert!(counts[0] > 0);
        let first0 = trace.spike_steps[0][0];
        let first1 = trace.spike_steps[1].first().copied().unwrap_or(u32::MAX);
        assert!(first0 < first1, "index order must break the tie");
        // Inhibition landed within the same step: neuron 1's potential drops
        // by dv_inh exactly at the winner's spike step.
        let potentials = trace.potentials.as_ref().unwrap();
        let before = potentials[1][first0 as usize - 1];
        let at = potentials[1][first0 as usize];
        assert!(at < before - 0.5 * model.params.inhibition.dv_inh);
    }

    #[test]
    fn inhibited_potential_never_rises_during_window() {
        let mut model = small_model(2, 64, 8.0);
        model.set_conductances(vec![0.5; 2 * 64]);
        let spikes = encoded(64, 0.0, 9);
        let trace = model.present_recorded(&spikes, 300.0, false, 4).unwrap();
        let potentials = trace.potentials.as_ref().unwrap();
        let t_inh_steps = (model.params.inhibition.t_inh / model.params.lif.dt) as usize;
        for &spike_step in &trace.spike_steps[0] {
            let s = spike_step as usize;
            // Freeze covers steps in [s, s + t_inh); at s + t_inh integration resumes.
            let end = (s + t_inh_steps - 1).min(potentials[1].len() - 1);
            for t in s..end {
                assert!(
                    potentials[1][t + 1] <= potentials[1][t] + 1e-12,
                    "inhibited potential rose at step {t}"
                );
            }
        }
    }

    #[test]
    fn presentations_are_bit_deterministic() {
        let mut a = small_model(8, 64, 6.0);
        let mut b = a.clone();
        let spikes = encoded(64, 0.3, 17);
        let ta = a.present(&spikes, 350.0, true, 99).unwrap();
        let tb = b.present(&spikes, 350.0, true, 99).unwrap();
        assert_eq!(ta.spike_steps, tb.spike_steps);
        assert_eq!(a.conductances(), b.conductances());
    }

    #[test]
    fn conductances_stay_bounded_under_learning() {
        let mut model = small_model(4, 128, 8.0);
        let mut rng = stream_rng(31, 0);
        for round in 0..20 {
            let img: Vec<f32> = (0..128).map(|_| rng.random::<f32>()).collect();
            let spikes = encode_image(&img, &model.encoder(), round).unwrap();
            model.present(&spikes, 100.0, true, round).unwrap();
        }
        let (lo, hi) = (model.params.stdp.g_min as f32, model.params.stdp.g_max as f32);
        assert!(model.conductances().iter().all(|&v| (lo..=hi).contains(&v)));
    }

    #[test]
    fn duration_must_be_multiple_of_dt() {
        let mut model = small_model(2, 16, 40.0);
        let spikes = encoded(16, 0.5, 1);
        assert!(matches!(
            model.present(&spikes, 100.05, false, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            model.present(&spikes, -1.0, false, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn model_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.snn");
        let mut model = small_model(3, 32, 80.0);
        let spikes = encoded(32, 0.4, 2);
        model.present(&spikes, 50.0, true, 3).unwrap();
        model.save(&path, Some(42), Some("abc".into())).unwrap();
        let back = SnnModel::load(&path).unwrap();
        assert_eq!(back.neuron_count(), 3);
        assert_eq!(back.input_len(), 32);
        assert_eq!(back.conductances(), model.conductances());
        assert_eq!(back.lif(), model.lif());
        // Save -> load -> save is byte-stable.
        let path2 = dir.path().join("model2.snn");
        back.save(&path2, Some(42), Some("abc".into())).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn mismatched_frequency_bounds_are_rejected() {
        let mut params = SnnHyperparams::default();
        params.encoder.f_max = 150.0;
        let err = SnnModel::new(2, 16, params, 1);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
