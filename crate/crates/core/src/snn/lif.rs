//! Leaky integrate-and-fire dynamics: dv/dt = a + b*v + c*I with a reset to
//! `v_reset` on crossing `v_threshold`, integrated by forward Euler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifParams {
    /// Constant drive per ms.
    pub a: f64,
    /// Leak coefficient per ms; must be negative for stable free dynamics.
    pub b: f64,
    /// Current coupling.
    pub c: f64,
    pub v_reset: f64,
    pub v_threshold: f64,
    /// Integration timestep (ms).
    pub dt: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams {
            a: 0.0,
            b: -0.05,
            c: 1.0,
            v_reset: 0.0,
            v_threshold: 250.0,
            dt: 0.1,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_threshold > self.v_reset) {
            return Err(Error::Config("lif: v_threshold must be > v_reset".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("lif: dt must be positive".into()));
        }
        if !(self.b < 0.0) {
            return Err(Error::Config("lif: b must be negative (leak)".into()));
        }
        Ok(())
    }

    /// Fixed point of the membrane equation under constant current.
    pub fn steady_state(&self, current: f64) -> f64 {
        -(self.a + self.c * current) / self.b
    }

    /// Closed-form solution of the membrane equation from `v0` after `t` ms
    /// under constant current, ignoring threshold and reset.
    pub fn analytic_potential(&self, v0: f64, current: f64, t: f64) -> f64 {
        let k = (self.a + self.c * current) / self.b;
        (v0 + k) * (self.b * t).exp() - k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifNeuronState {
    pub v: f64,
    /// Simulation time before which the potential is held frozen.
    pub inhibited_until: f64,
    pub last_spike_time: Option<f64>,
}

impl LifNeuronState {
    pub fn new(v: f64) -> Self {
        LifNeuronState {
            v,
            inhibited_until: f64::NEG_INFINITY,
            last_spike_time: None,
        }
    }
}

/// One forward-Euler step at time `now`. While inhibited the potential is
/// held as-is (no integration). Crossing the threshold resets within the
/// same step and reports a spike.
pub fn step_lif(
    state: &mut LifNeuronState,
    current: f64,
    params: &LifParams,
    now: f64,
) -> Result<bool> {
    if !current.is_finite() {
        return Err(Error::Numeric(format!("lif: non-finite current {current}")));
    }
    if now < state.inhibited_until {
        return Ok(false);
    }
    state.v += params.dt * (params.a + params.b * state.v + params.c * current);
    if state.v > params.v_threshold {
        state.v = params.v_reset;
        state.last_spike_time = Some(now);
        return Ok(true);
    }
    Ok(false)
}

/// Synaptic input current for one neuron: presynaptic spikes contribute a
/// unit-amplitude pulse for exactly one timestep, weighted by conductance.
/// `active` marks which presynaptic trains pulsed this step.
pub fn synaptic_current(active: &[bool], g_row: &[f32]) -> Result<f64> {
    if active.len() != g_row.len() {
        return Err(Error::Shape {
            expected: g_row.len(),
            got: active.len(),
        });
    }
    Ok(active
        .iter()
        .zip(g_row)
        .filter(|(&on, _)| on)
        .map(|(_, &g)| g as f64)
        .sum())
}

/// Hot-path equivalent of [`synaptic_current`] taking the active train
/// indices directly.
pub fn current_from_active(active_indices: &[u32], g_row: &[f32]) -> f64 {
    active_indices.iter().map(|&i| g_row[i as usize] as f64).sum()
}
