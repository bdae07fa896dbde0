//! Pipeline configuration: one human-readable TOML file covering every
//! stage, plus a content hash that output artifacts embed so any two
//! artifacts from one run are mutually traceable.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::MlpConfig;
use crate::context::ContextParams;
use crate::data::IMAGE_LEN;
use crate::error::{Error, Result};
use crate::perturb::RainPreset;
use crate::plasticity::StdpParams;
use crate::rng::derive_seed;
use crate::snn::{EncoderConfig, HomeostasisParams, InhibitionParams, LifParams, SnnHyperparams, SnnModel};

/// Seed-stream ids, one per pipeline stage.
pub mod streams {
    pub const MODEL_INIT: u64 = 1;
    pub const LEARN: u64 = 2;
    pub const CLASSIFIER: u64 = 3;
    pub const PERTURB: u64 = 4;
    pub const ENCODE: u64 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnnSettings {
    /// Number of spiking neurons (d).
    pub neurons: usize,
    /// Presentation duration per image (ms).
    pub duration_ms: f64,
    /// Unsupervised training epochs.
    pub epochs: usize,
}

impl Default for SnnSettings {
    fn default() -> Self {
        SnnSettings {
            neurons: 100,
            duration_ms: 350.0,
            epochs: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RainPresets {
    pub light: RainPreset,
    pub heavy: RainPreset,
}

impl Default for RainPresets {
    fn default() -> Self {
        RainPresets {
            light: RainPreset::light(),
            heavy: RainPreset::heavy(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub lif: LifParams,
    pub inhibition: InhibitionParams,
    pub stdp: StdpParams,
    pub homeostasis: HomeostasisParams,
    pub snn: SnnSettings,
    pub context: ContextParams,
    pub classifier: MlpConfig,
    pub rain: RainPresets,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            encoder: EncoderConfig::default(),
            lif: LifParams::default(),
            inhibition: InhibitionParams::default(),
            stdp: StdpParams::default(),
            homeostasis: HomeostasisParams::default(),
            snn: SnnSettings::default(),
            context: ContextParams::default(),
            classifier: MlpConfig::default(),
            rain: RainPresets::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.lif.validate()?;
        self.inhibition.validate()?;
        self.stdp.validate()?;
        self.homeostasis.validate()?;
        self.classifier.validate()?;
        self.rain.light.validate()?;
        self.rain.heavy.validate()?;
        if self.snn.neurons == 0 {
            return Err(Error::Config("snn.neurons must be > 0".into()));
        }
        if self.stdp.f_min != self.encoder.f_min || self.stdp.f_max != self.encoder.f_max {
            return Err(Error::Config(
                "stdp.f_min/f_max must match encoder.f_min/f_max".into(),
            ));
        }
        self.context.validate(self.snn.neurons)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Short content hash (sha-256 prefix) of the effective configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// The SNN hyperparameter bundle implied by this configuration.
    pub fn snn_hyperparams(&self) -> SnnHyperparams {
        SnnHyperparams {
            lif: self.lif,
            inhibition: self.inhibition,
            stdp: self.stdp,
            encoder: self.encoder,
            homeostasis: self.homeostasis,
        }
    }

    /// Untrained model with the configured geometry, initialized from the
    /// global seed.
    pub fn build_model(&self) -> Result<SnnModel> {
        self.validate()?;
        SnnModel::new(
            self.snn.neurons,
            IMAGE_LEN,
            self.snn_hyperparams(),
            derive_seed(self.seed, streams::MODEL_INIT),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let config = PipelineConfig::default();
        config.validate().unwrap();
        let text = config.to_toml_string();
        let back = PipelineConfig::from_toml_str(&text).unwrap();
        assert_eq!(config, back);
        assert_eq!(config.hash(), back.hash());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a;
        b.seed = 43;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let config = PipelineConfig::from_toml_str("seed = 7\n[stdp]\ntau_pot = 12.0\n").unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.stdp.tau_pot, 12.0);
        assert_eq!(config.stdp.tau_dep, StdpParams::default().tau_dep);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            PipelineConfig::from_toml_str("sede = 7\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mismatched_frequency_bounds_are_rejected() {
        let text = "[encoder]\nf_max = 150.0\n";
        assert!(matches!(
            PipelineConfig::from_toml_str(text),
            Err(Error::Config(_))
        ));
    }
}
