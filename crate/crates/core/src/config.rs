//! The full run configuration and its fingerprint.
//!
//! One structured document with sections corpus/dsp/embedding/model/train/
//! eval plus the master seed. Unknown keys are rejected everywhere. The
//! fingerprint (SHA-256 of the canonical serialization) is stamped into every
//! produced artifact; stages refuse to mix artifacts from different
//! fingerprints.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asr::AsrTrainConfig;
use crate::corpus::CorpusConfig;
use crate::dsp::DspConfig;
use crate::embedding::EmbeddingConfig;
use crate::error::Result;
use crate::eval::EvalConfig;
use crate::model::{DiscriminatorConfig, GeneratorConfig};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    #[serde(flatten)]
    pub stage: TrainConfig,
    pub asr: AsrTrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            stage: TrainConfig::default(),
            asr: AsrTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random draw in the pipeline derives from it.
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub dsp: DspConfig,
    pub embedding: EmbeddingConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            corpus: CorpusConfig::default(),
            dsp: DspConfig::default(),
            embedding: EmbeddingConfig::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.generator.validate()?;
        self.model.discriminator.validate()?;
        self.embedding.validate()?;
        self.train.stage.validate()?;
        self.eval.vocoder.validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&json);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| crate::Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.fingerprint(), back.fingerprint());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "seed = 1\n[corpus]\nsubjects = 2\nnot_a_key = 5\n";
        assert!(RunConfig::from_toml(text).is_err());
        let text = "seed = 1\nwhatever = 3\n";
        assert!(RunConfig::from_toml(text).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let mut c = RunConfig::default();
        c.corpus.trials_per_class = 19;
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.corpus.subjects, 6);
        assert_eq!(cfg.train.stage.batch, 10);
    }
}
