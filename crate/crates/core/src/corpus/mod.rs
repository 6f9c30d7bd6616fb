//! Deterministic synthetic paired EEG/voice corpus.

pub mod classes;
pub mod eeg;
pub mod io;
pub mod splits;
pub mod voice;

use serde::{Deserialize, Serialize};

pub use classes::{class_index, class_table, phoneme, ClassSpec, Phoneme, PhonemeKind};
pub use eeg::{class_band, spatial_pattern, synthesize_eeg, EegTrial, ARTIFACT_CHANNELS};
pub use splits::{build_splits, SplitPlan, SplitRole, SplitScheme, N_FOLDS};
pub use voice::{modulation_envelope, synthesize_voice, VoiceClip};

use crate::error::Result;
use crate::rng::mix;

pub const EEG_SAMPLE_RATE: f64 = 2500.0;
pub const EEG_CHANNELS: usize = 64;
/// 500 ms pre-trial window.
pub const EEG_PRE_SAMPLES: usize = 1250;
/// 2 s trial window.
pub const EEG_TRIAL_SAMPLES: usize = 5000;
pub const EEG_TOTAL_SAMPLES: usize = EEG_PRE_SAMPLES + EEG_TRIAL_SAMPLES;

pub const VOICE_SAMPLE_RATE: f64 = 22050.0;
/// 2.0 s clip.
pub const VOICE_SAMPLES: usize = 44100;

const VOICE_SALT: u64 = 1;
const TRIAL_SALT: u64 = 2;

/// Spoken or imagined speech condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Spoken = 0,
    Imagined = 1,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Spoken => "spoken",
            Condition::Imagined => "imagined",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Corpus generation knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub subjects: usize,
    /// Trials per class per condition per subject.
    pub trials_per_class: usize,
    /// Labels held out of model training.
    pub unseen_labels: Vec<String>,
    pub scheme: splits::SplitScheme,
    pub fold: usize,
    /// Held-out subject for the leave-one-out scheme.
    pub loo_subject: usize,
    /// Background 1/f noise level per channel, microvolts RMS.
    pub background_rms_uv: f64,
    /// Class oscillation amplitude before condition gain, microvolts.
    pub class_amp_uv: f64,
    pub spoken_gain: f64,
    pub imagined_gain: f64,
    /// Broadband movement artifact on frontal/temporal channels (spoken only).
    pub artifact_rms_uv: f64,
    /// Per-channel DC offset range, microvolts.
    pub dc_offset_uv: f64,
    /// Smoothing window of the voice envelope used for EEG modulation.
    pub env_smooth_ms: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            subjects: 6,
            trials_per_class: 20,
            unseen_labels: vec!["stop".to_string()],
            scheme: splits::SplitScheme::Fivefold,
            fold: 0,
            loo_subject: 0,
            background_rms_uv: 10.0,
            class_amp_uv: 24.0,
            spoken_gain: 1.0,
            imagined_gain: 0.4,
            artifact_rms_uv: 12.0,
            dc_offset_uv: 20.0,
            env_smooth_ms: 80.0,
        }
    }
}

/// Metadata of one trial in the canonical enumeration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialMeta {
    pub id: u32,
    pub subject: usize,
    pub class_idx: usize,
    pub condition: Condition,
    /// Repetition index within (subject, class, condition).
    pub rep: usize,
    /// Derived per-trial seed.
    pub seed: u64,
}

/// The corpus: class table plus a deterministic trial enumeration. Signal
/// data is synthesized on demand (every sample is a pure function of the
/// config and the master seed).
#[derive(Debug, Clone)]
pub struct Corpus {
    pub cfg: CorpusConfig,
    pub seed: u64,
    pub classes: Vec<ClassSpec>,
    pub trials: Vec<TrialMeta>,
}

impl Corpus {
    pub fn new(cfg: CorpusConfig, seed: u64) -> Self {
        let classes = class_table();
        let mut trials = Vec::new();
        let mut id = 0u32;
        for subject in 0..cfg.subjects {
            for class_idx in 0..classes.len() {
                for condition in [Condition::Spoken, Condition::Imagined] {
                    for rep in 0..cfg.trials_per_class {
                        trials.push(TrialMeta {
                            id,
                            subject,
                            class_idx,
                            condition,
                            rep,
                            seed: mix(
                                seed,
                                &[
                                    TRIAL_SALT,
                                    subject as u64,
                                    class_idx as u64,
                                    condition as u64,
                                    rep as u64,
                                ],
                            ),
                        });
                        id += 1;
                    }
                }
            }
        }
        Corpus {
            cfg,
            seed,
            classes,
            trials,
        }
    }

    pub fn meta(&self, id: u32) -> &TrialMeta {
        &self.trials[id as usize]
    }

    pub fn label(&self, meta: &TrialMeta) -> &str {
        &self.classes[meta.class_idx].label
    }

    pub fn voice_seed(&self, subject: usize, class_idx: usize) -> u64 {
        mix(self.seed, &[VOICE_SALT, subject as u64, class_idx as u64])
    }

    /// The canonical ground-truth voice clip for a (subject, class) pair.
    pub fn voice(&self, subject: usize, class_idx: usize) -> Result<VoiceClip> {
        synthesize_voice(
            &self.classes,
            &self.classes[class_idx].label,
            subject,
            self.voice_seed(subject, class_idx),
        )
    }

    /// Synthesize the EEG of one trial (paired with its canonical voice).
    pub fn eeg(&self, meta: &TrialMeta) -> Result<EegTrial> {
        let voice = self.voice(meta.subject, meta.class_idx)?;
        synthesize_eeg(
            &self.classes,
            &self.classes[meta.class_idx].label,
            meta.condition,
            meta.subject,
            meta.seed,
            &voice,
            &self.cfg,
        )
    }
}
