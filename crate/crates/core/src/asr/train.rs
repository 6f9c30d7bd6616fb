//! Training of the character recognizer on synthetic voice clips.
//!
//! The recognizer stands in for a pretrained general-purpose model, so it is
//! trained on voice variants of every class (including the word held out of
//! generator training) and then frozen. Training stops once held-out voice
//! CER drops under the gate, and fails hard if the gate is never reached.

use ndarray::Array2;
use rayon::prelude::*;

use crate::asr::alphabet::Alphabet;
use crate::asr::cer::cer;
use crate::asr::ctc::{ctc_loss_grad, greedy_decode};
use crate::asr::model::{AsrConfig, AsrModel};
use crate::corpus::{synthesize_voice, Corpus};
use crate::dsp::mel::{log_mel, MelParams, NormStats};
use crate::error::{Error, Result};
use crate::nn::{add_grads, collect_grads, AdamW, Module};
use crate::rng::{mix, rng_for};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

const ASR_VOICE_SALT: u64 = 11;
const ASR_VAL_SALT: u64 = 12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsrTrainConfig {
    /// Synthesis-seed variants per (subject, class) in the training set.
    pub train_variants: usize,
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Held-out voice CER (percent) that ends training.
    pub gate_cer: f64,
    /// Additional time-stretched copy of each training mel, matched to the
    /// generator's output frame count.
    pub stretch_to: usize,
    pub model: AsrConfig,
}

impl Default for AsrTrainConfig {
    fn default() -> Self {
        AsrTrainConfig {
            train_variants: 4,
            lr: 4e-3,
            batch: 8,
            max_epochs: 60,
            gate_cer: 10.0,
            stretch_to: 192,
            model: AsrConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsrOutcome {
    pub val_cer: f64,
    pub epochs: usize,
}

/// Linear interpolation of mel columns onto a new frame count.
pub fn stretch_frames(mel: &Array2<f64>, frames: usize) -> Array2<f64> {
    let (bands, t) = mel.dim();
    if t == frames {
        return mel.clone();
    }
    let mut out = Array2::zeros((bands, frames));
    for j in 0..frames {
        let pos = j as f64 * (t - 1) as f64 / (frames - 1).max(1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(t - 1);
        let frac = pos - lo as f64;
        for b in 0..bands {
            out[[b, j]] = mel[[b, lo]] * (1.0 - frac) + mel[[b, hi]] * frac;
        }
    }
    out
}

struct Item {
    mel: Array2<f64>,
    target: Vec<usize>,
    transcript: String,
}

fn voice_mel(
    corpus: &Corpus,
    label: &str,
    subject: usize,
    seed: u64,
    params: &MelParams,
    stats: NormStats,
) -> Result<Array2<f64>> {
    let clip = synthesize_voice(&corpus.classes, label, subject, seed)?;
    Ok(stats.normalize(&log_mel(&clip.samples, params)?))
}

fn build_items(
    corpus: &Corpus,
    params: &MelParams,
    stats: NormStats,
    cfg: &AsrTrainConfig,
    alphabet: &Alphabet,
) -> Result<(Vec<Item>, Vec<Item>)> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for subject in 0..corpus.cfg.subjects {
        for class in &corpus.classes {
            let target = alphabet.encode(&class.transcript)?;
            for v in 0..cfg.train_variants {
                let seed = mix(
                    corpus.seed,
                    &[ASR_VOICE_SALT, subject as u64, v as u64, 0],
                );
                // Variants are per-(subject, class) through the class label.
                let seed = mix(seed, &[class.label.len() as u64, hash_label(&class.label)]);
                let mel = voice_mel(corpus, &class.label, subject, seed, params, stats)?;
                let stretched = stretch_frames(&mel, cfg.stretch_to);
                train.push(Item {
                    mel,
                    target: target.clone(),
                    transcript: class.transcript.clone(),
                });
                train.push(Item {
                    mel: stretched,
                    target: target.clone(),
                    transcript: class.transcript.clone(),
                });
            }
            let vseed = mix(
                corpus.seed,
                &[ASR_VAL_SALT, subject as u64, hash_label(&class.label)],
            );
            val.push(Item {
                mel: voice_mel(corpus, &class.label, subject, vseed, params, stats)?,
                target: target.clone(),
                transcript: class.transcript.clone(),
            });
        }
    }
    Ok((train, val))
}

fn hash_label(label: &str) -> u64 {
    label.bytes().fold(1469598103934665603u64, |h, b| {
        (h ^ b as u64).wrapping_mul(1099511628211)
    })
}

/// Mean held-out CER of greedy transcripts.
fn validate(model: &mut AsrModel, alphabet: &Alphabet, items: &[Item]) -> Result<f64> {
    let mut model = model.clone();
    let mut total = 0.0;
    for item in items {
        let lp = model.forward(&item.mel, false)?;
        let hyp = alphabet.decode(&greedy_decode(&lp));
        total += cer(&item.transcript, &hyp);
    }
    Ok(total / items.len().max(1) as f64)
}

/// Train the recognizer until the held-out gate or the epoch cap; failing the
/// gate is a hard error (it indicates a corpus misconfiguration).
pub fn train_asr(
    corpus: &Corpus,
    params: &MelParams,
    stats: NormStats,
    cfg: &AsrTrainConfig,
    seed: u64,
) -> Result<(AsrModel, AsrOutcome)> {
    let alphabet = Alphabet::default();
    let mut model_cfg = cfg.model.clone();
    model_cfg.alphabet_len = alphabet.len();
    let (train, val) = build_items(corpus, params, stats, cfg, &alphabet)?;
    let mut model = AsrModel::new(&model_cfg, mix(seed, &[0xa52]));
    let mut opt = AdamW::new(cfg.lr, 0.9, 0.999, 0.01);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.max_epochs {
        let mut rng = rng_for(seed, &[0xa52_e0, epoch as u64]);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            // Per-item gradients computed in parallel on clones, then folded
            // in batch order so results are independent of thread count.
            let results: Vec<Vec<ndarray::ArrayD<f64>>> = batch
                .par_iter()
                .map(|&i| {
                    let item = &train[i];
                    let mut m = model.clone();
                    m.zero_grad();
                    let lp = m.forward(&item.mel, true).expect("shape verified");
                    let (loss, g) = ctc_loss_grad(&lp, &item.target);
                    if !loss.is_finite() {
                        m.zero_grad();
                        return collect_grads(&mut m);
                    }
                    let _ = m.backward(&(g / batch.len() as f64));
                    collect_grads(&mut m)
                })
                .collect();
            model.zero_grad();
            for g in &results {
                add_grads(&mut model, g);
            }
            opt.step(&mut model);
        }
        let val_cer = validate(&mut model, &alphabet, &val)?;
        log::info!("asr epoch {epoch}: held-out CER {val_cer:.2}%");
        if val_cer < cfg.gate_cer {
            return Ok((
                model,
                AsrOutcome {
                    val_cer,
                    epochs: epoch + 1,
                },
            ));
        }
    }
    let val_cer = validate(&mut model, &alphabet, &val)?;
    Err(Error::AsrGate(format!(
        "held-out voice CER {val_cer:.2}% after {} epochs (gate {}%)",
        cfg.max_epochs, cfg.gate_cer
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusConfig;
    use ndarray::array;

    #[test]
    fn stretch_preserves_endpoints() {
        let mel = array![[0.0, 1.0, 2.0], [5.0, 3.0, 1.0]];
        let s = stretch_frames(&mel, 5);
        assert_eq!(s.dim(), (2, 5));
        assert_eq!(s[[0, 0]], 0.0);
        assert_eq!(s[[0, 4]], 2.0);
        assert_eq!(s[[1, 0]], 5.0);
        assert_eq!(s[[1, 4]], 1.0);
        assert!((s[[0, 2]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn items_cover_all_classes_for_all_subjects() {
        let corpus = Corpus::new(
            CorpusConfig {
                subjects: 2,
                trials_per_class: 1,
                ..CorpusConfig::default()
            },
            9,
        );
        let cfg = AsrTrainConfig {
            train_variants: 1,
            ..AsrTrainConfig::default()
        };
        let stats = NormStats {
            log_min: -11.5,
            log_max: 2.0,
        };
        let (train, val) =
            build_items(&corpus, &MelParams::default(), stats, &cfg, &Alphabet::default())
                .unwrap();
        // 2 subjects x 13 classes x 1 variant x 2 (plain + stretched).
        assert_eq!(train.len(), 52);
        assert_eq!(val.len(), 26);
        assert!(train.iter().any(|i| i.transcript == "stop"));
        assert!(train.iter().any(|i| i.transcript.is_empty()));
    }
}
