//! Test-set evaluation: mel RMSE and character error rate per condition,
//! with unseen-word rows kept separate and a shuffled-pairing chance
//! baseline.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{dtw, warp_to};
use crate::asr::{cer, greedy_decode, Alphabet, AsrModel};
use crate::corpus::{Condition, Corpus, SplitPlan};
use crate::dsp::mel::{log_mel, MelParams, MelSpectrogram, NormStats};
use crate::error::{Error, Result};
use crate::model::Generator;
use crate::rng::rng_for;
use crate::vocoder::{mel_to_waveform, VocoderSpec};

const SHUFFLE_SALT: u64 = 31;

/// Rescale a normalized mel from [-1, 1] to [0, 1].
pub fn rescale01(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(|v| (v + 1.0) * 0.5)
}

/// Root mean squared error over all cells; inputs must have equal shape.
pub fn rmse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            format!("{:?}", a.dim()),
            format!("{:?}", b.dim()),
        ));
    }
    let n = a.len() as f64;
    Ok((a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
        .sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub vocoder: VocoderSpec,
    /// Rounds of reference shuffling for the chance baseline.
    pub shuffle_rounds: usize,
    /// Route transcription through the vocoder (waveform) rather than
    /// decoding the generated mel directly.
    pub cer_through_vocoder: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            vocoder: VocoderSpec::default(),
            shuffle_rounds: 20,
            cer_through_vocoder: true,
        }
    }
}

/// One evaluated test trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: u32,
    pub subject: usize,
    pub class: String,
    pub condition: Condition,
    pub unseen: bool,
    pub rmse: f64,
    pub reference: String,
    pub hypothesis: String,
    pub cer: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct RowStats {
    pub n_trials: usize,
    pub rmse_mean: f64,
    /// Standard deviation over per-subject means.
    pub rmse_std: f64,
    pub cer_mean: f64,
    pub cer_std: f64,
    /// Chance-level CER from shuffled hypothesis-reference pairing.
    pub shuffle_cer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: BTreeMap<String, RowStats>,
    pub trials: Vec<TrialRecord>,
    pub fingerprint: String,
}

impl EvalReport {
    pub fn row(&self, condition: Condition, unseen: bool) -> &RowStats {
        &self.rows[&row_key(condition, unseen)]
    }

    /// Fraction of silence-class trials decoded as an empty transcript.
    pub fn silence_detection_rate(&self, condition: Condition) -> f64 {
        let silence: Vec<&TrialRecord> = self
            .trials
            .iter()
            .filter(|t| t.condition == condition && t.reference.is_empty())
            .collect();
        if silence.is_empty() {
            return f64::NAN;
        }
        silence.iter().filter(|t| t.hypothesis.is_empty()).count() as f64 / silence.len() as f64
    }

    /// Table-shaped summary (condition rows x RMSE/CER columns).
    pub fn to_table(&self) -> String {
        let mut out = String::from("row\tn\trmse_mean\trmse_std\tcer_mean\tcer_std\tshuffle_cer\n");
        for (k, s) in &self.rows {
            out.push_str(&format!(
                "{k}\t{}\t{:.4}\t{:.4}\t{:.2}\t{:.2}\t{:.2}\n",
                s.n_trials, s.rmse_mean, s.rmse_std, s.cer_mean, s.cer_std, s.shuffle_cer
            ));
        }
        out
    }
}

pub fn row_key(condition: Condition, unseen: bool) -> String {
    match (condition, unseen) {
        (Condition::Spoken, false) => "spoken".into(),
        (Condition::Imagined, false) => "imagined".into(),
        (Condition::Spoken, true) => "unseen_spoken".into(),
        (Condition::Imagined, true) => "unseen_imagined".into(),
    }
}

/// Inputs needed to evaluate a trained generator.
pub struct EvalContext<'a> {
    pub corpus: &'a Corpus,
    pub plan: &'a SplitPlan,
    pub embeddings: &'a BTreeMap<u32, Array2<f64>>,
    pub gt_mels: &'a BTreeMap<(usize, usize), Array2<f64>>,
    pub stats: NormStats,
    pub mel_params: MelParams,
    pub asr: &'a AsrModel,
    pub alphabet: &'a Alphabet,
}

/// Evaluate every test trial of both conditions.
pub fn evaluate(
    ctx: &EvalContext,
    gen: &Generator,
    cfg: &EvalConfig,
    fingerprint: &str,
) -> Result<EvalReport> {
    let mut ids: Vec<u32> = Vec::new();
    for condition in [Condition::Spoken, Condition::Imagined] {
        ids.extend(ctx.plan.test_ids(&ctx.corpus.trials, condition));
    }
    if ids.is_empty() {
        return Err(Error::invalid("empty test split"));
    }

    let records: Vec<Result<TrialRecord>> = ids
        .par_iter()
        .map(|&id| evaluate_trial(ctx, gen, cfg, id))
        .collect();
    let mut trials = Vec::with_capacity(records.len());
    for r in records {
        trials.push(r?);
    }

    let mut rows = BTreeMap::new();
    for condition in [Condition::Spoken, Condition::Imagined] {
        for unseen in [false, true] {
            let subset: Vec<&TrialRecord> = trials
                .iter()
                .filter(|t| t.condition == condition && t.unseen == unseen)
                .collect();
            if subset.is_empty() {
                continue;
            }
            rows.insert(
                row_key(condition, unseen),
                row_stats(&subset, &trials, condition, cfg.shuffle_rounds, ctx.plan.seed),
            );
        }
    }

    Ok(EvalReport {
        rows,
        trials,
        fingerprint: fingerprint.to_string(),
    })
}

fn evaluate_trial(
    ctx: &EvalContext,
    gen: &Generator,
    cfg: &EvalConfig,
    id: u32,
) -> Result<TrialRecord> {
    let meta = ctx.corpus.meta(id);
    let mut gen = gen.clone();
    let e = ctx
        .embeddings
        .get(&id)
        .ok_or_else(|| Error::MissingComponent(format!("embedding for trial {id}")))?;
    let mel = gen.forward(e, false)?;
    let gt = &ctx.gt_mels[&(meta.subject, meta.class_idx)];
    let path = dtw(&mel, gt)?;
    let warped = warp_to(mel.dim().1, gt, &path)?;
    let trial_rmse = rmse(&rescale01(&mel), &rescale01(&warped))?;

    let mut asr = ctx.asr.clone();
    let log_probs = if cfg.cer_through_vocoder {
        let wav = mel_to_waveform(
            &MelSpectrogram {
                values: mel.clone(),
                stats: ctx.stats,
            },
            &cfg.vocoder,
        )?;
        let mel_rt = ctx.stats.normalize(&log_mel(&wav, &ctx.mel_params)?);
        asr.forward(&mel_rt, false)?
    } else {
        asr.forward(&mel, false)?
    };
    let hypothesis = ctx.alphabet.decode(&greedy_decode(&log_probs));
    let reference = ctx.corpus.classes[meta.class_idx].transcript.clone();
    let trial_cer = cer(&reference, &hypothesis);

    Ok(TrialRecord {
        id,
        subject: meta.subject,
        class: ctx.corpus.classes[meta.class_idx].label.clone(),
        condition: meta.condition,
        unseen: ctx.plan.unseen_labels.contains(&ctx.corpus.classes[meta.class_idx].label),
        rmse: trial_rmse,
        reference,
        hypothesis,
        cer: trial_cer,
    })
}

fn row_stats(
    subset: &[&TrialRecord],
    all: &[TrialRecord],
    condition: Condition,
    shuffle_rounds: usize,
    seed: u64,
) -> RowStats {
    let n = subset.len();
    let rmse_mean = subset.iter().map(|t| t.rmse).sum::<f64>() / n as f64;
    let cer_mean = subset.iter().map(|t| t.cer).sum::<f64>() / n as f64;

    // Std over per-subject means.
    let mut by_subject: BTreeMap<usize, Vec<&TrialRecord>> = BTreeMap::new();
    for t in subset {
        by_subject.entry(t.subject).or_default().push(t);
    }
    let subj_rmse: Vec<f64> = by_subject
        .values()
        .map(|v| v.iter().map(|t| t.rmse).sum::<f64>() / v.len() as f64)
        .collect();
    let subj_cer: Vec<f64> = by_subject
        .values()
        .map(|v| v.iter().map(|t| t.cer).sum::<f64>() / v.len() as f64)
        .collect();

    RowStats {
        n_trials: n,
        rmse_mean,
        rmse_std: std_dev(&subj_rmse),
        cer_mean,
        cer_std: std_dev(&subj_cer),
        shuffle_cer: shuffle_baseline(subset, all, condition, shuffle_rounds, seed),
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Chance-level CER: pair each hypothesis with references drawn from other
/// classes of the same subject and condition, averaged over rounds.
pub fn shuffle_baseline(
    subset: &[&TrialRecord],
    all: &[TrialRecord],
    condition: Condition,
    rounds: usize,
    seed: u64,
) -> f64 {
    use rand::seq::IndexedRandom;
    let mut total = 0.0;
    let mut count = 0usize;
    for t in subset {
        let pool: Vec<&str> = all
            .iter()
            .filter(|o| {
                o.condition == condition && o.subject == t.subject && o.class != t.class
            })
            .map(|o| o.reference.as_str())
            .collect();
        if pool.is_empty() {
            continue;
        }
        let mut rng = rng_for(seed, &[SHUFFLE_SALT, t.id as u64]);
        for _ in 0..rounds {
            let reference = pool.choose(&mut rng).expect("non-empty pool");
            total += cer(reference, &t.hypothesis);
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        total / count as f64
    }
}
