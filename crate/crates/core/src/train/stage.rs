//! The two-stage training procedure: spoken-speech pretraining and
//! domain-adaptation fine-tuning on imagined speech, with alternating
//! discriminator/generator updates, per-epoch validation, and
//! best-checkpoint retention.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayD};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{dtw, warp_to};
use crate::asr::{cer, ctc_loss_grad, greedy_decode, Alphabet, AsrModel};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::nn::{add_grads, collect_grads, AdamW, Module};
use crate::rng::rng_for;
use crate::train::loss::{
    clamp_p, discriminator_loss, rec_loss_grad, GenLossTerms, LossWeights,
};

const TRAIN_SALT: u64 = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Spoken,
    Adapt,
    LooAdapt,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Spoken => "spoken",
            Stage::Adapt => "adapt",
            Stage::LooAdapt => "loo_adapt",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_spoken: f64,
    pub lr_adapt: f64,
    pub max_epochs: usize,
    pub batch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Learning-rate factor applied every epoch.
    pub lr_decay: f64,
    pub early_stop_patience: usize,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_spoken: 1e-4,
            lr_adapt: 1e-5,
            max_epochs: 500,
            batch: 10,
            beta1: 0.8,
            beta2: 0.99,
            weight_decay: 0.01,
            lr_decay: 0.999,
            early_stop_patience: 50,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.lr_adapt >= self.lr_spoken {
            return Err(Error::Config(format!(
                "adapt learning rate {} must be below the spoken-stage rate {}",
                self.lr_adapt, self.lr_spoken
            )));
        }
        if self.batch == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch and max_epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_for(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Spoken => self.lr_spoken,
            Stage::Adapt | Stage::LooAdapt => self.lr_adapt,
        }
    }
}

/// One line of the per-epoch metric log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    pub loss_disc: f64,
    pub loss_rec: f64,
    pub loss_adv: f64,
    pub loss_ctc: f64,
    pub loss_total: f64,
    pub val_rmse: f64,
    pub val_cer: f64,
}

/// Trained generator/discriminator pair.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub gen: Generator,
    pub disc: Discriminator,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub best_val_cer: f64,
}

/// Everything a stage needs, borrowed from the prepared pipeline.
pub struct StageData<'a> {
    pub corpus: &'a Corpus,
    /// Trial id -> z-scored embedding (rows, 16).
    pub embeddings: &'a BTreeMap<u32, Array2<f64>>,
    /// (subject, class) -> normalized ground-truth voice mel (80, frames).
    pub gt_mels: &'a BTreeMap<(usize, usize), Array2<f64>>,
    pub train_ids: Vec<u32>,
    pub val_ids: Vec<u32>,
    pub asr: &'a AsrModel,
    pub alphabet: &'a Alphabet,
}

impl<'a> StageData<'a> {
    fn gt_for(&self, id: u32) -> &Array2<f64> {
        let m = self.corpus.meta(id);
        &self.gt_mels[&(m.subject, m.class_idx)]
    }

    fn target_for(&self, id: u32) -> Result<Vec<usize>> {
        let m = self.corpus.meta(id);
        self.alphabet
            .encode(&self.corpus.classes[m.class_idx].transcript)
    }
}

struct TrialGrads {
    grads: Vec<ArrayD<f64>>,
    terms: GenLossTerms,
}

/// Validation pass over frozen snapshots: mel RMSE on the [0, 1] scale and
/// greedy character error rate straight off the generated mel.
pub fn validate(
    data: &StageData,
    gen: &Generator,
    ids: &[u32],
) -> Result<(f64, f64)> {
    if ids.is_empty() {
        return Err(Error::invalid("empty validation set"));
    }
    let results: Vec<Result<(f64, f64)>> = ids
        .par_iter()
        .map(|&id| {
            let mut gen = gen.clone();
            let mut asr = data.asr.clone();
            let e = &data.embeddings[&id];
            let mel = gen.forward(e, false)?;
            let gt = data.gt_for(id);
            let path = dtw(&mel, gt)?;
            let warped = warp_to(mel.dim().1, gt, &path)?;
            let rmse = crate::eval::rmse(
                &crate::eval::rescale01(&mel),
                &crate::eval::rescale01(&warped),
            )?;
            let lp = asr.forward(&mel, false)?;
            let hyp = data.alphabet.decode(&greedy_decode(&lp));
            let m = data.corpus.meta(id);
            let reference = &data.corpus.classes[m.class_idx].transcript;
            Ok((rmse, cer(reference, &hyp)))
        })
        .collect();
    let mut rmse_sum = 0.0;
    let mut cer_sum = 0.0;
    for r in results {
        let (a, b) = r?;
        rmse_sum += a;
        cer_sum += b;
    }
    let n = ids.len() as f64;
    Ok((rmse_sum / n, cer_sum / n))
}

/// Run one training stage. `init` carries the pretrained model for the
/// adaptation stages; `None` trains from random initialization.
pub fn train_stage(
    stage: Stage,
    data: &StageData,
    gen_cfg: &GeneratorConfig,
    disc_cfg: &DiscriminatorConfig,
    cfg: &TrainConfig,
    init: Option<&TrainedModel>,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train_ids.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let w = cfg.weights;
    let use_gan = w.adv > 0.0;
    let use_ctc = w.ctc > 0.0;

    let (mut gen, mut disc) = match init {
        Some(m) => (m.gen.clone(), m.disc.clone()),
        None => (
            Generator::new(gen_cfg, rng_seed(seed, stage, 1))?,
            Discriminator::new(disc_cfg, rng_seed(seed, stage, 2))?,
        ),
    };
    let lr = cfg.lr_for(stage);
    let mut opt_g = AdamW::new(lr, cfg.beta1, cfg.beta2, cfg.weight_decay);
    let mut opt_d = AdamW::new(lr, cfg.beta1, cfg.beta2, cfg.weight_decay);

    let mut log = Vec::new();
    let mut best: Option<(usize, f64, f64, TrainedModel)> = None;
    let mut train_ids = data.train_ids.clone();

    for epoch in 0..cfg.max_epochs {
        let mut rng = rng_for(seed, &[TRAIN_SALT, stage as u64, epoch as u64]);
        train_ids.shuffle(&mut rng);

        let mut epoch_disc = 0.0;
        let mut epoch_terms = GenLossTerms::default();
        let mut batches = 0usize;

        for batch in train_ids.chunks(cfg.batch) {
            // Discriminator step: one update on real (warped ground truth)
            // versus fake (generated) mels.
            if use_gan {
                let results: Vec<Result<(Vec<ArrayD<f64>>, f64, f64)>> = batch
                    .par_iter()
                    .map(|&id| {
                        let mut g = gen.clone();
                        let mut d = disc.clone();
                        d.zero_grad();
                        let e = &data.embeddings[&id];
                        let mel = g.forward(e, false)?;
                        let gt = data.gt_for(id);
                        let path = dtw(&mel, gt)?;
                        let warped = warp_to(mel.dim().1, gt, &path)?;
                        let scale = w.disc / batch.len() as f64;
                        let p_real = d.forward(&warped, true)?;
                        let _ = d.backward(-scale / clamp_p(p_real));
                        let p_fake = d.forward(&mel, true)?;
                        let _ = d.backward(scale / (1.0 - clamp_p(p_fake)));
                        Ok((collect_grads(&mut d), p_real, p_fake))
                    })
                    .collect();
                disc.zero_grad();
                let mut reals = Vec::with_capacity(batch.len());
                let mut fakes = Vec::with_capacity(batch.len());
                for r in results {
                    let (grads, p_real, p_fake) = r?;
                    add_grads(&mut disc, &grads);
                    reals.push(p_real);
                    fakes.push(p_fake);
                }
                let d_loss = discriminator_loss(&reals, &fakes, &w);
                if !d_loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite discriminator loss at stage {} epoch {epoch} (batch {batch:?})",
                        stage.as_str()
                    )));
                }
                epoch_disc += d_loss;
                opt_d.step(&mut disc);
            }

            // Generator step.
            let results: Vec<Result<TrialGrads>> = batch
                .par_iter()
                .map(|&id| {
                    let mut g = gen.clone();
                    g.zero_grad();
                    let e = &data.embeddings[&id];
                    let mel = g.forward(e, true)?;
                    let gt = data.gt_for(id);
                    let path = dtw(&mel, gt)?;
                    let warped = warp_to(mel.dim().1, gt, &path)?;

                    let mut g_mel = rec_loss_grad(&mel, &warped) * w.rec;
                    let mut adv_term = 0.0;
                    if use_gan {
                        let mut d = disc.clone();
                        let p = d.forward(&mel, true)?;
                        adv_term = -clamp_p(p).ln();
                        let g_fake = d.backward(-w.adv / clamp_p(p));
                        g_mel += &g_fake;
                    }
                    let mut ctc_term = 0.0;
                    if use_ctc {
                        let mut a = data.asr.clone();
                        let target = data.target_for(id)?;
                        let lp = a.forward(&mel, true)?;
                        let (ctc, g_lp) = ctc_loss_grad(&lp, &target);
                        if ctc.is_finite() {
                            ctc_term = ctc;
                            g_mel += &(a.backward(&(g_lp * w.ctc)));
                        }
                    }
                    g_mel /= batch.len() as f64;
                    let rec = (&mel - &warped).mapv(|d| d * d).sum() / mel.len() as f64;
                    let _ = g.backward(&g_mel);
                    Ok(TrialGrads {
                        grads: collect_grads(&mut g),
                        terms: GenLossTerms {
                            rec,
                            adv: adv_term,
                            ctc: ctc_term,
                        },
                    })
                })
                .collect();
            gen.zero_grad();
            let mut batch_terms = GenLossTerms::default();
            for r in results {
                let tg = r?;
                add_grads(&mut gen, &tg.grads);
                batch_terms.rec += tg.terms.rec;
                batch_terms.adv += tg.terms.adv;
                batch_terms.ctc += tg.terms.ctc;
            }
            let bn = batch.len() as f64;
            batch_terms.rec /= bn;
            batch_terms.adv /= bn;
            batch_terms.ctc /= bn;
            let total = batch_terms.total(&w);
            if !total.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite generator loss at stage {} epoch {epoch} (batch {batch:?}; rec {} adv {} ctc {})",
                    stage.as_str(),
                    batch_terms.rec,
                    batch_terms.adv,
                    batch_terms.ctc
                )));
            }
            opt_g.step(&mut gen);
            epoch_terms.rec += batch_terms.rec;
            epoch_terms.adv += batch_terms.adv;
            epoch_terms.ctc += batch_terms.ctc;
            batches += 1;
        }

        let nb = batches.max(1) as f64;
        epoch_terms.rec /= nb;
        epoch_terms.adv /= nb;
        epoch_terms.ctc /= nb;
        let (val_rmse, val_cer) = validate(data, &gen, &data.val_ids)?;
        let record = EpochRecord {
            stage: stage.as_str().to_string(),
            epoch,
            loss_disc: epoch_disc / nb,
            loss_rec: epoch_terms.rec,
            loss_adv: epoch_terms.adv,
            loss_ctc: epoch_terms.ctc,
            loss_total: epoch_terms.total(&w),
            val_rmse,
            val_cer,
        };
        log::info!(
            "{} epoch {epoch}: rec {:.4} adv {:.3} ctc {:.2} disc {:.3} | val rmse {:.4} cer {:.1}%",
            stage.as_str(),
            record.loss_rec,
            record.loss_adv,
            record.loss_ctc,
            record.loss_disc,
            val_rmse,
            val_cer
        );
        log.push(record);

        let improved = match &best {
            None => true,
            Some((_, b_rmse, b_cer, _)) => {
                (val_cer, val_rmse) < (*b_cer, *b_rmse)
            }
        };
        if improved {
            best = Some((
                epoch,
                val_rmse,
                val_cer,
                TrainedModel {
                    gen: gen.clone(),
                    disc: disc.clone(),
                },
            ));
        } else if let Some((b_epoch, ..)) = &best {
            if epoch - b_epoch >= cfg.early_stop_patience {
                break;
            }
        }

        opt_g.decay_lr(cfg.lr_decay);
        opt_d.decay_lr(cfg.lr_decay);
    }

    let (best_epoch, best_val_rmse, best_val_cer, model) =
        best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_val_rmse,
        best_val_cer,
    })
}

fn rng_seed(seed: u64, stage: Stage, role: u64) -> u64 {
    crate::rng::mix(seed, &[TRAIN_SALT, stage as u64, 0xbeef, role])
}
