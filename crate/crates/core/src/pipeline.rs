//! End-to-end orchestration shared by the command-line driver, the ablation
//! grid, and the test suites: corpus preparation, spatial-filter fitting,
//! embedding precomputation, the two training stages, and evaluation.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;

use crate::asr::{train_asr, Alphabet, AsrModel, AsrOutcome};
use crate::config::RunConfig;
use crate::corpus::{build_splits, Condition, Corpus, SplitPlan};
use crate::dsp::mel::{log_mel, NormStats};
use crate::dsp::Preprocessor;
use crate::embedding::{fit_csp_filters, CovAccumulator, CspBank, FeatureNormAccumulator};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalContext, EvalReport};
use crate::model::Generator;
use crate::rng::mix;
use crate::train::{train_stage, Stage, StageData, TrainOutcome, TrainedModel};

/// Prepared data shared by all stages: the corpus enumeration, the split
/// plan, mel normalization statistics, ground-truth voice mels, the shared
/// CSP bank, and per-trial embeddings.
pub struct Prepared {
    pub config: RunConfig,
    pub fingerprint: String,
    pub corpus: Corpus,
    pub plan: SplitPlan,
    pub stats: NormStats,
    /// (subject, class) -> normalized ground-truth voice mel.
    pub gt_mels: BTreeMap<(usize, usize), Array2<f64>>,
    /// Trial id -> embedding.
    pub embeddings: BTreeMap<u32, Array2<f64>>,
    pub bank: CspBank,
    pub alphabet: Alphabet,
}

/// Build the corpus, fit normalization and spatial filters, and embed every
/// trial.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let fingerprint = config.fingerprint();
    let corpus = Corpus::new(config.corpus.clone(), config.seed);
    let plan = build_splits(
        &corpus.trials,
        &corpus.classes,
        &config.corpus.unseen_labels,
        config.corpus.scheme,
        config.corpus.fold,
        match config.corpus.scheme {
            crate::corpus::SplitScheme::Loo => Some(config.corpus.loo_subject),
            crate::corpus::SplitScheme::Fivefold => None,
        },
        config.seed,
    )?;

    // Normalization statistics over the voice mels referenced by training
    // trials; then normalize every canonical clip with them.
    let mut raw_mels: BTreeMap<(usize, usize), Array2<f64>> = BTreeMap::new();
    for subject in 0..corpus.cfg.subjects {
        for class_idx in 0..corpus.classes.len() {
            let clip = corpus.voice(subject, class_idx)?;
            raw_mels.insert(
                (subject, class_idx),
                log_mel(&clip.samples, &config.dsp.mel)?,
            );
        }
    }
    let train_refs: std::collections::BTreeSet<(usize, usize)> = plan
        .model_train_ids(&corpus.trials, &corpus.classes, Condition::Spoken)
        .iter()
        .map(|&id| {
            let m = corpus.meta(id);
            (m.subject, m.class_idx)
        })
        .collect();
    let stats = NormStats::fit(train_refs.iter().map(|k| &raw_mels[k]))?;
    let gt_mels: BTreeMap<(usize, usize), Array2<f64>> = raw_mels
        .iter()
        .map(|(k, v)| (*k, stats.normalize(v)))
        .collect();

    // Fit the CSP bank on imagined train-fold trials (all classes), then
    // its feature normalization on the same set.
    let pre = Preprocessor::new(&config.dsp)?;
    let csp_ids = plan.csp_fit_ids(&corpus.trials);
    let preprocessed: Vec<Result<(usize, Array2<f64>)>> = csp_ids
        .par_iter()
        .map(|&id| {
            let meta = corpus.meta(id);
            let trial = corpus.eeg(meta)?;
            Ok((meta.class_idx, pre.process(&trial.samples)?))
        })
        .collect();
    let mut acc = CovAccumulator::new(corpus.classes.len(), crate::corpus::EEG_CHANNELS);
    let mut csp_trials = Vec::with_capacity(csp_ids.len());
    for r in preprocessed {
        let (class_idx, t) = r?;
        acc.add(class_idx, &t)?;
        csp_trials.push(t);
    }
    let filters = fit_csp_filters(&acc, &config.embedding)?;
    let mut bank = CspBank {
        filters,
        class_order: corpus.classes.iter().map(|c| c.label.clone()).collect(),
        trained_on: Condition::Imagined,
        feature_mean: ndarray::Array1::zeros(0),
        feature_std: ndarray::Array1::zeros(0),
        filters_per_class: config.embedding.filters_per_class,
        segments: config.embedding.segments,
        variance_floor: config.embedding.variance_floor,
    };
    let mut norm = FeatureNormAccumulator::new(bank.rows());
    for t in &csp_trials {
        norm.add(&bank.embed_raw(t)?);
    }
    let (mean, std) = norm.finish()?;
    bank.feature_mean = mean;
    bank.feature_std = std;
    drop(csp_trials);

    // Embed every trial with the shared bank.
    let embedded: Vec<Result<(u32, Array2<f64>)>> = corpus
        .trials
        .par_iter()
        .map(|meta| {
            let trial = corpus.eeg(meta)?;
            let processed = pre.process(&trial.samples)?;
            Ok((meta.id, bank.embed(&processed)?))
        })
        .collect();
    let mut embeddings = BTreeMap::new();
    for r in embedded {
        let (id, e) = r?;
        embeddings.insert(id, e);
    }

    Ok(Prepared {
        config: config.clone(),
        fingerprint,
        corpus,
        plan,
        stats,
        gt_mels,
        embeddings,
        bank,
        alphabet: Alphabet::default(),
    })
}

impl Prepared {
    /// Train the character recognizer for this corpus (frozen afterwards).
    pub fn train_asr(&self) -> Result<(AsrModel, AsrOutcome)> {
        train_asr(
            &self.corpus,
            &self.config.dsp.mel,
            self.stats,
            &self.config.train.asr,
            mix(self.config.seed, &[0xa5a5]),
        )
    }

    fn stage_data<'a>(&'a self, stage: Stage, asr: &'a AsrModel) -> StageData<'a> {
        let condition = match stage {
            Stage::Spoken => Condition::Spoken,
            Stage::Adapt | Stage::LooAdapt => Condition::Imagined,
        };
        StageData {
            corpus: &self.corpus,
            embeddings: &self.embeddings,
            gt_mels: &self.gt_mels,
            train_ids: self
                .plan
                .model_train_ids(&self.corpus.trials, &self.corpus.classes, condition),
            val_ids: self.plan.val_ids(&self.corpus.trials, condition),
            asr,
            alphabet: &self.alphabet,
        }
    }

    /// Spoken-speech pretraining from random initialization.
    pub fn run_spoken(&self, asr: &AsrModel) -> Result<TrainOutcome> {
        let data = self.stage_data(Stage::Spoken, asr);
        train_stage(
            Stage::Spoken,
            &data,
            &self.config.model.generator,
            &self.config.model.discriminator,
            &self.config.train.stage,
            None,
            self.config.seed,
        )
    }

    /// Domain-adaptation fine-tuning on imagined speech. `init = None` trains
    /// from random initialization (the "without adaptation" arm).
    pub fn run_adapt(
        &self,
        asr: &AsrModel,
        init: Option<&TrainedModel>,
    ) -> Result<TrainOutcome> {
        let stage = match self.plan.loo_subject {
            Some(_) => Stage::LooAdapt,
            None => Stage::Adapt,
        };
        let data = self.stage_data(stage, asr);
        train_stage(
            stage,
            &data,
            &self.config.model.generator,
            &self.config.model.discriminator,
            &self.config.train.stage,
            init,
            self.config.seed,
        )
    }

    /// Evaluate a trained generator over the test split.
    pub fn evaluate(&self, gen: &Generator, asr: &AsrModel) -> Result<EvalReport> {
        let ctx = EvalContext {
            corpus: &self.corpus,
            plan: &self.plan,
            embeddings: &self.embeddings,
            gt_mels: &self.gt_mels,
            stats: self.stats,
            mel_params: self.config.dsp.mel.clone(),
            asr,
            alphabet: &self.alphabet,
        };
        evaluate(&ctx, gen, &self.config.eval, &self.fingerprint)
    }

    /// Ground-truth voice mels pushed through the recognizer directly;
    /// returns the corpus-level CER (a re-assertion of the recognizer gate).
    pub fn gt_voice_cer(&self, asr: &AsrModel) -> Result<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for ((_, class_idx), mel) in &self.gt_mels {
            let mut asr = asr.clone();
            let lp = asr.forward(mel, false)?;
            let hyp = self.alphabet.decode(&crate::asr::greedy_decode(&lp));
            total += crate::asr::cer(&self.corpus.classes[*class_idx].transcript, &hyp);
            n += 1;
        }
        if n == 0 {
            return Err(Error::invalid("no ground-truth mels"));
        }
        Ok(total / n as f64)
    }
}
