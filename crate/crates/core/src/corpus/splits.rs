//! Train/validation/test split plans.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::classes::ClassSpec;
use crate::corpus::{Condition, TrialMeta};
use crate::error::{Error, Result};
use crate::rng::rng_for;

const SPLIT_SALT: u64 = 0x5eed_f01d_0000_0002;
pub const N_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    Fivefold,
    Loo,
}

/// Assignment of every trial to train/val/test, plus the unseen-word and
/// leave-one-out bookkeeping.
///
/// Fold assignments are stratified per (class, condition) and cover all
/// thirteen classes with 60/20/20 ratios. The unseen-label exclusion applies
/// to model-training selections (`SplitRole::Train` queries with
/// `exclude_unseen`), while spatial-filter fitting uses the raw train fold so
/// that every class contributes filters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    pub assignments: BTreeMap<u32, SplitRole>,
    pub unseen_labels: BTreeSet<String>,
    pub loo_subject: Option<usize>,
    pub scheme: SplitScheme,
    pub fold: usize,
    pub seed: u64,
}

impl SplitPlan {
    pub fn role(&self, id: u32) -> SplitRole {
        self.assignments[&id]
    }

    pub fn is_unseen(&self, classes: &[ClassSpec], meta: &TrialMeta) -> bool {
        self.unseen_labels.contains(&classes[meta.class_idx].label)
    }

    /// Trials selected for model training: train fold, unseen labels removed,
    /// and (for leave-one-out spoken pretraining) the held-out subject
    /// removed.
    pub fn model_train_ids(
        &self,
        trials: &[TrialMeta],
        classes: &[ClassSpec],
        condition: Condition,
    ) -> Vec<u32> {
        trials
            .iter()
            .filter(|m| m.condition == condition)
            .filter(|m| self.role(m.id) == SplitRole::Train)
            .filter(|m| !self.is_unseen(classes, m))
            .filter(|m| match (self.loo_subject, condition) {
                (Some(s), Condition::Spoken) => m.subject != s,
                (Some(s), Condition::Imagined) => m.subject == s,
                (None, _) => true,
            })
            .map(|m| m.id)
            .collect()
    }

    /// Validation trials for a condition (all classes, including unseen).
    pub fn val_ids(&self, trials: &[TrialMeta], condition: Condition) -> Vec<u32> {
        trials
            .iter()
            .filter(|m| m.condition == condition)
            .filter(|m| self.role(m.id) == SplitRole::Val)
            .filter(|m| match (self.loo_subject, condition) {
                (Some(s), Condition::Imagined) => m.subject == s,
                _ => true,
            })
            .map(|m| m.id)
            .collect()
    }

    /// Test trials for a condition (all classes, including unseen).
    pub fn test_ids(&self, trials: &[TrialMeta], condition: Condition) -> Vec<u32> {
        trials
            .iter()
            .filter(|m| m.condition == condition)
            .filter(|m| self.role(m.id) == SplitRole::Test)
            .filter(|m| match (self.loo_subject, condition) {
                (Some(s), Condition::Imagined) => m.subject == s,
                _ => true,
            })
            .map(|m| m.id)
            .collect()
    }

    /// Imagined train-fold trials used to fit the spatial filters. Includes
    /// the unseen classes (the filter bank spans all thirteen), excludes the
    /// leave-one-out subject when one is held out.
    pub fn csp_fit_ids(&self, trials: &[TrialMeta]) -> Vec<u32> {
        trials
            .iter()
            .filter(|m| m.condition == Condition::Imagined)
            .filter(|m| self.role(m.id) == SplitRole::Train)
            .filter(|m| match self.loo_subject {
                Some(s) => m.subject != s,
                None => true,
            })
            .map(|m| m.id)
            .collect()
    }
}

/// Build a split plan over the given trials.
///
/// Deterministic under `(seed, fold)`; trials are shuffled per
/// (class, condition) stratum and cut into five contiguous chunks, with the
/// test chunk at `fold` and the validation chunk rotated one position after.
pub fn build_splits(
    trials: &[TrialMeta],
    classes: &[ClassSpec],
    unseen_labels: &[String],
    scheme: SplitScheme,
    fold: usize,
    loo_subject: Option<usize>,
    seed: u64,
) -> Result<SplitPlan> {
    if fold >= N_FOLDS {
        return Err(Error::invalid(format!(
            "fold {fold} out of range [0, {N_FOLDS})"
        )));
    }
    for label in unseen_labels {
        if !classes.iter().any(|c| &c.label == label) {
            return Err(Error::invalid(format!(
                "unseen label '{label}' not in the class set"
            )));
        }
    }
    let loo_subject = match scheme {
        SplitScheme::Loo => Some(loo_subject.ok_or_else(|| {
            Error::invalid("leave-one-out scheme requires a held-out subject")
        })?),
        SplitScheme::Fivefold => None,
    };

    let mut assignments = BTreeMap::new();
    for class_idx in 0..classes.len() {
        for condition in [Condition::Spoken, Condition::Imagined] {
            let mut ids: Vec<u32> = trials
                .iter()
                .filter(|m| m.class_idx == class_idx && m.condition == condition)
                .map(|m| m.id)
                .collect();
            ids.sort_unstable();
            let mut rng = rng_for(
                seed,
                &[SPLIT_SALT, class_idx as u64, condition as u64],
            );
            ids.shuffle(&mut rng);
            let n = ids.len();
            let chunk = |k: usize| (k * n / N_FOLDS, (k + 1) * n / N_FOLDS);
            let (t0, t1) = chunk(fold);
            let (v0, v1) = chunk((fold + 1) % N_FOLDS);
            for (i, id) in ids.iter().enumerate() {
                let role = if (t0..t1).contains(&i) {
                    SplitRole::Test
                } else if (v0..v1).contains(&i) {
                    SplitRole::Val
                } else {
                    SplitRole::Train
                };
                assignments.insert(*id, role);
            }
        }
    }

    Ok(SplitPlan {
        assignments,
        unseen_labels: unseen_labels.iter().cloned().collect(),
        loo_subject,
        scheme,
        fold,
        seed,
    })
}
