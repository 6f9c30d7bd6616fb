//! The ablation grid: disable one component at a time and run the full
//! two-stage pipeline.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::asr::AsrModel;
use crate::config::RunConfig;
use crate::error::Result;
use crate::pipeline::{prepare, Prepared};
use crate::train::TrainOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switch {
    /// Replace recurrent layers with kernel-1 convolutions of equal width.
    Gru,
    GanLoss,
    RecLoss,
    CtcLoss,
    /// Train the imagined stage from random initialization (spatial filters
    /// stay shared).
    Da,
}

impl Switch {
    pub fn all() -> [Switch; 5] {
        [
            Switch::Gru,
            Switch::GanLoss,
            Switch::RecLoss,
            Switch::CtcLoss,
            Switch::Da,
        ]
    }

    pub fn row_label(self) -> &'static str {
        match self {
            Switch::Gru => "w/o GRU",
            Switch::GanLoss => "w/o GAN loss",
            Switch::RecLoss => "w/o reconstruction loss",
            Switch::CtcLoss => "w/o CTC loss",
            Switch::Da => "w/o DA",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AblationSpec {
    pub disabled: BTreeSet<Switch>,
}

impl AblationSpec {
    pub fn single(s: Switch) -> Self {
        AblationSpec {
            disabled: [s].into_iter().collect(),
        }
    }

    /// Apply the switches to a run configuration.
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        if self.disabled.contains(&Switch::Gru) {
            cfg.model.generator.use_gru = false;
            cfg.model.discriminator.use_gru = false;
        }
        if self.disabled.contains(&Switch::GanLoss) {
            cfg.train.stage.weights.adv = 0.0;
        }
        if self.disabled.contains(&Switch::RecLoss) {
            cfg.train.stage.weights.rec = 0.0;
        }
        if self.disabled.contains(&Switch::CtcLoss) {
            cfg.train.stage.weights.ctc = 0.0;
        }
        cfg
    }

    pub fn skips_pretraining(&self) -> bool {
        self.disabled.contains(&Switch::Da)
    }
}

/// One row of the ablation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub cer_mean: f64,
    pub cer_std: f64,
}

/// Outcome of one ablation run (test metrics on imagined speech, matching
/// the grid's baseline row).
pub struct AblationOutcome {
    pub row: AblationRow,
    pub prepared: Prepared,
    pub adapted: TrainOutcome,
    pub spoken: Option<TrainOutcome>,
    pub asr: AsrModel,
}

/// Run the full pipeline under an ablation spec.
pub fn run_ablation(spec: &AblationSpec, base: &RunConfig, label: &str) -> Result<AblationOutcome> {
    let cfg = spec.apply(base);
    let prepared = prepare(&cfg)?;
    let (asr, _) = prepared.train_asr()?;
    let (spoken, adapted) = if spec.skips_pretraining() {
        (None, prepared.run_adapt(&asr, None)?)
    } else {
        let spoken = prepared.run_spoken(&asr)?;
        let adapted = prepared.run_adapt(&asr, Some(&spoken.model))?;
        (Some(spoken), adapted)
    };
    let report = prepared.evaluate(&adapted.model.gen, &asr)?;
    let stats = report.row(crate::corpus::Condition::Imagined, false);
    Ok(AblationOutcome {
        row: AblationRow {
            label: label.to_string(),
            rmse_mean: stats.rmse_mean,
            rmse_std: stats.rmse_std,
            cer_mean: stats.cer_mean,
            cer_std: stats.cer_std,
        },
        prepared,
        adapted,
        spoken,
        asr,
    })
}

/// Render ablation rows as a delimited table (baseline first).
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("input\trmse\trmse_std\tcer\tcer_std\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.3}\t{:.3}\t{:.2}\t{:.2}\n",
            r.label, r.rmse_mean, r.rmse_std, r.cer_mean, r.cer_std
        ));
    }
    out
}
