//! Loss assembly, the two-stage training procedure, and the ablation grid.

pub mod ablation;
pub mod loss;
pub mod stage;

pub use ablation::{ablation_table, run_ablation, AblationOutcome, AblationRow, AblationSpec, Switch};
pub use loss::{discriminator_loss, generator_loss, rec_loss_grad, GenLossTerms, LossWeights};
pub use stage::{
    train_stage, validate, EpochRecord, Stage, StageData, TrainConfig, TrainOutcome, TrainedModel,
};
