//! Character recognition: CTC loss, greedy decoding, the trainable
//! recognizer, and the character-error-rate metric.

pub mod alphabet;
pub mod cer;
pub mod ctc;
pub mod model;
pub mod train;

pub use alphabet::{Alphabet, BLANK};
pub use cer::{cer, levenshtein};
pub use ctc::{ctc_loss, ctc_loss_grad, greedy_decode, min_frames};
pub use model::{AsrConfig, AsrModel};
pub use train::{stretch_frames, train_asr, AsrOutcome, AsrTrainConfig};
