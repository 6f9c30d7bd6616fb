//! EEG-to-speech synthesis at desk scale.
//!
//! The pipeline turns multichannel EEG trials of spoken and imagined speech
//! into mel-spectrograms and audible waveforms: common-spatial-pattern
//! embeddings feed an adversarially trained generator; a CTC character
//! recognizer supervises the character content; ground-truth voice is aligned
//! by dynamic time warping; a Griffin-Lim vocoder renders audio. A two-step
//! domain-adaptation procedure (shared spatial filters, then fine-tuning)
//! carries the spoken-speech model over to imagined speech. Real recordings
//! are replaced by a deterministic synthetic corpus so every stage is
//! reproducible from a config and a seed.

pub mod align;
pub mod asr;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod dsp;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod train;
pub mod vocoder;

pub use config::RunConfig;
pub use error::{Error, Result};
