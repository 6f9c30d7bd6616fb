//! EEG preprocessing and audio feature extraction.

pub mod filter;
pub mod mel;
pub mod stft;
pub mod welch;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use filter::{butter_bandpass, filtfilt, notch, Biquad, FilterKind, FilterSpec, Sos};
pub use mel::{
    log_mel, mel_centers, mel_filterbank, mel_spectrogram, MelParams, MelSpectrogram, NormStats,
};
pub use stft::{frame_count, hann, Stft};
pub use welch::{band_power, welch_psd};

use crate::corpus::{EEG_PRE_SAMPLES, EEG_SAMPLE_RATE, EEG_TRIAL_SAMPLES};
use crate::error::{Error, Result};

/// EEG front-end configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub bandpass_order: usize,
    pub notch_hz: Vec<f64>,
    pub notch_q: f64,
    pub mel: MelParams,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            bandpass_low_hz: 30.0,
            bandpass_high_hz: 120.0,
            bandpass_order: 5,
            // Line noise and its first harmonic.
            notch_hz: vec![60.0, 120.0],
            notch_q: 30.0,
            mel: MelParams::default(),
        }
    }
}

/// EEG preprocessor with pre-designed filters.
///
/// Order of operations: zero-phase bandpass, zero-phase notches, baseline
/// subtraction using the per-channel mean of the filtered pre-trial window,
/// then the pre-trial segment is dropped.
pub struct Preprocessor {
    cascade: Vec<Sos>,
    pad: usize,
}

impl Preprocessor {
    pub fn new(cfg: &DspConfig) -> Result<Self> {
        let fs = EEG_SAMPLE_RATE;
        let bp = FilterSpec {
            kind: FilterKind::Bandpass,
            order: cfg.bandpass_order,
            band: (cfg.bandpass_low_hz, cfg.bandpass_high_hz),
            sample_rate: fs,
        }
        .design()?;
        let mut cascade = vec![bp];
        for &f0 in &cfg.notch_hz {
            cascade.push(
                FilterSpec {
                    kind: FilterKind::Notch,
                    order: 2,
                    band: (f0, cfg.notch_q),
                    sample_rate: fs,
                }
                .design()?,
            );
        }
        Ok(Preprocessor { cascade, pad: 250 })
    }

    /// Preprocess one raw trial (channels x (pre + trial) samples) into the
    /// filtered, baseline-corrected trial portion (channels x trial samples).
    pub fn process(&self, samples: &Array2<f32>) -> Result<Array2<f64>> {
        let (n_ch, n_t) = samples.dim();
        if n_t != EEG_PRE_SAMPLES + EEG_TRIAL_SAMPLES {
            return Err(Error::shape(
                format!("(*, {})", EEG_PRE_SAMPLES + EEG_TRIAL_SAMPLES),
                format!("({n_ch}, {n_t})"),
            ));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite EEG sample"));
        }
        let mut out = Array2::zeros((n_ch, EEG_TRIAL_SAMPLES));
        for ch in 0..n_ch {
            let mut row: Vec<f64> = samples.row(ch).iter().map(|&v| v as f64).collect();
            for sos in &self.cascade {
                row = filtfilt(sos, &row, self.pad);
            }
            let baseline: f64 =
                row[..EEG_PRE_SAMPLES].iter().sum::<f64>() / EEG_PRE_SAMPLES as f64;
            for (k, v) in row[EEG_PRE_SAMPLES..].iter().enumerate() {
                out[[ch, k]] = v - baseline;
            }
        }
        Ok(out)
    }
}

/// One-shot convenience wrapper with default configuration.
pub fn preprocess_eeg(samples: &Array2<f32>) -> Result<Array2<f64>> {
    Preprocessor::new(&DspConfig::default())?.process(samples)
}
