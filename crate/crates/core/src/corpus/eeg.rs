//! Synthetic EEG trials.
//!
//! Each trial is 1/f background noise on all channels plus, for word classes,
//! a class-specific narrowband gamma oscillation amplitude-modulated by the
//! paired voice envelope and mixed through a fixed per-(subject, class)
//! spatial pattern. Spoken trials additionally carry a broadband movement
//! artifact on the frontal/temporal channels.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::corpus::classes::{class_index, ClassSpec};
use crate::corpus::voice::{modulation_envelope, VoiceClip};
use crate::corpus::{
    Condition, CorpusConfig, EEG_CHANNELS, EEG_PRE_SAMPLES, EEG_SAMPLE_RATE, EEG_TOTAL_SAMPLES,
    EEG_TRIAL_SAMPLES,
};
use crate::error::Result;
use crate::rng::rng_for;

/// Channels receiving the spoken-speech movement artifact (frontal/temporal
/// rows of the cap).
pub const ARTIFACT_CHANNELS: std::ops::Range<usize> = 0..16;

/// Width of each class subband in Hz.
pub const SUBBAND_WIDTH_HZ: f64 = 4.0;

const PATTERN_SALT: u64 = 0x5eed_ca11_0000_0001;

/// One epoched EEG recording (pre-trial + trial), microvolts.
#[derive(Debug, Clone)]
pub struct EegTrial {
    pub samples: Array2<f32>,
    pub label: String,
    pub subject: usize,
    pub condition: Condition,
    pub seed: u64,
}

/// Center frequency of the subband assigned to a word class.
///
/// The twelve word classes get distinct 4 Hz-wide subbands inside 70-95 Hz;
/// the silence class carries no oscillation.
pub fn class_band(classes: &[ClassSpec], class_idx: usize) -> Option<(f64, f64)> {
    if classes[class_idx].is_silence() {
        return None;
    }
    let word_idx = classes[..class_idx]
        .iter()
        .filter(|c| !c.is_silence())
        .count();
    let center = 72.0 + 1.9 * word_idx as f64;
    Some((center - SUBBAND_WIDTH_HZ / 2.0, center + SUBBAND_WIDTH_HZ / 2.0))
}

/// Fixed unit-norm spatial mixing pattern for a (subject, class) pair.
pub fn spatial_pattern(subject: usize, class_idx: usize) -> Array1<f64> {
    let mut rng = rng_for(PATTERN_SALT, &[subject as u64, class_idx as u64]);
    let mut v = Array1::from_shape_fn(EEG_CHANNELS, |_| {
        let n: f64 = StandardNormal.sample(&mut rng);
        n
    });
    let norm = v.dot(&v).sqrt().max(1e-12);
    v.mapv_inplace(|x| x / norm);
    v
}

/// Synthesize one EEG trial for `(class, condition, subject, seed)`, paired
/// with the given ground-truth voice clip.
pub fn synthesize_eeg(
    classes: &[ClassSpec],
    label: &str,
    condition: Condition,
    subject: usize,
    seed: u64,
    voice: &VoiceClip,
    cfg: &CorpusConfig,
) -> Result<EegTrial> {
    let class_idx = class_index(classes, label)?;
    let mut rng = rng_for(seed, &[]);

    // 1/f background over the full epoch, one channel at a time.
    let mut samples = Array2::<f32>::zeros((EEG_CHANNELS, EEG_TOTAL_SAMPLES));
    let n = EEG_TOTAL_SAMPLES;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for ch in 0..EEG_CHANNELS {
        for c in spectrum.iter_mut() {
            *c = Complex64::new(0.0, 0.0);
        }
        for k in 1..=n / 2 {
            let f = k as f64 * EEG_SAMPLE_RATE / n as f64;
            let amp = 1.0 / f.sqrt();
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let c = Complex64::from_polar(amp, phase);
            spectrum[k] = c;
            if k != n / 2 {
                spectrum[n - k] = c.conj();
            }
        }
        ifft.process(&mut spectrum);
        let row: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
        let rms = (row.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        let scale = cfg.background_rms_uv / rms.max(1e-12);
        let dc = (rng.random::<f64>() * 2.0 - 1.0) * cfg.dc_offset_uv;
        for (t, v) in row.iter().enumerate() {
            samples[[ch, t]] = (v * scale + dc) as f32;
        }
    }

    // Class oscillation and artifact only exist in the trial portion; the
    // 500 ms pre-trial window stays background-only.
    let env = modulation_envelope(voice, EEG_TRIAL_SAMPLES, cfg.env_smooth_ms);
    let gain = match condition {
        Condition::Spoken => cfg.spoken_gain,
        Condition::Imagined => cfg.imagined_gain,
    };
    if let Some((lo, hi)) = class_band(classes, class_idx) {
        let center = (lo + hi) / 2.0;
        let pattern = spatial_pattern(subject, class_idx);
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        for t in 0..EEG_TRIAL_SAMPLES {
            let osc = (std::f64::consts::TAU * center * t as f64 / EEG_SAMPLE_RATE + phase).sin();
            let amp = gain * cfg.class_amp_uv * env[t] * osc;
            for ch in 0..EEG_CHANNELS {
                samples[[ch, EEG_PRE_SAMPLES + t]] += (pattern[ch] * amp) as f32;
            }
        }
    }
    if condition == Condition::Spoken {
        for ch in ARTIFACT_CHANNELS {
            for t in 0..EEG_TRIAL_SAMPLES {
                let n: f64 = StandardNormal.sample(&mut rng);
                samples[[ch, EEG_PRE_SAMPLES + t]] += (cfg.artifact_rms_uv * env[t] * n) as f32;
            }
        }
    }

    Ok(EegTrial {
        samples,
        label: label.to_string(),
        subject,
        condition,
        seed,
    })
}
