//! Formant-stack voice synthesis.
//!
//! Each phoneme is rendered as a 120 ms segment of two formant sinusoids
//! (plus a fundamental for voiced phonemes and shaped noise for fricatives),
//! concatenated, peak-normalized and centered in a 2.0 s clip. The silence
//! class renders as -60 dBFS noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::classes::{class_index, phoneme, ClassSpec, PhonemeKind};
use crate::corpus::{VOICE_SAMPLES, VOICE_SAMPLE_RATE};
use crate::error::Result;
use crate::rng::rng_for;

/// Duration of one phoneme segment.
pub const PHONEME_SECS: f64 = 0.120;

/// One synthesized voice clip (2.0 s at 22 050 Hz, amplitudes in [-1, 1]).
#[derive(Debug, Clone)]
pub struct VoiceClip {
    pub samples: Vec<f64>,
    pub label: String,
    pub subject: usize,
}

impl VoiceClip {
    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn rms_dbfs(&self) -> f64 {
        20.0 * self.rms().max(1e-12).log10()
    }
}

/// Per-subject fundamental frequency.
fn fundamental(subject: usize) -> f64 {
    115.0 + 14.0 * (subject % 12) as f64
}

/// Synthesize the canonical voice clip for `(class, subject, seed)`.
///
/// Deterministic: the same arguments always produce bit-identical samples.
pub fn synthesize_voice(
    classes: &[ClassSpec],
    label: &str,
    subject: usize,
    seed: u64,
) -> Result<VoiceClip> {
    let idx = class_index(classes, label)?;
    let class = &classes[idx];
    let mut rng = rng_for(seed, &[]);

    if class.is_silence() {
        let samples = (0..VOICE_SAMPLES)
            .map(|_| {
                let n: f64 = StandardNormal.sample(&mut rng);
                quantize(n * 1e-3)
            })
            .collect();
        return Ok(VoiceClip {
            samples,
            label: label.to_string(),
            subject,
        });
    }

    let seg_len = (PHONEME_SECS * VOICE_SAMPLE_RATE).round() as usize;
    let f0 = fundamental(subject);
    let mut content: Vec<f64> = Vec::new();
    for (wi, word) in class.words.iter().enumerate() {
        if wi > 0 {
            content.extend(std::iter::repeat(0.0).take(seg_len));
        }
        for pid in word {
            let ph = phoneme(pid).expect("validated phoneme");
            let phase1 = rng.random::<f64>() * std::f64::consts::TAU;
            let phase2 = rng.random::<f64>() * std::f64::consts::TAU;
            let phase0 = rng.random::<f64>() * std::f64::consts::TAU;
            let (amp, voiced, noisy) = match ph.kind {
                PhonemeKind::Vowel => (1.0, true, false),
                PhonemeKind::Sonorant => (0.7, true, false),
                PhonemeKind::Stop => (0.9, false, false),
                PhonemeKind::Fricative => (0.6, false, true),
                PhonemeKind::Breathy => (0.5, false, true),
            };
            for k in 0..seg_len {
                let t = k as f64 / VOICE_SAMPLE_RATE;
                let mut v = (std::f64::consts::TAU * ph.f1 * t + phase1).sin()
                    + 0.6 * (std::f64::consts::TAU * ph.f2 * t + phase2).sin();
                if voiced {
                    v += 0.25 * (std::f64::consts::TAU * f0 * t + phase0).sin();
                }
                if noisy {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v += 0.35 * n;
                }
                content.push(amp * envelope(ph.kind, k, seg_len) * v);
            }
        }
    }

    // Peak-normalize content, then center it inside the 2.0 s clip.
    let peak = content.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let scale = 0.8 / peak;
    let mut samples = vec![0.0; VOICE_SAMPLES];
    let offset = (VOICE_SAMPLES - content.len()) / 2;
    for (k, v) in content.iter().enumerate() {
        samples[offset + k] = quantize(v * scale);
    }
    Ok(VoiceClip {
        samples,
        label: label.to_string(),
        subject,
    })
}

/// Amplitude envelope of a segment: raised-cosine attack/release ramps.
/// Stops render as a strong burst decaying to a quiet closure tail, so every
/// segment stays non-silent for its full 120 ms.
fn envelope(kind: PhonemeKind, k: usize, seg_len: usize) -> f64 {
    let ramp = (0.008 * VOICE_SAMPLE_RATE) as usize;
    let up = if k < ramp {
        0.5 - 0.5 * (std::f64::consts::PI * k as f64 / ramp as f64).cos()
    } else {
        1.0
    };
    let remaining = seg_len - k;
    let down = if remaining <= ramp {
        0.5 - 0.5 * (std::f64::consts::PI * remaining as f64 / ramp as f64).cos()
    } else {
        1.0
    };
    let sustain = match kind {
        PhonemeKind::Stop => {
            let burst = (0.040 * VOICE_SAMPLE_RATE) as usize;
            if k < burst {
                1.0
            } else {
                0.15
            }
        }
        _ => 1.0,
    };
    up.min(down) * sustain
}

/// Snap a sample to the 16-bit PCM grid so in-memory clips and WAV files on
/// disk round-trip exactly.
fn quantize(v: f64) -> f64 {
    (v.clamp(-1.0, 1.0) * 32767.0).round() / 32767.0
}

/// Smoothed amplitude envelope of a clip, resampled to `n_out` points over
/// the clip duration (moving RMS with the given window length).
pub fn modulation_envelope(clip: &VoiceClip, n_out: usize, window_ms: f64) -> Vec<f64> {
    let n = clip.samples.len();
    let mut prefix = vec![0.0f64; n + 1];
    for (k, v) in clip.samples.iter().enumerate() {
        prefix[k + 1] = prefix[k] + v * v;
    }
    let half = ((window_ms / 1000.0 * VOICE_SAMPLE_RATE) / 2.0).round() as usize;
    (0..n_out)
        .map(|k| {
            let c = (k as f64 / n_out as f64 * n as f64).round() as usize;
            let lo = c.saturating_sub(half);
            let hi = (c + half).min(n - 1);
            ((prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64).sqrt()
        })
        .collect()
}
