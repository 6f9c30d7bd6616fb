//! Log-mel spectrograms and their normalization.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsp::stft::Stft;
use crate::error::{Error, Result};

/// STFT / mel extraction parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelParams {
    pub sample_rate: f64,
    pub nfft: usize,
    pub win: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Magnitudes are clamped to this floor before the log.
    pub floor: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        MelParams {
            sample_rate: 22050.0,
            nfft: 1024,
            win: 1024,
            hop: 256,
            n_mels: 80,
            fmin: 0.0,
            // The source voices carry no content above 8 kHz.
            fmax: 8000.0,
            floor: 1e-5,
        }
    }
}

impl MelParams {
    /// Normalized image of the magnitude floor under the given stats.
    pub fn floor_log(&self) -> f64 {
        self.floor.ln()
    }
}

/// Linear normalization of log-mel values into [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub log_min: f64,
    pub log_max: f64,
}

impl NormStats {
    /// Fit (min, max) over a set of raw log-mel matrices.
    pub fn fit<'a>(mels: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for m in mels {
            for &v in m.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Numerical(format!(
                "degenerate log-mel range [{lo}, {hi}]"
            )));
        }
        Ok(NormStats {
            log_min: lo,
            log_max: hi,
        })
    }

    pub fn normalize_value(&self, v: f64) -> f64 {
        let t = 2.0 * (v - self.log_min) / (self.log_max - self.log_min) - 1.0;
        t.clamp(-1.0, 1.0)
    }

    pub fn denormalize_value(&self, t: f64) -> f64 {
        (t + 1.0) * 0.5 * (self.log_max - self.log_min) + self.log_min
    }

    pub fn normalize(&self, m: &Array2<f64>) -> Array2<f64> {
        m.mapv(|v| self.normalize_value(v))
    }

    pub fn denormalize(&self, m: &Array2<f64>) -> Array2<f64> {
        m.mapv(|t| self.denormalize_value(t))
    }
}

/// A normalized log-mel spectrogram, shape (n_mels, frames), values in [-1, 1].
#[derive(Debug, Clone)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub stats: NormStats,
}

impl MelSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.dim().1
    }
}

/// Mel scale (Slaney flavor: linear below 1 kHz, logarithmic above).
pub fn hz_to_mel(f: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;
    if f < MIN_LOG_HZ {
        f / F_SP
    } else {
        MIN_LOG_MEL + (f / MIN_LOG_HZ).ln() / (6.4f64.ln() / 27.0)
    }
}

pub fn mel_to_hz(m: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;
    if m < MIN_LOG_MEL {
        m * F_SP
    } else {
        MIN_LOG_HZ * ((m - MIN_LOG_MEL) * (6.4f64.ln() / 27.0)).exp()
    }
}

/// Center frequencies (Hz) of the `n_mels` triangular filters.
pub fn mel_centers(params: &MelParams) -> Vec<f64> {
    let lo = hz_to_mel(params.fmin);
    let hi = hz_to_mel(params.fmax);
    (1..=params.n_mels)
        .map(|k| mel_to_hz(lo + (hi - lo) * k as f64 / (params.n_mels + 1) as f64))
        .collect()
}

/// Triangular mel filterbank, shape (n_mels, nfft/2 + 1), Slaney-normalized
/// (each triangle scaled by 2 / bandwidth).
pub fn mel_filterbank(params: &MelParams) -> Array2<f64> {
    let bins = params.nfft / 2 + 1;
    let lo = hz_to_mel(params.fmin);
    let hi = hz_to_mel(params.fmax);
    let pts: Vec<f64> = (0..params.n_mels + 2)
        .map(|k| mel_to_hz(lo + (hi - lo) * k as f64 / (params.n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((params.n_mels, bins));
    for m in 0..params.n_mels {
        let (f_lo, f_c, f_hi) = (pts[m], pts[m + 1], pts[m + 2]);
        let norm = 2.0 / (f_hi - f_lo);
        for b in 0..bins {
            let f = b as f64 * params.sample_rate / params.nfft as f64;
            let w = if f <= f_lo || f >= f_hi {
                0.0
            } else if f <= f_c {
                (f - f_lo) / (f_c - f_lo)
            } else {
                (f_hi - f) / (f_hi - f_c)
            };
            fb[[m, b]] = w * norm;
        }
    }
    fb
}

/// Raw log-mel spectrogram (before normalization), shape (n_mels, frames).
pub fn log_mel(waveform: &[f64], params: &MelParams) -> Result<Array2<f64>> {
    if waveform.is_empty() {
        return Err(Error::invalid("empty waveform"));
    }
    if waveform.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + 1e-9) {
        return Err(Error::invalid("waveform must be finite and within [-1, 1]"));
    }
    let stft = Stft::new(params.nfft, params.hop);
    let mag = stft.magnitude(waveform);
    let fb = mel_filterbank(params);
    let mel = fb.dot(&mag);
    Ok(mel.mapv(|v| v.max(params.floor).ln()))
}

/// Normalized log-mel spectrogram using the given training-set stats.
pub fn mel_spectrogram(
    waveform: &[f64],
    params: &MelParams,
    stats: NormStats,
) -> Result<MelSpectrogram> {
    let raw = log_mel(waveform, params)?;
    Ok(MelSpectrogram {
        values: stats.normalize(&raw),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft::frame_count;

    fn stats() -> NormStats {
        NormStats {
            log_min: (1e-5f64).ln(),
            log_max: 3.0,
        }
    }

    #[test]
    fn two_second_clip_has_173_frames() {
        let p = MelParams::default();
        let x = vec![0.0; 44100];
        let m = log_mel(&x, &p).unwrap();
        assert_eq!(m.dim(), (80, 173));
        assert_eq!(m.dim().1, frame_count(44100, p.hop));
    }

    #[test]
    fn zero_waveform_maps_to_floor() {
        let p = MelParams::default();
        let m = mel_spectrogram(&vec![0.0; 44100], &p, stats()).unwrap();
        let floor_img = stats().normalize_value(p.floor_log());
        for &v in m.values.iter() {
            assert_eq!(v, floor_img);
        }
    }

    #[test]
    fn tone_lands_in_expected_mel_band() {
        let p = MelParams::default();
        let x: Vec<f64> = (0..44100)
            .map(|k| 0.8 * (2.0 * std::f64::consts::PI * 440.0 * k as f64 / p.sample_rate).sin())
            .collect();
        let m = log_mel(&x, &p).unwrap();
        // Independent route to the expected band: nearest triangle peak under
        // the Slaney scale, computed from the scale formula alone.
        let lo = hz_to_mel(p.fmin);
        let hi = hz_to_mel(p.fmax);
        let expected = (0..p.n_mels)
            .min_by(|&a, &b| {
                let fa = mel_to_hz(lo + (hi - lo) * (a + 1) as f64 / (p.n_mels + 1) as f64);
                let fb = mel_to_hz(lo + (hi - lo) * (b + 1) as f64 / (p.n_mels + 1) as f64);
                (fa - 440.0).abs().partial_cmp(&(fb - 440.0).abs()).unwrap()
            })
            .unwrap();
        for t in 0..m.dim().1 {
            let col = m.column(t);
            let argmax = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, expected, "frame {t}");
        }
    }

    #[test]
    fn normalization_round_trips() {
        let s = stats();
        for v in [-11.5, -3.0, 0.0, 1.5, 2.999] {
            let r = s.denormalize_value(s.normalize_value(v));
            assert!((r - v).abs() < 1e-6, "{v} -> {r}");
        }
    }

    #[test]
    fn values_stay_in_unit_range() {
        let p = MelParams::default();
        let x: Vec<f64> = (0..44100)
            .map(|k| (k as f64 * 0.37).sin() * 0.99)
            .collect();
        let m = mel_spectrogram(&x, &p, stats()).unwrap();
        for &v in m.values.iter() {
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn empty_waveform_is_rejected() {
        assert!(log_mel(&[], &MelParams::default()).is_err());
    }
}
