//! Mel-spectrogram to waveform conversion.
//!
//! The built-in path denormalizes the mel, inverts the filterbank by a
//! clamped pseudo-inverse refined with projected-gradient nonnegative least
//! squares, recovers phase with plain Griffin-Lim (zero-phase init, monotone
//! convergence), and peak-normalizes the result. An `External` kind hands a
//! mel file to an outside process and reads the waveform back, so a neural
//! vocoder can be substituted without touching callers.

use std::path::PathBuf;
use std::sync::OnceLock;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::corpus::io::{read_wav, write_trial_f32};
use crate::dsp::mel::{mel_filterbank, MelParams, MelSpectrogram};
use crate::dsp::stft::Stft;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, top_eigenvalue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocoderKind {
    GriffinLim,
    /// Process-boundary contract: `command <mel.f64> <out.wav>`.
    External { command: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocoderSpec {
    pub kind: VocoderKind,
    pub gl_iters: usize,
    pub nnls_iters: usize,
    pub mel: MelParams,
}

impl Default for VocoderSpec {
    fn default() -> Self {
        VocoderSpec {
            kind: VocoderKind::GriffinLim,
            gl_iters: 60,
            nnls_iters: 40,
            mel: MelParams::default(),
        }
    }
}

impl VocoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gl_iters < 1 {
            return Err(Error::Config("gl_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Invert the mel filterbank to linear-frequency magnitudes (bins x frames).
///
/// Pseudo-inverse start (clamped at zero), then projected-gradient descent on
/// ||M x - v||^2 with step 1 / lambda_max(M M^T).
pub fn mel_to_linear(mel_mag: &Array2<f64>, params: &MelParams, iters: usize) -> Result<Array2<f64>> {
    let m = mel_filterbank(params);
    let g = {
        let mut g = m.dot(&m.t());
        for i in 0..g.dim().0 {
            g[[i, i]] += 1e-10;
        }
        g
    };
    let l = cholesky(&g)?;
    let y = cholesky_solve(&l, mel_mag);
    let mut x = m.t().dot(&y);
    x.mapv_inplace(|v| v.max(0.0));
    let step = 1.0 / top_eigenvalue(&g, 50).max(1e-12);
    for _ in 0..iters {
        let resid = m.dot(&x) - mel_mag;
        let grad = m.t().dot(&resid);
        x.zip_mut_with(&grad, |xv, &gv| *xv = (*xv - step * gv).max(0.0));
    }
    Ok(x)
}

/// Plain Griffin-Lim phase recovery with zero-phase initialization.
pub fn griffin_lim(magnitude: &Array2<f64>, params: &MelParams, iters: usize) -> Vec<f64> {
    let stft = Stft::new(params.nfft, params.hop);
    let spec = magnitude.mapv(|m| Complex64::new(m, 0.0));
    let mut x = stft.inverse(&spec);
    for _ in 1..iters {
        let s = stft.forward(&x);
        let mut projected = s;
        projected.zip_mut_with(magnitude, |c, &m| {
            let norm = c.norm();
            *c = if norm > 1e-30 {
                *c * (m / norm)
            } else {
                Complex64::new(m, 0.0)
            };
        });
        x = stft.inverse(&projected);
    }
    x
}

/// Residual between the magnitude of `stft(x)` and a target magnitude
/// (Frobenius norm); used to check Griffin-Lim convergence.
pub fn spectral_distance(x: &[f64], magnitude: &Array2<f64>, params: &MelParams) -> f64 {
    let stft = Stft::new(params.nfft, params.hop);
    let s = stft.magnitude(x);
    (&s - magnitude).mapv(|d| d * d).sum().sqrt()
}

/// Convert a normalized mel-spectrogram to a waveform.
pub fn mel_to_waveform(m: &MelSpectrogram, spec: &VocoderSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if m.values.dim().0 != spec.mel.n_mels {
        return Err(Error::shape(
            format!("({}, *)", spec.mel.n_mels),
            format!("{:?}", m.values.dim()),
        ));
    }
    match &spec.kind {
        VocoderKind::GriffinLim => {
            let log = m.stats.denormalize(&m.values);
            let mel_mag = log.mapv(f64::exp);
            let linear = mel_to_linear(&mel_mag, &spec.mel, spec.nnls_iters)?;
            let x = griffin_lim(&linear, &spec.mel, spec.gl_iters);
            Ok(peak_normalize(x))
        }
        VocoderKind::External { command } => external_vocoder(m, command),
    }
}

/// Scale audible content to a 0.95 peak; leave silence untouched so quiet
/// mels stay quiet.
fn peak_normalize(mut x: Vec<f64>) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1e-3 {
        let s = 0.95 / peak;
        for v in &mut x {
            *v *= s;
        }
    }
    x
}

fn external_vocoder(m: &MelSpectrogram, command: &str) -> Result<Vec<f64>> {
    static COUNTER: OnceLock<std::sync::atomic::AtomicU64> = OnceLock::new();
    let counter = COUNTER.get_or_init(|| std::sync::atomic::AtomicU64::new(0));
    let k = counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
    let dir = std::env::temp_dir();
    let mel_path: PathBuf = dir.join(format!("eegspeak-mel-{}-{k}.f32", std::process::id()));
    let wav_path: PathBuf = dir.join(format!("eegspeak-mel-{}-{k}.wav", std::process::id()));
    write_trial_f32(&mel_path, &m.values.mapv(|v| v as f32))?;
    let status = std::process::Command::new(command)
        .arg(&mel_path)
        .arg(&wav_path)
        .status()
        .map_err(|e| Error::MissingComponent(format!("external vocoder '{command}': {e}")))?;
    if !status.success() {
        return Err(Error::Numerical(format!(
            "external vocoder exited with {status}"
        )));
    }
    let (samples, _) = read_wav(&wav_path)?;
    std::fs::remove_file(&mel_path).ok();
    std::fs::remove_file(&wav_path).ok();
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::mel::{log_mel, NormStats};

    fn stats() -> NormStats {
        NormStats {
            log_min: (1e-5f64).ln(),
            log_max: 2.0,
        }
    }

    fn tone(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| 0.7 * (std::f64::consts::TAU * freq * k as f64 / 22050.0).sin())
            .collect()
    }

    #[test]
    fn output_length_matches_frame_count() {
        let params = MelParams::default();
        let mel = MelSpectrogram {
            values: Array2::from_elem((80, 40), -0.8),
            stats: stats(),
        };
        let spec = VocoderSpec {
            gl_iters: 3,
            nnls_iters: 5,
            ..VocoderSpec::default()
        };
        let y = mel_to_waveform(&mel, &spec).unwrap();
        assert_eq!(y.len(), 39 * params.hop);
    }

    #[test]
    fn floor_mel_renders_silence() {
        let mel = MelSpectrogram {
            values: Array2::from_elem((80, 60), -1.0),
            stats: stats(),
        };
        let spec = VocoderSpec {
            gl_iters: 5,
            nnls_iters: 5,
            ..VocoderSpec::default()
        };
        let y = mel_to_waveform(&mel, &spec).unwrap();
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
        assert!(20.0 * rms.max(1e-12).log10() < -40.0);
    }

    #[test]
    fn tone_round_trip_recovers_frequency() {
        let params = MelParams::default();
        let x = tone(440.0, 44100);
        let stats = NormStats::fit([&log_mel(&x, &params).unwrap()]).unwrap();
        let mel = MelSpectrogram {
            values: stats.normalize(&log_mel(&x, &params).unwrap()),
            stats,
        };
        let spec = VocoderSpec {
            gl_iters: 30,
            nnls_iters: 40,
            ..VocoderSpec::default()
        };
        let y = mel_to_waveform(&mel, &spec).unwrap();
        // Dominant frequency via a long periodogram.
        let n = 32768.min(y.len());
        let mut planner = rustfft::FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut buf: Vec<Complex64> = y[..n].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut buf);
        let peak = (1..n / 2)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap();
        let f_peak = peak as f64 * 22050.0 / n as f64;
        let bin_hz = 22050.0 / 1024.0;
        assert!(
            (f_peak - 440.0).abs() <= bin_hz,
            "dominant frequency {f_peak}"
        );
    }

    #[test]
    fn more_iterations_never_increase_spectral_error() {
        let params = MelParams::default();
        let x = tone(600.0, 11025);
        let stft = Stft::new(params.nfft, params.hop);
        let target = stft.magnitude(&x);
        let mut prev = f64::INFINITY;
        for iters in [5usize, 20, 60] {
            let y = griffin_lim(&target, &params, iters);
            let err = spectral_distance(&y, &target, &params);
            assert!(err <= prev + 1e-6, "iters {iters}: {err} > {prev}");
            prev = err;
        }
    }

    #[test]
    fn determinism() {
        let mel = MelSpectrogram {
            values: Array2::from_shape_fn((80, 30), |(i, j)| {
                ((i as f64) * 0.11 + (j as f64) * 0.07).sin() * 0.4 - 0.5
            }),
            stats: stats(),
        };
        let spec = VocoderSpec {
            gl_iters: 8,
            nnls_iters: 10,
            ..VocoderSpec::default()
        };
        let a = mel_to_waveform(&mel, &spec).unwrap();
        let b = mel_to_waveform(&mel, &spec).unwrap();
        assert_eq!(a, b);
    }
}
