//! Short-time Fourier transform with centered (reflect-padded) frames.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect()
}

/// Number of STFT frames produced for an input of `len` samples with centered
/// padding: `len / hop + 1`.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len / hop + 1
}

/// STFT engine with cached FFT plans.
pub struct Stft {
    pub nfft: usize,
    pub hop: usize,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(nfft: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        Stft {
            nfft,
            hop,
            window: hann(nfft),
            fwd: planner.plan_fft_forward(nfft),
            inv: planner.plan_fft_inverse(nfft),
        }
    }

    pub fn bins(&self) -> usize {
        self.nfft / 2 + 1
    }

    /// Magnitude-and-phase STFT of a real signal, shape (bins, frames).
    ///
    /// The signal is zero-padded by `nfft / 2` on both sides, so frame `t` is
    /// centered on sample `t * hop`.
    pub fn forward(&self, x: &[f64]) -> Array2<Complex64> {
        let half = self.nfft / 2;
        let frames = frame_count(x.len(), self.hop);
        let padded = zero_pad(x, half);
        let mut out = Array2::zeros((self.bins(), frames));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        for t in 0..frames {
            let start = t * self.hop;
            for k in 0..self.nfft {
                buf[k] = Complex64::new(padded[start + k] * self.window[k], 0.0);
            }
            self.fwd.process(&mut buf);
            for b in 0..self.bins() {
                out[[b, t]] = buf[b];
            }
        }
        out
    }

    /// Magnitude spectrogram, shape (bins, frames).
    pub fn magnitude(&self, x: &[f64]) -> Array2<f64> {
        self.forward(x).mapv(|c| c.norm())
    }

    /// Inverse STFT by weighted overlap-add with window-squared
    /// normalization. Output length is `(frames - 1) * hop`.
    pub fn inverse(&self, spec: &Array2<Complex64>) -> Vec<f64> {
        let (bins, frames) = spec.dim();
        assert_eq!(bins, self.bins(), "spectrogram bin count");
        let full = self.nfft + (frames - 1) * self.hop;
        let mut acc = vec![0.0f64; full];
        let mut norm = vec![0.0f64; full];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        for t in 0..frames {
            // Rebuild the full conjugate-symmetric spectrum of a real frame.
            for b in 0..bins {
                buf[b] = spec[[b, t]];
            }
            for b in bins..self.nfft {
                buf[b] = spec[[self.nfft - b, t]].conj();
            }
            self.inv.process(&mut buf);
            let start = t * self.hop;
            for k in 0..self.nfft {
                let v = buf[k].re / self.nfft as f64;
                acc[start + k] += v * self.window[k];
                norm[start + k] += self.window[k] * self.window[k];
            }
        }
        let half = self.nfft / 2;
        (half..full - half)
            .map(|k| acc[k] / norm[k].max(1e-12))
            .collect()
    }
}

fn zero_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + 2 * pad];
    out[pad..pad + x.len()].copy_from_slice(x);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_closed_form() {
        // 2.0 s at 22050 Hz with hop 256 -> 173 frames.
        assert_eq!(frame_count(44100, 256), 173);
        for (len, hop, want) in [
            (256, 256, 2),
            (255, 256, 1),
            (1024, 256, 5),
            (22050, 256, 87),
            (48896, 256, 192),
        ] {
            assert_eq!(frame_count(len, hop), want, "len {len}");
        }
    }

    #[test]
    fn round_trip_reconstructs_signal() {
        let stft = Stft::new(1024, 256);
        let n = 8192;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 / 22050.0;
                (2.0 * std::f64::consts::PI * 440.0 * t).sin() * 0.5
                    + (2.0 * std::f64::consts::PI * 1330.0 * t).sin() * 0.25
            })
            .collect();
        let spec = stft.forward(&x);
        let y = stft.inverse(&spec);
        assert_eq!(y.len(), (spec.dim().1 - 1) * 256);
        for k in 512..y.len().min(n) - 512 {
            assert!((x[k] - y[k]).abs() < 1e-8, "sample {k}: {} vs {}", x[k], y[k]);
        }
    }

    #[test]
    fn tone_peaks_at_expected_bin() {
        let stft = Stft::new(1024, 256);
        let fs = 22050.0;
        let x: Vec<f64> = (0..44100)
            .map(|k| (2.0 * std::f64::consts::PI * 440.0 * k as f64 / fs).sin())
            .collect();
        let mag = stft.magnitude(&x);
        let expected_bin = (440.0 / fs * 1024.0).round() as usize;
        for t in 0..mag.dim().1 {
            let col = mag.column(t);
            let argmax = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(
                argmax.abs_diff(expected_bin) <= 1,
                "frame {t}: bin {argmax} vs {expected_bin}"
            );
        }
    }
}
