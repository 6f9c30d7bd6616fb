//! Welch power spectral density estimation (used for corpus diagnostics).

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::stft::hann;

/// Welch PSD with Hann window and 50% overlap.
///
/// Returns `(frequencies, psd)` where `psd[k]` has units of power per Hz.
pub fn welch_psd(x: &[f64], fs: f64, nperseg: usize) -> (Vec<f64>, Vec<f64>) {
    let nperseg = nperseg.min(x.len());
    let hop = nperseg / 2;
    let window = hann(nperseg);
    let win_pow: f64 = window.iter().map(|w| w * w).sum();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nperseg);

    let bins = nperseg / 2 + 1;
    let mut psd = vec![0.0f64; bins];
    let mut segments = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nperseg];
    let mut start = 0;
    while start + nperseg <= x.len() {
        let seg = &x[start..start + nperseg];
        let mean = seg.iter().sum::<f64>() / nperseg as f64;
        for k in 0..nperseg {
            buf[k] = Complex64::new((seg[k] - mean) * window[k], 0.0);
        }
        fft.process(&mut buf);
        for b in 0..bins {
            let scale = if b == 0 || b == bins - 1 { 1.0 } else { 2.0 };
            psd[b] += scale * buf[b].norm_sqr() / (fs * win_pow);
        }
        segments += 1;
        start += hop;
    }
    if segments > 0 {
        for v in psd.iter_mut() {
            *v /= segments as f64;
        }
    }
    let freqs = (0..bins).map(|b| b as f64 * fs / nperseg as f64).collect();
    (freqs, psd)
}

/// Total power in the half-open band [lo, hi) (integral of the PSD).
///
/// Half-open so that adjacent same-width bands always cover the same number
/// of frequency bins.
pub fn band_power(freqs: &[f64], psd: &[f64], lo: f64, hi: f64) -> f64 {
    let df = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 1.0 };
    freqs
        .iter()
        .zip(psd)
        .filter(|(f, _)| **f >= lo && **f < hi)
        .map(|(_, p)| p * df)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_power_is_recovered() {
        let fs = 2500.0;
        let amp = 3.0;
        let x: Vec<f64> = (0..5000)
            .map(|k| amp * (2.0 * std::f64::consts::PI * 80.0 * k as f64 / fs).sin())
            .collect();
        let (freqs, psd) = welch_psd(&x, fs, 1024);
        let p = band_power(&freqs, &psd, 70.0, 90.0);
        let expected = amp * amp / 2.0;
        assert!(
            (p - expected).abs() / expected < 0.05,
            "band power {p} vs {expected}"
        );
    }

    #[test]
    fn out_of_band_power_is_negligible() {
        let fs = 2500.0;
        let x: Vec<f64> = (0..5000)
            .map(|k| (2.0 * std::f64::consts::PI * 80.0 * k as f64 / fs).sin())
            .collect();
        let (freqs, psd) = welch_psd(&x, fs, 1024);
        assert!(band_power(&freqs, &psd, 200.0, 400.0) < 1e-6);
    }
}
