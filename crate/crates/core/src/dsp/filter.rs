//! IIR filter design and zero-phase filtering for the EEG front end.
//!
//! The bandpass is a true Butterworth bandpass (analog prototype, lowpass to
//! bandpass transform, bilinear transform with prewarped edges) factored into
//! second-order sections. Line-noise notches are RBJ biquads. All filtering is
//! applied forward-backward, so the effective magnitude response is |H|^2 and
//! the phase response is zero.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One second-order section, coefficients normalized so a0 = 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Direct-form II transposed pass over a signal.
    ///
    /// The state is initialized to the steady-state response for a constant
    /// input equal to the first sample, so a constant signal produces zero
    /// startup transient.
    pub fn filter_inplace(&self, x: &mut [f64]) {
        let x0 = x.first().copied().unwrap_or(0.0);
        let h1 = self.dc_gain();
        let mut s1 = (h1 - self.b0) * x0;
        let mut s2 = (self.b2 - self.a2 * h1) * x0;
        for v in x.iter_mut() {
            let xin = *v;
            let y = self.b0 * xin + s1;
            s1 = self.b1 * xin - self.a1 * y + s2;
            s2 = self.b2 * xin - self.a2 * y;
            *v = y;
        }
    }

    /// Response to a constant input.
    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// Complex frequency response at digital angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }
}

/// A cascade of biquads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    pub fn filter_inplace(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.filter_inplace(x);
        }
    }

    pub fn response(&self, w: f64) -> Complex64 {
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(w))
    }

    /// Magnitude response at frequency `f` Hz for sample rate `fs`.
    pub fn magnitude_at(&self, f: f64, fs: f64) -> f64 {
        self.response(2.0 * std::f64::consts::PI * f / fs).norm()
    }
}

/// Filter kind requested by a [`FilterSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Bandpass,
    Notch,
}

/// Declarative filter description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    /// (low, high) for bandpass; (center, q) for notch.
    pub band: (f64, f64),
    pub sample_rate: f64,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::invalid("filter order must be >= 1"));
        }
        let nyq = self.sample_rate / 2.0;
        match self.kind {
            FilterKind::Bandpass => {
                let (lo, hi) = self.band;
                if !(0.0 < lo && lo < hi && hi < nyq) {
                    return Err(Error::invalid(format!(
                        "bandpass edges must satisfy 0 < {lo} < {hi} < {nyq}"
                    )));
                }
            }
            FilterKind::Notch => {
                let (f0, q) = self.band;
                if !(0.0 < f0 && f0 < nyq) {
                    return Err(Error::invalid(format!(
                        "notch center must satisfy 0 < {f0} < {nyq}"
                    )));
                }
                if q <= 0.0 {
                    return Err(Error::invalid("notch Q must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn design(&self) -> Result<Sos> {
        self.validate()?;
        match self.kind {
            FilterKind::Bandpass => Ok(butter_bandpass(
                self.order,
                self.band.0,
                self.band.1,
                self.sample_rate,
            )),
            FilterKind::Notch => Ok(Sos {
                sections: vec![notch(self.band.0, self.band.1, self.sample_rate)],
            }),
        }
    }
}

/// RBJ cookbook notch biquad.
pub fn notch(f0: f64, q: f64, fs: f64) -> Biquad {
    let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cw = w0.cos();
    let a0 = 1.0 + alpha;
    Biquad {
        b0: 1.0 / a0,
        b1: -2.0 * cw / a0,
        b2: 1.0 / a0,
        a1: -2.0 * cw / a0,
        a2: (1.0 - alpha) / a0,
    }
}

/// Butterworth bandpass of prototype order `n` (2n poles total) as SOS.
pub fn butter_bandpass(n: usize, f_lo: f64, f_hi: f64, fs: f64) -> Sos {
    // Analog prototype poles on the unit circle, left half plane.
    let mut proto = Vec::with_capacity(n);
    for k in 1..=n {
        let theta = std::f64::consts::PI * (2.0 * k as f64 - 1.0) / (2.0 * n as f64);
        proto.push(Complex64::new(-theta.sin(), theta.cos()));
    }

    // Prewarped analog band edges.
    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / fs).tan();
    let w1 = warp(f_lo);
    let w2 = warp(f_hi);
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;

    // Lowpass -> bandpass: each prototype pole splits into two.
    let mut apoles = Vec::with_capacity(2 * n);
    for p in proto {
        let pb = p * bw * 0.5;
        let disc = (pb * pb - Complex64::new(w0 * w0, 0.0)).sqrt();
        apoles.push(pb + disc);
        apoles.push(pb - disc);
    }
    // n analog zeros at s = 0; the remaining n map to z = -1 after bilinear.

    // Bilinear transform of the poles.
    let zpoles: Vec<Complex64> = apoles
        .iter()
        .map(|&s| (Complex64::new(fs2, 0.0) + s) / (Complex64::new(fs2, 0.0) - s))
        .collect();

    // Group poles into conjugate pairs (or real pairs) and attach one zero at
    // z = +1 and one at z = -1 per section, i.e. numerator z^2 - 1.
    let mut complex_upper: Vec<Complex64> = zpoles.iter().cloned().filter(|p| p.im > 1e-12).collect();
    let mut reals: Vec<f64> = zpoles
        .iter()
        .filter(|p| p.im.abs() <= 1e-12)
        .map(|p| p.re)
        .collect();
    complex_upper.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut sections = Vec::new();
    for p in complex_upper {
        sections.push(Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -2.0 * p.re,
            a2: p.norm_sqr(),
        });
    }
    let mut iter = reals.chunks_exact(2);
    for pair in &mut iter {
        sections.push(Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -(pair[0] + pair[1]),
            a2: pair[0] * pair[1],
        });
    }
    debug_assert!(iter.remainder().is_empty(), "bandpass pole count is even");

    // Normalize overall gain to 1 at the (digital image of the) center
    // frequency, then spread the gain evenly over sections.
    let mut sos = Sos { sections };
    let wc = 2.0 * (w0 / fs2).atan();
    let g = sos.response(wc).norm();
    let per_section = (1.0 / g).powf(1.0 / sos.sections.len() as f64);
    for s in &mut sos.sections {
        s.b0 *= per_section;
        s.b1 *= per_section;
        s.b2 *= per_section;
    }
    sos
}

/// Zero-phase filtering: forward pass, reverse, forward pass, reverse.
///
/// The signal is extended at both ends by an odd reflection (`2*x[0] - x[k]`)
/// of `pad` samples to suppress end transients, matching common practice for
/// forward-backward IIR filtering.
pub fn filtfilt(sos: &Sos, x: &[f64], pad: usize) -> Vec<f64> {
    let pad = pad.min(x.len().saturating_sub(1));
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for k in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[k]);
    }
    ext.extend_from_slice(x);
    for k in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - k]);
    }

    sos.filter_inplace(&mut ext);
    ext.reverse();
    sos.filter_inplace(&mut ext);
    ext.reverse();

    ext[pad..pad + n].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eeg_bandpass() -> Sos {
        butter_bandpass(5, 30.0, 120.0, 2500.0)
    }

    #[test]
    fn bandpass_has_five_sections() {
        assert_eq!(eeg_bandpass().sections.len(), 5);
    }

    #[test]
    fn bandpass_edges_are_half_power() {
        let sos = eeg_bandpass();
        for f in [30.0, 120.0] {
            let m = sos.magnitude_at(f, 2500.0);
            assert!(
                (m * m - 0.5).abs() < 1e-6,
                "edge {f} Hz magnitude^2 {}",
                m * m
            );
        }
    }

    #[test]
    fn bandpass_passband_is_flat() {
        let sos = eeg_bandpass();
        let m = sos.magnitude_at(60.0, 2500.0);
        assert!((m - 1.0).abs() < 1e-3, "center magnitude {m}");
    }

    #[test]
    fn bandpass_rejects_dc() {
        let sos = eeg_bandpass();
        assert!(sos.magnitude_at(0.0, 2500.0) < 1e-12);
    }

    #[test]
    fn stopband_attenuation_at_20hz() {
        // Single pass; the preprocessing applies it twice (zero phase).
        let sos = eeg_bandpass();
        let db = 20.0 * sos.magnitude_at(20.0, 2500.0).log10();
        assert!(db < -20.0, "single-pass attenuation at 20 Hz: {db} dB");
    }

    #[test]
    fn notch_kills_center_keeps_neighbors() {
        let nb = Sos {
            sections: vec![notch(60.0, 30.0, 2500.0)],
        };
        assert!(nb.magnitude_at(60.0, 2500.0) < 1e-10);
        assert!(nb.magnitude_at(50.0, 2500.0) > 0.9);
        assert!(nb.magnitude_at(70.0, 2500.0) > 0.9);
    }

    #[test]
    fn filtfilt_matches_squared_magnitude_on_sine() {
        let sos = eeg_bandpass();
        let fs = 2500.0;
        let f = 45.0;
        let n = 5000;
        let x: Vec<f64> = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * f * k as f64 / fs).sin())
            .collect();
        let y = filtfilt(&sos, &x, 250);
        // Compare RMS over the interior to avoid residual edge effects.
        let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
        let gain = rms(&y[1000..4000]) / rms(&x[1000..4000]);
        let expected = sos.magnitude_at(f, fs).powi(2);
        assert!(
            (gain - expected).abs() < 0.01,
            "gain {gain}, expected {expected}"
        );
    }

    #[test]
    fn filtfilt_is_zero_phase() {
        let sos = eeg_bandpass();
        let fs = 2500.0;
        let f = 60.0;
        let n = 5000;
        let x: Vec<f64> = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * f * k as f64 / fs).sin())
            .collect();
        let y = filtfilt(&sos, &x, 250);
        // Zero-phase: y is proportional to x sample by sample in the interior.
        let g = sos.magnitude_at(f, fs).powi(2);
        for k in 2000..3000 {
            assert!((y[k] - g * x[k]).abs() < 0.02, "sample {k}");
        }
    }
}
