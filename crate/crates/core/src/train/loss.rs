//! Loss assembly for the adversarial mel-synthesis objective.
//!
//! Generator total: lambda_rec * L_rec + lambda_adv * L_adv + lambda_ctc *
//! L_ctc, with L_rec the mean squared difference against the warped
//! ground-truth mel and L_adv the non-saturating -log D(G(s)).
//! Discriminator: lambda_d * (-log D(real) - log(1 - D(fake))).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub rec: f64,
    pub adv: f64,
    pub ctc: f64,
    pub disc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            rec: 45.0,
            adv: 1.0,
            ctc: 1.0,
            disc: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rec", self.rec),
            ("adv", self.adv),
            ("ctc", self.ctc),
            ("disc", self.disc),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("loss weight {name} = {v}")));
            }
        }
        if self.rec == 0.0 && self.adv == 0.0 && self.ctc == 0.0 {
            return Err(Error::Config(
                "at least one generator loss weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-term generator loss breakdown (unweighted values).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct GenLossTerms {
    pub rec: f64,
    pub adv: f64,
    pub ctc: f64,
}

impl GenLossTerms {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.rec * self.rec + w.adv * self.adv + w.ctc * self.ctc
    }
}

pub fn clamp_p(p: f64) -> f64 {
    p.clamp(P_CLAMP, 1.0 - P_CLAMP)
}

/// Assemble the generator loss; returns (total, per-term breakdown).
pub fn generator_loss(
    gen_mel: &Array2<f64>,
    gt_mel_warped: &Array2<f64>,
    disc_out_on_fake: f64,
    ctc_value: f64,
    w: &LossWeights,
) -> Result<(f64, GenLossTerms)> {
    if gen_mel.dim() != gt_mel_warped.dim() {
        return Err(Error::shape(
            format!("{:?}", gen_mel.dim()),
            format!("{:?}", gt_mel_warped.dim()),
        ));
    }
    let n = gen_mel.len() as f64;
    let rec = gen_mel
        .iter()
        .zip(gt_mel_warped.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let adv = -clamp_p(disc_out_on_fake).ln();
    let terms = GenLossTerms {
        rec,
        adv,
        ctc: ctc_value,
    };
    Ok((terms.total(w), terms))
}

/// Gradient of the (unweighted) reconstruction term with respect to the
/// generated mel.
pub fn rec_loss_grad(gen_mel: &Array2<f64>, gt_mel_warped: &Array2<f64>) -> Array2<f64> {
    let n = gen_mel.len() as f64;
    (gen_mel - gt_mel_warped) * (2.0 / n)
}

/// Discriminator loss over a batch of real/fake validity outputs.
pub fn discriminator_loss(real: &[f64], fake: &[f64], w: &LossWeights) -> f64 {
    let real_term = if real.is_empty() {
        0.0
    } else {
        -real.iter().map(|&p| clamp_p(p).ln()).sum::<f64>() / real.len() as f64
    };
    let fake_term = if fake.is_empty() {
        0.0
    } else {
        -fake.iter().map(|&p| (1.0 - clamp_p(p)).ln()).sum::<f64>() / fake.len() as f64
    };
    w.disc * (real_term + fake_term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn w1() -> LossWeights {
        LossWeights {
            rec: 1.0,
            adv: 1.0,
            ctc: 1.0,
            disc: 1.0,
        }
    }

    #[test]
    fn perfect_reconstruction_leaves_adversarial_term() {
        let m = Array2::from_elem((4, 6), 0.3);
        let (total, terms) = generator_loss(&m, &m, 0.5, 0.0, &w1()).unwrap();
        assert!(terms.rec == 0.0 && terms.ctc == 0.0);
        assert!((total - 0.6931471805599453).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_gives_squared_mse() {
        let a = Array2::from_elem((4, 6), 0.5);
        let b = Array2::from_elem((4, 6), 0.4);
        let w = LossWeights {
            rec: 1.0,
            adv: 0.0,
            ctc: 0.0,
            disc: 1.0,
        };
        let (total, _) = generator_loss(&a, &b, 0.5, 7.0, &w).unwrap();
        assert!((total - 0.01).abs() < 1e-12, "total {total}");
    }

    #[test]
    fn total_equals_weighted_breakdown() {
        let a = Array2::from_elem((2, 3), 0.2);
        let b = Array2::from_elem((2, 3), -0.1);
        let w = LossWeights {
            rec: 45.0,
            adv: 2.0,
            ctc: 0.5,
            disc: 1.0,
        };
        let (total, terms) = generator_loss(&a, &b, 0.7, 3.0, &w).unwrap();
        let recon = w.rec * terms.rec + w.adv * terms.adv + w.ctc * terms.ctc;
        assert!((total - recon).abs() < 1e-9);
    }

    #[test]
    fn disc_loss_values() {
        let w = w1();
        let l = discriminator_loss(&[0.5], &[0.5], &w);
        assert!((l - 2.0 * 2.0f64.ln()).abs() < 1e-12);
        let l = discriminator_loss(&[0.73], &[0.27], &w);
        assert!((l - 0.6296) < 1e-3 && (l - 0.6296) > -1e-3, "{l}");
        let perfect = discriminator_loss(&[1.0 - 1e-9], &[1e-9], &w);
        assert!(perfect < 1e-5, "{perfect}");
    }

    #[test]
    fn clamped_extremes_stay_finite() {
        let w = w1();
        assert!(discriminator_loss(&[0.0], &[1.0], &w).is_finite());
        let (total, _) = generator_loss(
            &Array2::zeros((1, 1)),
            &Array2::zeros((1, 1)),
            0.0,
            0.0,
            &w,
        )
        .unwrap();
        assert!(total.is_finite());
    }

    #[test]
    fn rec_grad_matches_finite_differences() {
        let a = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64) * 0.2 - (j as f64) * 0.1);
        let b = Array2::from_shape_fn((3, 4), |(i, j)| (j as f64) * 0.05 - (i as f64) * 0.02);
        let g = rec_loss_grad(&a, &b);
        let eps = 1e-6;
        for i in 0..3 {
            for j in 0..4 {
                let mut ap = a.clone();
                ap[[i, j]] += eps;
                let up: f64 =
                    ap.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 12.0;
                ap[[i, j]] -= 2.0 * eps;
                let dn: f64 =
                    ap.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 12.0;
                let fd = (up - dn) / (2.0 * eps);
                assert!((g[[i, j]] - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn all_zero_generator_weights_rejected() {
        let w = LossWeights {
            rec: 0.0,
            adv: 0.0,
            ctc: 0.0,
            disc: 1.0,
        };
        assert!(w.validate().is_err());
    }
}
