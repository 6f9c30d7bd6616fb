//! The lightweight character recognizer: two strided convolutions over time
//! (4x reduction), a bidirectional recurrent layer, and a per-step projection
//! to character log-probabilities.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{
    leaky_relu, leaky_relu_backward, log_softmax_cols, log_softmax_cols_backward,
};
use crate::nn::{BiGru, Conv1d, Linear, Module, Padding, Param};
use crate::rng::rng_for;

const SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsrConfig {
    pub in_bands: usize,
    pub conv_channels: usize,
    pub gru_hidden: usize,
    pub alphabet_len: usize,
}

impl Default for AsrConfig {
    fn default() -> Self {
        AsrConfig {
            in_bands: 80,
            conv_channels: 128,
            gru_hidden: 128,
            alphabet_len: 28,
        }
    }
}

#[derive(Debug, Clone)]
struct AsrCache {
    a1: Array2<f64>,
    a2: Array2<f64>,
    y: Array2<f64>, // log-softmax output, (A, S)
}

#[derive(Debug, Clone)]
pub struct AsrModel {
    pub cfg: AsrConfig,
    c1: Conv1d,
    c2: Conv1d,
    rnn: BiGru,
    out: Linear,
    cache: Option<AsrCache>,
}

impl AsrModel {
    pub fn new(cfg: &AsrConfig, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0x6e6e_0003]);
        let cc = cfg.conv_channels;
        AsrModel {
            cfg: cfg.clone(),
            c1: Conv1d::new("asr.c1", cfg.in_bands, cc, 5, 2, 1, Padding::CeilAuto, &mut rng),
            c2: Conv1d::new("asr.c2", cc, cc, 5, 2, 1, Padding::CeilAuto, &mut rng),
            rnn: BiGru::new("asr.rnn", cc, cfg.gru_hidden, &mut rng),
            out: Linear::new("asr.out", 2 * cfg.gru_hidden, cfg.alphabet_len, &mut rng),
            cache: None,
        }
    }

    /// Time reduction factor between input frames and output steps.
    pub const TIME_REDUCTION: usize = 4;

    /// Mel (bands, T) -> log-probabilities (ceil(T/4), alphabet), rows
    /// normalized.
    pub fn forward(&mut self, mel: &Array2<f64>, train: bool) -> Result<Array2<f64>> {
        if mel.dim().0 != self.cfg.in_bands {
            return Err(Error::shape(
                format!("({}, *)", self.cfg.in_bands),
                format!("{:?}", mel.dim()),
            ));
        }
        let a1 = leaky_relu(&self.c1.forward(mel, train), SLOPE);
        let a2 = leaky_relu(&self.c2.forward(&a1, train), SLOPE);
        let h = self.rnn.forward(&a2, train);
        let logits = self.out.forward(&h, train);
        let y = log_softmax_cols(&logits);
        if train {
            self.cache = Some(AsrCache {
                a1,
                a2,
                y: y.clone(),
            });
        }
        Ok(y.t().to_owned())
    }

    /// Backpropagate a gradient on the (S, A) log-probabilities; returns the
    /// gradient with respect to the input mel.
    pub fn backward(&mut self, g_log_probs: &Array2<f64>) -> Array2<f64> {
        let cache = self.cache.take().expect("asr backward without forward");
        let gy = g_log_probs.t().to_owned();
        let g_logits = log_softmax_cols_backward(&gy, &cache.y);
        let g_h = self.out.backward(&g_logits);
        let g_a2 = self.rnn.backward(&g_h);
        let g_c2 = leaky_relu_backward(&g_a2, &cache.a2, SLOPE);
        let g_a1 = self.c2.backward(&g_c2);
        let g_c1 = leaky_relu_backward(&g_a1, &cache.a1, SLOPE);
        self.c1.backward(&g_c1)
    }
}

impl Module for AsrModel {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.c1.visit_params(f);
        self.c2.visit_params(f);
        self.rnn.visit_params(f);
        self.out.visit_params(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;

    fn tiny() -> AsrModel {
        AsrModel::new(
            &AsrConfig {
                in_bands: 8,
                conv_channels: 12,
                gru_hidden: 6,
                alphabet_len: 5,
            },
            3,
        )
    }

    #[test]
    fn output_shape_and_row_normalization() {
        let mut m = tiny();
        let mut rng = rng_for(4, &[]);
        for t in [173usize, 192, 31] {
            let mel = gradcheck::rand_array2(&mut rng, 8, t);
            let y = m.forward(&mel, false).unwrap();
            assert_eq!(y.dim(), (t.div_ceil(4), 5), "t={t}");
            for row in y.rows() {
                let total: f64 = row.iter().map(|v| v.exp()).sum();
                assert!((total - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut m = tiny();
        let mut rng = rng_for(5, &[]);
        gradcheck::randomize_params(&mut m, &mut rng, 0.3);
        let mel = gradcheck::rand_array2(&mut rng, 8, 16);
        let err = gradcheck::check_input_grad(
            &mut |md: &mut AsrModel, x, train| md.forward(x, train).unwrap(),
            &mut |md: &mut AsrModel, gy| md.backward(gy),
            &mut m,
            &mel,
        );
        assert!(err < 1e-4, "input grad rel err {err}");
        let perr = gradcheck::check_param_grads(
            &mut |md: &mut AsrModel, x, train| md.forward(x, train).unwrap(),
            &mut |md: &mut AsrModel, gy| md.backward(gy),
            &mut m,
            &mel,
        );
        assert!(perr < 1e-4, "param grad rel err {perr}");
    }
}
