//! Sequence-feature layer: a bidirectional GRU, or a kernel-1 convolution of
//! equal width when the recurrent path is ablated.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::nn::{BiGru, Conv1d, Module, Padding, Param};

#[derive(Debug, Clone)]
pub enum SeqLayer {
    Gru(BiGru),
    Conv(Conv1d),
}

impl SeqLayer {
    /// `hidden` per direction; output width is `2 * hidden` either way.
    pub fn new(name: &str, c_in: usize, hidden: usize, use_gru: bool, rng: &mut ChaCha8Rng) -> Self {
        if use_gru {
            SeqLayer::Gru(BiGru::new(name, c_in, hidden, rng))
        } else {
            SeqLayer::Conv(Conv1d::new(
                name,
                c_in,
                2 * hidden,
                1,
                1,
                1,
                Padding::Fixed(0, 0),
                rng,
            ))
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        match self {
            SeqLayer::Gru(g) => g.forward(x, train),
            SeqLayer::Conv(c) => c.forward(x, train),
        }
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        match self {
            SeqLayer::Gru(g) => g.backward(gy),
            SeqLayer::Conv(c) => c.backward(gy),
        }
    }
}

impl Module for SeqLayer {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        match self {
            SeqLayer::Gru(g) => g.visit_params(f),
            SeqLayer::Conv(c) => c.visit_params(f),
        }
    }
}

/// Parameter count of the layer for config-level bookkeeping.
pub fn seq_param_count(c_in: usize, hidden: usize, use_gru: bool) -> usize {
    if use_gru {
        2 * (3 * hidden * c_in + 3 * hidden * hidden + 6 * hidden)
    } else {
        2 * hidden * c_in + 2 * hidden
    }
}
