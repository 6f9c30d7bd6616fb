//! Multi-receptive-field fusion: parallel residual convolution branches with
//! different kernel sizes, outputs averaged.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::nn::ops::{leaky_relu, leaky_relu_backward};
use crate::nn::{Conv1d, Module, Param};

pub const LRELU_SLOPE: f64 = 0.1;

/// One residual unit: x + conv_k1(lrelu(conv_kd(lrelu(x)))).
#[derive(Debug, Clone)]
pub struct ResUnit {
    c1: Conv1d,
    c2: Conv1d,
    a1: Option<Array2<f64>>,
    a2: Option<Array2<f64>>,
}

impl ResUnit {
    fn new(name: &str, channels: usize, k: usize, dilation: usize, rng: &mut ChaCha8Rng) -> Self {
        ResUnit {
            c1: Conv1d::same(&format!("{name}.c1"), channels, channels, k, dilation, rng),
            c2: Conv1d::same(&format!("{name}.c2"), channels, channels, k, 1, rng),
            a1: None,
            a2: None,
        }
    }

    fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let a1 = leaky_relu(x, LRELU_SLOPE);
        let h = self.c1.forward(&a1, train);
        let a2 = leaky_relu(&h, LRELU_SLOPE);
        let d = self.c2.forward(&a2, train);
        if train {
            self.a1 = Some(a1);
            self.a2 = Some(a2);
        }
        x + &d
    }

    fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let a2 = self.a2.take().expect("resunit backward without forward");
        let a1 = self.a1.take().expect("resunit backward without forward");
        let ga2 = self.c2.backward(gy);
        let gh = leaky_relu_backward(&ga2, &a2, LRELU_SLOPE);
        let ga1 = self.c1.backward(&gh);
        gy + &leaky_relu_backward(&ga1, &a1, LRELU_SLOPE)
    }

    /// Make this unit the identity map (zero the second convolution).
    pub fn set_identity(&mut self) {
        self.c2.w.v.fill(0.0);
        self.c2.b.v.fill(0.0);
    }
}

impl Module for ResUnit {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.c1.visit_params(f);
        self.c2.visit_params(f);
    }
}

/// One branch: residual units over the dilation ladder at a fixed kernel.
#[derive(Debug, Clone)]
pub struct ResBranch {
    units: Vec<ResUnit>,
}

impl ResBranch {
    fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let mut h = x.clone();
        for u in &mut self.units {
            h = u.forward(&h, train);
        }
        h
    }

    fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let mut g = gy.clone();
        for u in self.units.iter_mut().rev() {
            g = u.backward(&g);
        }
        g
    }
}

impl Module for ResBranch {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for u in &mut self.units {
            u.visit_params(f);
        }
    }
}

/// The fusion block: one branch per kernel size, outputs averaged.
#[derive(Debug, Clone)]
pub struct Mrf {
    pub branches: Vec<ResBranch>,
}

impl Mrf {
    pub fn new(
        name: &str,
        channels: usize,
        kernels: &[usize],
        dilations: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let branches = kernels
            .iter()
            .enumerate()
            .map(|(bi, &k)| ResBranch {
                units: dilations
                    .iter()
                    .enumerate()
                    .map(|(ui, &d)| {
                        ResUnit::new(&format!("{name}.b{bi}.u{ui}"), channels, k, d, rng)
                    })
                    .collect(),
            })
            .collect();
        Mrf { branches }
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let n = self.branches.len() as f64;
        let mut acc: Option<Array2<f64>> = None;
        for b in &mut self.branches {
            let y = b.forward(x, train);
            acc = Some(match acc {
                Some(a) => a + y,
                None => y,
            });
        }
        acc.expect("mrf has branches") / n
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let shared = gy / self.branches.len() as f64;
        let mut acc: Option<Array2<f64>> = None;
        for b in &mut self.branches {
            let g = b.backward(&shared);
            acc = Some(match acc {
                Some(a) => a + g,
                None => g,
            });
        }
        acc.expect("mrf has branches")
    }

    /// Initialize every unit to the identity map (test hook for the residual
    /// wiring).
    pub fn set_identity(&mut self) {
        for b in &mut self.branches {
            for u in &mut b.units {
                u.set_identity();
            }
        }
    }
}

impl Module for Mrf {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for b in &mut self.branches {
            b.visit_params(f);
        }
    }
}

/// Parameter count of one MRF block (for config-level bookkeeping).
pub fn mrf_param_count(channels: usize, kernels: &[usize], dilations: &[usize]) -> usize {
    kernels
        .iter()
        .map(|&k| dilations.len() * 2 * (channels * channels * k + channels))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::rng::rng_for;

    #[test]
    fn identity_initialized_mrf_is_identity() {
        let mut rng = rng_for(51, &[]);
        let mut mrf = Mrf::new("m", 4, &[1, 1, 1], &[1, 1, 1], &mut rng);
        mrf.set_identity();
        let x = gradcheck::rand_array2(&mut rng, 4, 9);
        let y = mrf.forward(&x, false);
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mrf_preserves_shape() {
        let mut rng = rng_for(52, &[]);
        let mut mrf = Mrf::new("m", 6, &[3, 7, 11], &[1, 3, 5], &mut rng);
        let x = gradcheck::rand_array2(&mut rng, 6, 24);
        assert_eq!(mrf.forward(&x, false).dim(), (6, 24));
    }

    #[test]
    fn mrf_gradients_match_finite_differences() {
        let mut rng = rng_for(53, &[]);
        let mut mrf = Mrf::new("m", 3, &[3, 5], &[1, 2], &mut rng);
        gradcheck::randomize_params(&mut mrf, &mut rng, 0.4);
        let x = gradcheck::rand_array2(&mut rng, 3, 8);
        let err = gradcheck::check_input_grad(
            &mut |m: &mut Mrf, x, train| m.forward(x, train),
            &mut |m: &mut Mrf, gy| m.backward(gy),
            &mut mrf,
            &x,
        );
        assert!(err < 1e-5, "input grad rel err {err}");
        let perr = gradcheck::check_param_grads(
            &mut |m: &mut Mrf, x, train| m.forward(x, train),
            &mut |m: &mut Mrf, gy| m.backward(gy),
            &mut mrf,
            &x,
        );
        assert!(perr < 1e-5, "param grad rel err {perr}");
    }

    #[test]
    fn param_count_formula_matches_instance() {
        let mut rng = rng_for(54, &[]);
        let mut mrf = Mrf::new("m", 5, &[3, 7], &[1, 3, 5], &mut rng);
        assert_eq!(mrf.param_count(), mrf_param_count(5, &[3, 7], &[1, 3, 5]));
    }
}
