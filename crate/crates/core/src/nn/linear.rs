//! Affine transform over the channel axis.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::nn::init;
use crate::nn::{Module, Param};

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param, // (c_out, c_in)
    pub b: Param, // (c_out)
    cache: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(name: &str, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: Param::new(
                format!("{name}.w"),
                init::uniform_fan_in(rng, &[c_out, c_in], c_in),
            ),
            b: Param::new(format!("{name}.b"), init::zeros(&[c_out])),
            cache: None,
        }
    }

    /// (c_in, T) -> (c_out, T)
    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let (c_out, c_in) = (self.w.v.shape()[0], self.w.v.shape()[1]);
        let w = self.w.v.to_shape((c_out, c_in)).expect("w shape");
        let mut y = w.dot(x);
        for (o, mut row) in y.rows_mut().into_iter().enumerate() {
            row += self.b.v[o];
        }
        if train {
            self.cache = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let (c_out, c_in) = (self.w.v.shape()[0], self.w.v.shape()[1]);
        let x = self.cache.take().expect("linear backward without forward");
        {
            let gw = gy.dot(&x.t());
            let mut wg = self.w.g.to_shape((c_out, c_in)).expect("w grads").into_owned();
            wg += &gw;
            self.w.g.assign(&wg.into_dyn());
            for (o, row) in gy.rows().into_iter().enumerate() {
                self.b.g[o] += row.sum();
            }
        }
        let w = self.w.v.to_shape((c_out, c_in)).expect("w shape");
        w.t().dot(gy)
    }
}

impl Module for Linear {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::rng::rng_for;

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = rng_for(31, &[]);
        let mut l = Linear::new("l", 5, 3, &mut rng);
        let x = gradcheck::rand_array2(&mut rng, 5, 4);
        let err = gradcheck::check_input_grad(
            &mut |m: &mut Linear, x, train| m.forward(x, train),
            &mut |m: &mut Linear, gy| m.backward(gy),
            &mut l,
            &x,
        );
        assert!(err < 1e-7, "input grad rel err {err}");
        let perr = gradcheck::check_param_grads(
            &mut |m: &mut Linear, x, train| m.forward(x, train),
            &mut |m: &mut Linear, gy| m.backward(gy),
            &mut l,
            &x,
        );
        assert!(perr < 1e-7, "param grad rel err {perr}");
    }
}
