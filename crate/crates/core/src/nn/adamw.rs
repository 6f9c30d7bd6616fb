//! Adam with decoupled weight decay.

use ndarray::ArrayD;

use crate::nn::Module;

#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Multiply the learning rate by a decay factor (per-epoch schedule).
    pub fn decay_lr(&mut self, factor: f64) {
        self.lr *= factor;
    }

    /// One update from the accumulated gradients, visiting parameters in the
    /// model's structural order. Gradients are left untouched (callers zero
    /// them at the start of each step).
    pub fn step(&mut self, model: &mut impl Module) {
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let lr = self.lr;
        let wd = self.weight_decay;
        let eps = self.eps;

        let (m, v) = (&mut self.m, &mut self.v);
        let mut k = 0;
        model.visit_params(&mut |p| {
            if m.len() == k {
                m.push(ArrayD::zeros(p.v.raw_dim()));
                v.push(ArrayD::zeros(p.v.raw_dim()));
            }
            let mk = &mut m[k];
            let vk = &mut v[k];
            let pv = p.v.as_slice_mut().expect("standard layout");
            let pg = p.g.as_slice().expect("standard layout");
            let ms = mk.as_slice_mut().expect("standard layout");
            let vs = vk.as_slice_mut().expect("standard layout");
            for i in 0..pv.len() {
                let g = pg[i];
                ms[i] = b1 * ms[i] + (1.0 - b1) * g;
                vs[i] = b2 * vs[i] + (1.0 - b2) * g * g;
                let mhat = ms[i] / bc1;
                let vhat = vs[i] / bc2;
                pv[i] -= lr * (mhat / (vhat.sqrt() + eps) + wd * pv[i]);
            }
            k += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Linear, Module};
    use crate::rng::rng_for;
    use ndarray::Array2;

    #[test]
    fn single_step_matches_hand_computation() {
        let mut rng = rng_for(41, &[]);
        let mut l = Linear::new("l", 1, 1, &mut rng);
        let w0 = l.w.v[[0, 0]];
        // Force a known gradient of 2.0 on w.
        l.zero_grad();
        l.w.g[[0, 0]] = 2.0;
        let mut opt = AdamW::new(0.1, 0.8, 0.99, 0.01);
        opt.step(&mut l);
        // t=1: mhat = g, vhat = g^2, update = lr*(g/|g| + wd*w0).
        let expected = w0 - 0.1 * (2.0 / (2.0 + 1e-8) + 0.01 * w0);
        assert!((l.w.v[[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut rng = rng_for(42, &[]);
        let mut l = Linear::new("l", 2, 1, &mut rng);
        let mut opt = AdamW::new(0.05, 0.8, 0.99, 0.0);
        let x = Array2::from_shape_vec((2, 1), vec![1.0, -0.5]).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let y = l.forward(&x, true);
            let loss = (y[[0, 0]] - 3.0).powi(2);
            l.zero_grad();
            let gy = Array2::from_elem((1, 1), 2.0 * (y[[0, 0]] - 3.0));
            let _ = l.backward(&gy);
            opt.step(&mut l);
            last = loss;
        }
        assert!(last < 1e-3, "final loss {last}");
    }
}
