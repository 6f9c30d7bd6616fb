//! Central finite-difference gradient checking.
//!
//! Shared by unit tests and the acceptance suite. The probe loss is a fixed
//! weighted sum of the outputs so scalar losses can be formed from arbitrary
//! layer outputs without extra machinery.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::Module;

const EPS: f64 = 1e-5;

pub fn rand_array2(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 2.0 - 1.0)
}

/// Re-randomize all parameters to Uniform(-scale, scale).
///
/// Gradient checks need pre-activations placed away from the leaky-rectifier
/// kink relative to the probe step; the tiny production initialization puts
/// them right on top of it.
pub fn randomize_params(model: &mut impl Module, rng: &mut ChaCha8Rng, scale: f64) {
    model.visit_params(&mut |p| {
        p.v.mapv_inplace(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale);
    });
}

/// Deterministic probe weights mapping an output array to a scalar.
fn probe_weights(dim: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(dim, |(i, j)| {
        (0.3 + (i as f64) * 0.17 + (j as f64) * 0.05).sin()
    })
}

fn probe_loss(y: &Array2<f64>) -> f64 {
    (y * &probe_weights(y.dim())).sum()
}

/// Relative error metric used across the gradient suite.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Max relative error between the analytic input gradient and central
/// differences of the probe loss.
pub fn check_input_grad<M: Module>(
    forward: &mut dyn FnMut(&mut M, &Array2<f64>, bool) -> Array2<f64>,
    backward: &mut dyn FnMut(&mut M, &Array2<f64>) -> Array2<f64>,
    model: &mut M,
    x: &Array2<f64>,
) -> f64 {
    let y = forward(model, x, true);
    let gy = probe_weights(y.dim());
    model.zero_grad();
    let gx = backward(model, &gy);

    let mut worst = 0.0f64;
    for i in 0..x.dim().0 {
        for j in 0..x.dim().1 {
            let mut xp = x.clone();
            xp[[i, j]] += EPS;
            let lp = probe_loss(&forward(model, &xp, false));
            xp[[i, j]] -= 2.0 * EPS;
            let lm = probe_loss(&forward(model, &xp, false));
            let fd = (lp - lm) / (2.0 * EPS);
            worst = worst.max(rel_err(gx[[i, j]], fd));
        }
    }
    worst
}

/// Max relative error between analytic parameter gradients and central
/// differences, probing a deterministic subset of coordinates per tensor.
pub fn check_param_grads<M: Module>(
    forward: &mut dyn FnMut(&mut M, &Array2<f64>, bool) -> Array2<f64>,
    backward: &mut dyn FnMut(&mut M, &Array2<f64>) -> Array2<f64>,
    model: &mut M,
    x: &Array2<f64>,
) -> f64 {
    let y = forward(model, x, true);
    let gy = probe_weights(y.dim());
    model.zero_grad();
    let _ = backward(model, &gy);

    let mut analytic: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
    let mut tensor_idx = 0;
    model.visit_params(&mut |p| {
        let n = p.len();
        let probes = pick_coords(n, 5);
        let pairs = probes
            .iter()
            .map(|&c| (c, p.g.as_slice().expect("standard layout")[c]))
            .collect();
        analytic.push((tensor_idx, pairs));
        tensor_idx += 1;
    });

    let mut worst = 0.0f64;
    for (ti, pairs) in &analytic {
        for &(coord, g_analytic) in pairs {
            let fd = {
                let perturb = |delta: f64, model: &mut M| {
                    let mut k = 0;
                    model.visit_params(&mut |p| {
                        if k == *ti {
                            p.v.as_slice_mut().expect("standard layout")[coord] += delta;
                        }
                        k += 1;
                    });
                };
                perturb(EPS, model);
                let lp = probe_loss(&forward(model, x, false));
                perturb(-2.0 * EPS, model);
                let lm = probe_loss(&forward(model, x, false));
                perturb(EPS, model);
                (lp - lm) / (2.0 * EPS)
            };
            worst = worst.max(rel_err(g_analytic, fd));
        }
    }
    worst
}

fn pick_coords(n: usize, count: usize) -> Vec<usize> {
    if n <= count {
        return (0..n).collect();
    }
    (0..count).map(|k| k * (n - 1) / (count - 1)).collect()
}
