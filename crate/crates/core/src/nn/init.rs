//! Weight initializers.

use ndarray::{Array2, ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Normal(0, std) tensor (convolution convention: std = 0.01).
pub fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let n: f64 = StandardNormal.sample(rng);
        n * std
    })
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) tensor.
pub fn uniform_fan_in(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ArrayD<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    ArrayD::from_shape_fn(IxDyn(shape), |_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
}

pub fn zeros(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::zeros(IxDyn(shape))
}

/// Orthogonal n x n matrix via modified Gram-Schmidt on a Gaussian draw.
pub fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((n, n), |_| {
        let v: f64 = StandardNormal.sample(rng);
        v
    });
    for j in 0..n {
        for i in 0..j {
            let qi = m.column(i).to_owned();
            let proj = qi.dot(&m.column(j));
            let mut col = m.column_mut(j);
            col.scaled_add(-proj, &qi);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        let scale = if norm > 1e-12 { 1.0 / norm } else { 0.0 };
        m.column_mut(j).mapv_inplace(|v| v * scale);
    }
    m
}

/// Stack `k` independent orthogonal blocks vertically: (k*n, n).
pub fn stacked_orthogonal(rng: &mut ChaCha8Rng, k: usize, n: usize) -> ArrayD<f64> {
    let mut out = Array2::zeros((k * n, n));
    for b in 0..k {
        let q = orthogonal(rng, n);
        out.slice_mut(ndarray::s![b * n..(b + 1) * n, ..]).assign(&q);
    }
    out.into_dyn()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn orthogonal_is_orthonormal() {
        let mut rng = rng_for(11, &[]);
        let q = orthogonal(&mut rng, 16);
        let qtq = q.t().dot(&q);
        for i in 0..16 {
            for j in 0..16 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[[i, j]] - want).abs() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn initializers_are_deterministic() {
        let a = normal(&mut rng_for(3, &[]), &[4, 5], 0.01);
        let b = normal(&mut rng_for(3, &[]), &[4, 5], 0.01);
        assert_eq!(a, b);
    }
}
