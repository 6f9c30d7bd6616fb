//! Stateless activations and reductions with explicit backward rules.
//!
//! Backward functions take the forward *output* where that suffices to
//! reconstruct the local derivative.

use ndarray::{Array1, Array2};

pub fn leaky_relu(x: &Array2<f64>, slope: f64) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward(gy: &Array2<f64>, y: &Array2<f64>, slope: f64) -> Array2<f64> {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &v| {
        if v <= 0.0 {
            *g *= slope;
        }
    });
    gx
}

pub fn tanh(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(f64::tanh)
}

pub fn tanh_backward(gy: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &v| *g *= 1.0 - v * v);
    gx
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Column-wise log-softmax over the rows of `x` (each column normalized).
pub fn log_softmax_cols(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut col in out.columns_mut() {
        let m = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + col.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        col.mapv_inplace(|v| v - lse);
    }
    out
}

/// Backward of column-wise log-softmax given the forward output `y`.
pub fn log_softmax_cols_backward(gy: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let mut gx = gy.clone();
    for (mut gcol, ycol) in gx.columns_mut().into_iter().zip(y.columns()) {
        let s: f64 = gcol.sum();
        gcol.zip_mut_with(&ycol, |g, &lv| *g -= lv.exp() * s);
    }
    gx
}

/// Mean over the time axis: (C, T) -> (C).
pub fn mean_over_time(x: &Array2<f64>) -> Array1<f64> {
    x.mean_axis(ndarray::Axis(1)).expect("non-empty time axis")
}

pub fn mean_over_time_backward(g: &Array1<f64>, t: usize) -> Array2<f64> {
    let scale = 1.0 / t as f64;
    let mut out = Array2::zeros((g.len(), t));
    for (i, &v) in g.iter().enumerate() {
        out.row_mut(i).fill(v * scale);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn log_softmax_normalizes_columns() {
        let x = array![[1.0, -2.0], [0.5, 3.0], [-1.0, 0.0]];
        let y = log_softmax_cols(&x);
        for col in y.columns() {
            let total: f64 = col.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn leaky_relu_slope_applies_below_zero() {
        let x = array![[1.0, -2.0]];
        let y = leaky_relu(&x, 0.1);
        assert_eq!(y, array![[1.0, -0.2]]);
        let g = leaky_relu_backward(&array![[1.0, 1.0]], &y, 0.1);
        assert_eq!(g, array![[1.0, 0.1]]);
    }
}
