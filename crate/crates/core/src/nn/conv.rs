//! 1-d convolution and transposed convolution over (channels, time) arrays.

use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::nn::init;
use crate::nn::{Module, Param};

/// Temporal padding policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Fixed (left, right) zero padding.
    Fixed(usize, usize),
    /// Choose padding per input so the output length is ceil(len / stride).
    CeilAuto,
}

#[derive(Debug, Clone)]
struct ConvCache {
    cols: Array2<f64>,
    in_len: usize,
    pads: (usize, usize),
}

/// y[o, t] = b[o] + sum_{i,j} w[o, i, j] * x[i, t*stride + j*dilation - pad_left]
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: Param, // (c_out, c_in, k)
    pub b: Param, // (c_out)
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding,
    cache: Option<ConvCache>,
}

impl Conv1d {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        dilation: usize,
        padding: Padding,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Conv1d {
            w: Param::new(format!("{name}.w"), init::normal(rng, &[c_out, c_in, k], 0.01)),
            b: Param::new(format!("{name}.b"), init::zeros(&[c_out])),
            stride,
            dilation,
            padding,
            cache: None,
        }
    }

    /// Standard "same" convolution: stride 1, odd kernel, symmetric padding.
    pub fn same(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        dilation: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let pad = (k - 1) * dilation / 2;
        Self::new(name, c_in, c_out, k, 1, dilation, Padding::Fixed(pad, pad), rng)
    }

    fn shape(&self) -> (usize, usize, usize) {
        let s = self.w.v.shape();
        (s[0], s[1], s[2])
    }

    fn pads_for(&self, in_len: usize) -> (usize, usize) {
        match self.padding {
            Padding::Fixed(l, r) => (l, r),
            Padding::CeilAuto => {
                let (_, _, k) = self.shape();
                let eff_k = (k - 1) * self.dilation + 1;
                let out = in_len.div_ceil(self.stride);
                let total = ((out - 1) * self.stride + eff_k).saturating_sub(in_len);
                (total / 2, total - total / 2)
            }
        }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        let (_, _, k) = self.shape();
        let (pl, pr) = self.pads_for(in_len);
        let eff_k = (k - 1) * self.dilation + 1;
        (in_len + pl + pr - eff_k) / self.stride + 1
    }

    fn im2col(&self, x: &ArrayView2<f64>, pads: (usize, usize)) -> Array2<f64> {
        let (c_in, t_in) = x.dim();
        let (_, _, k) = self.shape();
        let t_out = self.out_len(t_in);
        let mut cols = Array2::zeros((c_in * k, t_out));
        for t in 0..t_out {
            let base = t * self.stride;
            for j in 0..k {
                let src = base + j * self.dilation;
                if src < pads.0 || src >= pads.0 + t_in {
                    continue;
                }
                let src = src - pads.0;
                for i in 0..c_in {
                    cols[[i * k + j, t]] = x[[i, src]];
                }
            }
        }
        cols
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let (c_out, c_in, k) = self.shape();
        assert_eq!(x.dim().0, c_in, "conv input channels");
        let pads = self.pads_for(x.dim().1);
        let cols = self.im2col(&x.view(), pads);
        let w2 = self
            .w
            .v
            .to_shape((c_out, c_in * k))
            .expect("contiguous weights");
        let mut y = w2.dot(&cols);
        for (o, mut row) in y.rows_mut().into_iter().enumerate() {
            row += self.b.v[o];
        }
        if train {
            self.cache = Some(ConvCache {
                cols,
                in_len: x.dim().1,
                pads,
            });
        }
        y
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let (c_out, c_in, k) = self.shape();
        let cache = self.cache.take().expect("conv backward without forward");
        let gw = gy.dot(&cache.cols.t());
        {
            let mut wg = self
                .w
                .g
                .to_shape((c_out, c_in * k))
                .expect("contiguous grads")
                .into_owned();
            wg += &gw;
            self.w.g.assign(
                &wg.into_shape_with_order((c_out, c_in, k))
                    .expect("weight grad shape"),
            );
        }
        for (o, gb) in gy.rows().into_iter().enumerate() {
            self.b.g[o] += gb.sum();
        }
        let w2 = self
            .w
            .v
            .to_shape((c_out, c_in * k))
            .expect("contiguous weights");
        let gcols = w2.t().dot(gy);
        // col2im back onto the unpadded input.
        let mut gx = Array2::zeros((c_in, cache.in_len));
        let t_out = gy.dim().1;
        for t in 0..t_out {
            let base = t * self.stride;
            for j in 0..k {
                let src = base + j * self.dilation;
                if src < cache.pads.0 || src >= cache.pads.0 + cache.in_len {
                    continue;
                }
                let src = src - cache.pads.0;
                for i in 0..c_in {
                    gx[[i, src]] += gcols[[i * k + j, t]];
                }
            }
        }
        gx
    }
}

impl Module for Conv1d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

#[derive(Debug, Clone)]
struct ConvTCache {
    x: Array2<f64>,
}

/// Transposed 1-d convolution with stride `s` and kernel `k`; the full output
/// of length (T-1)*s + k is cropped to exactly T*s (split (k-s)/2 left,
/// remainder right), matching the usual upsampler convention.
#[derive(Debug, Clone)]
pub struct ConvTranspose1d {
    pub w: Param, // (c_in, c_out, k)
    pub b: Param, // (c_out)
    pub stride: usize,
    cache: Option<ConvTCache>,
}

impl ConvTranspose1d {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(k >= stride, "upsampler kernel must cover the stride");
        ConvTranspose1d {
            w: Param::new(format!("{name}.w"), init::normal(rng, &[c_in, c_out, k], 0.01)),
            b: Param::new(format!("{name}.b"), init::zeros(&[c_out])),
            stride,
            cache: None,
        }
    }

    fn shape(&self) -> (usize, usize, usize) {
        let s = self.w.v.shape();
        (s[0], s[1], s[2])
    }

    fn crops(&self) -> (usize, usize) {
        let (_, _, k) = self.shape();
        let total = k - self.stride;
        (total / 2, total - total / 2)
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let (c_in, c_out, k) = self.shape();
        let (_, t) = x.dim();
        assert_eq!(x.dim().0, c_in, "transposed conv input channels");
        let wr = self
            .w
            .v
            .to_shape((c_in, c_out * k))
            .expect("contiguous weights");
        let p = wr.t().dot(x); // (c_out * k, T)
        let full = (t - 1) * self.stride + k;
        let mut y_full = Array2::zeros((c_out, full));
        for step in 0..t {
            let base = step * self.stride;
            for o in 0..c_out {
                for j in 0..k {
                    y_full[[o, base + j]] += p[[o * k + j, step]];
                }
            }
        }
        let (cl, cr) = self.crops();
        let mut y = y_full.slice(ndarray::s![.., cl..full - cr]).to_owned();
        for (o, mut row) in y.rows_mut().into_iter().enumerate() {
            row += self.b.v[o];
        }
        if train {
            self.cache = Some(ConvTCache { x: x.clone() });
        }
        y
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let (c_in, c_out, k) = self.shape();
        let cache = self.cache.take().expect("convT backward without forward");
        let t = cache.x.dim().1;
        let (cl, _) = self.crops();
        let full = (t - 1) * self.stride + k;
        // Re-pad the cropped gradient to the full output grid.
        let mut gy_full = Array2::zeros((c_out, full));
        gy_full
            .slice_mut(ndarray::s![.., cl..cl + gy.dim().1])
            .assign(gy);
        // Gather back into the (c_out * k, T) layout.
        let mut gp = Array2::zeros((c_out * k, t));
        for step in 0..t {
            let base = step * self.stride;
            for o in 0..c_out {
                for j in 0..k {
                    gp[[o * k + j, step]] = gy_full[[o, base + j]];
                }
            }
        }
        {
            let gw = cache.x.dot(&gp.t()); // (c_in, c_out * k)
            let mut wg = self
                .w
                .g
                .to_shape((c_in, c_out * k))
                .expect("contiguous grads")
                .into_owned();
            wg += &gw;
            self.w.g.assign(
                &wg.into_shape_with_order((c_in, c_out, k))
                    .expect("weight grad shape"),
            );
        }
        for (o, gb) in gy.rows().into_iter().enumerate() {
            self.b.g[o] += gb.sum();
        }
        let wr = self
            .w
            .v
            .to_shape((c_in, c_out * k))
            .expect("contiguous weights");
        wr.dot(&gp)
    }
}

impl Module for ConvTranspose1d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}
