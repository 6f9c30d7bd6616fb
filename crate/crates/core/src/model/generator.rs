//! The embedding-to-mel generator.
//!
//! Pipeline: pre-convolution over the 16 embedding steps, a bidirectional
//! recurrent layer, concatenation and kernel-1 projection back to the initial
//! width, three transposed-convolution upsampling stages (stride 3, 2, 2 with
//! kernel twice the stride, channels halved per stage) each followed by an
//! MRF block, and a final leaky-rectifier + convolution + tanh to 80 mel
//! bands in [-1, 1].

use ndarray::{concatenate, s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::mrf::{mrf_param_count, Mrf, LRELU_SLOPE};
use crate::model::seq::{seq_param_count, SeqLayer};
use crate::nn::ops::{leaky_relu, leaky_relu_backward, tanh, tanh_backward};
use crate::nn::{Conv1d, ConvTranspose1d, Module, Padding, Param};
use crate::rng::rng_for;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub in_rows: usize,
    pub in_steps: usize,
    pub out_bands: usize,
    pub initial_channels: usize,
    pub upsample_rates: Vec<usize>,
    pub mrf_kernels: Vec<usize>,
    pub mrf_dilations: Vec<usize>,
    pub use_gru: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            in_rows: 104,
            in_steps: 16,
            out_bands: 80,
            initial_channels: 1024,
            upsample_rates: vec![3, 2, 2],
            mrf_kernels: vec![3, 7, 11],
            mrf_dilations: vec![1, 3, 5],
            use_gru: true,
        }
    }
}

impl GeneratorConfig {
    /// Directional recurrent width: half the initial channel count.
    pub fn gru_hidden(&self) -> usize {
        self.initial_channels / 2
    }

    pub fn out_frames(&self) -> usize {
        self.in_steps * self.upsample_rates.iter().product::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let stages = self.upsample_rates.len();
        if stages == 0 {
            return Err(Error::Config("generator needs upsampling stages".into()));
        }
        if self.initial_channels % (2 << stages) != 0 {
            return Err(Error::Config(format!(
                "initial_channels {} must be divisible by {}",
                self.initial_channels,
                2 << stages
            )));
        }
        if self.out_frames() != 192 {
            return Err(Error::Config(format!(
                "upsample rates {:?} x {} steps must produce 192 frames",
                self.upsample_rates, self.in_steps
            )));
        }
        if self.mrf_kernels.is_empty() || self.mrf_kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config("MRF kernels must be odd".into()));
        }
        Ok(())
    }

    /// Total trainable parameter count implied by this config.
    pub fn param_count(&self) -> usize {
        let w = self.initial_channels;
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k + cout;
        let mut n = conv(self.in_rows, w / 2, 7);
        n += seq_param_count(w / 2, self.gru_hidden(), self.use_gru);
        n += conv(w / 2 + 2 * self.gru_hidden(), w, 1);
        let mut ch = w;
        for &u in &self.upsample_rates {
            n += ch * (ch / 2) * 2 * u + ch / 2; // transposed conv
            ch /= 2;
            n += mrf_param_count(ch, &self.mrf_kernels, &self.mrf_dilations);
        }
        n += conv(ch, self.out_bands, 7);
        n
    }
}

#[derive(Debug, Clone)]
struct GenCache {
    act_ins: Vec<Array2<f64>>, // leaky-relu outputs feeding each upsampler
    post_act: Array2<f64>,
    y: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub cfg: GeneratorConfig,
    pre: Conv1d,
    seq: SeqLayer,
    proj: Conv1d,
    ups: Vec<ConvTranspose1d>,
    mrfs: Vec<Mrf>,
    post: Conv1d,
    cache: Option<GenCache>,
}

impl Generator {
    pub fn new(cfg: &GeneratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_for(seed, &[0x6e6e_0001]);
        let w = cfg.initial_channels;
        let pre = Conv1d::same("gen.pre", cfg.in_rows, w / 2, 7, 1, &mut rng);
        let seq = SeqLayer::new("gen.seq", w / 2, cfg.gru_hidden(), cfg.use_gru, &mut rng);
        let proj = Conv1d::new(
            "gen.proj",
            w / 2 + 2 * cfg.gru_hidden(),
            w,
            1,
            1,
            1,
            Padding::Fixed(0, 0),
            &mut rng,
        );
        let mut ups = Vec::new();
        let mut mrfs = Vec::new();
        let mut ch = w;
        for (i, &u) in cfg.upsample_rates.iter().enumerate() {
            ups.push(ConvTranspose1d::new(
                &format!("gen.up{i}"),
                ch,
                ch / 2,
                2 * u,
                u,
                &mut rng,
            ));
            ch /= 2;
            mrfs.push(Mrf::new(
                &format!("gen.mrf{i}"),
                ch,
                &cfg.mrf_kernels,
                &cfg.mrf_dilations,
                &mut rng,
            ));
        }
        let post = Conv1d::same("gen.post", ch, cfg.out_bands, 7, 1, &mut rng);
        Ok(Generator {
            cfg: cfg.clone(),
            pre,
            seq,
            proj,
            ups,
            mrfs,
            post,
            cache: None,
        })
    }

    /// Embedding (rows, steps) -> mel (bands, frames), values in [-1, 1].
    pub fn forward(&mut self, e: &Array2<f64>, train: bool) -> Result<Array2<f64>> {
        if e.dim() != (self.cfg.in_rows, self.cfg.in_steps) {
            return Err(Error::shape(
                format!("({}, {})", self.cfg.in_rows, self.cfg.in_steps),
                format!("{:?}", e.dim()),
            ));
        }
        let pre_out = self.pre.forward(e, train);
        let seq_out = self.seq.forward(&pre_out, train);
        let cat = concatenate![ndarray::Axis(0), pre_out.view(), seq_out.view()];
        let mut h = self.proj.forward(&cat, train);
        let mut act_ins = Vec::with_capacity(self.ups.len());
        for (up, mrf) in self.ups.iter_mut().zip(&mut self.mrfs) {
            let a = leaky_relu(&h, LRELU_SLOPE);
            h = up.forward(&a, train);
            h = mrf.forward(&h, train);
            if train {
                act_ins.push(a);
            }
        }
        let post_act = leaky_relu(&h, LRELU_SLOPE);
        let z = self.post.forward(&post_act, train);
        let y = tanh(&z);
        if train {
            self.cache = Some(GenCache {
                act_ins,
                post_act,
                y: y.clone(),
            });
        }
        Ok(y)
    }

    /// Backpropagate a mel-gradient; accumulates parameter gradients and
    /// returns the gradient with respect to the embedding.
    pub fn backward(&mut self, g_mel: &Array2<f64>) -> Array2<f64> {
        let cache = self.cache.take().expect("generator backward without forward");
        let gz = tanh_backward(g_mel, &cache.y);
        let mut g = self.post.backward(&gz);
        g = leaky_relu_backward(&g, &cache.post_act, LRELU_SLOPE);
        for i in (0..self.ups.len()).rev() {
            g = self.mrfs[i].backward(&g);
            g = self.ups[i].backward(&g);
            g = leaky_relu_backward(&g, &cache.act_ins[i], LRELU_SLOPE);
        }
        let gcat = self.proj.backward(&g);
        let w2 = self.pre.w.v.shape()[0];
        let g_pre_direct = gcat.slice(s![..w2, ..]).to_owned();
        let g_seq = gcat.slice(s![w2.., ..]).to_owned();
        let g_pre = g_pre_direct + self.seq.backward(&g_seq);
        self.pre.backward(&g_pre)
    }
}

impl Module for Generator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.pre.visit_params(f);
        self.seq.visit_params(f);
        self.proj.visit_params(f);
        for (up, mrf) in self.ups.iter_mut().zip(&mut self.mrfs) {
            up.visit_params(f);
            mrf.visit_params(f);
        }
        self.post.visit_params(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;

    pub(crate) fn tiny_config() -> GeneratorConfig {
        GeneratorConfig {
            initial_channels: 32,
            mrf_kernels: vec![3, 5],
            mrf_dilations: vec![1, 2],
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn output_shape_and_range() {
        let cfg = tiny_config();
        let mut g = Generator::new(&cfg, 7).unwrap();
        let mut rng = rng_for(8, &[]);
        let e = gradcheck::rand_array2(&mut rng, 104, 16);
        let y = g.forward(&e, false).unwrap();
        assert_eq!(y.dim(), (80, 192));
        assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = tiny_config();
        let mut g = Generator::new(&cfg, 7).unwrap();
        let mut rng = rng_for(9, &[]);
        let e = gradcheck::rand_array2(&mut rng, 104, 16);
        let a = g.forward(&e, false).unwrap();
        let b = g.forward(&e, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let cfg = tiny_config();
        let mut g = Generator::new(&cfg, 7).unwrap();
        let e = Array2::zeros((104, 15));
        assert!(g.forward(&e, false).is_err());
    }

    #[test]
    fn config_param_count_matches_instance() {
        for use_gru in [true, false] {
            let cfg = GeneratorConfig {
                use_gru,
                ..tiny_config()
            };
            let mut g = Generator::new(&cfg, 3).unwrap();
            assert_eq!(g.param_count(), cfg.param_count(), "use_gru={use_gru}");
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = tiny_config();
        cfg.upsample_rates = vec![3, 2];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.initial_channels = 20;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn generator_input_gradients_match_finite_differences() {
        // Narrow instance; full-width checks live in the acceptance suite.
        let cfg = GeneratorConfig {
            initial_channels: 16,
            mrf_kernels: vec![3],
            mrf_dilations: vec![1, 2],
            in_rows: 6,
            ..GeneratorConfig::default()
        };
        let mut g = Generator::new(&cfg, 11).unwrap();
        let mut rng = rng_for(12, &[]);
        let e = gradcheck::rand_array2(&mut rng, 6, 16);
        let err = gradcheck::check_input_grad(
            &mut |m: &mut Generator, x, train| m.forward(x, train).unwrap(),
            &mut |m: &mut Generator, gy| m.backward(gy),
            &mut g,
            &e,
        );
        assert!(err < 1e-4, "input grad rel err {err}");
    }
}
