//! Gated recurrent units over (channels, time) sequences, with full
//! backpropagation through time.

use ndarray::{s, Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::nn::init;
use crate::nn::{Module, Param};

#[derive(Debug, Clone)]
struct GruCache {
    x: Array2<f64>,
    r: Array2<f64>,       // (H, T)
    z: Array2<f64>,       // (H, T)
    n: Array2<f64>,       // (H, T)
    h_prev: Array2<f64>,  // (H, T) hidden state entering each step
    hn_term: Array2<f64>, // (H, T) W_hn h_prev + b_hn
}

/// Single-direction GRU. Gate layout in the stacked weights is [r; z; n].
#[derive(Debug, Clone)]
pub struct Gru {
    pub wi: Param, // (3H, C)
    pub wh: Param, // (3H, H)
    pub bi: Param, // (3H)
    pub bh: Param, // (3H)
    pub hidden: usize,
    pub reverse: bool,
    cache: Option<GruCache>,
}

impl Gru {
    pub fn new(name: &str, c_in: usize, hidden: usize, reverse: bool, rng: &mut ChaCha8Rng) -> Self {
        Gru {
            wi: Param::new(
                format!("{name}.wi"),
                init::uniform_fan_in(rng, &[3 * hidden, c_in], c_in),
            ),
            wh: Param::new(format!("{name}.wh"), init::stacked_orthogonal(rng, 3, hidden)),
            bi: Param::new(format!("{name}.bi"), init::zeros(&[3 * hidden])),
            bh: Param::new(format!("{name}.bh"), init::zeros(&[3 * hidden])),
            hidden,
            reverse,
            cache: None,
        }
    }

    fn order(&self, t: usize) -> Vec<usize> {
        if self.reverse {
            (0..t).rev().collect()
        } else {
            (0..t).collect()
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let h = self.hidden;
        let (_, t_len) = x.dim();
        let wi = self.wi.v.to_shape((3 * h, x.dim().0)).expect("wi shape");
        let wh = self.wh.v.to_shape((3 * h, h)).expect("wh shape");
        let bi = self.bi.v.to_shape(3 * h).expect("bi shape");
        let bh = self.bh.v.to_shape(3 * h).expect("bh shape");

        let mut pre_i = wi.dot(x);
        for (row, &b) in pre_i.rows_mut().into_iter().zip(bi.iter()) {
            let mut row = row;
            row += b;
        }

        let mut out = Array2::zeros((h, t_len));
        let mut r_c = Array2::zeros((h, t_len));
        let mut z_c = Array2::zeros((h, t_len));
        let mut n_c = Array2::zeros((h, t_len));
        let mut hprev_c = Array2::zeros((h, t_len));
        let mut hn_c = Array2::zeros((h, t_len));

        let mut hstate = Array1::<f64>::zeros(h);
        for &t in &self.order(t_len) {
            let ph = wh.dot(&hstate) + &bh;
            for i in 0..h {
                let r = sigmoid(pre_i[[i, t]] + ph[i]);
                let z = sigmoid(pre_i[[h + i, t]] + ph[h + i]);
                let hn = ph[2 * h + i];
                let n = (pre_i[[2 * h + i, t]] + r * hn).tanh();
                r_c[[i, t]] = r;
                z_c[[i, t]] = z;
                n_c[[i, t]] = n;
                hn_c[[i, t]] = hn;
                hprev_c[[i, t]] = hstate[i];
                out[[i, t]] = (1.0 - z) * n + z * hstate[i];
            }
            hstate.assign(&out.column(t));
        }

        if train {
            self.cache = Some(GruCache {
                x: x.clone(),
                r: r_c,
                z: z_c,
                n: n_c,
                h_prev: hprev_c,
                hn_term: hn_c,
            });
        }
        out
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let h = self.hidden;
        let cache = self.cache.take().expect("gru backward without forward");
        let t_len = gy.dim().1;
        let wh = self.wh.v.to_shape((3 * h, h)).expect("wh shape").into_owned();
        let wi = self
            .wi
            .v
            .to_shape((3 * h, cache.x.dim().0))
            .expect("wi shape")
            .into_owned();

        let mut g_pre_i = Array2::<f64>::zeros((3 * h, t_len));
        let mut gwh = Array2::<f64>::zeros((3 * h, h));
        let mut gbh = Array1::<f64>::zeros(3 * h);
        let mut gh = Array1::<f64>::zeros(h);
        let mut gph = Array1::<f64>::zeros(3 * h);

        let order = self.order(t_len);
        for &t in order.iter().rev() {
            for i in 0..h {
                let ght = gy[[i, t]] + gh[i];
                let (r, z, n) = (cache.r[[i, t]], cache.z[[i, t]], cache.n[[i, t]]);
                let hprev = cache.h_prev[[i, t]];
                let hn = cache.hn_term[[i, t]];
                let gz = ght * (hprev - n);
                let gn = ght * (1.0 - z);
                let gh_direct = ght * z;
                let gpre_n = gn * (1.0 - n * n);
                let gr = gpre_n * hn;
                let g_hn = gpre_n * r;
                let gpre_r = gr * r * (1.0 - r);
                let gpre_z = gz * z * (1.0 - z);
                g_pre_i[[i, t]] = gpre_r;
                g_pre_i[[h + i, t]] = gpre_z;
                g_pre_i[[2 * h + i, t]] = gpre_n;
                gph[i] = gpre_r;
                gph[h + i] = gpre_z;
                gph[2 * h + i] = g_hn;
                gh[i] = gh_direct;
            }
            // gwh += gph (x) h_prev^T ; gh += Wh^T gph
            for a in 0..3 * h {
                let ga = gph[a];
                if ga != 0.0 {
                    for b in 0..h {
                        gwh[[a, b]] += ga * cache.h_prev[[b, t]];
                    }
                }
            }
            gbh += &gph;
            for b in 0..h {
                let mut acc = gh[b];
                for a in 0..3 * h {
                    acc += wh[[a, b]] * gph[a];
                }
                gh[b] = acc;
            }
        }

        {
            let mut whg = self.wh.g.to_shape((3 * h, h)).expect("wh grads").into_owned();
            whg += &gwh;
            self.wh.g.assign(&whg.into_dyn());
            let mut bhg = self.bh.g.to_shape(3 * h).expect("bh grads").into_owned();
            bhg += &gbh;
            self.bh.g.assign(&bhg.into_dyn());
            let gwi = g_pre_i.dot(&cache.x.t());
            let mut wig = self
                .wi
                .g
                .to_shape((3 * h, cache.x.dim().0))
                .expect("wi grads")
                .into_owned();
            wig += &gwi;
            self.wi.g.assign(&wig.into_dyn());
            let mut big = self.bi.g.to_shape(3 * h).expect("bi grads").into_owned();
            for (i, row) in g_pre_i.rows().into_iter().enumerate() {
                big[i] += row.sum();
            }
            self.bi.g.assign(&big.into_dyn());
        }
        wi.t().dot(&g_pre_i)
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Module for Gru {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.wi);
        f(&mut self.wh);
        f(&mut self.bi);
        f(&mut self.bh);
    }
}

/// Bidirectional GRU: forward and reverse passes concatenated over channels,
/// output (2H, T).
#[derive(Debug, Clone)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

impl BiGru {
    pub fn new(name: &str, c_in: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        BiGru {
            fwd: Gru::new(&format!("{name}.fwd"), c_in, hidden, false, rng),
            bwd: Gru::new(&format!("{name}.bwd"), c_in, hidden, true, rng),
        }
    }

    pub fn out_channels(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let a = self.fwd.forward(x, train);
        let b = self.bwd.forward(x, train);
        ndarray::concatenate![ndarray::Axis(0), a, b]
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let h = self.fwd.hidden;
        let ga = gy.slice(s![..h, ..]).to_owned();
        let gb = gy.slice(s![h.., ..]).to_owned();
        self.fwd.backward(&ga) + self.bwd.backward(&gb)
    }
}

impl Module for BiGru {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.fwd.visit_params(f);
        self.bwd.visit_params(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::rng::rng_for;

    #[test]
    fn output_shape_and_determinism() {
        let mut rng = rng_for(21, &[]);
        let mut g = BiGru::new("g", 6, 4, &mut rng);
        let x = gradcheck::rand_array2(&mut rng, 6, 10);
        let y1 = g.forward(&x, false);
        let y2 = g.forward(&x, false);
        assert_eq!(y1.dim(), (8, 10));
        assert_eq!(y1, y2);
    }

    #[test]
    fn reverse_direction_sees_the_future() {
        let mut rng = rng_for(22, &[]);
        let mut g = Gru::new("g", 2, 3, true, &mut rng);
        let x = gradcheck::rand_array2(&mut rng, 2, 6);
        let y = g.forward(&x, false);
        // Changing the last frame must affect the reverse output at frame 0.
        let mut x2 = x.clone();
        x2[[0, 5]] += 1.0;
        let y2 = g.forward(&x2, false);
        assert!((y[[0, 0]] - y2[[0, 0]]).abs() > 0.0);
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = rng_for(23, &[]);
        let mut g = Gru::new("g", 3, 4, false, &mut rng);
        let x = gradcheck::rand_array2(&mut rng, 3, 7);
        let err = gradcheck::check_input_grad(
            &mut |m: &mut Gru, x, train| m.forward(x, train),
            &mut |m: &mut Gru, gy| m.backward(gy),
            &mut g,
            &x,
        );
        assert!(err < 1e-6, "input grad rel err {err}");
        let perr = gradcheck::check_param_grads(
            &mut |m: &mut Gru, x, train| m.forward(x, train),
            &mut |m: &mut Gru, gy| m.backward(gy),
            &mut g,
            &x,
        );
        assert!(perr < 1e-6, "param grad rel err {perr}");
    }

    #[test]
    fn bigru_gradients_match_finite_differences() {
        let mut rng = rng_for(24, &[]);
        let mut g = BiGru::new("g", 3, 3, &mut rng);
        let x = gradcheck::rand_array2(&mut rng, 3, 5);
        let err = gradcheck::check_input_grad(
            &mut |m: &mut BiGru, x, train| m.forward(x, train),
            &mut |m: &mut BiGru, gy| m.backward(gy),
            &mut g,
            &x,
        );
        assert!(err < 1e-6, "input grad rel err {err}");
        let perr = gradcheck::check_param_grads(
            &mut |m: &mut BiGru, x, train| m.forward(x, train),
            &mut |m: &mut BiGru, gy| m.backward(gy),
            &mut g,
            &x,
        );
        assert!(perr < 1e-6, "param grad rel err {perr}");
    }
}
