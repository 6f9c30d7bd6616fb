//! Connectionist temporal classification: forward algorithm in log space,
//! analytic gradients via the forward-backward recursion, greedy decoding.
//!
//! `log_probs` is (steps, symbols) with the blank at index 0. The loss is
//! well defined for arbitrary (not necessarily normalized) log scores, which
//! keeps finite-difference checks straightforward.

use ndarray::Array2;

use crate::asr::alphabet::BLANK;

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    log_sum_exp2(log_sum_exp2(a, b), c)
}

/// Blank-extended target: [B, t1, B, t2, ..., B].
fn extend(target: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &t in target {
        ext.push(t);
        ext.push(BLANK);
    }
    ext
}

/// Minimal number of frames able to emit the target (repeats need a blank).
pub fn min_frames(target: &[usize]) -> usize {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats
}

fn alpha(log_probs: &Array2<f64>, ext: &[usize]) -> Array2<f64> {
    let (s_len, _) = log_probs.dim();
    let l = ext.len();
    let mut a = Array2::from_elem((s_len, l), f64::NEG_INFINITY);
    a[[0, 0]] = log_probs[[0, ext[0]]];
    if l > 1 {
        a[[0, 1]] = log_probs[[0, ext[1]]];
    }
    for t in 1..s_len {
        for s in 0..l {
            let stay = a[[t - 1, s]];
            let step = if s >= 1 { a[[t - 1, s - 1]] } else { f64::NEG_INFINITY };
            let skip = if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                a[[t - 1, s - 2]]
            } else {
                f64::NEG_INFINITY
            };
            let acc = log_sum_exp3(stay, step, skip);
            if acc != f64::NEG_INFINITY {
                a[[t, s]] = acc + log_probs[[t, ext[s]]];
            }
        }
    }
    a
}

fn beta(log_probs: &Array2<f64>, ext: &[usize]) -> Array2<f64> {
    let (s_len, _) = log_probs.dim();
    let l = ext.len();
    let mut b = Array2::from_elem((s_len, l), f64::NEG_INFINITY);
    b[[s_len - 1, l - 1]] = log_probs[[s_len - 1, ext[l - 1]]];
    if l > 1 {
        b[[s_len - 1, l - 2]] = log_probs[[s_len - 1, ext[l - 2]]];
    }
    for t in (0..s_len - 1).rev() {
        for s in 0..l {
            let stay = b[[t + 1, s]];
            let step = if s + 1 < l { b[[t + 1, s + 1]] } else { f64::NEG_INFINITY };
            let skip = if s + 2 < l && ext[s + 2] != BLANK && ext[s + 2] != ext[s] {
                b[[t + 1, s + 2]]
            } else {
                f64::NEG_INFINITY
            };
            let acc = log_sum_exp3(stay, step, skip);
            if acc != f64::NEG_INFINITY {
                b[[t, s]] = acc + log_probs[[t, ext[s]]];
            }
        }
    }
    b
}

/// Negative log-probability of the target over all valid alignments.
///
/// Targets that cannot fit in the available frames yield `f64::INFINITY`
/// (a defined value, not a panic), with a zero gradient.
pub fn ctc_loss(log_probs: &Array2<f64>, target: &[usize]) -> f64 {
    let (s_len, n_sym) = log_probs.dim();
    assert!(s_len > 0 && n_sym > BLANK, "log_probs must be (S >= 1, A > 1)");
    debug_assert!(target.iter().all(|&t| t != BLANK && t < n_sym));
    if min_frames(target) > s_len {
        log::warn!(
            "ctc: target of length {} needs {} frames, only {s_len} available",
            target.len(),
            min_frames(target)
        );
        return f64::INFINITY;
    }
    let ext = extend(target);
    let a = alpha(log_probs, &ext);
    let l = ext.len();
    let tail = if l > 1 {
        log_sum_exp2(a[[s_len - 1, l - 1]], a[[s_len - 1, l - 2]])
    } else {
        a[[s_len - 1, 0]]
    };
    -tail
}

/// Loss plus its gradient with respect to `log_probs`.
pub fn ctc_loss_grad(log_probs: &Array2<f64>, target: &[usize]) -> (f64, Array2<f64>) {
    let (s_len, n_sym) = log_probs.dim();
    if min_frames(target) > s_len {
        return (f64::INFINITY, Array2::zeros((s_len, n_sym)));
    }
    let ext = extend(target);
    let a = alpha(log_probs, &ext);
    let b = beta(log_probs, &ext);
    let l = ext.len();
    let log_total = if l > 1 {
        log_sum_exp2(a[[s_len - 1, l - 1]], a[[s_len - 1, l - 2]])
    } else {
        a[[s_len - 1, 0]]
    };
    let loss = -log_total;
    let mut grad = Array2::zeros((s_len, n_sym));
    for t in 0..s_len {
        // Accumulate log(sum over lattice states with symbol k of alpha*beta).
        let mut acc = vec![f64::NEG_INFINITY; n_sym];
        for (s, &sym) in ext.iter().enumerate() {
            let ab = a[[t, s]] + b[[t, s]];
            acc[sym] = log_sum_exp2(acc[sym], ab);
        }
        for k in 0..n_sym {
            if acc[k] != f64::NEG_INFINITY {
                // alpha and beta both include the emission at t, so divide
                // one copy out.
                grad[[t, k]] = -(acc[k] - log_probs[[t, k]] - log_total).exp();
            }
        }
    }
    (loss, grad)
}

/// Per-step argmax, collapse repeats, remove blanks.
pub fn greedy_decode(log_probs: &Array2<f64>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = BLANK;
    for row in log_probs.rows() {
        let arg = row
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(BLANK);
        if arg != last && arg != BLANK {
            out.push(arg);
        }
        last = arg;
    }
    out
}
