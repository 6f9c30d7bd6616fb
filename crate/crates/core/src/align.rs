//! Dynamic time warping between mel sequences.
//!
//! Used to align the ground-truth voice mel onto the generated frame grid so
//! reconstruction losses and the discriminator operate on fixed-length
//! inputs. The warp path is computed on detached values and treated as a
//! constant within a training step.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// A monotone alignment between two sequences.
///
/// `pairs` starts at (0, 0), ends at (T1-1, T2-1) and advances by steps from
/// {(1,0), (0,1), (1,1)}.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

fn column_distance(a: &ArrayView2<f64>, i: usize, b: &ArrayView2<f64>, j: usize) -> f64 {
    let ca = a.column(i);
    let cb = b.column(j);
    ca.iter()
        .zip(cb.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Minimal-cost monotone alignment under per-frame Euclidean distance.
///
/// Standard O(T1 * T2) dynamic program over columns of `a` (D x T1) and `b`
/// (D x T2). Ties during traceback prefer the diagonal step, then the step
/// consuming a frame of `a`.
pub fn dtw(a: &Array2<f64>, b: &Array2<f64>) -> Result<WarpPath> {
    let (da, t1) = a.dim();
    let (db, t2) = b.dim();
    if t1 == 0 || t2 == 0 {
        return Err(Error::invalid("dtw requires non-empty sequences"));
    }
    if da != db {
        return Err(Error::shape(format!("({da}, *)"), format!("({db}, *)")));
    }
    let av = a.view();
    let bv = b.view();

    let mut acc = Array2::<f64>::from_elem((t1, t2), f64::INFINITY);
    for i in 0..t1 {
        for j in 0..t2 {
            let d = column_distance(&av, i, &bv, j);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut m = f64::INFINITY;
                if i > 0 && j > 0 {
                    m = m.min(acc[[i - 1, j - 1]]);
                }
                if i > 0 {
                    m = m.min(acc[[i - 1, j]]);
                }
                if j > 0 {
                    m = m.min(acc[[i, j - 1]]);
                }
                m
            };
            acc[[i, j]] = d + best;
        }
    }

    let mut pairs = vec![(t1 - 1, t2 - 1)];
    let (mut i, mut j) = (t1 - 1, t2 - 1);
    while i > 0 || j > 0 {
        let (ni, nj) = if i > 0 && j > 0 {
            let diag = acc[[i - 1, j - 1]];
            let up = acc[[i - 1, j]];
            let left = acc[[i, j - 1]];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        } else if i > 0 {
            (i - 1, j)
        } else {
            (i, j - 1)
        };
        pairs.push((ni, nj));
        i = ni;
        j = nj;
    }
    pairs.reverse();

    Ok(WarpPath {
        pairs,
        cost: acc[[t1 - 1, t2 - 1]],
    })
}

/// Warp `b` onto the frame grid of the first sequence: output column `i` is
/// the mean of the `b` columns paired with `i`.
pub fn warp_to(a_len: usize, b: &Array2<f64>, path: &WarpPath) -> Result<Array2<f64>> {
    let (d, t2) = b.dim();
    let valid = path
        .pairs
        .first()
        .is_some_and(|&(i, j)| i == 0 && j == 0)
        && path
            .pairs
            .last()
            .is_some_and(|&(i, j)| i + 1 == a_len && j + 1 == t2);
    if !valid {
        return Err(Error::invalid(format!(
            "warp path does not span ({a_len}, {t2})"
        )));
    }
    let mut out = Array2::<f64>::zeros((d, a_len));
    let mut counts = vec![0usize; a_len];
    for &(i, j) in &path.pairs {
        if i >= a_len || j >= t2 {
            return Err(Error::invalid("warp path index out of range"));
        }
        for r in 0..d {
            out[[r, i]] += b[[r, j]];
        }
        counts[i] += 1;
    }
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::invalid(format!("warp path skips frame {i}")));
        }
        for r in 0..d {
            out[[r, i]] /= c as f64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    /// Exhaustive minimal cost over all monotone paths (test oracle).
    fn brute_force_cost(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        fn go(a: &Array2<f64>, b: &Array2<f64>, i: usize, j: usize) -> f64 {
            let d = {
                let (ca, cb) = (a.column(i), b.column(j));
                ca.iter()
                    .zip(cb.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            };
            if i == 0 && j == 0 {
                return d;
            }
            let mut best = f64::INFINITY;
            if i > 0 && j > 0 {
                best = best.min(go(a, b, i - 1, j - 1));
            }
            if i > 0 {
                best = best.min(go(a, b, i - 1, j));
            }
            if j > 0 {
                best = best.min(go(a, b, i, j - 1));
            }
            d + best
        }
        go(a, b, a.dim().1 - 1, b.dim().1 - 1)
    }

    fn check_path_valid(path: &WarpPath, t1: usize, t2: usize) {
        assert_eq!(path.pairs[0], (0, 0));
        assert_eq!(*path.pairs.last().unwrap(), (t1 - 1, t2 - 1));
        for w in path.pairs.windows(2) {
            let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(
                matches!((di, dj), (0, 1) | (1, 0) | (1, 1)),
                "bad step {:?} -> {:?}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn identical_sequences_cost_zero_diagonal_path() {
        let a = array![[0.0, 1.0, 2.0, 3.0], [1.0, -1.0, 0.5, 2.0]];
        let p = dtw(&a, &a).unwrap();
        assert_eq!(p.cost, 0.0);
        assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn one_band_example_costs_one() {
        let a = array![[1.0, 3.0]];
        let b = array![[1.0, 2.0, 3.0]];
        let p = dtw(&a, &b).unwrap();
        assert!((p.cost - 1.0).abs() < 1e-12, "cost {}", p.cost);
        assert_eq!(p.cost, brute_force_cost(&a, &b));
    }

    #[test]
    fn cost_is_symmetric() {
        let a = array![[0.0, 2.0, 1.0], [1.0, 0.0, 3.0]];
        let b = array![[1.0, 1.0, 2.0, 0.0], [0.0, 2.0, 2.0, 1.0]];
        assert_eq!(dtw(&a, &b).unwrap().cost, dtw(&b, &a).unwrap().cost);
    }

    #[test]
    fn empty_and_mismatched_inputs_rejected() {
        let a = Array2::<f64>::zeros((2, 0));
        let b = Array2::<f64>::zeros((2, 3));
        assert!(dtw(&a, &b).is_err());
        let c = Array2::<f64>::zeros((3, 3));
        assert!(dtw(&b, &c).is_err());
    }

    #[test]
    fn identity_path_warp_returns_b() {
        let b = array![[0.0, 1.0, 2.0], [5.0, 4.0, 3.0]];
        let p = dtw(&b, &b).unwrap();
        let w = warp_to(3, &b, &p).unwrap();
        assert_eq!(w, b);
    }

    #[test]
    fn warp_means_paired_columns() {
        // i=0 <-> {0, 1}, i=1 <-> {2, 3}
        let b = array![[1.0, 3.0, 10.0, 20.0]];
        let path = WarpPath {
            pairs: vec![(0, 0), (0, 1), (1, 2), (1, 3)],
            cost: 0.0,
        };
        let w = warp_to(2, &b, &path).unwrap();
        assert_eq!(w, array![[2.0, 15.0]]);
    }

    #[test]
    fn constant_b_warps_to_constant() {
        let a = array![[0.0, 1.0, 0.0, 1.0, 0.5]];
        let b = array![[7.0, 7.0, 7.0]];
        let p = dtw(&a, &b).unwrap();
        let w = warp_to(5, &b, &p).unwrap();
        assert!(w.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn warp_rejects_mismatched_lengths() {
        let b = array![[1.0, 2.0, 3.0]];
        let p = dtw(&b, &b).unwrap();
        assert!(warp_to(4, &b, &p).is_err());
    }

    #[test]
    fn oracle_equivalence_small_grid() {
        // Deterministic sweep over a few shapes with pseudo-random content.
        let mut state = 0x1234_5678u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for t1 in 1..=5usize {
            for t2 in 1..=5usize {
                let a = Array2::from_shape_fn((2, t1), |_| next());
                let b = Array2::from_shape_fn((2, t2), |_| next());
                let p = dtw(&a, &b).unwrap();
                check_path_valid(&p, t1, t2);
                let bf = brute_force_cost(&a, &b);
                assert!((p.cost - bf).abs() < 1e-9, "({t1},{t2}): {} vs {bf}", p.cost);
            }
        }
    }

    proptest! {
        #[test]
        fn prop_cost_matches_brute_force(
            t1 in 1usize..=6,
            t2 in 1usize..=6,
            seed in 0u64..1000,
        ) {
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            let mut next = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
            };
            let a = Array2::from_shape_fn((3, t1), |_| next());
            let b = Array2::from_shape_fn((3, t2), |_| next());
            let p = dtw(&a, &b).unwrap();
            check_path_valid(&p, t1, t2);
            let bf = brute_force_cost(&a, &b);
            prop_assert!((p.cost - bf).abs() < 1e-9);
        }

        #[test]
        fn prop_partial_copies_of_a_bound_the_cost(
            t1 in 2usize..=6,
            seed in 0u64..200,
        ) {
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(3);
            let mut next = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
            };
            let a = Array2::from_shape_fn((2, t1), |_| next());
            // A partial copy of a aligns no worse than the explicit
            // diagonal-then-stay path, and the full copy costs exactly zero.
            // (Note: the cost is NOT monotone in the copied prefix length;
            // t1 = 5 prefixes can cost more at k = 3 than k = 2.)
            for k in 1..=t1 {
                let b = a.slice(ndarray::s![.., ..k]).to_owned();
                let cost = dtw(&a, &b).unwrap().cost;
                let explicit: f64 = (k..t1)
                    .map(|i| {
                        let (ca, cb) = (a.column(i), a.column(k - 1));
                        ca.iter()
                            .zip(cb.iter())
                            .map(|(x, y)| (x - y) * (x - y))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .sum();
                prop_assert!(cost <= explicit + 1e-12, "k={k}: {cost} > {explicit}");
                if k == t1 {
                    prop_assert!(cost == 0.0);
                }
            }
        }
    }
}
