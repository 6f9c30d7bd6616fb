//! One-vs-rest common spatial patterns and the log-variance embedding.
//!
//! For each class the generalized eigenproblem `C_c w = lambda (C_c + C_r) w`
//! is solved over shrunk, trace-normalized average covariances; the
//! eigenvectors of the 4 largest and 4 smallest eigenvalues form that class's
//! filters. A single bank, fitted on imagined-speech trials, is shared by
//! both conditions (the first half of the domain-adaptation procedure).

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Condition;
use crate::error::{Error, Result};
use crate::linalg::sym_eig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub filters_per_class: usize,
    /// Covariance shrinkage toward (trace/n) I.
    pub shrinkage: f64,
    pub segments: usize,
    pub variance_floor: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            filters_per_class: 8,
            shrinkage: 0.05,
            segments: 16,
            variance_floor: 1e-12,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filters_per_class == 0 || self.filters_per_class % 2 != 0 {
            return Err(Error::Config(
                "filters_per_class must be a positive even number".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.shrinkage) {
            return Err(Error::Config("shrinkage must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Streaming accumulator of per-class average covariances.
#[derive(Debug, Clone)]
pub struct CovAccumulator {
    sums: Vec<Array2<f64>>,
    counts: Vec<usize>,
    channels: usize,
}

impl CovAccumulator {
    pub fn new(n_classes: usize, channels: usize) -> Self {
        CovAccumulator {
            sums: vec![Array2::zeros((channels, channels)); n_classes],
            counts: vec![0; n_classes],
            channels,
        }
    }

    /// Add one preprocessed trial (channels x samples): its trace-normalized
    /// covariance joins the class average.
    pub fn add(&mut self, class_idx: usize, trial: &Array2<f64>) -> Result<()> {
        if trial.dim().0 != self.channels {
            return Err(Error::shape(
                format!("({}, *)", self.channels),
                format!("{:?}", trial.dim()),
            ));
        }
        let cov = trial.dot(&trial.t());
        let trace: f64 = cov.diag().sum();
        if !(trace.is_finite() && trace > 0.0) {
            return Err(Error::Numerical(format!(
                "degenerate trial covariance (trace {trace})"
            )));
        }
        self.sums[class_idx] += &(cov / trace);
        self.counts[class_idx] += 1;
        Ok(())
    }

    pub fn class_means(&self) -> Result<Vec<Array2<f64>>> {
        self.sums
            .iter()
            .zip(&self.counts)
            .enumerate()
            .map(|(c, (s, &n))| {
                if n < 2 {
                    return Err(Error::invalid(format!(
                        "class {c} has {n} trials; need at least 2"
                    )));
                }
                Ok(s / n as f64)
            })
            .collect()
    }
}

/// The fitted filter bank plus per-feature normalization statistics.
#[derive(Debug, Clone)]
pub struct CspBank {
    pub filters: Array2<f64>, // (n_classes * filters_per_class, channels)
    pub class_order: Vec<String>,
    pub trained_on: Condition,
    pub feature_mean: Array1<f64>,
    pub feature_std: Array1<f64>,
    pub filters_per_class: usize,
    pub segments: usize,
    pub variance_floor: f64,
}

impl CspBank {
    pub fn rows(&self) -> usize {
        self.filters.dim().0
    }

    /// Raw (pre-normalization) log-variance features, (rows, segments).
    pub fn embed_raw(&self, trial: &Array2<f64>) -> Result<Array2<f64>> {
        if trial.dim().0 != self.filters.dim().1 {
            return Err(Error::shape(
                format!("({}, *)", self.filters.dim().1),
                format!("{:?}", trial.dim()),
            ));
        }
        if trial.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite trial sample"));
        }
        let z = self.filters.dot(trial);
        let seg_len = trial.dim().1 / self.segments;
        if seg_len == 0 {
            return Err(Error::invalid("trial shorter than the segment count"));
        }
        let mut out = Array2::zeros((self.rows(), self.segments));
        for r in 0..self.rows() {
            for s in 0..self.segments {
                let seg = z.row(r);
                let seg = seg.slice(ndarray::s![s * seg_len..(s + 1) * seg_len]);
                let mean = seg.sum() / seg_len as f64;
                let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / seg_len as f64;
                out[[r, s]] = var.max(self.variance_floor).ln();
            }
        }
        Ok(out)
    }

    /// The embedding: z-scored log-variance features, (rows, segments).
    pub fn embed(&self, trial: &Array2<f64>) -> Result<Array2<f64>> {
        let mut e = self.embed_raw(trial)?;
        for (r, mut row) in e.rows_mut().into_iter().enumerate() {
            let (m, s) = (self.feature_mean[r], self.feature_std[r]);
            row.mapv_inplace(|v| (v - m) / s);
        }
        Ok(e)
    }

    /// Content digest over filters, normalization and metadata; two banks
    /// with equal digests embed identically.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.filters.iter() {
            h.update(v.to_le_bytes());
        }
        for v in self.feature_mean.iter().chain(self.feature_std.iter()) {
            h.update(v.to_le_bytes());
        }
        h.update(self.class_order.join("\u{1f}").as_bytes());
        h.update([self.trained_on as u8]);
        h.update((self.filters_per_class as u64).to_le_bytes());
        h.update((self.segments as u64).to_le_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn shrink(c: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let n = c.dim().0;
    let mu = c.diag().sum() / n as f64;
    let mut out = c * (1.0 - gamma);
    for i in 0..n {
        out[[i, i]] += gamma * mu;
    }
    out
}

/// Solve the per-class generalized eigenproblems and stack the selected
/// filters in class order.
pub fn fit_csp_filters(acc: &CovAccumulator, cfg: &EmbeddingConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let class_means = acc.class_means()?;
    let n_classes = class_means.len();
    if n_classes < 2 {
        return Err(Error::invalid("CSP needs at least two classes"));
    }
    let channels = acc.channels;
    let half = cfg.filters_per_class / 2;
    if cfg.filters_per_class > channels {
        return Err(Error::invalid(format!(
            "cannot select {} filters from {channels} channels",
            cfg.filters_per_class
        )));
    }
    let mut filters = Array2::zeros((n_classes * cfg.filters_per_class, channels));
    for c in 0..n_classes {
        let c_own = shrink(&class_means[c], cfg.shrinkage);
        let mut rest = Array2::zeros((channels, channels));
        for (k, m) in class_means.iter().enumerate() {
            if k != c {
                rest += m;
            }
        }
        let c_rest = shrink(&(rest / (n_classes - 1) as f64), cfg.shrinkage);
        let m_total = &c_own + &c_rest;

        // Whiten the pencil, then diagonalize the whitened class covariance.
        let (evals, evecs) = sym_eig(&m_total)?;
        let cond_floor = evals[0].max(1e-300) * 1e-10;
        if evals[evals.len() - 1] < cond_floor {
            log::warn!(
                "class {c}: rank-deficient composite covariance (min eigenvalue {:.3e}); shrinkage {} applied",
                evals[evals.len() - 1],
                cfg.shrinkage
            );
        }
        let mut w = Array2::zeros((channels, channels));
        for i in 0..channels {
            let scale = 1.0 / evals[i].max(cond_floor).sqrt();
            for j in 0..channels {
                w[[i, j]] = evecs[[j, i]] * scale;
            }
        }
        let s = w.dot(&c_own).dot(&w.t());
        let s = (&s + &s.t()) / 2.0;
        let (_svals, svecs) = sym_eig(&s)?;
        // Columns sorted by descending eigenvalue: take the first and last
        // `half` and map back to sensor space.
        for k in 0..cfg.filters_per_class {
            let col = if k < half { k } else { channels - (cfg.filters_per_class - k) };
            let u = svecs.column(col);
            let mut filt = w.t().dot(&u);
            // Sign convention: largest-magnitude entry positive.
            let lead = filt
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if filt[lead] < 0.0 {
                filt.mapv_inplace(|v| -v);
            }
            filters
                .row_mut(c * cfg.filters_per_class + k)
                .assign(&filt);
        }
    }
    Ok(filters)
}

/// Accumulates per-feature mean/std of raw embeddings over the training set.
#[derive(Debug, Clone)]
pub struct FeatureNormAccumulator {
    sum: Array1<f64>,
    sumsq: Array1<f64>,
    count: usize,
}

impl FeatureNormAccumulator {
    pub fn new(rows: usize) -> Self {
        FeatureNormAccumulator {
            sum: Array1::zeros(rows),
            sumsq: Array1::zeros(rows),
            count: 0,
        }
    }

    pub fn add(&mut self, raw_embedding: &Array2<f64>) {
        for (r, row) in raw_embedding.rows().into_iter().enumerate() {
            for &v in row {
                self.sum[r] += v;
                self.sumsq[r] += v * v;
            }
        }
        self.count += raw_embedding.dim().1;
    }

    pub fn finish(self) -> Result<(Array1<f64>, Array1<f64>)> {
        if self.count == 0 {
            return Err(Error::invalid("no embeddings accumulated"));
        }
        let n = self.count as f64;
        let mean = &self.sum / n;
        let std = self
            .sumsq
            .iter()
            .zip(mean.iter())
            .map(|(&sq, &m)| ((sq / n - m * m).max(0.0)).sqrt().max(1e-9))
            .collect::<Array1<f64>>();
        Ok((mean, std))
    }
}

/// In-memory fit over labeled preprocessed trials (class index, trial).
pub fn fit_csp(
    trials: &[(usize, Array2<f64>)],
    class_order: Vec<String>,
    trained_on: Condition,
    cfg: &EmbeddingConfig,
) -> Result<CspBank> {
    let channels = trials
        .first()
        .map(|(_, t)| t.dim().0)
        .ok_or_else(|| Error::invalid("no trials"))?;
    let mut acc = CovAccumulator::new(class_order.len(), channels);
    for (c, t) in trials {
        acc.add(*c, t)?;
    }
    let filters = fit_csp_filters(&acc, cfg)?;
    let mut bank = CspBank {
        filters,
        class_order,
        trained_on,
        feature_mean: Array1::zeros(0),
        feature_std: Array1::zeros(0),
        filters_per_class: cfg.filters_per_class,
        segments: cfg.segments,
        variance_floor: cfg.variance_floor,
    };
    let mut norm = FeatureNormAccumulator::new(bank.rows());
    for (_, t) in trials {
        norm.add(&bank.embed_raw(t)?);
    }
    let (mean, std) = norm.finish()?;
    bank.feature_mean = mean;
    bank.feature_std = std;
    Ok(bank)
}
