//! Minimal differentiable-computation substrate in 64-bit floats.
//!
//! Layers own their parameters, accumulate parameter gradients during
//! `backward`, and cache whatever the backward pass needs during a training
//! forward. Everything is deterministic: no internal threading, no
//! order-dependent reductions.

pub mod adamw;
pub mod conv;
pub mod gradcheck;
pub mod gru;
pub mod init;
pub mod linear;
pub mod ops;

use ndarray::ArrayD;

pub use adamw::AdamW;
pub use conv::{Conv1d, ConvTranspose1d, Padding};
pub use gru::{BiGru, Gru};
pub use linear::Linear;

/// A named tensor parameter with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub v: ArrayD<f64>,
    pub g: ArrayD<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, v: ArrayD<f64>) -> Self {
        let g = ArrayD::zeros(v.raw_dim());
        Param {
            name: name.into(),
            v,
            g,
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Anything holding trainable parameters. Traversal order is structural and
/// stable, which the optimizer and the checkpoint format rely on.
pub trait Module {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.g.fill(0.0));
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }
}

/// Snapshot the gradient tensors in traversal order.
pub fn collect_grads(model: &mut impl Module) -> Vec<ArrayD<f64>> {
    let mut out = Vec::new();
    model.visit_params(&mut |p| out.push(p.g.clone()));
    out
}

/// Accumulate externally computed gradients (in traversal order).
pub fn add_grads(model: &mut impl Module, grads: &[ArrayD<f64>]) {
    let mut k = 0;
    model.visit_params(&mut |p| {
        p.g += &grads[k];
        k += 1;
    });
}

/// All parameter values with their names, in traversal order.
pub fn param_values(model: &mut impl Module) -> Vec<(String, ArrayD<f64>)> {
    let mut out = Vec::new();
    model.visit_params(&mut |p| out.push((p.name.clone(), p.v.clone())));
    out
}

/// Load parameter values by position, checking names and shapes.
pub fn load_param_values(
    model: &mut impl Module,
    values: &[(String, ArrayD<f64>)],
) -> crate::Result<()> {
    let mut k = 0;
    let mut err = None;
    model.visit_params(&mut |p| {
        if err.is_some() {
            return;
        }
        match values.get(k) {
            Some((name, v)) if name == &p.name && v.raw_dim() == p.v.raw_dim() => {
                p.v.assign(v);
            }
            Some((name, _)) => {
                err = Some(crate::Error::Checkpoint(format!(
                    "parameter {k}: expected '{}', found '{name}' (or shape mismatch)",
                    p.name
                )));
            }
            None => {
                err = Some(crate::Error::Checkpoint(format!(
                    "missing parameter {k} ('{}')",
                    p.name
                )));
            }
        }
        k += 1;
    });
    if let Some(e) = err {
        return Err(e);
    }
    if k != values.len() {
        return Err(crate::Error::Checkpoint(format!(
            "checkpoint has {} parameters, model expects {k}",
            values.len()
        )));
    }
    Ok(())
}
