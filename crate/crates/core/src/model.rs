//! Learnable parameter sets, initialization, and checkpoint conversion.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoder::EncoderParams;
use crate::graph::GraphError;
use crate::lpe::LpeParams;
use crate::numerics::{Checkpoint, NumericsError, Parameters, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("bound check needs at least 2 trace entries, got {0}")]
    TraceTooShort(usize),
    #[error("node {node}: commit at step {step} does not follow stored step {last}")]
    StepOrder { node: usize, step: u64, last: u64 },
    #[error("{0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Layer widths and window sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_n: usize,
    pub d_e: usize,
    pub d_t: usize,
    pub d_p: usize,
    /// Positional history length.
    pub l: usize,
    /// Recent interactions per node.
    pub k: usize,
}

impl Dims {
    pub fn d_te(&self) -> usize {
        self.d_t + self.d_e
    }
}

/// Uniform in `±1/√fan_in`.
pub(crate) fn uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-bound..=bound)).collect())
        .expect("length matches shape")
}

/// Every learnable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub lpe: LpeParams,
    pub encoder: EncoderParams,
}

impl ModelParams {
    /// Random initialization. With `share_pe_mlp` the encoder's positional
    /// branch reuses the update MLP of the positional encoder.
    pub fn init(dims: Dims, share_pe_mlp: bool, rng: &mut impl Rng) -> Self {
        let lpe = LpeParams::init(dims, rng);
        let encoder = EncoderParams::init(dims, share_pe_mlp, rng);
        Self { dims, lpe, encoder }
    }

    /// Identity filter, last-column pooling, every other weight zero.
    pub fn pass_through(dims: Dims, share_pe_mlp: bool) -> Self {
        Self {
            dims,
            lpe: LpeParams::pass_through(dims.d_p, dims.d_t, dims.l),
            encoder: EncoderParams::zeros(dims, share_pe_mlp),
        }
    }

    pub fn shares_pe_mlp(&self) -> bool {
        self.encoder.pe_mlp.is_none()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        self.visit(&mut |name, t| ckpt.insert(name, t.clone()));
        ckpt
    }

    /// Overwrites every parameter from `ckpt`; names and shapes must match.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        self.visit_mut(&mut |name, t| match ckpt.get(name) {
            Some(src) if src.shape() == t.shape() => *t = src.clone(),
            Some(src) => problems.push(format!(
                "`{name}` has shape {:?}, expected {:?}",
                src.shape(),
                t.shape()
            )),
            None => problems.push(format!("`{name}` is missing")),
        });
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Checkpoint(problems.join("; ")))
        }
    }

    /// Digest of parameter names and shapes.
    pub fn shape_hash(&self) -> String {
        Self::checkpoint_shape_hash(&self.to_checkpoint())
    }

    /// Shape digest of the parameter entries of a checkpoint.
    pub fn checkpoint_shape_hash(ckpt: &Checkpoint) -> String {
        let mut h = Sha256::new();
        for name in ckpt.names().filter(|n| !n.starts_with("init_pe.") && !n.starts_with("store.")) {
            let t = ckpt.get(name).expect("listed name");
            h.update(name.as_bytes());
            h.update(format!("{:?};", t.shape()).as_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.is_finite());
        ok
    }
}

impl Parameters for ModelParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        self.lpe.visit(f);
        self.encoder.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.lpe.visit_mut(f);
        self.encoder.visit_mut(f);
    }
}
