//! GCN convolution, the weight-shared graph encoder, and dense layers.

use std::rc::Rc;

use rand::Rng;

use crate::params::{Binding, ParamId, ParamStore};
use crate::tensor::{Segments, SparseMatrix, Tape, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

/// Affine map `x·W + b`. Used for GCN weights, encoders and MLP layers alike.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            weight: store.glorot(format!("{name}.weight"), fan_in, fan_out, rng),
            bias: store.zeros(format!("{name}.bias"), 1, fan_out),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var, TensorError> {
        let xw = tape.matmul(x, bind[self.weight])?;
        tape.add_row(xw, bind[self.bias])
    }
}

pub type GcnLayerParams = Dense;
pub type EncoderParams = Dense;

fn activate(tape: &mut Tape, x: Var, activation: Activation) -> Var {
    match activation {
        Activation::Relu => tape.relu(x),
        Activation::None => x,
    }
}

/// `activation(Â·H·W + b)`.
pub fn gcn_forward(
    tape: &mut Tape,
    bind: &Binding,
    a_norm: &Rc<SparseMatrix>,
    h: Var,
    params: &GcnLayerParams,
    activation: Activation,
) -> Result<Var, TensorError> {
    let hw = tape.matmul(h, bind[params.weight])?;
    let ahw = tape.spmm(a_norm, hw)?;
    let out = tape.add_row(ahw, bind[params.bias])?;
    Ok(activate(tape, out, activation))
}

/// Per-graph embedding `ReLU(mean(H_g)·W + b)`, one row per segment.
pub fn encode_graph(
    tape: &mut Tape,
    bind: &Binding,
    h: Var,
    segments: &Rc<Segments>,
    params: &EncoderParams,
) -> Result<Var, TensorError> {
    let pooled = tape.segment_mean(h, segments)?;
    let z = params.forward(tape, bind, pooled)?;
    Ok(tape.relu(z))
}

pub fn mlp_forward(
    tape: &mut Tape,
    bind: &Binding,
    x: Var,
    layers: &[(Dense, Activation)],
) -> Result<Var, TensorError> {
    layers.iter().try_fold(x, |h, (layer, act)| {
        let z = layer.forward(tape, bind, h)?;
        Ok(activate(tape, z, *act))
    })
}
