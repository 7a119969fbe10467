//! Pair discriminator and the GAN-style mutual-information loss.

use rand::Rng;

use crate::layers::Dense;
use crate::params::{Binding, ParamStore};
use crate::pool::MiTriple;
use crate::tensor::{Tape, TensorError, Var};

/// Two-layer MLP over the concatenation `[e_a ‖ e_b]`: `2f → f → 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscriminatorParams {
    pub layer1: Dense,
    pub layer2: Dense,
}

impl DiscriminatorParams {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            layer1: Dense::new(store, &format!("{name}.l1"), 2 * dim, dim, rng),
            layer2: Dense::new(store, &format!("{name}.l2"), dim, 1, rng),
        }
    }
}

/// Row-wise logits `T(e_a[i], e_b[i])`. No sigmoid is applied here.
pub fn discriminate(
    tape: &mut Tape,
    bind: &Binding,
    e_a: Var,
    e_b: Var,
    params: &DiscriminatorParams,
) -> Result<Var, TensorError> {
    if tape.shape(e_a) != tape.shape(e_b) {
        return Err(TensorError::ShapeMismatch {
            op: "discriminate",
            lhs: tape.shape(e_a),
            rhs: tape.shape(e_b),
        });
    }
    let pair = tape.concat_cols(e_a, e_b)?;
    let hidden = params.layer1.forward(tape, bind, pair)?;
    let hidden = tape.relu(hidden);
    params.layer2.forward(tape, bind, hidden)
}

/// `mean[softplus(−pos) + softplus(neg)]` over every row of every pair,
/// i.e. `−mean[log σ(pos) + log(1 − σ(neg))]`.
pub fn mi_loss_from_logits(tape: &mut Tape, logits: &[(Var, Var)]) -> Result<Var, TensorError> {
    let mut total: Option<Var> = None;
    let mut count = 0usize;
    for &(pos, neg) in logits {
        if tape.shape(pos) != tape.shape(neg) {
            return Err(TensorError::ShapeMismatch {
                op: "mi_loss",
                lhs: tape.shape(pos),
                rhs: tape.shape(neg),
            });
        }
        let flipped = tape.scalar_mul(pos, -1.0);
        let a = tape.softplus(flipped);
        let b = tape.softplus(neg);
        let both = tape.add(a, b)?;
        let s = tape.sum(both);
        count += tape.shape(pos).0 * tape.shape(pos).1;
        total = Some(match total {
            Some(t) => tape.add(t, s)?,
            None => s,
        });
    }
    match total {
        Some(t) if count > 0 => Ok(tape.scalar_mul(t, 1.0 / count as f64)),
        _ => Err(TensorError::EmptyInput { op: "mi_loss" }),
    }
}

/// Infomax loss over the triples of every pooling layer, each scored by its
/// own discriminator.
pub fn mi_loss(
    tape: &mut Tape,
    bind: &Binding,
    layers: &[(MiTriple, DiscriminatorParams)],
) -> Result<Var, TensorError> {
    let mut logits = Vec::with_capacity(layers.len());
    for (t, d) in layers {
        let pos = discriminate(tape, bind, t.e_in, t.e_pos, d)?;
        let neg = discriminate(tape, bind, t.e_in, t.e_neg, d)?;
        logits.push((pos, neg));
    }
    mi_loss_from_logits(tape, &logits)
}
