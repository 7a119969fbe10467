//! Coarsened-graph infomax pooling and the node-selection baselines.
//!
//! Every pooling layer scores nodes, keeps the `k` best per graph, slices the
//! raw adjacency down to the kept nodes and gates the kept feature rows by
//! their scores. CGIPool runs two scoring GNNs: the positive branch should
//! pick representative nodes and the negative branch unimportant ones. The
//! kept set comes from the fused score `σ(y_r − y_f)`. With the infomax term
//! enabled, the layer also encodes the input graph and both sliced graphs
//! with one shared encoder so the discriminator can contrast them.

use std::rc::Rc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::seq::index::sample;
use thiserror::Error;

use crate::layers::{encode_graph, gcn_forward, Activation, EncoderParams, GcnLayerParams};
use crate::params::{Binding, ParamId};
use crate::tensor::{Matrix, Segments, SparseMatrix, Tape, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoolError {
    #[error("k = {k} outside 1..={n}")]
    BadK { k: usize, n: usize },
    #[error("pooling ratio {0} outside (0, 1]")]
    BadRatio(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Number of nodes kept from an `n_nodes` graph: `max(1, ceil(ratio·n))`.
pub fn pooling_k(n_nodes: usize, ratio: f64) -> usize {
    // The epsilon keeps products like 0.6·5 = 3.0000000000000004 at 3.
    let k = (ratio * n_nodes as f64 - 1e-9).ceil() as usize;
    k.clamp(1, n_nodes.max(1))
}

/// Indices of the `k` largest scores, ties to the lower index, returned in
/// ascending index order.
pub fn topk_select(scores: &[f64], k: usize) -> Result<Vec<usize>, PoolError> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(PoolError::BadK { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// `σ(GCN(H))` with a one-column GCN.
pub fn score_nodes(
    tape: &mut Tape,
    bind: &Binding,
    a_norm: &Rc<SparseMatrix>,
    h: Var,
    gnn: &GcnLayerParams,
) -> Result<Var, TensorError> {
    let z = gcn_forward(tape, bind, a_norm, h, gnn, Activation::None)?;
    if tape.shape(z).1 != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "score_nodes",
            lhs: tape.shape(z),
            rhs: (tape.shape(z).0, 1),
        });
    }
    Ok(tape.sigmoid(z))
}

/// Induced subgraph on `idx` with kept rows scaled by their score:
/// `A(idx, idx)` and `H(idx, :) ⊙ y(idx)`. Without scores the rows are copied.
pub fn slice_graph(
    tape: &mut Tape,
    adjacency: &SparseMatrix,
    h: Var,
    scores: Option<Var>,
    idx: &Rc<Vec<usize>>,
) -> Result<(SparseMatrix, Var), TensorError> {
    let a = adjacency.principal_submatrix(idx)?;
    let rows = tape.gather_rows(h, Rc::clone(idx))?;
    let h_new = match scores {
        Some(y) => {
            let ys = tape.gather_rows(y, Rc::clone(idx))?;
            tape.mul_col(rows, ys)?
        }
        None => rows,
    };
    Ok((a, h_new))
}

/// `σ(y_r − y_f)`.
pub fn fuse_scores(tape: &mut Tape, y_r: Var, y_f: Var) -> Result<Var, TensorError> {
    let d = tape.sub(y_r, y_f)?;
    Ok(tape.sigmoid(d))
}

/// Per-graph node selection inside a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Kept rows of the batch, grouped by graph, ascending within a graph.
    pub global: Rc<Vec<usize>>,
    /// Kept node ids local to each graph.
    pub local: Vec<Vec<usize>>,
    pub segments: Rc<Segments>,
}

impl Selection {
    fn from_local(members: &[Vec<usize>], local: Vec<Vec<usize>>) -> Self {
        let global = members
            .iter()
            .zip(&local)
            .flat_map(|(m, keep)| keep.iter().map(|&i| m[i]))
            .collect();
        let sizes: Vec<usize> = local.iter().map(Vec::len).collect();
        Self {
            global: Rc::new(global),
            local,
            segments: Rc::new(Segments::from_sizes(&sizes)),
        }
    }
}

/// Top-`k(N_g, ratio)` selection within each segment of a column of scores.
pub fn select_top(
    scores: &Matrix,
    segments: &Segments,
    ratio: f64,
) -> Result<Selection, PoolError> {
    let members = segments.members();
    let local = members
        .iter()
        .map(|m| {
            let s: Vec<f64> = m.iter().map(|&r| scores.get(r, 0)).collect();
            topk_select(&s, pooling_k(m.len(), ratio))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Selection::from_local(&members, local))
}

/// Uniformly random `k(N_g, ratio)`-subset within each segment.
pub fn select_random(segments: &Segments, ratio: f64, rng: &mut impl Rng) -> Selection {
    let members = segments.members();
    let local = members
        .iter()
        .map(|m| {
            let k = pooling_k(m.len(), ratio);
            let mut keep = sample(rng, m.len(), k).into_vec();
            keep.sort_unstable();
            keep
        })
        .collect();
    Selection::from_local(&members, local)
}

/// Graph state entering a pooling layer.
#[derive(Clone, Debug)]
pub struct PoolInput {
    /// Raw 0/1 block-diagonal adjacency.
    pub adjacency: Rc<SparseMatrix>,
    /// `gcn_normalize(adjacency)`.
    pub normalized: Rc<SparseMatrix>,
    pub features: Var,
    pub segments: Rc<Segments>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MiTriple {
    /// Embedding of the layer's input graph.
    pub e_in: Var,
    /// Embedding of the real coarsened graph.
    pub e_pos: Var,
    /// Embedding of the fake coarsened graph.
    pub e_neg: Var,
}

#[derive(Clone, Debug)]
pub struct PoolOutput {
    pub adjacency: Rc<SparseMatrix>,
    pub features: Var,
    pub segments: Rc<Segments>,
    pub kept: Selection,
    /// Score used to gate the kept rows (`y_d` for CGIPool).
    pub scores: Var,
    pub positive_scores: Option<Var>,
    pub negative_scores: Option<Var>,
    pub positive: Option<Selection>,
    pub negative: Option<Selection>,
    pub mi: Option<MiTriple>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolLayerParams {
    pub score_r: GcnLayerParams,
    pub score_f: GcnLayerParams,
    pub encoder: EncoderParams,
}

fn check_ratio(ratio: f64) -> Result<(), PoolError> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(PoolError::BadRatio(ratio))
    }
}

fn coarsen(
    tape: &mut Tape,
    input: &PoolInput,
    gate: Var,
    ratio: f64,
) -> Result<(Selection, SparseMatrix, Var), PoolError> {
    let kept = select_top(tape.value(gate), &input.segments, ratio)?;
    let (a, h) = slice_graph(tape, &input.adjacency, input.features, Some(gate), &kept.global)?;
    Ok((kept, a, h))
}

/// One CGIPool layer over a batch.
///
/// With `with_mi` unset the layer still fuses both score branches but skips
/// the real/fake slicing and the encoder, so no [`MiTriple`] is produced.
pub fn cgipool_forward(
    tape: &mut Tape,
    bind: &Binding,
    input: &PoolInput,
    params: &PoolLayerParams,
    ratio: f64,
    with_mi: bool,
) -> Result<PoolOutput, PoolError> {
    check_ratio(ratio)?;
    let h = input.features;
    let y_r = score_nodes(tape, bind, &input.normalized, h, &params.score_r)?;
    let y_f = score_nodes(tape, bind, &input.normalized, h, &params.score_f)?;

    let (positive, negative, mi) = if with_mi {
        let pos = select_top(tape.value(y_r), &input.segments, ratio)?;
        let neg = select_top(tape.value(y_f), &input.segments, ratio)?;
        let (_, h_r) = slice_graph(tape, &input.adjacency, h, Some(y_r), &pos.global)?;
        let (_, h_f) = slice_graph(tape, &input.adjacency, h, Some(y_f), &neg.global)?;
        let e_in = encode_graph(tape, bind, h, &input.segments, &params.encoder)?;
        let e_pos = encode_graph(tape, bind, h_r, &pos.segments, &params.encoder)?;
        let e_neg = encode_graph(tape, bind, h_f, &neg.segments, &params.encoder)?;
        (Some(pos), Some(neg), Some(MiTriple { e_in, e_pos, e_neg }))
    } else {
        (None, None, None)
    };

    let y_d = fuse_scores(tape, y_r, y_f)?;
    let (kept, a, h_new) = coarsen(tape, input, y_d, ratio)?;
    Ok(PoolOutput {
        adjacency: Rc::new(a),
        features: h_new,
        segments: Rc::clone(&kept.segments),
        kept,
        scores: y_d,
        positive_scores: Some(y_r),
        negative_scores: Some(y_f),
        positive,
        negative,
        mi,
    })
}

/// CGIPool with the learned negative branch replaced by a uniformly random
/// node subset of the same size. The fake graph is not score-gated and the
/// kept set follows `y_r` alone.
pub fn random_select_pool(
    tape: &mut Tape,
    bind: &Binding,
    input: &PoolInput,
    params: &PoolLayerParams,
    ratio: f64,
    with_mi: bool,
    rng: &mut impl Rng,
) -> Result<PoolOutput, PoolError> {
    check_ratio(ratio)?;
    let h = input.features;
    let y_r = score_nodes(tape, bind, &input.normalized, h, &params.score_r)?;
    let (positive, negative, mi) = if with_mi {
        let pos = select_top(tape.value(y_r), &input.segments, ratio)?;
        let neg = select_random(&input.segments, ratio, rng);
        let (_, h_r) = slice_graph(tape, &input.adjacency, h, Some(y_r), &pos.global)?;
        let (_, h_f) = slice_graph(tape, &input.adjacency, h, None, &neg.global)?;
        let e_in = encode_graph(tape, bind, h, &input.segments, &params.encoder)?;
        let e_pos = encode_graph(tape, bind, h_r, &pos.segments, &params.encoder)?;
        let e_neg = encode_graph(tape, bind, h_f, &neg.segments, &params.encoder)?;
        (Some(pos), Some(neg), Some(MiTriple { e_in, e_pos, e_neg }))
    } else {
        (None, None, None)
    };
    let (kept, a, h_new) = coarsen(tape, input, y_r, ratio)?;
    Ok(PoolOutput {
        adjacency: Rc::new(a),
        features: h_new,
        segments: Rc::clone(&kept.segments),
        kept,
        scores: y_r,
        positive_scores: Some(y_r),
        negative_scores: None,
        positive,
        negative,
        mi,
    })
}

/// Scoring rule of a single-branch baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineParams {
    /// Learned projection `p` (f×1): `|H·p| / ‖p‖` selects and gates.
    TopK { projection: ParamId },
    /// Self-attention pooling: `σ(GCN(H))` selects and gates.
    SagPool { score: GcnLayerParams },
}

pub fn baseline_pool(
    tape: &mut Tape,
    bind: &Binding,
    input: &PoolInput,
    params: &BaselineParams,
    ratio: f64,
) -> Result<PoolOutput, PoolError> {
    check_ratio(ratio)?;
    let h = input.features;
    let scores = match params {
        BaselineParams::TopK { projection } => {
            let s = tape.normalized_projection(h, bind[*projection])?;
            tape.abs(s)
        }
        BaselineParams::SagPool { score } => {
            score_nodes(tape, bind, &input.normalized, h, score)?
        }
    };
    let (kept, a, h_new) = coarsen(tape, input, scores, ratio)?;
    Ok(PoolOutput {
        adjacency: Rc::new(a),
        features: h_new,
        segments: Rc::clone(&kept.segments),
        kept,
        scores,
        positive_scores: None,
        negative_scores: None,
        positive: None,
        negative: None,
        mi: None,
    })
}

/// Seeded stream for the random negative branch.
pub fn negative_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_f00d)
}
