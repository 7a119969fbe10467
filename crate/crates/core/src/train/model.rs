use std::rc::Rc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, PoolingKind};
use super::TrainError;
use crate::graph::GraphBatch;
use crate::infomax::{mi_loss, DiscriminatorParams};
use crate::layers::{gcn_forward, mlp_forward, Activation, Dense};
use crate::params::{Binding, ParamStore};
use crate::pool::{
    baseline_pool, cgipool_forward, random_select_pool, BaselineParams, MiTriple, PoolInput,
    PoolLayerParams, PoolOutput,
};
use crate::tensor::{Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub enum BlockPool {
    Cgi {
        layer: PoolLayerParams,
        discriminator: DiscriminatorParams,
    },
    Baseline(BaselineParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub conv: Dense,
    pub pool: BlockPool,
}

/// GCN + pooling blocks, summed mean‖max readouts and a two-layer classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub blocks: Vec<Block>,
    pub classifier: [Dense; 2],
    pub n_classes: usize,
}

pub struct ForwardOutput {
    pub logits: Var,
    pub mi: Vec<(MiTriple, DiscriminatorParams)>,
    pub pools: Vec<PoolOutput>,
}

impl Model {
    pub fn new(config: ModelConfig, in_dim: usize, n_classes: usize) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let f = config.hidden_dim;
        let mut store = ParamStore::new();
        let mut blocks = Vec::with_capacity(config.n_blocks);
        for b in 0..config.n_blocks {
            let conv = Dense::new(&mut store, &format!("block{b}.conv"), if b == 0 { in_dim } else { f }, f, &mut rng);
            let pool = match config.pooling_kind {
                // All three share one parameter layout so that a given seed
                // initializes them identically.
                PoolingKind::Cgipool | PoolingKind::CgipoolRs | PoolingKind::CgipoolNoMi => {
                    BlockPool::Cgi {
                        layer: PoolLayerParams {
                            score_r: Dense::new(&mut store, &format!("block{b}.score_r"), f, 1, &mut rng),
                            score_f: Dense::new(&mut store, &format!("block{b}.score_f"), f, 1, &mut rng),
                            encoder: Dense::new(&mut store, &format!("block{b}.encoder"), f, f, &mut rng),
                        },
                        discriminator: DiscriminatorParams::new(
                            &mut store,
                            &format!("block{b}.disc"),
                            f,
                            &mut rng,
                        ),
                    }
                }
                PoolingKind::Topk => BlockPool::Baseline(BaselineParams::TopK {
                    projection: store.glorot(format!("block{b}.projection"), f, 1, &mut rng),
                }),
                PoolingKind::Sagpool => BlockPool::Baseline(BaselineParams::SagPool {
                    score: Dense::new(&mut store, &format!("block{b}.score"), f, 1, &mut rng),
                }),
            };
            blocks.push(Block { conv, pool });
        }
        let classifier = [
            Dense::new(&mut store, "classifier.l1", 2 * f, f, &mut rng),
            Dense::new(&mut store, "classifier.l2", f, n_classes, &mut rng),
        ];
        Ok(Self {
            config,
            store,
            blocks,
            classifier,
            n_classes,
        })
    }

    /// Runs the network on a batch. `with_mi` requests the infomax triples;
    /// it is ignored for kinds without an infomax term.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        batch: &GraphBatch,
        with_mi: bool,
        rng: &mut impl Rng,
    ) -> Result<ForwardOutput, TrainError> {
        let ratio = self.config.pooling_ratio;
        let with_mi = with_mi && self.config.pooling_kind.uses_mi();
        let mut adjacency = Rc::clone(&batch.adjacency);
        let mut normalized = Rc::new(adjacency.gcn_normalize());
        let mut segments = Rc::clone(&batch.segments);
        let mut h = tape.constant(batch.features.clone());
        let mut readout: Option<Var> = None;
        let mut mi = Vec::new();
        let mut pools = Vec::with_capacity(self.blocks.len());

        for block in &self.blocks {
            h = gcn_forward(tape, bind, &normalized, h, &block.conv, Activation::Relu)?;
            let input = PoolInput {
                adjacency: Rc::clone(&adjacency),
                normalized: Rc::clone(&normalized),
                features: h,
                segments: Rc::clone(&segments),
            };
            let out = match &block.pool {
                BlockPool::Cgi { layer, discriminator } => {
                    let out = if self.config.pooling_kind == PoolingKind::CgipoolRs {
                        random_select_pool(tape, bind, &input, layer, ratio, with_mi, rng)?
                    } else {
                        cgipool_forward(tape, bind, &input, layer, ratio, with_mi)?
                    };
                    if let Some(t) = out.mi {
                        mi.push((t, *discriminator));
                    }
                    out
                }
                BlockPool::Baseline(params) => baseline_pool(tape, bind, &input, params, ratio)?,
            };
            let mean = tape.segment_mean(out.features, &out.segments)?;
            let max = tape.segment_max(out.features, &out.segments)?;
            let r = tape.concat_cols(mean, max)?;
            readout = Some(match readout {
                Some(acc) => tape.add(acc, r)?,
                None => r,
            });
            adjacency = Rc::clone(&out.adjacency);
            normalized = Rc::new(adjacency.gcn_normalize());
            segments = Rc::clone(&out.segments);
            h = out.features;
            pools.push(out);
        }

        let readout = readout.expect("at least one block");
        let logits = mlp_forward(
            tape,
            bind,
            readout,
            &[
                (self.classifier[0], Activation::Relu),
                (self.classifier[1], Activation::None),
            ],
        )?;
        Ok(ForwardOutput { logits, mi, pools })
    }
}

/// Mean cross-entropy of `logits` against `labels`.
pub fn classification_loss(
    tape: &mut Tape,
    logits: Var,
    labels: &Rc<Vec<usize>>,
) -> Result<Var, TrainError> {
    Ok(tape.cross_entropy(logits, Rc::clone(labels))?)
}

/// `cls + alpha·mi`; exactly `cls` when `alpha` is zero or there is no MI term.
pub fn total_loss(
    tape: &mut Tape,
    cls: Var,
    mi: Option<Var>,
    alpha: f64,
) -> Result<Var, TrainError> {
    match mi {
        Some(mi) if alpha != 0.0 => {
            let scaled = tape.scalar_mul(mi, alpha);
            Ok(tape.add(cls, scaled)?)
        }
        _ => Ok(cls),
    }
}

/// Losses of one forward pass over a batch.
pub struct BatchLoss {
    pub total: Var,
    pub cls: Var,
    pub mi: Option<Var>,
    pub logits: Var,
}

pub fn batch_loss(
    model: &Model,
    tape: &mut Tape,
    bind: &Binding,
    batch: &GraphBatch,
    with_mi: bool,
    rng: &mut impl Rng,
) -> Result<BatchLoss, TrainError> {
    let alpha = model.config.effective_alpha();
    let out = model.forward(tape, bind, batch, with_mi && alpha != 0.0, rng)?;
    let cls = classification_loss(tape, out.logits, &batch.labels)?;
    let mi = if out.mi.is_empty() {
        None
    } else {
        Some(mi_loss(tape, bind, &out.mi)?)
    };
    let total = total_loss(tape, cls, mi, alpha)?;
    Ok(BatchLoss {
        total,
        cls,
        mi,
        logits: out.logits,
    })
}

/// Row-wise argmax, ties to the lowest class index.
pub fn predictions(logits: &crate::tensor::Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
