use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::model::{batch_loss, predictions, Model};
use super::optim::Adam;
use super::{mix_seed, TrainError};
use crate::graph::{Dataset, Graph, GraphBatch, Split};
use crate::pool::negative_rng;
use crate::tensor::Tape;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model,
    pub epochs: Vec<EpochMetrics>,
    /// 1-based epoch of the returned checkpoint.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    /// Mean classification loss.
    pub loss: f64,
    pub accuracy: f64,
}

/// Classification loss and accuracy over `graphs`, without the infomax term.
pub fn evaluate(model: &Model, graphs: &[&Graph], batch_size: usize) -> Result<EvalResult, TrainError> {
    if graphs.is_empty() {
        return Err(TrainError::Config("cannot evaluate an empty split".into()));
    }
    // Evaluation never draws random negatives; the stream is a placeholder.
    let mut rng = negative_rng(0);
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in graphs.chunks(batch_size.max(1)) {
        let batch = GraphBatch::new(chunk);
        let mut tape = Tape::new();
        let bind = model.store.bind(&mut tape);
        let out = batch_loss(model, &mut tape, &bind, &batch, false, &mut rng)?;
        loss_sum += tape.value(out.cls).item() * chunk.len() as f64;
        correct += predictions(tape.value(out.logits))
            .iter()
            .zip(batch.labels.iter())
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(EvalResult {
        loss: loss_sum / graphs.len() as f64,
        accuracy: correct as f64 / graphs.len() as f64,
    })
}

/// Mini-batch training with early stopping on validation loss.
///
/// Patience counts epochs since the last strict improvement; training stops
/// once it reaches `patience_epochs` or after `max_epochs`.
pub fn train_model(
    dataset: &Dataset,
    split: &Split,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if dataset.feature_dim == 0 {
        return Err(TrainError::Config(format!(
            "dataset {} has no node features; featurize it first",
            dataset.name
        )));
    }
    if split.train.is_empty() || split.val.is_empty() {
        return Err(TrainError::Config("train and validation splits must be non-empty".into()));
    }

    let mut model = Model::new(model_cfg.clone(), dataset.feature_dim, dataset.n_classes)?;
    let mut adam = Adam::new(&model.store, train_cfg.learning_rate, train_cfg.weight_decay);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(model_cfg.seed, 0x5u64));
    let mut neg_rng = negative_rng(model_cfg.seed);
    let val_graphs = dataset.subset(&split.val);

    let mut order = split.train.clone();
    let mut epochs = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.store.clone());
    let mut since_best = 0usize;

    for epoch in 1..=train_cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(train_cfg.batch_size) {
            let graphs = dataset.subset(chunk);
            let batch = GraphBatch::new(&graphs);
            let mut tape = Tape::new();
            let bind = model.store.bind(&mut tape);
            let out = batch_loss(&model, &mut tape, &bind, &batch, true, &mut neg_rng)?;
            let loss = tape.value(out.total).item();
            if !loss.is_finite() {
                return Err(TrainError::NonFinite(format!("training loss {loss} at epoch {epoch}")));
            }
            loss_sum += loss * chunk.len() as f64;
            correct += predictions(tape.value(out.logits))
                .iter()
                .zip(batch.labels.iter())
                .filter(|(p, l)| p == l)
                .count();
            let mut grads = tape.backward(out.total)?;
            let per_param: Vec<_> = bind.vars().iter().map(|&v| grads.take(v)).collect();
            adam.step(&mut model.store, &per_param)?;
        }

        let val = evaluate(&model, &val_graphs, train_cfg.batch_size)?;
        if !val.loss.is_finite() {
            return Err(TrainError::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        epochs.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_acc: correct as f64 / order.len() as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
        });
        if val.loss < best.0 {
            best = (val.loss, epoch, model.store.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= train_cfg.patience_epochs {
                break;
            }
        }
    }

    let (best_val_loss, best_epoch, store) = best;
    model.store = store;
    Ok(TrainOutcome {
        model,
        epochs,
        best_epoch,
        best_val_loss,
    })
}
