use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, PoolingKind, TrainConfig};
use super::trainer::{evaluate, train_model, EpochMetrics, TrainOutcome};
use super::{mix_seed, TrainError};
use crate::graph::{split_dataset, Dataset};
use crate::params::ParamStore;

/// Caps worker threads for parallel repeats.
pub const THREADS_ENV: &str = "CGIPOOL_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatMetrics {
    pub repeat: usize,
    pub split_seed: u64,
    pub model_seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test_acc: f64,
    #[serde(skip)]
    pub checkpoint: Option<ParamStore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub kind: PoolingKind,
    pub ratio: f64,
    pub alpha: f64,
    pub repeats: Vec<RepeatMetrics>,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Seeds of repeat `r`: `(split seed, model seed)`.
pub fn repeat_seeds(split_seed: u64, model_seed: u64, r: usize) -> (u64, u64) {
    (
        mix_seed(split_seed, 2 * r as u64 + 1),
        mix_seed(model_seed, 2 * r as u64 + 2),
    )
}

fn thread_pool() -> rayon::ThreadPool {
    let n = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool")
}

pub fn run_repeat(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    repeat: usize,
) -> Result<RepeatMetrics, TrainError> {
    let (split_seed, model_seed) = repeat_seeds(train_cfg.split.seed, model_cfg.seed, repeat);
    let mut spec = train_cfg.split;
    spec.seed = split_seed;
    let split = split_dataset(dataset.len(), &spec)?;
    let cfg = ModelConfig {
        seed: model_seed,
        ..model_cfg.clone()
    };
    let TrainOutcome {
        model,
        epochs,
        best_epoch,
        best_val_loss,
    } = train_model(dataset, &split, &cfg, train_cfg)?;
    let test = evaluate(&model, &dataset.subset(&split.test), train_cfg.batch_size)?;
    Ok(RepeatMetrics {
        repeat,
        split_seed,
        model_seed,
        epochs,
        best_epoch,
        best_val_loss,
        test_acc: test.accuracy,
        checkpoint: Some(model.store),
    })
}

/// `n_repeats` independent re-split, re-initialized train/test runs.
pub fn run_experiment(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<RunMetrics, TrainError> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    let repeats: Vec<RepeatMetrics> = thread_pool().install(|| {
        (0..train_cfg.n_repeats)
            .into_par_iter()
            .map(|r| run_repeat(dataset, model_cfg, train_cfg, r))
            .collect::<Result<_, _>>()
    })?;
    let accs: Vec<f64> = repeats.iter().map(|r| r.test_acc).collect();
    let (mean_test_acc, std_test_acc) = mean_std(&accs);
    Ok(RunMetrics {
        kind: model_cfg.pooling_kind,
        ratio: model_cfg.pooling_ratio,
        alpha: model_cfg.alpha,
        repeats,
        mean_test_acc,
        std_test_acc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: PoolingKind,
    pub ratio: f64,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub n: usize,
    pub accs: Vec<f64>,
}

/// One experiment per `(kind, ratio)` cell, kinds outermost.
pub fn ratio_sweep(
    dataset: &Dataset,
    ratios: &[f64],
    kinds: &[PoolingKind],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<Vec<SweepRow>, TrainError> {
    if let Some(r) = ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        return Err(TrainError::Config(format!("ratio {r} outside (0, 1]")));
    }
    let mut rows = Vec::with_capacity(ratios.len() * kinds.len());
    for &kind in kinds {
        for &ratio in ratios {
            let cfg = ModelConfig {
                pooling_kind: kind,
                pooling_ratio: ratio,
                ..model_cfg.clone()
            };
            let m = run_experiment(dataset, &cfg, train_cfg)?;
            rows.push(SweepRow {
                kind,
                ratio,
                mean_acc: m.mean_test_acc,
                std_acc: m.std_test_acc,
                n: m.repeats.len(),
                accs: m.repeats.iter().map(|r| r.test_acc).collect(),
            });
        }
    }
    Ok(rows)
}
