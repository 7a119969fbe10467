use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::params::ParamStore;
use crate::tensor::Matrix;

pub const CHECKPOINT_FORMAT: &str = "cgipool-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    decay: bool,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    params: Vec<TensorRecord>,
}

fn err(path: &Path, msg: impl ToString) -> TrainError {
    TrainError::Checkpoint {
        path: path.display().to_string(),
        msg: msg.to_string(),
    }
}

/// Writes every parameter matrix with its shape as versioned JSON.
pub fn save_checkpoint(path: &Path, store: &ParamStore) -> Result<(), TrainError> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        params: store
            .entries()
            .iter()
            .map(|e| TensorRecord {
                name: e.name.clone(),
                rows: e.value.rows(),
                cols: e.value.cols(),
                decay: e.decay,
                data: e.value.data().to_vec(),
            })
            .collect(),
    };
    let text = serde_json::to_string(&file).map_err(|e| err(path, e))?;
    fs::write(path, text).map_err(|e| err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore, TrainError> {
    let text = fs::read_to_string(path).map_err(|e| err(path, e))?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| err(path, e))?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(err(
            path,
            format!("unsupported format {} v{}", file.format, file.version),
        ));
    }
    let mut store = ParamStore::new();
    for r in file.params {
        let value = Matrix::from_vec(r.rows, r.cols, r.data).map_err(|e| err(path, e))?;
        store.add(r.name, value, r.decay);
    }
    Ok(store)
}
