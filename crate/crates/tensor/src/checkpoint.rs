use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{ParamStore, Result, Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &str = "VAPS-PARAMS";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// JSON parameter checkpoint: a magic string, a format version, and the
/// parameters in registration order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    magic: String,
    version: u32,
    params: Vec<Entry>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        Self {
            magic: CHECKPOINT_MAGIC.to_string(),
            version: CHECKPOINT_VERSION,
            params: store
                .iter()
                .map(|(_, name, t)| Entry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_store(self) -> Result<ParamStore> {
        if self.magic != CHECKPOINT_MAGIC {
            return Err(TensorError::Checkpoint(format!("bad magic {:?}", self.magic)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(TensorError::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let mut store = ParamStore::new();
        for e in self.params {
            store.add(e.name, Tensor::new(e.shape, e.values)?);
        }
        Ok(store)
    }
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_store(store))
        .map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    ckpt.into_store()
}
