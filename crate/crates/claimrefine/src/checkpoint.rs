//! Policy checkpoints: dimensions, vocabulary and every matrix in one JSON
//! document. Floats are written shortest-round-trip and parsed exactly, so a
//! reloaded policy scores bit-identically.

use std::path::Path;

use claimrefine_core::policy::{Policy, PolicyDims, PolicyParams, Tokenizer};
use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};

pub const CHECKPOINT_FORMAT: &str = "claimrefine-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: PolicyDims,
    pub tokenizer: Tokenizer,
    pub params: PolicyParams,
}

impl Checkpoint {
    pub fn new(policy: &Policy) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: policy.params.dims(),
            tokenizer: policy.tokenizer.clone(),
            params: policy.params.clone(),
        }
    }

    pub fn into_policy(self) -> Policy {
        Policy { tokenizer: self.tokenizer, params: self.params }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        io::to_pretty_json(self)
    }
}

pub fn save(path: &Path, policy: &Policy) -> Result<(), IoError> {
    io::write_atomic(path, &Checkpoint::new(policy).to_bytes())
}

pub fn load(path: &Path) -> Result<Policy, IoError> {
    let ck: Checkpoint = io::read_json(path)?;
    let bad = |message: String| IoError::Format { path: path.to_path_buf(), message };
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
    }
    ck.params.validate().map_err(|e| bad(e.to_string()))?;
    if ck.params.dims() != ck.dims || ck.tokenizer.len() != ck.dims.vocab {
        return Err(bad("dimensions disagree with the stored tensors".into()));
    }
    Ok(ck.into_policy())
}
