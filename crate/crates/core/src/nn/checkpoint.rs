//! JSON checkpoints.
//!
//! Layout: `{format, version, schema, normalization, config, params}` where
//! each parameter is `{name, shape: [rows, cols], values}` in row-major
//! order. Floats are written in shortest round-trip form, so a save/load
//! cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::{Param, Policy, PolicyConfig, PolicyNet};
use super::tape::Mat;
use crate::datagen::{FeatureSchema, Normalization};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "teamalloc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    schema: FeatureSchema,
    normalization: Normalization,
    config: PolicyConfig,
    params: Vec<ParamFile>,
}

pub fn to_json(policy: &Policy) -> String {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        schema: policy.schema.clone(),
        normalization: policy.normalization.clone(),
        config: policy.net.config,
        params: policy
            .net
            .params
            .iter()
            .map(|p| ParamFile {
                name: p.name.clone(),
                shape: [p.value.nrows(), p.value.ncols()],
                values: p.value.iter().copied().collect(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("checkpoint serializes")
}

/// Parses a checkpoint and checks it against the current feature schema.
pub fn from_json(text: &str) -> Result<Policy> {
    let file: CheckpointFile = serde_json::from_str(text)
        .map_err(|e| Error::SchemaMismatch(format!("corrupt checkpoint: {e}")))?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(Error::SchemaMismatch(format!(
            "unsupported checkpoint {} v{}",
            file.format, file.version
        )));
    }
    let current = FeatureSchema::current();
    if file.schema != current {
        return Err(Error::SchemaMismatch(format!(
            "checkpoint feature schema v{} {:?} does not match v{} {:?}",
            file.schema.version, file.schema.team, current.version, current.team
        )));
    }
    let params = file
        .params
        .into_iter()
        .map(|p| {
            let value = Mat::from_shape_vec((p.shape[0], p.shape[1]), p.values).map_err(|_| {
                Error::SchemaMismatch(format!("parameter {} has the wrong value count", p.name))
            })?;
            Ok(Param {
                name: p.name,
                value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let net = PolicyNet::from_params(file.config, params)?;
    Policy::new(net, file.normalization, file.schema)
}

pub fn save(policy: &Policy, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(policy)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Policy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text).map_err(|e| match e {
        Error::SchemaMismatch(msg) => Error::SchemaMismatch(format!("{}: {msg}", path.display())),
        other => other,
    })
}
