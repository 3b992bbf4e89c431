//! Parameter checkpoints: one JSON object mapping each parameter name to
//! `{"shape": [..], "data": [..]}` with decimal `f64` values.
//!
//! Values are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nn::Param;
use super::{NdError, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub type ParamMap = BTreeMap<String, TensorRecord>;

pub fn to_param_map<'a>(params: impl IntoIterator<Item = &'a Param>) -> ParamMap {
    params
        .into_iter()
        .map(|p| {
            (
                p.name.clone(),
                TensorRecord {
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                },
            )
        })
        .collect()
}

/// Overwrites every parameter from `map`; all must be present with matching shapes.
pub fn load_into<'a>(
    map: &ParamMap,
    params: impl IntoIterator<Item = &'a mut Param>,
) -> Result<(), NdError> {
    for p in params {
        let rec = map
            .get(&p.name)
            .ok_or_else(|| NdError::Checkpoint(format!("missing parameter {}", p.name)))?;
        if rec.shape != p.value.shape() {
            return Err(NdError::ShapeMismatch {
                op: "load_checkpoint",
                lhs: p.value.shape().to_vec(),
                rhs: rec.shape.clone(),
            });
        }
        p.value = Tensor::new(rec.shape.clone(), rec.data.clone())?;
    }
    Ok(())
}

pub fn write_json(path: &Path, map: &ParamMap) -> Result<(), NdError> {
    let text = serde_json::to_string_pretty(map).map_err(|e| NdError::Checkpoint(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| NdError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn read_json(path: &Path) -> Result<ParamMap, NdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| NdError::Checkpoint(format!("{}: {e}", path.display())))?;
    let map: ParamMap =
        serde_json::from_str(&text).map_err(|e| NdError::Checkpoint(format!("{}: {e}", path.display())))?;
    for (name, rec) in &map {
        if rec.shape.iter().product::<usize>() != rec.data.len() {
            return Err(NdError::Checkpoint(format!(
                "{name}: shape {:?} does not match {} values",
                rec.shape,
                rec.data.len()
            )));
        }
    }
    Ok(map)
}
