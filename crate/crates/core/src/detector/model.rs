use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DetectorConfig, DetectorParams, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::harness::ModalityMode;
use crate::ndgrad::Tensor;

/// On-disk layout of `model.json`.
///
/// Matrices are nested row arrays; vectors (and the scalar timescale) are flat
/// arrays. Floats are written in shortest round-trip form so reloading is
/// bit-exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub config: DetectorConfig,
    #[serde(default)]
    pub modality_mode: ModalityMode,
    pub params: BTreeMap<String, Value>,
}

const MATRICES: [&str; 5] = ["w_txt", "w_img", "se_w1", "se_w2", "w_head"];

impl ModelFile {
    pub fn from_params(params: &DetectorParams, modality_mode: ModalityMode) -> Self {
        let mut map = BTreeMap::new();
        for (name, t) in PARAM_NAMES.iter().zip(params.tensors()) {
            let value = if MATRICES.contains(name) {
                let rows: Vec<Vec<f64>> =
                    t.data().chunks_exact(t.cols()).map(<[f64]>::to_vec).collect();
                serde_json::to_value(rows)
            } else {
                serde_json::to_value(t.data())
            }
            .expect("finite floats serialize");
            map.insert((*name).to_string(), value);
        }
        ModelFile {
            config: params.config.clone(),
            modality_mode,
            params: map,
        }
    }

    pub fn into_params(self) -> Result<DetectorParams> {
        let mut params = DetectorParams::zeros(&self.config)?;
        let shapes = DetectorParams::expected_shapes(&self.config);
        if let Some(extra) = self.params.keys().find(|k| !PARAM_NAMES.contains(&k.as_str())) {
            return Err(Error::Validation(format!("unknown parameter '{extra}'")));
        }
        for ((name, slot), shape) in PARAM_NAMES.iter().zip(params.tensors_mut()).zip(shapes) {
            let value = self
                .params
                .get(*name)
                .ok_or_else(|| Error::Validation(format!("missing parameter '{name}'")))?;
            let data: Vec<f64> = if MATRICES.contains(name) {
                let rows: Vec<Vec<f64>> = serde_json::from_value(value.clone())?;
                if rows.len() != shape[0] || rows.iter().any(|r| r.len() != shape[1]) {
                    return Err(Error::Validation(format!(
                        "parameter '{name}' does not have shape {shape:?}"
                    )));
                }
                rows.concat()
            } else {
                serde_json::from_value(value.clone())?
            };
            *slot = Tensor::new(shape.to_vec(), data).map_err(|_| {
                Error::Validation(format!("parameter '{name}' does not have shape {shape:?}"))
            })?;
        }
        if !params.all_finite() {
            return Err(Error::Validation("non-finite parameter value".into()));
        }
        Ok(params)
    }
}

pub fn save_model(path: &Path, params: &DetectorParams, modality_mode: ModalityMode) -> Result<()> {
    let file = ModelFile::from_params(params, modality_mode);
    let text = serde_json::to_string_pretty(&file)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(DetectorParams, ModalityMode)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let mode = file.modality_mode;
    Ok((file.into_params()?, mode))
}
