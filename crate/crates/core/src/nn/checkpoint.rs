//! Versioned JSON model checkpoints.
//!
//! Layout (version 1):
//!
//! ```json
//! {
//!   "version": 1,
//!   "trunk_dims": [155, 256, 128, 128],
//!   "heads": {"0": 3, "1": 3, "2": 4},
//!   "parameters": {
//!     "trunk": [{"weights": [...], "bias": [...]}, ...],
//!     "heads": {"0": {"weights": [...], "bias": [...]}}
//!   },
//!   "momentum": null,
//!   "rng_seed": 0,
//!   "expansions": 4
//! }
//! ```
//!
//! Weight arrays are flat, row-major (out x in), in trunk order followed by
//! heads in ascending task id — the same order as the model's flat parameter
//! indexing. Parameters are stored as decimal `f64`, which is exact for both
//! supported scalar types. Unknown trailing fields are ignored on load, so
//! the format is forward-compatible; an optional `momentum` block is
//! accepted and skipped (optimizer state is rebuilt at each mission start).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{DenseLayer, MultiHeadMlp, TaskId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerParams {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamBlock {
    trunk: Vec<LayerParams>,
    heads: BTreeMap<String, LayerParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    trunk_dims: Vec<usize>,
    heads: BTreeMap<String, usize>,
    parameters: ParamBlock,
    #[serde(default)]
    momentum: Option<serde_json::Value>,
    #[serde(default)]
    rng_seed: u64,
    #[serde(default)]
    expansions: u64,
}

fn layer_to_params<F: Scalar>(layer: &DenseLayer<F>) -> LayerParams {
    LayerParams {
        weights: layer.weights.iter().map(|v| v.as_f64()).collect(),
        bias: layer.bias.iter().map(|v| v.as_f64()).collect(),
    }
}

fn layer_from_params<F: Scalar>(params: &LayerParams, out: usize, inp: usize) -> Result<DenseLayer<F>> {
    if params.weights.len() != out * inp || params.bias.len() != out {
        return Err(Error::format(format!(
            "layer shape mismatch: expected {out}x{inp} weights and {out} biases, got {} and {}",
            params.weights.len(),
            params.bias.len()
        )));
    }
    let weights = Array2::from_shape_vec(
        (out, inp),
        params.weights.iter().map(|&v| F::cast(v)).collect(),
    )
    .expect("shape checked above");
    let bias = Array1::from_vec(params.bias.iter().map(|&v| F::cast(v)).collect());
    Ok(DenseLayer { weights, bias })
}

/// Writes a model checkpoint to `path`.
pub fn save_checkpoint<F: Scalar>(model: &MultiHeadMlp<F>, path: impl AsRef<Path>) -> Result<()> {
    let file = CheckpointFile {
        version: VERSION,
        trunk_dims: model.trunk_dims(),
        heads: model
            .heads()
            .iter()
            .map(|(t, l)| (t.to_string(), l.weights.nrows()))
            .collect(),
        parameters: ParamBlock {
            trunk: model.trunk_layers().iter().map(layer_to_params).collect(),
            heads: model
                .heads()
                .iter()
                .map(|(t, l)| (t.to_string(), layer_to_params(l)))
                .collect(),
        },
        momentum: None,
        rng_seed: model.rng_seed(),
        expansions: model.expansions(),
    };
    let json = serde_json::to_string(&file).map_err(|e| Error::format(e.to_string()))?;
    fs::write(path.as_ref(), json)?;
    Ok(())
}

/// Reads a model checkpoint; forward outputs of the loaded model are
/// bit-identical to the saved one.
pub fn load_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<MultiHeadMlp<F>> {
    let bytes = fs::read(path.as_ref())?;
    let file: CheckpointFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::format(format!("unreadable checkpoint: {e}")))?;
    if file.version != VERSION {
        return Err(Error::format(format!(
            "unsupported checkpoint version {} (expected {VERSION})",
            file.version
        )));
    }
    if file.trunk_dims.len() < 2 {
        return Err(Error::format("checkpoint trunk has fewer than two widths"));
    }
    if file.parameters.trunk.len() != file.trunk_dims.len() - 1 {
        return Err(Error::format("trunk parameter count does not match trunk_dims"));
    }

    let mut trunk = Vec::with_capacity(file.parameters.trunk.len());
    for (i, params) in file.parameters.trunk.iter().enumerate() {
        trunk.push(layer_from_params(
            params,
            file.trunk_dims[i + 1],
            file.trunk_dims[i],
        )?);
    }

    let trunk_out = *file.trunk_dims.last().expect("checked above");
    let mut heads = BTreeMap::new();
    for (key, &classes) in &file.heads {
        let task: TaskId = key
            .parse()
            .map_err(|_| Error::format(format!("non-integer head id '{key}'")))?;
        let params = file
            .parameters
            .heads
            .get(key)
            .ok_or_else(|| Error::format(format!("missing parameters for head {key}")))?;
        heads.insert(task, layer_from_params(params, classes, trunk_out)?);
    }

    Ok(MultiHeadMlp::from_parts(trunk, heads, file.rng_seed, file.expansions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use tempfile::tempdir;

    fn model() -> MultiHeadMlp<f64> {
        let mut m = MultiHeadMlp::new(&[6, 8, 5], 17).unwrap();
        m.add_head(0, 3).unwrap();
        m.add_head(2, 4).unwrap();
        m
    }

    #[test]
    fn round_trip_reproduces_forward_outputs_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        let loaded: MultiHeadMlp<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, m);

        let mut rng = crate::rng::stream(3, 3);
        let mut batch = Array2::<f64>::zeros((4, 6));
        for v in batch.iter_mut() {
            *v = f64::standard_normal(&mut rng);
        }
        for task in [0, 2] {
            let a = m.forward(batch.view(), task).unwrap();
            let b = loaded.forward(batch.view(), task).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&model(), &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replacen("\"version\":1", "\"version\":9", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_fields_and_momentum_are_ignored() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        value["momentum"] = serde_json::json!({"trunk": [[0.0]]});
        value["future_field"] = serde_json::json!("ignored");
        std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        let loaded: MultiHeadMlp<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, m);
    }

    #[test]
    fn reference_architecture_parameter_count_survives_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut m = MultiHeadMlp::<f64>::new(&[155, 256, 128, 128], 0).unwrap();
        m.add_head(0, 3).unwrap();
        m.add_head(1, 3).unwrap();
        m.add_head(2, 4).unwrap();
        save_checkpoint(&m, &path).unwrap();
        let loaded: MultiHeadMlp<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.num_parameters(), 90_634);
    }

    #[test]
    fn noise_in_random_positions_still_loads_or_errors_cleanly() {
        // Corruption must never panic: either a clean load of equal bytes or
        // a Format error.
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let mut rng = crate::rng::stream(5, 0);
        for _ in 0..20 {
            let mut corrupted = bytes.clone();
            let pos = rng.random_range(0..corrupted.len());
            corrupted[pos] = b'#';
            std::fs::write(&path, &corrupted).unwrap();
            match load_checkpoint::<f64>(&path) {
                Ok(_) | Err(Error::Format(_)) => {}
                other => panic!("unexpected result {other:?}"),
            }
        }
    }
}
