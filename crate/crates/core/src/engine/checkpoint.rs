//! Checkpoint archive: a safetensors file whose header metadata carries the
//! model spec and training counters as one JSON document.
//!
//! Tensors are named `param.<name>` (every model tensor, including
//! normalization statistics) and `optim.sq_grad.<name>` /
//! `optim.sq_delta.<name>` (ADADELTA accumulators of trainable tensors).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::{Dtype, SafeTensors, View};
use serde::{Deserialize, Serialize};

use super::adadelta::{AdadeltaConfig, AdadeltaState};
use super::train::TrainState;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::models::{build_with_dtype, ModelSpec};

pub const CHECKPOINT_FORMAT: &str = "lesionbench-checkpoint";
pub const CHECKPOINT_VERSION: &str = "1";
const HEADER_KEY: &str = "lesionbench";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: String,
    model_spec: ModelSpec,
    dtype: String,
    seed: u64,
    epoch: usize,
    step: u64,
    running_loss: f64,
    optimizer: AdadeltaConfig,
    optimizer_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run_config: Option<RunConfig>,
}

struct Raw {
    dtype: Dtype,
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

impl View for &Raw {
    fn dtype(&self) -> Dtype {
        self.dtype
    }
    fn shape(&self) -> &[usize] {
        &self.shape
    }
    fn data(&self) -> std::borrow::Cow<'_, [u8]> {
        std::borrow::Cow::Borrowed(&self.bytes)
    }
    fn data_len(&self) -> usize {
        self.bytes.len()
    }
}

fn to_raw(t: &Tensor) -> Result<Raw> {
    let flat = t.flatten_all()?;
    let (dtype, bytes) = match t.dtype() {
        DType::F32 => (Dtype::F32, flat.to_vec1::<f32>()?.iter().flat_map(|v| v.to_le_bytes()).collect()),
        DType::F64 => (Dtype::F64, flat.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect()),
        other => return Err(Error::Checkpoint(format!("unsupported tensor dtype {other:?}"))),
    };
    Ok(Raw {
        dtype,
        shape: t.dims().to_vec(),
        bytes,
    })
}

fn from_view(view: &safetensors::tensor::TensorView<'_>) -> Result<Tensor> {
    let data = view.data();
    let shape = view.shape().to_vec();
    let t = match view.dtype() {
        Dtype::F32 => {
            let v: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            Tensor::from_vec(v, shape, &Device::Cpu)?
        }
        Dtype::F64 => {
            let v: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            Tensor::from_vec(v, shape, &Device::Cpu)?
        }
        other => return Err(Error::Checkpoint(format!("unsupported stored dtype {other:?}"))),
    };
    Ok(t)
}

/// Writes `state` (and the run configuration, when given) to `path`.
pub fn save_checkpoint(state: &TrainState, config: Option<&RunConfig>, path: &Path) -> Result<()> {
    let model = &state.model;
    let mut tensors: Vec<(String, Raw)> = Vec::new();
    for p in model.store().params() {
        tensors.push((format!("param.{}", p.name), to_raw(p.var.as_tensor())?));
    }
    for (i, p) in model.store().trainable().enumerate() {
        tensors.push((format!("optim.sq_grad.{}", p.name), to_raw(&state.optimizer.sq_grad[i])?));
        tensors.push((format!("optim.sq_delta.{}", p.name), to_raw(&state.optimizer.sq_delta[i])?));
    }
    let header = Header {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION.into(),
        model_spec: model.spec().clone(),
        dtype: format!("{:?}", model.dtype()),
        seed: state.seed,
        epoch: state.epoch,
        step: state.step,
        running_loss: state.running_loss,
        optimizer: state.optimizer.config,
        optimizer_steps: state.optimizer.steps,
        run_config: config.cloned(),
    };
    // a single key keeps the header bytes independent of hash order
    let meta = HashMap::from([(HEADER_KEY.to_string(), serde_json::to_string(&header)?)]);
    let refs: Vec<(String, &Raw)> = tensors.iter().map(|(n, r)| (n.clone(), r)).collect();
    let bytes = safetensors::serialize(refs, Some(meta)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
pub struct Checkpoint {
    pub state: TrainState,
    pub config: Option<RunConfig>,
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |e: safetensors::SafeTensorError| Error::Checkpoint(format!("{}: {e}", path.display()));
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(bad)?;
    let raw = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(HEADER_KEY))
        .ok_or_else(|| Error::Checkpoint(format!("{}: not a lesionbench checkpoint", path.display())))?;
    let header: Header = serde_json::from_str(raw)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("{}: not a lesionbench checkpoint", path.display())));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported checkpoint version {}",
            path.display(),
            header.version
        )));
    }
    let spec = header.model_spec.clone();
    let dtype = match header.dtype.as_str() {
        "F32" => DType::F32,
        "F64" => DType::F64,
        other => return Err(Error::Checkpoint(format!("unsupported dtype {other}"))),
    };
    let seed = header.seed;
    let model = build_with_dtype(&spec, seed, dtype)?;
    let st = SafeTensors::deserialize(&bytes).map_err(bad)?;
    let expected = model.store().params().len() + 2 * model.store().trainable().count();
    if st.names().len() != expected {
        return Err(Error::Checkpoint(format!(
            "{}: {} tensors stored, the model spec needs {expected}",
            path.display(),
            st.names().len()
        )));
    }
    let read = |name: &str| -> Result<Tensor> {
        let view = st
            .tensor(name)
            .map_err(|_| Error::Checkpoint(format!("{}: missing tensor `{name}`", path.display())))?;
        from_view(&view)
    };
    for p in model.store().params() {
        model.store().set(&p.name, &read(&format!("param.{}", p.name))?)?;
    }
    let mut sq_grad = Vec::new();
    let mut sq_delta = Vec::new();
    for p in model.store().trainable() {
        for (prefix, out) in [("sq_grad", &mut sq_grad), ("sq_delta", &mut sq_delta)] {
            let t = read(&format!("optim.{prefix}.{}", p.name))?;
            if t.dims() != p.var.dims() {
                return Err(Error::Checkpoint(format!("accumulator for `{}` has the wrong shape", p.name)));
            }
            out.push(t.to_dtype(dtype)?);
        }
    }
    let optimizer = AdadeltaState {
        config: header.optimizer,
        sq_grad,
        sq_delta,
        steps: header.optimizer_steps,
    };
    Ok(Checkpoint {
        state: TrainState {
            model,
            optimizer,
            epoch: header.epoch,
            step: header.step,
            running_loss: header.running_loss,
            seed,
        },
        config: header.run_config,
    })
}

/// Like [`load_checkpoint`] but fails unless the stored spec equals `spec`.
pub fn load_checkpoint_for(path: &Path, spec: &ModelSpec) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if ck.state.model.spec() != spec {
        return Err(Error::Checkpoint(format!(
            "{}: stored model spec {} does not match requested {}",
            path.display(),
            serde_json::to_string(ck.state.model.spec())?,
            serde_json::to_string(spec)?
        )));
    }
    Ok(ck)
}
