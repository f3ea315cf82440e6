//! Tensor file format: a little-endian `f64` payload plus a JSON sidecar.
//!
//! The payload at `p` holds the row-major values; the sidecar at `p` with
//! `.json` appended holds `{"shape": [...], "order": "row-major"}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    shape: Vec<usize>,
    order: String,
}

fn sidecar_path(payload: &Path) -> PathBuf {
    let mut os = payload.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

pub fn save_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let mut bytes = Vec::with_capacity(tensor.numel() * 8);
    for v in tensor.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let sidecar = Sidecar {
        shape: tensor.shape().to_vec(),
        order: "row-major".to_string(),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if sidecar.order != "row-major" {
        return Err(CoreError::InvalidArgument(format!(
            "unsupported element order {:?}",
            sidecar.order
        )));
    }
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(CoreError::InvalidArgument(format!(
            "payload length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::from_vec(&sidecar.shape, data)
}
