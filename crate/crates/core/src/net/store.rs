//! Weight file persistence.
//!
//! Layout: 4 magic bytes `XSRD`, u32 LE version, u32 LE config length,
//! JSON-serialized [`NetConfig`], then every parameter as little-endian
//! f32 in declaration order (per conv layer: kernel, then bias). The
//! round trip is bit-exact.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array5};

use super::{ConvWeights, Layer, NetConfig, NetWeights};
use crate::error::io_err;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"XSRD";
const VERSION: u32 = 1;

pub fn save_weights(weights: &NetWeights, path: &Path) -> Result<()> {
    let config_json = serde_json::to_vec(&weights.config)
        .map_err(|e| Error::Internal(format!("config serialization failed: {e}")))?;
    let float_count = weights.parameter_count();
    let mut buf = Vec::with_capacity(12 + config_json.len() + 4 * float_count);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config_json);
    for conv in &weights.convs {
        for v in conv.kernel.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in conv.bias.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

pub fn load_weights(path: &Path) -> Result<NetWeights> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let malformed = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: msg.to_string(),
    };
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(malformed("not a weight file (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(malformed(&format!("unsupported weight file version {version}")));
    }
    let config_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let config_end = 12 + config_len;
    if bytes.len() < config_end {
        return Err(malformed("truncated config block"));
    }
    let config: NetConfig = serde_json::from_slice(&bytes[12..config_end])
        .map_err(|e| malformed(&format!("bad embedded config: {e}")))?;
    let dims = config.stage_dims()?;

    let mut offset = config_end;
    let mut take = |n: usize| -> Result<Vec<f32>> {
        let end = offset + 4 * n;
        if bytes.len() < end {
            return Err(malformed("truncated weight data"));
        }
        let out = bytes[offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset = end;
        Ok(out)
    };

    let mut convs = Vec::new();
    let mut stage = 0usize;
    for layer in &config.layers {
        let (in_c, _) = dims[stage];
        stage += 1;
        if let Layer::Conv3d { kernel, channels } = *layer {
            let k_vals = take(channels * in_c * kernel * kernel * kernel)?;
            let b_vals = take(channels)?;
            let kernel_arr =
                Array5::from_shape_vec((channels, in_c, kernel, kernel, kernel), k_vals)
                    .map_err(|e| Error::Internal(format!("kernel shape: {e}")))?;
            convs.push(ConvWeights {
                kernel: kernel_arr,
                bias: Array1::from_vec(b_vals),
            });
        }
    }
    if offset != bytes.len() {
        return Err(malformed("trailing bytes after weight data"));
    }
    let weights = NetWeights { config, convs };
    if !weights
        .convs
        .iter()
        .all(|c| c.kernel.iter().chain(c.bias.iter()).all(|v| v.is_finite()))
    {
        return Err(malformed("non-finite weight values"));
    }
    Ok(weights)
}

/// Load and require the embedded config to equal `expected`.
pub fn load_weights_expecting(path: &Path, expected: &NetConfig) -> Result<NetWeights> {
    let weights = load_weights(path)?;
    if &weights.config != expected {
        return Err(Error::InvalidInput(format!(
            "weight file {} was trained with a different network config",
            path.display()
        )));
    }
    Ok(weights)
}
