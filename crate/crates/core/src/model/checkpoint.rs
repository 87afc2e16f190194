//! Self-describing checkpoint container: a magic line, a JSON header with
//! the config, step counter and tensor directory, then raw little-endian
//! f64 data. Round trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{zero_params_like, ModelConfig, ModelState, SgdMomentum};

pub const CHECKPOINT_VERSION: &str = "gp-ckpt-1";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ModelState,
    pub optimizer: Option<SgdMomentum>,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: String,
    config: ModelConfig,
    step: u64,
    momentum: Option<f64>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

pub fn save_checkpoint(
    path: &Path,
    model: &ModelState,
    optimizer: Option<&SgdMomentum>,
    step: u64,
) -> Result<()> {
    let io = |e| Error::io(path.display().to_string(), e);

    let mut tensors: Vec<(String, &[f64])> = model.params.tensors();
    if let Some(opt) = optimizer {
        for (name, values) in opt.buffers.tensors() {
            tensors.push((format!("momentum.{name}"), values));
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION.to_string(),
        config: model.config.clone(),
        step,
        momentum: optimizer.map(|o| o.momentum),
        tensors: tensors
            .iter()
            .map(|(name, values)| TensorEntry {
                name: name.clone(),
                len: values.len(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Internal(format!("checkpoint header encode: {e}")))?;

    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    file.write_all(CHECKPOINT_VERSION.as_bytes()).map_err(io)?;
    file.write_all(b"\n").map_err(io)?;
    file.write_all(&(header_json.len() as u64).to_le_bytes())
        .map_err(io)?;
    file.write_all(&header_json).map_err(io)?;
    for (_, values) in &tensors {
        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in *values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        file.write_all(&bytes).map_err(io)?;
    }
    file.flush().map_err(io)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let io = |e| Error::io(path.display().to_string(), e);
    let mut file = std::io::BufReader::new(std::fs::File::open(path).map_err(io)?);

    let mut magic = vec![0u8; CHECKPOINT_VERSION.len() + 1];
    file.read_exact(&mut magic).map_err(io)?;
    if magic != [CHECKPOINT_VERSION.as_bytes(), b"\n"].concat() {
        return Err(Error::Input(format!(
            "{} is not a {CHECKPOINT_VERSION} checkpoint",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes).map_err(io)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json).map_err(io)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| Error::Input(format!("checkpoint header decode: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Input(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    header.config.validate()?;

    let mut model = ModelState {
        config: header.config.clone(),
        params: zero_params_like(&header.config),
    };
    let mut optimizer = header.momentum.map(|momentum| SgdMomentum {
        momentum,
        buffers: zero_params_like(&header.config),
    });

    let mut read_tensor = |expected: &TensorEntry, dst: &mut [f64]| -> Result<()> {
        if dst.len() != expected.len {
            return Err(Error::Input(format!(
                "checkpoint tensor {} has {} values, expected {}",
                expected.name,
                expected.len,
                dst.len()
            )));
        }
        let mut bytes = vec![0u8; dst.len() * 8];
        file.read_exact(&mut bytes).map_err(io)?;
        for (i, v) in dst.iter_mut().enumerate() {
            *v = f64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap());
        }
        Ok(())
    };

    let mut entries = header.tensors.iter();
    for (name, dst) in model.params.tensors_mut() {
        let entry = entries
            .next()
            .ok_or_else(|| Error::Input("checkpoint tensor directory too short".into()))?;
        if entry.name != name {
            return Err(Error::Input(format!(
                "checkpoint tensor order mismatch: {} vs {name}",
                entry.name
            )));
        }
        read_tensor(entry, dst)?;
    }
    if let Some(opt) = optimizer.as_mut() {
        for (name, dst) in opt.buffers.tensors_mut() {
            let entry = entries
                .next()
                .ok_or_else(|| Error::Input("checkpoint tensor directory too short".into()))?;
            if entry.name != format!("momentum.{name}") {
                return Err(Error::Input(format!(
                    "checkpoint momentum tensor mismatch: {}",
                    entry.name
                )));
            }
            read_tensor(entry, dst)?;
        }
    }
    if entries.next().is_some() {
        return Err(Error::Input("checkpoint has unexpected extra tensors".into()));
    }

    Ok(Checkpoint {
        model,
        optimizer,
        step: header.step,
    })
}
