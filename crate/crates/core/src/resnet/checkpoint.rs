//! Model checkpoints.
//!
//! Layout: one JSON header line, then little-endian `f32` blobs. Parameters
//! come first in model order (stem, then each hidden layer's convolution,
//! normalization scale and shift, projection shortcut, then head weight and
//! bias), followed by the running mean and variance of every normalization
//! layer in the same order. The header lists every blob's name and shape.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ArchSpec, Model};
use crate::error::{Error, Result};
use crate::nn::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: ArchSpec,
    pub seed: u64,
    pub epoch: usize,
    pub dtype: String,
    pub params: Vec<BlobInfo>,
    pub buffers: Vec<BlobInfo>,
}

fn header_of<T: Scalar>(model: &Model<T>, epoch: usize) -> CheckpointHeader {
    let params = model
        .params
        .tensors
        .iter()
        .map(|p| BlobInfo {
            name: p.name.clone(),
            shape: p.shape.clone(),
        })
        .collect();
    let buffers = model
        .running
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            let c = r.mean.len();
            [
                BlobInfo {
                    name: format!("norm{i}.running_mean"),
                    shape: vec![c],
                },
                BlobInfo {
                    name: format!("norm{i}.running_var"),
                    shape: vec![c],
                },
            ]
        })
        .collect();
    CheckpointHeader {
        arch: model.arch,
        seed: model.seed,
        epoch,
        dtype: "f32".into(),
        params,
        buffers,
    }
}

pub fn write_checkpoint<T: Scalar, W: Write>(mut w: W, model: &Model<T>, epoch: usize) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, &header_of(model, epoch))?;
    w.write_all(b"\n")?;
    let mut put = |vals: &[T]| -> std::io::Result<()> {
        let bytes: Vec<u8> = vals.iter().flat_map(|v| (v.as_f64() as f32).to_le_bytes()).collect();
        w.write_all(&bytes)
    };
    for p in &model.params.tensors {
        put(&p.data)?;
    }
    for r in &model.running {
        put(&r.mean)?;
        put(&r.var)?;
    }
    w.flush()
}

/// Rebuild a model from a checkpoint stream; returns it with the stored epoch.
pub fn read_checkpoint<T: Scalar, R: BufRead>(mut r: R) -> Result<(Model<T>, usize)> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)
        .map_err(|e| Error::Data(format!("reading checkpoint header: {e}")))?;
    let header: CheckpointHeader = serde_json::from_slice(&line).map_err(|e| Error::Parse {
        location: "checkpoint header".into(),
        message: e.to_string(),
    })?;
    if header.dtype != "f32" {
        return Err(Error::Data(format!("unsupported checkpoint dtype {:?}", header.dtype)));
    }
    let mut model = Model::<T>::build(header.arch, header.seed)?;
    let expected = header_of(&model, header.epoch);
    if expected.params != header.params || expected.buffers != header.buffers {
        return Err(Error::Data("checkpoint layout does not match its architecture".into()));
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body)
        .map_err(|e| Error::Data(format!("reading checkpoint body: {e}")))?;
    let total: usize = model.param_count() + model.running.iter().map(|s| 2 * s.mean.len()).sum::<usize>();
    if body.len() != total * 4 {
        return Err(Error::Data(format!(
            "checkpoint body holds {} bytes, expected {}",
            body.len(),
            total * 4
        )));
    }
    let mut vals = body
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64));
    let mut fill = |dst: &mut [T]| {
        for d in dst.iter_mut() {
            *d = vals.next().expect("length checked");
        }
    };
    for p in &mut model.params.tensors {
        fill(&mut p.data);
    }
    for s in &mut model.running {
        fill(&mut s.mean);
        fill(&mut s.var);
    }
    Ok((model, header.epoch))
}

/// Conventional location of the checkpoint for `(run_id, epoch)`.
pub fn checkpoint_path(dir: &Path, run_id: &str, epoch: usize) -> PathBuf {
    dir.join(format!("{run_id}-e{epoch:03}.ckpt"))
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &Model<T>, epoch: usize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(file), model, epoch).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Model<T>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
