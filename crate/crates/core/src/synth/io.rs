//! Patch container: one JSON header line, then row-major little-endian `f32`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Patch, PatchSpec, SignalType};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct PatchHeader {
    n_time: usize,
    n_chan: usize,
    dtype: String,
    label: Option<SignalType>,
}

pub fn write_patch<W: Write>(mut w: W, patch: &Patch) -> std::io::Result<()> {
    let header = PatchHeader {
        n_time: patch.spec.n_time,
        n_chan: patch.spec.n_chan,
        dtype: "f32".into(),
        label: patch.label,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut body = Vec::with_capacity(patch.values.len() * 4);
    for v in &patch.values {
        body.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&body)?;
    w.flush()
}

pub fn read_patch<R: BufRead>(mut r: R) -> Result<Patch> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)
        .map_err(|e| Error::Data(format!("reading patch header: {e}")))?;
    let header: PatchHeader = serde_json::from_slice(&line).map_err(|e| Error::Parse {
        location: "patch header".into(),
        message: e.to_string(),
    })?;
    if header.dtype != "f32" {
        return Err(Error::Data(format!("unsupported dtype {:?}", header.dtype)));
    }
    let spec = PatchSpec {
        n_time: header.n_time,
        n_chan: header.n_chan,
        ..PatchSpec::default()
    };
    spec.validate()?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)
        .map_err(|e| Error::Data(format!("reading patch body: {e}")))?;
    if body.len() != spec.len() * 4 {
        return Err(Error::Data(format!(
            "patch body holds {} bytes, header implies {}",
            body.len(),
            spec.len() * 4
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let patch = Patch::from_values(spec, values, header.label)?;
    if !patch.is_finite() {
        return Err(Error::Data("patch body contains non-finite values".into()));
    }
    Ok(patch)
}
