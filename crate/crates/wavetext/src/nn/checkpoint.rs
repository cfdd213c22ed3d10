//! Checkpoint serialization.
//!
//! File layout: an 8-byte little-endian header length, a UTF-8 JSON header,
//! then the contiguous little-endian IEEE-754 64-bit payload. The header's
//! `params` object maps each parameter name to `{shape, offset, count}` in
//! store order; `offset` is a byte offset into the payload. Loading a file
//! and saving it again reproduces it byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::nn::ParameterStore;

pub fn checkpoint_bytes(
    params: &ParameterStore,
    meta: &BTreeMap<String, String>,
) -> Result<Vec<u8>> {
    let mut param_descs = Map::new();
    let mut offset = 0u64;
    for (name, arr) in params.iter() {
        let count = arr.len() as u64;
        param_descs.insert(
            name.to_string(),
            json!({ "shape": arr.shape(), "offset": offset, "count": count }),
        );
        offset += count * 8;
    }
    let header = json!({ "meta": meta, "params": param_descs });
    let header_bytes = serde_json::to_vec(&header)?;

    let mut out = Vec::with_capacity(8 + header_bytes.len() + offset as usize);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, arr) in params.iter() {
        for &v in arr.as_slice().expect("parameters are stored contiguously") {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(
    params: &ParameterStore,
    meta: &BTreeMap<String, String>,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(params, meta)?)?;
    Ok(())
}

pub fn load_checkpoint_bytes(bytes: &[u8]) -> Result<(ParameterStore, BTreeMap<String, String>)> {
    if bytes.len() < 8 {
        return Err(Error::Integrity("file shorter than the 8-byte header length".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(Error::Integrity(format!(
            "header claims {header_len} bytes but only {} remain",
            bytes.len() - 8
        )));
    }
    let header: Value = serde_json::from_slice(&bytes[8..8 + header_len])
        .map_err(|e| Error::Integrity(format!("malformed JSON header: {e}")))?;
    let meta: BTreeMap<String, String> = header
        .get("meta")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| Error::Integrity(format!("malformed meta block: {e}")))?
        .unwrap_or_default();
    let param_descs = header
        .get("params")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Integrity("header lacks a params object".into()))?;

    let payload = &bytes[8 + header_len..];
    let mut store = ParameterStore::new();
    let mut expected_offset = 0u64;
    for (name, desc) in param_descs {
        let shape: Vec<usize> = desc
            .get("shape")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| Error::Integrity(format!("bad shape for {name}: {e}")))?
            .ok_or_else(|| Error::Integrity(format!("missing shape for {name}")))?;
        let offset = desc.get("offset").and_then(Value::as_u64).ok_or_else(|| {
            Error::Integrity(format!("missing offset for {name}"))
        })?;
        let count = desc.get("count").and_then(Value::as_u64).ok_or_else(|| {
            Error::Integrity(format!("missing count for {name}"))
        })?;
        if offset != expected_offset {
            return Err(Error::Integrity(format!(
                "{name}: offset {offset} breaks header-order contiguity (expected {expected_offset})"
            )));
        }
        if shape.iter().product::<usize>() as u64 != count {
            return Err(Error::Integrity(format!(
                "{name}: shape {shape:?} disagrees with element count {count}"
            )));
        }
        let end = offset + count * 8;
        if end as usize > payload.len() {
            return Err(Error::Integrity(format!(
                "{name}: payload truncated (needs {end} bytes, have {})",
                payload.len()
            )));
        }
        let values: Vec<f64> = payload[offset as usize..end as usize]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.insert(
            name.clone(),
            ArrayD::from_shape_vec(IxDyn(&shape), values).unwrap(),
        )?;
        expected_offset = end;
    }
    if payload.len() as u64 != expected_offset {
        return Err(Error::Integrity(format!(
            "payload has {} bytes but the header accounts for {expected_offset}",
            payload.len()
        )));
    }
    Ok((store, meta))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParameterStore, BTreeMap<String, String>)> {
    let bytes = std::fs::read(path)?;
    load_checkpoint_bytes(&bytes)
}
