//! Tensor container: `AMCTTNSR` magic, u32 version, u64 manifest length,
//! JSON manifest, then raw little-endian `f64` payloads in manifest order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Tensor;

const MAGIC: &[u8; 8] = b"AMCTTNSR";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a tensor container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("payload does not match manifest: {0}")]
    Payload(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Element offset into the payload.
    pub offset: usize,
    pub len: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    tensors: Vec<TensorEntry>,
    meta: serde_json::Value,
}

/// Named tensors plus free-form JSON metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub tensors: Vec<(String, Tensor)>,
    pub meta: serde_json::Value,
}

pub fn write_container<W: Write>(mut out: W, container: &Container) -> Result<(), ContainerError> {
    let mut offset = 0;
    let tensors = container
        .tensors
        .iter()
        .map(|(name, t)| {
            let entry = TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype: "f64".into(),
                offset,
                len: t.len(),
            };
            offset += t.len();
            entry
        })
        .collect();
    let manifest = serde_json::to_vec(&Manifest {
        version: CONTAINER_VERSION,
        tensors,
        meta: container.meta.clone(),
    })?;
    out.write_all(MAGIC)?;
    out.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    out.write_all(&(manifest.len() as u64).to_le_bytes())?;
    out.write_all(&manifest)?;
    let mut payload = Vec::with_capacity(offset * 8);
    for (_, t) in &container.tensors {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&payload)?;
    Ok(())
}

pub fn read_container<R: Read>(mut input: R) -> Result<Container, ContainerError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CONTAINER_VERSION {
        return Err(ContainerError::Version(version));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut manifest = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut manifest)?;
    let manifest: Manifest = serde_json::from_slice(&manifest)?;

    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    if payload.len() % 8 != 0 {
        return Err(ContainerError::Payload("length not a multiple of 8".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();

    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        if entry.dtype != "f64" {
            return Err(ContainerError::Payload(format!(
                "unsupported dtype {}",
                entry.dtype
            )));
        }
        let end = entry.offset + entry.len;
        if end > values.len() {
            return Err(ContainerError::Payload(format!(
                "{} runs past the payload",
                entry.name
            )));
        }
        let t = Tensor::new(entry.shape, values[entry.offset..end].to_vec())
            .map_err(|e| ContainerError::Payload(e.to_string()))?;
        tensors.push((entry.name, t));
    }
    Ok(Container {
        tensors,
        meta: manifest.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_exact() {
        let c = Container {
            tensors: vec![
                (
                    "a".into(),
                    Tensor::matrix(2, 2, &[1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap(),
                ),
                ("b".into(), Tensor::matrix(1, 3, &[0.1, 0.2, 0.3]).unwrap()),
            ],
            meta: serde_json::json!({"k": [1, 2]}),
        };
        let mut bytes = Vec::new();
        write_container(&mut bytes, &c).unwrap();
        let back = read_container(bytes.as_slice()).unwrap();
        let mut again = Vec::new();
        write_container(&mut again, &back).unwrap();
        assert_eq!(bytes, again);
        assert_eq!(back.tensors[0].1.data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_bad_magic() {
        let err = read_container(&b"NOTATNSR\x01\x00\x00\x00"[..]).unwrap_err();
        assert!(matches!(err, ContainerError::BadMagic));
    }

    #[test]
    fn rejects_truncated_payload() {
        let c = Container {
            tensors: vec![("a".into(), Tensor::ones(&[2, 2]))],
            meta: serde_json::Value::Null,
        };
        let mut bytes = Vec::new();
        write_container(&mut bytes, &c).unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(
            read_container(bytes.as_slice()),
            Err(ContainerError::Payload(_))
        ));
    }
}
