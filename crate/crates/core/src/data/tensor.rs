//! Binary container with a JSON header and a little-endian f32 payload.
//!
//! Layout: 4-byte magic `SCX1`, u32 little-endian header length, UTF-8 JSON
//! header, then `product(dims)` f32 values in little-endian byte order.
//! The same container carries tensors and trained models; the header `kind`
//! field says which.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SCX1";
const MAX_HEADER_BYTES: u32 = 1 << 20;

/// Header of a plain tensor file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorHeader {
    pub kind: String,
    pub dims: Vec<usize>,
    pub dtype: String,
    pub endianness: String,
    /// What the tensor holds, e.g. "image" or "template".
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl TensorHeader {
    pub fn new(dims: Vec<usize>, tag: impl Into<String>) -> Self {
        TensorHeader {
            kind: "tensor".to_owned(),
            dims,
            dtype: "f32".to_owned(),
            endianness: "little".to_owned(),
            tag: tag.into(),
            seed: None,
            config_hash: None,
        }
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Write any serializable header plus an f32 payload.
pub fn write_container<H: Serialize>(path: &Path, header: &H, payload: &[f32]) -> Result<()> {
    let json = serde_json::to_vec(header)
        .map_err(|e| Error::Format {
            path: path.to_owned(),
            offset: 0,
            message: format!("header encode: {e}"),
        })?;
    if json.len() as u64 > MAX_HEADER_BYTES as u64 {
        return Err(Error::format(path, 0, "header too large"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    out.write_all(&MAGIC).map_err(io_err)?;
    out.write_all(&(json.len() as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&json).map_err(io_err)?;
    for v in payload {
        out.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Read a container, validating magic and header before touching the payload.
/// `expected_elements(header)` must return the payload length implied by the
/// header; a mismatch against the actual file size is a format error.
pub fn read_container<H, F>(path: &Path, expected_elements: F) -> Result<(H, Vec<f32>)>
where
    H: DeserializeOwned,
    F: FnOnce(&H) -> Result<usize>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);
    let io_err = |e| Error::io(path, e);

    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(io_err)?;
    if magic != MAGIC {
        return Err(Error::format(path, 0, "bad magic"));
    }
    let mut len_bytes = [0u8; 4];
    input.read_exact(&mut len_bytes).map_err(io_err)?;
    let header_len = u32::from_le_bytes(len_bytes);
    if header_len == 0 || header_len > MAX_HEADER_BYTES {
        return Err(Error::format(path, 4, "implausible header length"));
    }
    let mut json = vec![0u8; header_len as usize];
    input.read_exact(&mut json).map_err(io_err)?;
    let header: H = serde_json::from_slice(&json)
        .map_err(|e| Error::format(path, 8, format!("header decode: {e}")))?;

    let count = expected_elements(&header)?;
    let payload_offset = 8 + header_len as u64;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    if bytes.len() != count * 4 {
        return Err(Error::format(
            path,
            payload_offset,
            format!("payload is {} bytes, expected {}", bytes.len(), count * 4),
        ));
    }
    let payload = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, payload))
}

/// Save a plain tensor.
pub fn save_tensor(path: &Path, header: &TensorHeader, data: &[f32]) -> Result<()> {
    if header.element_count() != data.len() {
        return Err(Error::Shape {
            expected: header.element_count(),
            got: data.len(),
        });
    }
    write_container(path, header, data)
}

/// Load a plain tensor, validating kind, dtype and endianness.
pub fn load_tensor(path: &Path) -> Result<(TensorHeader, Vec<f32>)> {
    read_container(path, |h: &TensorHeader| {
        if h.kind != "tensor" {
            return Err(Error::format(path, 8, format!("kind {:?} is not a tensor", h.kind)));
        }
        if h.dtype != "f32" {
            return Err(Error::format(path, 8, format!("unsupported dtype {:?}", h.dtype)));
        }
        if h.endianness != "little" {
            return Err(Error::format(path, 8, "unsupported endianness"));
        }
        Ok(h.element_count())
    })
}
