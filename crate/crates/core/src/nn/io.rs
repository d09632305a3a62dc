//! Network file: one UTF-8 JSON header line
//! `{"format":"wildfire-duration-network","version":1,"spec":{..},"n_params":N}`
//! followed by `N` little-endian `f64` parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Network, NetworkSpec};
use crate::fsutil::{read, write_atomic};
use crate::{Error, Result};

pub const NETWORK_FORMAT: &str = "wildfire-duration-network";
const VERSION: u32 = 1;
const MAX_HEADER_BYTES: usize = 1 << 20;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    spec: NetworkSpec,
    n_params: usize,
}

fn header_error(path: &Path, field: &str, message: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        field: field.to_string(),
        message: message.into(),
    }
}

pub fn encode_network(net: &Network) -> Vec<u8> {
    let header = Header {
        format: NETWORK_FORMAT.to_string(),
        version: VERSION,
        spec: net.spec().clone(),
        n_params: net.n_params(),
    };
    let mut bytes = serde_json::to_vec(&header).expect("network header serialises");
    bytes.push(b'\n');
    bytes.reserve(net.n_params() * 8);
    for p in net.params() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    bytes
}

/// Decodes [`encode_network`] output; `path` only labels errors.
pub fn decode_network(bytes: &[u8], path: &Path) -> Result<Network> {
    let newline = bytes
        .iter()
        .take(MAX_HEADER_BYTES)
        .position(|&b| b == b'\n')
        .ok_or_else(|| header_error(path, "<header>", "no header line terminator"))?;
    let header: Header =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| header_error(path, "<header>", e.to_string()))?;
    if header.format != NETWORK_FORMAT {
        return Err(header_error(path, "format", format!("expected {NETWORK_FORMAT:?}, got {:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(header_error(path, "version", format!("unsupported version {}", header.version)));
    }
    let payload = &bytes[newline + 1..];
    if payload.len() % 8 != 0 || payload.len() / 8 != header.n_params {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            expected: header.n_params,
            found: payload.len() / 8,
        });
    }
    let params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Network::from_parts(header.spec, params).map_err(|e| match e {
        Error::InvalidArgument(msg) => header_error(path, "spec", msg),
        other => other,
    })
}

pub fn save_network(path: &Path, net: &Network) -> Result<()> {
    write_atomic(path, &encode_network(net))
}

pub fn load_network(path: &Path) -> Result<Network> {
    decode_network(&read(path)?, path)
}
