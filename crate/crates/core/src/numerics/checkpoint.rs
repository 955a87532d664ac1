use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{NumericsError, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &str = "EXTSUM-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One named parameter as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub requires_grad: bool,
    pub data: Vec<f64>,
}

pub fn store_to_records(store: &ParamStore) -> Vec<ParamRecord> {
    store
        .iter()
        .map(|(_, name, t)| ParamRecord {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            requires_grad: t.requires_grad(),
            data: t.data().to_vec(),
        })
        .collect()
}

pub fn records_to_store(records: Vec<ParamRecord>) -> Result<ParamStore, NumericsError> {
    let mut store = ParamStore::new();
    for r in records {
        let tensor = Tensor::new(r.shape, r.data)
            .map_err(|e| NumericsError::Checkpoint(format!("parameter '{}': {e}", r.name)))?
            .with_requires_grad(r.requires_grad);
        store.add(r.name, tensor)?;
    }
    Ok(store)
}

/// Serialises `payload` as a header line `EXTSUM-CHECKPOINT <version> <sha256 of body>`
/// followed by the JSON body. Identical payloads give identical bytes.
pub fn encode_checkpoint<T: Serialize>(payload: &T) -> Result<Vec<u8>, NumericsError> {
    let body = serde_json::to_vec(payload).map_err(|e| NumericsError::Checkpoint(e.to_string()))?;
    let digest = hex::encode(Sha256::digest(&body));
    let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {digest}\n").into_bytes();
    out.extend_from_slice(&body);
    out.push(b'\n');
    Ok(out)
}

pub fn decode_checkpoint<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, NumericsError> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| NumericsError::Checkpoint("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| NumericsError::Checkpoint("header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let [magic, version, expected] = fields.as_slice() else {
        return Err(NumericsError::Checkpoint(format!("malformed header '{header}'")));
    };
    if *magic != CHECKPOINT_MAGIC {
        return Err(NumericsError::Checkpoint(format!("not a checkpoint (header '{header}')")));
    }
    if *version != CHECKPOINT_VERSION.to_string() {
        return Err(NumericsError::UnsupportedVersion(version.to_string()));
    }
    let mut body = &bytes[newline + 1..];
    if let Some(stripped) = body.strip_suffix(b"\n") {
        body = stripped;
    }
    let actual = hex::encode(Sha256::digest(body));
    if actual != *expected {
        return Err(NumericsError::ChecksumMismatch { expected: expected.to_string(), actual });
    }
    serde_json::from_slice(body).map_err(|e| NumericsError::Checkpoint(e.to_string()))
}
