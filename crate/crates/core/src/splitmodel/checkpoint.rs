//! Versioned checkpoint container.
//!
//! ```text
//! 0..4     magic "SSPL"
//! 4..6     container version, u16 big-endian
//! 6        payload kind
//! 7..15    body length n, u64 big-endian
//! 15..15+n body, UTF-8 JSON
//! +32      SHA-256 of the body
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 4] = b"SSPL";
pub const CONTAINER_VERSION: u16 = 1;
const PREFIX_LEN: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Teacher = 1,
    SplitModel = 2,
    Policy = 3,
}

impl ContainerKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Self::Teacher),
            2 => Some(Self::SplitModel),
            3 => Some(Self::Policy),
            _ => None,
        }
    }
}

pub fn encode_container<T: Serialize>(kind: ContainerKind, value: &T) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(value)?;
    let mut out = Vec::with_capacity(PREFIX_LEN + body.len() + 32);
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_be_bytes());
    out.push(kind as u8);
    out.extend_from_slice(&(body.len() as u64).to_be_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(&Sha256::digest(&body));
    Ok(out)
}

pub fn decode_container<T: DeserializeOwned>(kind: ContainerKind, bytes: &[u8]) -> Result<T> {
    let bad = |m: String| Error::Config(format!("checkpoint: {m}"));
    if bytes.len() < PREFIX_LEN || &bytes[..4] != CONTAINER_MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = u16::from_be_bytes([bytes[4], bytes[5]]);
    if version != CONTAINER_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let found = ContainerKind::from_byte(bytes[6]).ok_or_else(|| bad(format!("unknown kind {}", bytes[6])))?;
    if found != kind {
        return Err(bad(format!("holds {found:?}, expected {kind:?}")));
    }
    let len = u64::from_be_bytes(bytes[7..15].try_into().expect("8 bytes")) as usize;
    if bytes.len() != PREFIX_LEN + len + 32 {
        return Err(bad(format!("length field {len} does not match file size {}", bytes.len())));
    }
    let body = &bytes[PREFIX_LEN..PREFIX_LEN + len];
    if Sha256::digest(body).as_slice() != &bytes[PREFIX_LEN + len..] {
        return Err(bad("checksum mismatch".into()));
    }
    Ok(serde_json::from_slice(body)?)
}

pub fn write_container<T: Serialize>(path: &Path, kind: ContainerKind, value: &T) -> Result<()> {
    fs::write(path, encode_container(kind, value)?)?;
    Ok(())
}

pub fn read_container<T: DeserializeOwned>(path: &Path, kind: ContainerKind) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
        _ => Error::Io(e),
    })?;
    decode_container(kind, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{init_params, LayerSpec, NetParams};

    #[test]
    fn round_trip_is_exact() {
        let p = init_params(&[LayerSpec::dense(5, 3), LayerSpec::residual(3)], 4).unwrap();
        let bytes = encode_container(ContainerKind::Teacher, &p).unwrap();
        assert_eq!(&bytes[..4], b"SSPL");
        let back: NetParams = decode_container(ContainerKind::Teacher, &bytes).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_container(ContainerKind::Policy, &vec![1.5f64, -2.0]).unwrap();
        assert!(decode_container::<Vec<f64>>(ContainerKind::Teacher, &bytes).is_err());
        let mut flipped = bytes.clone();
        flipped[PREFIX_LEN + 1] ^= 1;
        assert!(decode_container::<Vec<f64>>(ContainerKind::Policy, &flipped).is_err());
        assert!(decode_container::<Vec<f64>>(ContainerKind::Policy, &bytes[..bytes.len() - 1]).is_err());
        let mut version = bytes.clone();
        version[5] = 9;
        assert!(decode_container::<Vec<f64>>(ContainerKind::Policy, &version).is_err());
    }

    #[test]
    fn missing_file_is_missing_artifact() {
        let r = read_container::<Vec<f64>>(Path::new("/nonexistent/x.ckpt"), ContainerKind::Policy);
        assert!(matches!(r, Err(Error::MissingArtifact(_))));
    }
}
