//! Model file format.
//!
//! ```text
//! magic    4 bytes   "HARM"
//! version  u16 LE
//! spec_len u32 LE    length of the JSON block in bytes
//! spec     JSON      NetworkSpec
//! params   f64 LE    parameter store, declaration order
//! ```
//!
//! Optimizer state is not stored; a loaded model starts with zero moments.

use std::io::{Read, Write};

use super::{NetError, NetworkSpec, NetworkState};

pub const ARTIFACT_MAGIC: &[u8; 4] = b"HARM";
pub const ARTIFACT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    Version(u16),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("parameter block holds {found} bytes, expected {expected}")]
    ParamLength { expected: usize, found: usize },
    #[error(transparent)]
    Net(#[from] NetError),
}

pub fn write_artifact<W: Write>(state: &NetworkState, mut w: W) -> Result<(), ArtifactError> {
    let spec = serde_json::to_vec(state.spec()).map_err(|e| ArtifactError::Spec(e.to_string()))?;
    let spec_len = u32::try_from(spec.len()).map_err(|_| ArtifactError::Spec("spec too large".into()))?;
    w.write_all(ARTIFACT_MAGIC)?;
    w.write_all(&ARTIFACT_VERSION.to_le_bytes())?;
    w.write_all(&spec_len.to_le_bytes())?;
    w.write_all(&spec)?;
    let mut buf = Vec::with_capacity(state.params.len() * 8);
    for p in &state.params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_artifact<R: Read>(mut r: R) -> Result<NetworkState, ArtifactError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != ARTIFACT_MAGIC {
        return Err(ArtifactError::BadMagic);
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf)?;
    let version = u16::from_le_bytes(u16buf);
    if version != ARTIFACT_VERSION {
        return Err(ArtifactError::Version(version));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let mut spec = vec![0u8; u32::from_le_bytes(u32buf) as usize];
    r.read_exact(&mut spec)?;
    let spec: NetworkSpec = serde_json::from_slice(&spec).map_err(|e| ArtifactError::Spec(e.to_string()))?;
    let expected = spec.param_count() * 8;
    let mut body = Vec::with_capacity(expected);
    r.read_to_end(&mut body)?;
    if body.len() != expected {
        return Err(ArtifactError::ParamLength { expected, found: body.len() });
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(NetworkState::from_params(spec, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::init_network;

    #[test]
    fn header_layout() {
        let state = init_network(&NetworkSpec::reference(), 5).unwrap();
        let mut bytes = Vec::new();
        write_artifact(&state, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"HARM");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        let spec_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 10 + spec_len + 8 * state.params.len());
        let first = f64::from_le_bytes(bytes[10 + spec_len..18 + spec_len].try_into().unwrap());
        assert_eq!(first.to_bits(), state.params[0].to_bits());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let state = init_network(&NetworkSpec::reference(), 5).unwrap();
        let mut bytes = Vec::new();
        write_artifact(&state, &mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_artifact(&bad[..]), Err(ArtifactError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(read_artifact(&bad[..]), Err(ArtifactError::Version(9))));
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(read_artifact(truncated), Err(ArtifactError::ParamLength { .. })));
    }
}
