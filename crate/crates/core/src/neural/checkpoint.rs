//! Binary checkpoint: magic, version, JSON header with the network shape,
//! then the online parameters, the target parameters and the Adam state as
//! little-endian f64.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, BranchingNet, NetShape, NeuralError};

const MAGIC: &[u8; 8] = b"RTSCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub online: BranchingNet,
    pub target: BranchingNet,
    pub adam: Adam,
}

#[derive(Serialize, Deserialize)]
struct Header {
    shape: NetShape,
    params: usize,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), NeuralError> {
    let path = path.as_ref();
    let io = |source| NeuralError::Io {
        path: path.display().to_string(),
        source,
    };
    let n = ckpt.online.len();
    if ckpt.target.shape() != ckpt.online.shape() || ckpt.adam.m.len() != n || ckpt.adam.v.len() != n {
        return Err(NeuralError::ShapeMismatch {
            left: n,
            right: ckpt.adam.m.len(),
        });
    }
    let header = serde_json::to_vec(&Header {
        shape: ckpt.online.shape().clone(),
        params: n,
        beta1: ckpt.adam.beta1,
        beta2: ckpt.adam.beta2,
        epsilon: ckpt.adam.epsilon,
        t: ckpt.adam.t,
    })
    .expect("header serializes");
    let mut buf = Vec::with_capacity(16 + header.len() + 32 * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for block in [ckpt.online.params(), ckpt.target.params(), &ckpt.adam.m, &ckpt.adam.v] {
        for x in block {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(io)?;
    file.write_all(&buf).map_err(io)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, NeuralError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| NeuralError::Io {
            path: shown.clone(),
            source,
        })?;
    let corrupt = |reason: &str| NeuralError::Corrupt {
        path: shown.clone(),
        reason: reason.to_owned(),
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| corrupt(&e.to_string()))?;
    let n = header.params;
    let data = &bytes[16 + hlen..];
    if data.len() != 4 * 8 * n {
        return Err(corrupt("parameter block has the wrong length"));
    }
    let block = |i: usize| -> Vec<f64> {
        data[i * 8 * n..(i + 1) * 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect()
    };
    let online = BranchingNet::from_params(header.shape.clone(), block(0))?;
    let target = BranchingNet::from_params(header.shape, block(1))?;
    let adam = Adam {
        beta1: header.beta1,
        beta2: header.beta2,
        epsilon: header.epsilon,
        t: header.t,
        m: block(2),
        v: block(3),
    };
    Ok(Checkpoint { online, target, adam })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let online = BranchingNet::new(NetShape::with_hidden(7, &[9, 5], 4, 3), 11).unwrap();
        let target = BranchingNet::new(online.shape().clone(), 12).unwrap();
        let mut adam = Adam::new(online.len());
        let mut p = online.params().to_vec();
        let g: Vec<f64> = (0..p.len()).map(|i| (i as f64).sin() * 1e-3).collect();
        adam.step(&mut p, &g, 1e-3).unwrap();
        let ckpt = Checkpoint { online, target, adam };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        for (a, b) in back.online.params().iter().zip(ckpt.online.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(NeuralError::Corrupt { .. })));
        assert!(matches!(
            load_checkpoint(dir.path().join("missing.bin")),
            Err(NeuralError::Io { .. })
        ));
    }
}
