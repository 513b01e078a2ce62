//! Binary checkpoint format, little-endian:
//!
//! ```text
//! "SCKP" | u32 version | u64 vocab hash
//! u32 context, vocab, embed, layers, heads, ff | u8 tied | f32 dropout
//! u64 parameter count | f32 parameters...
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{ModelConfig, ModelParams, ParamLayout};
use crate::slottok::vocab_hash;

const MAGIC: &[u8; 4] = b"SCKP";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint version {found}, expected {VERSION}")]
    VersionMismatch { found: u32 },
    #[error("checkpoint was written for a different vocabulary")]
    VocabMismatch,
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn save_checkpoint<W: Write>(params: &ModelParams<f32>, mut w: W) -> io::Result<()> {
    let c = &params.config;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&vocab_hash().to_le_bytes())?;
    for v in [
        c.context_len,
        c.vocab,
        c.embed_dim,
        c.n_layers,
        c.n_heads,
        c.ff_dim,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&[c.tie_embeddings as u8])?;
    w.write_all(&c.dropout.to_le_bytes())?;
    w.write_all(&(params.data.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(params.data.len() * 4);
    for x in &params.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], CheckpointError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CheckpointError::CorruptFile("truncated".into()),
        _ => CheckpointError::Io(e),
    })?;
    Ok(b)
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<ModelParams<f32>, CheckpointError> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(CheckpointError::CorruptFile("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }
    if u64::from_le_bytes(read_array(&mut r)?) != vocab_hash() {
        return Err(CheckpointError::VocabMismatch);
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = u32::from_le_bytes(read_array(&mut r)?) as usize;
    }
    let tie = match read_array::<1, _>(&mut r)?[0] {
        0 => false,
        1 => true,
        b => return Err(CheckpointError::CorruptFile(format!("tie flag {b}"))),
    };
    let dropout = f32::from_le_bytes(read_array(&mut r)?);
    let config = ModelConfig {
        context_len: dims[0],
        vocab: dims[1],
        embed_dim: dims[2],
        n_layers: dims[3],
        n_heads: dims[4],
        ff_dim: dims[5],
        dropout,
        tie_embeddings: tie,
    };
    config
        .validate()
        .map_err(|e| CheckpointError::CorruptFile(e.to_string()))?;
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let expected = ParamLayout::new(&config).total;
    if count != expected {
        return Err(CheckpointError::CorruptFile(format!(
            "{count} parameters, configuration needs {expected}"
        )));
    }
    let mut bytes = Vec::with_capacity(count * 4);
    r.by_ref()
        .take((count * 4) as u64)
        .read_to_end(&mut bytes)?;
    if bytes.len() != count * 4 {
        return Err(CheckpointError::CorruptFile("truncated".into()));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::CorruptFile("trailing bytes".into()));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(ModelParams { config, data })
}
