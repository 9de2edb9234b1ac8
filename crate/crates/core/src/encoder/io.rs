//! Model files and external embedding files.
//!
//! Model file layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "ACSEMDL\0"
//! version      u32      FORMAT_VERSION
//! pooling      u8       0 = mean, 1 = first token
//! max_seq_len  u64
//! min_freq     u64
//! V, d, h, o   4 x u64
//! vocab        V x (id u32, byte length u32, UTF-8 bytes), ids 0..V in order
//! E, W1, b1, W2, b2   f64 row-major
//! sha256       32 bytes over everything above
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{EncoderParams, Matrix, PoolingMode};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ACSEMDL\0";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

pub fn params_to_bytes(params: &EncoderParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match params.pooling {
        PoolingMode::Mean => 0,
        PoolingMode::FirstToken => 1,
    });
    let dims = [
        params.max_seq_len,
        params.vocab.min_freq(),
        params.vocab.len(),
        params.embedding_dim(),
        params.hidden_dim(),
        params.output_dim(),
    ];
    for v in dims {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for (id, token) in params.vocab.tokens().iter().enumerate() {
        out.extend_from_slice(&(id as u32).to_le_bytes());
        out.extend_from_slice(&(token.len() as u32).to_le_bytes());
        out.extend_from_slice(token.as_bytes());
    }
    let tensors = [
        params.embeddings.as_slice(),
        params.w1.as_slice(),
        &params.b1,
        params.w2.as_slice(),
        &params.b2,
    ];
    for x in tensors.into_iter().flatten() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(digest.as_slice());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of model data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format(format!("size {v} out of range")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format("tensor size overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("tensor size overflow".into()))?;
        Matrix::from_vec(rows, cols, self.f64s(n)?)
    }
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<EncoderParams> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version > FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if version == 0 {
        return Err(Error::Format("format version 0".into()));
    }
    if bytes.len() < 12 + CHECKSUM_LEN {
        return Err(Error::Checksum);
    }
    let (body, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != stored {
        return Err(Error::Checksum);
    }

    let mut r = Reader { bytes: body, pos: 12 };
    let pooling = match r.u8()? {
        0 => PoolingMode::Mean,
        1 => PoolingMode::FirstToken,
        other => return Err(Error::Format(format!("unknown pooling tag {other}"))),
    };
    let max_seq_len = r.u64()?;
    let min_freq = r.u64()?;
    let (v, d, h, o) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?);
    let mut tokens = Vec::with_capacity(v.min(1 << 20));
    for expected in 0..v {
        let id = r.u32()? as usize;
        if id != expected {
            return Err(Error::Format(format!("vocabulary id {id} out of order")));
        }
        let len = r.u32()? as usize;
        let token = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Format(format!("vocabulary token is not UTF-8: {e}")))?;
        tokens.push(token.to_string());
    }
    let vocab = Vocabulary::from_tokens(tokens, min_freq)?;
    let params = EncoderParams {
        vocab,
        embeddings: r.matrix(v, d)?,
        w1: r.matrix(d, h)?,
        b1: r.f64s(h)?,
        w2: r.matrix(h, o)?,
        b2: r.f64s(o)?,
        pooling,
        max_seq_len,
    };
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after tensors".into()));
    }
    params.check()?;
    Ok(params)
}

pub fn save_params(params: &EncoderParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, params_to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_bytes(&bytes)
}

/// Writes `id v1 v2 ... vd` lines. Floats use the shortest representation
/// that parses back to the same bits.
pub fn write_embeddings<'a, I>(entries: I, path: impl AsRef<Path>) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let path = path.as_ref();
    let mut out = String::new();
    for (id, vector) in entries {
        out.push_str(id);
        for x in vector {
            write!(out, " {x}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an embedding file written by this tool or produced elsewhere.
pub fn load_external_embeddings(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let mut fields = line.split_whitespace();
        let id = fields
            .next()
            .ok_or_else(|| parse_err("empty line".into()))?;
        let vector = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| parse_err(format!("bad value `{f}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(parse_err(format!("no values for `{id}`")));
        }
        let expected = *dim.get_or_insert(vector.len());
        if vector.len() != expected {
            return Err(Error::Dimension {
                id: id.to_string(),
                expected,
                found: vector.len(),
            });
        }
        if map.insert(id.to_string(), vector).is_some() {
            return Err(Error::DuplicateId {
                id: id.to_string(),
                line: Some(line_no),
            });
        }
    }
    Ok(map)
}
