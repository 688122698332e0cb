//! Weight container: a text manifest followed by a little-endian f32 payload.
//!
//! ```text
//! TRAJW 1\n
//! <header byte length, decimal>\n
//! <JSON header>
//! <payload>
//! ```
//!
//! The header is `{"hyper": {...}, "tensors": [{"name", "shape", "offset",
//! "count"}, ...]}` where `offset` is a byte offset into the payload and
//! `count` the number of f32 elements. Tensors are stored row-major.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &str = "TRAJW 1";
const MAX_HEADER: usize = 1 << 24;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyper {
    pub d_model: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    /// Window length L.
    pub window: usize,
    pub features: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            d_model: 32,
            n_heads: 2,
            ffn_dim: 64,
            window: 6,
            features: 9,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0
            || self.n_heads == 0
            || self.d_model % self.n_heads != 0
            || self.ffn_dim == 0
            || self.window == 0
            || self.features != 9
        {
            return Err(Error::InvalidConfig(format!("unsupported hyperparameters {self:?}")));
        }
        Ok(())
    }

    /// Every tensor the forward pass reads, with its shape.
    pub fn expected_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let (d, f, l, n) = (self.d_model, self.ffn_dim, self.window, self.features);
        let mut v: Vec<(String, Vec<usize>)> = vec![
            ("norm.mean".into(), vec![n]),
            ("norm.std".into(), vec![n]),
            ("input.weight".into(), vec![d, n]),
            ("input.bias".into(), vec![d]),
            ("pos_embedding".into(), vec![l, d]),
        ];
        for block in ["enc", "dec"] {
            for ln in ["ln1", "ln2"] {
                v.push((format!("{block}.{ln}.gain"), vec![d]));
                v.push((format!("{block}.{ln}.bias"), vec![d]));
            }
            for p in ["q", "k", "v", "o"] {
                v.push((format!("{block}.attn.{p}.weight"), vec![d, d]));
                v.push((format!("{block}.attn.{p}.bias"), vec![d]));
            }
            v.push((format!("{block}.ffn.w1"), vec![f, d]));
            v.push((format!("{block}.ffn.b1"), vec![f]));
            v.push((format!("{block}.ffn.w2"), vec![d, f]));
            v.push((format!("{block}.ffn.b2"), vec![d]));
        }
        v.push(("head.weight".into(), vec![2, d]));
        v.push(("head.bias".into(), vec![2]));
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub hyper: Hyper,
    pub tensors: Vec<TensorEntry>,
}

/// Named tensors as read from a file, before shape validation against the
/// architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub hyper: Hyper,
    pub tensors: HashMap<String, (Vec<usize>, Vec<f32>)>,
}

fn werr(tensor: &str, message: impl Into<String>) -> Error {
    Error::Weights {
        tensor: tensor.to_string(),
        message: message.into(),
    }
}

impl TensorFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| werr("<header>", m);
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing magic line"))?;
        if &bytes[..nl] != MAGIC.as_bytes() {
            return Err(bad("bad magic"));
        }
        let rest = &bytes[nl + 1..];
        let nl2 = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header length"))?;
        let len: usize = std::str::from_utf8(&rest[..nl2])
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("unreadable header length"))?;
        if len > MAX_HEADER || rest.len() < nl2 + 1 + len {
            return Err(bad("header length out of range"));
        }
        let header: Header = serde_json::from_slice(&rest[nl2 + 1..nl2 + 1 + len])
            .map_err(|e| bad(&format!("invalid header json: {e}")))?;
        let payload = &rest[nl2 + 1 + len..];

        let mut tensors = HashMap::new();
        for t in &header.tensors {
            let numel: usize = t.shape.iter().product();
            if numel != t.count {
                return Err(werr(&t.name, format!("count {} does not match shape {:?}", t.count, t.shape)));
            }
            let end = t
                .count
                .checked_mul(4)
                .and_then(|b| b.checked_add(t.offset))
                .filter(|&e| e <= payload.len() && t.offset % 4 == 0)
                .ok_or_else(|| werr(&t.name, "payload range out of bounds"))?;
            let data: Vec<f32> = payload[t.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(werr(&t.name, "non-finite value"));
            }
            if tensors.insert(t.name.clone(), (t.shape.clone(), data)).is_some() {
                return Err(werr(&t.name, "duplicate tensor"));
            }
        }
        Ok(Self {
            hyper: header.hyper,
            tensors,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&bytes)
    }

    /// Serialise with tensors in `order`; unknown names are written after.
    pub fn to_bytes(&self, order: &[String]) -> Vec<u8> {
        let mut names: Vec<&String> = order.iter().filter(|n| self.tensors.contains_key(*n)).collect();
        let mut extra: Vec<&String> = self.tensors.keys().filter(|k| !order.contains(k)).collect();
        extra.sort();
        names.extend(extra);
        let mut entries = Vec::new();
        let mut payload = Vec::new();
        for n in names {
            let (shape, data) = &self.tensors[n];
            entries.push(TensorEntry {
                name: n.clone(),
                shape: shape.clone(),
                offset: payload.len(),
                count: data.len(),
            });
            for v in data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = serde_json::to_vec(&Header {
            hyper: self.hyper,
            tensors: entries,
        })
        .expect("header serialises");
        let mut out = format!("{MAGIC}\n{}\n", header.len()).into_bytes();
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out
    }

    /// Remove and return the named tensor, checking its shape.
    pub fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
        let (s, data) = self.tensors.remove(name).ok_or_else(|| werr(name, "missing tensor"))?;
        if s != shape {
            return Err(werr(name, format!("shape {s:?}, expected {shape:?}")));
        }
        Ok(data)
    }
}
