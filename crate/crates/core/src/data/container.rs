//! MRBM model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MRBM" | version: u16 | header_len: u32 | header (UTF-8 JSON) | tensor data
//! ```
//!
//! The header lists every tensor as `{name, dtype: "f32", shape, offset}`,
//! with `offset` in bytes from the start of the data section.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::masked::MaskedModel;
use crate::rbm::{BetaRbmParams, BinaryShapeParams, MixedRbmParams};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MRBM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    meta: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Named `f32` tensors plus string metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Tensor>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Container(msg.into())
}

impl Container {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| bad(format!("missing tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(bad(format!("tensor `{}` shape does not match its data", t.name)));
            }
            entries.push(TensorEntry {
                name: t.name.clone(),
                dtype: "f32".into(),
                shape: t.shape.clone(),
                offset,
            });
            offset += 4 * t.data.len();
        }
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(10 + header.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 || &bytes[..4] != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
        let data_start = 10usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("header length exceeds file"))?;
        let text = std::str::from_utf8(&bytes[10..data_start]).map_err(|_| bad("header is not UTF-8"))?;
        let header: Header = serde_json::from_str(text).map_err(|e| bad(format!("header JSON: {e}")))?;
        let data = &bytes[data_start..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            if e.dtype != "f32" {
                return Err(bad(format!("tensor `{}` has unsupported dtype {}", e.name, e.dtype)));
            }
            let n: usize = e.shape.iter().product();
            let end = e
                .offset
                .checked_add(4 * n)
                .filter(|&end| end <= data.len())
                .ok_or_else(|| bad(format!("tensor `{}` runs past the end of the file", e.name)))?;
            let values = data[e.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor {
                name: e.name,
                shape: e.shape,
                data: values,
            });
        }
        Ok(Container {
            meta: header.meta,
            tensors,
        })
    }

    pub fn put_beta(&mut self, prefix: &str, p: &BetaRbmParams) {
        for b in p.blocks() {
            self.push(format!("{prefix}{}", b.name), b.shape, b.values.to_vec());
        }
    }

    pub fn get_beta(&self, prefix: &str) -> Result<BetaRbmParams> {
        let w = self.get(&format!("{prefix}w_logv"))?;
        let [n_vis, n_hid] = w.shape[..] else {
            return Err(bad(format!("{prefix}w_logv must be two-dimensional")));
        };
        let take = |n: &str| self.get(&format!("{prefix}{n}")).map(|t| t.data.clone());
        BetaRbmParams::from_parts(
            n_vis,
            n_hid,
            take("w_logv")?,
            take("w_log1mv")?,
            take("a_vis")?,
            take("c_vis")?,
            take("b_hid")?,
        )
    }

    pub fn put_mixed(&mut self, prefix: &str, p: &MixedRbmParams) {
        for b in p.shape.blocks() {
            self.push(format!("{prefix}shape.{}", b.name), b.shape, b.values.to_vec());
        }
        self.put_beta(&format!("{prefix}appearance."), &p.appearance);
    }

    pub fn get_mixed(&self, prefix: &str) -> Result<MixedRbmParams> {
        let w = self.get(&format!("{prefix}shape.w_shape"))?;
        let [n_pix, n_hid] = w.shape[..] else {
            return Err(bad(format!("{prefix}shape.w_shape must be two-dimensional")));
        };
        let shape = BinaryShapeParams::from_parts(
            n_pix,
            n_hid,
            w.data.clone(),
            self.get(&format!("{prefix}shape.b_shape"))?.data.clone(),
        )?;
        let appearance = self.get_beta(&format!("{prefix}appearance."))?;
        MixedRbmParams::new(shape, appearance)
    }
}

/// A stored model: a lone Beta RBM or a full foreground/background model.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Beta(BetaRbmParams),
    Masked(MaskedModel),
}

pub const KIND_BETA: &str = "beta-rbm";
pub const KIND_MASKED: &str = "masked-rbm";

impl StoredModel {
    pub fn to_container(&self, meta: BTreeMap<String, String>) -> Container {
        let mut c = Container {
            meta,
            tensors: Vec::new(),
        };
        match self {
            StoredModel::Beta(p) => {
                c.meta.insert("kind".into(), KIND_BETA.into());
                c.put_beta("rbm.", p);
            }
            StoredModel::Masked(m) => {
                c.meta.insert("kind".into(), KIND_MASKED.into());
                c.put_mixed("fg.", &m.fg);
                c.put_beta("bg.", &m.bg);
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        match c.meta.get("kind").map(String::as_str) {
            Some(KIND_BETA) => Ok(StoredModel::Beta(c.get_beta("rbm.")?)),
            Some(KIND_MASKED) => Ok(StoredModel::Masked(MaskedModel::new(c.get_mixed("fg.")?, c.get_beta("bg.")?)?)),
            other => Err(bad(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn n_pix(&self) -> usize {
        match self {
            StoredModel::Beta(p) => p.n_vis(),
            StoredModel::Masked(m) => m.n_pix(),
        }
    }
}

pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, c.to_bytes()?)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Container> {
    Container::from_bytes(&fs::read(path)?)
}

pub fn write_model(path: &Path, model: &StoredModel, meta: BTreeMap<String, String>) -> Result<()> {
    write_container(path, &model.to_container(meta))
}

pub fn read_model(path: &Path) -> Result<(StoredModel, BTreeMap<String, String>)> {
    let c = read_container(path)?;
    Ok((StoredModel::from_container(&c)?, c.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn masked() -> MaskedModel {
        let mut rng = stream(4, &[]);
        MaskedModel::new(
            MixedRbmParams::init(6, 3, None, &mut rng).unwrap(),
            BetaRbmParams::init(6, 2, None, &mut rng).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn masked_model_round_trip_is_bit_exact() {
        let model = StoredModel::Masked(masked());
        let mut meta = BTreeMap::new();
        meta.insert("seed".into(), "4".into());
        let bytes = model.to_container(meta).to_bytes().unwrap();
        let parsed = Container::from_bytes(&bytes).unwrap();
        assert_eq!(parsed.to_bytes().unwrap(), bytes);
        assert_eq!(StoredModel::from_container(&parsed).unwrap(), model);
        assert_eq!(&bytes[..4], b"MRBM");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), VERSION);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = StoredModel::Beta(BetaRbmParams::zeros(3, 2))
            .to_container(BTreeMap::new())
            .to_bytes()
            .unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Container::from_bytes(&bad_magic).is_err());
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert!(Container::from_bytes(&bad_version).is_err());
        let mut bad_len = bytes.clone();
        bad_len[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(Container::from_bytes(&bad_len).is_err());
    }

    #[test]
    fn unknown_kind_rejected() {
        let c = Container::default();
        assert!(StoredModel::from_container(&c).is_err());
    }
}
