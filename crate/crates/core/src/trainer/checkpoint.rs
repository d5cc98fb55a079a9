//! Binary tensor container used for checkpoints and perceptual weights.
//!
//! Layout: `b"PUFF"`, version byte, then records
//! `(u16 name_len, name, u8 ndim, u32 dims.., f32 payload..)`, all little
//! endian, then a CRC32 over the record bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::TrainConfig;
use crate::error::{shape_err, PuffError, Result};
use crate::model::{ModelConfig, PuffNetModel};
use crate::params::Parameters;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PUFF";
pub const VERSION: u8 = 1;

const MODEL: &str = "model.";
const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";
const META_ITER: &str = "meta.iter";
const META_ADAM_T: &str = "meta.adam_t";
const META_CONFIG: &str = "meta.config";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Record {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        Self {
            name: name.into(),
            dims: t.shape().to_vec(),
            data: t.to_vec(),
        }
    }

    /// A `u64` stored bit-for-bit as two `f32` words (low, high).
    fn from_u64(name: &str, v: u64) -> Self {
        Self {
            name: name.to_string(),
            dims: vec![2],
            data: vec![f32::from_bits(v as u32), f32::from_bits((v >> 32) as u32)],
        }
    }

    fn to_u64(&self) -> Result<u64> {
        match self.data.as_slice() {
            [lo, hi] => Ok(u64::from(lo.to_bits()) | (u64::from(hi.to_bits()) << 32)),
            _ => Err(PuffError::Format(format!("`{}` is not a packed u64", self.name))),
        }
    }

    /// UTF-8 text packed four bytes per word, space padded.
    fn from_text(name: &str, text: &str) -> Self {
        let mut bytes = text.as_bytes().to_vec();
        while !bytes.len().is_multiple_of(4) {
            bytes.push(b' ');
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        Self {
            name: name.to_string(),
            dims: vec![data.len()],
            data,
        }
    }

    fn to_text(&self) -> Result<String> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect();
        String::from_utf8(bytes)
            .map(|s| s.trim_end().to_string())
            .map_err(|_| PuffError::Format(format!("`{}` is not UTF-8", self.name)))
    }
}

pub fn encode(records: &[Record]) -> Result<Vec<u8>> {
    let mut body = Vec::new();
    for r in records {
        let name = r.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| PuffError::Format(format!("name too long: {}", r.name)))?;
        let ndim = u8::try_from(r.dims.len())
            .map_err(|_| PuffError::Format(format!("too many dims for {}", r.name)))?;
        if r.dims.iter().product::<usize>() != r.data.len() {
            return Err(PuffError::Format(format!("`{}` dims do not match payload", r.name)));
        }
        body.extend_from_slice(&name_len.to_le_bytes());
        body.extend_from_slice(name);
        body.push(ndim);
        for &d in &r.dims {
            let d = u32::try_from(d).map_err(|_| PuffError::Format(format!("dim too large in {}", r.name)))?;
            body.extend_from_slice(&d.to_le_bytes());
        }
        for v in &r.data {
            body.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(body.len() + 9);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&body);
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| PuffError::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Record>> {
    if bytes.len() < 5 {
        return Err(PuffError::Format("truncated file".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(PuffError::Format("bad magic bytes".into()));
    }
    if bytes[4] != VERSION {
        return Err(PuffError::Format(format!(
            "unsupported version {} (expected {VERSION})",
            bytes[4]
        )));
    }
    if bytes.len() < 9 {
        return Err(PuffError::Format("truncated file".into()));
    }
    let (body, crc) = bytes[5..].split_at(bytes.len() - 9);
    let mut records = Vec::new();
    let mut cur = Cursor { bytes: body, pos: 0 };
    while cur.pos < body.len() {
        let len = cur.take(2)?;
        let len = usize::from(u16::from_le_bytes([len[0], len[1]]));
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| PuffError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = usize::from(cur.take(1)?[0]);
        let dims = (0..ndim).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let payload = cur.take(n.checked_mul(4).ok_or_else(|| PuffError::Format("payload too large".into()))?)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        records.push(Record { name, dims, data });
    }
    let stored = u32::from_le_bytes([crc[0], crc[1], crc[2], crc[3]]);
    if stored != crc32fast::hash(body) {
        return Err(PuffError::Format("checksum mismatch (corrupt or truncated file)".into()));
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    fs::write(path, encode(records)?)?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    decode(&fs::read(path)?)
}

/// Configuration echoed into every checkpoint so a run can be rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Decoded checkpoint contents.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u8,
    pub config: RunConfig,
    pub iter: u64,
    pub params: BTreeMap<String, Record>,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn capture(model: &PuffNetModel, adam: &AdamState, iter: u64, config: &RunConfig) -> Self {
        let mut params = BTreeMap::new();
        model.visit_params("", &mut |name, t| {
            params.insert(name.to_string(), Record::from_tensor(name, t));
        });
        Self {
            version: VERSION,
            config: config.clone(),
            iter,
            params,
            adam: adam.clone(),
        }
    }

    pub fn to_records(&self) -> Result<Vec<Record>> {
        let json = serde_json::to_string(&self.config)
            .map_err(|e| PuffError::Format(format!("config encode: {e}")))?;
        let mut out = vec![
            Record::from_text(META_CONFIG, &json),
            Record::from_u64(META_ITER, self.iter),
            Record::from_u64(META_ADAM_T, self.adam.t),
        ];
        for (name, r) in &self.params {
            out.push(Record { name: format!("{MODEL}{name}"), ..r.clone() });
        }
        for (name, m) in &self.adam.m {
            out.push(Record { name: format!("{ADAM_M}{name}"), dims: vec![m.len()], data: m.clone() });
        }
        for (name, v) in &self.adam.v {
            out.push(Record { name: format!("{ADAM_V}{name}"), dims: vec![v.len()], data: v.clone() });
        }
        Ok(out)
    }

    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let mut config = None;
        let mut iter = None;
        let mut adam = AdamState::default();
        let mut adam_t = None;
        let mut params = BTreeMap::new();
        for r in records {
            if let Some(name) = r.name.strip_prefix(MODEL) {
                params.insert(name.to_string(), Record { name: name.to_string(), ..r });
            } else if let Some(name) = r.name.strip_prefix(ADAM_M) {
                adam.m.insert(name.to_string(), r.data);
            } else if let Some(name) = r.name.strip_prefix(ADAM_V) {
                adam.v.insert(name.to_string(), r.data);
            } else if r.name == META_ITER {
                iter = Some(r.to_u64()?);
            } else if r.name == META_ADAM_T {
                adam_t = Some(r.to_u64()?);
            } else if r.name == META_CONFIG {
                let text = r.to_text()?;
                config = Some(
                    serde_json::from_str(&text)
                        .map_err(|e| PuffError::Format(format!("config decode: {e}")))?,
                );
            } else {
                return Err(PuffError::UnknownTensor(r.name));
            }
        }
        adam.t = adam_t.ok_or_else(|| PuffError::MissingTensor(META_ADAM_T.into()))?;
        Ok(Self {
            version: VERSION,
            config: config.ok_or_else(|| PuffError::MissingTensor(META_CONFIG.into()))?,
            iter: iter.ok_or_else(|| PuffError::MissingTensor(META_ITER.into()))?,
            params,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_records(path, &self.to_records()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(read_records(path)?)
    }

    /// Overwrites every model parameter with the stored value. Every stored
    /// tensor must name a model parameter of the same shape and vice versa.
    pub fn restore_model(&self, model: &mut PuffNetModel) -> Result<()> {
        let mut seen = 0;
        let mut failure = None;
        model.visit_params_mut("", &mut |name, t| {
            if failure.is_some() {
                return;
            }
            match self.params.get(name) {
                None => failure = Some(PuffError::MissingTensor(format!("{MODEL}{name}"))),
                Some(r) if r.dims != t.shape() => {
                    failure = Some(shape_err("checkpoint restore", &r.dims, t.shape()))
                }
                Some(r) => {
                    seen += 1;
                    *t = if t.requires_grad() {
                        Tensor::param(r.dims.clone(), r.data.clone())
                    } else {
                        Tensor::new(r.dims.clone(), r.data.clone()).expect("dims checked")
                    };
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if seen != self.params.len() {
            let known: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
            let extra = self.params.keys().find(|k| !known.contains(k)).cloned().unwrap_or_default();
            return Err(PuffError::UnknownTensor(format!("{MODEL}{extra}")));
        }
        Ok(())
    }
}
