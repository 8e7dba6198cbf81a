use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Arch;
use crate::binfmt;
use crate::diff::Model;
use crate::error::{Error, Result};
use crate::hash::Fnv1a;
use crate::tensor::ParamSet;

const MAGIC: &[u8; 5] = b"AWTC1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub final_train_acc: f64,
    pub final_test_acc: f64,
    pub dataset_seed: u64,
    pub content_hash: u64,
}

/// A trained model with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: Arch,
    pub params: ParamSet,
    pub meta: CheckpointMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    byte_offset: usize,
    byte_len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    arch: Arch,
    meta: CheckpointMeta,
    params: Vec<ManifestEntry>,
}

/// FNV-1a over the architecture tag followed by the little-endian
/// parameter bytes.
pub fn param_hash(arch: Arch, params: &ParamSet) -> u64 {
    let mut h = Fnv1a::new();
    h.update(arch.tag().as_bytes());
    for v in params.flat() {
        h.update(&v.to_le_bytes());
    }
    h.finish()
}

/// Content hash of an in-memory model. Models with one of the population
/// architectures hash exactly like their checkpoint; other layer stacks hash
/// their layer description in place of the tag.
pub fn model_hash(model: &Model) -> u64 {
    let arch = Arch::ALL
        .into_iter()
        .find(|a| a.layers() == model.layers() && a.input_shape() == model.input_shape());
    match arch {
        Some(a) => param_hash(a, model.params()),
        None => {
            let mut h = Fnv1a::new();
            h.update(format!("custom{:?}{:?}", model.input_shape(), model.layers()).as_bytes());
            for v in model.params().flat() {
                h.update(&v.to_le_bytes());
            }
            h.finish()
        }
    }
}

impl Checkpoint {
    /// Wraps a model, filling in `meta.content_hash`.
    pub fn new(arch: Arch, model: &Model, mut meta: CheckpointMeta) -> Result<Self> {
        let reference = Model::layout_for(&arch.input_shape(), &arch.layers())?;
        if **model.params().layout() != reference {
            return Err(Error::LayoutMismatch(format!("model does not have the {arch} layout")));
        }
        meta.content_hash = param_hash(arch, model.params());
        Ok(Self {
            arch,
            params: model.params().clone(),
            meta,
        })
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(self.arch.input_shape(), self.arch.layers(), self.params.clone())
    }

    pub fn content_hash(&self) -> u64 {
        self.meta.content_hash
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = self
            .params
            .layout()
            .specs()
            .iter()
            .map(|s| ManifestEntry {
                name: s.name.clone(),
                shape: s.shape.clone(),
                byte_offset: s.offset * 8,
                byte_len: s.len() * 8,
            })
            .collect();
        let header = Header {
            version: VERSION,
            arch: self.arch,
            meta: self.meta.clone(),
            params,
        };
        binfmt::encode(MAGIC, &header, &self.params.to_le_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, mut r): (Header, _) = binfmt::decode(MAGIC, bytes)?;
        if header.version != VERSION {
            return Err(Error::Version {
                expected: VERSION,
                found: header.version,
            });
        }
        let layout = Model::layout_for(&header.arch.input_shape(), &header.arch.layers())?;
        let manifest_ok = header.params.len() == layout.specs().len()
            && header.params.iter().zip(layout.specs()).all(|(m, s)| {
                m.name == s.name && m.shape == s.shape && m.byte_offset == s.offset * 8 && m.byte_len == s.len() * 8
            });
        if !manifest_ok {
            return Err(Error::Header(format!(
                "parameter manifest does not match the {} layout",
                header.arch
            )));
        }
        let data = r.f64s(layout.total_dim(), "parameter payload")?;
        r.finish("parameter payload")?;
        let params = ParamSet::from_flat(Arc::new(layout), data)?;
        let computed = param_hash(header.arch, &params);
        if computed != header.meta.content_hash {
            return Err(Error::CorruptCheckpoint {
                stored: header.meta.content_hash,
                computed,
            });
        }
        Ok(Self {
            arch: header.arch,
            params,
            meta: header.meta,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    binfmt::write_file(path.as_ref(), &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&binfmt::read_file(path.as_ref())?)
}
