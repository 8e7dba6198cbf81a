//! Procedural glyph dataset and its on-disk format.

mod glyphs;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use glyphs::{gen_glyphs, Glyph};

use crate::binfmt;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CLASSES: usize = 4;
pub const SIDE: usize = 16;

const MAGIC: &[u8; 5] = b"AWTD1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn sub_seed_stage(self) -> &'static str {
        match self {
            Split::Train => "glyphs-train",
            Split::Test => "glyphs-test",
        }
    }
}

/// Labelled images `[M, 1, 16, 16]` with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub split: Split,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    seed: u64,
    split: Split,
    m: usize,
    k: usize,
    h: usize,
    w: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; CLASSES];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// The first `n` samples (all of them if `n` exceeds the size).
    pub fn head(&self, n: usize) -> (Tensor, Vec<usize>) {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.images.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let shape = self.images.shape();
        let header = Header {
            version: VERSION,
            seed: self.seed,
            split: self.split,
            m: self.len(),
            k: CLASSES,
            h: shape[2],
            w: shape[3],
        };
        let mut payload = Vec::with_capacity(self.images.len() * 4 + self.len() * 4);
        binfmt::push_f32s(&mut payload, self.images.data());
        binfmt::push_labels(&mut payload, &self.labels);
        binfmt::encode(MAGIC, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, mut r): (Header, _) = binfmt::decode(MAGIC, bytes)?;
        if header.version != VERSION {
            return Err(Error::Version {
                expected: VERSION,
                found: header.version,
            });
        }
        if header.m == 0 || header.h == 0 || header.w == 0 || header.k == 0 {
            return Err(Error::Header(format!("degenerate dataset dimensions {header:?}")));
        }
        let n = header.m * header.h * header.w;
        let pixels = r.f32s(n, "image payload")?;
        let labels = binfmt::labels_from_i32(r.i32s(header.m, "label payload")?, header.k)?;
        r.finish("labels")?;
        Ok(Self {
            images: Tensor::new(vec![header.m, 1, header.h, header.w], pixels)?,
            labels,
            split: header.split,
            seed: header.seed,
        })
    }
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    binfmt::write_file(path.as_ref(), &d.to_bytes()?)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_bytes(&binfmt::read_file(path.as_ref())?)
}
