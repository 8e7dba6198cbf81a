use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttackConfig, Method};
use crate::binfmt;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 5] = b"AWTA1";
const VERSION: u32 = 1;

/// Clean inputs, their adversarial counterparts, and how they were made.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialBatch {
    pub x_clean: Tensor,
    pub x_adv: Tensor,
    pub labels: Vec<usize>,
    pub config: AttackConfig,
    pub surrogate_hash: u64,
    /// Vanishing-gradient rows seen during generation. Not persisted.
    pub degenerate_steps: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    method: Method,
    config: AttackConfig,
    surrogate_hash: u64,
    m: usize,
    sample_shape: Vec<usize>,
}

impl AdversarialBatch {
    pub fn method(&self) -> Method {
        self.config.method
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Largest `‖x_adv − x_clean‖∞` over the batch.
    pub fn max_perturbation(&self) -> f64 {
        self.x_adv
            .data()
            .iter()
            .zip(self.x_clean.data())
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max)
    }

    /// True when every sample is inside the budget (with `slack`) and in `[0, 1]`.
    pub fn within_budget(&self, slack: f64) -> bool {
        self.max_perturbation() <= self.config.eps + slack && self.x_adv.data().iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Serialized image. Pixels are stored as `f32`; adversarial pixels are
    /// rounded toward the clean pixel when plain rounding would leave the
    /// ε-ball or `[0, 1]`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: VERSION,
            method: self.config.method,
            config: self.config,
            surrogate_hash: self.surrogate_hash,
            m: self.len(),
            sample_shape: self.x_clean.shape()[1..].to_vec(),
        };
        let eps = self.config.eps;
        let clean32: Vec<f64> = self.x_clean.data().iter().map(|&v| f64::from(v as f32)).collect();
        let adv32: Vec<f64> = self
            .x_adv
            .data()
            .iter()
            .zip(&clean32)
            .map(|(&a, &c)| f64::from(round_into_ball(a, c, eps)))
            .collect();
        let mut payload = Vec::with_capacity(self.x_clean.len() * 8 + self.len() * 4);
        binfmt::push_f32s(&mut payload, &clean32);
        binfmt::push_f32s(&mut payload, &adv32);
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
        if header.method != header.config.method {
            return Err(Error::Header("method disagrees with config.method".into()));
        }
        if header.m == 0 {
            return Err(Error::Header("empty batch".into()));
        }
        let per: usize = header.sample_shape.iter().product();
        let mut shape = vec![header.m];
        shape.extend_from_slice(&header.sample_shape);
        let x_clean = Tensor::new(shape.clone(), r.f32s(header.m * per, "clean inputs")?)?;
        let x_adv = Tensor::new(shape, r.f32s(header.m * per, "adversarial inputs")?)?;
        let labels = r
            .i32s(header.m, "labels")?
            .into_iter()
            .map(|l| usize::try_from(l).map_err(|_| Error::Header(format!("negative label {l}"))))
            .collect::<Result<_>>()?;
        r.finish("labels")?;
        Ok(Self {
            x_clean,
            x_adv,
            labels,
            config: header.config,
            surrogate_hash: header.surrogate_hash,
            degenerate_steps: 0,
        })
    }
}

/// Nearest `f32` to `adv` that stays inside `[c − eps, c + eps] ∩ [0, 1]`,
/// where `c` is already `f32`-exact.
fn round_into_ball(adv: f64, c: f64, eps: f64) -> f32 {
    let lo = (c - eps).max(0.0);
    let hi = (c + eps).min(1.0);
    let mut r = adv.clamp(lo, hi) as f32;
    while f64::from(r) > hi {
        r = r.next_down();
    }
    while f64::from(r) < lo {
        r = r.next_up();
    }
    r
}

pub fn save_batch(batch: &AdversarialBatch, path: impl AsRef<Path>) -> Result<()> {
    binfmt::write_file(path.as_ref(), &batch.to_bytes()?)
}

pub fn load_batch(path: impl AsRef<Path>) -> Result<AdversarialBatch> {
    AdversarialBatch::from_bytes(&binfmt::read_file(path.as_ref())?)
}
