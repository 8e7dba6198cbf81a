use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Split, CLASSES, SIDE};
use crate::error::{Error, Result};
use crate::hash::{derive_seed, rng};
use crate::tensor::Tensor;

/// Shape classes, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Glyph {
    Square = 0,
    Disk = 1,
    Cross = 2,
    Triangle = 3,
}

impl Glyph {
    pub const ALL: [Glyph; CLASSES] = [Glyph::Square, Glyph::Disk, Glyph::Cross, Glyph::Triangle];

    /// Whether the pixel centre `(px, py)` lies inside a glyph of extent
    /// `size` centred at `(cx, cy)`.
    fn covers(self, px: f64, py: f64, cx: f64, cy: f64, size: f64) -> bool {
        let (dx, dy) = (px - cx, py - cy);
        let half = size / 2.0;
        match self {
            Glyph::Square => dx.abs() <= half && dy.abs() <= half,
            Glyph::Disk => dx * dx + dy * dy <= half * half,
            Glyph::Cross => {
                let arm = (size / 4.0).max(2.0) / 2.0;
                (dx.abs() <= arm && dy.abs() <= half) || (dy.abs() <= arm && dx.abs() <= half)
            }
            Glyph::Triangle => {
                // apex up, base along the bottom edge
                let depth = dy + half;
                (0.0..=size).contains(&depth) && dx.abs() <= depth / 2.0
            }
        }
    }
}

pub const MAX_SHIFT: f64 = 3.0;
pub const MIN_SIZE: f64 = 6.0;
pub const MAX_SIZE: f64 = 12.0;
pub const MIN_INTENSITY: f64 = 0.6;
pub const NOISE_AMPLITUDE: f64 = 0.1;

fn render(glyph: Glyph, r: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    let centre = (SIDE as f64 - 1.0) / 2.0;
    let cx = centre + r.random_range(-MAX_SHIFT..=MAX_SHIFT);
    let cy = centre + r.random_range(-MAX_SHIFT..=MAX_SHIFT);
    let size = r.random_range(MIN_SIZE..=MAX_SIZE);
    let intensity = r.random_range(MIN_INTENSITY..=1.0);
    for py in 0..SIDE {
        for px in 0..SIDE {
            let fg = if glyph.covers(px as f64, py as f64, cx, cy, size) {
                intensity
            } else {
                0.0
            };
            let noise = r.random_range(-NOISE_AMPLITUDE..=NOISE_AMPLITUDE);
            // stored as f32 on disk; keep values exactly representable
            out.push(f64::from(((fg + noise).clamp(0.0, 1.0)) as f32));
        }
    }
}

fn generate(seed: u64, split: Split, m: usize) -> Result<Dataset> {
    let mut r = rng(derive_seed(seed, split.sub_seed_stage(), 0));
    let mut labels: Vec<usize> = (0..m).map(|i| i % CLASSES).collect();
    labels.shuffle(&mut r);
    let mut pixels = Vec::with_capacity(m * SIDE * SIDE);
    for &label in &labels {
        render(Glyph::ALL[label], &mut r, &mut pixels);
    }
    let images = Tensor::new(vec![m, 1, SIDE, SIDE], pixels)?;
    Ok(Dataset {
        images,
        labels,
        split,
        seed,
    })
}

/// Train and test glyph datasets, fully determined by `seed`; the two
/// splits draw from independent sub-seeds.
pub fn gen_glyphs(seed: u64, n_train: usize, n_test: usize) -> Result<(Dataset, Dataset)> {
    if n_train < CLASSES || n_test < CLASSES {
        return Err(Error::InvalidArgument(format!(
            "need at least {CLASSES} samples per split, got train={n_train} test={n_test}"
        )));
    }
    Ok((
        generate(seed, Split::Train, n_train)?,
        generate(seed, Split::Test, n_test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::fnv1a;

    fn image_hash(d: &Dataset) -> u64 {
        let bytes: Vec<u8> = d.images.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        fnv1a(&bytes)
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = gen_glyphs(3, 40, 12).unwrap();
        let b = gen_glyphs(3, 40, 12).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn balanced_classes() {
        let (train, test) = gen_glyphs(7, 4000, 1000).unwrap();
        assert_eq!(train.class_counts(), vec![1000; 4]);
        assert_eq!(test.class_counts(), vec![250; 4]);
        let (odd, _) = gen_glyphs(7, 10, 4).unwrap();
        let counts = odd.class_counts();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn different_seeds_differ() {
        let (a, _) = gen_glyphs(7, 100, 4).unwrap();
        let (b, _) = gen_glyphs(8, 100, 4).unwrap();
        assert_ne!(image_hash(&a), image_hash(&b));
    }

    #[test]
    fn splits_use_disjoint_streams() {
        let (train, test) = gen_glyphs(7, 8, 8).unwrap();
        assert_ne!(image_hash(&train), image_hash(&test));
    }

    #[test]
    fn pixels_in_unit_range() {
        let (train, _) = gen_glyphs(11, 200, 4).unwrap();
        assert!(train.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn too_few_samples_is_an_error() {
        assert!(gen_glyphs(1, 3, 10).is_err());
        assert!(gen_glyphs(1, 10, 3).is_err());
    }

    #[test]
    fn glyph_masks_are_distinct() {
        let c = 7.5;
        let mask = |g: Glyph| -> Vec<bool> {
            (0..SIDE * SIDE)
                .map(|i| g.covers((i % SIDE) as f64, (i / SIDE) as f64, c, c, 10.0))
                .collect()
        };
        let masks: Vec<_> = Glyph::ALL.iter().map(|&g| mask(g)).collect();
        for i in 0..CLASSES {
            assert!(masks[i].iter().any(|&b| b));
            for j in i + 1..CLASSES {
                assert_ne!(masks[i], masks[j]);
            }
        }
    }
}
