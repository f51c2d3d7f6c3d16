//! Patch masks for paired masked image modeling.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::grid_ops::{BoolMask, DenseMap};
use crate::matching::FeatureVolume;
use crate::rng;

pub const DEFAULT_PATCH: usize = 32;
pub const DEFAULT_RATIO: f64 = 0.75;
/// Scale of the feature map that gets masked.
pub const MASK_SCALE: usize = 2;

/// A random selection of `patch x patch` cells over an image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchMask {
    pub image_h: usize,
    pub image_w: usize,
    pub patch: usize,
    pub ratio: f64,
    /// Selected cell indices (row-major over the cell grid), ascending.
    pub selected: Vec<usize>,
    pub seed: u64,
}

impl PatchMask {
    pub fn grid(&self) -> (usize, usize) {
        (self.image_h / self.patch, self.image_w / self.patch)
    }

    pub fn cells(&self) -> usize {
        let (r, c) = self.grid();
        r * c
    }
}

/// Selects `round(ratio * cells)` distinct cells (halves round up), uniformly
/// at random for the given seed.
pub fn gen_mask(
    image_h: usize,
    image_w: usize,
    patch: usize,
    ratio: f64,
    seed: u64,
) -> Result<PatchMask> {
    if patch == 0 || !image_h.is_multiple_of(patch) || !image_w.is_multiple_of(patch) {
        return Err(invalid(format!(
            "patch {patch} must divide {image_h}x{image_w}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid(format!("mask ratio {ratio} must lie in (0, 1)")));
    }
    let cells = (image_h / patch) * (image_w / patch);
    let count = (ratio * cells as f64 + 0.5).floor() as usize;
    let mut selected = index::sample(&mut rng::seeded(seed), cells, count.min(cells)).into_vec();
    selected.sort_unstable();
    Ok(PatchMask {
        image_h,
        image_w,
        patch,
        ratio,
        selected,
        seed,
    })
}

/// Masks for both images of a pair. Unless `shared`, the second image gets
/// its own mask from a seed derived from `seed`.
pub fn gen_mask_pair(
    image_h: usize,
    image_w: usize,
    patch: usize,
    ratio: f64,
    seed: u64,
    shared: bool,
) -> Result<(PatchMask, PatchMask)> {
    let first = gen_mask(image_h, image_w, patch, ratio, seed)?;
    let second = if shared {
        first.clone()
    } else {
        gen_mask(
            image_h,
            image_w,
            patch,
            ratio,
            rng::substream(seed, 1).random(),
        )?
    };
    Ok((first, second))
}

/// The mask at `1/scale` resolution: every selected cell becomes a block of
/// `(patch / scale)^2` set entries.
pub fn mask_at_scale(mask: &PatchMask, scale: usize) -> Result<BoolMask> {
    if scale == 0 || !mask.patch.is_multiple_of(scale) {
        return Err(invalid(format!(
            "scale {scale} must divide patch {}",
            mask.patch
        )));
    }
    let block = mask.patch / scale;
    let (_, grid_w) = mask.grid();
    let mut out = BoolMask::filled(mask.image_h / scale, mask.image_w / scale, false);
    for &cell in &mask.selected {
        let (ci, cj) = (cell / grid_w, cell % grid_w);
        for i in ci * block..(ci + 1) * block {
            for j in cj * block..(cj + 1) * block {
                out.set(i, j, true);
            }
        }
    }
    Ok(out)
}

/// `f * (1 - w) + token * w` per pixel: masked pixels are replaced by `token`.
pub fn apply_mask(map: &DenseMap, mask: &BoolMask, token: &[f64]) -> Result<DenseMap> {
    if mask.height() != map.height() || mask.width() != map.width() {
        return Err(shape("mask does not match the map size"));
    }
    if token.len() != map.channels() {
        return Err(shape(format!(
            "token has {} entries for {} channels",
            token.len(),
            map.channels()
        )));
    }
    let mut out = map.clone();
    for (i, j) in mask.positions() {
        out.pixel_mut(i, j).copy_from_slice(token);
    }
    Ok(out)
}

pub fn apply_mask_features(
    f: &FeatureVolume,
    mask: &BoolMask,
    token: &[f64],
) -> Result<FeatureVolume> {
    Ok(FeatureVolume::from_map(apply_mask(
        f.as_map(),
        mask,
        token,
    )?))
}

/// JSON sidecar written next to a mask file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSidecar {
    pub seed: u64,
    pub ratio: f64,
    pub patch: usize,
    pub selected: Vec<usize>,
}

impl From<&PatchMask> for MaskSidecar {
    fn from(m: &PatchMask) -> Self {
        Self {
            seed: m.seed,
            ratio: m.ratio,
            patch: m.patch,
            selected: m.selected.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configuration_masks_48_cells() {
        let m = gen_mask(256, 256, 32, 0.75, 0).unwrap();
        assert_eq!(m.cells(), 64);
        assert_eq!(m.selected.len(), 48);
        let s2 = mask_at_scale(&m, 2).unwrap();
        assert_eq!((s2.height(), s2.width()), (128, 128));
        assert_eq!(s2.count(), 48 * 16 * 16);
        assert_eq!(mask_at_scale(&m, 1).unwrap().count(), 48 * 32 * 32);
        assert_eq!(mask_at_scale(&m, 32).unwrap().count(), 48);
        assert!(mask_at_scale(&m, 3).is_err());
        assert!(mask_at_scale(&m, 0).is_err());
    }

    #[test]
    fn minimal_and_invalid_masks() {
        let m = gen_mask(64, 64, 32, 0.2, 1).unwrap();
        assert_eq!(m.selected.len(), 1);
        // 0.125 * 4 = 0.5 rounds up.
        assert_eq!(gen_mask(64, 64, 32, 0.125, 1).unwrap().selected.len(), 1);
        assert!(gen_mask(100, 64, 32, 0.5, 0).is_err());
        assert!(gen_mask(64, 64, 0, 0.5, 0).is_err());
        assert!(gen_mask(64, 64, 32, 0.0, 0).is_err());
        assert!(gen_mask(64, 64, 32, 1.0, 0).is_err());
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let mut distinct = std::collections::HashSet::new();
        for seed in 0..100 {
            let a = gen_mask(256, 256, 32, 0.75, seed).unwrap();
            assert_eq!(a, gen_mask(256, 256, 32, 0.75, seed).unwrap());
            distinct.insert(a.selected);
        }
        assert!(distinct.len() > 95);
    }

    #[test]
    fn selection_is_uniform() {
        let trials = 10_000;
        let mut freq = [0usize; 64];
        for seed in 0..trials {
            for c in gen_mask(256, 256, 32, 0.75, seed as u64).unwrap().selected {
                freq[c] += 1;
            }
        }
        let sigma = (0.75 * 0.25 / trials as f64).sqrt();
        for f in freq {
            assert!((f as f64 / trials as f64 - 0.75).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn pair_masks() {
        let (a, b) = gen_mask_pair(128, 128, 32, 0.5, 3, false).unwrap();
        assert_ne!(a.selected, b.selected);
        let (a, b) = gen_mask_pair(128, 128, 32, 0.5, 3, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn apply_examples() {
        let f = DenseMap::from_fn(4, 6, 2, |i, j, c| (i * 10 + j + c * 100) as f64).unwrap();
        let token = [-1.0, -2.0];
        assert_eq!(
            apply_mask(&f, &BoolMask::filled(4, 6, false), &token).unwrap(),
            f
        );
        let all = apply_mask(&f, &BoolMask::filled(4, 6, true), &token).unwrap();
        assert!(all.values().chunks(2).all(|c| c == token));
        let half = BoolMask::from_fn(4, 6, |_, j| j < 3);
        let out = apply_mask(&f, &half, &token).unwrap();
        for i in 0..4 {
            for j in 0..6 {
                let expected: &[f64] = if j < 3 { &token } else { f.pixel(i, j) };
                assert_eq!(out.pixel(i, j), expected);
            }
        }
        assert_eq!(apply_mask(&out, &half, &token).unwrap(), out);
        assert!(apply_mask(&f, &half, &[0.0]).is_err());
        assert!(apply_mask(&f, &BoolMask::filled(3, 6, true), &token).is_err());
    }
}
