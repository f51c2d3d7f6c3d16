//! Dense-grid primitives: maps, fields, masks, bilinear sampling, warping and
//! image-similarity metrics.

mod io;
mod metrics;
mod sample;
mod warp;

pub use io::{
    decode_dense_map, decode_mask, decode_masked_map, read_dense_map, read_header, read_mask,
    read_masked_map, write_dense_map, write_dense_map_with, write_mask, write_masked_map, Dtype,
    MapHeader, MAX_ELEMENTS, MAX_HEADER_BYTES,
};
pub use metrics::{
    recon_metrics, ssim_map, ReconMetrics, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW,
};
pub(crate) use sample::Stencil;
pub use sample::{bilinear_sample, BorderPolicy, Samples};
pub use warp::{fb_consistency, warp_reconstruct, WHITE};

use crate::error::{invalid, shape, Error, Result};
use crate::Pixel;

/// Row-major real-valued map with channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMap {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl DenseMap {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| invalid("map dimensions overflow"))?;
        if values.len() != expected {
            return Err(shape(format!(
                "{height}x{width}x{channels} map needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("map value {v} is not finite")));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            height,
            width,
            channels,
            values: vec![value; height * width * channels],
        }
    }

    /// Builds a map by evaluating `f(row, col, channel)` at every element.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    values.push(f(i, j, c));
                }
            }
        }
        Self::new(height, width, channels, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.width + col) * self.channels + channel]
    }

    /// All channels of pixel `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub(crate) fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.channels;
        &mut self.values[start..start + self.channels]
    }

    pub fn same_shape(&self, other: &DenseMap) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }
}

/// Per-pixel boolean map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoolMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BoolMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(shape(format!(
                "{height}x{width} mask needs {} bits, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            bits: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                bits.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// `(row, col)` of every set pixel in row-major order.
    pub fn positions(&self) -> Vec<(usize, usize)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(k, _)| (k / self.width, k % self.width))
            .collect()
    }

    pub fn and(&self, other: &BoolMask) -> Result<BoolMask> {
        self.zip(other, |a, b| a && b)
    }

    pub fn and_not(&self, other: &BoolMask) -> Result<BoolMask> {
        self.zip(other, |a, b| a && !b)
    }

    fn zip(&self, other: &BoolMask, f: impl Fn(bool, bool) -> bool) -> Result<BoolMask> {
        if self.height != other.height || self.width != other.width {
            return Err(shape("mask dimensions differ"));
        }
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(BoolMask {
            height: self.height,
            width: self.width,
            bits,
        })
    }
}

/// Per-pixel support-frame coordinates with a validity bit.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceField {
    height: usize,
    width: usize,
    coords: Vec<Pixel>,
    valid: Vec<bool>,
}

impl CorrespondenceField {
    pub fn new(height: usize, width: usize, coords: Vec<Pixel>, valid: Vec<bool>) -> Result<Self> {
        if coords.len() != height * width || valid.len() != height * width {
            return Err(shape("correspondence field buffers do not match its size"));
        }
        if coords
            .iter()
            .zip(&valid)
            .any(|(c, v)| *v && !(c.x.is_finite() && c.y.is_finite()))
        {
            return Err(invalid("valid correspondence with non-finite coordinates"));
        }
        Ok(Self {
            height,
            width,
            coords,
            valid,
        })
    }

    /// The field mapping every pixel to itself.
    pub fn identity(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |i, j| Some(Pixel::new(j as f64, i as f64)))
    }

    /// Builds a field from `f(row, col)`; `None` marks the pixel invalid.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Option<Pixel>,
    ) -> Self {
        let mut coords = Vec::with_capacity(height * width);
        let mut valid = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                match f(i, j) {
                    Some(p) if p.x.is_finite() && p.y.is_finite() => {
                        coords.push(p);
                        valid.push(true);
                    }
                    _ => {
                        coords.push(Pixel::zeros());
                        valid.push(false);
                    }
                }
            }
        }
        Self {
            height,
            width,
            coords,
            valid,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coords(&self) -> &[Pixel] {
        &self.coords
    }

    pub fn valid_bits(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Pixel> {
        let k = row * self.width + col;
        self.valid[k].then_some(self.coords[k])
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.width + col]
    }

    pub fn valid_mask(&self) -> BoolMask {
        BoolMask {
            height: self.height,
            width: self.width,
            bits: self.valid.clone(),
        }
    }

    /// Bilinear lookup of the field at a continuous position. Returns `None`
    /// outside the grid or when a texel with nonzero weight is invalid.
    pub fn sample(&self, x: f64, y: f64) -> Option<Pixel> {
        let st = sample::Stencil::new(x, y, self.width, self.height)?;
        let mut acc = Pixel::zeros();
        for (row, col, w) in st.taps() {
            if w == 0.0 {
                continue;
            }
            let k = row * self.width + col;
            if !self.valid[k] {
                return None;
            }
            acc += self.coords[k] * w;
        }
        Some(acc)
    }

    /// Splits the field into a 2-channel map and its validity mask. Invalid
    /// pixels carry zeros.
    pub fn to_map(&self) -> (DenseMap, BoolMask) {
        let values = self.coords.iter().flat_map(|c| [c.x, c.y]).collect();
        (
            DenseMap {
                height: self.height,
                width: self.width,
                channels: 2,
                values,
            },
            self.valid_mask(),
        )
    }

    pub fn from_map(map: &DenseMap, valid: &BoolMask) -> Result<Self> {
        if map.channels != 2 {
            return Err(shape("correspondence map must have 2 channels"));
        }
        if map.height != valid.height || map.width != valid.width {
            return Err(shape("correspondence map and mask differ in size"));
        }
        let coords = map
            .values
            .chunks_exact(2)
            .map(|c| Pixel::new(c[0], c[1]))
            .collect();
        Self::new(map.height, map.width, coords, valid.bits.clone())
    }
}

/// Per-pixel confidence in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ConfidenceMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(shape("confidence buffer does not match its size"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("confidence {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

fn check_finite(x: f64, y: f64) -> Result<()> {
    if x.is_finite() && y.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteCoordinate { x, y })
    }
}
