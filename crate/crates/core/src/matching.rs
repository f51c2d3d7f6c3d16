//! Coarse matching math: correlation volumes, softmax matching, positional
//! embeddings, dual-softmax and mutual nearest neighbours.
//!
//! Coarse cells are flattened row-major, `index = row * width + col`, on both
//! sides of a correlation volume.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde_json::Value;

use crate::error::{invalid, shape, Error, Result};
use crate::grid_ops::{self, CorrespondenceField, DenseMap, Dtype};
use crate::Pixel;

/// Softmax temperature.
pub const DEFAULT_GAMMA: f64 = 0.1;
/// Width of the positional embedding.
pub const DEFAULT_POS_DIM: usize = 128;
/// Coarse matching stride in pixels.
pub const COARSE_STRIDE: usize = 8;

/// Feature vectors on a coarse grid, one `dim`-vector per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume(DenseMap);

impl FeatureVolume {
    pub fn new(height: usize, width: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        Ok(Self(DenseMap::new(height, width, dim, values)?))
    }

    pub fn from_map(map: DenseMap) -> Self {
        Self(map)
    }

    pub fn as_map(&self) -> &DenseMap {
        &self.0
    }

    pub fn into_map(self) -> DenseMap {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn dim(&self) -> usize {
        self.0.channels()
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.0.height() * self.0.width()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature vector of flattened cell `index`.
    pub fn cell(&self, index: usize) -> &[f64] {
        let d = self.dim();
        &self.0.values()[index * d..(index + 1) * d]
    }
}

/// Raw-patch descriptors: every `stride x stride` block of `image` becomes
/// one zero-mean, unit-norm vector (all zeros for a flat block). Trailing
/// rows and columns that do not fill a block are dropped.
pub fn patch_features(image: &DenseMap, stride: usize) -> Result<FeatureVolume> {
    if stride == 0 {
        return Err(invalid("patch stride must be positive"));
    }
    let (h, w, c) = (
        image.height() / stride,
        image.width() / stride,
        image.channels(),
    );
    let dim = stride * stride * c;
    let mut values = Vec::with_capacity(h * w * dim);
    for ci in 0..h {
        for cj in 0..w {
            let start = values.len();
            for di in 0..stride {
                for dj in 0..stride {
                    values.extend_from_slice(image.pixel(ci * stride + di, cj * stride + dj));
                }
            }
            let cell = &mut values[start..];
            let mean = cell.iter().sum::<f64>() / dim as f64;
            cell.iter_mut().for_each(|v| *v -= mean);
            let norm = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                cell.iter_mut().for_each(|v| *v /= norm);
            } else {
                cell.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    FeatureVolume::new(h, w, dim, values)
}

/// Scaled inner products between every source cell and every support cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationVolume {
    pub matrix: DMatrix<f64>,
    pub gamma: f64,
}

/// `C[i][k] = <f1_i, f2_k> / gamma`.
pub fn correlation_volume(
    f1: &FeatureVolume,
    f2: &FeatureVolume,
    gamma: f64,
) -> Result<CorrelationVolume> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("temperature {gamma} must be positive")));
    }
    if f1.dim() != f2.dim() {
        return Err(shape("feature volumes differ in dimension"));
    }
    let d = f1.dim();
    let a = DMatrix::from_row_slice(f1.len(), d, f1.as_map().values());
    let b = DMatrix::from_row_slice(f2.len(), d, f2.as_map().values());
    let matrix = (a * b.transpose()) / gamma;
    Ok(CorrelationVolume { matrix, gamma })
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax, stabilised by subtracting each row's maximum.
pub fn softmax_rows(c: &DMatrix<f64>) -> DMatrix<f64> {
    softmax_cols(&c.transpose()).transpose()
}

fn softmax_cols(c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = c.clone();
    let n = out.nrows().max(1);
    // Storage is column-major, so each chunk is one column.
    for col in out.as_mut_slice().chunks_mut(n) {
        softmax_in_place(col);
    }
    out
}

/// Coarse cell centres in full-resolution pixels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordGrid(pub Vec<Pixel>);

impl CoordGrid {
    /// Centres `(stride * (col + 0.5), stride * (row + 0.5))` of an
    /// `height x width` grid.
    pub fn cell_centers(height: usize, width: usize, stride: usize) -> Self {
        let s = stride as f64;
        Self(
            (0..height)
                .flat_map(|i| {
                    (0..width).map(move |j| Pixel::new(s * (j as f64 + 0.5), s * (i as f64 + 0.5)))
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn translated(&self, offset: Pixel) -> Self {
        Self(self.0.iter().map(|p| p + offset).collect())
    }
}

/// Expected support coordinate under each softmax row: `T[i] = sum_k C[i][k] X[k]`.
/// The result is laid out on the `height x width` source grid.
pub fn coarse_match_naive(
    c_soft: &DMatrix<f64>,
    grid: &CoordGrid,
    height: usize,
    width: usize,
) -> Result<CorrespondenceField> {
    if c_soft.ncols() != grid.len() {
        return Err(shape("softmax columns must match the support grid"));
    }
    if c_soft.nrows() != height * width {
        return Err(shape("softmax rows must match the source grid"));
    }
    Ok(CorrespondenceField::from_fn(height, width, |i, j| {
        let row = c_soft.row(i * width + j);
        let mut acc = Pixel::zeros();
        for (w, x) in row.iter().zip(&grid.0) {
            acc += x * *w;
        }
        Some(acc)
    }))
}

/// Sine/cosine embedding of a scalar into `dim` channels: pairs
/// `(sin(w_g v), cos(w_g v))` with `w_g = 10000^(-g / (dim / 2))`.
pub fn embed_1d(v: f64, dim: usize) -> Vec<f64> {
    let groups = dim / 2;
    (0..groups)
        .flat_map(|g| {
            let freq = 10_000f64.powf(-(g as f64) / groups as f64);
            let phase = v * freq;
            [phase.sin(), phase.cos()]
        })
        .collect()
}

/// Positional embedding of every grid coordinate: the first half of each
/// row embeds `x`, the second half embeds `y`.
pub fn positional_embedding(grid: &CoordGrid, dim: usize) -> Result<DMatrix<f64>> {
    if dim == 0 || !dim.is_multiple_of(4) {
        return Err(invalid(format!(
            "embedding width {dim} must be a positive multiple of 4"
        )));
    }
    let half = dim / 2;
    let mut out = DMatrix::zeros(grid.len(), dim);
    for (r, p) in grid.0.iter().enumerate() {
        for (c, v) in embed_1d(p.x, half)
            .into_iter()
            .chain(embed_1d(p.y, half))
            .enumerate()
        {
            out[(r, c)] = v;
        }
    }
    Ok(out)
}

/// Correlation-weighted mixture of candidate embeddings, `C_soft * M`.
pub fn aggregate_embedded(c_soft: &DMatrix<f64>, embedding: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c_soft.ncols() != embedding.nrows() {
        return Err(shape(format!(
            "cannot mix {} candidates with {} embedding rows",
            c_soft.ncols(),
            embedding.nrows()
        )));
    }
    Ok(c_soft * embedding)
}

/// Elementwise product of the row-wise and column-wise softmax of `c`.
pub fn dual_softmax(c: &DMatrix<f64>) -> DMatrix<f64> {
    softmax_rows(c).component_mul(&softmax_cols(c))
}

/// A mutual nearest-neighbour pair.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Match {
    pub source: usize,
    pub target: usize,
    pub score: f64,
}

// First index of the maximum; NaN never wins.
fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Pairs `(i, k)` where `k` is the argmax of row `i`, `i` is the argmax of
/// column `k`, and the score is at least `score_min`. Ties go to the lowest
/// index. Output is ordered by source index.
pub fn mutual_nn_matches(c_dual: &DMatrix<f64>, score_min: f64) -> Vec<Match> {
    let col_best: Vec<Option<usize>> = c_dual
        .column_iter()
        .map(|c| argmax(c.iter().cloned()))
        .collect();
    c_dual
        .row_iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let k = argmax(row.iter().cloned())?;
            let score = row[k];
            (col_best[k] == Some(i) && score >= score_min).then_some(Match {
                source: i,
                target: k,
                score,
            })
        })
        .collect()
}

/// Writes a correlation volume as a single-channel map whose header also
/// carries `n` and `gamma`.
pub fn write_correlation<W: Write>(w: &mut W, volume: &CorrelationVolume) -> Result<()> {
    let (rows, cols) = volume.matrix.shape();
    let values = volume.matrix.transpose().as_slice().to_vec();
    let map = DenseMap::new(rows, cols, 1, values)?;
    let mut extra = BTreeMap::new();
    extra.insert("n".to_string(), Value::from(rows));
    extra.insert("gamma".to_string(), Value::from(volume.gamma));
    grid_ops::write_dense_map_with(w, &map, Dtype::F32, extra)
}

pub fn read_correlation<R: BufRead>(r: &mut R) -> Result<CorrelationVolume> {
    let (header, map) = grid_ops::read_dense_map(r)?;
    let gamma = header
        .extra
        .get("gamma")
        .and_then(Value::as_f64)
        .filter(|g| *g > 0.0)
        .ok_or_else(|| Error::Format("correlation header needs a positive gamma".into()))?;
    if map.channels() != 1 {
        return Err(Error::Format(
            "correlation volumes are single-channel".into(),
        ));
    }
    if header.extra.get("n").and_then(Value::as_u64) != Some(map.height() as u64) {
        return Err(Error::Format(
            "correlation header n must equal the row count".into(),
        ));
    }
    Ok(CorrelationVolume {
        matrix: DMatrix::from_row_slice(map.height(), map.width(), map.values()),
        gamma,
    })
}
