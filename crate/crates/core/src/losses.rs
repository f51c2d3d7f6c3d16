//! Training losses as plain numeric functions, with closed-form directional
//! derivatives for the smooth ones so they can be checked against finite
//! differences.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::grid_ops::{BoolMask, ConfidenceMap, CorrespondenceField, DenseMap};
use crate::planar::{CoplanarSampleSet, IndicatorMatrix};
use crate::Pixel;

/// Log clamp used by both cross-entropy losses.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Pixel set and normaliser of the masked-reconstruction loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MimMode {
    /// Sum over masked pixels, divided by the masked-pixel count.
    #[default]
    MaskedOnly,
    /// Sum over every pixel, divided by the pixel count.
    AllPixels,
}

/// Masked image modeling loss: for every scale, the L1 error of both
/// reconstructions against their targets, normalised per `mode`, summed over
/// scales. The per-pixel L1 norm sums over channels.
pub fn mim_loss(
    recons: &[(DenseMap, DenseMap)],
    targets: (&DenseMap, &DenseMap),
    masked: &BoolMask,
    mode: MimMode,
) -> Result<f64> {
    let (t1, t2) = targets;
    if !t1.same_shape(t2) || masked.height() != t1.height() || masked.width() != t1.width() {
        return Err(shape("targets and mask must share one shape"));
    }
    let pixels: Vec<(usize, usize)> = match mode {
        MimMode::MaskedOnly => masked.positions(),
        MimMode::AllPixels => BoolMask::filled(t1.height(), t1.width(), true).positions(),
    };
    if pixels.is_empty() {
        return Err(Error::EmptySet("reconstruction pixels"));
    }
    let l1 = |a: &DenseMap, b: &DenseMap| -> f64 {
        pixels
            .iter()
            .map(|&(i, j)| {
                a.pixel(i, j)
                    .iter()
                    .zip(b.pixel(i, j))
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f64>()
            })
            .sum()
    };
    let n = pixels.len() as f64;
    let mut total = 0.0;
    for (r1, r2) in recons {
        if !r1.same_shape(t1) || !r2.same_shape(t2) {
            return Err(shape("reconstruction differs in shape from its target"));
        }
        total += (l1(r1, t1) + l1(r2, t2)) / n;
    }
    Ok(total)
}

/// Relative-displacement penalty over co-planar pairs: the mean L1 gap
/// between predicted and ground-truth displacement `T(p) - T(q)`. Both fields
/// are sampled bilinearly at the anchor and candidate. Zero when no pair is
/// co-planar.
pub fn homography_loss(
    pred: &CorrespondenceField,
    gt: &CorrespondenceField,
    indicator: &IndicatorMatrix,
    samples: &CoplanarSampleSet,
) -> Result<f64> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(shape("predicted and ground-truth fields differ in size"));
    }
    if indicator.size() != samples.len() {
        return Err(shape("indicator and samples disagree on K"));
    }
    let lookup = |f: &CorrespondenceField, p: &Pixel| {
        f.sample(p.x, p.y)
            .ok_or_else(|| invalid(format!("no valid correspondence at ({}, {})", p.x, p.y)))
    };
    let (mut sum, mut count) = (0.0, 0usize);
    for (m, row) in indicator.rows.iter().enumerate() {
        let p = &samples.anchors[m];
        if row.len() != samples.candidates[m].len() {
            return Err(shape("indicator row and candidate row differ in length"));
        }
        let mut anchor: Option<(Pixel, Pixel)> = None;
        for (n, on) in row.iter().enumerate() {
            if !*on {
                continue;
            }
            let (tp, gp) = match anchor {
                Some(a) => a,
                None => *anchor.insert((lookup(pred, p)?, lookup(gt, p)?)),
            };
            let q = &samples.candidates[m][n];
            let d = (tp - lookup(pred, q)?) - (gp - lookup(gt, q)?);
            sum += d.x.abs() + d.y.abs();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Positive and negative coarse pairs `(source cell, support cell)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSupervision {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

impl MatchSupervision {
    pub fn new(positives: Vec<(usize, usize)>, negatives: Vec<(usize, usize)>) -> Result<Self> {
        let pos: HashSet<_> = positives.iter().collect();
        if negatives.iter().any(|p| pos.contains(p)) {
            return Err(invalid("positive and negative pairs overlap"));
        }
        Ok(Self {
            positives,
            negatives,
        })
    }

    fn check_bounds(&self, rows: usize, cols: usize) -> Result<()> {
        if self
            .positives
            .iter()
            .chain(&self.negatives)
            .any(|(i, k)| *i >= rows || *k >= cols)
        {
            return Err(shape("supervision pair outside the correlation volume"));
        }
        Ok(())
    }

    /// Supervision from a dense ground-truth field. Source cell `i` on the
    /// `src` grid is positive with support cell `k` on the `dst` grid when the
    /// ground truth at the centre of `i` is valid and falls in cell `k`.
    /// Negatives are all other pairs in the rows and columns that hold a
    /// positive.
    pub fn from_ground_truth(
        gt: &CorrespondenceField,
        src: (usize, usize),
        dst: (usize, usize),
        stride: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(invalid("stride must be positive"));
        }
        let s = stride as f64;
        let mut positives = Vec::new();
        for i in 0..src.0 {
            for j in 0..src.1 {
                let Some(q) = gt.sample(s * (j as f64 + 0.5), s * (i as f64 + 0.5)) else {
                    continue;
                };
                let (col, row) = ((q.x / s).floor(), (q.y / s).floor());
                if col < 0.0 || row < 0.0 || col >= dst.1 as f64 || row >= dst.0 as f64 {
                    continue;
                }
                positives.push((i * src.1 + j, row as usize * dst.1 + col as usize));
            }
        }
        let pos: HashSet<(usize, usize)> = positives.iter().cloned().collect();
        let rows: HashSet<usize> = positives.iter().map(|p| p.0).collect();
        let cols: HashSet<usize> = positives.iter().map(|p| p.1).collect();
        let (n1, n2) = (src.0 * src.1, dst.0 * dst.1);
        let mut negatives = Vec::new();
        for i in 0..n1 {
            for k in 0..n2 {
                if (rows.contains(&i) || cols.contains(&k)) && !pos.contains(&(i, k)) {
                    negatives.push((i, k));
                }
            }
        }
        Ok(Self {
            positives,
            negatives,
        })
    }
}

fn bce_terms(
    positives: impl Iterator<Item = f64>,
    negatives: impl Iterator<Item = f64>,
    eps: f64,
) -> Result<f64> {
    let (mut sp, mut np, mut sn, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for v in positives {
        sp += (v + eps).ln();
        np += 1;
    }
    for v in negatives {
        sn += (1.0 - v + eps).ln();
        nn += 1;
    }
    if np == 0 && nn == 0 {
        return Err(Error::EmptySet("positive and negative sets"));
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(-mean(sp, np) - mean(sn, nn))
}

fn check_probability(v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(format!("score {v} outside [0, 1]")))
    }
}

/// Binary cross-entropy over dual-softmax scores.
pub fn global_matching_loss(
    c_dual: &DMatrix<f64>,
    sup: &MatchSupervision,
    eps: f64,
) -> Result<f64> {
    sup.check_bounds(c_dual.nrows(), c_dual.ncols())?;
    let pos = sup
        .positives
        .iter()
        .map(|p| check_probability(c_dual[*p]))
        .collect::<Result<Vec<_>>>()?;
    let neg = sup
        .negatives
        .iter()
        .map(|p| check_probability(c_dual[*p]))
        .collect::<Result<Vec<_>>>()?;
    bce_terms(pos.into_iter(), neg.into_iter(), eps)
}

fn paired(
    pred: &CorrespondenceField,
    gt: &CorrespondenceField,
    p_plus: &BoolMask,
) -> Result<Vec<(Pixel, Pixel)>> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(shape("predicted and ground-truth fields differ in size"));
    }
    if p_plus.height() != gt.height() || p_plus.width() != gt.width() {
        return Err(shape("P+ mask differs from the field size"));
    }
    let pairs = p_plus
        .positions()
        .into_iter()
        .map(|(i, j)| match (pred.get(i, j), gt.get(i, j)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(invalid(format!(
                "P+ pixel ({i}, {j}) lacks a valid correspondence"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::EmptySet("P+"));
    }
    Ok(pairs)
}

/// Mean end-point error over `P+`.
pub fn refinement_loss(
    pred: &CorrespondenceField,
    gt: &CorrespondenceField,
    p_plus: &BoolMask,
) -> Result<f64> {
    let pairs = paired(pred, gt, p_plus)?;
    Ok(pairs.iter().map(|(a, b)| (a - b).norm()).sum::<f64>() / pairs.len() as f64)
}

/// Directional derivative of [`refinement_loss`] with respect to the
/// predicted field along `direction` (same layout as the field).
pub fn refinement_loss_directional(
    pred: &CorrespondenceField,
    gt: &CorrespondenceField,
    p_plus: &BoolMask,
    direction: &[Pixel],
) -> Result<f64> {
    if direction.len() != pred.height() * pred.width() {
        return Err(shape("direction must have one entry per pixel"));
    }
    let pairs = paired(pred, gt, p_plus)?;
    let w = pred.width();
    let sum: f64 = p_plus
        .positions()
        .into_iter()
        .zip(&pairs)
        .map(|((i, j), (a, b))| {
            let r = a - b;
            let n = r.norm();
            if n == 0.0 {
                0.0
            } else {
                r.dot(&direction[i * w + j]) / n
            }
        })
        .sum();
    Ok(sum / pairs.len() as f64)
}

/// `P-` as the complement of `P+` over pixels with valid source depth.
pub fn default_negative_mask(p_plus: &BoolMask, depth_valid: &BoolMask) -> Result<BoolMask> {
    depth_valid.and_not(p_plus)
}

fn confidence_sets(
    p: &ConfidenceMap,
    p_plus: &BoolMask,
    p_minus: &BoolMask,
) -> Result<(Vec<f64>, Vec<f64>)> {
    for m in [p_plus, p_minus] {
        if m.height() != p.height() || m.width() != p.width() {
            return Err(shape("confidence mask differs from the confidence map"));
        }
    }
    if p_plus.and(p_minus)?.count() > 0 {
        return Err(invalid("P+ and P- overlap"));
    }
    let pos: Vec<f64> = p_plus
        .positions()
        .into_iter()
        .map(|(i, j)| p.get(i, j))
        .collect();
    let neg: Vec<f64> = p_minus
        .positions()
        .into_iter()
        .map(|(i, j)| p.get(i, j))
        .collect();
    if pos.is_empty() {
        return Err(Error::EmptySet("P+"));
    }
    if neg.is_empty() {
        return Err(Error::EmptySet("P-"));
    }
    Ok((pos, neg))
}

/// Binary cross-entropy of the confidence map against `P+` / `P-`.
pub fn confidence_loss(
    p: &ConfidenceMap,
    p_plus: &BoolMask,
    p_minus: &BoolMask,
    eps: f64,
) -> Result<f64> {
    let (pos, neg) = confidence_sets(p, p_plus, p_minus)?;
    bce_terms(pos.into_iter(), neg.into_iter(), eps)
}

/// Directional derivative of [`confidence_loss`] along `direction`.
pub fn confidence_loss_directional(
    p: &ConfidenceMap,
    p_plus: &BoolMask,
    p_minus: &BoolMask,
    eps: f64,
    direction: &[f64],
) -> Result<f64> {
    confidence_sets(p, p_plus, p_minus)?;
    if direction.len() != p.values().len() {
        return Err(shape("direction must have one entry per pixel"));
    }
    let w = p.width();
    let mean = |m: &BoolMask, f: &dyn Fn(f64, f64) -> f64| {
        let pos = m.positions();
        pos.iter()
            .map(|(i, j)| f(p.get(*i, *j), direction[i * w + j]))
            .sum::<f64>()
            / pos.len() as f64
    };
    Ok(-mean(p_plus, &|v, d| d / (v + eps)) + mean(p_minus, &|v, d| d / (1.0 - v + eps)))
}

/// Directional derivative of [`global_matching_loss`] with respect to the
/// scores, along `direction` (same shape as `c_dual`).
pub fn global_matching_loss_directional(
    c_dual: &DMatrix<f64>,
    sup: &MatchSupervision,
    eps: f64,
    direction: &DMatrix<f64>,
) -> Result<f64> {
    sup.check_bounds(c_dual.nrows(), c_dual.ncols())?;
    if direction.shape() != c_dual.shape() {
        return Err(shape("direction must match the score matrix"));
    }
    let mean = |pairs: &[(usize, usize)], f: &dyn Fn(f64, f64) -> f64| {
        if pairs.is_empty() {
            0.0
        } else {
            pairs
                .iter()
                .map(|p| f(c_dual[*p], direction[*p]))
                .sum::<f64>()
                / pairs.len() as f64
        }
    };
    Ok(-mean(&sup.positives, &|v, d| d / (v + eps))
        + mean(&sup.negatives, &|v, d| d / (1.0 - v + eps)))
}

/// Weights of the combined objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub w_c: f64,
    pub w_g: f64,
    pub w_h: f64,
    pub scales: Vec<usize>,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_c: 1.0,
            w_g: 0.7,
            w_h: 0.05,
            scales: vec![1, 2, 4, 8],
        }
    }
}

/// `(1/S) sum_s (L_r + w_c L_c) + w_g L_g + (1/S) w_h sum_s L_h` over the `S`
/// configured scales.
pub fn total_loss(
    refinement: &[f64],
    confidence: &[f64],
    global: f64,
    homography: &[f64],
    weights: &LossWeights,
) -> Result<f64> {
    let s = weights.scales.len();
    if s == 0
        || [refinement.len(), confidence.len(), homography.len()]
            .iter()
            .any(|n| *n != s)
    {
        return Err(invalid(format!(
            "expected {s} per-scale entries for every loss"
        )));
    }
    if [weights.w_c, weights.w_g, weights.w_h]
        .iter()
        .any(|w| *w < 0.0)
    {
        return Err(invalid("loss weights must be non-negative"));
    }
    let per_scale: f64 = refinement
        .iter()
        .zip(confidence)
        .map(|(r, c)| r + weights.w_c * c)
        .sum();
    Ok(per_scale / s as f64
        + weights.w_g * global
        + weights.w_h * homography.iter().sum::<f64>() / s as f64)
}

/// A scalar function of a flat parameter vector with a closed-form
/// directional derivative.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn directional(&self, x: &[f64], direction: &[f64]) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Compares the analytic directional derivative with a central difference of
/// step `h`.
pub fn fd_gradient_check(
    objective: &dyn Objective,
    point: &[f64],
    direction: &[f64],
    h: f64,
) -> GradientCheck {
    let shifted = |s: f64| -> Vec<f64> {
        point
            .iter()
            .zip(direction)
            .map(|(x, d)| x + s * d)
            .collect()
    };
    let numeric = (objective.value(&shifted(h)) - objective.value(&shifted(-h))) / (2.0 * h);
    let analytic = objective.directional(point, direction);
    let scale = analytic.abs().max(numeric.abs());
    let rel_err = if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    };
    GradientCheck {
        analytic,
        numeric,
        rel_err,
    }
}

fn pixels(x: &[f64]) -> Vec<Pixel> {
    x.chunks_exact(2).map(|c| Pixel::new(c[0], c[1])).collect()
}

/// [`refinement_loss`] as a function of the flattened predicted field
/// `[x0, y0, x1, y1, ...]`.
pub struct RefinementObjective {
    pub gt: CorrespondenceField,
    pub p_plus: BoolMask,
}

impl RefinementObjective {
    fn field(&self, x: &[f64]) -> CorrespondenceField {
        CorrespondenceField::new(
            self.gt.height(),
            self.gt.width(),
            pixels(x),
            vec![true; x.len() / 2],
        )
        .expect("flattened field matches ground truth")
    }
}

impl Objective for RefinementObjective {
    fn value(&self, x: &[f64]) -> f64 {
        refinement_loss(&self.field(x), &self.gt, &self.p_plus).expect("valid objective input")
    }

    fn directional(&self, x: &[f64], direction: &[f64]) -> f64 {
        refinement_loss_directional(&self.field(x), &self.gt, &self.p_plus, &pixels(direction))
            .expect("valid objective input")
    }
}

/// [`confidence_loss`] as a function of the flattened confidence map.
pub struct ConfidenceObjective {
    pub height: usize,
    pub width: usize,
    pub p_plus: BoolMask,
    pub p_minus: BoolMask,
    pub eps: f64,
}

impl Objective for ConfidenceObjective {
    fn value(&self, x: &[f64]) -> f64 {
        let p =
            ConfidenceMap::new(self.height, self.width, x.to_vec()).expect("confidence in [0, 1]");
        confidence_loss(&p, &self.p_plus, &self.p_minus, self.eps).expect("valid objective input")
    }

    fn directional(&self, x: &[f64], direction: &[f64]) -> f64 {
        let p =
            ConfidenceMap::new(self.height, self.width, x.to_vec()).expect("confidence in [0, 1]");
        confidence_loss_directional(&p, &self.p_plus, &self.p_minus, self.eps, direction)
            .expect("valid objective input")
    }
}

/// [`global_matching_loss`] as a function of the row-major score matrix.
pub struct GlobalMatchingObjective {
    pub rows: usize,
    pub cols: usize,
    pub supervision: MatchSupervision,
    pub eps: f64,
}

impl Objective for GlobalMatchingObjective {
    fn value(&self, x: &[f64]) -> f64 {
        let c = DMatrix::from_row_slice(self.rows, self.cols, x);
        global_matching_loss(&c, &self.supervision, self.eps).expect("valid objective input")
    }

    fn directional(&self, x: &[f64], direction: &[f64]) -> f64 {
        let c = DMatrix::from_row_slice(self.rows, self.cols, x);
        let d = DMatrix::from_row_slice(self.rows, self.cols, direction);
        global_matching_loss_directional(&c, &self.supervision, self.eps, &d)
            .expect("valid objective input")
    }
}

/// `sum_i a_i x_i^2 + b_i x_i`; central differences are exact on it up to
/// rounding, which makes it a self-test for [`fd_gradient_check`].
pub struct Quadratic {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Objective for Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.a)
            .zip(&self.b)
            .map(|((x, a), b)| a * x * x + b * x)
            .sum()
    }

    fn directional(&self, x: &[f64], direction: &[f64]) -> f64 {
        x.iter()
            .zip(direction)
            .zip(self.a.iter().zip(&self.b))
            .map(|((x, d), (a, b))| (2.0 * a * x + b) * d)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::dual_softmax;
    use crate::planar::CoplanarThresholds;
    use crate::rng;
    use rand::Rng as _;
    use std::f64::consts::LN_2;

    fn field(h: usize, w: usize, f: impl Fn(usize, usize) -> Pixel) -> CorrespondenceField {
        CorrespondenceField::from_fn(h, w, |i, j| Some(f(i, j)))
    }

    #[test]
    fn mim_examples() {
        let t1 = DenseMap::from_fn(4, 4, 1, |i, j, _| (i * 4 + j) as f64).unwrap();
        let t2 = DenseMap::from_fn(4, 4, 1, |i, j, _| (i + 2 * j) as f64).unwrap();
        let full = BoolMask::filled(4, 4, true);
        let exact = vec![(t1.clone(), t2.clone()); 3];
        assert_eq!(
            mim_loss(&exact, (&t1, &t2), &full, MimMode::MaskedOnly).unwrap(),
            0.0
        );
        let plus3 = |m: &DenseMap| {
            DenseMap::new(4, 4, 1, m.values().iter().map(|v| v + 3.0).collect()).unwrap()
        };
        let off = vec![(plus3(&t1), plus3(&t2))];
        assert_eq!(
            mim_loss(&off, (&t1, &t2), &full, MimMode::MaskedOnly).unwrap(),
            6.0
        );
        assert_eq!(
            mim_loss(&off, (&t1, &t2), &full, MimMode::AllPixels).unwrap(),
            6.0
        );
        assert!(mim_loss(
            &off,
            (&t1, &t2),
            &BoolMask::filled(4, 4, false),
            MimMode::MaskedOnly
        )
        .is_err());
        // Errors outside the mask are ignored in masked-only mode.
        let mut half = BoolMask::filled(4, 4, false);
        (0..4).for_each(|j| half.set(0, j, true));
        assert_eq!(
            mim_loss(&off, (&t1, &t2), &half, MimMode::MaskedOnly).unwrap(),
            6.0
        );
    }

    #[test]
    fn mim_normalization_is_size_independent() {
        let (h, w) = (16, 16);
        let target = DenseMap::filled(h, w, 1, 0.0);
        let mut small = BoolMask::filled(h, w, false);
        let mut large = BoolMask::filled(h, w, false);
        for i in 0..h {
            for j in 0..w {
                small.set(i, j, i < 4);
                large.set(i, j, i < 8);
            }
        }
        let mut r = rng::seeded(21);
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..100 {
            let mut noisy =
                || DenseMap::from_fn(h, w, 1, |_, _, _| r.random_range(0.0..1.0)).unwrap();
            let pair = vec![(noisy(), noisy())];
            a += mim_loss(&pair, (&target, &target), &small, MimMode::MaskedOnly).unwrap();
            b += mim_loss(&pair, (&target, &target), &large, MimMode::MaskedOnly).unwrap();
        }
        assert!(((a - b) / b).abs() < 0.05, "{a} vs {b}");
    }

    fn hom_fixture() -> (CorrespondenceField, IndicatorMatrix, CoplanarSampleSet) {
        let gt = field(10, 10, |i, j| {
            Pixel::new(j as f64 * 1.1 + 2.0, i as f64 * 0.9 - 1.0)
        });
        let samples = CoplanarSampleSet {
            anchors: vec![Pixel::new(2.0, 3.0), Pixel::new(5.0, 5.0)],
            candidates: vec![
                vec![Pixel::new(4.0, 4.0), Pixel::new(7.0, 1.0)],
                vec![Pixel::new(1.0, 8.0), Pixel::new(5.0, 5.0)],
            ],
            seed: 0,
        };
        let o = IndicatorMatrix {
            rows: vec![vec![true, false], vec![true, true]],
            thresholds: CoplanarThresholds::default(),
            seed: 0,
        };
        (gt, o, samples)
    }

    #[test]
    fn homography_loss_examples() {
        let (gt, o, s) = hom_fixture();
        assert_eq!(homography_loss(&gt, &gt, &o, &s).unwrap(), 0.0);
        let shifted = field(10, 10, |i, j| gt.get(i, j).unwrap() + Pixel::new(4.5, -2.0));
        assert!(homography_loss(&shifted, &gt, &o, &s).unwrap().abs() < 1e-12);

        // One pair: the anchor's prediction is off by (1, 2) relative to its candidate.
        let single = IndicatorMatrix {
            rows: vec![vec![true, false], vec![false, false]],
            ..o.clone()
        };
        let bumped = field(10, 10, |i, j| {
            gt.get(i, j).unwrap()
                + if (i, j) == (3, 2) {
                    Pixel::new(1.0, 2.0)
                } else {
                    Pixel::zeros()
                }
        });
        assert!((homography_loss(&bumped, &gt, &single, &s).unwrap() - 3.0).abs() < 1e-12);

        let empty = IndicatorMatrix {
            rows: vec![vec![false; 2]; 2],
            ..o
        };
        assert_eq!(homography_loss(&bumped, &gt, &empty, &s).unwrap(), 0.0);
    }

    #[test]
    fn global_matching_examples() {
        let sup = MatchSupervision::new(vec![(0, 0), (1, 1)], vec![(0, 1), (1, 0)]).unwrap();
        let perfect = DMatrix::identity(2, 2);
        assert_eq!(global_matching_loss(&perfect, &sup, 0.0).unwrap(), 0.0);
        let half = DMatrix::from_element(2, 2, 0.5);
        assert!((global_matching_loss(&half, &sup, 0.0).unwrap() - 2.0 * LN_2).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for k in 1..=20 {
            let mut c = half.clone();
            c[(0, 0)] = k as f64 / 20.0;
            let l = global_matching_loss(&c, &sup, DEFAULT_EPS).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(MatchSupervision::new(vec![(0, 0)], vec![(0, 0)]).is_err());
        assert!(global_matching_loss(&half, &MatchSupervision::default(), DEFAULT_EPS).is_err());
        assert!(global_matching_loss(
            &half,
            &MatchSupervision::new(vec![(2, 0)], vec![]).unwrap(),
            0.0
        )
        .is_err());
    }

    #[test]
    fn ground_truth_supervision_beats_random_volumes() {
        let (h, w) = (4, 5);
        let n = h * w;
        let gt = CorrespondenceField::identity(h * 8, w * 8);
        let sup = MatchSupervision::from_ground_truth(&gt, (h, w), (h, w), 8).unwrap();
        assert_eq!(sup.positives, (0..n).map(|i| (i, i)).collect::<Vec<_>>());
        assert_eq!(sup.negatives.len(), n * n - n);
        let aligned = dual_softmax(&(DMatrix::identity(n, n) * 10.0));
        let best = global_matching_loss(&aligned, &sup, DEFAULT_EPS).unwrap();
        let mut r = rng::seeded(22);
        for _ in 0..100 {
            let c = dual_softmax(&DMatrix::from_fn(n, n, |_, _| r.random_range(-10.0..10.0)));
            assert!(global_matching_loss(&c, &sup, DEFAULT_EPS).unwrap() > best);
        }
    }

    #[test]
    fn refinement_examples() {
        let gt = field(4, 6, |i, j| Pixel::new(j as f64 + 0.3, i as f64 - 0.2));
        let full = BoolMask::filled(4, 6, true);
        assert_eq!(refinement_loss(&gt, &gt, &full).unwrap(), 0.0);
        let off = field(4, 6, |i, j| gt.get(i, j).unwrap() + Pixel::new(3.0, 4.0));
        assert!((refinement_loss(&off, &gt, &full).unwrap() - 5.0).abs() < 1e-12);
        let half = field(4, 6, |i, j| {
            gt.get(i, j).unwrap()
                + if i < 2 {
                    Pixel::new(1.0, 0.0)
                } else {
                    Pixel::zeros()
                }
        });
        assert!((refinement_loss(&half, &gt, &full).unwrap() - 0.5).abs() < 1e-12);
        assert!(refinement_loss(&gt, &gt, &BoolMask::filled(4, 6, false)).is_err());
    }

    #[test]
    fn confidence_examples() {
        let mut plus = BoolMask::filled(2, 4, false);
        (0..4).for_each(|j| plus.set(0, j, true));
        let minus = BoolMask::from_fn(2, 4, |i, _| i == 1);
        let ideal = ConfidenceMap::new(2, 4, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(confidence_loss(&ideal, &plus, &minus, 0.0).unwrap(), 0.0);
        let half = ConfidenceMap::filled(2, 4, 0.5).unwrap();
        assert!((confidence_loss(&half, &plus, &minus, 0.0).unwrap() - 2.0 * LN_2).abs() < 1e-12);

        let mut one_zero = ideal.values().to_vec();
        one_zero[0] = 0.0;
        let p = ConfidenceMap::new(2, 4, one_zero).unwrap();
        let l = confidence_loss(&p, &plus, &minus, 1e-6).unwrap();
        let baseline = confidence_loss(&ideal, &plus, &minus, 1e-6).unwrap();
        assert!(l.is_finite());
        assert!(((l - baseline) - 13.815_510_557_964_274 / 4.0).abs() < 1e-6);

        assert!(confidence_loss(&half, &plus, &plus, 0.0).is_err());
        assert!(confidence_loss(&half, &plus, &BoolMask::filled(2, 4, false), 0.0).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(
            total_loss(&[0.0; 4], &[0.0; 4], 0.0, &[0.0; 4], &w).unwrap(),
            0.0
        );
        assert_eq!(
            total_loss(&[1.0; 4], &[0.0; 4], 0.0, &[0.0; 4], &w).unwrap(),
            1.0
        );
        assert!(
            (total_loss(&[0.0; 4], &[0.0; 4], 2.0, &[0.0; 4], &w).unwrap() - 1.4).abs() < 1e-15
        );
        assert!(total_loss(&[0.0; 3], &[0.0; 4], 0.0, &[0.0; 4], &w).is_err());
    }

    #[test]
    fn gradient_checks() {
        let mut r = rng::seeded(23);
        let quad = Quadratic {
            a: (0..5).map(|_| r.random_range(-2.0..2.0)).collect(),
            b: (0..5).map(|_| r.random_range(-2.0..2.0)).collect(),
        };
        let x: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let d: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        assert!(fd_gradient_check(&quad, &x, &d, 1e-3).rel_err < 1e-10);

        let gt = field(3, 4, |i, j| Pixel::new(j as f64, i as f64));
        let refine = RefinementObjective {
            gt,
            p_plus: BoolMask::filled(3, 4, true),
        };
        let x: Vec<f64> = refine
            .gt
            .coords()
            .iter()
            .flat_map(|p| {
                [
                    p.x + r.random_range(-3.0..3.0),
                    p.y + r.random_range(-3.0..3.0),
                ]
            })
            .collect();
        let d: Vec<f64> = (0..24).map(|_| r.random_range(-1.0..1.0)).collect();
        assert!(fd_gradient_check(&refine, &x, &d, 1e-5).rel_err < 1e-4);

        let conf = ConfidenceObjective {
            height: 3,
            width: 4,
            p_plus: BoolMask::from_fn(3, 4, |i, _| i == 0),
            p_minus: BoolMask::from_fn(3, 4, |i, _| i > 0),
            eps: DEFAULT_EPS,
        };
        let x: Vec<f64> = (0..12).map(|_| r.random_range(0.1..0.9)).collect();
        let d: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        assert!(fd_gradient_check(&conf, &x, &d, 1e-5).rel_err < 1e-4);
    }
}
