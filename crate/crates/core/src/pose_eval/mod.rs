//! Relative pose from correspondences and the evaluation metrics built on it.

pub mod eight_point;
pub mod five_point;
mod homography;
mod metrics;
mod refine;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use homography::{
    apply_homography, estimate_homography_ransac, homography_corner_error, homography_dlt,
};
pub use metrics::{auc, map_at, pck, pose_error, ErrorCurve, PoseError};

use crate::camera::Intrinsics;
use crate::error::invalid;
use crate::{rng, Error, Pixel, Result};

/// `(source pixel, target pixel)`.
pub type PixelMatch = (Pixel, Pixel);

pub const DEFAULT_INLIER_PX: f64 = 1.0;
pub const DEFAULT_MAX_ITERS: usize = 2000;
pub const DEFAULT_CONFIDENCE: f64 = 0.9999;
/// Median rotation-compensated ray angle below which the baseline is treated
/// as zero.
pub const MIN_PARALLAX_RAD: f64 = 1e-4;

/// Essential matrix scaled to singular values `(1, 1, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssentialMatrix(Matrix3<f64>);

impl EssentialMatrix {
    /// Projects `m` onto the essential manifold.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        eight_point::project_essential(m)
            .map(Self)
            .ok_or_else(|| Error::Degenerate("matrix has rank below 2".into()))
    }

    /// `[t]x R`.
    pub fn from_pose(rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Result<Self> {
        Self::from_matrix(&(skew(translation) * rotation))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

impl std::ops::Neg for EssentialMatrix {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

pub(crate) fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimalSolver {
    #[default]
    FivePoint,
    EightPoint,
}

impl MinimalSolver {
    pub fn sample_size(self) -> usize {
        match self {
            MinimalSolver::FivePoint => 5,
            MinimalSolver::EightPoint => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacParams {
    pub inlier_px: f64,
    pub max_iters: usize,
    pub confidence: f64,
    pub solver: MinimalSolver,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_px: DEFAULT_INLIER_PX,
            max_iters: DEFAULT_MAX_ITERS,
            confidence: DEFAULT_CONFIDENCE,
            solver: MinimalSolver::FivePoint,
        }
    }
}

pub(crate) fn required_iterations(inlier_frac: f64, sample: usize, confidence: f64) -> usize {
    let good = inlier_frac.powi(sample as i32);
    if good >= 1.0 {
        return 0;
    }
    if good <= 0.0 {
        return usize::MAX;
    }
    let k = (1.0 - confidence).ln() / (1.0 - good).ln();
    if k.is_finite() {
        k.ceil().max(0.0) as usize
    } else {
        usize::MAX
    }
}

/// Squared Sampson distance of a normalised correspondence.
pub fn sampson_sq(e: &Matrix3<f64>, x1: &Vector3<f64>, x2: &Vector3<f64>) -> f64 {
    let ex1 = e * x1;
    let etx2 = e.transpose() * x2;
    let r = x2.dot(&ex1);
    let denom = ex1.x * ex1.x + ex1.y * ex1.y + etx2.x * etx2.x + etx2.y * etx2.y;
    if denom > 0.0 {
        r * r / denom
    } else if r == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn distinct_count(points: &[Vector3<f64>], limit: usize) -> usize {
    let mut seen: Vec<&Vector3<f64>> = Vec::new();
    for p in points {
        if seen.iter().all(|q| (*q - p).norm() > 1e-12) {
            seen.push(p);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

struct Scored {
    e: Matrix3<f64>,
    count: usize,
    err: f64,
}

impl Scored {
    fn beats(&self, other: &Scored) -> bool {
        self.count > other.count || (self.count == other.count && self.err < other.err)
    }
}

fn score(e: Matrix3<f64>, x1: &[Vector3<f64>], x2: &[Vector3<f64>], thr_sq: f64) -> Scored {
    let (mut count, mut err) = (0, 0.0);
    for (a, b) in x1.iter().zip(x2) {
        let d = sampson_sq(&e, a, b);
        if d <= thr_sq {
            count += 1;
            err += d;
        }
    }
    Scored { e, count, err }
}

/// RANSAC over minimal samples with the five-point solver, default confidence.
pub fn estimate_essential_ransac(
    matches: &[PixelMatch],
    k1: &Intrinsics,
    k2: &Intrinsics,
    inlier_px: f64,
    max_iters: usize,
    seed: u64,
) -> Result<(EssentialMatrix, Vec<bool>)> {
    let params = RansacParams {
        inlier_px,
        max_iters,
        ..RansacParams::default()
    };
    estimate_essential_with(matches, k1, k2, &params, seed)
}

/// Best-by-inlier-count essential matrix. Inliers are judged by Sampson
/// distance in normalised coordinates against `inlier_px / mean focal`.
/// Iteration `i` draws from substream `i` of `seed`. The winner is refit on its
/// inliers (see [`local_optimize`]) and the mask is recomputed from the refit.
pub fn estimate_essential_with(
    matches: &[PixelMatch],
    k1: &Intrinsics,
    k2: &Intrinsics,
    params: &RansacParams,
    seed: u64,
) -> Result<(EssentialMatrix, Vec<bool>)> {
    let m = params.solver.sample_size();
    let n = matches.len();
    if n < m {
        return Err(invalid(format!(
            "essential estimation needs at least {m} matches, got {n}"
        )));
    }
    if !(params.inlier_px.is_finite() && params.inlier_px > 0.0) || params.max_iters == 0 {
        return Err(invalid(
            "inlier threshold must be positive and max_iters nonzero",
        ));
    }
    if !(params.confidence > 0.0 && params.confidence < 1.0) {
        return Err(invalid("confidence must lie in (0, 1)"));
    }
    if matches
        .iter()
        .any(|(p, q)| !(p.x.is_finite() && p.y.is_finite() && q.x.is_finite() && q.y.is_finite()))
    {
        return Err(invalid("matches must be finite"));
    }
    let x1: Vec<Vector3<f64>> = matches.iter().map(|(p, _)| k1.normalize(p)).collect();
    let x2: Vec<Vector3<f64>> = matches.iter().map(|(_, q)| k2.normalize(q)).collect();
    if distinct_count(&x1, m) < m || distinct_count(&x2, m) < m {
        return Err(Error::Degenerate("too few distinct points".into()));
    }
    let focal = (k1.fx() + k1.fy() + k2.fx() + k2.fy()) / 4.0;
    let thr = params.inlier_px / focal;
    let thr_sq = thr * thr;

    let mut best: Option<Scored> = None;
    let mut budget = params.max_iters;
    let mut it = 0;
    while it < budget {
        let mut r = rng::substream(seed, it as u64);
        it += 1;
        let idx = index::sample(&mut r, n, m).into_vec();
        let s1: Vec<Vector3<f64>> = idx.iter().map(|&i| x1[i]).collect();
        let s2: Vec<Vector3<f64>> = idx.iter().map(|&i| x2[i]).collect();
        for e in minimal_models(params.solver, &s1, &s2) {
            let sc = score(e, &x1, &x2, thr_sq);
            if best.as_ref().is_none_or(|b| sc.beats(b)) {
                budget = budget.min(required_iterations(
                    sc.count as f64 / n as f64,
                    m,
                    params.confidence,
                ));
                best = Some(sc);
            }
        }
    }
    let best =
        best.ok_or_else(|| Error::Degenerate("no minimal sample produced a model".into()))?;

    let e = local_optimize(&best.e, &x1, &x2, thr, thr_sq, params.solver, seed);
    let mask = x1
        .iter()
        .zip(&x2)
        .map(|(a, b)| sampson_sq(&e, a, b) <= thr_sq)
        .collect();
    Ok((EssentialMatrix(e), mask))
}

/// Streams `LO_STREAM_BASE + j` drive the inner samples of the refit.
const LO_STREAM_BASE: u64 = 1 << 40;
const LO_ITERS: usize = 50;

/// Truncated-quadratic cost `sum min(d^2, thr^2)`.
fn msac_cost(e: &Matrix3<f64>, x1: &[Vector3<f64>], x2: &[Vector3<f64>], thr_sq: f64) -> f64 {
    x1.iter()
        .zip(x2)
        .map(|(a, b)| sampson_sq(e, a, b).min(thr_sq))
        .sum()
}

/// Refit of the winning model on its inliers: minimal samples drawn from the
/// inlier set are ranked by truncated-quadratic cost over all matches, and the
/// best is polished by iteratively reweighted eight-point fits.
fn local_optimize(
    start: &Matrix3<f64>,
    x1: &[Vector3<f64>],
    x2: &[Vector3<f64>],
    thr: f64,
    thr_sq: f64,
    solver: MinimalSolver,
    seed: u64,
) -> Matrix3<f64> {
    let inliers: Vec<usize> = (0..x1.len())
        .filter(|&i| sampson_sq(start, &x1[i], &x2[i]) <= thr_sq)
        .collect();
    let mut best = *start;
    let mut best_cost = msac_cost(start, x1, x2, thr_sq);
    let m = solver.sample_size();
    if inliers.len() > m {
        for j in 0..LO_ITERS {
            let mut r = rng::substream(seed, LO_STREAM_BASE + j as u64);
            let idx = index::sample(&mut r, inliers.len(), m).into_vec();
            let s1: Vec<Vector3<f64>> = idx.iter().map(|&i| x1[inliers[i]]).collect();
            let s2: Vec<Vector3<f64>> = idx.iter().map(|&i| x2[inliers[i]]).collect();
            for e in minimal_models(solver, &s1, &s2) {
                let cost = msac_cost(&e, x1, x2, thr_sq);
                if cost < best_cost {
                    best = e;
                    best_cost = cost;
                }
            }
        }
    }
    if let Some(e) = robust_refit(&best, x1, x2, thr, thr_sq) {
        let cost = msac_cost(&e, x1, x2, thr_sq);
        if cost <= best_cost {
            best = e;
            best_cost = cost;
        }
    }
    if let Some(e) = polish(&best, x1, x2, thr_sq) {
        if msac_cost(&e, x1, x2, thr_sq) <= best_cost {
            best = e;
        }
    }
    best
}

/// Sampson least squares over the inliers of `e`, parametrised by pose so the
/// result stays on the essential manifold. The inlier set is re-read once
/// after the first pass.
fn polish(
    e: &Matrix3<f64>,
    x1: &[Vector3<f64>],
    x2: &[Vector3<f64>],
    thr_sq: f64,
) -> Option<Matrix3<f64>> {
    let inliers = |e: &Matrix3<f64>| -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
        x1.iter()
            .zip(x2)
            .filter(|(a, b)| sampson_sq(e, a, b) <= thr_sq)
            .map(|(a, b)| (*a, *b))
            .unzip()
    };
    let mut current = *e;
    for _ in 0..2 {
        let (i1, i2) = inliers(&current);
        if i1.len() < 6 {
            return None;
        }
        let (r, t, _) = factorise(&current, &i1, &i2).ok()?;
        let (r, t) = refine::refine_pose(&r, &t, &i1, &i2);
        current = skew(&t) * r;
    }
    Some(current)
}

fn minimal_models(
    solver: MinimalSolver,
    s1: &[Vector3<f64>],
    s2: &[Vector3<f64>],
) -> Vec<Matrix3<f64>> {
    let raw = match solver {
        MinimalSolver::FivePoint => {
            let a: [Vector3<f64>; 5] = std::array::from_fn(|k| s1[k]);
            let b: [Vector3<f64>; 5] = std::array::from_fn(|k| s2[k]);
            five_point::solve(&a, &b)
        }
        MinimalSolver::EightPoint => eight_point::fit(s1, s2).into_iter().collect(),
    };
    raw.iter()
        .filter_map(eight_point::project_essential)
        .collect()
}

/// Iteratively reweighted eight-point refit over the inliers of `e`, with
/// Cauchy weights. The scale is re-estimated every round from the median
/// absolute deviation of the residuals, floored at `1e-3` of the threshold.
fn robust_refit(
    e: &Matrix3<f64>,
    x1: &[Vector3<f64>],
    x2: &[Vector3<f64>],
    thr: f64,
    thr_sq: f64,
) -> Option<Matrix3<f64>> {
    const ROUNDS: usize = 10;
    let (i1, i2): (Vec<Vector3<f64>>, Vec<Vector3<f64>>) = x1
        .iter()
        .zip(x2)
        .filter(|(a, b)| sampson_sq(e, a, b) <= thr_sq)
        .map(|(a, b)| (*a, *b))
        .unzip();
    if i1.len() < 8 {
        return None;
    }
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let mut current = *e;
    let mut refined = None;
    for _ in 0..ROUNDS {
        let resid: Vec<f64> = i1
            .iter()
            .zip(&i2)
            .map(|(a, b)| sampson_sq(&current, a, b).sqrt())
            .collect();
        let med = median(resid.clone());
        let mad = median(resid.iter().map(|r| (r - med).abs()).collect());
        let sigma = (1.4826 * mad).max(1e-3 * thr);
        let weights: Vec<f64> = resid
            .iter()
            .map(|r| 1.0 / (1.0 + (r / sigma).powi(2)))
            .collect();
        let Some(next) = eight_point::fit_weighted(&i1, &i2, &weights) else {
            break;
        };
        let step = (next - current).norm().min((next + current).norm());
        current = next;
        refined = Some(next);
        if step < 1e-14 {
            break;
        }
    }
    refined
}

/// Relative pose `X2 = R X1 + t` with `|t| = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Matches triangulating in front of both cameras.
    pub in_front: usize,
}

/// Median angle left between the rays once the best-fitting pure rotation
/// (orthogonal Procrustes on the bearing vectors) is removed.
fn rotation_only_parallax(x1: &[Vector3<f64>], x2: &[Vector3<f64>]) -> f64 {
    let b1: Vec<Vector3<f64>> = x1.iter().map(|v| v.normalize()).collect();
    let b2: Vec<Vector3<f64>> = x2.iter().map(|v| v.normalize()).collect();
    let cov = b1
        .iter()
        .zip(&b2)
        .fold(Matrix3::zeros(), |acc, (a, b)| acc + b * a.transpose());
    let svd = cov.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return f64::INFINITY;
    };
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, (u * v_t).determinant().signum()));
    let r = u * fix * v_t;
    let mut angles: Vec<f64> = b1
        .iter()
        .zip(&b2)
        .map(|(a, b)| {
            let ra = r * a;
            ra.cross(b).norm().atan2(ra.dot(b))
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    angles[angles.len() / 2]
}

/// Depths `(l1, l2)` with `l2 x2 = l1 R x1 + t`, least squares.
fn triangulate_depths(
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    x1: &Vector3<f64>,
    x2: &Vector3<f64>,
) -> Option<Vector2<f64>> {
    let a = r * x1;
    let b = -x2;
    let ata = Matrix2::new(a.dot(&a), a.dot(&b), b.dot(&a), b.dot(&b));
    let rhs = Vector2::new(-a.dot(t), -b.dot(t));
    ata.try_inverse().map(|inv| inv * rhs)
}

/// The `(R, ±t)` factorisation of `e` placing the most points in front of
/// both cameras, with that count.
fn factorise(
    e: &Matrix3<f64>,
    x1: &[Vector3<f64>],
    x2: &[Vector3<f64>],
) -> Result<(Matrix3<f64>, Vector3<f64>, usize)> {
    let svd = e.svd(true, true);
    let (mut u, mut v_t) = (
        svd.u.ok_or_else(|| invalid("svd failed"))?,
        svd.v_t.ok_or_else(|| invalid("svd failed"))?,
    );
    let sv = svd.singular_values;
    // Order so the null direction is the third column.
    let null = sv.imin();
    if null != 2 {
        u.swap_columns(null, 2);
        v_t.swap_rows(null, 2);
    }
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    if v_t.determinant() < 0.0 {
        v_t.row_mut(2).neg_mut();
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let t: Vector3<f64> = u.column(2).into_owned().normalize();
    let candidates = [
        (u * w * v_t, t),
        (u * w * v_t, -t),
        (u * w.transpose() * v_t, t),
        (u * w.transpose() * v_t, -t),
    ];
    let mut best: Option<(usize, usize)> = None;
    for (c, (r, t)) in candidates.iter().enumerate() {
        let count = x1
            .iter()
            .zip(x2)
            .filter(|(a, b)| triangulate_depths(r, t, a, b).is_some_and(|d| d.x > 0.0 && d.y > 0.0))
            .count();
        if count > 0 && best.is_none_or(|(_, n)| count > n) {
            best = Some((c, count));
        }
    }
    let (c, in_front) =
        best.ok_or_else(|| Error::Degenerate("no decomposition passes cheirality".into()))?;
    Ok((candidates[c].0, candidates[c].1, in_front))
}

/// Chooses among the four `(R, ±t)` factorisations of `E` the one placing the
/// most matches in front of both cameras.
pub fn decompose_essential(
    e: &EssentialMatrix,
    matches: &[PixelMatch],
    k1: &Intrinsics,
    k2: &Intrinsics,
) -> Result<RelativePose> {
    if matches.is_empty() {
        return Err(Error::EmptySet("matches"));
    }
    let x1: Vec<Vector3<f64>> = matches.iter().map(|(p, _)| k1.normalize(p)).collect();
    let x2: Vec<Vector3<f64>> = matches.iter().map(|(_, q)| k2.normalize(q)).collect();
    let (rotation, translation, in_front) = factorise(&e.0, &x1, &x2)?;

    if rotation_only_parallax(&x1, &x2) < MIN_PARALLAX_RAD {
        return Err(Error::Degenerate(
            "baseline too small to recover translation".into(),
        ));
    }
    Ok(RelativePose {
        rotation,
        translation,
        in_front,
    })
}
