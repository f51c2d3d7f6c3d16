//! Plane-induced per-pixel homographies and the co-planar indicator matrix.
//!
//! For a pixel `p` with depth `d` and unit normal `n`, the tangent plane is
//! `n . X = c` with `c = n . backproject(p, d)`. Any point on it satisfies
//! `X2 = (R + t n^T / c) X1`, so in pixels `H = K2 (R + t n^T / c) K1^-1`.
//! `H` maps source pixels to support pixels and is never transposed.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::camera::{backproject, DepthMap, Intrinsics, NormalMap, RigidPose};
use crate::error::{invalid, Error, Result};
use crate::grid_ops::{BoolMask, CorrespondenceField};
use crate::rng;
use crate::Pixel;

/// Normal-agreement threshold (cosine distance).
pub const DEFAULT_K1: f64 = 0.002;
/// Point-to-plane distance threshold in metres.
pub const DEFAULT_K2: f64 = 0.02;
/// Homography-consistency threshold in support-frame pixels.
pub const DEFAULT_K3: f64 = 1.0;
/// Anchors (and candidates per anchor) sampled for the homography loss.
pub const DEFAULT_SAMPLES: usize = 600;

/// Plane-induced homography of one pixel, normalised so that `H[2][2] = 1`
/// whenever that entry is nonzero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelHomography(Matrix3<f64>);

impl PixelHomography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(invalid("homography must be finite"));
        }
        let scale = m[(2, 2)];
        let m = if scale != 0.0 { m / scale } else { m };
        if m.determinant().abs() < 1e-300 {
            return Err(Error::Degenerate("homography is singular".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// Homography induced by the tangent plane at `pixel`.
pub fn pixel_homography(
    normal: &Vector3<f64>,
    depth: f64,
    pixel: &Pixel,
    pose: &RigidPose,
    k1: &Intrinsics,
    k2: &Intrinsics,
) -> Result<PixelHomography> {
    if (normal.norm() - 1.0).abs() > 1e-6 {
        return Err(invalid("plane normal must be unit length"));
    }
    let x = backproject(pixel, depth, k1)?;
    let offset = normal.dot(&x);
    if offset.abs() < 1e-12 {
        return Err(Error::Degenerate(
            "plane passes through the camera centre".into(),
        ));
    }
    let euclidean = pose.rotation + pose.translation * normal.transpose() / offset;
    PixelHomography::new(k2.matrix() * euclidean * k1.inverse())
}

/// Applies `h` to `q` with perspective division.
pub fn planar_project(h: &PixelHomography, q: &Pixel) -> Result<Pixel> {
    let v = h.0 * Vector3::new(q.x, q.y, 1.0);
    if v.z.abs() < 1e-12 {
        return Err(Error::Degenerate("point maps to infinity".into()));
    }
    Ok(Pixel::new(v.x / v.z, v.y / v.z))
}

/// Distance in metres from the back-projection of `q` to the plane through
/// the back-projection of `p` with normal `n_p`.
pub fn point_plane_distance(
    n_p: &Vector3<f64>,
    p: &Pixel,
    d_p: f64,
    q: &Pixel,
    d_q: f64,
    k1: &Intrinsics,
) -> Result<f64> {
    let xp = backproject(p, d_p, k1)?;
    let xq = backproject(q, d_q, k1)?;
    Ok(n_p.dot(&(xq - xp)).abs())
}

/// Anchors and per-anchor candidates for the co-planar indicator.
#[derive(Clone, Debug, PartialEq)]
pub struct CoplanarSampleSet {
    pub anchors: Vec<Pixel>,
    /// `candidates[m][n]` is the `n`-th candidate of anchor `m`.
    pub candidates: Vec<Vec<Pixel>>,
    pub seed: u64,
}

impl CoplanarSampleSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Draws `count` distinct anchors uniformly from the set pixels of `valid`
/// and, for every anchor, `count` candidates uniformly with replacement.
///
/// Anchors come from stream 0 of `seed`; the candidates of anchor `m` come
/// from stream `m + 1`, so each row is reproducible on its own.
pub fn sample_coplanar_set(valid: &BoolMask, count: usize, seed: u64) -> Result<CoplanarSampleSet> {
    let pool = valid.positions();
    if pool.len() < count {
        return Err(invalid(format!(
            "need {count} valid pixels for sampling, found {}",
            pool.len()
        )));
    }
    let to_pixel = |(i, j): (usize, usize)| Pixel::new(j as f64, i as f64);
    let mut anchor_rng = rng::substream(seed, 0);
    let anchors: Vec<Pixel> = index::sample(&mut anchor_rng, pool.len(), count)
        .into_iter()
        .map(|k| to_pixel(pool[k]))
        .collect();
    let candidates = (0..count)
        .map(|m| {
            let mut r = rng::substream(seed, m as u64 + 1);
            (0..count)
                .map(|_| to_pixel(pool[r.random_range(0..pool.len())]))
                .collect()
        })
        .collect();
    Ok(CoplanarSampleSet {
        anchors,
        candidates,
        seed,
    })
}

/// How the normal and homography criteria are read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriteriaMode {
    /// `1 - n_p . n_q < k1`, and the homography transfer of `q` is compared
    /// against the ground-truth correspondence of `q`.
    #[default]
    Cosine,
    /// `1 - acos(n_p . n_q) < k1`, and the homography transfer of `q` is
    /// compared against `q` itself.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoplanarThresholds {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    #[serde(default)]
    pub mode: CriteriaMode,
}

impl Default for CoplanarThresholds {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            k2: DEFAULT_K2,
            k3: DEFAULT_K3,
            mode: CriteriaMode::Cosine,
        }
    }
}

/// `K x K` co-planarity decisions between anchors and their candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorMatrix {
    pub rows: Vec<Vec<bool>>,
    pub thresholds: CoplanarThresholds,
    pub seed: u64,
}

impl IndicatorMatrix {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn count(&self) -> usize {
        self.rows.iter().flatten().filter(|b| **b).count()
    }

    pub fn get(&self, m: usize, n: usize) -> bool {
        self.rows[m][n]
    }
}

/// Scene geometry consulted by [`coplanar_indicator`].
#[derive(Clone, Copy)]
pub struct PlanarScene<'a> {
    pub normals: &'a NormalMap,
    pub depth: &'a DepthMap,
    pub gt: &'a CorrespondenceField,
    pub k1: &'a Intrinsics,
    pub k2: &'a Intrinsics,
    pub pose: &'a RigidPose,
}

struct Geometry {
    pixel: Pixel,
    normal: Vector3<f64>,
    depth: f64,
    target: Pixel,
}

impl PlanarScene<'_> {
    // Samples sit on integer pixels; the nearest pixel is used for lookups.
    fn geometry(&self, p: &Pixel) -> Option<Geometry> {
        let (col, row) = (p.x.round(), p.y.round());
        if col < 0.0 || row < 0.0 {
            return None;
        }
        let (row, col) = (row as usize, col as usize);
        if row >= self.depth.height() || col >= self.depth.width() {
            return None;
        }
        if row >= self.normals.height() || col >= self.normals.width() {
            return None;
        }
        if row >= self.gt.height() || col >= self.gt.width() {
            return None;
        }
        Some(Geometry {
            pixel: *p,
            normal: self.normals.get(row, col)?,
            depth: self.depth.get(row, col)?,
            target: self.gt.get(row, col)?,
        })
    }
}

/// Marks anchor/candidate pairs that lie on a common plane: normals agree
/// (`k1`), the candidate is within `k2` metres of the anchor's tangent plane,
/// and the anchor's plane homography transfers the candidate to within `k3`
/// pixels of its ground-truth correspondence. A candidate identical to its
/// anchor is co-planar by definition. Pairs with missing geometry are 0.
pub fn coplanar_indicator(
    samples: &CoplanarSampleSet,
    scene: &PlanarScene<'_>,
    thresholds: &CoplanarThresholds,
) -> Result<IndicatorMatrix> {
    let CoplanarThresholds { k1, k2, k3, mode } = *thresholds;
    if [k1, k2, k3].iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
        return Err(invalid(
            "co-planarity thresholds must be finite and non-negative",
        ));
    }
    if samples.candidates.len() != samples.anchors.len() {
        return Err(invalid("every anchor needs a candidate row"));
    }
    let rows = samples
        .anchors
        .iter()
        .zip(&samples.candidates)
        .map(|(p, cands)| {
            let Some(anchor) = scene.geometry(p) else {
                return vec![false; cands.len()];
            };
            let Ok(h) = pixel_homography(
                &anchor.normal,
                anchor.depth,
                &anchor.pixel,
                scene.pose,
                scene.k1,
                scene.k2,
            ) else {
                return vec![false; cands.len()];
            };
            cands
                .iter()
                .map(|q| {
                    let Some(cand) = scene.geometry(q) else {
                        return false;
                    };
                    if cand.pixel == anchor.pixel {
                        return true;
                    }
                    let cos = anchor.normal.dot(&cand.normal);
                    let normal_ok = match mode {
                        CriteriaMode::Cosine => 1.0 - cos < k1,
                        CriteriaMode::Literal => 1.0 - cos.clamp(-1.0, 1.0).acos() < k1,
                    };
                    if !normal_ok {
                        return false;
                    }
                    let dist = point_plane_distance(
                        &anchor.normal,
                        &anchor.pixel,
                        anchor.depth,
                        &cand.pixel,
                        cand.depth,
                        scene.k1,
                    );
                    if !matches!(dist, Ok(d) if d < k2) {
                        return false;
                    }
                    let Ok(transfer) = planar_project(&h, &cand.pixel) else {
                        return false;
                    };
                    let reference = match mode {
                        CriteriaMode::Cosine => cand.target,
                        CriteriaMode::Literal => cand.pixel,
                    };
                    (transfer - reference).norm() < k3
                })
                .collect()
        })
        .collect();
    Ok(IndicatorMatrix {
        rows,
        thresholds: *thresholds,
        seed: samples.seed,
    })
}

/// JSON form of an indicator matrix together with the samples it was built on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorFile {
    #[serde(rename = "K")]
    pub size: usize,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub seed: u64,
    /// One string of `'0'`/`'1'` per anchor.
    pub rows: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CriteriaMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<Vec<[f64; 2]>>>,
}

impl IndicatorFile {
    pub fn new(matrix: &IndicatorMatrix, samples: Option<&CoplanarSampleSet>) -> Self {
        let pair = |p: &Pixel| [p.x, p.y];
        Self {
            size: matrix.size(),
            k1: matrix.thresholds.k1,
            k2: matrix.thresholds.k2,
            k3: matrix.thresholds.k3,
            seed: matrix.seed,
            rows: matrix
                .rows
                .iter()
                .map(|r| r.iter().map(|b| if *b { '1' } else { '0' }).collect())
                .collect(),
            mode: (matrix.thresholds.mode != CriteriaMode::Cosine)
                .then_some(matrix.thresholds.mode),
            anchors: samples.map(|s| s.anchors.iter().map(pair).collect()),
            candidates: samples.map(|s| {
                s.candidates
                    .iter()
                    .map(|r| r.iter().map(pair).collect())
                    .collect()
            }),
        }
    }

    /// Validates the record and splits it into the matrix and, when present,
    /// its samples.
    pub fn decode(&self) -> Result<(IndicatorMatrix, Option<CoplanarSampleSet>)> {
        let k = self.size;
        let bad = |m: &str| Error::Format(format!("indicator file: {m}"));
        if self.rows.len() != k {
            return Err(bad("row count differs from K"));
        }
        let rows = self
            .rows
            .iter()
            .map(|r| {
                if r.len() != k {
                    return Err(bad("row length differs from K"));
                }
                r.bytes()
                    .map(|b| match b {
                        b'0' => Ok(false),
                        b'1' => Ok(true),
                        _ => Err(bad("rows must contain only 0 and 1")),
                    })
                    .collect()
            })
            .collect::<Result<Vec<Vec<bool>>>>()?;
        let thresholds = CoplanarThresholds {
            k1: self.k1,
            k2: self.k2,
            k3: self.k3,
            mode: self.mode.unwrap_or_default(),
        };
        let finite = |v: &[f64; 2]| v[0].is_finite() && v[1].is_finite();
        let samples = match (&self.anchors, &self.candidates) {
            (Some(a), Some(c)) => {
                if a.len() != k || c.len() != k || c.iter().any(|r| r.len() != k) {
                    return Err(bad("sample arrays must be K and K x K"));
                }
                if !a.iter().chain(c.iter().flatten()).all(finite) {
                    return Err(bad("sample coordinates must be finite"));
                }
                Some(CoplanarSampleSet {
                    anchors: a.iter().map(|p| Pixel::new(p[0], p[1])).collect(),
                    candidates: c
                        .iter()
                        .map(|r| r.iter().map(|p| Pixel::new(p[0], p[1])).collect())
                        .collect(),
                    seed: self.seed,
                })
            }
            (None, None) => None,
            _ => return Err(bad("anchors and candidates must appear together")),
        };
        Ok((
            IndicatorMatrix {
                rows,
                thresholds,
                seed: self.seed,
            },
            samples,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{gt_correspondence, project};

    fn random_rotation(r: &mut rng::Rng) -> RigidPose {
        let axis = Vector3::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        RigidPose::from_axis_angle(axis, r.random_range(-0.3..0.3), Vector3::zeros())
    }

    #[test]
    fn no_motion_is_identity() {
        let k = Intrinsics::new(300.0, 310.0, 160.0, 120.0).unwrap();
        let h = pixel_homography(
            &Vector3::new(0.0, 0.0, -1.0),
            2.0,
            &Pixel::new(5.0, 7.0),
            &RigidPose::identity(),
            &k,
            &k,
        )
        .unwrap();
        assert!((h.matrix() - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn fronto_parallel_translation() {
        let id = Intrinsics::identity();
        let pose = RigidPose::new(Matrix3::identity(), Vector3::new(0.1, 0.0, 0.0)).unwrap();
        let h = pixel_homography(
            &Vector3::new(0.0, 0.0, -1.0),
            2.0,
            &Pixel::zeros(),
            &pose,
            &id,
            &id,
        )
        .unwrap();
        let expected = Matrix3::new(1.0, 0.0, 0.05, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((h.matrix() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn rotation_homography_ignores_the_plane() {
        let mut r = rng::seeded(11);
        let k1 = Intrinsics::new(250.0, 250.0, 128.0, 96.0).unwrap();
        let k2 = Intrinsics::new(270.0, 265.0, 120.0, 100.0).unwrap();
        let pose = random_rotation(&mut r);
        let reference = k2.matrix() * pose.rotation * k1.inverse();
        let reference = reference / reference[(2, 2)];
        for _ in 0..100 {
            let n = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), -1.0)
                .normalize();
            let p = Pixel::new(r.random_range(0.0..256.0), r.random_range(0.0..192.0));
            let h = pixel_homography(&n, r.random_range(0.5..20.0), &p, &pose, &k1, &k2).unwrap();
            assert!((h.matrix() - reference).abs().max() < 1e-12);
        }
        // Depth-independence oracle: transfer equals rotating any back-projection.
        let h = pixel_homography(&-Vector3::z(), 1.0, &Pixel::zeros(), &pose, &k1, &k2).unwrap();
        for _ in 0..100 {
            let q = Pixel::new(r.random_range(0.0..256.0), r.random_range(0.0..192.0));
            let d = r.random_range(0.5..50.0);
            let (expected, _) =
                project(&(pose.rotation * backproject(&q, d, &k1).unwrap()), &k2).unwrap();
            assert!((planar_project(&h, &q).unwrap() - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn degenerate_plane_errors() {
        let id = Intrinsics::identity();
        // Plane containing the principal ray passes through the camera centre.
        let n = Vector3::new(1.0, 0.0, 0.0);
        assert!(matches!(
            pixel_homography(&n, 1.0, &Pixel::zeros(), &RigidPose::identity(), &id, &id),
            Err(Error::Degenerate(_))
        ));
        assert!(pixel_homography(
            &Vector3::new(0.0, 0.0, -2.0),
            1.0,
            &Pixel::zeros(),
            &RigidPose::identity(),
            &id,
            &id
        )
        .is_err());
    }

    #[test]
    fn planar_project_examples() {
        let id = PixelHomography::new(Matrix3::identity()).unwrap();
        assert_eq!(
            planar_project(&id, &Pixel::new(3.5, -1.0)).unwrap(),
            Pixel::new(3.5, -1.0)
        );
        let t = PixelHomography::new(Matrix3::new(1.0, 0.0, 3.0, 0.0, 1.0, -2.0, 0.0, 0.0, 1.0))
            .unwrap();
        assert_eq!(
            planar_project(&t, &Pixel::zeros()).unwrap(),
            Pixel::new(3.0, -2.0)
        );
        let inf = PixelHomography::new(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0))
            .unwrap();
        assert!(planar_project(&inf, &Pixel::new(-1.0, 0.0)).is_err());
    }

    #[test]
    fn point_plane_distance_examples() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 40.0).unwrap();
        let p = Pixel::new(50.0, 40.0);
        let n = Vector3::new(0.0, 0.0, -1.0);
        assert_eq!(point_plane_distance(&n, &p, 3.0, &p, 3.0, &k).unwrap(), 0.0);
        let d = point_plane_distance(&n, &p, 3.0, &Pixel::new(60.0, 30.0), 3.02, &k).unwrap();
        assert!((d - 0.02).abs() < 1e-12);
        // Slanted plane n . X = c rendered analytically.
        let n = Vector3::new(0.2, 0.5, -1.0).normalize();
        let c = -4.0;
        let depth_at = |q: &Pixel| c / n.dot(&k.normalize(q));
        let q = Pixel::new(12.0, 77.0);
        let d = point_plane_distance(&n, &p, depth_at(&p), &q, depth_at(&q), &k).unwrap();
        assert!(d < 1e-9);
        assert!(point_plane_distance(&n, &p, 0.0, &q, 1.0, &k).is_err());
    }

    #[test]
    fn sampling_examples() {
        let mut single = BoolMask::filled(5, 5, false);
        single.set(2, 3, true);
        let s = sample_coplanar_set(&single, 1, 4).unwrap();
        assert_eq!(s.anchors, vec![Pixel::new(3.0, 2.0)]);
        assert_eq!(s.candidates, vec![vec![Pixel::new(3.0, 2.0)]]);
        assert!(sample_coplanar_set(&single, 2, 4).is_err());

        let full = BoolMask::filled(40, 40, true);
        let a = sample_coplanar_set(&full, 600, 9).unwrap();
        assert_eq!(a, sample_coplanar_set(&full, 600, 9).unwrap());
        assert_ne!(a, sample_coplanar_set(&full, 600, 10).unwrap());
        for i in 0..a.anchors.len() {
            for j in 0..i {
                assert_ne!(a.anchors[i], a.anchors[j]);
            }
        }
        assert!(a.candidates.iter().all(|r| r.len() == 600));
    }

    struct PlaneScene {
        depth: DepthMap,
        normals: NormalMap,
        gt: CorrespondenceField,
        k: Intrinsics,
        pose: RigidPose,
    }

    fn slanted_plane_scene() -> PlaneScene {
        let (h, w) = (48, 64);
        let k = Intrinsics::new(70.0, 70.0, 32.0, 24.0).unwrap();
        let n = Vector3::new(0.2, -0.1, -1.0).normalize();
        let c = -5.0;
        let depth = DepthMap::from_fn(h, w, |i, j| {
            Some(c / n.dot(&k.normalize(&Pixel::new(j as f64, i as f64))))
        })
        .unwrap();
        let normals = NormalMap::from_fn(h, w, |_, _| Some(n)).unwrap();
        let pose = RigidPose::from_axis_angle(
            Vector3::new(0.1, 1.0, 0.0),
            0.03,
            Vector3::new(0.15, 0.02, 0.05),
        );
        let gt = gt_correspondence(&depth, &depth, &k, &k, &pose, 0.05).unwrap();
        PlaneScene {
            depth,
            normals,
            gt,
            k,
            pose,
        }
    }

    fn scene_ref(s: &PlaneScene) -> PlanarScene<'_> {
        PlanarScene {
            normals: &s.normals,
            depth: &s.depth,
            gt: &s.gt,
            k1: &s.k,
            k2: &s.k,
            pose: &s.pose,
        }
    }

    #[test]
    fn single_plane_is_all_coplanar() {
        let s = slanted_plane_scene();
        let valid = s.gt.valid_mask();
        let samples = sample_coplanar_set(&valid, 50, 3).unwrap();
        let o =
            coplanar_indicator(&samples, &scene_ref(&s), &CoplanarThresholds::default()).unwrap();
        assert_eq!(o.count(), 50 * 50);
    }

    #[test]
    fn zero_thresholds_keep_only_self_pairs() {
        let s = slanted_plane_scene();
        let samples = sample_coplanar_set(&s.gt.valid_mask(), 30, 5).unwrap();
        let zero = CoplanarThresholds {
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            mode: CriteriaMode::Cosine,
        };
        let o = coplanar_indicator(&samples, &scene_ref(&s), &zero).unwrap();
        for (m, row) in o.rows.iter().enumerate() {
            for (n, bit) in row.iter().enumerate() {
                assert_eq!(*bit, samples.candidates[m][n] == samples.anchors[m]);
            }
        }
    }

    #[test]
    fn thresholds_are_monotone() {
        let s = slanted_plane_scene();
        let samples = sample_coplanar_set(&s.gt.valid_mask(), 40, 8).unwrap();
        let mut prev: Option<IndicatorMatrix> = None;
        for scale in [1e-6, 1e-3, 0.1, 1.0, 10.0] {
            let t = CoplanarThresholds {
                k1: DEFAULT_K1 * scale,
                k2: DEFAULT_K2 * scale,
                k3: DEFAULT_K3 * scale,
                mode: CriteriaMode::Cosine,
            };
            let o = coplanar_indicator(&samples, &scene_ref(&s), &t).unwrap();
            if let Some(p) = prev {
                for (a, b) in p.rows.iter().flatten().zip(o.rows.iter().flatten()) {
                    assert!(!*a || *b);
                }
            }
            prev = Some(o);
        }
    }

    #[test]
    fn indicator_json_round_trip_and_validation() {
        let s = slanted_plane_scene();
        let samples = sample_coplanar_set(&s.gt.valid_mask(), 4, 1).unwrap();
        let o =
            coplanar_indicator(&samples, &scene_ref(&s), &CoplanarThresholds::default()).unwrap();
        let file = IndicatorFile::new(&o, Some(&samples));
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.starts_with(r#"{"K":4,"k1":0.002,"k2":0.02,"k3":1.0,"seed":1,"rows":["1111""#));
        let (o2, s2) = serde_json::from_str::<IndicatorFile>(&text)
            .unwrap()
            .decode()
            .unwrap();
        assert_eq!(o2, o);
        assert_eq!(s2.unwrap(), samples);
        let mut broken = file.clone();
        broken.rows[0] = "1121".into();
        assert!(broken.decode().is_err());
        let mut broken = file;
        broken.rows.pop();
        assert!(broken.decode().is_err());
    }
}
