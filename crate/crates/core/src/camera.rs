//! Pinhole cameras, rigid poses and ground truth derived from depth.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::grid_ops::{BoolMask, CorrespondenceField, DenseMap, Stencil};
use crate::Pixel;

/// Relative depth tolerance of the occlusion test.
pub const DEFAULT_REL_DEPTH_TAU: f64 = 0.05;

const ORTHO_TOL: f64 = 1e-9;

/// Upper-triangular pinhole calibration with zero skew.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsJson", into = "IntrinsicsJson")]
pub struct Intrinsics {
    k: Matrix3<f64>,
    k_inv: Matrix3<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsJson {
    #[serde(rename = "K")]
    k: [f64; 9],
}

impl TryFrom<IntrinsicsJson> for Intrinsics {
    type Error = Error;
    fn try_from(raw: IntrinsicsJson) -> Result<Self> {
        Intrinsics::from_matrix(Matrix3::from_row_slice(&raw.k))
    }
}

impl From<Intrinsics> for IntrinsicsJson {
    fn from(k: Intrinsics) -> Self {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = k.k[(r, c)];
            }
        }
        IntrinsicsJson { k: out }
    }
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::from_matrix(Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0))
    }

    pub fn identity() -> Self {
        Self {
            k: Matrix3::identity(),
            k_inv: Matrix3::identity(),
        }
    }

    pub fn from_matrix(k: Matrix3<f64>) -> Result<Self> {
        if k.iter().any(|v| !v.is_finite()) {
            return Err(invalid("intrinsics must be finite"));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(invalid("focal lengths must be positive"));
        }
        if k[(0, 1)] != 0.0
            || k[(1, 0)] != 0.0
            || k[(2, 0)] != 0.0
            || k[(2, 1)] != 0.0
            || k[(2, 2)] != 1.0
        {
            return Err(invalid("intrinsics must be [[fx,0,cx],[0,fy,cy],[0,0,1]]"));
        }
        let k_inv = Matrix3::new(
            1.0 / k[(0, 0)],
            0.0,
            -k[(0, 2)] / k[(0, 0)],
            0.0,
            1.0 / k[(1, 1)],
            -k[(1, 2)] / k[(1, 1)],
            0.0,
            0.0,
            1.0,
        );
        Ok(Self { k, k_inv })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.k_inv
    }

    pub fn fx(&self) -> f64 {
        self.k[(0, 0)]
    }

    pub fn fy(&self) -> f64 {
        self.k[(1, 1)]
    }

    /// Intrinsics of the same camera after scaling pixel coordinates by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let k = self.k;
        Self::new(k[(0, 0)] * s, k[(1, 1)] * s, k[(0, 2)] * s, k[(1, 2)] * s)
    }

    /// Normalised image coordinates `K^-1 (x, y, 1)`.
    pub fn normalize(&self, p: &Pixel) -> Vector3<f64> {
        self.k_inv * Vector3::new(p.x, p.y, 1.0)
    }
}

/// Source-to-support rigid transform, `X2 = R * X1 + t` (metres).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseJson", into = "PoseJson")]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseJson {
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl TryFrom<PoseJson> for RigidPose {
    type Error = Error;
    fn try_from(raw: PoseJson) -> Result<Self> {
        RigidPose::new(
            Matrix3::from_row_slice(&raw.r),
            Vector3::from_column_slice(&raw.t),
        )
    }
}

impl From<RigidPose> for PoseJson {
    fn from(p: RigidPose) -> Self {
        let mut r = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                r[i * 3 + j] = p.rotation[(i, j)];
            }
        }
        PoseJson {
            r,
            t: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl RigidPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation
            .iter()
            .chain(translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(invalid("pose must be finite"));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if ortho > ORTHO_TOL || (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(invalid("rotation is not a proper orthonormal matrix"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self {
            rotation: *r.matrix(),
            translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `other ∘ self`: apply `self` first.
    pub fn then(&self, other: &RigidPose) -> Self {
        Self {
            rotation: other.rotation * self.rotation,
            translation: other.rotation * self.translation + other.translation,
        }
    }

    pub fn transform(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }
}

/// Metric depth with validity; depth is positive wherever valid.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, depth: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if depth.len() != height * width || valid.len() != height * width {
            return Err(shape("depth buffers do not match map size"));
        }
        if depth
            .iter()
            .zip(&valid)
            .any(|(d, v)| *v && !(d.is_finite() && *d > 0.0))
        {
            return Err(invalid("valid depth must be finite and positive"));
        }
        Ok(Self {
            height,
            width,
            depth,
            valid,
        })
    }

    /// Builds a depth map from `f(row, col)`; `None` marks the pixel invalid.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Result<Self> {
        let mut depth = Vec::with_capacity(height * width);
        let mut valid = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                let d = f(i, j);
                valid.push(d.is_some());
                depth.push(d.unwrap_or(0.0));
            }
        }
        Self::new(height, width, depth, valid)
    }

    pub fn from_map(map: &DenseMap, valid: &BoolMask) -> Result<Self> {
        if map.channels() != 1 {
            return Err(shape("depth map must have one channel"));
        }
        if map.height() != valid.height() || map.width() != valid.width() {
            return Err(shape("depth map and mask differ in size"));
        }
        Self::new(
            map.height(),
            map.width(),
            map.values().to_vec(),
            valid.bits().to_vec(),
        )
    }

    pub fn to_map(&self) -> (DenseMap, BoolMask) {
        let map =
            DenseMap::new(self.height, self.width, 1, self.depth.clone()).expect("finite depth");
        let mask = BoolMask::new(self.height, self.width, self.valid.clone()).expect("sized mask");
        (map, mask)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let k = row * self.width + col;
        self.valid[k].then_some(self.depth[k])
    }

    pub fn valid_mask(&self) -> BoolMask {
        BoolMask::new(self.height, self.width, self.valid.clone()).expect("sized mask")
    }

    /// Bilinear depth at a continuous position; `None` unless every texel
    /// with nonzero weight is valid.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let st = Stencil::new(x, y, self.width, self.height)?;
        let mut acc = 0.0;
        for (row, col, w) in st.taps() {
            if w != 0.0 {
                acc += self.get(row, col)? * w;
            }
        }
        Some(acc)
    }
}

/// Unit surface normals in camera coordinates with validity.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap {
    height: usize,
    width: usize,
    normals: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

impl NormalMap {
    pub fn new(
        height: usize,
        width: usize,
        normals: Vec<Vector3<f64>>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if normals.len() != height * width || valid.len() != height * width {
            return Err(shape("normal buffers do not match map size"));
        }
        if normals
            .iter()
            .zip(&valid)
            .any(|(n, v)| *v && (n.norm() - 1.0).abs() > 1e-6)
        {
            return Err(invalid("valid normals must be unit length"));
        }
        Ok(Self {
            height,
            width,
            normals,
            valid,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Option<Vector3<f64>>,
    ) -> Result<Self> {
        let mut normals = Vec::with_capacity(height * width);
        let mut valid = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                let n = f(i, j);
                valid.push(n.is_some());
                normals.push(n.unwrap_or_else(Vector3::zeros));
            }
        }
        Self::new(height, width, normals, valid)
    }

    pub fn from_map(map: &DenseMap, valid: &BoolMask) -> Result<Self> {
        if map.channels() != 3 {
            return Err(shape("normal map must have three channels"));
        }
        if map.height() != valid.height() || map.width() != valid.width() {
            return Err(shape("normal map and mask differ in size"));
        }
        let normals = map
            .values()
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect();
        Self::new(map.height(), map.width(), normals, valid.bits().to_vec())
    }

    pub fn to_map(&self) -> (DenseMap, BoolMask) {
        let values = self.normals.iter().flat_map(|n| [n.x, n.y, n.z]).collect();
        (
            DenseMap::new(self.height, self.width, 3, values).expect("finite normals"),
            BoolMask::new(self.height, self.width, self.valid.clone()).expect("sized mask"),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Vector3<f64>> {
        let k = row * self.width + col;
        self.valid[k].then_some(self.normals[k])
    }

    pub fn valid_mask(&self) -> BoolMask {
        BoolMask::new(self.height, self.width, self.valid.clone()).expect("sized mask")
    }
}

/// `d * K^-1 (x, y, 1)`.
pub fn backproject(pixel: &Pixel, depth: f64, k: &Intrinsics) -> Result<Vector3<f64>> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(invalid(format!("depth {depth} must be positive")));
    }
    Ok(k.normalize(pixel) * depth)
}

/// Perspective projection; returns the pixel and the camera-frame depth
/// (negative behind the camera).
pub fn project(point: &Vector3<f64>, k: &Intrinsics) -> Result<(Pixel, f64)> {
    if point.z.abs() < 1e-12 {
        return Err(invalid("point lies on the camera plane"));
    }
    let h = k.matrix() * point;
    Ok((Pixel::new(h.x / h.z, h.y / h.z), point.z))
}

/// Ground-truth correspondences from view 1 into view 2.
///
/// A source pixel is valid when it has depth, lands in front of camera 2 and
/// inside its image, the support depth there is valid, and the reprojected
/// depth agrees with it to within `rel_depth_tau` (relative).
pub fn gt_correspondence(
    depth1: &DepthMap,
    depth2: &DepthMap,
    k1: &Intrinsics,
    k2: &Intrinsics,
    pose: &RigidPose,
    rel_depth_tau: f64,
) -> Result<CorrespondenceField> {
    if !(rel_depth_tau > 0.0) {
        return Err(invalid("rel_depth_tau must be positive"));
    }
    Ok(CorrespondenceField::from_fn(
        depth1.height,
        depth1.width,
        |i, j| {
            let d = depth1.get(i, j)?;
            let x1 = backproject(&Pixel::new(j as f64, i as f64), d, k1).ok()?;
            let x2 = pose.transform(&x1);
            if x2.z <= 0.0 {
                return None;
            }
            let (q, z) = project(&x2, k2).ok()?;
            let q = Pixel::new(snap(q.x, depth2.width), snap(q.y, depth2.height));
            let d2 = depth2.sample(q.x, q.y)?;
            ((z - d2).abs() / z <= rel_depth_tau).then_some(q)
        },
    ))
}

// Pulls coordinates that overshoot the image edge by rounding error back onto it.
fn snap(v: f64, extent: usize) -> f64 {
    const EPS: f64 = 1e-9;
    let hi = extent.saturating_sub(1) as f64;
    if (-EPS..0.0).contains(&v) {
        0.0
    } else if v > hi && v <= hi + EPS {
        hi
    } else {
        v
    }
}

/// Normals from central-difference tangents of the back-projected depth,
/// oriented towards the camera. Border pixels and pixels next to invalid depth
/// are invalid.
pub fn normals_from_depth(depth: &DepthMap, k: &Intrinsics) -> Result<NormalMap> {
    let (h, w) = (depth.height, depth.width);
    if h < 3 || w < 3 {
        return Err(invalid("normal estimation needs at least a 3x3 depth map"));
    }
    let point = |i: usize, j: usize| -> Option<Vector3<f64>> {
        let d = depth.get(i, j)?;
        backproject(&Pixel::new(j as f64, i as f64), d, k).ok()
    };
    NormalMap::from_fn(h, w, |i, j| {
        if i == 0 || j == 0 || i + 1 == h || j + 1 == w {
            return None;
        }
        let center = point(i, j)?;
        let tx = point(i, j + 1)? - point(i, j - 1)?;
        let ty = point(i + 1, j)? - point(i - 1, j)?;
        let n = tx.cross(&ty);
        let norm = n.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        let n = n / norm;
        Some(if n.dot(&center) > 0.0 { -n } else { n })
    })
}

/// Fraction of source pixels with valid depth whose ground-truth
/// correspondence is valid.
pub fn overlap_ratio(
    depth1: &DepthMap,
    depth2: &DepthMap,
    k1: &Intrinsics,
    k2: &Intrinsics,
    pose: &RigidPose,
    rel_depth_tau: f64,
) -> Result<f64> {
    let total = depth1.valid.iter().filter(|v| **v).count();
    if total == 0 {
        return Err(Error::EmptySet("source pixels with valid depth"));
    }
    let field = gt_correspondence(depth1, depth2, k1, k2, pose, rel_depth_tau)?;
    let hits = field.valid_bits().iter().filter(|v| **v).count();
    Ok(hits as f64 / total as f64)
}
