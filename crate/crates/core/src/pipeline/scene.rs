use nalgebra::Vector3;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::camera::{DepthMap, Intrinsics, NormalMap, RigidPose};
use crate::error::invalid;
use crate::grid_ops::DenseMap;
use crate::{rng, Pixel, Result};

const TABLE: usize = 64;
const OCTAVES: [(f64, f64); 3] = [(1.0, 0.5), (0.5, 0.3), (0.25, 0.2)];

fn default_texture_scale() -> f64 {
    0.2
}

/// World plane `normal . X = offset` with its own texture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    pub normal: [f64; 3],
    pub offset: f64,
    pub texture_seed: u64,
}

/// Planes seen by one pinhole camera from several poses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub planes: Vec<PlaneSpec>,
    pub intrinsics: Intrinsics,
    /// Camera-from-world transform of every view.
    pub poses: Vec<RigidPose>,
    pub height: usize,
    pub width: usize,
    /// World size of the coarsest texture lattice cell.
    #[serde(default = "default_texture_scale")]
    pub texture_scale: f64,
}

/// One rendered view.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthView {
    /// Three channels in `[0, 255]`.
    pub image: DenseMap,
    pub depth: DepthMap,
    /// Camera-frame normals facing the camera.
    pub normals: NormalMap,
    pub intrinsics: Intrinsics,
    /// Camera-from-world.
    pub pose: RigidPose,
    /// Index of the visible plane per pixel.
    pub labels: Vec<Option<usize>>,
}

impl SynthView {
    /// Source-to-support transform from this view into `other`.
    pub fn relative_pose(&self, other: &SynthView) -> RigidPose {
        self.pose.inverse().then(&other.pose)
    }
}

struct Plane {
    normal: Vector3<f64>,
    offset: f64,
    u: Vector3<f64>,
    v: Vector3<f64>,
    // [channel][octave] lattice of TABLE x TABLE values in [0, 1].
    tables: Vec<Vec<Vec<f64>>>,
}

impl Plane {
    fn new(spec: &PlaneSpec) -> Result<Self> {
        let n = Vector3::from_column_slice(&spec.normal);
        if !n.iter().all(|v| v.is_finite()) || !spec.offset.is_finite() || n.norm() < 1e-12 {
            return Err(invalid("plane normal must be finite and nonzero"));
        }
        let scale = n.norm();
        let normal = n / scale;
        let helper = if normal.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let u = normal.cross(&helper).normalize();
        let v = normal.cross(&u);
        let tables = (0..3u64)
            .map(|c| {
                (0..OCTAVES.len() as u64)
                    .map(|o| {
                        let mut r = rng::substream(spec.texture_seed, c * 16 + o);
                        (0..TABLE * TABLE).map(|_| r.random::<f64>()).collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            normal,
            offset: spec.offset / scale,
            u,
            v,
            tables,
        })
    }

    fn texture(&self, x: &Vector3<f64>, cell: f64, channel: usize) -> f64 {
        let (a, b) = (self.u.dot(x), self.v.dot(x));
        OCTAVES
            .iter()
            .zip(&self.tables[channel])
            .map(|((size, weight), table)| {
                weight * value_noise(table, a / (cell * size), b / (cell * size))
            })
            .sum::<f64>()
            * 255.0
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

// Periodic lattice lookup with smoothstep interpolation.
fn value_noise(table: &[f64], a: f64, b: f64) -> f64 {
    let (fa, fb) = (a.floor(), b.floor());
    let (ta, tb) = (smooth(a - fa), smooth(b - fb));
    let wrap = |k: f64| (k.rem_euclid(TABLE as f64)) as usize;
    let (i0, j0) = (wrap(fa), wrap(fb));
    let (i1, j1) = ((i0 + 1) % TABLE, (j0 + 1) % TABLE);
    let at = |i: usize, j: usize| table[j * TABLE + i];
    let top = at(i0, j0) * (1.0 - ta) + at(i1, j0) * ta;
    let bottom = at(i0, j1) * (1.0 - ta) + at(i1, j1) * ta;
    top * (1.0 - tb) + bottom * tb
}

/// Renders every view by intersecting pixel rays with the planes and keeping
/// the nearest hit. Depth is the camera-frame `z` of the hit.
pub fn synth_scene(spec: &SceneSpec) -> Result<Vec<SynthView>> {
    let (h, w) = (spec.height, spec.width);
    if h == 0 || w == 0 {
        return Err(invalid("image size must be positive"));
    }
    if spec.planes.is_empty() || spec.poses.is_empty() {
        return Err(invalid("scene needs at least one plane and one pose"));
    }
    if !(spec.texture_scale > 0.0 && spec.texture_scale.is_finite()) {
        return Err(invalid("texture_scale must be positive"));
    }
    let planes = spec
        .planes
        .iter()
        .map(Plane::new)
        .collect::<Result<Vec<_>>>()?;
    let k = &spec.intrinsics;
    let corners = [
        (0.0, 0.0),
        ((w - 1) as f64, 0.0),
        (0.0, (h - 1) as f64),
        ((w - 1) as f64, (h - 1) as f64),
    ];

    let mut views = Vec::with_capacity(spec.poses.len());
    for (vi, pose) in spec.poses.iter().enumerate() {
        let rt = pose.rotation.transpose();
        let center = -(rt * pose.translation);
        // Ray parameter along K^-1 (x, y, 1) rotated into the world; it equals
        // the camera-frame depth.
        let hit = |plane: &Plane, ray_cam: &Vector3<f64>| -> Option<f64> {
            let dir = rt * ray_cam;
            let denom = plane.normal.dot(&dir);
            if denom.abs() < 1e-12 {
                return None;
            }
            let s = (plane.offset - plane.normal.dot(&center)) / denom;
            (s > 0.0 && s.is_finite()).then_some(s)
        };
        for (pi, plane) in planes.iter().enumerate() {
            if (plane.normal.dot(&center) - plane.offset).abs() < 1e-9 {
                return Err(invalid(format!("camera {vi} lies on plane {pi}")));
            }
            // Visibility of a plane is linear in pixel coordinates, so the
            // corners decide whether any part of the image sees it.
            let visible = corners
                .iter()
                .any(|(x, y)| hit(plane, &k.normalize(&Pixel::new(*x, *y))).is_some());
            if !visible {
                return Err(invalid(format!("plane {pi} lies behind camera {vi}")));
            }
        }

        let mut labels = vec![None; h * w];
        let mut depth = vec![0.0; h * w];
        let mut normals = vec![Vector3::zeros(); h * w];
        let mut image = vec![0.0; h * w * 3];
        for i in 0..h {
            for j in 0..w {
                let ray = k.normalize(&Pixel::new(j as f64, i as f64));
                let best = planes
                    .iter()
                    .enumerate()
                    .filter_map(|(pi, p)| hit(p, &ray).map(|s| (pi, s)))
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                let Some((pi, s)) = best else { continue };
                let idx = i * w + j;
                labels[idx] = Some(pi);
                depth[idx] = s;
                let mut n = pose.rotation * planes[pi].normal;
                if n.dot(&ray) > 0.0 {
                    n = -n;
                }
                normals[idx] = n;
                let world = center + rt * ray * s;
                for c in 0..3 {
                    image[idx * 3 + c] = planes[pi].texture(&world, spec.texture_scale, c);
                }
            }
        }
        let valid: Vec<bool> = labels.iter().map(Option::is_some).collect();
        views.push(SynthView {
            image: DenseMap::new(h, w, 3, image)?,
            depth: DepthMap::new(h, w, depth, valid.clone())?,
            normals: NormalMap::new(h, w, normals, valid)?,
            intrinsics: *k,
            pose: *pose,
            labels,
        });
    }
    Ok(views)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{backproject, gt_correspondence, DEFAULT_REL_DEPTH_TAU};

    fn spec(planes: Vec<PlaneSpec>, poses: Vec<RigidPose>) -> SceneSpec {
        SceneSpec {
            planes,
            intrinsics: Intrinsics::new(80.0, 80.0, 31.5, 23.5).unwrap(),
            poses,
            height: 48,
            width: 64,
            texture_scale: 0.2,
        }
    }

    fn wall(z: f64, seed: u64) -> PlaneSpec {
        PlaneSpec {
            normal: [0.0, 0.0, 1.0],
            offset: z,
            texture_seed: seed,
        }
    }

    #[test]
    fn fronto_parallel_plane_has_constant_depth() {
        let views = synth_scene(&spec(vec![wall(5.0, 1)], vec![RigidPose::identity()])).unwrap();
        let v = &views[0];
        for i in 0..48 {
            for j in 0..64 {
                assert_eq!(v.depth.get(i, j), Some(5.0));
                let n = v.normals.get(i, j).unwrap();
                assert!((n - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
            }
        }
        assert!(v.image.values().iter().all(|x| (0.0..=255.0).contains(x)));
        let spread = v
            .image
            .values()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            - v.image
                .values()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
        assert!(spread > 50.0, "texture is too flat: {spread}");
    }

    #[test]
    fn two_planes_meet_on_the_projected_intersection() {
        // Floor y = 1 and wall z = 6 meet on the world line {y = 1, z = 6},
        // which projects to image row cy + f / 6.
        let floor = PlaneSpec {
            normal: [0.0, 1.0, 0.0],
            offset: 1.0,
            texture_seed: 2,
        };
        let views = synth_scene(&spec(
            vec![wall(6.0, 1), floor],
            vec![RigidPose::identity()],
        ))
        .unwrap();
        let v = &views[0];
        let boundary = 23.5 + 80.0 / 6.0;
        for i in 0..48 {
            for j in 0..64 {
                let expect = if (i as f64) < boundary { 0 } else { 1 };
                assert_eq!(v.labels[i * 64 + j], Some(expect), "row {i}");
            }
        }
        // Depth is continuous across the crease and exact on both sides.
        for i in 0..48 {
            let d = v.depth.get(i, 10).unwrap();
            let expect = if (i as f64) < boundary {
                6.0
            } else {
                80.0 / (i as f64 - 23.5)
            };
            assert!((d - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn depths_reproject_between_views() {
        let poses = vec![
            RigidPose::identity(),
            RigidPose::from_axis_angle(Vector3::y(), 0.05, Vector3::new(-0.3, 0.0, 0.1)),
        ];
        let tilted = PlaneSpec {
            normal: [0.2, -0.1, 1.0],
            offset: 5.0,
            texture_seed: 9,
        };
        let views = synth_scene(&spec(vec![tilted], poses)).unwrap();
        let rel = views[0].relative_pose(&views[1]);
        let k = views[0].intrinsics;
        let gt = gt_correspondence(
            &views[0].depth,
            &views[1].depth,
            &k,
            &k,
            &rel,
            DEFAULT_REL_DEPTH_TAU,
        )
        .unwrap();
        assert!(gt.valid_mask().count() > 48 * 64 / 2);
        for (i, j) in gt.valid_mask().positions() {
            let x1 = backproject(
                &Pixel::new(j as f64, i as f64),
                views[0].depth.get(i, j).unwrap(),
                &k,
            )
            .unwrap();
            let world = views[0].pose.inverse().transform(&x1);
            let n = Vector3::new(0.2, -0.1, 1.0);
            assert!((n.dot(&world) - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = spec(
            vec![wall(5.0, 4), wall(7.0, 5)],
            vec![RigidPose::identity()],
        );
        assert_eq!(synth_scene(&s).unwrap(), synth_scene(&s).unwrap());
    }

    #[test]
    fn plane_behind_camera_is_rejected() {
        assert!(synth_scene(&spec(vec![wall(-3.0, 1)], vec![RigidPose::identity()])).is_err());
        assert!(synth_scene(&spec(vec![wall(0.0, 1)], vec![RigidPose::identity()])).is_err());
    }

    #[test]
    fn spec_json_rejects_unknown_keys() {
        let s = spec(vec![wall(5.0, 1)], vec![RigidPose::identity()]);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&text).unwrap(), s);
        let extra = text.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<SceneSpec>(&extra).is_err());
    }
}
