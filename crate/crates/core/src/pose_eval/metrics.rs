use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape};
use crate::grid_ops::{BoolMask, CorrespondenceField};
use crate::{Error, Result};

/// Angular pose error in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rot_deg: f64,
    pub trans_deg: f64,
    pub max_deg: f64,
}

/// Rotation angle of `est^T gt` and angle between translation directions.
pub fn pose_error(
    est_r: &Matrix3<f64>,
    est_t: &Vector3<f64>,
    gt_r: &Matrix3<f64>,
    gt_t: &Vector3<f64>,
) -> Result<PoseError> {
    let all = est_r
        .iter()
        .chain(gt_r.iter())
        .chain(est_t.iter())
        .chain(gt_t.iter());
    if all.into_iter().any(|v| !v.is_finite()) {
        return Err(invalid("pose must be finite"));
    }
    if est_t.norm() == 0.0 || gt_t.norm() == 0.0 {
        return Err(Error::Degenerate(
            "translation direction undefined for zero translation".into(),
        ));
    }
    let rot_deg = rotation_angle(&(est_r.transpose() * gt_r)).to_degrees();
    let trans_deg = est_t.cross(gt_t).norm().atan2(est_t.dot(gt_t)).to_degrees();
    Ok(PoseError {
        rot_deg,
        trans_deg,
        max_deg: rot_deg.max(trans_deg),
    })
}

fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    )
    .norm();
    s.atan2(r.trace() - 1.0)
}

/// Per-pair errors sorted ascending. Failed pairs may be recorded as `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCurve {
    sorted: Vec<f64>,
}

impl ErrorCurve {
    pub fn new(mut errors: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::EmptySet("errors"));
        }
        if errors.iter().any(|e| e.is_nan() || *e < 0.0) {
            return Err(invalid("errors must be non-negative numbers"));
        }
        errors.sort_by(f64::total_cmp);
        Ok(Self { sorted: errors })
    }

    pub fn errors(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(invalid("thresholds must be positive and finite"));
    }
    Ok(())
}

/// `AUC@t = (1/t) * integral_0^t F(e) de`, integrated exactly over the
/// empirical CDF: each error `e_i < t` contributes `(t - e_i) / (N t)`.
pub fn auc(curve: &ErrorCurve, thresholds: &[f64]) -> Result<Vec<f64>> {
    check_thresholds(thresholds)?;
    let n = curve.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let area: f64 = curve
                .sorted
                .iter()
                .take_while(|e| **e < t)
                .fold(0.0, |acc, e| acc + (t - e));
            (area / (n * t)).clamp(0.0, 1.0)
        })
        .collect())
}

/// Fraction of errors `<= t`.
pub fn map_at(curve: &ErrorCurve, thresholds: &[f64]) -> Result<Vec<f64>> {
    check_thresholds(thresholds)?;
    let n = curve.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| curve.sorted.partition_point(|e| *e <= t) as f64 / n)
        .collect())
}

/// Fraction of masked pixels whose predicted target lies within `delta` px of
/// the ground truth. Invalid predictions count as misses.
pub fn pck(
    pred: &CorrespondenceField,
    gt: &CorrespondenceField,
    mask: &BoolMask,
    deltas: &[f64],
) -> Result<Vec<f64>> {
    let (h, w) = (gt.height(), gt.width());
    if (pred.height(), pred.width()) != (h, w) || (mask.height(), mask.width()) != (h, w) {
        return Err(shape(
            "pck: prediction, ground truth and mask must share a grid",
        ));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(invalid("pck thresholds must be non-negative"));
    }
    let mut errs = Vec::new();
    for (row, col) in mask.positions() {
        let truth = gt
            .get(row, col)
            .ok_or_else(|| invalid(format!("no ground truth at masked pixel ({col}, {row})")))?;
        errs.push(
            pred.get(row, col)
                .map_or(f64::INFINITY, |p| (p - truth).norm()),
        );
    }
    if errs.is_empty() {
        return Err(Error::EmptySet("pck mask"));
    }
    let n = errs.len() as f64;
    Ok(deltas
        .iter()
        .map(|d| errs.iter().filter(|e| **e <= *d).count() as f64 / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::Pixel;
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn rot_z(deg: f64) -> Matrix3<f64> {
        *Rotation3::from_axis_angle(&Vector3::z_axis(), deg.to_radians()).matrix()
    }

    #[test]
    fn pose_error_examples() {
        let t = Vector3::new(1.0, 0.5, -0.2);
        let r = rot_z(17.0);
        let e = pose_error(&r, &t, &r, &t).unwrap();
        assert!(e.rot_deg.abs() < 1e-12 && e.trans_deg.abs() < 1e-12 && e.max_deg.abs() < 1e-12);

        let e = pose_error(&(rot_z(10.0) * r), &t, &r, &t).unwrap();
        assert!((e.max_deg - 10.0).abs() < 1e-10);
        assert!((e.rot_deg - 10.0).abs() < 1e-10);

        let e = pose_error(&r, &-t, &r, &t).unwrap();
        assert!((e.trans_deg - 180.0).abs() < 1e-10);
        assert_eq!(e.max_deg, e.rot_deg.max(e.trans_deg));
    }

    #[test]
    fn zero_translation_is_rejected() {
        let r = Matrix3::identity();
        assert!(pose_error(&r, &Vector3::zeros(), &r, &Vector3::x()).is_err());
        assert!(pose_error(&r, &Vector3::x(), &r, &Vector3::zeros()).is_err());
    }

    #[test]
    fn rotation_error_is_symmetric() {
        let mut g = rng::seeded(3);
        for _ in 0..100 {
            let mut axis = || {
                Vector3::new(
                    g.random_range(-1.0..1.0),
                    g.random_range(-1.0..1.0),
                    g.random_range(-1.0..1.0),
                )
            };
            let a = *Rotation3::new(axis() * 2.0).matrix();
            let b = *Rotation3::new(axis() * 2.0).matrix();
            let (ta, tb) = (axis(), axis());
            let ab = pose_error(&a, &ta, &b, &tb).unwrap();
            let ba = pose_error(&b, &tb, &a, &ta).unwrap();
            assert!((ab.rot_deg - ba.rot_deg).abs() < 1e-9);
            assert!((ab.trans_deg - ba.trans_deg).abs() < 1e-9);
        }
    }

    #[test]
    fn small_rotations_resolve_precisely() {
        let e = pose_error(
            &rot_z(1e-6),
            &Vector3::x(),
            &Matrix3::identity(),
            &Vector3::x(),
        )
        .unwrap();
        assert!((e.rot_deg - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn auc_examples() {
        let zeros = ErrorCurve::new(vec![0.0; 7]).unwrap();
        assert_eq!(auc(&zeros, &[5.0, 10.0, 20.0]).unwrap(), vec![1.0; 3]);
        let big = ErrorCurve::new(vec![25.0, 30.0, f64::INFINITY]).unwrap();
        let none = auc(&big, &[5.0, 10.0, 20.0]).unwrap();
        assert_eq!(none, vec![0.0; 3]);
        assert!(none.iter().all(|a| a.is_sign_positive()));
        let c = ErrorCurve::new(vec![12.0, 2.0, 4.0]).unwrap();
        let a = auc(&c, &[5.0, 10.0]).unwrap();
        assert!((a[0] - 4.0 / 15.0).abs() < 1e-15);
        assert!((a[1] - 7.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn auc_and_map_reject_bad_input() {
        assert!(ErrorCurve::new(vec![]).is_err());
        assert!(ErrorCurve::new(vec![f64::NAN]).is_err());
        assert!(ErrorCurve::new(vec![-1.0]).is_err());
        let c = ErrorCurve::new(vec![1.0]).unwrap();
        assert!(auc(&c, &[0.0]).is_err());
        assert!(map_at(&c, &[-3.0]).is_err());
    }

    #[test]
    fn map_examples() {
        let c = ErrorCurve::new(vec![2.0, 4.0, 12.0]).unwrap();
        assert!((map_at(&c, &[5.0]).unwrap()[0] - 2.0 / 3.0).abs() < 1e-15);
        let edge = ErrorCurve::new(vec![5.0]).unwrap();
        assert_eq!(map_at(&edge, &[5.0]).unwrap(), vec![1.0]);
    }

    proptest! {
        #[test]
        fn map_bounds_auc(errs in proptest::collection::vec(0.0f64..30.0, 1..40), t in 0.1f64..25.0) {
            let c = ErrorCurve::new(errs).unwrap();
            prop_assert!(map_at(&c, &[t]).unwrap()[0] >= auc(&c, &[t]).unwrap()[0]);
        }

        #[test]
        fn auc_monotone_under_improvement(
            errs in proptest::collection::vec(0.0f64..30.0, 1..40),
            pick in any::<prop::sample::Index>(),
            shrink in 0.0f64..1.0,
        ) {
            let ts = [5.0, 10.0, 20.0];
            let before = auc(&ErrorCurve::new(errs.clone()).unwrap(), &ts).unwrap();
            let mut improved = errs.clone();
            let i = pick.index(improved.len());
            improved[i] *= shrink;
            let after = auc(&ErrorCurve::new(improved).unwrap(), &ts).unwrap();
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(a >= b);
            }
        }
    }

    #[test]
    fn pck_examples() {
        let gt = CorrespondenceField::identity(6, 5);
        let all = BoolMask::filled(6, 5, true);
        assert_eq!(pck(&gt, &gt, &all, &[1.0, 3.0, 5.0]).unwrap(), vec![1.0; 3]);
        let shifted =
            CorrespondenceField::from_fn(6, 5, |i, j| Some(Pixel::new(j as f64 + 2.0, i as f64)));
        assert_eq!(
            pck(&shifted, &gt, &all, &[1.0, 3.0, 5.0]).unwrap(),
            vec![0.0, 1.0, 1.0]
        );
        assert!(pck(&gt, &gt, &BoolMask::filled(6, 5, false), &[1.0]).is_err());
    }

    #[test]
    fn pck_nondecreasing_on_random_fields() {
        let mut g = rng::seeded(8);
        for _ in 0..20 {
            let gt = CorrespondenceField::identity(8, 8);
            let pred = CorrespondenceField::from_fn(8, 8, |i, j| {
                Some(Pixel::new(
                    j as f64 + g.random_range(-6.0..6.0),
                    i as f64 + g.random_range(-6.0..6.0),
                ))
            });
            let deltas: Vec<f64> = (0..12).map(|d| d as f64 * 0.7).collect();
            let v = pck(&pred, &gt, &BoolMask::filled(8, 8, true), &deltas).unwrap();
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
