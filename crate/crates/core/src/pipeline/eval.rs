use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::formats::{HomographyRecord, PosePair};
use crate::pose_eval::{
    auc, decompose_essential, estimate_essential_with, estimate_homography_ransac,
    homography_corner_error, map_at, pose_error, ErrorCurve, PixelMatch, PoseError, RansacParams,
};
use crate::Result;

/// Named scalar metrics serialised as a JSON object in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics(pub Vec<(String, f64)>);

impl Metrics {
    /// Entries `"{prefix}@{t}"` for paired thresholds and values.
    pub fn at(prefix: &str, thresholds: &[f64], values: &[f64]) -> Self {
        Self(
            thresholds
                .iter()
                .zip(values)
                .map(|(t, v)| (format!("{prefix}@{t}"), *v))
                .collect(),
        )
    }

    pub fn extend(&mut self, other: Metrics) {
        self.0.extend(other.0);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

impl Serialize for Metrics {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// Pose estimate for one pair; `error` is absent when estimation failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoseOutcome {
    pub error: Option<PoseError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub inliers: usize,
}

impl PoseOutcome {
    /// Maximum angular error, `+inf` for a failed pair.
    pub fn max_deg(&self) -> f64 {
        self.error.map_or(f64::INFINITY, |e| e.max_deg)
    }
}

/// RANSAC, cheirality and angular error against the ground-truth pose.
/// Estimation failures are outcomes, not errors.
pub fn estimate_pose(pair: &PosePair, params: &RansacParams, seed: u64) -> PoseOutcome {
    let attempt = || -> Result<(PoseError, usize)> {
        let (e, mask) = estimate_essential_with(&pair.matches, &pair.k1, &pair.k2, params, seed)?;
        let inl: Vec<PixelMatch> = pair
            .matches
            .iter()
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|(p, _)| *p)
            .collect();
        let rel = decompose_essential(&e, &inl, &pair.k1, &pair.k2)?;
        let err = pose_error(
            &rel.rotation,
            &rel.translation,
            &pair.gt.rotation,
            &pair.gt.translation,
        )?;
        Ok((err, inl.len()))
    };
    match attempt() {
        Ok((err, inliers)) => PoseOutcome {
            error: Some(err),
            failure: None,
            inliers,
        },
        Err(e) => PoseOutcome {
            error: None,
            failure: Some(e.to_string()),
            inliers: 0,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoseEvalReport {
    /// Maximum of rotation and translation error per pair; null on failure.
    pub per_pair_errors: Vec<Option<f64>>,
    pub pairs: Vec<PoseOutcome>,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// AUC and mAP of the maximum angular error over pairs; failed pairs count as
/// infinitely wrong.
pub fn eval_pose_pairs(
    pairs: &[PosePair],
    params: &RansacParams,
    seed: u64,
    auc_thresholds: &[f64],
    map_thresholds: &[f64],
) -> Result<PoseEvalReport> {
    let outcomes: Vec<PoseOutcome> = pairs
        .iter()
        .map(|p| estimate_pose(p, params, seed))
        .collect();
    let metrics = curve_metrics(
        &outcomes
            .iter()
            .map(PoseOutcome::max_deg)
            .collect::<Vec<_>>(),
        auc_thresholds,
        map_thresholds,
    )?;
    Ok(PoseEvalReport {
        per_pair_errors: outcomes
            .iter()
            .map(|o| o.error.map(|e| e.max_deg))
            .collect(),
        pairs: outcomes,
        metrics,
    })
}

pub(crate) fn curve_metrics(
    errors: &[f64],
    auc_thresholds: &[f64],
    map_thresholds: &[f64],
) -> Result<Metrics> {
    let curve = ErrorCurve::new(errors.to_vec())?;
    let mut m = Metrics::at("auc", auc_thresholds, &auc(&curve, auc_thresholds)?);
    if !map_thresholds.is_empty() {
        m.extend(Metrics::at(
            "map",
            map_thresholds,
            &map_at(&curve, map_thresholds)?,
        ));
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomographyEvalReport {
    /// Mean corner error in pixels; null on failure.
    pub per_pair_errors: Vec<Option<f64>>,
    #[serde(flatten)]
    pub metrics: Metrics,
}

pub fn eval_homography_records(
    records: &[HomographyRecord],
    inlier_px: f64,
    max_iters: usize,
    seed: u64,
    thresholds: &[f64],
) -> Result<HomographyEvalReport> {
    let mut per_pair = Vec::with_capacity(records.len());
    for rec in records {
        let h_gt = rec.h_gt()?;
        let err = estimate_homography_ransac(&rec.matches(), inlier_px, max_iters, seed)
            .and_then(|h| homography_corner_error(&h, &h_gt, rec.image_h, rec.image_w))
            .ok();
        per_pair.push(err);
    }
    let errors: Vec<f64> = per_pair
        .iter()
        .map(|e| e.unwrap_or(f64::INFINITY))
        .collect();
    Ok(HomographyEvalReport {
        metrics: curve_metrics(&errors, thresholds, &[])?,
        per_pair_errors: per_pair,
    })
}
