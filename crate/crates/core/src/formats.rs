//! Line-delimited JSON records consumed by the evaluation commands.

use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, RigidPose};
use crate::pose_eval::PixelMatch;
use crate::{Error, Pixel, Result};

/// One two-view pose evaluation pair. `matches` rows are `[x1, y1, x2, y2]`,
/// matrices are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub matches: Vec<[f64; 4]>,
    #[serde(rename = "K1")]
    pub k1: [f64; 9],
    #[serde(rename = "K2")]
    pub k2: [f64; 9],
    #[serde(rename = "gt_R")]
    pub gt_r: [f64; 9],
    pub gt_t: [f64; 3],
}

/// Validated form of [`PoseRecord`].
#[derive(Clone, Debug)]
pub struct PosePair {
    pub matches: Vec<PixelMatch>,
    pub k1: Intrinsics,
    pub k2: Intrinsics,
    pub gt: RigidPose,
}

fn to_matches(rows: &[[f64; 4]]) -> Vec<PixelMatch> {
    rows.iter()
        .map(|m| (Pixel::new(m[0], m[1]), Pixel::new(m[2], m[3])))
        .collect()
}

pub fn from_matches(matches: &[PixelMatch]) -> Vec<[f64; 4]> {
    matches.iter().map(|(p, q)| [p.x, p.y, q.x, q.y]).collect()
}

pub fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    std::array::from_fn(|k| m[(k / 3, k % 3)])
}

impl PoseRecord {
    pub fn validate(&self) -> Result<PosePair> {
        Ok(PosePair {
            matches: to_matches(&self.matches),
            k1: Intrinsics::from_matrix(Matrix3::from_row_slice(&self.k1))?,
            k2: Intrinsics::from_matrix(Matrix3::from_row_slice(&self.k2))?,
            gt: RigidPose::new(
                Matrix3::from_row_slice(&self.gt_r),
                Vector3::from_column_slice(&self.gt_t),
            )?,
        })
    }

    pub fn from_pair(pair: &PosePair) -> Self {
        Self {
            matches: from_matches(&pair.matches),
            k1: row_major(pair.k1.matrix()),
            k2: row_major(pair.k2.matrix()),
            gt_r: row_major(&pair.gt.rotation),
            gt_t: [
                pair.gt.translation.x,
                pair.gt.translation.y,
                pair.gt.translation.z,
            ],
        }
    }
}

/// One homography evaluation pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomographyRecord {
    pub matches: Vec<[f64; 4]>,
    #[serde(rename = "H_gt")]
    pub h_gt: [f64; 9],
    pub image_h: usize,
    pub image_w: usize,
}

impl HomographyRecord {
    pub fn matches(&self) -> Vec<PixelMatch> {
        to_matches(&self.matches)
    }

    pub fn h_gt(&self) -> Result<Matrix3<f64>> {
        if self.h_gt.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("H_gt must be finite".into()));
        }
        Ok(Matrix3::from_row_slice(&self.h_gt))
    }
}

/// Parses JSON lines, skipping blank lines. Errors carry the 1-based line.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("line {}: {e}", k + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_pose_records(text: &str) -> Result<Vec<PosePair>> {
    parse_jsonl::<PoseRecord>(text)?
        .iter()
        .enumerate()
        .map(|(k, r)| {
            r.validate()
                .map_err(|e| Error::Format(format!("record {}: {e}", k + 1)))
        })
        .collect()
}

pub fn parse_homography_records(text: &str) -> Result<Vec<HomographyRecord>> {
    let recs: Vec<HomographyRecord> = parse_jsonl(text)?;
    for (k, r) in recs.iter().enumerate() {
        r.h_gt()
            .map_err(|e| Error::Format(format!("record {}: {e}", k + 1)))?;
    }
    Ok(recs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const POSE_LINE: &str = r#"{"matches":[[1,2,3,4]],"K1":[500,0,320,0,500,240,0,0,1],"K2":[500,0,320,0,500,240,0,0,1],"gt_R":[1,0,0,0,1,0,0,0,1],"gt_t":[1,0,0]}"#;

    #[test]
    fn pose_records_round_trip() {
        let text = format!("{POSE_LINE}\n\n{POSE_LINE}\n");
        let pairs = parse_pose_records(&text).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(
            pairs[0].matches[0],
            (Pixel::new(1.0, 2.0), Pixel::new(3.0, 4.0))
        );
        let back = serde_json::to_string(&PoseRecord::from_pair(&pairs[0])).unwrap();
        assert_eq!(parse_pose_records(&back).unwrap()[0].k1, pairs[0].k1);
    }

    #[test]
    fn bad_records_name_their_line() {
        let err = parse_pose_records(&format!("{POSE_LINE}\n{{\"matches\":[]}}\n")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let bad_r = POSE_LINE.replace("\"gt_R\":[1,0,0", "\"gt_R\":[2,0,0");
        assert!(parse_pose_records(&bad_r)
            .unwrap_err()
            .to_string()
            .contains("record 1"));
        let extra = POSE_LINE.replace("}", ",\"x\":1}");
        assert!(parse_pose_records(&extra).is_err());
    }

    #[test]
    fn homography_records_parse() {
        let line =
            r#"{"matches":[[0,0,1,1]],"H_gt":[1,0,1,0,1,1,0,0,1],"image_h":10,"image_w":20}"#;
        let recs = parse_homography_records(line).unwrap();
        assert_eq!(recs[0].h_gt().unwrap()[(0, 2)], 1.0);
        assert_eq!(recs[0].matches().len(), 1);
    }
}
