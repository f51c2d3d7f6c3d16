use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::Rng as _;
use serde::Serialize;

use super::eval::{
    curve_metrics, estimate_pose, eval_homography_records, eval_pose_pairs, Metrics, PoseOutcome,
};
use super::{
    pair_overlaps, sample_weighted_pairs, synth_scene, InputPaths, RunConfig, SceneSpec, SynthView,
};
use crate::camera::{
    gt_correspondence, normals_from_depth, DepthMap, Intrinsics, NormalMap, RigidPose,
};
use crate::error::invalid;
use crate::formats::{parse_homography_records, parse_pose_records, PosePair};
use crate::grid_ops::{
    read_dense_map, read_masked_map, recon_metrics, warp_reconstruct, ConfidenceMap,
    CorrespondenceField, DenseMap, ReconMetrics,
};
use crate::losses::{
    confidence_loss, default_negative_mask, global_matching_loss, homography_loss, refinement_loss,
    total_loss, MatchSupervision,
};
use crate::matching::{
    correlation_volume, dual_softmax, mutual_nn_matches, patch_features, CoordGrid,
};
use crate::mim_mask::gen_mask_pair;
use crate::planar::{coplanar_indicator, sample_coplanar_set, PlanarScene};
use crate::pose_eval::{pck, PixelMatch};
use crate::{rng, Error, Result};

/// Everything known about one source/support pair.
#[derive(Clone, Debug)]
pub struct PairInputs {
    pub image1: Option<DenseMap>,
    pub image2: Option<DenseMap>,
    pub depth1: DepthMap,
    pub depth2: DepthMap,
    /// Exact source normals; estimated from depth when absent.
    pub normals1: Option<NormalMap>,
    pub k1: Intrinsics,
    pub k2: Intrinsics,
    /// Source-to-support.
    pub pose: RigidPose,
    pub flow: Option<CorrespondenceField>,
    pub confidence: Option<ConfidenceMap>,
}

impl PairInputs {
    pub fn from_views(a: &SynthView, b: &SynthView) -> Self {
        Self {
            image1: Some(a.image.clone()),
            image2: Some(b.image.clone()),
            depth1: a.depth.clone(),
            depth2: b.depth.clone(),
            normals1: Some(a.normals.clone()),
            k1: a.intrinsics,
            k2: b.intrinsics,
            pose: a.relative_pose(b),
            flow: None,
            confidence: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoplanarSummary {
    pub anchors: usize,
    pub positives: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchSummary {
    pub source_cells: usize,
    pub support_cells: usize,
    pub mutual: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossSummary {
    pub refinement: Option<f64>,
    pub confidence: Option<f64>,
    pub global: Option<f64>,
    pub homography: Option<f64>,
    /// Weighted sum, present when every term is.
    pub total: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaskSummary {
    pub seeds: [u64; 2],
    pub masked_cells: [usize; 2],
    pub cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PckSummary {
    /// `"flow"` for a dense prediction, `"coarse_matches"` for mutual
    /// nearest-neighbour cell matches.
    pub source: &'static str,
    pub points: usize,
    pub values: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub views: Option<[usize; 2]>,
    pub seed: u64,
    pub gt_valid: usize,
    pub overlap: f64,
    pub coplanar: CoplanarSummary,
    pub matching: Option<MatchSummary>,
    pub mask: Option<MaskSummary>,
    pub losses: LossSummary,
    pub reconstruction: Option<ReconMetrics>,
    pub pck: Option<PckSummary>,
    pub pose: Option<PoseOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub pairs: usize,
    pub pose: Option<Metrics>,
    pub mean_pck: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    /// Seconds since the Unix epoch; the only field that varies between runs.
    pub timestamp: u64,
    pub version: &'static str,
    pub config: RunConfig,
    pub pairs: Vec<PairReport>,
    pub summary: Summary,
    pub pose_records: Option<super::eval::PoseEvalReport>,
    pub homography_records: Option<super::eval::HomographyEvalReport>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Seed of the pair at `index`, derived from the run seed.
pub fn pair_seed(seed: u64, index: usize) -> u64 {
    rng::substream(seed, index as u64).random()
}

fn open(root: &Path, rel: &str) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(root.join(rel))?))
}

fn read_text(root: &Path, rel: &str) -> Result<String> {
    Ok(std::fs::read_to_string(root.join(rel))?)
}

pub fn load_depth(root: &Path, rel: &str) -> Result<DepthMap> {
    let (_, map, mask) = read_masked_map(&mut open(root, rel)?)?;
    DepthMap::from_map(&map, &mask)
}

pub fn load_normals(root: &Path, rel: &str) -> Result<NormalMap> {
    let (_, map, mask) = read_masked_map(&mut open(root, rel)?)?;
    NormalMap::from_map(&map, &mask)
}

pub fn load_image(root: &Path, rel: &str) -> Result<DenseMap> {
    Ok(read_dense_map(&mut open(root, rel)?)?.1)
}

pub fn load_field(root: &Path, rel: &str) -> Result<CorrespondenceField> {
    let (_, map, mask) = read_masked_map(&mut open(root, rel)?)?;
    CorrespondenceField::from_map(&map, &mask)
}

pub fn load_confidence(root: &Path, rel: &str) -> Result<ConfidenceMap> {
    let map = load_image(root, rel)?;
    if map.channels() != 1 {
        return Err(Error::ShapeMismatch(
            "confidence map must have one channel".into(),
        ));
    }
    ConfidenceMap::new(map.height(), map.width(), map.values().to_vec())
}

pub fn load_json<T: serde::de::DeserializeOwned>(root: &Path, rel: &str) -> Result<T> {
    Ok(serde_json::from_str(&read_text(root, rel)?)?)
}

enum Workload {
    Scene(Vec<SynthView>, Vec<(usize, usize)>),
    Explicit(Box<PairInputs>),
    None,
}

fn ingest(cfg: &RunConfig, root: &Path) -> Result<Workload> {
    let inp = &cfg.inputs;
    if let Some(scene) = &inp.scene {
        let spec: SceneSpec = load_json(root, scene)?;
        let views = synth_scene(&spec)?;
        let pairs = match &cfg.pairs.explicit {
            Some(list) => {
                for [a, b] in list {
                    if *a >= views.len() || *b >= views.len() {
                        return Err(invalid(format!("pair [{a}, {b}] refers to a missing view")));
                    }
                }
                list.iter().map(|[a, b]| (*a, *b)).collect()
            }
            None => {
                let overlaps = pair_overlaps(&views, cfg.rel_depth_tau)?;
                sample_weighted_pairs(
                    &overlaps,
                    cfg.pairs.overlap_lo,
                    cfg.pairs.overlap_hi,
                    cfg.pairs.count,
                    cfg.seed,
                )?
            }
        };
        return Ok(Workload::Scene(views, pairs));
    }
    match PairInputs::load(inp, root)? {
        Some(p) => Ok(Workload::Explicit(Box::new(p))),
        None => Ok(Workload::None),
    }
}

impl PairInputs {
    /// Reads an explicit pair. Returns `None` when no source depth is named;
    /// `k2` falls back to `k1`.
    pub fn load(inp: &InputPaths, root: &Path) -> Result<Option<Self>> {
        let Some(depth1) = &inp.depth1 else {
            return Ok(None);
        };
        let need = |v: &Option<String>, name: &str| {
            v.clone()
                .ok_or_else(|| invalid(format!("inputs.{name} is required with inputs.depth1")))
        };
        let depth1 = load_depth(root, depth1)?;
        let depth2 = load_depth(root, &need(&inp.depth2, "depth2")?)?;
        let k1: Intrinsics = load_json(root, &need(&inp.k1, "k1")?)?;
        let k2: Intrinsics = match &inp.k2 {
            Some(p) => load_json(root, p)?,
            None => k1,
        };
        let pose: RigidPose = load_json(root, &need(&inp.pose, "pose")?)?;
        let image = |v: &Option<String>| v.as_deref().map(|p| load_image(root, p)).transpose();
        Ok(Some(Self {
            image1: image(&inp.image1)?,
            image2: image(&inp.image2)?,
            depth1,
            depth2,
            normals1: inp
                .normals1
                .as_deref()
                .map(|p| load_normals(root, p))
                .transpose()?,
            k1,
            k2,
            pose,
            flow: inp
                .flow
                .as_deref()
                .map(|p| load_field(root, p))
                .transpose()?,
            confidence: inp
                .confidence
                .as_deref()
                .map(|p| load_confidence(root, p))
                .transpose()?,
        }))
    }
}

/// Runs gen-gt, coplanar, matching, losses and evaluation on one pair.
pub fn evaluate_pair(
    cfg: &RunConfig,
    input: &PairInputs,
    index: usize,
    seed: u64,
) -> Result<PairReport> {
    let (h, w) = (input.depth1.height(), input.depth1.width());

    let gt = gt_correspondence(
        &input.depth1,
        &input.depth2,
        &input.k1,
        &input.k2,
        &input.pose,
        cfg.rel_depth_tau,
    )
    .map_err(|e| e.in_stage("gen-gt"))?;
    let gt_mask = gt.valid_mask();
    let depth_valid = input.depth1.valid_mask();
    if gt_mask.count() == 0 {
        return Err(Error::EmptySet("ground-truth correspondences").in_stage("gen-gt"));
    }
    let overlap = gt_mask.count() as f64 / depth_valid.count() as f64;

    let coplanar = (|| -> Result<_> {
        let normals = match &input.normals1 {
            Some(n) => n.clone(),
            None => normals_from_depth(&input.depth1, &input.k1)?,
        };
        let pool = normals.valid_mask().and(&gt_mask)?;
        let count = cfg.coplanar.samples.min(pool.count());
        if count == 0 {
            return Ok(None);
        }
        let samples = sample_coplanar_set(&pool, count, seed)?;
        let scene = PlanarScene {
            normals: &normals,
            depth: &input.depth1,
            gt: &gt,
            k1: &input.k1,
            k2: &input.k2,
            pose: &input.pose,
        };
        let indicator = coplanar_indicator(&samples, &scene, &cfg.coplanar.thresholds())?;
        Ok(Some((samples, indicator)))
    })()
    .map_err(|e| e.in_stage("coplanar"))?;
    let coplanar_summary = match &coplanar {
        Some((_, ind)) => CoplanarSummary {
            anchors: ind.size(),
            positives: ind.count(),
            fraction: ind.count() as f64 / (ind.size() * ind.size()) as f64,
        },
        None => CoplanarSummary {
            anchors: 0,
            positives: 0,
            fraction: 0.0,
        },
    };

    let s = cfg.stride;
    let matching = match (&input.image1, &input.image2) {
        (Some(a), Some(b)) => Some(
            (|| -> Result<_> {
                let (f1, f2) = (patch_features(a, s)?, patch_features(b, s)?);
                let c = correlation_volume(&f1, &f2, cfg.gamma)?;
                let dual = dual_softmax(&c.matrix);
                let mutual = mutual_nn_matches(&dual, 0.0);
                let g1 = CoordGrid::cell_centers(f1.height(), f1.width(), s);
                let g2 = CoordGrid::cell_centers(f2.height(), f2.width(), s);
                let pixel_matches: Vec<PixelMatch> = mutual
                    .iter()
                    .map(|m| (g1.0[m.source], g2.0[m.target]))
                    .collect();
                let sup = MatchSupervision::from_ground_truth(
                    &gt,
                    (f1.height(), f1.width()),
                    (f2.height(), f2.width()),
                    s,
                )?;
                let global = if sup.positives.is_empty() || sup.negatives.is_empty() {
                    None
                } else {
                    Some(global_matching_loss(&dual, &sup, cfg.eps)?)
                };
                let summary = MatchSummary {
                    source_cells: f1.len(),
                    support_cells: f2.len(),
                    mutual: mutual.len(),
                };
                Ok((summary, pixel_matches, global))
            })()
            .map_err(|e| e.in_stage("match"))?,
        ),
        (None, None) => None,
        _ => return Err(invalid("both images or neither must be given").in_stage("ingest")),
    };

    let mask = match &input.image1 {
        Some(img) if img.height() >= cfg.mask.patch && img.width() >= cfg.mask.patch => {
            let (m1, m2) = gen_mask_pair(
                img.height(),
                img.width(),
                cfg.mask.patch,
                cfg.mask.ratio,
                seed,
                cfg.mask.shared,
            )
            .map_err(|e| e.in_stage("mask"))?;
            Some(MaskSummary {
                seeds: [m1.seed, m2.seed],
                masked_cells: [m1.selected.len(), m2.selected.len()],
                cells: m1.cells(),
            })
        }
        _ => None,
    };

    let losses = (|| -> Result<LossSummary> {
        let mut l = LossSummary {
            global: matching.as_ref().and_then(|m| m.2),
            ..LossSummary::default()
        };
        if let Some(flow) = &input.flow {
            let p_plus = gt_mask.and(&flow.valid_mask())?;
            if p_plus.count() > 0 {
                l.refinement = Some(refinement_loss(flow, &gt, &p_plus)?);
            }
            if let Some((samples, indicator)) = &coplanar {
                l.homography = Some(homography_loss(flow, &gt, indicator, samples)?);
            }
        }
        if let Some(conf) = &input.confidence {
            let p_minus = default_negative_mask(&gt_mask, &depth_valid)?;
            if p_minus.count() > 0 {
                l.confidence = Some(confidence_loss(conf, &gt_mask, &p_minus, cfg.eps)?);
            }
        }
        if let (Some(r), Some(c), Some(g), Some(hl)) =
            (l.refinement, l.confidence, l.global, l.homography)
        {
            let n = cfg.weights.scales.len();
            l.total = Some(total_loss(
                &vec![r; n],
                &vec![c; n],
                g,
                &vec![hl; n],
                &cfg.weights,
            )?);
        }
        Ok(l)
    })()
    .map_err(|e| e.in_stage("losses"))?;

    let eval = (|| -> Result<_> {
        let reconstruction = match &input.image2 {
            Some(support) if input.image1.is_some() => {
                let field = input.flow.as_ref().unwrap_or(&gt);
                let recon =
                    warp_reconstruct(support, field, &ConfidenceMap::filled(h, w, 1.0)?, 0.5)?;
                let region = gt_mask.and(&field.valid_mask())?;
                if region.count() > 0 {
                    Some(recon_metrics(
                        input.image1.as_ref().expect("checked above"),
                        &recon,
                        &region,
                    )?)
                } else {
                    None
                }
            }
            _ => None,
        };
        let pck_summary = if let Some(flow) = &input.flow {
            Some(PckSummary {
                source: "flow",
                points: gt_mask.count(),
                values: Metrics::at(
                    "pck",
                    &cfg.pck_thresholds_px,
                    &pck(flow, &gt, &gt_mask, &cfg.pck_thresholds_px)?,
                ),
            })
        } else if let Some((_, pm, _)) = &matching {
            let errs: Vec<f64> = pm
                .iter()
                .filter_map(|(p, q)| gt.sample(p.x, p.y).map(|t| (t - q).norm()))
                .collect();
            (!errs.is_empty()).then(|| {
                let n = errs.len() as f64;
                let values: Vec<f64> = cfg
                    .pck_thresholds_px
                    .iter()
                    .map(|d| errs.iter().filter(|e| **e <= *d).count() as f64 / n)
                    .collect();
                PckSummary {
                    source: "coarse_matches",
                    points: errs.len(),
                    values: Metrics::at("pck", &cfg.pck_thresholds_px, &values),
                }
            })
        } else {
            None
        };
        let pose = match &matching {
            Some((_, pm, _)) if input.pose.translation.norm() > 0.0 => {
                let pair = PosePair {
                    matches: pm.clone(),
                    k1: input.k1,
                    k2: input.k2,
                    gt: input.pose,
                };
                Some(estimate_pose(&pair, &cfg.ransac, seed))
            }
            _ => None,
        };
        Ok((reconstruction, pck_summary, pose))
    })()
    .map_err(|e| e.in_stage("eval"))?;

    Ok(PairReport {
        index,
        views: None,
        seed,
        gt_valid: gt_mask.count(),
        overlap,
        coplanar: coplanar_summary,
        matching: matching.map(|m| m.0),
        mask,
        losses,
        reconstruction: eval.0,
        pck: eval.1,
        pose: eval.2,
    })
}

/// Executes the configured chain and assembles one report. Input paths are
/// resolved against `root`; the echoed config keeps them relative.
pub fn run_report(cfg: &RunConfig, root: &Path) -> Result<Report> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let work = ingest(cfg, root).map_err(|e| e.in_stage("ingest"))?;

    let mut pairs = Vec::new();
    match &work {
        Workload::Scene(views, list) => {
            for (index, (a, b)) in list.iter().enumerate() {
                let input = PairInputs::from_views(&views[*a], &views[*b]);
                let mut r = evaluate_pair(cfg, &input, index, pair_seed(cfg.seed, index))?;
                r.views = Some([*a, *b]);
                pairs.push(r);
            }
        }
        Workload::Explicit(input) => {
            pairs.push(evaluate_pair(cfg, input, 0, pair_seed(cfg.seed, 0))?)
        }
        Workload::None => {}
    }

    let pose_records = match &cfg.inputs.pose_records {
        Some(p) => {
            let recs = read_text(root, p)
                .and_then(|t| parse_pose_records(&t))
                .map_err(|e| e.in_stage("ingest"))?;
            Some(
                eval_pose_pairs(
                    &recs,
                    &cfg.ransac,
                    cfg.seed,
                    &cfg.auc_thresholds_deg,
                    &cfg.map_thresholds_deg,
                )
                .map_err(|e| e.in_stage("eval"))?,
            )
        }
        None => None,
    };
    let homography_records = match &cfg.inputs.homography_records {
        Some(p) => {
            let recs = read_text(root, p)
                .and_then(|t| parse_homography_records(&t))
                .map_err(|e| e.in_stage("ingest"))?;
            Some(
                eval_homography_records(
                    &recs,
                    cfg.ransac.inlier_px,
                    cfg.ransac.max_iters,
                    cfg.seed,
                    &cfg.homography_auc_px,
                )
                .map_err(|e| e.in_stage("eval"))?,
            )
        }
        None => None,
    };
    if pairs.is_empty() && pose_records.is_none() && homography_records.is_none() {
        return Err(invalid("config names no inputs").in_stage("ingest"));
    }

    let pose_errors: Vec<f64> = pairs
        .iter()
        .filter_map(|p| p.pose.as_ref().map(PoseOutcome::max_deg))
        .collect();
    let pose = if pose_errors.is_empty() {
        None
    } else {
        Some(
            curve_metrics(
                &pose_errors,
                &cfg.auc_thresholds_deg,
                &cfg.map_thresholds_deg,
            )
            .map_err(|e| e.in_stage("eval"))?,
        )
    };
    let with_pck: Vec<&PckSummary> = pairs.iter().filter_map(|p| p.pck.as_ref()).collect();
    let mean_pck = (!with_pck.is_empty()).then(|| {
        let n = with_pck.len() as f64;
        Metrics(
            with_pck[0]
                .values
                .0
                .iter()
                .enumerate()
                .map(|(k, (key, _))| {
                    (
                        key.clone(),
                        with_pck.iter().map(|p| p.values.0[k].1).sum::<f64>() / n,
                    )
                })
                .collect(),
        )
    });

    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(Report {
        timestamp,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        summary: Summary {
            pairs: pairs.len(),
            pose,
            mean_pck,
        },
        pairs,
        pose_records,
        homography_records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_ops::{write_dense_map, write_masked_map, Dtype};
    use crate::pipeline::PlaneSpec;
    use nalgebra::Vector3;

    fn scene_views(poses: Vec<RigidPose>) -> Vec<SynthView> {
        synth_scene(&SceneSpec {
            planes: vec![
                PlaneSpec {
                    normal: [0.0, 0.0, 1.0],
                    offset: 6.0,
                    texture_seed: 3,
                },
                PlaneSpec {
                    normal: [0.0, 1.0, 0.0],
                    offset: 1.2,
                    texture_seed: 4,
                },
            ],
            intrinsics: Intrinsics::new(60.0, 60.0, 31.5, 23.5).unwrap(),
            poses,
            height: 48,
            width: 64,
            texture_scale: 0.2,
        })
        .unwrap()
    }

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.coplanar.samples = 40;
        cfg.mask.patch = 16;
        cfg
    }

    #[test]
    fn self_pair_scores_perfect_pck() {
        let views = scene_views(vec![RigidPose::identity()]);
        let mut input = PairInputs::from_views(&views[0], &views[0]);
        let r = evaluate_pair(&small_cfg(), &input, 0, 1).unwrap();
        let p = r.pck.unwrap();
        assert_eq!(p.source, "coarse_matches");
        assert!(p.values.0.iter().all(|(_, v)| *v == 1.0));
        assert!(r.pose.is_none());
        assert_eq!(r.overlap, 1.0);
        let rec = r.reconstruction.unwrap();
        assert!(rec.l1 < 1e-9 && rec.one_minus_ssim < 1e-9, "{rec:?}");

        input.flow = Some(CorrespondenceField::identity(48, 64));
        let r = evaluate_pair(&small_cfg(), &input, 0, 1).unwrap();
        let p = r.pck.unwrap();
        assert_eq!(p.source, "flow");
        assert!(p.values.0.iter().all(|(_, v)| *v == 1.0));
        assert!(r.losses.refinement.unwrap() < 1e-12);
        assert!(r.losses.homography.unwrap() < 1e-12);
    }

    #[test]
    fn moving_pair_reports_pose() {
        let views = scene_views(vec![
            RigidPose::identity(),
            RigidPose::from_axis_angle(Vector3::y(), 0.03, Vector3::new(-0.4, 0.0, 0.0)),
        ]);
        let input = PairInputs::from_views(&views[0], &views[1]);
        let r = evaluate_pair(&small_cfg(), &input, 0, 2).unwrap();
        assert!(r.matching.as_ref().unwrap().mutual > 0);
        assert!(r.pose.is_some());
        assert!(r.losses.global.is_some());
        assert!(r.coplanar.positives >= r.coplanar.anchors);
    }

    #[test]
    fn explicit_files_flow_through_and_bad_headers_name_ingest() {
        let dir = std::env::temp_dir().join(format!("geomatch-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let views = scene_views(vec![RigidPose::identity()]);
        let v = &views[0];
        let (dm, dv) = v.depth.to_map();
        write_masked_map(
            &mut File::create(dir.join("d.bin")).unwrap(),
            &dm,
            &dv,
            Dtype::F64,
        )
        .unwrap();
        write_dense_map(&mut File::create(dir.join("img.bin")).unwrap(), &v.image).unwrap();
        std::fs::write(
            dir.join("k.json"),
            serde_json::to_string(&v.intrinsics).unwrap(),
        )
        .unwrap();
        std::fs::write(
            dir.join("pose.json"),
            serde_json::to_string(&RigidPose::identity()).unwrap(),
        )
        .unwrap();

        let mut cfg = small_cfg();
        cfg.inputs.depth1 = Some("d.bin".into());
        cfg.inputs.depth2 = Some("d.bin".into());
        cfg.inputs.k1 = Some("k.json".into());
        cfg.inputs.pose = Some("pose.json".into());
        cfg.inputs.image1 = Some("img.bin".into());
        cfg.inputs.image2 = Some("img.bin".into());
        let a = run_report(&cfg, &dir).unwrap();
        let b = run_report(&cfg, &dir).unwrap();
        assert_eq!(
            Report {
                timestamp: 0,
                ..a.clone()
            },
            Report { timestamp: 0, ..b }
        );
        assert!(a.summary.mean_pck.unwrap().0.iter().all(|(_, v)| *v == 1.0));

        std::fs::write(dir.join("bad.bin"), b"{\"height\":2,\"width\":\n").unwrap();
        cfg.inputs.depth1 = Some("bad.bin".into());
        let err = run_report(&cfg, &dir).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Stage {
                    stage: "ingest",
                    ..
                }
            ),
            "{err}"
        );
        assert!(err.to_string().starts_with("ingest"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_config_is_an_ingest_error() {
        let err = run_report(&RunConfig::default(), Path::new(".")).unwrap_err();
        assert!(matches!(
            err,
            Error::Stage {
                stage: "ingest",
                ..
            }
        ));
    }

    #[test]
    fn pair_seeds_differ() {
        assert_ne!(pair_seed(1, 0), pair_seed(1, 1));
        assert_eq!(pair_seed(1, 5), pair_seed(1, 5));
    }
}
