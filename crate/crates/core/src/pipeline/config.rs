use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::DEFAULT_REL_DEPTH_TAU;
use crate::error::invalid;
use crate::losses::{LossWeights, MimMode, DEFAULT_EPS};
use crate::matching::{COARSE_STRIDE, DEFAULT_GAMMA};
use crate::mim_mask::{DEFAULT_PATCH, DEFAULT_RATIO};
use crate::planar::{
    CoplanarThresholds, CriteriaMode, DEFAULT_K1, DEFAULT_K2, DEFAULT_K3, DEFAULT_SAMPLES,
};
use crate::pose_eval::RansacParams;
use crate::{Error, Result};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "GEOMATCH_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    pub ratio: f64,
    pub patch: usize,
    /// Use one mask for both images of a pair.
    pub shared: bool,
    pub mode: MimMode,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_RATIO,
            patch: DEFAULT_PATCH,
            shared: false,
            mode: MimMode::MaskedOnly,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoplanarConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub mode: CriteriaMode,
    /// Anchors, and candidates per anchor.
    pub samples: usize,
}

impl Default for CoplanarConfig {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            k2: DEFAULT_K2,
            k3: DEFAULT_K3,
            mode: CriteriaMode::Cosine,
            samples: DEFAULT_SAMPLES,
        }
    }
}

impl CoplanarConfig {
    pub fn thresholds(&self) -> CoplanarThresholds {
        CoplanarThresholds {
            k1: self.k1,
            k2: self.k2,
            k3: self.k3,
            mode: self.mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairConfig {
    /// Explicit `[source, target]` view pairs; sampled by overlap when absent.
    pub explicit: Option<Vec<[usize; 2]>>,
    pub overlap_lo: f64,
    pub overlap_hi: f64,
    pub count: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            explicit: None,
            overlap_lo: 0.1,
            overlap_hi: 1.0,
            count: 4,
        }
    }
}

/// Input files, relative to the workspace root.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputPaths {
    /// Scene description rendered into views.
    pub scene: Option<String>,
    /// Masked depth maps of an explicit pair.
    pub depth1: Option<String>,
    pub depth2: Option<String>,
    /// Source normals (masked map, 3 channels); estimated from depth if absent.
    pub normals1: Option<String>,
    /// Intrinsics JSON `{"K": [..]}`.
    pub k1: Option<String>,
    pub k2: Option<String>,
    /// Source-to-support pose JSON `{"R": [..], "t": [..]}`.
    pub pose: Option<String>,
    pub image1: Option<String>,
    pub image2: Option<String>,
    /// Predicted correspondence field (masked map, 2 channels).
    pub flow: Option<String>,
    /// Predicted confidence map (1 channel).
    pub confidence: Option<String>,
    pub pose_records: Option<String>,
    pub homography_records: Option<String>,
}

/// Every tunable of a run. Defaults reproduce the published settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub gamma: f64,
    pub stride: usize,
    pub eps: f64,
    pub rel_depth_tau: f64,
    pub weights: LossWeights,
    pub mask: MaskConfig,
    pub coplanar: CoplanarConfig,
    pub ransac: RansacParams,
    pub auc_thresholds_deg: Vec<f64>,
    pub map_thresholds_deg: Vec<f64>,
    pub pck_thresholds_px: Vec<f64>,
    pub homography_auc_px: Vec<f64>,
    pub pairs: PairConfig,
    pub inputs: InputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gamma: DEFAULT_GAMMA,
            stride: COARSE_STRIDE,
            eps: DEFAULT_EPS,
            rel_depth_tau: DEFAULT_REL_DEPTH_TAU,
            weights: LossWeights::default(),
            mask: MaskConfig::default(),
            coplanar: CoplanarConfig::default(),
            ransac: RansacParams::default(),
            auc_thresholds_deg: vec![5.0, 10.0, 20.0],
            map_thresholds_deg: vec![5.0, 10.0, 20.0],
            pck_thresholds_px: vec![1.0, 3.0, 5.0],
            homography_auc_px: vec![3.0, 5.0, 10.0],
            pairs: PairConfig::default(),
            inputs: InputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the seed override from the environment.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("gamma", self.gamma)?;
        positive("eps", self.eps)?;
        positive("rel_depth_tau", self.rel_depth_tau)?;
        positive("ransac.inlier_px", self.ransac.inlier_px)?;
        if self.stride == 0 || self.mask.patch == 0 || self.coplanar.samples == 0 {
            return Err(invalid(
                "stride, mask.patch and coplanar.samples must be positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.mask.ratio) {
            return Err(invalid("mask.ratio must lie in [0, 1]"));
        }
        for (name, list) in [
            ("auc_thresholds_deg", &self.auc_thresholds_deg),
            ("map_thresholds_deg", &self.map_thresholds_deg),
            ("pck_thresholds_px", &self.pck_thresholds_px),
            ("homography_auc_px", &self.homography_auc_px),
        ] {
            for t in list {
                positive(name, *t)?;
            }
        }
        Ok(())
    }
}
