use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use geomatch::camera::{gt_correspondence, normals_from_depth};
use geomatch::formats::{parse_homography_records, parse_pose_records};
use geomatch::grid_ops::{write_dense_map, write_mask, write_masked_map, Dtype};
use geomatch::matching::{
    correlation_volume, dual_softmax, mutual_nn_matches, patch_features, write_correlation,
    CoordGrid,
};
use geomatch::mim_mask::{gen_mask_pair, mask_at_scale, MaskSidecar};
use geomatch::pipeline::{
    eval_homography_records, eval_pose_pairs, evaluate_pair, load_field, load_image, load_json,
    pair_overlaps, run_report, sample_weighted_pairs, synth_scene, InputPaths, Metrics, PairInputs,
    RunConfig, SceneSpec,
};
use geomatch::planar::{coplanar_indicator, sample_coplanar_set, IndicatorFile, PlanarScene};
use geomatch::pose_eval::pck;
use geomatch::{Error, Result};

#[derive(Parser)]
#[command(
    name = "geomatch",
    version,
    about = "Dense two-view matching geometry toolkit"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory that relative input paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,
    /// Overrides the configured seed and GEOMATCH_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides one config key, e.g. `--set coplanar.k1=0.01`. The value is
    /// parsed as JSON and taken as a string otherwise.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Default)]
struct PairArgs {
    #[arg(long)]
    depth1: Option<String>,
    #[arg(long)]
    depth2: Option<String>,
    #[arg(long)]
    normals1: Option<String>,
    #[arg(long)]
    k1: Option<String>,
    #[arg(long)]
    k2: Option<String>,
    #[arg(long)]
    pose: Option<String>,
    #[arg(long)]
    image1: Option<String>,
    #[arg(long)]
    image2: Option<String>,
    #[arg(long)]
    flow: Option<String>,
    #[arg(long)]
    confidence: Option<String>,
}

impl PairArgs {
    fn apply(self, inp: &mut InputPaths) {
        let set = |slot: &mut Option<String>, v: Option<String>| {
            if v.is_some() {
                *slot = v;
            }
        };
        set(&mut inp.depth1, self.depth1);
        set(&mut inp.depth2, self.depth2);
        set(&mut inp.normals1, self.normals1);
        set(&mut inp.k1, self.k1);
        set(&mut inp.k2, self.k2);
        set(&mut inp.pose, self.pose);
        set(&mut inp.image1, self.image1);
        set(&mut inp.image2, self.image2);
        set(&mut inp.flow, self.flow);
        set(&mut inp.confidence, self.confidence);
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene description into per-view images, depths, normals and cameras.
    Synth {
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ground-truth correspondence field from depth and pose.
    GenGt {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Co-planar indicator matrix for sampled anchors and candidates.
    Coplanar {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coarse mutual nearest-neighbour matches between two images.
    Match {
        #[arg(long)]
        image1: String,
        #[arg(long)]
        image2: String,
        /// Also write the correlation volume.
        #[arg(long)]
        correlation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Patch mask for one image of a pair, plus a JSON sidecar.
    Mask {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// Feature-map scale the mask is expanded to.
        #[arg(long, default_value_t = 1)]
        scale: usize,
        /// Write the support image's mask instead of the source's.
        #[arg(long)]
        second: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loss terms for a pair with predicted flow and confidence.
    Losses {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative-pose AUC and mAP over JSON-lines match records.
    EvalPose {
        #[arg(long)]
        records: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PCK of a predicted field against a ground-truth field.
    EvalPck {
        #[arg(long)]
        pred: String,
        #[arg(long)]
        gt: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Homography corner-error AUC over JSON-lines records.
    EvalHomography {
        #[arg(long)]
        records: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured chain and write one JSON report.
    Report {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::InvalidArgument(format!("--set {key}: {part} is not a table")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::InvalidArgument(format!("--set {key}: parent is not a table")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut tree = match &common.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => json!({}),
    };
    for o in &common.overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set {o:?} is not KEY=VALUE")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut tree, key, value)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(tree)?;
    cfg.apply_env()?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn pair_inputs(cfg: &mut RunConfig, root: &Path, args: PairArgs) -> Result<PairInputs> {
    args.apply(&mut cfg.inputs);
    PairInputs::load(&cfg.inputs, root)?
        .ok_or_else(|| Error::InvalidArgument("--depth1 (or inputs.depth1) is required".into()))
}

fn records_path(flag: Option<String>, configured: &Option<String>) -> Result<String> {
    flag.or_else(|| configured.clone()).ok_or_else(|| {
        Error::InvalidArgument("--records (or the matching inputs key) is required".into())
    })
}

fn synth(cfg: &RunConfig, root: &Path, scene: Option<String>, out: &Path) -> Result<Value> {
    let scene = scene
        .or_else(|| cfg.inputs.scene.clone())
        .ok_or_else(|| Error::InvalidArgument("--scene (or inputs.scene) is required".into()))?;
    let spec: SceneSpec = load_json(root, &scene)?;
    let views = synth_scene(&spec)?;
    std::fs::create_dir_all(out)?;
    let mut listed = Vec::new();
    for (i, v) in views.iter().enumerate() {
        let name = |kind: &str| format!("view{i}.{kind}");
        write_dense_map(&mut create(&out.join(name("image.bin")))?, &v.image)?;
        let (d, dv) = v.depth.to_map();
        write_masked_map(
            &mut create(&out.join(name("depth.bin")))?,
            &d,
            &dv,
            Dtype::F64,
        )?;
        let (n, nv) = v.normals.to_map();
        write_masked_map(
            &mut create(&out.join(name("normals.bin")))?,
            &n,
            &nv,
            Dtype::F64,
        )?;
        emit(&v.intrinsics, Some(&out.join(name("K.json"))))?;
        emit(&v.pose, Some(&out.join(name("pose.json"))))?;
        listed.push(json!({
            "image": name("image.bin"),
            "depth": name("depth.bin"),
            "normals": name("normals.bin"),
            "K": name("K.json"),
            "pose": name("pose.json"),
        }));
    }
    let mut pairs = Vec::new();
    if views.len() >= 2 {
        let overlaps = pair_overlaps(&views, cfg.rel_depth_tau)?;
        let chosen = match &cfg.pairs.explicit {
            Some(list) => list.iter().map(|[a, b]| (*a, *b)).collect(),
            None => sample_weighted_pairs(
                &overlaps,
                cfg.pairs.overlap_lo,
                cfg.pairs.overlap_hi,
                cfg.pairs.count,
                cfg.seed,
            )
            .unwrap_or_default(),
        };
        for (a, b) in chosen {
            if a >= views.len() || b >= views.len() {
                return Err(Error::InvalidArgument(format!(
                    "pair [{a}, {b}] refers to a missing view"
                )));
            }
            let file = format!("pair{a}-{b}.pose.json");
            emit(&views[a].relative_pose(&views[b]), Some(&out.join(&file)))?;
            pairs.push(json!({ "source": a, "target": b, "pose": file }));
        }
        return Ok(json!({ "views": listed, "overlaps": overlaps, "pairs": pairs }));
    }
    Ok(json!({ "views": listed, "pairs": pairs }))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    let root = cli.common.root.as_path();
    match cli.command {
        Command::Synth { scene, out } => {
            let manifest = synth(&cfg, root, scene, &out)?;
            emit(&manifest, Some(&out.join("manifest.json")))
        }
        Command::GenGt { pair, out } => {
            let p = pair_inputs(&mut cfg, root, pair)?;
            let gt = gt_correspondence(
                &p.depth1,
                &p.depth2,
                &p.k1,
                &p.k2,
                &p.pose,
                cfg.rel_depth_tau,
            )?;
            let (map, valid) = gt.to_map();
            write_masked_map(&mut create(&out)?, &map, &valid, Dtype::F64)?;
            emit(
                &json!({ "pixels": map.height() * map.width(), "valid": valid.count() }),
                None,
            )
        }
        Command::Coplanar { pair, out } => {
            let p = pair_inputs(&mut cfg, root, pair)?;
            let gt = gt_correspondence(
                &p.depth1,
                &p.depth2,
                &p.k1,
                &p.k2,
                &p.pose,
                cfg.rel_depth_tau,
            )?;
            let normals = match p.normals1 {
                Some(n) => n,
                None => normals_from_depth(&p.depth1, &p.k1)?,
            };
            let pool = normals.valid_mask().and(&gt.valid_mask())?;
            let samples =
                sample_coplanar_set(&pool, cfg.coplanar.samples.min(pool.count()), cfg.seed)?;
            let scene = PlanarScene {
                normals: &normals,
                depth: &p.depth1,
                gt: &gt,
                k1: &p.k1,
                k2: &p.k2,
                pose: &p.pose,
            };
            let indicator = coplanar_indicator(&samples, &scene, &cfg.coplanar.thresholds())?;
            emit(
                &IndicatorFile::new(&indicator, Some(&samples)),
                out.as_deref(),
            )
        }
        Command::Match {
            image1,
            image2,
            correlation,
            out,
        } => {
            let (a, b) = (load_image(root, &image1)?, load_image(root, &image2)?);
            let s = cfg.stride;
            let (f1, f2) = (patch_features(&a, s)?, patch_features(&b, s)?);
            let c = correlation_volume(&f1, &f2, cfg.gamma)?;
            if let Some(path) = correlation {
                let mut w = create(&path)?;
                write_correlation(&mut w, &c)?;
                w.flush()?;
            }
            let g1 = CoordGrid::cell_centers(f1.height(), f1.width(), s);
            let g2 = CoordGrid::cell_centers(f2.height(), f2.width(), s);
            let matches: Vec<Value> = mutual_nn_matches(&dual_softmax(&c.matrix), 0.0)
                .iter()
                .map(|m| {
                    let (p, q) = (g1.0[m.source], g2.0[m.target]);
                    json!({
                        "source": m.source,
                        "target": m.target,
                        "score": m.score,
                        "p1": [p.x, p.y],
                        "p2": [q.x, q.y],
                    })
                })
                .collect();
            emit(
                &json!({
                    "stride": s,
                    "gamma": cfg.gamma,
                    "source_grid": [f1.height(), f1.width()],
                    "target_grid": [f2.height(), f2.width()],
                    "matches": matches,
                }),
                out.as_deref(),
            )
        }
        Command::Mask {
            height,
            width,
            scale,
            second,
            out,
        } => {
            let (m1, m2) = gen_mask_pair(
                height,
                width,
                cfg.mask.patch,
                cfg.mask.ratio,
                cfg.seed,
                cfg.mask.shared,
            )?;
            let m = if second { m2 } else { m1 };
            let mut w = create(&out)?;
            write_mask(&mut w, &mask_at_scale(&m, scale)?)?;
            w.flush()?;
            let mut sidecar = out.into_os_string();
            sidecar.push(".json");
            emit(&MaskSidecar::from(&m), Some(Path::new(&sidecar)))
        }
        Command::Losses { pair, out } => {
            let p = pair_inputs(&mut cfg, root, pair)?;
            let r = evaluate_pair(&cfg, &p, 0, cfg.seed)?;
            emit(&r.losses, out.as_deref())
        }
        Command::EvalPose { records, out } => {
            let path = records_path(records, &cfg.inputs.pose_records)?;
            let pairs = parse_pose_records(&std::fs::read_to_string(root.join(path))?)?;
            let r = eval_pose_pairs(
                &pairs,
                &cfg.ransac,
                cfg.seed,
                &cfg.auc_thresholds_deg,
                &cfg.map_thresholds_deg,
            )?;
            emit(&r, out.as_deref())
        }
        Command::EvalPck { pred, gt, out } => {
            let (pred, gt) = (load_field(root, &pred)?, load_field(root, &gt)?);
            let values = pck(&pred, &gt, &gt.valid_mask(), &cfg.pck_thresholds_px)?;
            emit(
                &Metrics::at("pck", &cfg.pck_thresholds_px, &values),
                out.as_deref(),
            )
        }
        Command::EvalHomography { records, out } => {
            let path = records_path(records, &cfg.inputs.homography_records)?;
            let recs = parse_homography_records(&std::fs::read_to_string(root.join(path))?)?;
            let r = eval_homography_records(
                &recs,
                cfg.ransac.inlier_px,
                cfg.ransac.max_iters,
                cfg.seed,
                &cfg.homography_auc_px,
            )?;
            emit(&r, out.as_deref())
        }
        Command::Report { out } => {
            let text = run_report(&cfg, root)?.to_json()?;
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => std::io::stdout().lock().write_all(text.as_bytes())?,
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
