//! The work behind each subcommand. Every command validates its whole
//! configuration before computing, writes its outputs into one directory and
//! records the resolved configuration there.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use nfps_core::datagen::{generate_examples, Dataset};
use nfps_core::geometry::{depth_to_normals, CameraIntrinsics, DepthMap, NormalMap};
use nfps_core::integrate::{integrate, normals_to_log_gradients};
use nfps_core::lighting::LightRig;
use nfps_core::pipeline::{
    naive_farfield_reconstruct_with_clock, reconstruct_with_clock, GroundTruth, Metrics, ReconstructionReport,
    EVAL_EROSION_PX,
};
use nfps_core::predict::{train, Architecture, GtLookup, LambertianLs, NormalPredictor, TinyNet, TrainReport};
use nfps_core::reflectance::render_scene;
use nfps_core::scene::Shape;
use nfps_core::{item_rng, Grid, Image, Mask, Vec3};

use crate::binfmt::{read_checkpoint, read_dataset, write_checkpoint, write_dataset};
use crate::config::{CameraSection, PredictorKind, RunConfig};
use crate::error::{CliError, IoContext, Result};
use crate::pfm::{read_depth, read_image, read_mask, read_normals, write_depth, write_image, write_mask, write_normals};
use crate::rig::{read_rig, write_rig};

pub const RENDER_INFO: &str = "render.toml";
pub const DATASET_FILE: &str = "dataset.bin";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.csv";

/// Capture description stored next to rendered images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderInfo {
    pub camera: CameraSection,
    /// Factor applied to the radiometric values to get the stored images.
    pub exposure: f64,
    pub images: usize,
    pub channels: usize,
}

pub fn image_name(k: usize) -> String {
    format!("image_{k:03}.pfm")
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).at(path)
}

/// Center used to push the rig away in the far-field variant of a scene.
fn scene_center(shape: &Shape, cfg: &RunConfig) -> Vec3 {
    match shape {
        Shape::Sphere(s) => s.center,
        _ => Vec3::new(0.0, 0.0, cfg.scene.depth),
    }
}

pub struct RenderOutput {
    pub images: Vec<Image>,
    pub exposure: f64,
    pub depth: DepthMap,
    pub normals: NormalMap,
}

/// Renders the configured scene into `out`: one image per light, ground-truth
/// depth, normals and mask, the rig actually used and the exposure.
pub fn render_synthetic(cfg: &RunConfig, out: &Path) -> Result<RenderOutput> {
    cfg.scene.validate()?;
    let cam = cfg.camera.intrinsics()?;
    let preset = cfg.scene.preset()?;
    let shape = cfg.scene.shape();
    let mut rig = cfg.rig.rig()?;
    if let Some(f) = cfg.scene.far_field_factor {
        rig = rig.moved_away(&scene_center(&shape, cfg), f);
    }
    let geo = shape.render_geometry(&cam)?;
    let material = preset.material(cfg.scene.channels);
    let materials = Grid::filled(cam.width, cam.height, material);
    let mut stack = render_scene(&geo.depth, &geo.normals, &materials, &rig, &cam)?;
    if cfg.scene.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.scene.noise_sigma).map_err(|e| CliError::config(e.to_string()))?;
        for (k, img) in stack.images.iter_mut().enumerate() {
            let mut rng = item_rng(cfg.seed, k as u64);
            let c = img.channels();
            for (i, v) in img.as_mut_slice().iter_mut().enumerate() {
                if geo.depth.mask.as_slice()[i / c] {
                    *v = (*v + noise.sample(&mut rng)).max(0.0);
                }
            }
        }
    }

    create_dir(out)?;
    for (k, img) in stack.images.iter().enumerate() {
        write_image(&out.join(image_name(k)), img)?;
    }
    write_depth(&out.join("depth.pfm"), &geo.depth)?;
    write_normals(&out.join("normals.pfm"), &geo.normals)?;
    write_mask(&out.join("mask.pfm"), &geo.depth.mask)?;
    write_rig(&out.join("rig.txt"), &rig)?;
    let info = RenderInfo {
        camera: CameraSection::from_intrinsics(&cam),
        exposure: stack.exposure,
        images: stack.images.len(),
        channels: cfg.scene.channels,
    };
    write_text(&out.join(RENDER_INFO), &toml::to_string(&info).expect("serializes"))?;
    cfg.write_resolved(out)?;
    Ok(RenderOutput {
        images: stack.images,
        exposure: stack.exposure,
        depth: geo.depth,
        normals: geo.normals,
    })
}

/// A capture directory as written by [`render_synthetic`].
pub struct Capture {
    pub images: Vec<Image>,
    pub rig: LightRig,
    pub cam: CameraIntrinsics,
    pub mask: Mask,
    /// Ground-truth depth and normals, when present.
    pub truth: Option<(DepthMap, NormalMap)>,
}

pub fn read_render_info(dir: &Path) -> Result<RenderInfo> {
    let path = dir.join(RENDER_INFO);
    let text = std::fs::read_to_string(&path).at(&path)?;
    toml::from_str(&text).map_err(|e| CliError::Parse {
        path,
        kind: "line",
        offset: e.span().map_or(0, |s| text[..s.start].lines().count() as u64),
        message: e.message().to_string(),
    })
}

/// Ground-truth depth and normals of a directory, if both files exist.
fn read_truth(dir: &Path, mask: &Mask) -> Result<Option<(DepthMap, NormalMap)>> {
    let (d, n) = (dir.join("depth.pfm"), dir.join("normals.pfm"));
    if !(d.exists() && n.exists()) {
        return Ok(None);
    }
    Ok(Some((read_depth(&d, Some(mask))?, read_normals(&n, Some(mask))?)))
}

impl Capture {
    pub fn load(dir: &Path) -> Result<Self> {
        let info = read_render_info(dir)?;
        let cam = info.camera.intrinsics()?;
        let images = (0..info.images)
            .map(|k| read_image(&dir.join(image_name(k))))
            .collect::<Result<Vec<_>>>()?;
        let rig = read_rig(&dir.join("rig.txt"))?;
        if rig.len() != images.len() {
            return Err(CliError::config(format!(
                "{}: {} images but {} lights",
                dir.display(),
                images.len(),
                rig.len()
            )));
        }
        let mask = read_mask(&dir.join("mask.pfm"))?;
        let truth = read_truth(dir, &mask)?;
        Ok(Capture {
            images,
            rig,
            cam,
            mask,
            truth,
        })
    }

    pub fn ground_truth(&self) -> Result<Option<GroundTruth>> {
        match &self.truth {
            Some((d, n)) => Ok(Some(GroundTruth::new(d.clone(), n.clone(), EVAL_EROSION_PX)?)),
            None => Ok(None),
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::config(format!("{what} is not set")))
}

fn initial_depth(given: Option<f64>, truth: Option<&(DepthMap, NormalMap)>) -> Result<f64> {
    match (given, truth) {
        (Some(z), _) => Ok(z),
        (None, Some((d, _))) => d.mean().ok_or_else(|| CliError::config("ground-truth depth is empty")),
        (None, None) => Err(CliError::config("init_depth is not set and there is no ground truth")),
    }
}

fn clock() -> impl Fn() -> f64 {
    let start = Instant::now();
    move || start.elapsed().as_secs_f64()
}

fn write_iteration(dir: &Path, normals: &NormalMap, depth: &DepthMap, nfs: &NormalMap) -> Result<()> {
    create_dir(dir)?;
    write_normals(&dir.join("normals.pfm"), normals)?;
    write_depth(&dir.join("depth.pfm"), depth)?;
    write_normals(&dir.join("nfs_normals.pfm"), nfs)?;
    write_mask(&dir.join("mask.pfm"), &depth.mask)
}

fn metrics_csv(rows: &[(String, Metrics)]) -> String {
    let mut s = String::from("name,mae_nfcnn_deg,mae_nfs_deg,depth_error_mm\n");
    for (name, m) in rows {
        let _ = writeln!(s, "{name},{:?},{:?},{:?}", m.mae_nfcnn, m.mae_nfs, m.mean_depth_error_mm);
    }
    s
}

/// Fixed-width table with an average row when there is more than one row.
pub fn metrics_table(rows: &[(String, Metrics)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(7);
    let mut s = format!("{:<width$}  {:>10}  {:>10}  {:>10}\n", "object", "NfCNN deg", "NfS deg", "depth mm");
    let mut line = |name: &str, m: &Metrics| {
        let _ = writeln!(
            s,
            "{name:<width$}  {:>10.3}  {:>10.3}  {:>10.3}",
            m.mae_nfcnn, m.mae_nfs, m.mean_depth_error_mm
        );
    };
    for (name, m) in rows {
        line(name, m);
    }
    if rows.len() > 1 {
        let n = rows.len() as f64;
        let avg = Metrics {
            mae_nfcnn: rows.iter().map(|(_, m)| m.mae_nfcnn).sum::<f64>() / n,
            mae_nfs: rows.iter().map(|(_, m)| m.mae_nfs).sum::<f64>() / n,
            mean_depth_error_mm: rows.iter().map(|(_, m)| m.mean_depth_error_mm).sum::<f64>() / n,
        };
        line("average", &avg);
    }
    s
}

/// Loads the predictor and returns the map size it needs, if any.
fn load_predictor(cfg: &RunConfig, capture: &Capture) -> Result<(Box<dyn NormalPredictor>, Option<usize>)> {
    Ok(match cfg.reconstruct.predictor {
        PredictorKind::LambertianLs => (Box::new(LambertianLs), None),
        PredictorKind::Net => {
            let path = required(&cfg.reconstruct.checkpoint, "reconstruct.checkpoint")?;
            let net = read_checkpoint(path)?;
            let arch = net.architecture();
            let channels = capture.images.first().map_or(1, Image::channels);
            if arch.channels != channels {
                return Err(CliError::config(format!(
                    "checkpoint expects {} channel(s), images have {channels}",
                    arch.channels
                )));
            }
            (Box::new(net), Some(arch.map_size))
        }
        PredictorKind::Gt => {
            let Some((_, normals)) = &capture.truth else {
                return Err(CliError::config("the gt predictor needs ground-truth normals in the input"));
            };
            (Box::new(GtLookup { normals: normals.clone() }), None)
        }
    })
}

/// Reconstructs the capture in `reconstruct.input`. Writes each iteration
/// into `iter_N/` and the last one into `out` itself.
pub fn reconstruct(cfg: &RunConfig, out: &Path) -> Result<ReconstructionReport> {
    let input = required(&cfg.reconstruct.input, "reconstruct.input")?;
    let capture = Capture::load(input)?;
    let init = initial_depth(cfg.reconstruct.init_depth, capture.truth.as_ref())?;
    let mut rcfg = cfg.reconstruction_config(init)?;
    let (predictor, map_size) = load_predictor(cfg, &capture)?;
    if let Some(d) = map_size {
        rcfg.map_size = d;
    }
    let gt = capture.ground_truth()?;
    let clock = clock();
    let args = (&capture.images, &capture.rig, &capture.cam, &capture.mask);
    let report = if cfg.reconstruct.naive {
        naive_farfield_reconstruct_with_clock(args.0, args.1, args.2, args.3, &*predictor, &rcfg, gt.as_ref(), &clock)?
    } else {
        reconstruct_with_clock(args.0, args.1, args.2, args.3, &*predictor, &rcfg, gt.as_ref(), &clock)?
    };

    create_dir(out)?;
    let mut rows = Vec::new();
    for (i, it) in report.iterations.iter().enumerate() {
        write_iteration(&out.join(format!("iter_{}", i + 1)), &it.normals, &it.depth, &it.nfs_normals)?;
        if let Some(m) = it.metrics {
            rows.push((format!("iteration_{}", i + 1), m));
        }
        eprintln!(
            "iteration {}: {:.2} s{}",
            i + 1,
            it.seconds,
            if it.integration_converged { "" } else { " (integration hit its iteration cap)" }
        );
    }
    let last = report.last();
    write_iteration(out, &last.normals, &last.depth, &last.nfs_normals)?;
    if !rows.is_empty() {
        write_text(&out.join(METRICS_FILE), &metrics_csv(&rows))?;
        print!("{}", metrics_table(&rows));
    }
    cfg.write_resolved(out)?;
    Ok(report)
}

pub fn generate_dataset(cfg: &RunConfig, out: &Path) -> Result<Dataset> {
    let dcfg = cfg.datagen_config()?;
    let total = dcfg.count;
    let data = generate_examples(&dcfg, |done| eprintln!("generated {done}/{total}"))?;
    create_dir(out)?;
    write_dataset(&out.join(DATASET_FILE), &data)?;
    cfg.write_resolved(out)?;
    Ok(data)
}

pub fn train_network(cfg: &RunConfig, out: &Path) -> Result<(TinyNet<f32>, TrainReport)> {
    let tcfg = cfg.train_config()?;
    let path = required(&cfg.train.dataset, "train.dataset")?;
    let data = read_dataset(path)?;
    let arch = Architecture::new(data.map_size(), data.channels())?;
    let mut net = TinyNet::<f32>::new(arch, cfg.seed);
    create_dir(out)?;
    let report = train(&mut net, &data, &tcfg, |s, _| {
        eprintln!("epoch {}: loss {:.6}, learning rate {:.3e}", s.epoch, s.mean_loss, s.learning_rate);
    })?;
    write_checkpoint(&out.join(CHECKPOINT_FILE), &net)?;
    let mut log = String::from("epoch,mean_loss,learning_rate\n");
    for s in &report.epochs {
        let _ = writeln!(log, "{},{:?},{:?}", s.epoch, s.mean_loss, s.learning_rate);
    }
    write_text(&out.join("train_log.csv"), &log)?;
    cfg.write_resolved(out)?;
    Ok((net, report))
}

/// Scores each configured estimate against its ground truth.
pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<Vec<(String, Metrics)>> {
    if cfg.evaluate.objects.is_empty() {
        return Err(CliError::config("evaluate.objects is empty"));
    }
    let mut rows = Vec::new();
    for obj in &cfg.evaluate.objects {
        let mask = read_mask(&obj.truth.join("mask.pfm"))?;
        let Some((depth, normals)) = read_truth(&obj.truth, &mask)? else {
            return Err(CliError::config(format!(
                "{}: ground truth needs depth.pfm and normals.pfm",
                obj.truth.display()
            )));
        };
        let gt = GroundTruth::new(depth, normals, EVAL_EROSION_PX)?;
        let e = &obj.estimate;
        let est_mask = e.join("mask.pfm");
        let est_mask = if est_mask.exists() { Some(read_mask(&est_mask)?) } else { None };
        let est_depth = read_depth(&e.join("depth.pfm"), est_mask.as_ref())?;
        let est_normals = read_normals(&e.join("normals.pfm"), est_mask.as_ref())?;
        let nfs_path = e.join("nfs_normals.pfm");
        let nfs = if nfs_path.exists() {
            read_normals(&nfs_path, est_mask.as_ref())?
        } else {
            let cam = read_render_info(&obj.truth)?.camera.intrinsics()?;
            depth_to_normals(&est_depth, &cam)?
        };
        rows.push((obj.name.clone(), gt.score(&est_normals, &est_depth, &nfs)?));
    }
    create_dir(out)?;
    write_text(&out.join(METRICS_FILE), &metrics_csv(&rows))?;
    print!("{}", metrics_table(&rows));
    cfg.write_resolved(out)?;
    Ok(rows)
}

/// Integrates the normals of `integrate.input` on their own, anchored to a
/// plane.
pub fn integrate_normals(cfg: &RunConfig, out: &Path) -> Result<(DepthMap, Option<Metrics>)> {
    let input = required(&cfg.integrate.input, "integrate.input")?;
    let icfg = cfg.integrator.config();
    icfg.validate()?;
    let cam = read_render_info(input)?.camera.intrinsics()?;
    let mask = read_mask(&input.join("mask.pfm"))?;
    let normals = read_normals(&input.join("normals.pfm"), Some(&mask))?;
    let truth = match &cfg.integrate.truth {
        Some(dir) => {
            let tmask = read_mask(&dir.join("mask.pfm"))?;
            Some(read_truth(dir, &tmask)?.ok_or_else(|| {
                CliError::config(format!("{}: ground truth needs depth.pfm and normals.pfm", dir.display()))
            })?)
        }
        None => None,
    };
    let init = initial_depth(cfg.integrate.init_depth, truth.as_ref())?;
    let prior = DepthMap::plane(&normals.mask, init)?;
    let grads = normals_to_log_gradients(&normals, &cam);
    let result = integrate(&grads, &prior, &icfg)?;
    if !result.converged {
        eprintln!("integration hit its iteration cap after {} iterations", result.iterations);
    }
    let nfs = depth_to_normals(&result.depth, &cam)?;
    create_dir(out)?;
    write_depth(&out.join("depth.pfm"), &result.depth)?;
    write_normals(&out.join("nfs_normals.pfm"), &nfs)?;
    write_mask(&out.join("mask.pfm"), &result.depth.mask)?;
    let metrics = match truth {
        Some((d, n)) => {
            let gt = GroundTruth::new(d, n, EVAL_EROSION_PX)?;
            let m = gt.score(&normals, &result.depth, &nfs)?;
            let rows = vec![("integrated".to_string(), m)];
            write_text(&out.join(METRICS_FILE), &metrics_csv(&rows))?;
            print!("{}", metrics_table(&rows));
            Some(m)
        }
        None => None,
    };
    cfg.write_resolved(out)?;
    Ok((result.depth, metrics))
}
