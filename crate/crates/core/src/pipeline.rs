//! The iterative reconstruction loop and its evaluation metrics.
//!
//! Starting from a flat plane, every iteration converts the near-field images
//! into far-field observation maps using the current depth, predicts a normal
//! per pixel and integrates the normals into a new depth map.

use alloc::vec::Vec;

use crate::geometry::{backproject, depth_to_normals, CameraIntrinsics, DepthMap, NormalMap};
use crate::integrate::{integrate, normals_to_log_gradients, IntegratorConfig};
use crate::lighting::{light_vector, LightRig};
use crate::obsmap::{batch_build, batch_build_far_field, ObservationBatch, DEFAULT_MAP_SIZE};
use crate::predict::NormalPredictor;
use crate::{par, Error, Grid, Image, Mask, Result, Vec3};

/// Pixels within this distance of the object boundary are excluded from
/// evaluation.
pub const EVAL_EROSION_PX: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    pub iterations: usize,
    /// Depth of the initial fronto-parallel plane, meters.
    pub init_depth: f64,
    pub integrator: IntegratorConfig,
    pub map_size: usize,
    /// Stop early once the mean absolute depth change between iterations
    /// falls below this many millimeters.
    pub stop_threshold_mm: Option<f64>,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            iterations: 2,
            init_depth: 0.15,
            integrator: IntegratorConfig::default(),
            map_size: DEFAULT_MAP_SIZE,
            stop_threshold_mm: None,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("at least one iteration is required"));
        }
        if !(self.init_depth > 0.0 && self.init_depth.is_finite()) {
            return Err(Error::config("initial depth must be finite and positive"));
        }
        if self.map_size == 0 {
            return Err(Error::config("map size must be positive"));
        }
        if let Some(t) = self.stop_threshold_mm {
            if !(t >= 0.0) {
                return Err(Error::config("stop threshold must be non-negative"));
            }
        }
        self.integrator.validate()
    }
}

/// Reference geometry for scoring a reconstruction.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub depth: DepthMap,
    pub normals: NormalMap,
    /// Pixels that are scored.
    pub eval_mask: Mask,
}

impl GroundTruth {
    /// Scores the pixels valid in both maps, eroded by `erosion` pixels.
    pub fn new(depth: DepthMap, normals: NormalMap, erosion: usize) -> Result<Self> {
        let eval_mask = depth.mask.and(&normals.mask)?.erode(erosion);
        if eval_mask.count() == 0 {
            return Err(Error::EmptyMask("evaluation mask is empty after erosion".into()));
        }
        Ok(GroundTruth {
            depth,
            normals,
            eval_mask,
        })
    }

    /// Scores predicted normals, integrated depth and the normals
    /// differentiated from that depth on the evaluation mask.
    pub fn score(&self, normals: &NormalMap, depth: &DepthMap, nfs: &NormalMap) -> Result<Metrics> {
        Ok(Metrics {
            mae_nfcnn: mae_degrees(normals, &self.restrict_normals())?,
            mae_nfs: mae_degrees(nfs, &self.restrict_normals())?,
            mean_depth_error_mm: mean_depth_error_mm(depth, &self.restrict_depth())?,
        })
    }

    fn restrict_normals(&self) -> NormalMap {
        NormalMap {
            vectors: self.normals.vectors.clone(),
            mask: self.eval_mask.clone(),
        }
    }

    fn restrict_depth(&self) -> DepthMap {
        DepthMap {
            values: self.depth.values.clone(),
            mask: self.eval_mask.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Error of the predicted normals, degrees.
    pub mae_nfcnn: f64,
    /// Error of the normals re-derived from the integrated depth, degrees.
    pub mae_nfs: f64,
    pub mean_depth_error_mm: f64,
}

#[derive(Debug, Clone)]
pub struct IterationResult {
    /// Predicted normals.
    pub normals: NormalMap,
    pub depth: DepthMap,
    /// Normals differentiated from `depth`.
    pub nfs_normals: NormalMap,
    pub metrics: Option<Metrics>,
    pub integration_converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub iterations: Vec<IterationResult>,
    pub seconds: f64,
}

impl ReconstructionReport {
    pub fn last(&self) -> &IterationResult {
        self.iterations.last().expect("a report holds at least one iteration")
    }
}

/// Mean angular error in degrees over the pixels masked in both maps.
pub fn mae_degrees(est: &NormalMap, gt: &NormalMap) -> Result<f64> {
    let mask = est.mask.and(&gt.mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..mask.len() {
        if mask.as_slice()[i] {
            let c = est.vectors.as_slice()[i].dot(&gt.vectors.as_slice()[i]).clamp(-1.0, 1.0);
            sum += libm::acos(c).to_degrees();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask("normal maps share no pixel".into()));
    }
    Ok(sum / n as f64)
}

/// Mean absolute depth difference in millimeters over the shared mask.
pub fn mean_depth_error_mm(est: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let mask = est.mask.and(&gt.mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..mask.len() {
        if mask.as_slice()[i] {
            sum += (est.values.as_slice()[i] - gt.values.as_slice()[i]).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask("depth maps share no pixel".into()));
    }
    Ok(sum / n as f64 * 1000.0)
}

fn check_mask(mask: &Mask, cam: &CameraIntrinsics) -> Result<()> {
    if mask.width() != cam.width || mask.height() != cam.height {
        return Err(Error::dimension(
            alloc::format!("{}x{} mask", cam.width, cam.height),
            alloc::format!("{}x{} mask", mask.width(), mask.height()),
        ));
    }
    if mask.count() == 0 {
        return Err(Error::EmptyMask("reconstruction mask is empty".into()));
    }
    Ok(())
}

fn predict_batch(batch: &ObservationBatch, predictor: &dyn NormalPredictor) -> Result<NormalMap> {
    let (w, h) = (batch.mask.width(), batch.mask.height());
    let predicted = par::map_range(w * h, |i| {
        let (col, row) = (i % w, i / w);
        batch.pixels.get(col, row).as_ref().and_then(|obs| {
            predictor
                .predict_at(col, row, obs)
                .ok()
                .filter(|n| n.iter().all(|v| v.is_finite()) && n.norm() > 0.0)
                .map(|n| n.normalize())
        })
    });
    let mask = Grid::from_vec(w, h, predicted.iter().map(Option::is_some).collect())?;
    if mask.count() == 0 {
        return Err(Error::EmptyMask("no pixel produced a normal".into()));
    }
    let vectors = Grid::from_vec(w, h, predicted.into_iter().map(|n| n.unwrap_or_else(Vec3::zeros)).collect())?;
    NormalMap::new(vectors, mask)
}

/// Integrates `normals` anchored at `prior` and scores the result.
fn integrate_step(
    normals: NormalMap,
    prior: &DepthMap,
    cam: &CameraIntrinsics,
    cfg: &ReconstructionConfig,
    gt: Option<&GroundTruth>,
) -> Result<IterationResult> {
    let grads = normals_to_log_gradients(&normals, cam);
    if grads.mask.count() == 0 {
        return Err(Error::EmptyMask("every predicted normal is grazing".into()));
    }
    let integration = integrate(&grads, prior, &cfg.integrator)?;
    let depth = integration.depth;
    let nfs_normals = depth_to_normals(&depth, cam)?;
    let normals = NormalMap {
        vectors: normals.vectors,
        mask: normals.mask.and(&depth.mask)?,
    };
    let metrics = gt.map(|gt| gt.score(&normals, &depth, &nfs_normals)).transpose()?;
    Ok(IterationResult {
        normals,
        depth,
        nfs_normals,
        metrics,
        integration_converged: integration.converged,
        seconds: 0.0,
    })
}

/// Iterative near-field reconstruction. See [`reconstruct_with_clock`].
pub fn reconstruct(
    images: &[Image],
    rig: &LightRig,
    cam: &CameraIntrinsics,
    mask: &Mask,
    predictor: &dyn NormalPredictor,
    cfg: &ReconstructionConfig,
    gt: Option<&GroundTruth>,
) -> Result<ReconstructionReport> {
    reconstruct_with_clock(images, rig, cam, mask, predictor, cfg, gt, &|| 0.0)
}

/// Runs `cfg.iterations` rounds of near-to-far conversion, prediction and
/// integration from a plane at `cfg.init_depth`. Each round's integration is
/// anchored at the previous depth. Pixels that fail at any stage leave the
/// mask for good. `clock` returns seconds and is only used for reporting.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct_with_clock(
    images: &[Image],
    rig: &LightRig,
    cam: &CameraIntrinsics,
    mask: &Mask,
    predictor: &dyn NormalPredictor,
    cfg: &ReconstructionConfig,
    gt: Option<&GroundTruth>,
    clock: &dyn Fn() -> f64,
) -> Result<ReconstructionReport> {
    cfg.validate()?;
    check_mask(mask, cam)?;
    let plane = DepthMap::plane(mask, cfg.init_depth)?;
    reconstruct_from_depth(images, rig, cam, &plane, predictor, cfg, gt, clock)
}

/// [`reconstruct_with_clock`] starting from an arbitrary depth map instead of
/// a plane; `cfg.init_depth` is ignored.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct_from_depth(
    images: &[Image],
    rig: &LightRig,
    cam: &CameraIntrinsics,
    initial: &DepthMap,
    predictor: &dyn NormalPredictor,
    cfg: &ReconstructionConfig,
    gt: Option<&GroundTruth>,
    clock: &dyn Fn() -> f64,
) -> Result<ReconstructionReport> {
    cfg.validate()?;
    cam.validate()?;
    check_mask(&initial.mask, cam)?;
    let start = clock();
    let mut depth = initial.clone();
    let mut iterations = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let t0 = clock();
        let batch = batch_build(images, &depth, rig, cam, cfg.map_size)?;
        let normals = predict_batch(&batch, predictor)?;
        let mut result = integrate_step(normals, &depth, cam, cfg, gt)?;
        result.seconds = clock() - t0;
        let change = mean_depth_error_mm(&result.depth, &depth)?;
        depth = result.depth.clone();
        iterations.push(result);
        if cfg.stop_threshold_mm.is_some_and(|t| change < t) {
            break;
        }
    }
    Ok(ReconstructionReport {
        iterations,
        seconds: clock() - start,
    })
}

/// Light directions seen from the point on the optical axis at `depth`.
pub fn average_light_directions(rig: &LightRig, cam: &CameraIntrinsics, depth: f64) -> Result<Vec<Vec3>> {
    let center = backproject(cam.principal_point, depth, cam)?;
    rig.lights().iter().map(|l| light_vector(l, &center).map(|(_, d)| d)).collect()
}

/// Far-field baseline: unit attenuation and one direction per light, taken
/// from the scene center, followed by a single prediction and integration.
pub fn naive_farfield_reconstruct(
    images: &[Image],
    rig: &LightRig,
    cam: &CameraIntrinsics,
    mask: &Mask,
    predictor: &dyn NormalPredictor,
    cfg: &ReconstructionConfig,
    gt: Option<&GroundTruth>,
) -> Result<ReconstructionReport> {
    naive_farfield_reconstruct_with_clock(images, rig, cam, mask, predictor, cfg, gt, &|| 0.0)
}

#[allow(clippy::too_many_arguments)]
pub fn naive_farfield_reconstruct_with_clock(
    images: &[Image],
    rig: &LightRig,
    cam: &CameraIntrinsics,
    mask: &Mask,
    predictor: &dyn NormalPredictor,
    cfg: &ReconstructionConfig,
    gt: Option<&GroundTruth>,
    clock: &dyn Fn() -> f64,
) -> Result<ReconstructionReport> {
    cfg.validate()?;
    cam.validate()?;
    check_mask(mask, cam)?;
    let start = clock();
    let directions = average_light_directions(rig, cam, cfg.init_depth)?;
    let batch = batch_build_far_field(images, mask, &directions, cam, cfg.map_size)?;
    let normals = predict_batch(&batch, predictor)?;
    let plane = DepthMap::plane(mask, cfg.init_depth)?;
    let mut result = integrate_step(normals, &plane, cam, cfg, gt)?;
    result.seconds = clock() - start;
    Ok(ReconstructionReport {
        seconds: result.seconds,
        iterations: alloc::vec![result],
    })
}
