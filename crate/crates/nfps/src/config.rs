//! Run configuration files (TOML).
//!
//! One schema serves every command; each command reads the sections it needs
//! and ignores the rest. Every field has a default, so an empty file is a
//! valid configuration. Relative paths are resolved against the directory of
//! the configuration file, and the resolved configuration written next to a
//! command's outputs holds absolute paths.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nfps_core::datagen::{DatagenConfig, MaterialRanges};
use nfps_core::geometry::CameraIntrinsics;
use nfps_core::integrate::{IntegrationMode, IntegratorConfig};
use nfps_core::lighting::{make_ring_rig, LightRig};
use nfps_core::pipeline::ReconstructionConfig;
use nfps_core::predict::TrainConfig;
use nfps_core::reflectance::{BrdfModel, GIAugmentation};
use nfps_core::scene::{BumpsShape, MaterialPreset, ParaboloidShape, Shape};

use crate::error::{CliError, IoContext, Result};

/// Name of the resolved configuration written next to outputs.
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub camera: CameraSection,
    pub rig: RigSection,
    pub scene: SceneSection,
    pub datagen: DatagenSection,
    pub train: TrainSection,
    pub reconstruct: ReconstructSection,
    pub integrator: IntegratorSection,
    pub integrate: IntegrateSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub focal_px: f64,
    pub width: usize,
    pub height: usize,
    /// Defaults to the image center.
    pub principal_point: Option<[f64; 2]>,
}

impl Default for CameraSection {
    fn default() -> Self {
        CameraSection {
            focal_px: 240.0,
            width: 128,
            height: 128,
            principal_point: None,
        }
    }
}

impl CameraSection {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        Ok(match self.principal_point {
            Some([u, v]) => CameraIntrinsics::new(self.focal_px, (u, v), self.width, self.height)?,
            None => CameraIntrinsics::centered(self.focal_px, self.width, self.height)?,
        })
    }

    pub fn from_intrinsics(cam: &CameraIntrinsics) -> Self {
        CameraSection {
            focal_px: cam.focal_px,
            width: cam.width,
            height: cam.height,
            principal_point: Some([cam.principal_point.0, cam.principal_point.1]),
        }
    }
}

/// A rig file, or else a ring of lights around the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigSection {
    pub file: Option<PathBuf>,
    pub count: usize,
    pub radius: f64,
    pub brightness: f64,
    pub mu: f64,
}

impl Default for RigSection {
    fn default() -> Self {
        RigSection {
            file: None,
            count: 15,
            radius: 0.065,
            brightness: 1.0,
            mu: 0.0,
        }
    }
}

impl RigSection {
    pub fn rig(&self) -> Result<LightRig> {
        match &self.file {
            Some(path) => crate::rig::read_rig(path),
            None => Ok(make_ring_rig(self.count, self.radius, self.brightness, self.mu)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere,
    Paraboloid,
    Bumps,
    Plane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub shape: ShapeKind,
    /// Nearest depth of the sphere, apex of the paraboloid, base of the
    /// bumps and the plane (meters).
    pub depth: f64,
    /// Sphere radius, paraboloid rim radius, half extent of bumps and plane.
    pub radius: f64,
    pub curvature: f64,
    pub material: String,
    pub channels: usize,
    /// Gaussian noise added to every rendered value after exposure.
    pub noise_sigma: f64,
    /// Pushes the rig away from the object center by this factor.
    pub far_field_factor: Option<f64>,
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSection {
            shape: ShapeKind::Sphere,
            depth: 0.12,
            radius: 0.03,
            curvature: ParaboloidShape::default().curvature,
            material: MaterialPreset::Lambertian.name().into(),
            channels: 1,
            noise_sigma: 0.0,
            far_field_factor: None,
        }
    }
}

impl SceneSection {
    pub fn shape(&self) -> Shape {
        match self.shape {
            ShapeKind::Sphere => Shape::sphere_at(self.depth, self.radius),
            ShapeKind::Paraboloid => Shape::Paraboloid(ParaboloidShape {
                apex_depth: self.depth,
                curvature: self.curvature,
                radius: self.radius,
            }),
            ShapeKind::Bumps => Shape::Bumps(BumpsShape {
                base_depth: self.depth,
                half_extent: self.radius,
                ..BumpsShape::default()
            }),
            ShapeKind::Plane => Shape::Bumps(BumpsShape {
                base_depth: self.depth,
                half_extent: self.radius,
                bumps: Vec::new(),
            }),
        }
    }

    pub fn preset(&self) -> Result<MaterialPreset> {
        MaterialPreset::from_name(&self.material).ok_or_else(|| {
            let names: Vec<_> = MaterialPreset::ALL.iter().map(|p| p.name()).collect();
            CliError::config(format!("unknown material {:?}; expected one of {}", self.material, names.join(", ")))
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.preset()?;
        if !(self.channels == 1 || self.channels == 3) {
            return Err(CliError::config("scene channels must be 1 or 3"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.depth) && positive(self.radius) && self.curvature.is_finite()) {
            return Err(CliError::config("scene depth and radius must be positive"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(CliError::config("scene noise_sigma must be non-negative"));
        }
        if self.far_field_factor.is_some_and(|f| !(f.is_finite() && f >= 1.0)) {
            return Err(CliError::config("far_field_factor must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Lambertian,
    BlinnPhong,
    DiffuseSpecularMix,
}

impl From<ModelName> for BrdfModel {
    fn from(m: ModelName) -> Self {
        match m {
            ModelName::Lambertian => BrdfModel::Lambertian,
            ModelName::BlinnPhong => BrdfModel::BlinnPhong,
            ModelName::DiffuseSpecularMix => BrdfModel::DiffuseSpecularMix,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSection {
    pub cast_shadow_prob: f64,
    pub shadow_factor_max: f64,
    pub ambient_max: f64,
    pub self_reflection_max: f64,
    pub noise_sigma: f64,
}

impl Default for AugmentationSection {
    fn default() -> Self {
        let a = GIAugmentation::default();
        AugmentationSection {
            cast_shadow_prob: a.cast_shadow_prob,
            shadow_factor_max: a.shadow_factor_max,
            ambient_max: a.ambient_max,
            self_reflection_max: a.self_reflection_max,
            noise_sigma: a.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenSection {
    pub count: usize,
    pub map_size: usize,
    pub channels: usize,
    pub depth_range: [f64; 2],
    pub depth_sigma: f64,
    pub models: Vec<ModelName>,
    pub albedo: [f64; 2],
    pub specular_strength: [f64; 2],
    pub shininess: [f64; 2],
    pub metallic_mix: [f64; 2],
    pub augmentation: AugmentationSection,
}

impl Default for DatagenSection {
    fn default() -> Self {
        let rig = make_ring_rig(3, 0.05, 1.0, 0.0).expect("valid ring");
        let cam = CameraIntrinsics::centered(100.0, 8, 8).expect("valid camera");
        let d = DatagenConfig::new(rig, cam);
        let m = MaterialRanges::default();
        DatagenSection {
            count: d.count,
            map_size: d.map_size,
            channels: d.channels,
            depth_range: [d.depth_range.0, d.depth_range.1],
            depth_sigma: d.depth_sigma,
            models: vec![ModelName::Lambertian, ModelName::BlinnPhong, ModelName::DiffuseSpecularMix],
            albedo: [m.albedo.0, m.albedo.1],
            specular_strength: [m.specular_strength.0, m.specular_strength.1],
            shininess: [m.shininess.0, m.shininess.1],
            metallic_mix: [m.metallic_mix.0, m.metallic_mix.1],
            augmentation: AugmentationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dataset: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub decay_start: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            dataset: None,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            decay: t.decay,
            decay_start: t.decay_start,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Per-pixel Lambertian least squares.
    LambertianLs,
    /// Trained network from a checkpoint.
    Net,
    /// Ground-truth normals from the input directory.
    Gt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSection {
    /// Directory written by `render-synthetic` (or laid out the same way).
    pub input: Option<PathBuf>,
    pub predictor: PredictorKind,
    pub checkpoint: Option<PathBuf>,
    pub iterations: usize,
    /// Depth of the initial plane. Defaults to the mean ground-truth depth
    /// when the input holds ground truth.
    pub init_depth: Option<f64>,
    pub map_size: usize,
    pub stop_threshold_mm: Option<f64>,
    /// Run the far-field baseline instead of the iterative method.
    pub naive: bool,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        let r = ReconstructionConfig::default();
        ReconstructSection {
            input: None,
            predictor: PredictorKind::LambertianLs,
            checkpoint: None,
            iterations: r.iterations,
            init_depth: None,
            map_size: r.map_size,
            stop_threshold_mm: r.stop_threshold_mm,
            naive: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationModeName {
    LeastSquares,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub mode: IntegrationModeName,
    pub lambda: f64,
    pub admm_penalty: f64,
    pub max_cg_iters: usize,
    pub max_admm_iters: usize,
    pub cg_tol: f64,
    pub admm_tol: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let c = IntegratorConfig::default();
        IntegratorSection {
            mode: match c.mode {
                IntegrationMode::LeastSquares => IntegrationModeName::LeastSquares,
                IntegrationMode::L1Admm => IntegrationModeName::L1,
            },
            lambda: c.lambda,
            admm_penalty: c.admm_penalty,
            max_cg_iters: c.max_cg_iters,
            max_admm_iters: c.max_admm_iters,
            cg_tol: c.cg_tol,
            admm_tol: c.admm_tol,
        }
    }
}

impl IntegratorSection {
    pub fn config(&self) -> IntegratorConfig {
        IntegratorConfig {
            lambda: self.lambda,
            mode: match self.mode {
                IntegrationModeName::LeastSquares => IntegrationMode::LeastSquares,
                IntegrationModeName::L1 => IntegrationMode::L1Admm,
            },
            admm_penalty: self.admm_penalty,
            max_cg_iters: self.max_cg_iters,
            max_admm_iters: self.max_admm_iters,
            cg_tol: self.cg_tol,
            admm_tol: self.admm_tol,
        }
    }
}

/// Integrates a normal map on its own.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrateSection {
    /// Directory holding `normals.pfm`, `mask.pfm` and `render.toml`.
    pub input: Option<PathBuf>,
    /// Directory holding ground-truth `depth.pfm` and `normals.pfm`.
    pub truth: Option<PathBuf>,
    /// Prior plane depth. Defaults to the mean ground-truth depth.
    pub init_depth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalObject {
    pub name: String,
    /// Directory holding `depth.pfm`, `normals.pfm` and `mask.pfm`.
    pub truth: PathBuf,
    /// Directory holding `depth.pfm`, `normals.pfm` and optionally
    /// `nfs_normals.pfm`.
    pub estimate: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub objects: Vec<EvalObject>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Loads a configuration and makes its paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base)?;
        Ok(cfg)
    }

    /// Makes every relative path absolute, taking `base` as the starting
    /// point.
    pub fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        let base = std::path::absolute(base).at(base)?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p)
            }
        };
        fix_opt(&mut self.rig.file);
        fix_opt(&mut self.train.dataset);
        fix_opt(&mut self.reconstruct.input);
        fix_opt(&mut self.reconstruct.checkpoint);
        fix_opt(&mut self.integrate.input);
        fix_opt(&mut self.integrate.truth);
        for o in &mut self.evaluate.objects {
            fix(&mut o.truth);
            fix(&mut o.estimate);
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Writes the configuration into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_toml()).at(&path)
    }

    pub fn datagen_config(&self) -> Result<DatagenConfig> {
        let d = &self.datagen;
        let pair = |p: [f64; 2]| (p[0], p[1]);
        let a = d.augmentation;
        let cfg = DatagenConfig {
            rig: self.rig.rig()?,
            intrinsics: self.camera.intrinsics()?,
            depth_range: pair(d.depth_range),
            depth_sigma: d.depth_sigma,
            materials: MaterialRanges {
                models: d.models.iter().map(|&m| m.into()).collect(),
                albedo: pair(d.albedo),
                specular_strength: pair(d.specular_strength),
                shininess: pair(d.shininess),
                metallic_mix: pair(d.metallic_mix),
            },
            aug: GIAugmentation {
                cast_shadow_prob: a.cast_shadow_prob,
                shadow_factor_max: a.shadow_factor_max,
                ambient_max: a.ambient_max,
                self_reflection_max: a.self_reflection_max,
                noise_sigma: a.noise_sigma,
            },
            count: d.count,
            seed: self.seed,
            map_size: d.map_size,
            channels: d.channels,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            decay: t.decay,
            decay_start: t.decay_start,
            seed: self.seed,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `init_depth` is filled in by the caller.
    pub fn reconstruction_config(&self, init_depth: f64) -> Result<ReconstructionConfig> {
        let r = &self.reconstruct;
        let cfg = ReconstructionConfig {
            iterations: r.iterations,
            init_depth,
            integrator: self.integrator.config(),
            map_size: r.map_size,
            stop_threshold_mm: r.stop_threshold_mm,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
