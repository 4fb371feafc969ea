//! Analytic test scenes with exact depth and normals.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{CameraIntrinsics, DepthMap, NormalMap};
use crate::reflectance::{BrdfModel, Material, Spectrum};
use crate::{Error, Grid, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereShape {
    pub center: Vec3,
    pub radius: f64,
}

/// `z = apex_depth + curvature (x² + y²)` for `x² + y² ≤ radius²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParaboloidShape {
    pub apex_depth: f64,
    pub curvature: f64,
    pub radius: f64,
}

impl Default for ParaboloidShape {
    fn default() -> Self {
        ParaboloidShape {
            apex_depth: 0.14,
            curvature: 10.0,
            radius: 0.03,
        }
    }
}

/// Gaussian bump, raised toward the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: (f64, f64),
    pub height: f64,
    pub sigma: f64,
}

/// `z = base_depth - Σ bumps` over the square `|x|, |y| ≤ half_extent`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpsShape {
    pub base_depth: f64,
    pub half_extent: f64,
    pub bumps: Vec<Bump>,
}

impl Default for BumpsShape {
    fn default() -> Self {
        let b = |x, y, height, sigma| Bump {
            center: (x, y),
            height,
            sigma,
        };
        BumpsShape {
            base_depth: 0.16,
            half_extent: 0.03,
            bumps: vec![
                b(0.012, -0.01, 0.008, 0.009),
                b(-0.012, 0.01, 0.006, 0.01),
                b(0.0, 0.016, 0.005, 0.007),
                b(-0.014, -0.014, 0.004, 0.007),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere(SphereShape),
    Paraboloid(ParaboloidShape),
    Bumps(BumpsShape),
}

/// Ground-truth geometry seen by a camera.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub depth: DepthMap,
    pub normals: NormalMap,
}

impl Shape {
    /// Sphere of `radius` whose nearest point is at `front_depth` on the optical axis.
    pub fn sphere_at(front_depth: f64, radius: f64) -> Self {
        Shape::Sphere(SphereShape {
            center: Vec3::new(0.0, 0.0, front_depth + radius),
            radius,
        })
    }

    /// Point and front-facing normal hit by the ray through pixel `(u, v)`.
    pub fn intersect(&self, cam: &CameraIntrinsics, u: f64, v: f64) -> Option<(Vec3, Vec3)> {
        let (u0, v0) = cam.principal_point;
        let (sx, sy) = ((u - u0) / cam.focal_px, (v - v0) / cam.focal_px);
        match self {
            Shape::Sphere(s) => {
                let r = Vec3::new(sx, sy, 1.0).normalize();
                let rc = r.dot(&s.center);
                let disc = rc * rc - s.center.norm_squared() + s.radius * s.radius;
                if disc < 0.0 {
                    return None;
                }
                let t = rc - libm::sqrt(disc);
                if t <= 0.0 {
                    return None;
                }
                let x = r * t;
                Some((x, (x - s.center) / s.radius))
            }
            Shape::Paraboloid(p) => {
                let h = |x: f64, y: f64| {
                    (
                        p.apex_depth + p.curvature * (x * x + y * y),
                        2.0 * p.curvature * x,
                        2.0 * p.curvature * y,
                    )
                };
                let x = height_field_hit(h, sx, sy, p.apex_depth)?;
                (x.x * x.x + x.y * x.y <= p.radius * p.radius).then(|| (x, height_normal(h, &x)))
            }
            Shape::Bumps(b) => {
                let h = |x: f64, y: f64| b.eval(x, y);
                let x = height_field_hit(h, sx, sy, b.base_depth)?;
                (x.x.abs() <= b.half_extent && x.y.abs() <= b.half_extent).then(|| (x, height_normal(h, &x)))
            }
        }
    }

    pub fn render_geometry(&self, cam: &CameraIntrinsics) -> Result<SceneGeometry> {
        let hits = Grid::from_fn(cam.width, cam.height, |c, r| self.intersect(cam, c as f64, r as f64));
        let mask = hits.map(Option::is_some);
        if mask.count() == 0 {
            return Err(Error::EmptyMask("the shape is not visible".into()));
        }
        let depth = DepthMap::new(hits.map(|h| h.map_or(0.0, |(x, _)| x.z)), mask.clone())?;
        let normals = NormalMap::new(hits.map(|h| h.map_or(Vec3::zeros(), |(_, n)| n)), mask)?;
        Ok(SceneGeometry { depth, normals })
    }
}

impl BumpsShape {
    fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (mut z, mut zx, mut zy) = (self.base_depth, 0.0, 0.0);
        for b in &self.bumps {
            let (dx, dy) = (x - b.center.0, y - b.center.1);
            let s2 = b.sigma * b.sigma;
            let g = b.height * libm::exp(-(dx * dx + dy * dy) / (2.0 * s2));
            z -= g;
            zx += g * dx / s2;
            zy += g * dy / s2;
        }
        (z, zx, zy)
    }
}

/// Newton solve of `z = h(z sx, z sy)` along the ray through `(sx, sy, 1)`.
fn height_field_hit(h: impl Fn(f64, f64) -> (f64, f64, f64), sx: f64, sy: f64, z0: f64) -> Option<Vec3> {
    let mut z = z0;
    for _ in 0..100 {
        let (hz, hx, hy) = h(z * sx, z * sy);
        let g = z - hz;
        let dg = 1.0 - (hx * sx + hy * sy);
        if dg.abs() < 1e-12 {
            return None;
        }
        let step = g / dg;
        z -= step;
        if step.abs() <= 1e-15 * z.abs() {
            break;
        }
    }
    let (hz, _, _) = h(z * sx, z * sy);
    ((z - hz).abs() <= 1e-12 && z > 0.0).then(|| Vec3::new(z * sx, z * sy, z))
}

fn height_normal(h: impl Fn(f64, f64) -> (f64, f64, f64), x: &Vec3) -> Vec3 {
    let (_, hx, hy) = h(x.x, x.y);
    Vec3::new(hx, hy, -1.0).normalize()
}

/// Material presets for synthetic scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaterialPreset {
    Lambertian,
    /// Diffuse base with a sharp white highlight (plastic, porcelain).
    DielectricSpecular,
    /// Albedo-tinted highlight with a weak diffuse term.
    Metallic,
    /// Between the two.
    Intermediate,
}

impl MaterialPreset {
    pub const ALL: [MaterialPreset; 4] = [
        MaterialPreset::Lambertian,
        MaterialPreset::DielectricSpecular,
        MaterialPreset::Metallic,
        MaterialPreset::Intermediate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MaterialPreset::Lambertian => "lambertian",
            MaterialPreset::DielectricSpecular => "dielectric_specular",
            MaterialPreset::Metallic => "metallic",
            MaterialPreset::Intermediate => "intermediate",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn material(&self, channels: usize) -> Material {
        let albedo = |g: f64, rgb: (f64, f64, f64)| {
            if channels == 3 {
                Spectrum::rgb(rgb.0, rgb.1, rgb.2)
            } else {
                Spectrum::gray(g)
            }
        };
        match self {
            MaterialPreset::Lambertian => Material::lambertian(albedo(0.7, (0.75, 0.7, 0.6))),
            MaterialPreset::DielectricSpecular => Material::blinn_phong(albedo(0.5, (0.6, 0.45, 0.4)), 0.6, 60.0),
            MaterialPreset::Metallic => Material {
                model: BrdfModel::DiffuseSpecularMix,
                albedo: albedo(0.85, (0.9, 0.75, 0.4)),
                specular_strength: 1.5,
                shininess: 120.0,
                metallic_mix: 0.85,
            },
            MaterialPreset::Intermediate => Material {
                model: BrdfModel::DiffuseSpecularMix,
                albedo: albedo(0.6, (0.65, 0.55, 0.45)),
                specular_strength: 0.8,
                shininess: 40.0,
                metallic_mix: 0.4,
            },
        }
    }
}
