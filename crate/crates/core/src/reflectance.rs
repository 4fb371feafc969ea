//! Parametric BRDFs, the per-pixel forward renderer and the stochastic
//! global-illumination augmentations applied to rendered training samples.

use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::geometry::{backproject, viewing_direction, CameraIntrinsics, DepthMap, NormalMap};
use crate::lighting::{attenuation_from, light_vector, LightRig};
use crate::{par, Error, Grid, Image, Result, Vec3};

/// Per-channel value for grayscale (one channel) or RGB (three channels) data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    len: u8,
    values: [f64; 3],
}

impl Spectrum {
    pub const fn gray(v: f64) -> Self {
        Spectrum {
            len: 1,
            values: [v, 0.0, 0.0],
        }
    }

    pub const fn rgb(r: f64, g: f64, b: f64) -> Self {
        Spectrum {
            len: 3,
            values: [r, g, b],
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v {
            [g] => Ok(Self::gray(*g)),
            [r, g, b] => Ok(Self::rgb(*r, *g, *b)),
            _ => Err(Error::dimension("1 or 3 channels", v.len())),
        }
    }

    pub fn zero(channels: usize) -> Self {
        Spectrum {
            len: channels as u8,
            values: [0.0; 3],
        }
    }

    pub fn channels(&self) -> usize {
        self.len as usize
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len as usize]
    }

    pub fn map(mut self, f: impl Fn(f64) -> f64) -> Self {
        for v in &mut self.values[..self.len as usize] {
            *v = f(*v);
        }
        self
    }

    pub fn scale(self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// Mean over channels.
    pub fn magnitude(&self) -> f64 {
        self.as_slice().iter().sum::<f64>() / self.len as f64
    }

    pub fn max_channel(&self) -> f64 {
        self.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn zip(mut self, other: &Spectrum, f: impl Fn(f64, f64) -> f64) -> Self {
        for (a, b) in self.values.iter_mut().zip(other.values) {
            *a = f(*a, b);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrdfModel {
    Lambertian,
    BlinnPhong,
    DiffuseSpecularMix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub model: BrdfModel,
    pub albedo: Spectrum,
    pub specular_strength: f64,
    pub shininess: f64,
    pub metallic_mix: f64,
}

impl Material {
    pub fn lambertian(albedo: Spectrum) -> Self {
        Material {
            model: BrdfModel::Lambertian,
            albedo,
            specular_strength: 0.0,
            shininess: 1.0,
            metallic_mix: 0.0,
        }
    }

    pub fn blinn_phong(albedo: Spectrum, specular_strength: f64, shininess: f64) -> Self {
        Material {
            model: BrdfModel::BlinnPhong,
            albedo,
            specular_strength,
            shininess,
            metallic_mix: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.albedo.as_slice().iter().all(|a| (0.0..=1.0).contains(a)) {
            return Err(Error::config("albedo must lie in [0, 1]"));
        }
        if self.model == BrdfModel::Lambertian {
            return Ok(());
        }
        if !(self.specular_strength >= 0.0 && self.specular_strength.is_finite()) {
            return Err(Error::config("specular strength must be non-negative"));
        }
        if !(self.shininess > 0.0 && self.shininess.is_finite()) {
            return Err(Error::config("shininess must be positive"));
        }
        if !(0.0..=1.0).contains(&self.metallic_mix) {
            return Err(Error::config("metallic mix must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Reflectance `B(N, L̂, V̂, ρ)`.
///
/// Lambertian is `ρ cos`, Blinn-Phong adds a white lobe
/// `k_s max(0, N·Ĥ)^n` and the mix blends Blinn-Phong with an albedo-tinted
/// lobe without diffuse term (a metal) by `metallic_mix`. Everything is zero
/// in attached shadow (`N·L̂ ≤ 0`).
pub fn brdf_eval(n: &Vec3, l_hat: &Vec3, v_hat: &Vec3, material: &Material) -> Spectrum {
    let cos = n.dot(l_hat);
    if cos <= 0.0 {
        return Spectrum::zero(material.albedo.channels());
    }
    let diffuse = material.albedo.scale(cos);
    if material.model == BrdfModel::Lambertian {
        return diffuse;
    }
    let h = l_hat + v_hat;
    let h_len = h.norm();
    let lobe = if h_len > 0.0 {
        material.specular_strength * libm::pow((n.dot(&h) / h_len).max(0.0), material.shininess)
    } else {
        0.0
    };
    let plastic = diffuse.map(|d| d + lobe);
    match material.model {
        BrdfModel::BlinnPhong => plastic,
        _ => {
            let m = material.metallic_mix;
            plastic.zip(&material.albedo, |p, a| (1.0 - m) * p + m * a * lobe)
        }
    }
}

/// A surface point with its normal and material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub x: Vec3,
    pub n: Vec3,
    pub material: Material,
}

/// Unexposed intensities `i_m = a_m(X) B(N, L̂_m, V̂, ρ)` for every light.
pub fn render_pixel(sample: &SurfaceSample, rig: &LightRig) -> Result<Vec<Spectrum>> {
    let v_hat = viewing_direction(&sample.x)?;
    rig.lights()
        .iter()
        .map(|light| {
            let (l, l_hat) = light_vector(light, &sample.x)?;
            let a = attenuation_from(light, &sample.x, &l);
            Ok(brdf_eval(&sample.n, &l_hat, &v_hat, &sample.material).scale(a))
        })
        .collect()
}

/// Rendered image stack. `images[m] = exposure * raw_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedStack {
    pub images: Vec<Image>,
    pub exposure: f64,
}

/// Fraction of the sorted masked intensities mapped to 1.0 by the exposure.
pub const EXPOSURE_PERCENTILE: f64 = 0.99;

/// Renders one image per light. Unmasked pixels are zero. A single exposure
/// maps the 99th percentile of all masked values to 1.
pub fn render_scene(
    depth: &DepthMap,
    normals: &NormalMap,
    materials: &Grid<Material>,
    rig: &LightRig,
    cam: &CameraIntrinsics,
) -> Result<RenderedStack> {
    depth.values.check_shape(&normals.vectors)?;
    depth.values.check_shape(materials)?;
    if depth.width() != cam.width || depth.height() != cam.height {
        return Err(Error::dimension(
            alloc::format!("{}x{}", cam.width, cam.height),
            alloc::format!("{}x{}", depth.width(), depth.height()),
        ));
    }
    let channels = materials.as_slice().first().map_or(1, |m| m.albedo.channels());
    if materials.as_slice().iter().any(|m| m.albedo.channels() != channels) {
        return Err(Error::dimension(channels, "mixed channel counts"));
    }
    let (w, h) = (depth.width(), depth.height());
    let pixels = par::map_range(w * h, |i| -> Result<Option<Vec<Spectrum>>> {
        let (col, row) = (i % w, i / w);
        if !(*depth.mask.get(col, row) && *normals.mask.get(col, row)) {
            return Ok(None);
        }
        let x = backproject((col as f64, row as f64), *depth.values.get(col, row), cam)?;
        let sample = SurfaceSample {
            x,
            n: *normals.vectors.get(col, row),
            material: *materials.get(col, row),
        };
        render_pixel(&sample, rig).map(Some)
    });
    let mut images: Vec<Image> = (0..rig.len()).map(|_| Image::zeros(w, h, channels)).collect();
    let mut values = Vec::new();
    for (i, px) in pixels.into_iter().enumerate() {
        let Some(px) = px? else { continue };
        for (img, s) in images.iter_mut().zip(&px) {
            img.pixel_mut(i % w, i / w).copy_from_slice(s.as_slice());
            values.extend_from_slice(s.as_slice());
        }
    }
    let exposure = exposure_for(&mut values);
    for img in &mut images {
        for v in img.as_mut_slice() {
            *v *= exposure;
        }
    }
    Ok(RenderedStack { images, exposure })
}

fn exposure_for(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let k = ((values.len() - 1) as f64 * EXPOSURE_PERCENTILE).round() as usize;
    let (_, p, _) = values.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    if *p > 0.0 && p.is_finite() {
        1.0 / *p
    } else {
        1.0
    }
}

/// Magnitudes of the stochastic global-illumination effects added to
/// rendered samples, relative to intensities of order one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GIAugmentation {
    /// Probability that a light is occluded (cast shadow) for a sample.
    pub cast_shadow_prob: f64,
    /// Shadowed samples are multiplied by a factor uniform in `[0, shadow_factor_max]`.
    pub shadow_factor_max: f64,
    pub ambient_max: f64,
    pub self_reflection_max: f64,
    pub noise_sigma: f64,
}

impl GIAugmentation {
    pub const NONE: GIAugmentation = GIAugmentation {
        cast_shadow_prob: 0.0,
        shadow_factor_max: 0.1,
        ambient_max: 0.0,
        self_reflection_max: 0.0,
        noise_sigma: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.cast_shadow_prob)
            && (0.0..=1.0).contains(&self.shadow_factor_max)
            && self.ambient_max >= 0.0
            && self.self_reflection_max >= 0.0
            && self.noise_sigma >= 0.0
            && self.ambient_max.is_finite()
            && self.self_reflection_max.is_finite()
            && self.noise_sigma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::config("augmentation parameters out of range"))
        }
    }
}

impl Default for GIAugmentation {
    fn default() -> Self {
        GIAugmentation {
            cast_shadow_prob: 0.1,
            shadow_factor_max: 0.1,
            ambient_max: 0.02,
            self_reflection_max: 0.05,
            noise_sigma: 0.005,
        }
    }
}

fn uniform<R: rand::Rng + ?Sized>(rng: &mut R, max: f64) -> f64 {
    if max > 0.0 {
        rng.random_range(0.0..=max)
    } else {
        0.0
    }
}

/// Applies cast shadows, shared ambient light, per-light self reflections and
/// Gaussian noise (clamped at zero) to one pixel's samples.
pub fn augment_samples<R: rand::Rng + ?Sized>(
    intensities: &[Spectrum],
    aug: &GIAugmentation,
    rng: &mut R,
) -> Vec<Spectrum> {
    let ambient = uniform(rng, aug.ambient_max);
    let noise = (aug.noise_sigma > 0.0).then(|| Normal::new(0.0, aug.noise_sigma).expect("sigma is positive"));
    intensities
        .iter()
        .map(|&i| {
            let shadow = if aug.cast_shadow_prob > 0.0 && rng.random_bool(aug.cast_shadow_prob) {
                uniform(rng, aug.shadow_factor_max)
            } else {
                1.0
            };
            let reflection = uniform(rng, aug.self_reflection_max);
            let mut out = i.map(|v| v * shadow + ambient + reflection);
            if let Some(noise) = &noise {
                for v in &mut out.values[..out.len as usize] {
                    *v = (*v + noise.sample(rng)).max(0.0);
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lighting::{attenuation, make_ring_rig, PointLight};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::SeedableRng;

    const DOWN: Vec3 = Vec3::new(0.0, 0.0, -1.0);

    #[test]
    fn brdf_examples() {
        let lam = Material::lambertian(Spectrum::gray(0.5));
        assert_eq!(brdf_eval(&DOWN, &DOWN, &DOWN, &lam), Spectrum::gray(0.5));
        let l = Vec3::new(0.0, 0.0, -0.3) + Vec3::new(0.0, (1.0f64 - 0.09).sqrt(), 0.0);
        assert_eq!(brdf_eval(&-DOWN, &l.normalize(), &DOWN, &lam), Spectrum::gray(0.0));

        let bp = Material::blinn_phong(Spectrum::gray(0.2), 1.0, 50.0);
        assert_relative_eq!(brdf_eval(&DOWN, &DOWN, &DOWN, &bp).as_slice()[0], 1.2, max_relative = 1e-15);
    }

    #[test]
    fn metallic_mix_interpolates() {
        let albedo = Spectrum::rgb(0.9, 0.6, 0.2);
        let l = Vec3::new(0.3, 0.0, -1.0).normalize();
        let v = Vec3::new(-0.2, 0.1, -1.0).normalize();
        let bp = Material::blinn_phong(albedo, 0.8, 20.0);
        let mut mix = Material {
            model: BrdfModel::DiffuseSpecularMix,
            metallic_mix: 0.0,
            ..bp
        };
        assert_eq!(brdf_eval(&DOWN, &l, &v, &mix), brdf_eval(&DOWN, &l, &v, &bp));
        mix.metallic_mix = 1.0;
        let h = (l + v).normalize();
        let lobe = 0.8 * DOWN.dot(&h).powf(20.0);
        let metal = brdf_eval(&DOWN, &l, &v, &mix);
        for (c, a) in metal.as_slice().iter().zip(albedo.as_slice()) {
            assert_relative_eq!(*c, a * lobe, max_relative = 1e-12);
        }
    }

    fn unit(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z).normalize()
    }

    proptest! {
        #[test]
        fn brdf_non_negative_and_linear(
            nx in -1.0..1.0f64, ny in -1.0..1.0f64, lx in -1.0..1.0f64, ly in -1.0..1.0f64,
            rho in 0.0..0.5f64, s in 0.0..2.0f64, shin in 1.0..200.0f64,
        ) {
            let n = unit(nx, ny, -1.0);
            let l = unit(lx, ly, -1.0);
            let v = unit(0.1, -0.2, -1.0);
            let bp = Material::blinn_phong(Spectrum::gray(rho), s, shin);
            prop_assert!(brdf_eval(&n, &l, &v, &bp).as_slice()[0] >= 0.0);
            let a = brdf_eval(&n, &l, &v, &Material::lambertian(Spectrum::gray(rho))).as_slice()[0];
            let b = brdf_eval(&n, &l, &v, &Material::lambertian(Spectrum::gray(2.0 * rho))).as_slice()[0];
            prop_assert!((b - 2.0 * a).abs() <= 1e-15);
        }

        #[test]
        fn specular_lobe_symmetric_in_light_and_view(
            lx in -0.5..0.5f64, ly in -0.5..0.5f64, vx in -0.5..0.5f64, vy in -0.5..0.5f64,
        ) {
            let l = unit(lx, ly, -1.0);
            let v = unit(vx, vy, -1.0);
            let n = unit(0.1, 0.05, -1.0);
            let lobe_only = Material::blinn_phong(Spectrum::gray(0.0), 1.0, 30.0);
            let a = brdf_eval(&n, &l, &v, &lobe_only).as_slice()[0];
            let b = brdf_eval(&n, &v, &l, &lobe_only).as_slice()[0];
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn render_pixel_matches_hand_evaluation() {
        let light = PointLight::isotropic(Vec3::new(0.03, -0.01, 0.0), 1.7).unwrap();
        let rig = LightRig::new(alloc::vec![light; 3]).unwrap();
        let x = Vec3::new(0.01, 0.02, 0.14);
        let n = unit(0.2, -0.3, -1.0);
        let sample = SurfaceSample {
            x,
            n,
            material: Material::lambertian(Spectrum::gray(0.6)),
        };
        let out = render_pixel(&sample, &rig).unwrap();
        let l = light.position - x;
        let expected = 1.7 * 0.6 * (n.dot(&l) / l.norm()).max(0.0) / l.norm_squared();
        for s in out {
            assert_relative_eq!(s.as_slice()[0], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn render_pixel_inverse_square_and_shadow() {
        let rig = LightRig::new(alloc::vec![PointLight::isotropic(Vec3::zeros(), 1.0).unwrap(); 3]).unwrap();
        let mat = Material::lambertian(Spectrum::gray(0.5));
        let near = render_pixel(&SurfaceSample { x: Vec3::new(0.0, 0.0, 0.1), n: DOWN, material: mat }, &rig).unwrap();
        let far = render_pixel(&SurfaceSample { x: Vec3::new(0.0, 0.0, 0.2), n: DOWN, material: mat }, &rig).unwrap();
        assert_relative_eq!(far[0].as_slice()[0] * 4.0, near[0].as_slice()[0], max_relative = 1e-12);

        // Behind every lobe.
        let lobed = LightRig::new(alloc::vec![PointLight::new(Vec3::zeros(), Vec3::z(), 1.0, 2.0).unwrap(); 4]).unwrap();
        let behind = SurfaceSample { x: Vec3::new(0.0, 0.0, -0.1), n: -DOWN, material: mat };
        assert!(render_pixel(&behind, &lobed).unwrap().iter().all(|s| s.as_slice()[0] == 0.0));
    }

    #[test]
    fn render_pixel_factorizes_over_lights() {
        let rig = make_ring_rig(5, 0.05, 1.0, 1.0).unwrap();
        let mut lights = rig.lights().to_vec();
        lights[2].brightness *= 2.0;
        let brighter = LightRig::new(lights).unwrap();
        let sample = SurfaceSample {
            x: Vec3::new(0.005, -0.01, 0.15),
            n: unit(0.1, 0.1, -1.0),
            material: Material::blinn_phong(Spectrum::gray(0.4), 0.5, 10.0),
        };
        let a = render_pixel(&sample, &rig).unwrap();
        let b = render_pixel(&sample, &brighter).unwrap();
        for m in 0..5 {
            let f = if m == 2 { 2.0 } else { 1.0 };
            assert_relative_eq!(b[m].as_slice()[0], f * a[m].as_slice()[0], max_relative = 1e-14);
        }
    }

    fn plane_scene(cam: &CameraIntrinsics, z: f64) -> (DepthMap, NormalMap, Grid<Material>) {
        let mask = Grid::filled(cam.width, cam.height, true);
        let depth = DepthMap::plane(&mask, z).unwrap();
        let normals = NormalMap::new(Grid::filled(cam.width, cam.height, DOWN), mask).unwrap();
        let mats = Grid::filled(cam.width, cam.height, Material::lambertian(Spectrum::gray(0.7)));
        (depth, normals, mats)
    }

    #[test]
    fn plane_images_peak_near_light_foot_point() {
        let cam = CameraIntrinsics::centered(200.0, 81, 81).unwrap();
        let (depth, normals, mats) = plane_scene(&cam, 0.05);
        let rig = make_ring_rig(4, 0.05, 1.0, 0.0).unwrap();
        let stack = render_scene(&depth, &normals, &mats, &rig, &cam).unwrap();
        for (img, light) in stack.images.iter().zip(rig.lights()) {
            let (mut best, mut at) = (0.0, (0, 0));
            for row in 0..81 {
                for col in 0..81 {
                    let v = img.pixel(col, row)[0];
                    if v > best {
                        best = v;
                        at = (col, row);
                    }
                }
            }
            // The peak of cos/d² on the plane lies between the foot point and
            // the image center; it sits within the quadrant of the light.
            let (fu, fv) = cam.project(&Vec3::new(light.position.x, light.position.y, 0.05));
            let (cu, cv) = cam.principal_point;
            let to_peak = (at.0 as f64 - cu, at.1 as f64 - cv);
            let to_foot = (fu - cu, fv - cv);
            assert!(to_peak.0 * to_foot.0 + to_peak.1 * to_foot.1 > 0.0);
            // Analytic value at the peak pixel.
            let x = backproject((at.0 as f64, at.1 as f64), 0.05, &cam).unwrap();
            let a = attenuation(light, &x).unwrap();
            let (_, l_hat) = light_vector(light, &x).unwrap();
            assert_relative_eq!(best, stack.exposure * a * 0.7 * DOWN.dot(&l_hat), max_relative = 1e-12);
        }
    }

    #[test]
    fn far_field_limit() {
        let cam = CameraIntrinsics::centered(300.0, 48, 48).unwrap();
        let (depth, normals, mats) = plane_scene(&cam, 0.15);
        let center = Vec3::new(0.0, 0.0, 0.15);
        let rig = make_ring_rig(8, 0.065, 1.0, 0.0).unwrap();
        let far_rig = rig.moved_away(&center, 100.0);
        let far = render_scene(&depth, &normals, &mats, &far_rig, &cam).unwrap();
        for (m, light) in rig.lights().iter().enumerate() {
            let d = light.position - center;
            let (dir, irradiance) = (d.normalize(), light.brightness / d.norm_squared());
            for row in 0..48 {
                for col in 0..48 {
                    let expected = irradiance * 0.7 * DOWN.dot(&dir).max(0.0);
                    let got = far.images[m].pixel(col, row)[0] / far.exposure;
                    assert_relative_eq!(got, expected, max_relative = 0.01);
                }
            }
        }
    }

    #[test]
    fn empty_mask_renders_black() {
        let cam = CameraIntrinsics::centered(300.0, 16, 16).unwrap();
        let (mut depth, normals, mats) = plane_scene(&cam, 0.15);
        depth.mask = Grid::filled(16, 16, false);
        let stack = render_scene(&depth, &normals, &mats, &make_ring_rig(5, 0.05, 1.0, 0.0).unwrap(), &cam).unwrap();
        assert!(stack.images.iter().all(|im| im.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn render_scene_shape_mismatch() {
        let cam = CameraIntrinsics::centered(300.0, 16, 16).unwrap();
        let (depth, normals, _) = plane_scene(&cam, 0.15);
        let mats = Grid::filled(8, 16, Material::lambertian(Spectrum::gray(0.7)));
        let rig = make_ring_rig(5, 0.05, 1.0, 0.0).unwrap();
        assert!(matches!(render_scene(&depth, &normals, &mats, &rig, &cam), Err(Error::Dimension { .. })));
    }

    #[test]
    fn exposure_maps_percentile_to_one() {
        let cam = CameraIntrinsics::centered(150.0, 32, 32).unwrap();
        let (depth, normals, mats) = plane_scene(&cam, 0.12);
        let stack = render_scene(&depth, &normals, &mats, &make_ring_rig(15, 0.065, 1.0, 0.0).unwrap(), &cam).unwrap();
        let mut all: Vec<f64> = stack.images.iter().flat_map(|i| i.as_slice().iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        let k = ((all.len() - 1) as f64 * 0.99).round() as usize;
        assert_abs_diff_eq!(all[k], 1.0, epsilon = 1e-12);
    }

    fn samples(k: usize, v: f64) -> Vec<Spectrum> {
        (0..k).map(|_| Spectrum::gray(v)).collect()
    }

    #[test]
    fn augmentation_identity_when_disabled() {
        let mut rng = crate::Rng::seed_from_u64(1);
        let input: Vec<Spectrum> = (0..15).map(|m| Spectrum::rgb(m as f64, 0.5, 0.1)).collect();
        assert_eq!(augment_samples(&input, &GIAugmentation::NONE, &mut rng), input);
    }

    #[test]
    fn full_shadow_zeroes_everything() {
        let mut rng = crate::Rng::seed_from_u64(2);
        let aug = GIAugmentation {
            cast_shadow_prob: 1.0,
            shadow_factor_max: 0.0,
            ..GIAugmentation::NONE
        };
        let out = augment_samples(&samples(15, 0.8), &aug, &mut rng);
        assert!(out.iter().all(|s| s.as_slice()[0] == 0.0));
    }

    #[test]
    fn shadow_frequency_matches_probability() {
        let mut rng = crate::Rng::seed_from_u64(3);
        let aug = GIAugmentation {
            cast_shadow_prob: 0.15,
            ..GIAugmentation::NONE
        };
        let draws = 100_000;
        let shadowed = (0..draws / 10)
            .flat_map(|_| augment_samples(&samples(10, 1.0), &aug, &mut rng))
            .filter(|s| s.as_slice()[0] <= 0.1)
            .count();
        let freq = shadowed as f64 / draws as f64;
        assert!((freq - 0.15).abs() < 0.01, "shadow frequency {freq}");
    }

    #[test]
    fn augmentation_ranges() {
        let mut rng = crate::Rng::seed_from_u64(4);
        let aug = GIAugmentation {
            ambient_max: 0.1,
            self_reflection_max: 0.2,
            ..GIAugmentation::NONE
        };
        for _ in 0..1000 {
            let out = augment_samples(&samples(15, 0.5), &aug, &mut rng);
            let ambient_floor = out.iter().map(|s| s.as_slice()[0]).fold(f64::INFINITY, f64::min) - 0.5;
            for s in &out {
                let v = s.as_slice()[0];
                assert!((0.5..=0.8 + 1e-12).contains(&v));
                assert!(v - 0.5 - ambient_floor <= 0.2 + 1e-12);
            }
        }
        let noisy = GIAugmentation {
            noise_sigma: 1.0,
            ..GIAugmentation::NONE
        };
        let out = augment_samples(&samples(1000, 0.0), &noisy, &mut rng);
        assert!(out.iter().all(|s| s.as_slice()[0] >= 0.0));
        assert!(out.iter().any(|s| s.as_slice()[0] > 0.0));
    }
}
