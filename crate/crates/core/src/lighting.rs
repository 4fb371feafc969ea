//! Point lights with an anisotropic radial fall-off.
//!
//! A light at `P` with principal direction `S` (pointing into the scene),
//! brightness `phi` and angular exponent `mu` delivers
//!
//! ```text
//! a(X) = phi * max(0, -L̂ · S)^mu / |L|²,   L = P - X,  L̂ = L / |L|
//! ```
//!
//! to a point `X`. `-L̂ · S` is the cosine between the principal direction and
//! the ray from the light to the point; `mu = 0` gives an isotropic source.

use alloc::vec::Vec;

use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLight {
    pub position: Vec3,
    pub principal_dir: Vec3,
    pub brightness: f64,
    pub mu: f64,
}

impl PointLight {
    /// Validates parameters. The principal direction is normalized when it is
    /// within a loose tolerance of unit length and rejected otherwise.
    pub fn new(position: Vec3, principal_dir: Vec3, brightness: f64, mu: f64) -> Result<Self> {
        let len = principal_dir.norm();
        if !(len.is_finite() && (len - 1.0).abs() < 1e-3) {
            return Err(Error::config("light principal direction must be a unit vector"));
        }
        if !(brightness.is_finite() && brightness > 0.0) {
            return Err(Error::config("light brightness must be positive"));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::config("light angular exponent must be non-negative"));
        }
        if !position.iter().all(|c| c.is_finite()) {
            return Err(Error::config("light position must be finite"));
        }
        Ok(PointLight {
            position,
            principal_dir: principal_dir / len,
            brightness,
            mu,
        })
    }

    /// Isotropic light at `position` facing `+z`.
    pub fn isotropic(position: Vec3, brightness: f64) -> Result<Self> {
        Self::new(position, Vec3::z(), brightness, 0.0)
    }
}

/// Returns `(L, L̂)` with `L = P - X`.
pub fn light_vector(light: &PointLight, x: &Vec3) -> Result<(Vec3, Vec3)> {
    let l = light.position - x;
    let n = l.norm();
    if !(n > 0.0) {
        return Err(Error::DegenerateLight);
    }
    Ok((l, l / n))
}

/// Radiant attenuation of `light` at `x`.
pub fn attenuation(light: &PointLight, x: &Vec3) -> Result<f64> {
    let (l, _) = light_vector(light, x)?;
    Ok(attenuation_from(light, x, &l))
}

/// Attenuation at `x` given `l = P - x`.
pub(crate) fn attenuation_from(light: &PointLight, x: &Vec3, l: &Vec3) -> f64 {
    let angular = if light.mu == 0.0 {
        1.0
    } else {
        let cos = lobe_cosine(light, x, l.norm()).max(0.0);
        libm::pow(cos, light.mu)
    };
    light.brightness * angular / l.norm_squared()
}

/// `(x - P) · S / dist`, with the dot product evaluated in compensated
/// arithmetic. Near the edge of the lobe the plain dot product cancels and
/// loses all relative accuracy.
fn lobe_cosine(light: &PointLight, x: &Vec3, dist: f64) -> f64 {
    let (mut sum, mut err) = (0.0, 0.0);
    for i in 0..3 {
        let (d, d_err) = two_sum(x[i], -light.position[i]);
        let s = light.principal_dir[i];
        let (p, p_err) = two_prod(d, s);
        let (t, t_err) = two_sum(sum, p);
        sum = t;
        err += t_err + p_err + d_err * s;
    }
    (sum + err) / dist
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, libm::fma(a, b, -p))
}

/// Ordered set of lights; light `m` illuminates image `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LightRig {
    lights: Vec<PointLight>,
}

impl LightRig {
    pub const MIN_LIGHTS: usize = 3;

    pub fn new(lights: Vec<PointLight>) -> Result<Self> {
        if lights.len() < Self::MIN_LIGHTS {
            return Err(Error::config(alloc::format!(
                "a rig needs at least {} lights, got {}",
                Self::MIN_LIGHTS,
                lights.len()
            )));
        }
        Ok(LightRig { lights })
    }

    pub fn lights(&self) -> &[PointLight] {
        &self.lights
    }

    pub fn len(&self) -> usize {
        self.lights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lights.is_empty()
    }

    /// Copy of the rig with every light pushed `factor` times further from
    /// `center` along the center-to-light direction, brightness scaled by
    /// `factor²` so the irradiance at `center` is unchanged. Large factors
    /// approach distant directional lighting.
    pub fn moved_away(&self, center: &Vec3, factor: f64) -> Self {
        LightRig {
            lights: self
                .lights
                .iter()
                .map(|l| PointLight {
                    position: center + (l.position - center) * factor,
                    brightness: l.brightness * factor * factor,
                    ..*l
                })
                .collect(),
        }
    }
}

/// `count` lights evenly spaced on a circle of `radius` around the camera in
/// the image plane (`z = 0`), all facing `+z`.
pub fn make_ring_rig(count: usize, radius: f64, brightness: f64, mu: f64) -> Result<LightRig> {
    if count < LightRig::MIN_LIGHTS {
        return Err(Error::config("a ring rig needs at least 3 lights"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::config("ring radius must be positive"));
    }
    let lights = (0..count)
        .map(|k| {
            let theta = 2.0 * core::f64::consts::PI * k as f64 / count as f64;
            let position = Vec3::new(radius * libm::cos(theta), radius * libm::sin(theta), 0.0);
            PointLight::new(position, Vec3::z(), brightness, mu)
        })
        .collect::<Result<Vec<_>>>()?;
    LightRig::new(lights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn light(p: Vec3, s: Vec3, phi: f64, mu: f64) -> PointLight {
        PointLight::new(p, s, phi, mu).unwrap()
    }

    #[test]
    fn light_vector_examples() {
        let x = Vec3::new(0.0, 0.0, 0.1);
        let (l, lh) = light_vector(&light(Vec3::zeros(), Vec3::z(), 1.0, 0.0), &x).unwrap();
        assert_eq!(l, Vec3::new(0.0, 0.0, -0.1));
        assert_eq!(lh, Vec3::new(0.0, 0.0, -1.0));

        let (l, lh) = light_vector(&light(Vec3::new(0.05, 0.0, 0.0), Vec3::z(), 1.0, 0.0), &x).unwrap();
        assert_abs_diff_eq!(l, Vec3::new(0.05, 0.0, -0.1), epsilon = 1e-15);
        assert_abs_diff_eq!(lh, Vec3::new(0.4472135955, 0.0, -0.894427191), epsilon = 1e-9);

        let p = light(x, Vec3::z(), 1.0, 0.0);
        assert_eq!(light_vector(&p, &x), Err(Error::DegenerateLight));
        assert_eq!(attenuation(&p, &x), Err(Error::DegenerateLight));
    }

    #[test]
    fn attenuation_examples() {
        let iso = light(Vec3::zeros(), Vec3::z(), 1.0, 0.0);
        assert_relative_eq!(attenuation(&iso, &Vec3::new(0.0, 0.0, 0.1)).unwrap(), 100.0, max_relative = 1e-12);

        let l = light(Vec3::new(0.05, 0.0, 0.0), Vec3::z(), 2.0, 1.0);
        let a = attenuation(&l, &Vec3::new(0.0, 0.0, 0.1)).unwrap();
        // 2 * (0.1 / sqrt(0.0125)) / 0.0125
        assert_relative_eq!(a, 143.108350559987, max_relative = 1e-12);

        let l = light(Vec3::zeros(), Vec3::z(), 1.0, 3.0);
        assert_eq!(attenuation(&l, &Vec3::new(0.1, 0.0, 0.0)).unwrap(), 0.0);
        // Behind the light.
        assert_eq!(attenuation(&l, &Vec3::new(0.0, 0.0, -0.1)).unwrap(), 0.0);
    }

    #[test]
    fn ring_rig_geometry() {
        let rig = make_ring_rig(15, 0.065, 1.0, 0.0).unwrap();
        assert_eq!(rig.len(), 15);
        for (k, l) in rig.lights().iter().enumerate() {
            assert_eq!(l.position.z, 0.0);
            assert!(l.position.norm() <= 0.065 + 1e-15);
            assert_eq!(l.principal_dir, Vec3::z());
            let next = rig.lights()[(k + 1) % 15].position;
            let angle = l.position.angle(&next).to_degrees();
            assert_abs_diff_eq!(angle, 24.0, epsilon = 1e-9);
        }

        let rig = make_ring_rig(4, 0.05, 1.0, 0.0).unwrap();
        let expected = [(0.05, 0.0), (0.0, 0.05), (-0.05, 0.0), (0.0, -0.05)];
        for (l, (x, y)) in rig.lights().iter().zip(expected) {
            assert_abs_diff_eq!(l.position, Vec3::new(x, y, 0.0), epsilon = 1e-15);
        }
        assert!(make_ring_rig(2, 0.05, 1.0, 0.0).is_err());
        assert!(make_ring_rig(5, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(PointLight::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 2.0), 1.0, 0.0).is_err());
        assert!(PointLight::new(Vec3::zeros(), Vec3::z(), 0.0, 0.0).is_err());
        assert!(PointLight::new(Vec3::zeros(), Vec3::z(), 1.0, -1.0).is_err());
        assert!(LightRig::new(alloc::vec![]).is_err());
    }

    fn arb_vec(scale: f64) -> impl Strategy<Value = Vec3> {
        (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn brightness_is_homogeneous(x in arb_vec(0.2), phi in 0.1..10.0f64, mu in 0.0..5.0f64) {
            prop_assume!(x.norm() > 1e-3);
            let a1 = attenuation(&light(Vec3::zeros(), Vec3::z(), phi, mu), &x).unwrap();
            let a2 = attenuation(&light(Vec3::zeros(), Vec3::z(), 2.0 * phi, mu), &x).unwrap();
            prop_assert!((a2 - 2.0 * a1).abs() <= 1e-12 * a2.abs().max(1.0));
        }

        #[test]
        fn inverse_square_on_axis(d in 0.01..1.0f64, mu in 0.0..5.0f64) {
            let l = light(Vec3::new(0.01, -0.02, 0.0), Vec3::z(), 1.3, mu);
            let a0 = attenuation(&l, &(l.position + Vec3::z() * 0.1)).unwrap() * 0.01;
            let a = attenuation(&l, &(l.position + Vec3::z() * d)).unwrap() * d * d;
            prop_assert!((a - a0).abs() <= 1e-12 * a0);
        }

        #[test]
        fn radially_symmetric(x in arb_vec(0.2), angle in 0.0..core::f64::consts::TAU, mu in 0.0..5.0f64) {
            let s = Vec3::new(0.2, -0.1, 1.0).normalize();
            let p = Vec3::new(0.03, 0.01, 0.0);
            prop_assume!((x - p).norm() > 1e-3);
            let l = light(p, s, 1.0, mu);
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(s), angle);
            let xr = p + rot * (x - p);
            let (a, ar) = (attenuation(&l, &x).unwrap(), attenuation(&l, &xr).unwrap());
            prop_assert!((a - ar).abs() <= 1e-9 * a.max(1e-12));
        }

        #[test]
        fn isotropic_ignores_direction(x in arb_vec(0.2), s in arb_vec(1.0)) {
            prop_assume!(x.norm() > 1e-3 && s.norm() > 1e-2);
            let a = attenuation(&light(Vec3::zeros(), Vec3::z(), 1.0, 0.0), &x).unwrap();
            let b = attenuation(&light(Vec3::zeros(), s.normalize(), 1.0, 0.0), &x).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
