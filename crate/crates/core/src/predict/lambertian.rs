use alloc::vec::Vec;

use nalgebra::{Matrix3, SymmetricEigen};

use super::NormalPredictor;
use crate::obsmap::{PixelObservation, ReflectanceSample};
use crate::reflectance::Spectrum;
use crate::{Error, Result, Vec3};

/// Samples whose magnitude does not exceed this fraction of the brightest one
/// are treated as shadowed.
pub const SHADOW_THRESHOLD_REL: f64 = 0.02;

/// Smallest admissible ratio between the extreme eigenvalues of `Σ L̂ L̂ᵀ`.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertianFit {
    pub normal: Vec3,
    pub albedo: Spectrum,
    pub used_samples: usize,
}

/// Least-squares Lambertian fit `min_b Σ (j̄_m - b·L̂_m)²` over the unshadowed
/// samples; `N = b / |b|` flipped to face `v_hat`, albedo re-fitted per
/// channel given `N`.
pub fn lambertian_ls_predict(samples: &[ReflectanceSample], v_hat: &Vec3) -> Result<LambertianFit> {
    let peak = samples.iter().map(|s| s.j.magnitude()).fold(0.0, f64::max);
    let lit: Vec<&ReflectanceSample> = samples
        .iter()
        .filter(|s| s.j.magnitude() > SHADOW_THRESHOLD_REL * peak)
        .collect();
    if lit.len() < 3 {
        return Err(Error::InsufficientData {
            available: lit.len(),
            required: 3,
        });
    }
    let mut gram = Matrix3::zeros();
    let mut rhs = Vec3::zeros();
    for s in &lit {
        gram += s.l_hat * s.l_hat.transpose();
        rhs += s.l_hat * s.j.magnitude();
    }
    let eig = SymmetricEigen::new(gram);
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if !(hi > 0.0 && lo > RANK_TOLERANCE * hi) {
        return Err(Error::DegenerateLighting);
    }
    let inv = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e)) * eig.eigenvectors.transpose();
    let b = inv * rhs;
    let len = b.norm();
    if !(len > 0.0) {
        return Err(Error::Numerical("zero Lambertian fit".into()));
    }
    let mut normal = b / len;
    if normal.dot(v_hat) < 0.0 {
        normal = -normal;
    }
    let channels = lit[0].j.channels();
    let mut num = [0.0; 3];
    let mut den = 0.0;
    for s in &lit {
        let shade = normal.dot(&s.l_hat);
        den += shade * shade;
        for (n, j) in num.iter_mut().zip(s.j.as_slice()) {
            *n += j * shade;
        }
    }
    let albedo = Spectrum::from_slice(&num[..channels])?.scale(1.0 / den);
    Ok(LambertianFit {
        normal,
        albedo,
        used_samples: lit.len(),
    })
}

/// Predictor wrapper around [`lambertian_ls_predict`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LambertianLs;

impl NormalPredictor for LambertianLs {
    fn predict(&self, obs: &PixelObservation) -> Result<Vec3> {
        lambertian_ls_predict(&obs.samples, &obs.v_hat).map(|f| f.normal)
    }
}
