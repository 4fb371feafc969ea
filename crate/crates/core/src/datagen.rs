//! Synthetic training data for the normal predictor.
//!
//! Each example is one surface point drawn inside the camera frustum with an
//! independent random normal and material. Intensities are rendered at the
//! true point, while the observation map is built from a point shifted along
//! the same ray by Gaussian depth noise, so the network learns to tolerate the
//! depth errors of early reconstruction iterations.

use alloc::vec::Vec;

use rand_distr::{Distribution, Normal, StandardNormal};

use crate::geometry::{sample_frustum, viewing_direction, CameraIntrinsics};
use crate::lighting::{attenuation_from, light_vector, LightRig};
use crate::obsmap::{observe_pixel, ObservationMap, DEFAULT_MAP_SIZE};
use crate::predict::NetScalar;
use crate::reflectance::{augment_samples, render_pixel, BrdfModel, GIAugmentation, Material, Spectrum, SurfaceSample};
use crate::{item_rng, par, Error, Result, Vec3};

/// Attempts per example before it is skipped.
pub const MAX_ATTEMPTS: usize = 64;

/// Examples generated per parallel block.
const BLOCK: usize = 4096;

/// Sampling intervals for material parameters. Shininess is drawn
/// log-uniformly, everything else uniformly; RGB albedo channels are drawn
/// independently.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRanges {
    pub models: Vec<BrdfModel>,
    pub albedo: (f64, f64),
    pub specular_strength: (f64, f64),
    pub shininess: (f64, f64),
    pub metallic_mix: (f64, f64),
}

impl Default for MaterialRanges {
    fn default() -> Self {
        MaterialRanges {
            models: alloc::vec![BrdfModel::Lambertian, BrdfModel::BlinnPhong, BrdfModel::DiffuseSpecularMix],
            albedo: (0.1, 1.0),
            specular_strength: (0.0, 1.5),
            shininess: (5.0, 150.0),
            metallic_mix: (0.0, 1.0),
        }
    }
}

impl MaterialRanges {
    pub fn lambertian(albedo: (f64, f64)) -> Self {
        MaterialRanges {
            models: alloc::vec![BrdfModel::Lambertian],
            albedo,
            ..MaterialRanges::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.models.is_empty() {
            return Err(Error::config("at least one material model is required"));
        }
        if !(ordered(self.albedo) && self.albedo.0 >= 0.0 && self.albedo.1 <= 1.0) {
            return Err(Error::config("albedo range must lie in [0, 1]"));
        }
        if !(ordered(self.specular_strength) && self.specular_strength.0 >= 0.0) {
            return Err(Error::config("specular strength range must be non-negative"));
        }
        if !(ordered(self.shininess) && self.shininess.0 > 0.0) {
            return Err(Error::config("shininess range must be positive"));
        }
        if !(ordered(self.metallic_mix) && self.metallic_mix.0 >= 0.0 && self.metallic_mix.1 <= 1.0) {
            return Err(Error::config("metallic mix range must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, channels: usize, rng: &mut R) -> Material {
        let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
        let albedo = match channels {
            3 => Spectrum::rgb(draw(self.albedo), draw(self.albedo), draw(self.albedo)),
            _ => Spectrum::gray(draw(self.albedo)),
        };
        let specular_strength = draw(self.specular_strength);
        let shininess = libm::exp(draw((libm::log(self.shininess.0), libm::log(self.shininess.1))));
        let metallic_mix = draw(self.metallic_mix);
        let model = self.models[rng.random_range(0..self.models.len())];
        Material {
            model,
            albedo,
            specular_strength,
            shininess,
            metallic_mix,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatagenConfig {
    pub rig: LightRig,
    pub intrinsics: CameraIntrinsics,
    pub depth_range: (f64, f64),
    /// Standard deviation of the depth perturbation, meters.
    pub depth_sigma: f64,
    pub materials: MaterialRanges,
    pub aug: GIAugmentation,
    pub count: usize,
    pub seed: u64,
    pub map_size: usize,
    pub channels: usize,
}

impl DatagenConfig {
    pub fn new(rig: LightRig, intrinsics: CameraIntrinsics) -> Self {
        DatagenConfig {
            rig,
            intrinsics,
            depth_range: (0.10, 0.20),
            depth_sigma: 0.004,
            materials: MaterialRanges::default(),
            aug: GIAugmentation::default(),
            count: 200_000,
            seed: 0,
            map_size: DEFAULT_MAP_SIZE,
            channels: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.materials.validate()?;
        self.aug.validate()?;
        let (lo, hi) = self.depth_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::config("depth range must satisfy 0 < min < max"));
        }
        if !(self.depth_sigma >= 0.0 && self.depth_sigma.is_finite()) {
            return Err(Error::config("depth sigma must be finite and non-negative"));
        }
        if self.count == 0 {
            return Err(Error::config("example count must be at least 1"));
        }
        if self.map_size == 0 {
            return Err(Error::config("map size must be positive"));
        }
        if !(self.channels == 1 || self.channels == 3) {
            return Err(Error::config("channel count must be 1 or 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub map: ObservationMap,
    /// True unit normal, camera frame.
    pub label: Vec3,
    /// True surface point.
    pub point: Vec3,
    pub material: Material,
    /// Applied depth perturbation, meters.
    pub delta_z: f64,
}

/// Uniform direction on the hemisphere facing the camera from `x`.
fn front_facing_normal<R: rand::Rng + ?Sized>(x: &Vec3, rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let len = v.norm();
        if len < 1e-9 {
            continue;
        }
        let d = v.dot(x);
        if d != 0.0 {
            return if d < 0.0 { v / len } else { -v / len };
        }
    }
}

/// Scales intensities by the power of two that brings the brightest channel
/// into `(0.5, 1]`. Exact, so normalized maps are unaffected.
fn expose(samples: &mut [Spectrum]) -> bool {
    let peak = samples.iter().map(Spectrum::max_channel).fold(0.0, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return false;
    }
    let k = libm::ceil(libm::log2(peak)) as i32;
    let s = libm::ldexp(1.0, -k);
    samples.iter_mut().for_each(|v| *v = v.scale(s));
    true
}

/// Observation map of `x` seen through `rig` with per-light lighting taken
/// at `x_lit`.
fn map_at(intensities: &[Spectrum], rig: &LightRig, x_lit: &Vec3, v_hat: Vec3, d: usize) -> Result<Option<ObservationMap>> {
    let lighting = rig
        .lights()
        .iter()
        .map(|light| {
            let (l, l_hat) = light_vector(light, x_lit)?;
            Ok((attenuation_from(light, x_lit, &l), l_hat))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(observe_pixel(intensities, &lighting, v_hat, d)
        .map(|obs| obs.map())
        .filter(ObservationMap::is_valid))
}

/// Draws one training example, retrying up to [`MAX_ATTEMPTS`] times when the
/// map is unusable (for example a normal facing away from every light).
/// Returns `Ok(None)` when every attempt failed.
pub fn sample_example<R: rand::Rng + ?Sized>(cfg: &DatagenConfig, rng: &mut R) -> Result<Option<TrainingExample>> {
    let noise = Normal::new(0.0, cfg.depth_sigma).map_err(|_| Error::config("invalid depth sigma"))?;
    for _ in 0..MAX_ATTEMPTS {
        let x = sample_frustum(&cfg.intrinsics, cfg.depth_range, rng)?;
        let n = front_facing_normal(&x, rng);
        let material = cfg.materials.sample(cfg.channels, rng);
        let mut raw = render_pixel(&SurfaceSample { x, n, material }, &cfg.rig)?;
        if !expose(&mut raw) {
            continue;
        }
        let intensities = augment_samples(&raw, &cfg.aug, rng);
        let delta_z = noise.sample(rng);
        let z = x.z + delta_z;
        if z <= 0.0 {
            continue;
        }
        let x_lit = x * (z / x.z);
        let v_hat = viewing_direction(&x)?;
        match map_at(&intensities, &cfg.rig, &x_lit, v_hat, cfg.map_size) {
            Ok(Some(map)) => {
                return Ok(Some(TrainingExample {
                    map,
                    label: n,
                    point: x,
                    material,
                    delta_z,
                }))
            }
            Ok(None) | Err(Error::DegenerateLight) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Generates exactly `cfg.count` examples. Example `k` of the underlying
/// sequence uses `item_rng(seed, k)`; skipped indices are replaced by later
/// ones, so the result is independent of scheduling. `on_progress` receives
/// the number of examples generated so far.
pub fn generate_examples(cfg: &DatagenConfig, mut on_progress: impl FnMut(usize)) -> Result<Dataset> {
    cfg.validate()?;
    let mut data = Dataset::new(cfg.map_size, cfg.channels)?;
    let mut next = 0u64;
    while data.len() < cfg.count {
        let want = (cfg.count - data.len()).min(BLOCK);
        let start = next;
        let block = par::map_range(want, |k| sample_example(cfg, &mut item_rng(cfg.seed, start + k as u64)));
        next += want as u64;
        let before = data.len();
        for ex in block {
            if let Some(ex) = ex? {
                data.push(&ex.map, &ex.label)?;
            }
        }
        if data.len() == before {
            return Err(Error::Numerical("no usable training example in a full block".into()));
        }
        on_progress(data.len());
    }
    Ok(data)
}

/// Training examples stored as flat single-precision arrays, mirroring the
/// on-disk dataset layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    map_size: usize,
    channels: usize,
    maps: Vec<f32>,
    views: Vec<[f32; 2]>,
    labels: Vec<[f32; 3]>,
}

impl Dataset {
    pub fn new(map_size: usize, channels: usize) -> Result<Self> {
        if map_size == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::config("dataset needs a positive map size and 1 or 3 channels"));
        }
        Ok(Dataset {
            map_size,
            channels,
            ..Dataset::default()
        })
    }

    pub fn from_raw(
        map_size: usize,
        channels: usize,
        maps: Vec<f32>,
        views: Vec<[f32; 2]>,
        labels: Vec<[f32; 3]>,
    ) -> Result<Self> {
        let mut data = Dataset::new(map_size, channels)?;
        let n = labels.len();
        if views.len() != n || maps.len() != n * data.map_len() {
            return Err(Error::dimension(
                alloc::format!("{n} examples"),
                alloc::format!("{} maps and {} views", maps.len() / data.map_len(), views.len()),
            ));
        }
        data.maps = maps;
        data.views = views;
        data.labels = labels;
        Ok(data)
    }

    pub fn map_size(&self) -> usize {
        self.map_size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Values per map: `D·D·C`.
    pub fn map_len(&self) -> usize {
        self.map_size * self.map_size * self.channels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn maps(&self) -> &[f32] {
        &self.maps
    }

    pub fn views(&self) -> &[[f32; 2]] {
        &self.views
    }

    pub fn labels(&self) -> &[[f32; 3]] {
        &self.labels
    }

    pub fn push(&mut self, map: &ObservationMap, label: &Vec3) -> Result<()> {
        if map.size() != self.map_size || map.channels() != self.channels {
            return Err(Error::dimension(
                alloc::format!("{0}x{0}x{1} map", self.map_size, self.channels),
                alloc::format!("{0}x{0}x{1} map", map.size(), map.channels()),
            ));
        }
        self.maps.extend(map.grid().iter().map(|&v| v as f32));
        let (vx, vy) = map.view();
        self.views.push([vx as f32, vy as f32]);
        self.labels.push([label.x as f32, label.y as f32, label.z as f32]);
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.map_size != self.map_size || other.channels != self.channels {
            return Err(Error::dimension(
                alloc::format!("{0}x{0}x{1} dataset", self.map_size, self.channels),
                alloc::format!("{0}x{0}x{1} dataset", other.map_size, other.channels),
            ));
        }
        self.maps.extend_from_slice(&other.maps);
        self.views.extend_from_slice(&other.views);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    /// Observation map of example `i`.
    pub fn map(&self, i: usize) -> ObservationMap {
        let grid = self.maps[i * self.map_len()..(i + 1) * self.map_len()]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let [vx, vy] = self.views[i];
        ObservationMap::from_parts(self.map_size, self.channels, grid, (vx as f64, vy as f64))
            .expect("stored map has the dataset shape")
    }

    pub fn label<T: NetScalar>(&self, i: usize) -> [T; 3] {
        self.labels[i].map(|v| T::from(v).expect("finite label"))
    }

    /// Writes the network input of example `i` (view planes last) to `out`.
    pub fn write_input<T: NetScalar>(&self, i: usize, out: &mut [T]) {
        let c = self.channels;
        let map = &self.maps[i * self.map_len()..(i + 1) * self.map_len()];
        let [vx, vy] = self.views[i].map(|v| T::from(v).expect("finite view"));
        for (cell, dst) in map.chunks_exact(c).zip(out.chunks_exact_mut(c + 2)) {
            for (d, &s) in dst.iter_mut().zip(cell) {
                *d = T::from(s).expect("finite map value");
            }
            dst[c] = vx;
            dst[c + 1] = vy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lighting::make_ring_rig;
    use crate::obsmap::grid_index;

    fn config(count: usize) -> DatagenConfig {
        let rig = make_ring_rig(15, 0.065, 1.0, 0.0).unwrap();
        let cam = CameraIntrinsics::centered(240.0, 128, 128).unwrap();
        DatagenConfig {
            count,
            seed: 9,
            ..DatagenConfig::new(rig, cam)
        }
    }

    #[test]
    fn unperturbed_maps_match_ground_truth_geometry() {
        let cfg = DatagenConfig {
            depth_sigma: 0.0,
            aug: GIAugmentation::NONE,
            ..config(1)
        };
        for k in 0..200 {
            let ex = sample_example(&cfg, &mut item_rng(1, k)).unwrap().unwrap();
            assert_eq!(ex.delta_z, 0.0);
            let raw = render_pixel(&SurfaceSample { x: ex.point, n: ex.label, material: ex.material }, &cfg.rig).unwrap();
            let v_hat = viewing_direction(&ex.point).unwrap();
            let gt = map_at(&raw, &cfg.rig, &ex.point, v_hat, cfg.map_size).unwrap().unwrap();
            assert!(ex.map.grid() == gt.grid(), "example {k} differs from the ground-truth map");
            assert_eq!(ex.map.view(), gt.view());
        }
    }

    #[test]
    fn lambertian_maps_follow_the_cosine_law() {
        let cfg = DatagenConfig {
            depth_sigma: 0.0,
            aug: GIAugmentation::NONE,
            materials: MaterialRanges::lambertian((0.2, 0.9)),
            ..config(1)
        };
        for k in 0..100 {
            let ex = sample_example(&cfg, &mut item_rng(2, k)).unwrap().unwrap();
            let d = cfg.map_size;
            let mut expected = alloc::vec![(0.0, 0usize); d * d];
            for light in cfg.rig.lights() {
                let (_, l_hat) = light_vector(light, &ex.point).unwrap();
                let (r, c) = grid_index(&l_hat, d);
                expected[r * d + c].0 += ex.label.dot(&l_hat).max(0.0);
                expected[r * d + c].1 += 1;
            }
            let cells: Vec<f64> = expected.iter().map(|&(s, n)| if n > 0 { s / n as f64 } else { 0.0 }).collect();
            let peak = cells.iter().copied().fold(0.0, f64::max);
            for (got, want) in ex.map.grid().iter().zip(&cells) {
                assert!((got - want / peak).abs() < 1e-12, "{got} vs {}", want / peak);
            }
        }
    }

    #[test]
    fn depth_perturbation_has_requested_spread() {
        let cfg = config(1);
        let n = 100_000;
        let dz: Vec<f64> = (0..n)
            .map(|k| sample_example(&cfg, &mut item_rng(3, k)).unwrap().unwrap().delta_z)
            .collect();
        let mean = dz.iter().sum::<f64>() / n as f64;
        let std = libm::sqrt(dz.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64);
        assert!((std - 0.004).abs() < 1e-4, "std {std}");
    }

    #[test]
    fn generated_dataset_is_valid_and_deterministic() {
        let cfg = DatagenConfig {
            channels: 3,
            ..config(300)
        };
        let mut progress = Vec::new();
        let a = generate_examples(&cfg, |n| progress.push(n)).unwrap();
        assert_eq!(progress.last(), Some(&300));
        assert_eq!(a.len(), 300);
        assert_eq!(a, generate_examples(&cfg, |_| {}).unwrap());
        let mut front = 0.0;
        for i in 0..a.len() {
            let l = a.labels()[i];
            let label = Vec3::new(l[0] as f64, l[1] as f64, l[2] as f64);
            assert!((label.norm() - 1.0).abs() < 1e-6);
            let map = a.map(i);
            assert_eq!(map.grid().iter().copied().fold(0.0, f64::max), 1.0);
            let (vx, vy) = map.view();
            let v = Vec3::new(vx, vy, -libm::sqrt(1.0 - vx * vx - vy * vy));
            front += label.dot(&v);
        }
        assert!(front > 0.0);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn thread_count_does_not_change_output() {
        let cfg = config(100);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| generate_examples(&cfg, |_| {})).unwrap();
        let b = four.install(|| generate_examples(&cfg, |_| {})).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            DatagenConfig { count: 0, ..config(1) },
            DatagenConfig { depth_sigma: -1.0, ..config(1) },
            DatagenConfig { depth_range: (0.2, 0.1), ..config(1) },
            DatagenConfig { channels: 2, ..config(1) },
            DatagenConfig { materials: MaterialRanges { models: Vec::new(), ..MaterialRanges::default() }, ..config(1) },
        ];
        for cfg in bad {
            assert!(matches!(generate_examples(&cfg, |_| {}), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn dataset_round_trips_through_raw_parts() {
        let data = generate_examples(&config(5), |_| {}).unwrap();
        let raw = Dataset::from_raw(32, 1, data.maps().to_vec(), data.views().to_vec(), data.labels().to_vec()).unwrap();
        assert_eq!(raw, data);
        assert!(Dataset::from_raw(32, 1, data.maps()[1..].to_vec(), data.views().to_vec(), data.labels().to_vec()).is_err());
        let mut input = alloc::vec![0.0f32; 32 * 32 * 3];
        data.write_input(2, &mut input);
        let expect: Vec<f32> = data.map(2).to_input().iter().map(|&v| v as f32).collect();
        assert_eq!(input, expect);
    }
}
