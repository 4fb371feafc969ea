//! Near-to-far conversion of pixel intensities and observation maps.
//!
//! Dividing an intensity by the attenuation of its light gives a reflectance
//! sample `j_m = i_m / a_m = B(N, L̂_m, V̂, ρ)` that no longer depends on the
//! distance to the light. The samples of one pixel are binned by the `(x, y)`
//! components of their light direction into a `D × D` grid, normalized by the
//! largest cell, and accompanied by the two components `V̂_x`, `V̂_y` of the
//! viewing direction.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{backproject, viewing_direction, CameraIntrinsics, DepthMap};
use crate::lighting::{attenuation_from, light_vector, LightRig};
use crate::reflectance::Spectrum;
use crate::{par, Error, Grid, Image, Mask, Result, Vec3};

/// Default map resolution.
pub const DEFAULT_MAP_SIZE: usize = 32;

/// Attenuations below this fraction of the strongest light at a point are
/// treated as "light cannot reach the point".
pub const ATTENUATION_FLOOR_REL: f64 = 1e-8;

/// Minimum number of samples for a usable map.
pub const MIN_SAMPLES: usize = 3;

/// `j = i / a`, or `None` when `a` does not exceed `floor`.
pub fn compensate_attenuation(i: Spectrum, a: f64, floor: f64) -> Option<Spectrum> {
    (a > floor && a.is_finite()).then(|| i.scale(1.0 / a))
}

/// Grid cell `(row, col)` of light direction `l_hat` in a `d × d` map.
pub fn grid_index(l_hat: &Vec3, d: usize) -> (usize, usize) {
    let bin = |c: f64| -> usize {
        let k = libm::floor(d as f64 * (c + 1.0) / 2.0);
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(d - 1)
        }
    };
    (bin(l_hat.y), bin(l_hat.x))
}

/// One far-field-equivalent reflectance sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectanceSample {
    pub j: Spectrum,
    pub l_hat: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMap {
    size: usize,
    channels: usize,
    /// `size × size × channels`, row-major with channels innermost.
    grid: Vec<f64>,
    view: (f64, f64),
    scale: f64,
    valid: bool,
}

impl ObservationMap {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.size + col) * self.channels;
        &self.grid[i..i + self.channels]
    }

    /// `(V̂_x, V̂_y)`, the constant values of the two view planes.
    pub fn view(&self) -> (f64, f64) {
        self.view
    }

    /// Divisor applied to every written cell.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_valid(&self) -> bool {
        self.valid
    }

    /// Reassembles a map from stored parts (a dataset record).
    pub fn from_parts(size: usize, channels: usize, grid: Vec<f64>, view: (f64, f64)) -> Result<Self> {
        if grid.len() != size * size * channels {
            return Err(Error::dimension(size * size * channels, grid.len()));
        }
        let max = grid.iter().copied().fold(0.0, f64::max);
        Ok(ObservationMap {
            size,
            channels,
            grid,
            view,
            scale: 1.0,
            valid: max > 0.0,
        })
    }

    /// Network input: `size × size × (channels + 2)` with the view planes last.
    pub fn to_input(&self) -> Vec<f64> {
        let c = self.channels;
        let mut out = Vec::with_capacity(self.size * self.size * (c + 2));
        for cell in self.grid.chunks_exact(c) {
            out.extend_from_slice(cell);
            out.push(self.view.0);
            out.push(self.view.1);
        }
        out
    }
}

/// Bins samples into a normalized observation map.
///
/// Samples sharing a cell are averaged. The map is invalid (all zero) when
/// fewer than three samples are given or every sample is zero.
pub fn build_observation_map(samples: &[ReflectanceSample], v_hat: &Vec3, d: usize) -> ObservationMap {
    let channels = samples.first().map_or(1, |s| s.j.channels());
    let mut map = ObservationMap {
        size: d,
        channels,
        grid: vec![0.0; d * d * channels],
        view: (v_hat.x, v_hat.y),
        scale: 0.0,
        valid: false,
    };
    if samples.len() < MIN_SAMPLES || samples.iter().all(|s| !(s.j.magnitude() > 0.0)) {
        return map;
    }
    // Sorting makes accumulation order (and thus rounding) independent of the
    // input order.
    let mut binned: Vec<(usize, &Spectrum)> = samples
        .iter()
        .map(|s| {
            let (r, c) = grid_index(&s.l_hat, d);
            (r * d + c, &s.j)
        })
        .collect();
    binned.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            a.1.as_slice()
                .iter()
                .zip(b.1.as_slice())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(core::cmp::Ordering::Equal)
        })
    });
    let mut max = 0.0f64;
    let mut start = 0;
    while start < binned.len() {
        let cell = binned[start].0;
        let end = start + binned[start..].iter().take_while(|b| b.0 == cell).count();
        let n = (end - start) as f64;
        let out = &mut map.grid[cell * channels..(cell + 1) * channels];
        for (_, j) in &binned[start..end] {
            for (o, v) in out.iter_mut().zip(j.as_slice()) {
                *o += v;
            }
        }
        for o in out.iter_mut() {
            *o /= n;
            max = max.max(*o);
        }
        start = end;
    }
    for v in &mut map.grid {
        *v /= max;
    }
    map.scale = max;
    map.valid = true;
    map
}

/// Everything known about one pixel after near-to-far conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelObservation {
    /// Valid compensated samples.
    pub samples: Vec<ReflectanceSample>,
    pub v_hat: Vec3,
    pub map_size: usize,
}

impl PixelObservation {
    pub fn map(&self) -> ObservationMap {
        build_observation_map(&self.samples, &self.v_hat, self.map_size)
    }

    fn usable(&self) -> bool {
        self.samples.len() >= MIN_SAMPLES && self.samples.iter().any(|s| s.j.magnitude() > 0.0)
    }
}

/// Compensates one pixel's intensities given per-light `(a_m, L̂_m)`.
pub fn observe_pixel(
    intensities: &[Spectrum],
    lighting: &[(f64, Vec3)],
    v_hat: Vec3,
    d: usize,
) -> Option<PixelObservation> {
    let a_max = lighting.iter().map(|l| l.0).fold(0.0, f64::max);
    let floor = ATTENUATION_FLOOR_REL * a_max;
    let samples = intensities
        .iter()
        .zip(lighting)
        .filter_map(|(&i, &(a, l_hat))| compensate_attenuation(i, a, floor).map(|j| ReflectanceSample { j, l_hat }))
        .collect();
    let obs = PixelObservation {
        samples,
        v_hat,
        map_size: d,
    };
    obs.usable().then_some(obs)
}

/// Per-pixel observations of an image stack.
#[derive(Debug, Clone)]
pub struct ObservationBatch {
    pub pixels: Grid<Option<PixelObservation>>,
    pub mask: Mask,
}

fn check_stack(images: &[Image], n_lights: usize, width: usize, height: usize) -> Result<usize> {
    if images.len() != n_lights {
        return Err(Error::dimension(alloc::format!("{n_lights} images"), images.len()));
    }
    let channels = images.first().map_or(1, |i| i.channels());
    for img in images {
        if img.width() != width || img.height() != height || img.channels() != channels {
            return Err(Error::dimension(
                alloc::format!("{width}x{height}x{channels}"),
                alloc::format!("{}x{}x{}", img.width(), img.height(), img.channels()),
            ));
        }
    }
    if channels != 1 && channels != 3 {
        return Err(Error::dimension("1 or 3 channels", channels));
    }
    Ok(channels)
}

fn pixel_intensities(images: &[Image], col: usize, row: usize) -> Vec<Spectrum> {
    images
        .iter()
        .map(|img| Spectrum::from_slice(img.pixel(col, row)).expect("channel count checked"))
        .collect()
}

fn collect_batch(width: usize, height: usize, pixels: Vec<Option<PixelObservation>>) -> ObservationBatch {
    let mask = Grid::from_vec(width, height, pixels.iter().map(Option::is_some).collect()).expect("sized");
    ObservationBatch {
        pixels: Grid::from_vec(width, height, pixels).expect("sized"),
        mask,
    }
}

/// Near-to-far conversion of every masked pixel using the current depth
/// estimate. Pixels that cannot form a valid map are left out of the mask.
pub fn batch_build(
    images: &[Image],
    depth: &DepthMap,
    rig: &LightRig,
    cam: &CameraIntrinsics,
    d: usize,
) -> Result<ObservationBatch> {
    let (w, h) = (depth.width(), depth.height());
    check_stack(images, rig.len(), w, h)?;
    let pixels = par::map_range(w * h, |i| {
        let (col, row) = (i % w, i / w);
        if !*depth.mask.get(col, row) {
            return None;
        }
        let x = backproject((col as f64, row as f64), *depth.values.get(col, row), cam).ok()?;
        let v_hat = viewing_direction(&x).ok()?;
        let lighting = rig
            .lights()
            .iter()
            .map(|light| {
                light_vector(light, &x)
                    .map(|(l, l_hat)| (attenuation_from(light, &x, &l), l_hat))
                    .unwrap_or((0.0, Vec3::zeros()))
            })
            .collect::<Vec<_>>();
        observe_pixel(&pixel_intensities(images, col, row), &lighting, v_hat, d)
    });
    Ok(collect_batch(w, h, pixels))
}

/// Far-field reading of the stack: unit attenuation and one fixed direction
/// per light for every pixel.
pub fn batch_build_far_field(
    images: &[Image],
    mask: &Mask,
    directions: &[Vec3],
    cam: &CameraIntrinsics,
    d: usize,
) -> Result<ObservationBatch> {
    let (w, h) = (mask.width(), mask.height());
    check_stack(images, directions.len(), w, h)?;
    let lighting: Vec<(f64, Vec3)> = directions.iter().map(|l| (1.0, l.normalize())).collect();
    let pixels = par::map_range(w * h, |i| {
        let (col, row) = (i % w, i / w);
        if !*mask.get(col, row) {
            return None;
        }
        let v_hat = -cam.ray(col as f64, row as f64);
        observe_pixel(&pixel_intensities(images, col, row), &lighting, v_hat, d)
    });
    Ok(collect_batch(w, h, pixels))
}
