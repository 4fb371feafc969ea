//! Pinhole camera model and depth-map differentiation.
//!
//! The camera sits at the origin looking down `+z`; image column `u` grows
//! along `+x` and image row `v` along `+y`. Integer pixel coordinates are
//! pixel centers. A visible surface normal `N` at point `X` satisfies
//! `N · X < 0`.


use crate::{Error, Grid, Mask, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub focal_px: f64,
    pub principal_point: (f64, f64),
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(focal_px: f64, principal_point: (f64, f64), width: usize, height: usize) -> Result<Self> {
        let cam = CameraIntrinsics {
            focal_px,
            principal_point,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera with the principal point at the image center.
    pub fn centered(focal_px: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal_px,
            ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0),
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (u0, v0) = self.principal_point;
        if !(self.focal_px.is_finite() && self.focal_px > 0.0) {
            return Err(Error::config("focal length must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("image must be non-empty"));
        }
        if !(u0 >= 0.0 && u0 < self.width as f64 && v0 >= 0.0 && v0 < self.height as f64) {
            return Err(Error::config("principal point outside the image"));
        }
        Ok(())
    }

    /// Projects a camera-frame point to pixel coordinates.
    pub fn project(&self, x: &Vec3) -> (f64, f64) {
        let (u0, v0) = self.principal_point;
        (
            self.focal_px * x.x / x.z + u0,
            self.focal_px * x.y / x.z + v0,
        )
    }

    /// Unit ray direction through a pixel (same direction as `backproject`).
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        let (u0, v0) = self.principal_point;
        Vec3::new((u - u0) / self.focal_px, (v - v0) / self.focal_px, 1.0).normalize()
    }
}

/// Per-pixel camera-frame depth `z` in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Grid<f64>,
    pub mask: Mask,
}

impl DepthMap {
    /// Builds a depth map, dropping masked pixels whose depth is not a positive finite number.
    pub fn new(values: Grid<f64>, mask: Mask) -> Result<Self> {
        values.check_shape(&mask)?;
        let mut mask = mask;
        for (m, &z) in mask.as_mut_slice().iter_mut().zip(values.as_slice()) {
            *m = *m && z.is_finite() && z > 0.0;
        }
        Ok(DepthMap { values, mask })
    }

    /// Constant-depth plane restricted to `mask`.
    pub fn plane(mask: &Mask, z: f64) -> Result<Self> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::InvalidDepth(z));
        }
        Ok(DepthMap {
            values: Grid::filled(mask.width(), mask.height(), z),
            mask: mask.clone(),
        })
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    /// Mean depth over the mask, `None` if the mask is empty.
    pub fn mean(&self) -> Option<f64> {
        let (sum, n) = self
            .values
            .as_slice()
            .iter()
            .zip(self.mask.as_slice())
            .filter(|(_, &m)| m)
            .fold((0.0, 0usize), |(s, n), (&z, _)| (s + z, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Backprojected point of a masked pixel.
    pub fn point(&self, col: usize, row: usize, cam: &CameraIntrinsics) -> Option<Vec3> {
        if !*self.mask.get(col, row) {
            return None;
        }
        backproject((col as f64, row as f64), *self.values.get(col, row), cam).ok()
    }
}

/// Per-pixel unit normals in the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub vectors: Grid<Vec3>,
    pub mask: Mask,
}

impl NormalMap {
    pub fn new(vectors: Grid<Vec3>, mask: Mask) -> Result<Self> {
        vectors.check_shape(&mask)?;
        Ok(NormalMap { vectors, mask })
    }

    pub fn width(&self) -> usize {
        self.vectors.width()
    }

    pub fn height(&self) -> usize {
        self.vectors.height()
    }
}

/// Camera-frame point seen at pixel `(u, v)` with depth `z`.
pub fn backproject(pixel: (f64, f64), z: f64, cam: &CameraIntrinsics) -> Result<Vec3> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidDepth(z));
    }
    let (u0, v0) = cam.principal_point;
    let f = cam.focal_px;
    Ok(Vec3::new(z * (pixel.0 - u0) / f, z * (pixel.1 - v0) / f, z))
}

/// Unit vector from the surface point toward the camera, `-X / |X|`.
pub fn viewing_direction(x: &Vec3) -> Result<Vec3> {
    let n = x.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegeneratePoint);
    }
    Ok(-x / n)
}

/// Samples a point inside the viewing frustum: a uniform pixel position in
/// `[0, W) × [0, H)` backprojected at a depth uniform in `depth_range`.
pub fn sample_frustum<R: rand::Rng + ?Sized>(
    cam: &CameraIntrinsics,
    depth_range: (f64, f64),
    rng: &mut R,
) -> Result<Vec3> {
    let (z_min, z_max) = depth_range;
    if !(z_min > 0.0 && z_max > z_min && z_max.is_finite()) {
        return Err(Error::config("depth range must satisfy 0 < z_min < z_max"));
    }
    let u = rng.random_range(0.0..cam.width as f64);
    let v = rng.random_range(0.0..cam.height as f64);
    let z = rng.random_range(z_min..=z_max);
    backproject((u, v), z, cam)
}

/// Tangent along one image axis from central differences, falling back to a
/// one-sided difference where only one neighbour is valid.
fn tangent(prev: Option<Vec3>, here: Vec3, next: Option<Vec3>) -> Option<Vec3> {
    match (prev, next) {
        (Some(p), Some(n)) => Some((n - p) * 0.5),
        (None, Some(n)) => Some(n - here),
        (Some(p), None) => Some(here - p),
        (None, None) => None,
    }
}

/// Differentiates a depth map into a front-facing normal map.
///
/// Pixels without a valid neighbour along either image axis are dropped from
/// the output mask.
pub fn depth_to_normals(depth: &DepthMap, cam: &CameraIntrinsics) -> Result<NormalMap> {
    let (w, h) = (depth.width(), depth.height());
    if w != cam.width || h != cam.height {
        return Err(Error::dimension(
            alloc::format!("{}x{}", cam.width, cam.height),
            alloc::format!("{w}x{h}"),
        ));
    }
    let points = Grid::from_fn(w, h, |c, r| depth.point(c, r, cam));
    let at = |c: isize, r: isize| -> Option<Vec3> {
        if c < 0 || r < 0 || c as usize >= w || r as usize >= h {
            None
        } else {
            *points.get(c as usize, r as usize)
        }
    };
    let mut mask = Grid::filled(w, h, false);
    let mut vectors = Grid::filled(w, h, Vec3::zeros());
    for row in 0..h {
        for col in 0..w {
            let Some(x) = *points.get(col, row) else {
                continue;
            };
            let (c, r) = (col as isize, row as isize);
            let Some(xu) = tangent(at(c - 1, r), x, at(c + 1, r)) else {
                continue;
            };
            let Some(xv) = tangent(at(c, r - 1), x, at(c, r + 1)) else {
                continue;
            };
            let n = xu.cross(&xv);
            let len = n.norm();
            if !(len > 0.0) || !len.is_finite() {
                continue;
            }
            let mut n = n / len;
            if n.dot(&x) > 0.0 {
                n = -n;
            }
            *vectors.get_mut(col, row) = n;
            *mask.get_mut(col, row) = true;
        }
    }
    if mask.count() == 0 {
        return Err(Error::EmptyMask("no pixel has valid neighbours to differentiate".into()));
    }
    Ok(NormalMap { vectors, mask })
}
