//! Perspective normal integration.
//!
//! With `X(u, v) = z/f (ū, v̄, f)`, `ū = u - u0`, `v̄ = v - v0` and log-depth
//! `w = log z`, the tangents are `X_u ∝ w_u (ū, v̄, f) + (1, 0, 0)` and
//! `X_v ∝ w_v (ū, v̄, f) + (0, 1, 0)`, so the front-facing normal is
//!
//! ```text
//! n ∝ (f w_u, f w_v, -(1 + ū w_u + v̄ w_v))
//! ```
//!
//! Writing `n = k (f p, f q, -(1 + ū p + v̄ q))` and
//! `d = ū n₁ + v̄ n₂ + f n₃ = -k f` inverts this to `p = w_u = -n₁ / d` and
//! `q = w_v = -n₂ / d`.
//!
//! The log-depth is recovered on the masked domain by minimizing, over the
//! edges between horizontally or vertically adjacent masked pixels,
//! `Σ ρ(w_j - w_i - g_ij) + λ Σ (w - log z₀)²` where `g_ij` is the mean of the
//! gradient at both ends and `ρ` is either the square (least squares, solved
//! by preconditioned conjugate gradients) or the absolute value (solved by
//! ADMM with soft thresholding).

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{CameraIntrinsics, DepthMap, NormalMap};
use crate::{Error, Grid, Mask, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMode {
    LeastSquares,
    L1Admm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Weight of the pull toward the prior log-depth.
    pub lambda: f64,
    pub mode: IntegrationMode,
    pub admm_penalty: f64,
    /// Conjugate-gradient iteration cap per linear solve.
    pub max_cg_iters: usize,
    pub max_admm_iters: usize,
    /// Relative residual at which a linear solve stops.
    pub cg_tol: f64,
    /// ADMM stops once no log-depth moves by more than this in one iteration
    /// and no edge violates its splitting constraint by more than this.
    pub admm_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            lambda: 1e-6,
            mode: IntegrationMode::L1Admm,
            admm_penalty: 1000.0,
            max_cg_iters: 20_000,
            max_admm_iters: 2_000,
            cg_tol: 1e-9,
            admm_tol: 1e-6,
        }
    }
}

impl IntegratorConfig {
    pub fn least_squares() -> Self {
        IntegratorConfig {
            mode: IntegrationMode::LeastSquares,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda must be non-negative"));
        }
        if !(self.cg_tol > 0.0 && self.admm_tol > 0.0) {
            return Err(Error::config("tolerances must be positive"));
        }
        if !(self.admm_penalty > 0.0 && self.admm_penalty.is_finite()) {
            return Err(Error::config("ADMM penalty must be positive"));
        }
        if self.max_cg_iters == 0 || self.max_admm_iters == 0 {
            return Err(Error::config("iteration caps must be positive"));
        }
        Ok(())
    }
}

/// Log-depth gradients per pixel: `p = ∂w/∂u`, `q = ∂w/∂v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogGradients {
    pub p: Grid<f64>,
    pub q: Grid<f64>,
    pub mask: Mask,
}

/// Grazing-normal cutoff on `|d|`, relative to the focal length.
pub const GRAZING_EPS_REL: f64 = 1e-6;

pub fn normals_to_log_gradients(normals: &NormalMap, cam: &CameraIntrinsics) -> LogGradients {
    let (w, h) = (normals.width(), normals.height());
    let (u0, v0) = cam.principal_point;
    let f = cam.focal_px;
    let mut p = Grid::filled(w, h, 0.0);
    let mut q = Grid::filled(w, h, 0.0);
    let mut mask = Grid::filled(w, h, false);
    for (col, row) in normals.mask.coords() {
        if !*normals.mask.get(col, row) {
            continue;
        }
        let n = normals.vectors.get(col, row);
        let d = (col as f64 - u0) * n.x + (row as f64 - v0) * n.y + f * n.z;
        if !(d.abs() >= GRAZING_EPS_REL * f) {
            continue;
        }
        *p.get_mut(col, row) = -n.x / d;
        *q.get_mut(col, row) = -n.y / d;
        *mask.get_mut(col, row) = true;
    }
    LogGradients { p, q, mask }
}

/// Output of an integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub depth: DepthMap,
    pub converged: bool,
    /// Conjugate-gradient iterations (least squares) or ADMM iterations.
    pub iterations: usize,
    /// Primal residual `‖Dw - g - r‖` after each ADMM iteration.
    pub residual_trace: Vec<f64>,
}

/// Difference operator on the masked domain. Edge `e = (i, j)` has
/// `(Dw)_e = w_j - w_i`.
struct Problem {
    pixels: Vec<usize>,
    edges: Vec<(usize, usize)>,
    targets: Vec<f64>,
    prior: Vec<f64>,
    degree: Vec<f64>,
    /// Connected component of every unknown.
    component: Vec<usize>,
    component_sizes: Vec<f64>,
}

impl Problem {
    fn new(grads: &LogGradients, z0: &DepthMap) -> Result<Self> {
        grads.mask.check_shape(&z0.mask)?;
        let (w, h) = (grads.mask.width(), grads.mask.height());
        let domain = grads.mask.and(&z0.mask)?;
        let mut index = vec![usize::MAX; w * h];
        let mut pixels = Vec::new();
        for (i, &m) in domain.as_slice().iter().enumerate() {
            if m {
                index[i] = pixels.len();
                pixels.push(i);
            }
        }
        if pixels.is_empty() {
            return Err(Error::EmptyMask("no pixel has both a gradient and a prior depth".into()));
        }
        let mut edges = Vec::new();
        let mut targets = Vec::new();
        let (p, q) = (grads.p.as_slice(), grads.q.as_slice());
        for &i in &pixels {
            let (col, row) = (i % w, i / w);
            if col + 1 < w && index[i + 1] != usize::MAX {
                edges.push((index[i], index[i + 1]));
                targets.push(0.5 * (p[i] + p[i + 1]));
            }
            if row + 1 < h && index[i + w] != usize::MAX {
                edges.push((index[i], index[i + w]));
                targets.push(0.5 * (q[i] + q[i + w]));
            }
        }
        let mut degree = vec![0.0; pixels.len()];
        for &(i, j) in &edges {
            degree[i] += 1.0;
            degree[j] += 1.0;
        }
        let prior = pixels.iter().map(|&i| libm::log(z0.values.as_slice()[i])).collect();
        let (component, component_sizes) = components(pixels.len(), &edges);
        Ok(Problem {
            pixels,
            edges,
            targets,
            prior,
            degree,
            component,
            component_sizes,
        })
    }

    /// Sets the mean of `w` on each connected component to that of the prior.
    /// Every system solved here has the form `(scale DᵀD + shift I) w =
    /// Dᵀy + shift w0`; the rows of `DᵀD` sum to zero over a component, so the
    /// exact solution satisfies `Σ w = Σ w0` there. Conjugate gradients only
    /// resolve this mode as fast as `shift` allows.
    fn fix_gauge(&self, shift: f64, w: &mut [f64]) {
        if !(shift > 0.0) {
            return;
        }
        let mut delta = vec![0.0; self.component_sizes.len()];
        for ((&c, &w0), &x) in self.component.iter().zip(&self.prior).zip(w.iter()) {
            delta[c] += w0 - x;
        }
        for (d, n) in delta.iter_mut().zip(&self.component_sizes) {
            *d /= n;
        }
        for (x, &c) in w.iter_mut().zip(&self.component) {
            *x += delta[c];
        }
    }

    fn diff(&self, w: &[f64], out: &mut [f64]) {
        for (o, &(i, j)) in out.iter_mut().zip(&self.edges) {
            *o = w[j] - w[i];
        }
    }

    fn diff_t(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (&v, &(i, j)) in y.iter().zip(&self.edges) {
            out[j] += v;
            out[i] -= v;
        }
    }

    /// Preconditioner for `scale DᵀD + shift I`: an exact banded Cholesky
    /// factor when it fits in [`BAND_FACTOR_MAX_ENTRIES`], Jacobi otherwise.
    fn preconditioner(&self, scale: f64, shift: f64) -> Preconditioner {
        let n = self.pixels.len();
        let band = self.edges.iter().map(|&(i, j)| j - i).max().unwrap_or(0);
        if n.saturating_mul(band + 1) <= BAND_FACTOR_MAX_ENTRIES {
            if let Some(f) = BandCholesky::new(n, band, |i| scale * self.degree[i] + shift, &self.edges, -scale) {
                return Preconditioner::Band { scale, shift, factor: f };
            }
        }
        let inv_diag = self
            .degree
            .iter()
            .map(|d| {
                let v = scale * d + shift;
                if v > 0.0 {
                    1.0 / v
                } else {
                    1.0
                }
            })
            .collect();
        Preconditioner::Jacobi { scale, shift, inv_diag }
    }

    /// Solves `(scale DᵀD + shift I) w = rhs` by preconditioned conjugate
    /// gradients starting from `w`. `rhs` must have the form
    /// `Dᵀy + shift w0` (see [`Problem::fix_gauge`]).
    fn solve(&self, pre: &Preconditioner, rhs: &[f64], w: &mut [f64], tol: f64, max_iters: usize) -> (usize, bool) {
        let (scale, shift) = pre.system();
        let n = w.len();
        let mut tmp = vec![0.0; self.edges.len()];
        let apply = |x: &[f64], out: &mut [f64], tmp: &mut [f64]| {
            self.diff(x, tmp);
            self.diff_t(tmp, out);
            for (o, xi) in out.iter_mut().zip(x) {
                *o = scale * *o + shift * xi;
            }
        };
        let rhs_norm = norm(rhs);
        self.fix_gauge(shift, w);
        let mut r = vec![0.0; n];
        apply(w, &mut r, &mut tmp);
        for (ri, b) in r.iter_mut().zip(rhs) {
            *ri = b - *ri;
        }
        let target = tol * if rhs_norm > 0.0 { rhs_norm } else { 1.0 };
        if norm(&r) <= target {
            return (0, true);
        }
        let mut z = vec![0.0; n];
        pre.apply(&r, &mut z);
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        let mut ad = vec![0.0; n];
        for it in 1..=max_iters {
            apply(&d, &mut ad, &mut tmp);
            let dad = dot(&d, &ad);
            if !(dad > 0.0) {
                self.fix_gauge(shift, w);
                return (it, norm(&r) <= target);
            }
            let alpha = rz / dad;
            for k in 0..n {
                w[k] += alpha * d[k];
                r[k] -= alpha * ad[k];
            }
            if norm(&r) <= target {
                self.fix_gauge(shift, w);
                return (it, true);
            }
            pre.apply(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                d[k] = z[k] + beta * d[k];
            }
        }
        self.fix_gauge(shift, w);
        (max_iters, false)
    }

    fn least_squares(&self, lambda: f64, w: &mut [f64], config: &IntegratorConfig) -> (usize, bool) {
        let mut rhs = vec![0.0; w.len()];
        self.diff_t(&self.targets, &mut rhs);
        for (r, w0) in rhs.iter_mut().zip(&self.prior) {
            *r += lambda * w0;
        }
        let pre = self.preconditioner(1.0, lambda);
        self.solve(&pre, &rhs, w, config.cg_tol, config.max_cg_iters)
    }

    fn l1_admm(&self, lambda: f64, w: &mut [f64], config: &IntegratorConfig) -> (usize, bool, Vec<f64>) {
        let m = self.edges.len();
        let beta = config.admm_penalty;
        let kappa = 1.0 / beta;
        let mut dw = vec![0.0; m];
        let mut r = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut rhs = vec![0.0; w.len()];
        let mut tmp = vec![0.0; m];
        let mut prev = w.to_vec();
        let mut trace = Vec::new();
        let precond = self.preconditioner(beta, 2.0 * lambda);
        for it in 1..=config.max_admm_iters {
            for k in 0..m {
                tmp[k] = self.targets[k] + r[k] - b[k];
            }
            self.diff_t(&tmp, &mut rhs);
            for (x, w0) in rhs.iter_mut().zip(&self.prior) {
                *x = beta * *x + 2.0 * lambda * w0;
            }
            self.solve(&precond, &rhs, w, config.cg_tol, config.max_cg_iters);
            self.diff(w, &mut dw);
            let (mut primal, mut worst) = (0.0, 0.0f64);
            for k in 0..m {
                let x = dw[k] - self.targets[k] + b[k];
                r[k] = soft_threshold(x, kappa);
                let res = dw[k] - self.targets[k] - r[k];
                b[k] += res;
                primal += res * res;
                worst = worst.max(res.abs());
            }
            trace.push(libm::sqrt(primal));
            let change = w.iter().zip(&prev).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            if it > 1 && change <= config.admm_tol && worst <= config.admm_tol {
                return (it, true, trace);
            }
            prev.copy_from_slice(w);
        }
        (config.max_admm_iters, false, trace)
    }

    fn into_depth(self, w: &[f64], width: usize, height: usize) -> DepthMap {
        let mut values = Grid::filled(width, height, 0.0);
        let mut mask = Grid::filled(width, height, false);
        for (&i, &wi) in self.pixels.iter().zip(w) {
            values.as_mut_slice()[i] = libm::exp(wi);
            mask.as_mut_slice()[i] = true;
        }
        DepthMap::new(values, mask).expect("shapes match")
    }
}

/// Largest banded factor (in stored entries) built for preconditioning.
const BAND_FACTOR_MAX_ENTRIES: usize = 1 << 24;

enum Preconditioner {
    Jacobi { scale: f64, shift: f64, inv_diag: Vec<f64> },
    Band { scale: f64, shift: f64, factor: BandCholesky },
}

impl Preconditioner {
    fn system(&self) -> (f64, f64) {
        match *self {
            Preconditioner::Jacobi { scale, shift, .. } | Preconditioner::Band { scale, shift, .. } => (scale, shift),
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Jacobi { inv_diag, .. } => {
                for ((zi, ri), d) in z.iter_mut().zip(r).zip(inv_diag) {
                    *zi = ri * d;
                }
            }
            Preconditioner::Band { factor, .. } => {
                z.copy_from_slice(r);
                factor.solve_in_place(z);
            }
        }
    }
}

/// `L Lᵀ` factor of a symmetric banded matrix. Row `i` of `L` is stored for
/// columns `i - band ..= i`.
struct BandCholesky {
    n: usize,
    band: usize,
    rows: Vec<f64>,
}

impl BandCholesky {
    /// Factors the matrix with diagonal `diag(i)` and value `off` at every
    /// `(i, j)` in `edges` (with `i < j`). Returns `None` if a pivot is not
    /// positive.
    fn new(n: usize, band: usize, diag: impl Fn(usize) -> f64, edges: &[(usize, usize)], off: f64) -> Option<Self> {
        let w = band + 1;
        let mut rows = vec![0.0; n * w];
        for i in 0..n {
            rows[i * w + band] = diag(i);
        }
        for &(i, j) in edges {
            rows[j * w + band - (j - i)] += off;
        }
        for i in 0..n {
            let lo = i.saturating_sub(band);
            for j in lo..=i {
                let jlo = j.saturating_sub(band).max(lo);
                let mut sum = rows[i * w + band - (i - j)];
                for k in jlo..j {
                    sum -= rows[i * w + band - (i - k)] * rows[j * w + band - (j - k)];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return None;
                    }
                    rows[i * w + band] = libm::sqrt(sum);
                } else {
                    rows[i * w + band - (i - j)] = sum / rows[j * w + band];
                }
            }
        }
        Some(BandCholesky { n, band, rows })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let (band, w) = (self.band, self.band + 1);
        for i in 0..self.n {
            let lo = i.saturating_sub(band);
            let row = &self.rows[i * w..(i + 1) * w];
            let mut sum = x[i];
            for k in lo..i {
                sum -= row[band - (i - k)] * x[k];
            }
            x[i] = sum / row[band];
        }
        for i in (0..self.n).rev() {
            let row = &self.rows[i * w..(i + 1) * w];
            x[i] /= row[band];
            let xi = x[i];
            for k in i.saturating_sub(band)..i {
                x[k] -= row[band - (i - k)] * xi;
            }
        }
    }
}

/// Component labels (in order of first appearance) and component sizes.
fn components(n: usize, edges: &[(usize, usize)]) -> (Vec<usize>, Vec<f64>) {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut out = vec![0; n];
    for x in 0..n {
        let root = find(&mut parent, x);
        if label[root] == usize::MAX {
            label[root] = sizes.len();
            sizes.push(0.0);
        }
        out[x] = label[root];
        sizes[label[root]] += 1.0;
    }
    (out, sizes)
}

fn soft_threshold(x: f64, kappa: f64) -> f64 {
    if x > kappa {
        x - kappa
    } else if x < -kappa {
        x + kappa
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Integrates log-depth gradients into depth, anchored to the prior `z0`.
///
/// The domain is the intersection of the gradient mask and the prior's mask.
/// The solver starts from `log z0`. When an iteration cap is hit the last
/// iterate is returned with `converged = false`.
pub fn integrate(grads: &LogGradients, z0: &DepthMap, config: &IntegratorConfig) -> Result<Integration> {
    integrate_from(grads, z0, config, None)
}

/// As [`integrate`], but starting the solver from `init` (log-depth per
/// pixel) instead of the prior.
pub fn integrate_from(
    grads: &LogGradients,
    z0: &DepthMap,
    config: &IntegratorConfig,
    init: Option<&Grid<f64>>,
) -> Result<Integration> {
    config.validate()?;
    let problem = Problem::new(grads, z0)?;
    let mut w: Vec<f64> = match init {
        Some(g) => {
            g.check_shape(&grads.mask)?;
            problem.pixels.iter().map(|&i| g.as_slice()[i]).collect()
        }
        None => problem.prior.clone(),
    };
    let (iterations, converged, residual_trace) = match config.mode {
        IntegrationMode::LeastSquares => {
            let (it, ok) = problem.least_squares(config.lambda, &mut w, config);
            (it, ok, Vec::new())
        }
        IntegrationMode::L1Admm => problem.l1_admm(config.lambda, &mut w, config),
    };
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("integration produced non-finite depth".into()));
    }
    let depth = problem.into_depth(&w, grads.mask.width(), grads.mask.height());
    Ok(Integration {
        depth,
        converged,
        iterations,
        residual_trace,
    })
}

/// Depth errors of both integration modes on a gradient field with a
/// fraction of grossly corrupted pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierComparison {
    pub corrupted_pixels: usize,
    pub least_squares_error_mm: f64,
    pub l1_error_mm: f64,
    pub least_squares_max_rel_deviation: f64,
    pub l1_max_rel_deviation: f64,
}

/// Corrupts `fraction` of the gradient pixels with values uniform in
/// `±magnitude`, integrates with both modes and reports the mean absolute
/// depth error against `truth`, plus each solution's largest relative
/// deviation from the prior.
pub fn outlier_robustness_demo<R: rand::Rng + ?Sized>(
    clean: &LogGradients,
    truth: &DepthMap,
    z0: &DepthMap,
    fraction: f64,
    magnitude: f64,
    config: &IntegratorConfig,
    rng: &mut R,
) -> Result<OutlierComparison> {
    if !(0.0..0.2).contains(&fraction) {
        return Err(Error::config("corruption fraction must lie in [0, 0.2)"));
    }
    let mut grads = clean.clone();
    let mut corrupted = 0;
    for i in 0..grads.mask.len() {
        if grads.mask.as_slice()[i] && rng.random_bool(fraction) {
            grads.p.as_mut_slice()[i] += rng.random_range(-magnitude..=magnitude);
            grads.q.as_mut_slice()[i] += rng.random_range(-magnitude..=magnitude);
            corrupted += 1;
        }
    }
    let run = |mode| -> Result<(f64, f64)> {
        let cfg = IntegratorConfig { mode, ..*config };
        let depth = integrate(&grads, z0, &cfg)?.depth;
        let err = crate::pipeline::mean_depth_error_mm(&depth, truth)?;
        let mut dev = 0.0f64;
        for i in 0..depth.mask.len() {
            if depth.mask.as_slice()[i] {
                let prior = z0.values.as_slice()[i];
                dev = dev.max((depth.values.as_slice()[i] - prior).abs() / prior);
            }
        }
        Ok((err, dev))
    };
    let (ls, ls_dev) = run(IntegrationMode::LeastSquares)?;
    let (l1, l1_dev) = run(IntegrationMode::L1Admm)?;
    Ok(OutlierComparison {
        corrupted_pixels: corrupted,
        least_squares_error_mm: ls,
        l1_error_mm: l1,
        least_squares_max_rel_deviation: ls_dev,
        l1_max_rel_deviation: l1_dev,
    })
}
