use alloc::vec;
use alloc::vec::Vec;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use rand::Rng as _;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::obsmap::ObservationMap;
use crate::{Error, Result, Rng, Vec3};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

const CONV_CHANNELS: [usize; 3] = [8, 16, 32];
const CONV_STRIDES: [usize; 3] = [1, 2, 2];
const HIDDEN: usize = 128;

/// Floating-point type the network can run in.
pub trait NetScalar: Float + AddAssign + SubAssign + MulAssign + Send + Sync + core::fmt::Debug + 'static {}

impl<T> NetScalar for T where T: Float + AddAssign + SubAssign + MulAssign + Send + Sync + core::fmt::Debug + 'static {}

/// Shape of a [`TinyNet`]: three 3×3 convolutions (stride 1, 2, 2, padding
/// 1) followed by two dense layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub map_size: usize,
    /// Observation channels, not counting the two view planes.
    pub channels: usize,
}

impl Architecture {
    pub fn new(map_size: usize, channels: usize) -> Result<Self> {
        if map_size < 4 || map_size % 4 != 0 {
            return Err(Error::config("network map size must be a positive multiple of 4"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::config("network channel count must be 1 or 3"));
        }
        Ok(Architecture { map_size, channels })
    }

    pub fn input_len(&self) -> usize {
        self.map_size * self.map_size * (self.channels + 2)
    }

    /// Flat description stored in checkpoints.
    pub fn descriptor(&self) -> Vec<u32> {
        let mut d = vec![self.map_size as u32, (self.channels + 2) as u32];
        d.extend(CONV_CHANNELS.iter().map(|&c| c as u32));
        d.push(HIDDEN as u32);
        d.push(3);
        d
    }

    pub fn from_descriptor(d: &[u32]) -> Result<Self> {
        let arch = match d {
            [size, cin, rest @ ..] if *cin >= 2 => Architecture::new(*size as usize, *cin as usize - 2)?,
            _ => return Err(Error::config("malformed network descriptor")),
        };
        if arch.descriptor() != d {
            return Err(Error::config("network descriptor does not match the supported architecture"));
        }
        Ok(arch)
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    /// Index ranges of the individual weight and bias tensors, in storage
    /// order.
    pub fn param_groups(&self) -> Vec<core::ops::Range<usize>> {
        let l = self.layout();
        let mut groups = Vec::new();
        for c in &l.convs {
            groups.push(c.w..c.b);
            groups.push(c.b..c.b + c.cout);
        }
        for d in [&l.fc1, &l.fc2] {
            groups.push(d.w..d.b);
            groups.push(d.b..d.b + d.nout);
        }
        groups
    }

    fn layout(&self) -> Layout {
        let mut offset = 0;
        let mut side = self.map_size;
        let mut cin = self.channels + 2;
        let mut convs = [Conv::default(); 3];
        for (k, conv) in convs.iter_mut().enumerate() {
            let cout = CONV_CHANNELS[k];
            let stride = CONV_STRIDES[k];
            let out = (side - 1) / stride + 1;
            *conv = Conv {
                cin,
                cout,
                stride,
                in_side: side,
                out_side: out,
                w: offset,
                b: offset + 9 * cin * cout,
            };
            offset += 9 * cin * cout + cout;
            side = out;
            cin = cout;
        }
        let flat = side * side * cin;
        let fc1 = Dense {
            nin: flat,
            nout: HIDDEN,
            w: offset,
            b: offset + flat * HIDDEN,
        };
        offset += flat * HIDDEN + HIDDEN;
        let fc2 = Dense {
            nin: HIDDEN,
            nout: 3,
            w: offset,
            b: offset + 3 * HIDDEN,
        };
        offset += 3 * HIDDEN + 3;
        Layout {
            convs,
            fc1,
            fc2,
            total: offset,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Conv {
    cin: usize,
    cout: usize,
    stride: usize,
    in_side: usize,
    out_side: usize,
    /// Weights laid out `[ky][kx][cin][cout]`.
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    nin: usize,
    nout: usize,
    /// Weights laid out `[nin][nout]`.
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    convs: [Conv; 3],
    fc1: Dense,
    fc2: Dense,
    total: usize,
}

/// Convolutional normal regressor over observation maps.
///
/// All parameters live in one flat vector so optimizers and checkpoints can
/// treat them uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet<T> {
    arch: Architecture,
    params: Vec<T>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Trace<T> {
    /// Post-activation outputs of the three convolutions and the hidden layer.
    acts: [Vec<T>; 4],
    y: [T; 3],
    norm: T,
}

impl<T> Trace<T> {
    pub(crate) fn pre_activation_signs(&self) -> impl Iterator<Item = bool> + '_
    where
        T: NetScalar,
    {
        self.acts.iter().flatten().map(|&a| a > T::zero())
    }
}

fn cast<T: NetScalar>(x: f64) -> T {
    T::from(x).expect("finite constant")
}

fn leaky<T: NetScalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * cast(LEAKY_SLOPE)
    }
}

fn dot<T: NetScalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

fn axpy<T: NetScalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl<T: NetScalar> TinyNet<T> {
    /// He-initialized network; biases start at small random values so even an
    /// all-zero input yields a well-defined direction.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let layout = arch.layout();
        let mut rng = Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); layout.total];
        let fill = |w: usize, n: usize, fan_in: usize, params: &mut [T], rng: &mut Rng| {
            let std = libm::sqrt(2.0 / fan_in as f64);
            for p in &mut params[w..w + n] {
                let z: f64 = StandardNormal.sample(rng);
                *p = cast(std * z);
            }
        };
        for c in &layout.convs {
            fill(c.w, 9 * c.cin * c.cout, 9 * c.cin, &mut params, &mut rng);
            for p in &mut params[c.b..c.b + c.cout] {
                *p = cast(rng.random_range(-0.05..0.05));
            }
        }
        for d in [&layout.fc1, &layout.fc2] {
            fill(d.w, d.nin * d.nout, d.nin, &mut params, &mut rng);
            for p in &mut params[d.b..d.b + d.nout] {
                *p = cast(rng.random_range(-0.05..0.05));
            }
        }
        TinyNet { arch, params }
    }

    pub fn from_params(arch: Architecture, params: Vec<T>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::dimension(arch.param_count(), params.len()));
        }
        Ok(TinyNet { arch, params })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Converts to another precision.
    pub fn cast<U: NetScalar>(&self) -> TinyNet<U> {
        TinyNet {
            arch: self.arch,
            params: self.params.iter().map(|p| U::from(*p).expect("finite parameter")).collect(),
        }
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.arch.input_len() {
            return Err(Error::dimension(self.arch.input_len(), input.len()));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, input: &[T]) -> Result<Trace<T>> {
        self.check_input(input)?;
        let layout = self.arch.layout();
        let p = &self.params;
        let a1 = conv_forward(&layout.convs[0], p, input);
        let a2 = conv_forward(&layout.convs[1], p, &a1);
        let a3 = conv_forward(&layout.convs[2], p, &a2);
        self.finish_forward(a1, a2, a3, None)
    }

    /// Index of the first layer (0..5) that reads parameter `i`.
    pub(crate) fn layer_of(&self, i: usize) -> usize {
        let l = self.arch.layout();
        let starts = [l.convs[1].w, l.convs[2].w, l.fc1.w, l.fc2.w];
        starts.iter().filter(|&&s| i >= s).count()
    }

    /// Forward pass that reuses the activations of `cached` below `layer`.
    /// Only valid when the parameters of earlier layers are unchanged.
    pub(crate) fn forward_from(&self, input: &[T], cached: &Trace<T>, layer: usize) -> Result<Trace<T>> {
        self.check_input(input)?;
        let layout = self.arch.layout();
        let p = &self.params;
        let [c1, c2, c3, c4] = &cached.acts;
        let a1 = if layer == 0 { conv_forward(&layout.convs[0], p, input) } else { c1.clone() };
        let a2 = if layer <= 1 { conv_forward(&layout.convs[1], p, &a1) } else { c2.clone() };
        let a3 = if layer <= 2 { conv_forward(&layout.convs[2], p, &a2) } else { c3.clone() };
        let a4 = if layer <= 3 { None } else { Some(c4.clone()) };
        self.finish_forward(a1, a2, a3, a4)
    }

    fn finish_forward(&self, a1: Vec<T>, a2: Vec<T>, a3: Vec<T>, a4: Option<Vec<T>>) -> Result<Trace<T>> {
        let layout = self.arch.layout();
        let p = &self.params;
        let a4 = a4.unwrap_or_else(|| {
            let mut a4 = dense_forward(&layout.fc1, p, &a3);
            a4.iter_mut().for_each(|v| *v = leaky(*v));
            a4
        });
        let out = dense_forward(&layout.fc2, p, &a4);
        let y = [out[0], out[1], out[2]];
        let norm = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        if !(norm > T::zero() && norm.is_finite()) {
            return Err(Error::Numerical("network output has no direction".into()));
        }
        Ok(Trace {
            acts: [a1, a2, a3, a4],
            y,
            norm,
        })
    }

    /// Unit normal for a flat input of length `D·D·(C+2)`.
    pub fn predict_input(&self, input: &[T]) -> Result<[T; 3]> {
        let t = self.forward(input)?;
        Ok(t.y.map(|v| v / t.norm))
    }

    pub(crate) fn trace_loss(trace: &Trace<T>, label: &[T; 3]) -> T {
        let n = trace.y.map(|v| v / trace.norm);
        (0..3).fold(T::zero(), |s, k| s + (n[k] - label[k]) * (n[k] - label[k]))
    }

    /// Unit normal for an observation map.
    pub fn predict_map(&self, map: &ObservationMap) -> Result<Vec3> {
        if map.size() != self.arch.map_size || map.channels() != self.arch.channels {
            return Err(Error::dimension(
                alloc::format!("{0}x{0}x{1} map", self.arch.map_size, self.arch.channels),
                alloc::format!("{0}x{0}x{1} map", map.size(), map.channels()),
            ));
        }
        let input: Vec<T> = map.to_input().into_iter().map(cast).collect();
        let n = self.predict_input(&input)?;
        let v = Vec3::new(
            n[0].to_f64().unwrap_or(f64::NAN),
            n[1].to_f64().unwrap_or(f64::NAN),
            n[2].to_f64().unwrap_or(f64::NAN),
        );
        Ok(v.normalize())
    }

    /// `‖N̂ - label‖²` for one example.
    pub fn loss(&self, input: &[T], label: &[T; 3]) -> Result<T> {
        let n = self.predict_input(input)?;
        Ok((0..3).fold(T::zero(), |s, k| s + (n[k] - label[k]) * (n[k] - label[k])))
    }

    /// Adds `∂loss/∂θ` for one example to `grad` and returns the loss.
    pub fn accumulate_gradient(&self, input: &[T], label: &[T; 3], grad: &mut [T]) -> Result<T> {
        if grad.len() != self.params.len() {
            return Err(Error::dimension(self.params.len(), grad.len()));
        }
        let trace = self.forward(input)?;
        let n = trace.y.map(|v| v / trace.norm);
        let dn: [T; 3] = core::array::from_fn(|k| cast::<T>(2.0) * (n[k] - label[k]));
        let loss = (0..3).fold(T::zero(), |s, k| s + (n[k] - label[k]) * (n[k] - label[k]));
        let proj = n[0] * dn[0] + n[1] * dn[1] + n[2] * dn[2];
        let dy: [T; 3] = core::array::from_fn(|k| (dn[k] - n[k] * proj) / trace.norm);

        let layout = self.arch.layout();
        let p = &self.params;
        let [a1, a2, a3, a4] = &trace.acts;
        let mut d4 = dense_backward(&layout.fc2, p, a4, &dy, grad, true);
        leaky_backward(a4, &mut d4);
        let mut d3 = dense_backward(&layout.fc1, p, a3, &d4, grad, true);
        leaky_backward(a3, &mut d3);
        let mut d2 = conv_backward(&layout.convs[2], p, a2, &d3, grad, true);
        leaky_backward(a2, &mut d2);
        let mut d1 = conv_backward(&layout.convs[1], p, a1, &d2, grad, true);
        leaky_backward(a1, &mut d1);
        conv_backward(&layout.convs[0], p, input, &d1, grad, false);
        Ok(loss)
    }
}

fn leaky_backward<T: NetScalar>(act: &[T], d: &mut [T]) {
    let slope = cast::<T>(LEAKY_SLOPE);
    for (g, &a) in d.iter_mut().zip(act) {
        if a <= T::zero() {
            *g *= slope;
        }
    }
}

fn conv_forward<T: NetScalar>(c: &Conv, p: &[T], input: &[T]) -> Vec<T> {
    let (cin, cout, side) = (c.cin, c.cout, c.in_side);
    let bias = &p[c.b..c.b + cout];
    let mut out = vec![T::zero(); c.out_side * c.out_side * cout];
    for oy in 0..c.out_side {
        for ox in 0..c.out_side {
            let o = &mut out[(oy * c.out_side + ox) * cout..][..cout];
            o.copy_from_slice(bias);
            for ky in 0..3 {
                let Some(iy) = (oy * c.stride + ky).checked_sub(1).filter(|&y| y < side) else {
                    continue;
                };
                for kx in 0..3 {
                    let Some(ix) = (ox * c.stride + kx).checked_sub(1).filter(|&x| x < side) else {
                        continue;
                    };
                    let px = &input[(iy * side + ix) * cin..][..cin];
                    let wbase = c.w + (ky * 3 + kx) * cin * cout;
                    for (ci, &v) in px.iter().enumerate() {
                        if v != T::zero() {
                            axpy(v, &p[wbase + ci * cout..][..cout], o);
                        }
                    }
                }
            }
            o.iter_mut().for_each(|v| *v = leaky(*v));
        }
    }
    out
}

/// Accumulates parameter gradients and returns the input gradient when
/// `need_input` is set.
fn conv_backward<T: NetScalar>(c: &Conv, p: &[T], input: &[T], dout: &[T], grad: &mut [T], need_input: bool) -> Vec<T> {
    let (cin, cout, side) = (c.cin, c.cout, c.in_side);
    let mut din = if need_input { vec![T::zero(); input.len()] } else { Vec::new() };
    for oy in 0..c.out_side {
        for ox in 0..c.out_side {
            let d = &dout[(oy * c.out_side + ox) * cout..][..cout];
            for (g, &v) in grad[c.b..c.b + cout].iter_mut().zip(d) {
                *g += v;
            }
            for ky in 0..3 {
                let Some(iy) = (oy * c.stride + ky).checked_sub(1).filter(|&y| y < side) else {
                    continue;
                };
                for kx in 0..3 {
                    let Some(ix) = (ox * c.stride + kx).checked_sub(1).filter(|&x| x < side) else {
                        continue;
                    };
                    let pix = (iy * side + ix) * cin;
                    let wbase = c.w + (ky * 3 + kx) * cin * cout;
                    for ci in 0..cin {
                        let v = input[pix + ci];
                        if v != T::zero() {
                            axpy(v, d, &mut grad[wbase + ci * cout..][..cout]);
                        }
                        if need_input {
                            din[pix + ci] += dot(&p[wbase + ci * cout..][..cout], d);
                        }
                    }
                }
            }
        }
    }
    din
}

fn dense_forward<T: NetScalar>(l: &Dense, p: &[T], x: &[T]) -> Vec<T> {
    let mut y = p[l.b..l.b + l.nout].to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi != T::zero() {
            axpy(xi, &p[l.w + i * l.nout..][..l.nout], &mut y);
        }
    }
    y
}

fn dense_backward<T: NetScalar>(l: &Dense, p: &[T], x: &[T], dy: &[T], grad: &mut [T], need_input: bool) -> Vec<T> {
    for (g, &v) in grad[l.b..l.b + l.nout].iter_mut().zip(dy) {
        *g += v;
    }
    let mut dx = if need_input { vec![T::zero(); l.nin] } else { Vec::new() };
    for (i, &xi) in x.iter().enumerate() {
        let row = l.w + i * l.nout;
        if xi != T::zero() {
            axpy(xi, dy, &mut grad[row..row + l.nout]);
        }
        if need_input {
            dx[i] = dot(&p[row..row + l.nout], dy);
        }
    }
    dx
}
