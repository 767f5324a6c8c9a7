//! Dense tensors and the layer primitives used by the policy network, each with a
//! hand-written backward pass.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;

/// Scalar type of the network: `f64` for verification, `f32` for throughput.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub fn c<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("representable constant")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R> {
    pub shape: Vec<usize>,
    pub data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![R::zero(); shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Self { shape: shape.to_vec(), data: vec![c(v); shape.iter().product()] }
    }

    /// Uniform on `[-bound, bound]`, drawn in single precision so values survive an `f32`
    /// round trip unchanged.
    pub fn uniform<G: Rng>(shape: &[usize], bound: f64, rng: &mut G) -> Self {
        let b = bound as f32;
        let data = (0..shape.iter().product::<usize>())
            .map(|_| c(rng.random_range(-b..=b) as f64))
            .collect();
        Self { shape: shape.to_vec(), data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = R::zero());
    }

    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| c(v.to_f64().unwrap())).collect() }
    }
}

/// Uniform access to the named tensors of a parameter container.
pub trait Parameters<R: Real> {
    fn tensors(&self) -> Vec<(String, &Tensor<R>)>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<R>)>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Same structure, all zeros; used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill_zero();
        }
        z
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if name.is_empty() {
        prefix.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<R: Real> Parameters<R> for Tensor<R> {
    fn tensors(&self) -> Vec<(String, &Tensor<R>)> {
        vec![(String::new(), self)]
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<R>)> {
        vec![(String::new(), self)]
    }
}

impl<R: Real, P: Parameters<R>> Parameters<R> for Option<P> {
    fn tensors(&self) -> Vec<(String, &Tensor<R>)> {
        self.as_ref().map(|p| p.tensors()).unwrap_or_default()
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<R>)> {
        self.as_mut().map(|p| p.tensors_mut()).unwrap_or_default()
    }
}

macro_rules! impl_parameters {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl<R: $crate::policy::layers::Real> $crate::policy::layers::Parameters<R> for $ty<R> {
            fn tensors(&self) -> Vec<(String, &$crate::policy::layers::Tensor<R>)> {
                let mut out = Vec::new();
                $(
                    for (n, t) in self.$field.tensors() {
                        out.push(($crate::policy::layers::join(stringify!($field), &n), t));
                    }
                )*
                out
            }
            fn tensors_mut(&mut self) -> Vec<(String, &mut $crate::policy::layers::Tensor<R>)> {
                let mut out = Vec::new();
                $(
                    for (n, t) in self.$field.tensors_mut() {
                        out.push(($crate::policy::layers::join(stringify!($field), &n), t));
                    }
                )*
                out
            }
        }
    };
}
pub(crate) use impl_parameters;

#[inline]
pub fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

#[inline]
pub fn elu<R: Real>(x: R) -> R {
    if x > R::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// ELU derivative expressed through its output.
#[inline]
pub fn elu_grad<R: Real>(y: R) -> R {
    if y > R::zero() {
        R::one()
    } else {
        y + R::one()
    }
}

pub fn elu_vec<R: Real>(x: &[R]) -> Vec<R> {
    x.iter().map(|&v| elu(v)).collect()
}

pub fn elu_backward<R: Real>(y: &[R], dy: &[R]) -> Vec<R> {
    y.iter().zip(dy).map(|(&y, &d)| d * elu_grad(y)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<R> {
    pub weight: Tensor<R>,
    pub bias: Option<Tensor<R>>,
}
impl_parameters!(Linear { weight, bias });

impl<R: Real> Linear<R> {
    pub fn init<G: Rng>(input: usize, output: usize, bias: bool, rng: &mut G) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[output, input], bound, rng),
            bias: bias.then(|| Tensor::uniform(&[output], bound, rng)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &[R]) -> Vec<R> {
        let n_in = self.input_dim();
        debug_assert_eq!(x.len(), n_in);
        self.weight
            .data
            .chunks_exact(n_in)
            .enumerate()
            .map(|(o, row)| {
                let s: R = row.iter().zip(x).map(|(&w, &v)| w * v).sum();
                match &self.bias {
                    Some(b) => s + b.data[o],
                    None => s,
                }
            })
            .collect()
    }

    /// Accumulates parameter gradients into `g` and returns the input gradient.
    pub fn backward(&self, x: &[R], dy: &[R], g: &mut Linear<R>) -> Vec<R> {
        let n_in = self.input_dim();
        let mut dx = vec![R::zero(); n_in];
        for (o, &d) in dy.iter().enumerate() {
            if d == R::zero() {
                continue;
            }
            let row = &self.weight.data[o * n_in..(o + 1) * n_in];
            let grow = &mut g.weight.data[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                dx[i] += row[i] * d;
                grow[i] += x[i] * d;
            }
            if let Some(b) = &mut g.bias {
                b.data[o] += d;
            }
        }
        dx
    }
}

/// 3×3 convolution with zero padding over a `[channels, height, width]` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<R> {
    pub weight: Tensor<R>,
    pub bias: Tensor<R>,
    pub stride: usize,
    pub pad: usize,
}
impl_parameters!(Conv2d { weight, bias });

pub const KERNEL: usize = 3;

impl<R: Real> Conv2d<R> {
    pub fn init<G: Rng>(cin: usize, cout: usize, stride: usize, rng: &mut G) -> Self {
        let bound = 1.0 / ((cin * KERNEL * KERNEL) as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[cout, cin, KERNEL, KERNEL], bound, rng),
            bias: Tensor::uniform(&[cout], bound, rng),
            stride,
            pad: 1,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        ((h + 2 * self.pad - KERNEL) / self.stride + 1, (w + 2 * self.pad - KERNEL) / self.stride + 1)
    }

    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let i = (o * self.stride + k) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < limit).then_some(i as usize)
    }

    pub fn forward(&self, x: &[R], h: usize, w: usize) -> (Vec<R>, usize, usize) {
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let (oh, ow) = self.output_size(h, w);
        let mut out = vec![R::zero(); cout * oh * ow];
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = self.bias.data[co];
                    for ci in 0..cin {
                        for ky in 0..KERNEL {
                            let Some(iy) = self.src(oy, ky, h) else { continue };
                            for kx in 0..KERNEL {
                                let Some(ix) = self.src(ox, kx, w) else { continue };
                                s += self.weight.data[((co * cin + ci) * KERNEL + ky) * KERNEL + kx]
                                    * x[(ci * h + iy) * w + ix];
                            }
                        }
                    }
                    out[(co * oh + oy) * ow + ox] = s;
                }
            }
        }
        (out, oh, ow)
    }

    pub fn backward(&self, x: &[R], h: usize, w: usize, dy: &[R], g: &mut Conv2d<R>) -> Vec<R> {
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let (oh, ow) = self.output_size(h, w);
        let mut dx = vec![R::zero(); cin * h * w];
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let d = dy[(co * oh + oy) * ow + ox];
                    g.bias.data[co] += d;
                    for ci in 0..cin {
                        for ky in 0..KERNEL {
                            let Some(iy) = self.src(oy, ky, h) else { continue };
                            for kx in 0..KERNEL {
                                let Some(ix) = self.src(ox, kx, w) else { continue };
                                let wi = ((co * cin + ci) * KERNEL + ky) * KERNEL + kx;
                                let xi = (ci * h + iy) * w + ix;
                                g.weight.data[wi] += x[xi] * d;
                                dx[xi] += self.weight.data[wi] * d;
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

/// 2×2 average pooling over `[channels, h, w]` with even `h` and `w`.
pub fn avg_pool2<R: Real>(x: &[R], ch: usize, h: usize, w: usize) -> Vec<R> {
    let (oh, ow) = (h / 2, w / 2);
    let q = c::<R>(0.25);
    let mut out = vec![R::zero(); ch * oh * ow];
    for k in 0..ch {
        for y in 0..oh {
            for xx in 0..ow {
                let at = |dy: usize, dx: usize| x[(k * h + 2 * y + dy) * w + 2 * xx + dx];
                out[(k * oh + y) * ow + xx] = (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) * q;
            }
        }
    }
    out
}

pub fn avg_pool2_backward<R: Real>(dy: &[R], ch: usize, h: usize, w: usize) -> Vec<R> {
    let (oh, ow) = (h / 2, w / 2);
    let q = c::<R>(0.25);
    let mut dx = vec![R::zero(); ch * h * w];
    for k in 0..ch {
        for y in 0..h {
            for xx in 0..w {
                dx[(k * h + y) * w + xx] = dy[(k * oh + y / 2) * ow + xx / 2] * q;
            }
        }
    }
    dx
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<R> {
    pub gamma: Tensor<R>,
    pub beta: Tensor<R>,
}
impl_parameters!(LayerNorm { gamma, beta });

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LnCache<R> {
    pub xhat: Vec<R>,
    pub inv_std: R,
}

impl<R: Real> LayerNorm<R> {
    pub fn new(dim: usize) -> Self {
        Self { gamma: Tensor::filled(&[dim], 1.0), beta: Tensor::zeros(&[dim]) }
    }

    pub fn forward(&self, x: &[R]) -> (Vec<R>, LnCache<R>) {
        let n = c::<R>(x.len() as f64);
        let mean = x.iter().copied().sum::<R>() / n;
        let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<R>() / n;
        let inv_std = R::one() / (var + c(LN_EPS)).sqrt();
        let xhat: Vec<R> = x.iter().map(|&v| (v - mean) * inv_std).collect();
        let y = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| h * self.gamma.data[i] + self.beta.data[i])
            .collect();
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LnCache<R>, dy: &[R], g: &mut LayerNorm<R>) -> Vec<R> {
        let n = c::<R>(dy.len() as f64);
        let mut dxhat = Vec::with_capacity(dy.len());
        for (i, &d) in dy.iter().enumerate() {
            g.gamma.data[i] += d * cache.xhat[i];
            g.beta.data[i] += d;
            dxhat.push(d * self.gamma.data[i]);
        }
        let m1 = dxhat.iter().copied().sum::<R>() / n;
        let m2 = dxhat.iter().zip(&cache.xhat).map(|(&a, &b)| a * b).sum::<R>() / n;
        dxhat
            .iter()
            .zip(&cache.xhat)
            .map(|(&d, &h)| cache.inv_std * (d - m1 - h * m2))
            .collect()
    }
}

/// Gated recurrent unit with reset, update and candidate gates (in that order).
#[derive(Debug, Clone, PartialEq)]
pub struct Gru<R> {
    pub w_ih: Tensor<R>,
    pub w_hh: Tensor<R>,
    pub b_ih: Tensor<R>,
    pub b_hh: Tensor<R>,
}
impl_parameters!(Gru { w_ih, w_hh, b_ih, b_hh });

#[derive(Debug, Clone, PartialEq)]
pub struct GruCache<R> {
    pub x: Vec<R>,
    pub h: Vec<R>,
    pub r: Vec<R>,
    pub z: Vec<R>,
    pub n: Vec<R>,
    pub gh_n: Vec<R>,
}

fn matvec<R: Real>(w: &Tensor<R>, x: &[R]) -> Vec<R> {
    let cols = w.shape[1];
    w.data.chunks_exact(cols).map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum()).collect()
}

/// `dx += Wᵀ d`, `dW += d xᵀ`.
fn matvec_backward<R: Real>(w: &Tensor<R>, x: &[R], d: &[R], gw: &mut Tensor<R>, dx: &mut [R]) {
    let cols = w.shape[1];
    for (o, &dv) in d.iter().enumerate() {
        if dv == R::zero() {
            continue;
        }
        for i in 0..cols {
            dx[i] += w.data[o * cols + i] * dv;
            gw.data[o * cols + i] += x[i] * dv;
        }
    }
}

impl<R: Real> Gru<R> {
    pub fn init<G: Rng>(input: usize, hidden: usize, rng: &mut G) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: Tensor::uniform(&[3 * hidden, input], bound, rng),
            w_hh: Tensor::uniform(&[3 * hidden, hidden], bound, rng),
            b_ih: Tensor::uniform(&[3 * hidden], bound, rng),
            b_hh: Tensor::uniform(&[3 * hidden], bound, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape[1]
    }

    pub fn forward(&self, x: &[R], h: &[R]) -> (Vec<R>, GruCache<R>) {
        let hd = self.hidden();
        let gi: Vec<R> = matvec(&self.w_ih, x).iter().zip(&self.b_ih.data).map(|(&a, &b)| a + b).collect();
        let gh: Vec<R> = matvec(&self.w_hh, h).iter().zip(&self.b_hh.data).map(|(&a, &b)| a + b).collect();
        let mut r = vec![R::zero(); hd];
        let mut z = vec![R::zero(); hd];
        let mut n = vec![R::zero(); hd];
        let mut out = vec![R::zero(); hd];
        for k in 0..hd {
            r[k] = sigmoid(gi[k] + gh[k]);
            z[k] = sigmoid(gi[hd + k] + gh[hd + k]);
            n[k] = (gi[2 * hd + k] + r[k] * gh[2 * hd + k]).tanh();
            out[k] = (R::one() - z[k]) * n[k] + z[k] * h[k];
        }
        let gh_n = gh[2 * hd..].to_vec();
        (out, GruCache { x: x.to_vec(), h: h.to_vec(), r, z, n, gh_n })
    }

    /// Returns `(dx, dh_prev)`.
    pub fn backward(&self, cache: &GruCache<R>, dh: &[R], g: &mut Gru<R>) -> (Vec<R>, Vec<R>) {
        let hd = self.hidden();
        let mut d_gi = vec![R::zero(); 3 * hd];
        let mut d_gh = vec![R::zero(); 3 * hd];
        let mut dh_prev = vec![R::zero(); hd];
        for k in 0..hd {
            let (r, z, n) = (cache.r[k], cache.z[k], cache.n[k]);
            let dn = dh[k] * (R::one() - z);
            let dz = dh[k] * (cache.h[k] - n);
            dh_prev[k] = dh[k] * z;
            let dpre_n = dn * (R::one() - n * n);
            let dr = dpre_n * cache.gh_n[k];
            let dpre_r = dr * r * (R::one() - r);
            let dpre_z = dz * z * (R::one() - z);
            d_gi[k] = dpre_r;
            d_gh[k] = dpre_r;
            d_gi[hd + k] = dpre_z;
            d_gh[hd + k] = dpre_z;
            d_gi[2 * hd + k] = dpre_n;
            d_gh[2 * hd + k] = dpre_n * r;
        }
        for k in 0..3 * hd {
            g.b_ih.data[k] += d_gi[k];
            g.b_hh.data[k] += d_gh[k];
        }
        let mut dx = vec![R::zero(); cache.x.len()];
        matvec_backward(&self.w_ih, &cache.x, &d_gi, &mut g.w_ih, &mut dx);
        matvec_backward(&self.w_hh, &cache.h, &d_gh, &mut g.w_hh, &mut dh_prev);
        (dx, dh_prev)
    }
}

/// Long short-term memory cell with input, forget, cell and output gates (in that order).
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<R> {
    pub w_ih: Tensor<R>,
    pub w_hh: Tensor<R>,
    pub b_ih: Tensor<R>,
    pub b_hh: Tensor<R>,
}
impl_parameters!(Lstm { w_ih, w_hh, b_ih, b_hh });

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache<R> {
    pub x: Vec<R>,
    pub h: Vec<R>,
    pub c: Vec<R>,
    pub i: Vec<R>,
    pub f: Vec<R>,
    pub g: Vec<R>,
    pub o: Vec<R>,
    pub tanh_c: Vec<R>,
}

impl<R: Real> Lstm<R> {
    pub fn init<G: Rng>(input: usize, hidden: usize, rng: &mut G) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: Tensor::uniform(&[4 * hidden, input], bound, rng),
            w_hh: Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            b_ih: Tensor::uniform(&[4 * hidden], bound, rng),
            b_hh: Tensor::uniform(&[4 * hidden], bound, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape[1]
    }

    /// Returns `(h, c)` and the cache.
    pub fn forward(&self, x: &[R], h: &[R], cell: &[R]) -> (Vec<R>, Vec<R>, LstmCache<R>) {
        let hd = self.hidden();
        let a = matvec(&self.w_ih, x);
        let b = matvec(&self.w_hh, h);
        let pre: Vec<R> = (0..4 * hd).map(|k| a[k] + b[k] + self.b_ih.data[k] + self.b_hh.data[k]).collect();
        let i: Vec<R> = pre[..hd].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<R> = pre[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<R> = pre[2 * hd..3 * hd].iter().map(|&v| v.tanh()).collect();
        let o: Vec<R> = pre[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
        let c_new: Vec<R> = (0..hd).map(|k| f[k] * cell[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<R> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<R> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
        let cache = LstmCache { x: x.to_vec(), h: h.to_vec(), c: cell.to_vec(), i, f, g, o, tanh_c };
        (h_new, c_new, cache)
    }

    /// Returns `(dx, dh_prev, dc_prev)` given gradients on the new hidden and cell states.
    pub fn backward(&self, cache: &LstmCache<R>, dh: &[R], dc: &[R], gr: &mut Lstm<R>) -> (Vec<R>, Vec<R>, Vec<R>) {
        let hd = self.hidden();
        let one = R::one();
        let mut dpre = vec![R::zero(); 4 * hd];
        let mut dc_prev = vec![R::zero(); hd];
        for k in 0..hd {
            let (i, f, g, o, tc) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
            let d_o = dh[k] * tc;
            let dct = dc[k] + dh[k] * o * (one - tc * tc);
            dc_prev[k] = dct * f;
            dpre[k] = dct * g * i * (one - i);
            dpre[hd + k] = dct * cache.c[k] * f * (one - f);
            dpre[2 * hd + k] = dct * i * (one - g * g);
            dpre[3 * hd + k] = d_o * o * (one - o);
        }
        for k in 0..4 * hd {
            gr.b_ih.data[k] += dpre[k];
            gr.b_hh.data[k] += dpre[k];
        }
        let mut dx = vec![R::zero(); cache.x.len()];
        let mut dh_prev = vec![R::zero(); hd];
        matvec_backward(&self.w_ih, &cache.x, &dpre, &mut gr.w_ih, &mut dx);
        matvec_backward(&self.w_hh, &cache.h, &dpre, &mut gr.w_hh, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }
}
