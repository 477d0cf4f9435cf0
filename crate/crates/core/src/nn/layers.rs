use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gemm, MatRef, Mode, NnError, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Act {
    Relu,
    /// ELU with α = 1.
    Elu,
}

pub(crate) type ParamVisitor<'a, T> = dyn FnMut(&'static str, &mut [T], &mut [T]) + 'a;
pub(crate) type StateVisitor<'a, T> = dyn FnMut(&'static str, &mut Vec<T>) + 'a;

fn mismatch(layer: &str, what: impl core::fmt::Display) -> NnError {
    NnError::ShapeMismatch(format!("{layer}: {what}"))
}

/// A layer with its parameters, gradients and the activations cached for backward.
#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Activation(Activation<T>),
    MaxPool(MaxPool),
    Dropout(Dropout<T>),
    TimeFlatten(TimeFlatten),
    GlobalFlatten(GlobalFlatten),
    Gru(Gru<T>),
    Dense(Dense<T>),
}

impl<T: Real> Layer<T> {
    /// Forward pass that caches what [`Layer::backward`] needs.
    pub fn forward(
        &mut self,
        x: Tensor<T>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv2d(l) => l.forward(x, true),
            Layer::BatchNorm(l) => l.forward(x, mode, true),
            Layer::Activation(l) => Ok(l.forward(x, true)),
            Layer::MaxPool(l) => l.forward(&x, true),
            Layer::Dropout(l) => Ok(l.forward(x, mode, rng)),
            Layer::TimeFlatten(l) => l.forward(&x, true),
            Layer::GlobalFlatten(l) => l.forward(&x, true),
            Layer::Gru(l) => l.forward(x, true),
            Layer::Dense(l) => l.forward(x, true),
        }
    }

    /// Inference: dropout off, running BatchNorm statistics, no caching.
    pub fn infer(&self, x: Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv2d(l) => l.compute(&x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Activation(l) => Ok(l.apply(x)),
            Layer::MaxPool(_) => MaxPool::pool(&x).map(|(y, _)| y),
            Layer::Dropout(_) => Ok(x),
            Layer::TimeFlatten(_) => TimeFlatten::apply(&x),
            Layer::GlobalFlatten(_) => GlobalFlatten::apply(&x),
            Layer::Gru(l) => l.run(&x, None),
            Layer::Dense(l) => l.compute(&x),
        }
    }

    /// Accumulates parameter gradients and returns the input gradient
    /// (empty when `need_dx` is false).
    pub fn backward(&mut self, dy: Tensor<T>, need_dx: bool) -> Tensor<T> {
        match self {
            Layer::Conv2d(l) => l.backward(&dy, need_dx),
            Layer::BatchNorm(l) => l.backward(dy),
            Layer::Activation(l) => l.backward(dy),
            Layer::MaxPool(l) => l.backward(&dy),
            Layer::Dropout(l) => l.backward(dy),
            Layer::TimeFlatten(l) => l.backward(&dy),
            Layer::GlobalFlatten(l) => l.backward(&dy),
            Layer::Gru(l) => l.backward(&dy, need_dx),
            Layer::Dense(l) => l.backward(&dy, need_dx),
        }
    }

    /// Trainable tensors with their gradients.
    pub(crate) fn visit_params(&mut self, f: &mut ParamVisitor<'_, T>) {
        match self {
            Layer::Conv2d(l) => {
                f("weight", &mut l.weight, &mut l.grad_weight);
                f("bias", &mut l.bias, &mut l.grad_bias);
            }
            Layer::BatchNorm(l) => {
                f("gamma", &mut l.gamma, &mut l.grad_gamma);
                f("beta", &mut l.beta, &mut l.grad_beta);
            }
            Layer::Gru(l) => {
                f("kernel", &mut l.w, &mut l.grad_w);
                f("recurrent", &mut l.u, &mut l.grad_u);
                f("bias", &mut l.b, &mut l.grad_b);
            }
            Layer::Dense(l) => {
                f("weight", &mut l.weight, &mut l.grad_weight);
                f("bias", &mut l.bias, &mut l.grad_bias);
            }
            _ => {}
        }
    }

    /// Every persistent tensor: parameters plus BatchNorm running statistics.
    pub(crate) fn visit_state(&mut self, f: &mut StateVisitor<'_, T>) {
        match self {
            Layer::Conv2d(l) => {
                f("weight", &mut l.weight);
                f("bias", &mut l.bias);
            }
            Layer::BatchNorm(l) => {
                f("gamma", &mut l.gamma);
                f("beta", &mut l.beta);
                f("running_mean", &mut l.running_mean);
                f("running_var", &mut l.running_var);
            }
            Layer::Gru(l) => {
                f("kernel", &mut l.w);
                f("recurrent", &mut l.u);
                f("bias", &mut l.b);
            }
            Layer::Dense(l) => {
                f("weight", &mut l.weight);
                f("bias", &mut l.bias);
            }
            _ => {}
        }
    }

    pub(crate) fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.input = None,
            Layer::BatchNorm(l) => l.cache = None,
            Layer::Activation(l) => l.output = None,
            Layer::MaxPool(l) => l.cache = None,
            Layer::Dropout(l) => l.mask = None,
            Layer::TimeFlatten(l) => l.input_shape.clear(),
            Layer::GlobalFlatten(l) => l.input_shape.clear(),
            Layer::Gru(l) => l.cache = None,
            Layer::Dense(l) => l.input = None,
        }
    }
}

/// Same-padded, stride-1 2-D convolution over `(N, C, H, W)` via im2col + GEMM.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    /// `filters × (in_channels·k·k)`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    grad_weight: Vec<T>,
    grad_bias: Vec<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_channels: usize, filters: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = uniform(rng, filters * fan_in, (6.0 / fan_in as f64).sqrt());
        Self {
            in_channels,
            filters,
            kernel,
            grad_weight: vec![T::zero(); weight.len()],
            weight,
            bias: vec![T::zero(); filters],
            grad_bias: vec![T::zero(); filters],
            input: None,
        }
    }

    fn dims(&self, x: &Tensor<T>) -> Result<(usize, usize, usize), NnError> {
        match *x.shape() {
            [n, c, h, w] if c == self.in_channels => Ok((n, h, w)),
            _ => Err(mismatch(
                "conv2d",
                format_args!(
                    "expected (N, {}, H, W), got {:?}",
                    self.in_channels,
                    x.shape()
                ),
            )),
        }
    }

    fn compute(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (n, h, w) = self.dims(x)?;
        let hw = h * w;
        let ckk = self.in_channels * self.kernel * self.kernel;
        let mut col = vec![T::zero(); ckk * hw];
        let mut y = Tensor::zeros(vec![n, self.filters, h, w]);
        let in_len = self.in_channels * hw;
        let out_len = self.filters * hw;
        for s in 0..n {
            im2col(
                &x.data()[s * in_len..(s + 1) * in_len],
                self.in_channels,
                h,
                w,
                self.kernel,
                &mut col,
            );
            let ys = &mut y.data_mut()[s * out_len..(s + 1) * out_len];
            gemm(
                self.filters,
                hw,
                ckk,
                T::one(),
                MatRef::rows(&self.weight, ckk),
                MatRef::rows(&col, hw),
                T::zero(),
                ys,
                hw,
            );
            for (plane, &b) in ys.chunks_exact_mut(hw).zip(&self.bias) {
                plane.iter_mut().for_each(|v| *v += b);
            }
        }
        Ok(y)
    }

    fn forward(&mut self, x: Tensor<T>, cache: bool) -> Result<Tensor<T>, NnError> {
        let y = self.compute(&x)?;
        if cache {
            self.input = Some(x);
        }
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Tensor<T> {
        let x = self.input.take().expect("conv2d backward without forward");
        let (n, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        let hw = h * w;
        let ckk = self.in_channels * self.kernel * self.kernel;
        let in_len = self.in_channels * hw;
        let out_len = self.filters * hw;
        let mut col = vec![T::zero(); ckk * hw];
        let mut dcol = if need_dx {
            vec![T::zero(); ckk * hw]
        } else {
            Vec::new()
        };
        let mut dx = if need_dx {
            Tensor::zeros(x.shape().to_vec())
        } else {
            Tensor::zeros(vec![0])
        };
        for s in 0..n {
            let dys = &dy.data()[s * out_len..(s + 1) * out_len];
            im2col(
                &x.data()[s * in_len..(s + 1) * in_len],
                self.in_channels,
                h,
                w,
                self.kernel,
                &mut col,
            );
            // dW += dY · colᵀ
            gemm(
                self.filters,
                ckk,
                hw,
                T::one(),
                MatRef::rows(dys, hw),
                MatRef::trans(&col, hw),
                T::one(),
                &mut self.grad_weight,
                ckk,
            );
            for (g, plane) in self.grad_bias.iter_mut().zip(dys.chunks_exact(hw)) {
                *g += sum(plane);
            }
            if need_dx {
                // dcol = Wᵀ · dY
                gemm(
                    ckk,
                    hw,
                    self.filters,
                    T::one(),
                    MatRef::trans(&self.weight, ckk),
                    MatRef::rows(dys, hw),
                    T::zero(),
                    &mut dcol,
                    hw,
                );
                col2im(
                    &dcol,
                    self.in_channels,
                    h,
                    w,
                    self.kernel,
                    &mut dx.data_mut()[s * in_len..(s + 1) * in_len],
                );
            }
        }
        dx
    }
}

/// Column `oh·W + ow` of row `(c·k + ki)·k + kj` holds `x[c, oh+ki−p, ow+kj−p]` (0 outside).
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let p = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut col[row * hw..(row + 1) * hw];
                let shift = kj as isize - p;
                let lo = (-shift).max(0) as usize;
                let hi = (w as isize - shift).min(w as isize).max(0) as usize;
                for oh in 0..h {
                    let ih = oh as isize + ki as isize - p;
                    let d = &mut dst[oh * w..(oh + 1) * w];
                    if ih < 0 || ih >= h as isize || lo >= hi {
                        d.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * w..(ih as usize + 1) * w];
                    d[..lo].fill(T::zero());
                    d[hi..].fill(T::zero());
                    let s0 = (lo as isize + shift) as usize;
                    d[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `dx`.
fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let p = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &col[row * hw..(row + 1) * hw];
                let shift = kj as isize - p;
                let lo = (-shift).max(0) as usize;
                let hi = (w as isize - shift).min(w as isize).max(0) as usize;
                if lo >= hi {
                    continue;
                }
                for oh in 0..h {
                    let ih = oh as isize + ki as isize - p;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let s0 = (lo as isize + shift) as usize;
                    let d = &mut plane[ih as usize * w + s0..ih as usize * w + s0 + (hi - lo)];
                    for (dv, &sv) in d.iter_mut().zip(&src[oh * w + lo..oh * w + hi]) {
                        *dv += sv;
                    }
                }
            }
        }
    }
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug)]
struct BnCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

/// Per-channel normalization over every axis except axis 1.
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    /// Unbiased running variance.
    pub running_var: Vec<T>,
    grad_gamma: Vec<T>,
    grad_beta: Vec<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            grad_gamma: vec![T::zero(); channels],
            grad_beta: vec![T::zero(); channels],
            cache: None,
        }
    }

    fn dims(&self, x: &Tensor<T>) -> Result<(usize, usize), NnError> {
        let s = x.shape();
        if s.len() < 2 || s[1] != self.channels {
            return Err(mismatch(
                "batchnorm",
                format_args!("expected {} channels on axis 1, got {:?}", self.channels, s),
            ));
        }
        Ok((s[0], s[2..].iter().product()))
    }

    fn infer(&self, mut x: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (n, inner) = self.dims(&x)?;
        let c = self.channels;
        let eps = T::lit(BN_EPSILON);
        for s in 0..n {
            for ch in 0..c {
                let scale = self.gamma[ch] / (self.running_var[ch] + eps).sqrt();
                let shift = self.beta[ch] - self.running_mean[ch] * scale;
                let seg = &mut x.data_mut()[(s * c + ch) * inner..(s * c + ch + 1) * inner];
                seg.iter_mut().for_each(|v| *v = *v * scale + shift);
            }
        }
        Ok(x)
    }

    fn forward(&mut self, mut x: Tensor<T>, mode: Mode, cache: bool) -> Result<Tensor<T>, NnError> {
        if mode == Mode::Eval {
            return self.infer(x);
        }
        let (n, inner) = self.dims(&x)?;
        let c = self.channels;
        let m = (n * inner) as f64;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for s in 0..n {
            for ch in 0..c {
                let seg = &x.data()[(s * c + ch) * inner..(s * c + ch + 1) * inner];
                mean[ch] += seg.iter().map(|v| v.as_f64()).sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        for s in 0..n {
            for ch in 0..c {
                let seg = &x.data()[(s * c + ch) * inner..(s * c + ch + 1) * inner];
                var[ch] += seg
                    .iter()
                    .map(|v| (v.as_f64() - mean[ch]).powi(2))
                    .sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();

        let mut x_hat = if cache {
            vec![T::zero(); x.len()]
        } else {
            Vec::new()
        };
        for s in 0..n {
            for ch in 0..c {
                let range = (s * c + ch) * inner..(s * c + ch + 1) * inner;
                let (mu, is) = (T::lit(mean[ch]), T::lit(inv_std[ch]));
                let (g, b) = (self.gamma[ch], self.beta[ch]);
                if cache {
                    for (xh, v) in x_hat[range.clone()]
                        .iter_mut()
                        .zip(&mut x.data_mut()[range])
                    {
                        *xh = (*v - mu) * is;
                        *v = *xh * g + b;
                    }
                } else {
                    x.data_mut()[range]
                        .iter_mut()
                        .for_each(|v| *v = (*v - mu) * is * g + b);
                }
            }
        }
        if mode == Mode::Train {
            let mom = BN_MOMENTUM;
            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            for ch in 0..c {
                let rm = self.running_mean[ch].as_f64();
                let rv = self.running_var[ch].as_f64();
                self.running_mean[ch] = T::lit((1.0 - mom) * rm + mom * mean[ch]);
                self.running_var[ch] = T::lit((1.0 - mom) * rv + mom * var[ch] * unbias);
            }
        }
        if cache {
            self.cache = Some(BnCache {
                x_hat,
                inv_std,
                batch_stats: true,
            });
        }
        Ok(x)
    }

    fn backward(&mut self, mut dy: Tensor<T>) -> Tensor<T> {
        let cache = self
            .cache
            .take()
            .expect("batchnorm backward without forward");
        debug_assert!(cache.batch_stats);
        let n = dy.shape()[0];
        let c = self.channels;
        let inner = dy.len() / (n * c);
        let m = (n * inner) as f64;
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for s in 0..n {
            for ch in 0..c {
                let range = (s * c + ch) * inner..(s * c + ch + 1) * inner;
                for (d, xh) in dy.data()[range.clone()].iter().zip(&cache.x_hat[range]) {
                    sum_dy[ch] += d.as_f64();
                    sum_dy_xhat[ch] += d.as_f64() * xh.as_f64();
                }
            }
        }
        for ch in 0..c {
            self.grad_gamma[ch] += T::lit(sum_dy_xhat[ch]);
            self.grad_beta[ch] += T::lit(sum_dy[ch]);
        }
        // dx = γ·σ⁻¹/M · (M·dy − Σdy − x̂·Σ(dy·x̂))
        for s in 0..n {
            for ch in 0..c {
                let range = (s * c + ch) * inner..(s * c + ch + 1) * inner;
                let k = T::lit(self.gamma[ch].as_f64() * cache.inv_std[ch] / m);
                let mm = T::lit(m);
                let sd = T::lit(sum_dy[ch]);
                let sdx = T::lit(sum_dy_xhat[ch]);
                for (d, &xh) in dy.data_mut()[range.clone()]
                    .iter_mut()
                    .zip(&cache.x_hat[range])
                {
                    *d = k * (mm * *d - sd - xh * sdx);
                }
            }
        }
        dy
    }
}

#[derive(Clone, Debug)]
pub struct Activation<T> {
    pub act: Act,
    output: Option<Vec<T>>,
}

impl<T: Real> Activation<T> {
    pub fn new(act: Act) -> Self {
        Self { act, output: None }
    }

    fn apply(&self, mut x: Tensor<T>) -> Tensor<T> {
        match self.act {
            Act::Relu => x.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero())),
            Act::Elu => x.data_mut().iter_mut().for_each(|v| {
                if *v <= T::zero() {
                    *v = v.exp_m1();
                }
            }),
        }
        x
    }

    fn forward(&mut self, x: Tensor<T>, cache: bool) -> Tensor<T> {
        let y = self.apply(x);
        if cache {
            self.output = Some(y.data().to_vec());
        }
        y
    }

    fn backward(&mut self, mut dy: Tensor<T>) -> Tensor<T> {
        let y = self
            .output
            .take()
            .expect("activation backward without forward");
        // Both activations are positive exactly where the input is.
        match self.act {
            Act::Relu => dy.data_mut().iter_mut().zip(&y).for_each(|(d, &y)| {
                if y <= T::zero() {
                    *d = T::zero();
                }
            }),
            Act::Elu => dy.data_mut().iter_mut().zip(&y).for_each(|(d, &y)| {
                if y <= T::zero() {
                    *d *= y + T::one();
                }
            }),
        }
        dy
    }
}

/// 2×2 max pooling, stride 2, trailing odd rows/columns dropped.
#[derive(Clone, Debug, Default)]
pub struct MaxPool {
    cache: Option<(Vec<usize>, Vec<u32>)>,
}

impl MaxPool {
    fn pool<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>), NnError> {
        let [n, c, h, w] = *x.shape() else {
            return Err(mismatch(
                "maxpool",
                format_args!("expected 4-D input, got {:?}", x.shape()),
            ));
        };
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(mismatch(
                "maxpool",
                format_args!("{h}×{w} is too small to pool"),
            ));
        }
        let mut y = Tensor::zeros(vec![n, c, oh, ow]);
        let mut arg = vec![0u32; n * c * oh * ow];
        let xd = x.data();
        let yd = y.data_mut();
        for p in 0..n * c {
            let base = p * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + 2 * i * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * i + di) * w + 2 * j + dj;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    let o = (p * oh + i) * ow + j;
                    yd[o] = xd[best];
                    arg[o] = best as u32;
                }
            }
        }
        Ok((y, arg))
    }

    fn forward<T: Real>(&mut self, x: &Tensor<T>, cache: bool) -> Result<Tensor<T>, NnError> {
        let (y, arg) = Self::pool(x)?;
        if cache {
            self.cache = Some((x.shape().to_vec(), arg));
        }
        Ok(y)
    }

    fn backward<T: Real>(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let (shape, arg) = self.cache.take().expect("maxpool backward without forward");
        let mut dx = Tensor::zeros(shape);
        for (&a, &d) in arg.iter().zip(dy.data()) {
            dx.data_mut()[a as usize] += d;
        }
        dx
    }
}

/// Inverted dropout: kept units are scaled by `1/(1−p)` during training.
#[derive(Clone, Debug)]
pub struct Dropout<T> {
    pub p: f64,
    mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(p: f64) -> Self {
        Self { p, mask: None }
    }

    fn forward(&mut self, mut x: Tensor<T>, mode: Mode, rng: &mut ChaCha8Rng) -> Tensor<T> {
        if mode != Mode::Train || self.p == 0.0 {
            self.mask = None;
            return x;
        }
        let scale = T::lit(1.0 / (1.0 - self.p));
        let mask: Vec<T> = (0..x.len())
            .map(|_| {
                if rng.random::<f64>() < self.p {
                    T::zero()
                } else {
                    scale
                }
            })
            .collect();
        x.data_mut()
            .iter_mut()
            .zip(&mask)
            .for_each(|(v, &m)| *v *= m);
        self.mask = Some(mask);
        x
    }

    fn backward(&mut self, mut dy: Tensor<T>) -> Tensor<T> {
        if let Some(mask) = self.mask.take() {
            dy.data_mut()
                .iter_mut()
                .zip(&mask)
                .for_each(|(d, &m)| *d *= m);
        }
        dy
    }
}

/// `(N, C, H, W)` → `(N, H, C·W)`: one feature vector per time step.
#[derive(Clone, Debug, Default)]
pub struct TimeFlatten {
    input_shape: Vec<usize>,
}

impl TimeFlatten {
    fn apply<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let [n, c, h, w] = *x.shape() else {
            return Err(mismatch(
                "timeflatten",
                format_args!("expected 4-D input, got {:?}", x.shape()),
            ));
        };
        let mut y = Tensor::zeros(vec![n, h, c * w]);
        let (xd, yd) = (x.data(), y.data_mut());
        for s in 0..n {
            for ch in 0..c {
                for t in 0..h {
                    let src = &xd[((s * c + ch) * h + t) * w..][..w];
                    yd[(s * h + t) * c * w + ch * w..][..w].copy_from_slice(src);
                }
            }
        }
        Ok(y)
    }

    fn forward<T: Real>(&mut self, x: &Tensor<T>, cache: bool) -> Result<Tensor<T>, NnError> {
        let y = Self::apply(x)?;
        if cache {
            self.input_shape = x.shape().to_vec();
        }
        Ok(y)
    }

    fn backward<T: Real>(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = self.input_shape[..] else {
            panic!("timeflatten backward without forward");
        };
        let mut dx = Tensor::zeros(self.input_shape.clone());
        let (dd, yd) = (dx.data_mut(), dy.data());
        for s in 0..n {
            for ch in 0..c {
                for t in 0..h {
                    dd[((s * c + ch) * h + t) * w..][..w]
                        .copy_from_slice(&yd[(s * h + t) * c * w + ch * w..][..w]);
                }
            }
        }
        dx
    }
}

/// `(N, C, H, W)` → `(N, C)` by averaging each channel over time and frequency.
#[derive(Clone, Debug, Default)]
pub struct GlobalFlatten {
    input_shape: Vec<usize>,
}

impl GlobalFlatten {
    fn apply<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let [n, c, h, w] = *x.shape() else {
            return Err(mismatch(
                "globalflatten",
                format_args!("expected 4-D input, got {:?}", x.shape()),
            ));
        };
        let hw = h * w;
        let data = x
            .data()
            .chunks_exact(hw)
            .map(|plane| sum(plane) / T::lit(hw as f64))
            .collect();
        Tensor::new(vec![n, c], data)
    }

    fn forward<T: Real>(&mut self, x: &Tensor<T>, cache: bool) -> Result<Tensor<T>, NnError> {
        let y = Self::apply(x)?;
        if cache {
            self.input_shape = x.shape().to_vec();
        }
        Ok(y)
    }

    fn backward<T: Real>(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let hw = self.input_shape[2] * self.input_shape[3];
        let inv = T::lit(1.0 / hw as f64);
        let mut dx = Tensor::zeros(self.input_shape.clone());
        for (plane, &d) in dx.data_mut().chunks_exact_mut(hw).zip(dy.data()) {
            plane.fill(d * inv);
        }
        dx
    }
}

#[derive(Clone, Debug)]
struct GruCache<T> {
    x: Tensor<T>,
    /// Time-major `(T+1) × N × U`; step 0 is the zero initial state.
    hs: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    cand: Vec<T>,
    rh: Vec<T>,
}

/// Gated recurrent unit over `(N, T, D)`:
///
/// ```text
/// z = σ(x·W_z + h·U_z + b_z)
/// r = σ(x·W_r + h·U_r + b_r)
/// ĥ = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
/// h' = (1 − z) ⊙ ĥ + z ⊙ h
/// ```
///
/// `W` is `D × 3U` and `U` is `U × 3U`, gate blocks ordered z, r, h.
#[derive(Clone, Debug)]
pub struct Gru<T> {
    pub input_dim: usize,
    pub units: usize,
    pub return_sequences: bool,
    pub w: Vec<T>,
    pub u: Vec<T>,
    pub b: Vec<T>,
    grad_w: Vec<T>,
    grad_u: Vec<T>,
    grad_b: Vec<T>,
    cache: Option<GruCache<T>>,
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Real> Gru<T> {
    pub fn new(
        input_dim: usize,
        units: usize,
        return_sequences: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let limit = 1.0 / (units as f64).sqrt();
        let w = uniform(rng, input_dim * 3 * units, limit);
        let u = uniform(rng, units * 3 * units, limit);
        Self {
            input_dim,
            units,
            return_sequences,
            grad_w: vec![T::zero(); w.len()],
            grad_u: vec![T::zero(); u.len()],
            w,
            u,
            b: vec![T::zero(); 3 * units],
            grad_b: vec![T::zero(); 3 * units],
            cache: None,
        }
    }

    fn run(
        &self,
        x: &Tensor<T>,
        mut cache: Option<&mut GruCache<T>>,
    ) -> Result<Tensor<T>, NnError> {
        let [n, steps, d] = *x.shape() else {
            return Err(mismatch(
                "gru",
                format_args!("expected (N, T, D), got {:?}", x.shape()),
            ));
        };
        if d != self.input_dim || steps == 0 {
            return Err(mismatch(
                "gru",
                format_args!(
                    "expected feature size {}, got {:?}",
                    self.input_dim,
                    x.shape()
                ),
            ));
        }
        let u = self.units;
        let g3 = 3 * u;
        // Input projections for every (sample, step) row at once.
        let mut xw = vec![T::zero(); n * steps * g3];
        gemm(
            n * steps,
            g3,
            d,
            T::one(),
            MatRef::rows(x.data(), d),
            MatRef::rows(&self.w, g3),
            T::zero(),
            &mut xw,
            g3,
        );
        let mut h = vec![T::zero(); n * u];
        let mut hu = vec![T::zero(); n * 2 * u];
        let mut rh = vec![T::zero(); n * u];
        let mut ru = vec![T::zero(); n * u];
        let mut out = if self.return_sequences {
            Tensor::zeros(vec![n, steps, u])
        } else {
            Tensor::zeros(vec![n, u])
        };
        for t in 0..steps {
            gemm(
                n,
                2 * u,
                u,
                T::one(),
                MatRef::rows(&h, u),
                MatRef::strided(&self.u, g3, 1),
                T::zero(),
                &mut hu,
                2 * u,
            );
            let mut z = vec![T::zero(); n * u];
            let mut r = vec![T::zero(); n * u];
            for s in 0..n {
                let row = &xw[(s * steps + t) * g3..][..g3];
                for j in 0..u {
                    let zi = sigmoid(row[j] + hu[s * 2 * u + j] + self.b[j]);
                    let ri = sigmoid(row[u + j] + hu[s * 2 * u + u + j] + self.b[u + j]);
                    z[s * u + j] = zi;
                    r[s * u + j] = ri;
                    rh[s * u + j] = ri * h[s * u + j];
                }
            }
            gemm(
                n,
                u,
                u,
                T::one(),
                MatRef::rows(&rh, u),
                MatRef::strided(&self.u[2 * u..], g3, 1),
                T::zero(),
                &mut ru,
                u,
            );
            let mut cand = vec![T::zero(); n * u];
            let h_prev = h.clone();
            for s in 0..n {
                let row = &xw[(s * steps + t) * g3..][..g3];
                for j in 0..u {
                    let i = s * u + j;
                    let c = (row[2 * u + j] + ru[i] + self.b[2 * u + j]).tanh();
                    cand[i] = c;
                    h[i] = (T::one() - z[i]) * c + z[i] * h_prev[i];
                }
            }
            if self.return_sequences {
                for s in 0..n {
                    out.data_mut()[(s * steps + t) * u..][..u].copy_from_slice(&h[s * u..][..u]);
                }
            }
            if let Some(c) = cache.as_deref_mut() {
                c.hs.extend_from_slice(&h);
                c.z.extend_from_slice(&z);
                c.r.extend_from_slice(&r);
                c.cand.extend_from_slice(&cand);
                c.rh.extend_from_slice(&rh);
            }
        }
        if !self.return_sequences {
            out.data_mut().copy_from_slice(&h);
        }
        Ok(out)
    }

    fn forward(&mut self, x: Tensor<T>, cache: bool) -> Result<Tensor<T>, NnError> {
        if !cache {
            return self.run(&x, None);
        }
        let n = x.shape().first().copied().unwrap_or(0);
        let mut c = GruCache {
            x: Tensor::zeros(vec![0]),
            hs: vec![T::zero(); n * self.units],
            z: Vec::new(),
            r: Vec::new(),
            cand: Vec::new(),
            rh: Vec::new(),
        };
        let y = self.run(&x, Some(&mut c))?;
        c.x = x;
        self.cache = Some(c);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Tensor<T> {
        let c = self.cache.take().expect("gru backward without forward");
        let (n, steps, d) = (c.x.shape()[0], c.x.shape()[1], c.x.shape()[2]);
        let u = self.units;
        let g3 = 3 * u;
        let nu = n * u;
        let mut dxw = vec![T::zero(); n * steps * g3];
        let mut dh_next = vec![T::zero(); nu];
        let mut da_h = vec![T::zero(); nu];
        let mut da_zr = vec![T::zero(); n * 2 * u];
        let mut drh = vec![T::zero(); nu];
        for t in (0..steps).rev() {
            let h_prev = &c.hs[t * nu..(t + 1) * nu];
            let z = &c.z[t * nu..(t + 1) * nu];
            let r = &c.r[t * nu..(t + 1) * nu];
            let cand = &c.cand[t * nu..(t + 1) * nu];
            let rh = &c.rh[t * nu..(t + 1) * nu];
            let mut dh = dh_next.clone();
            if self.return_sequences {
                for s in 0..n {
                    for j in 0..u {
                        dh[s * u + j] += dy.data()[(s * steps + t) * u + j];
                    }
                }
            } else if t == steps - 1 {
                dh.iter_mut().zip(dy.data()).for_each(|(a, &b)| *a += b);
            }
            let mut dh_prev = vec![T::zero(); nu];
            for i in 0..nu {
                dh_prev[i] = dh[i] * z[i];
                da_h[i] = dh[i] * (T::one() - z[i]) * (T::one() - cand[i] * cand[i]);
            }
            // Candidate path: ĥ = tanh(a_h), a_h = x·W_h + (r⊙h)·U_h + b_h.
            gemm(
                u,
                u,
                n,
                T::one(),
                MatRef::trans(rh, u),
                MatRef::rows(&da_h, u),
                T::one(),
                &mut self.grad_u[2 * u..],
                g3,
            );
            gemm(
                n,
                u,
                u,
                T::one(),
                MatRef::rows(&da_h, u),
                MatRef::strided(&self.u[2 * u..], 1, g3),
                T::zero(),
                &mut drh,
                u,
            );
            for s in 0..n {
                for j in 0..u {
                    let i = s * u + j;
                    dh_prev[i] += drh[i] * r[i];
                    let dz = dh[i] * (h_prev[i] - cand[i]);
                    let dr = drh[i] * h_prev[i];
                    da_zr[s * 2 * u + j] = dz * z[i] * (T::one() - z[i]);
                    da_zr[s * 2 * u + u + j] = dr * r[i] * (T::one() - r[i]);
                    let row = &mut dxw[(s * steps + t) * g3..][..g3];
                    row[j] = da_zr[s * 2 * u + j];
                    row[u + j] = da_zr[s * 2 * u + u + j];
                    row[2 * u + j] = da_h[i];
                }
            }
            gemm(
                u,
                2 * u,
                n,
                T::one(),
                MatRef::trans(h_prev, u),
                MatRef::rows(&da_zr, 2 * u),
                T::one(),
                &mut self.grad_u,
                g3,
            );
            gemm(
                n,
                u,
                2 * u,
                T::one(),
                MatRef::rows(&da_zr, 2 * u),
                MatRef::strided(&self.u, 1, g3),
                T::one(),
                &mut dh_prev,
                u,
            );
            dh_next = dh_prev;
        }
        gemm(
            d,
            g3,
            n * steps,
            T::one(),
            MatRef::trans(c.x.data(), d),
            MatRef::rows(&dxw, g3),
            T::one(),
            &mut self.grad_w,
            g3,
        );
        for row in dxw.chunks_exact(g3) {
            self.grad_b.iter_mut().zip(row).for_each(|(g, &v)| *g += v);
        }
        if !need_dx {
            return Tensor::zeros(vec![0]);
        }
        let mut dx = Tensor::zeros(c.x.shape().to_vec());
        gemm(
            n * steps,
            d,
            g3,
            T::one(),
            MatRef::rows(&dxw, g3),
            MatRef::trans(&self.w, g3),
            T::zero(),
            dx.data_mut(),
            d,
        );
        dx
    }
}

/// Affine map on the last axis: `y = x·W + b`, `W` is `in × units`.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub input_dim: usize,
    pub units: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    grad_weight: Vec<T>,
    grad_bias: Vec<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(input_dim: usize, units: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = uniform(rng, input_dim * units, (6.0 / input_dim as f64).sqrt());
        Self {
            input_dim,
            units,
            grad_weight: vec![T::zero(); weight.len()],
            weight,
            bias: vec![T::zero(); units],
            grad_bias: vec![T::zero(); units],
            input: None,
        }
    }

    fn compute(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        if x.shape().last() != Some(&self.input_dim) || x.shape().len() < 2 {
            return Err(mismatch(
                "dense",
                format_args!("expected last axis {}, got {:?}", self.input_dim, x.shape()),
            ));
        }
        let rows = x.len() / self.input_dim;
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = self.units;
        let mut y = Tensor::zeros(shape);
        for row in y.data_mut().chunks_exact_mut(self.units) {
            row.copy_from_slice(&self.bias);
        }
        gemm(
            rows,
            self.units,
            self.input_dim,
            T::one(),
            MatRef::rows(x.data(), self.input_dim),
            MatRef::rows(&self.weight, self.units),
            T::one(),
            y.data_mut(),
            self.units,
        );
        Ok(y)
    }

    fn forward(&mut self, x: Tensor<T>, cache: bool) -> Result<Tensor<T>, NnError> {
        let y = self.compute(&x)?;
        if cache {
            self.input = Some(x);
        }
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Tensor<T> {
        let x = self.input.take().expect("dense backward without forward");
        let rows = x.len() / self.input_dim;
        gemm(
            self.input_dim,
            self.units,
            rows,
            T::one(),
            MatRef::trans(x.data(), self.input_dim),
            MatRef::rows(dy.data(), self.units),
            T::one(),
            &mut self.grad_weight,
            self.units,
        );
        for row in dy.data().chunks_exact(self.units) {
            self.grad_bias
                .iter_mut()
                .zip(row)
                .for_each(|(g, &v)| *g += v);
        }
        if !need_dx {
            return Tensor::zeros(vec![0]);
        }
        let mut dx = Tensor::zeros(x.shape().to_vec());
        gemm(
            rows,
            self.input_dim,
            self.units,
            T::one(),
            MatRef::rows(dy.data(), self.units),
            MatRef::trans(&self.weight, self.units),
            T::zero(),
            dx.data_mut(),
            self.input_dim,
        );
        dx
    }
}

fn uniform<T: Real>(rng: &mut ChaCha8Rng, n: usize, limit: f64) -> Vec<T> {
    (0..n)
        .map(|_| T::lit(rng.random_range(-limit..limit)))
        .collect()
}

fn sum<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_kernel_conv_is_identity() {
        let mut conv = Conv2d::<f64>::new(1, 1, 3, &mut rng());
        conv.weight = vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let x = random(&[2, 1, 5, 4], 1);
        assert_eq!(conv.compute(&x).unwrap(), x);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let conv = Conv2d::<f64>::new(2, 3, 3, &mut rng());
        let x = random(&[1, 2, 4, 5], 2);
        let y = conv.compute(&x).unwrap();
        for f in 0..3 {
            for i in 0..4isize {
                for j in 0..5isize {
                    let mut want = conv.bias[f];
                    for c in 0..2 {
                        for a in 0..3isize {
                            for b in 0..3isize {
                                let (ii, jj) = (i + a - 1, j + b - 1);
                                if (0..4).contains(&ii) && (0..5).contains(&jj) {
                                    want += conv.weight[f * 18 + c * 9 + (a * 3 + b) as usize]
                                        * x.data()[(c * 4 + ii as usize) * 5 + jj as usize];
                                }
                            }
                        }
                    }
                    let got = y.data()[(f * 4 + i as usize) * 5 + j as usize];
                    assert!((got - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)> for random x, c.
        let (ch, h, w, k) = (2, 5, 4, 5);
        let x = random(&[ch * h * w], 3);
        let cvec = random(&[ch * k * k * h * w], 4);
        let mut col = vec![0.0; ch * k * k * h * w];
        im2col(x.data(), ch, h, w, k, &mut col);
        let mut back = vec![0.0; ch * h * w];
        col2im(cvec.data(), ch, h, w, k, &mut back);
        let lhs: f64 = col.iter().zip(cvec.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn zero_dense_outputs_bias() {
        let mut d = Dense::<f64>::new(3, 2, &mut rng());
        d.weight.fill(0.0);
        d.bias = vec![0.5, -2.0];
        let y = d.compute(&random(&[4, 3], 5)).unwrap();
        for row in y.data().chunks(2) {
            assert_eq!(row, &[0.5, -2.0]);
        }
    }

    #[test]
    fn zero_gru_stays_at_zero() {
        let mut g = Gru::<f64>::new(3, 4, true, &mut rng());
        g.w.fill(0.0);
        g.u.fill(0.0);
        let y = g.run(&random(&[2, 6, 3], 6), None).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batchnorm_train_output_is_normalized() {
        let mut bn = BatchNorm::<f64>::new(3);
        let mut x = random(&[4, 3, 5, 6], 7);
        x.data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = *v * 3.0 + (i % 7) as f64);
        let y = bn.forward(x, Mode::Train, true).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|n| y.data()[(n * 3 + c) * 30..(n * 3 + c + 1) * 30].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4);
        }
        assert!(bn.running_mean.iter().any(|&m| m != 0.0));
    }

    #[test]
    fn maxpool_routes_all_gradient_mass() {
        let mut pool = MaxPool::default();
        let x = random(&[2, 3, 7, 5], 8);
        let y = pool.forward(&x, true).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3, 2]);
        let dy = random(y.shape(), 9);
        let dx = pool.backward(&dy);
        let a: f64 = dy.data().iter().sum();
        let b: f64 = dx.data().iter().sum();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn time_flatten_layout() {
        let x = Tensor::<f64>::new(vec![1, 2, 3, 2], (0..12).map(|v| v as f64).collect()).unwrap();
        let y = TimeFlatten::apply(&x).unwrap();
        assert_eq!(y.shape(), &[1, 3, 4]);
        // Step 1 holds channel 0 then channel 1 of row 1.
        assert_eq!(&y.data()[4..8], &[2.0, 3.0, 8.0, 9.0]);
        let mut tf = TimeFlatten::default();
        tf.forward(&x, true).unwrap();
        assert_eq!(tf.backward(&y), x);
    }

    #[test]
    fn dropout_scales_kept_units_and_is_off_at_inference() {
        let mut d = Dropout::<f64>::new(0.5);
        let x = Tensor::new(vec![1, 1000], vec![1.0; 1000]).unwrap();
        let y = d.forward(x.clone(), Mode::Train, &mut rng());
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = y.data().iter().filter(|&&v| v == 2.0).count();
        assert!((400..600).contains(&kept));
        assert_eq!(d.forward(x.clone(), Mode::BatchStats, &mut rng()), x);
    }
}
