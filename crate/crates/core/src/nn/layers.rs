use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Module, Scalar, Tensor};

/// 2-D convolution with square kernel and `k / 2` zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    weight: Vec<T>,
    bias: Option<Vec<T>>,
    grad_w: Vec<T>,
    grad_b: Option<Vec<T>>,
}

#[derive(Debug, Default)]
pub struct ConvCache<T> {
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// Weights drawn from `N(0, 2 / fan_in)`; bias starts at zero.
    pub fn new<R: Rng>(in_c: usize, out_c: usize, k: usize, stride: usize, bias: bool, rng: &mut R) -> Self {
        assert!(k % 2 == 1 && stride >= 1);
        let fan_in = in_c * k * k;
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
        let weight = (0..out_c * fan_in).map(|_| T::lit(normal.sample(rng))).collect();
        Conv2d {
            in_c,
            out_c,
            k,
            stride,
            weight,
            bias: bias.then(|| vec![T::zero(); out_c]),
            grad_w: vec![T::zero(); out_c * fan_in],
            grad_b: bias.then(|| vec![T::zero(); out_c]),
        }
    }

    pub fn bias_mut(&mut self) -> Option<&mut [T]> {
        self.bias.as_deref_mut()
    }

    fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.pad();
        (
            (h + 2 * p - self.k) / self.stride + 1,
            (w + 2 * p - self.k) / self.stride + 1,
        )
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }

    fn im2col(&self, src: &[T], h: usize, w: usize, col: &mut [T]) {
        let (oh, ow) = self.out_hw(h, w);
        let (k, s, p) = (self.k, self.stride, self.pad() as isize);
        for ci in 0..self.in_c {
            let plane = &src[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            drow.fill(T::zero());
                            continue;
                        }
                        let srow = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            *d = if ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                srow[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[T], h: usize, w: usize, dst: &mut [T]) {
        let (oh, ow) = self.out_hw(h, w);
        let (k, s, p) = (self.k, self.stride, self.pad() as isize);
        for ci in 0..self.in_c {
            let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &col[row * oh * ow..(row + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let srow = &src[oy * ow..(oy + 1) * ow];
                        let drow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, &g) in srow.iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < w as isize {
                                drow[ix as usize] = drow[ix as usize] + g;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, ConvCache<T>) {
        assert_eq!(x.c, self.in_c, "conv input channels");
        let (oh, ow) = self.out_hw(x.h, x.w);
        let kk = self.in_c * self.k * self.k;
        let ohw = oh * ow;
        let mut out = Tensor::zeros(x.n, self.out_c, oh, ow);
        let mut col = if self.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); kk * ohw]
        };
        for i in 0..x.n {
            let src: &[T] = if self.is_pointwise() {
                x.sample(i)
            } else {
                self.im2col(x.sample(i), x.h, x.w, &mut col);
                &col
            };
            let dst = out.sample_mut(i);
            let beta = match &self.bias {
                Some(b) => {
                    for (o, &bv) in b.iter().enumerate() {
                        dst[o * ohw..(o + 1) * ohw].fill(bv);
                    }
                    T::one()
                }
                None => T::zero(),
            };
            T::gemm(
                self.out_c, kk, ohw, T::one(), &self.weight, kk as isize, 1, src, ohw as isize, 1,
                beta, dst, ohw as isize, 1,
            );
        }
        let cache = ConvCache {
            input: train.then(|| x.clone()),
        };
        (out, cache)
    }

    pub fn backward(&mut self, cache: ConvCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let x = cache.input.expect("conv backward without a training forward");
        let kk = self.in_c * self.k * self.k;
        let ohw = dy.h * dy.w;
        let mut dx = x.zeros_like();
        let mut col = vec![T::zero(); kk * ohw];
        let mut dcol = vec![T::zero(); kk * ohw];
        for i in 0..x.n {
            let g = dy.sample(i);
            if let Some(gb) = &mut self.grad_b {
                for (o, b) in gb.iter_mut().enumerate() {
                    *b = *b + g[o * ohw..(o + 1) * ohw].iter().copied().sum();
                }
            }
            let src: &[T] = if self.is_pointwise() {
                x.sample(i)
            } else {
                self.im2col(x.sample(i), x.h, x.w, &mut col);
                &col
            };
            // dW += dy . col^T
            T::gemm(
                self.out_c, ohw, kk, T::one(), g, ohw as isize, 1, src, 1, ohw as isize, T::one(),
                &mut self.grad_w, kk as isize, 1,
            );
            // dcol = W^T . dy
            if self.is_pointwise() {
                T::gemm(
                    kk, self.out_c, ohw, T::one(), &self.weight, 1, kk as isize, g, ohw as isize, 1,
                    T::zero(), dx.sample_mut(i), ohw as isize, 1,
                );
            } else {
                T::gemm(
                    kk, self.out_c, ohw, T::one(), &self.weight, 1, kk as isize, g, ohw as isize, 1,
                    T::zero(), &mut dcol, ohw as isize, 1,
                );
                self.col2im(&dcol, x.h, x.w, dx.sample_mut(i));
            }
        }
        dx
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[T])) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        f(&mut self.weight, &mut self.grad_w);
        if let (Some(b), Some(g)) = (&mut self.bias, &mut self.grad_b) {
            f(b, g);
        }
    }

    fn visit_buffers(&self, _f: &mut dyn FnMut(&[T])) {}

    fn visit_buffers_mut(&mut self, _f: &mut dyn FnMut(&mut [T])) {}
}

/// Per-channel normalization with batch statistics in training and running
/// statistics at inference.
///
/// Running statistics are folded in during `backward`, so a training-mode
/// `forward` is a pure function of parameters and input.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub c: usize,
    gamma: Vec<T>,
    beta: Vec<T>,
    running_mean: Vec<T>,
    running_var: Vec<T>,
    grad_gamma: Vec<T>,
    grad_beta: Vec<T>,
}

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Default)]
pub struct BnCache<T> {
    x_hat: Option<Tensor<T>>,
    inv_std: Vec<T>,
    mean: Vec<T>,
    var: Vec<T>,
    count: usize,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(c: usize) -> Self {
        BatchNorm2d {
            c,
            gamma: vec![T::one(); c],
            beta: vec![T::zero(); c],
            running_mean: vec![T::zero(); c],
            running_var: vec![T::one(); c],
            grad_gamma: vec![T::zero(); c],
            grad_beta: vec![T::zero(); c],
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, BnCache<T>) {
        assert_eq!(x.c, self.c, "batchnorm channels");
        let hw = x.h * x.w;
        let count = x.n * hw;
        let eps = T::lit(BN_EPS);
        let mut out = x.zeros_like();
        if !train {
            for ch in 0..self.c {
                let inv = (self.running_var[ch] + eps).sqrt().recip();
                let scale = self.gamma[ch] * inv;
                let shift = self.beta[ch] - self.running_mean[ch] * scale;
                for i in 0..x.n {
                    let off = (i * self.c + ch) * hw;
                    for (o, &v) in out.data[off..off + hw].iter_mut().zip(&x.data[off..off + hw]) {
                        *o = v * scale + shift;
                    }
                }
            }
            return (out, BnCache::default());
        }
        let mut x_hat = x.zeros_like();
        let mut inv_std = vec![T::zero(); self.c];
        let mut means = vec![T::zero(); self.c];
        let mut vars = vec![T::zero(); self.c];
        let cnt = T::lit(count as f64);
        for ch in 0..self.c {
            let mut sum = T::zero();
            for i in 0..x.n {
                let off = (i * self.c + ch) * hw;
                sum = sum + x.data[off..off + hw].iter().copied().sum();
            }
            let mean = sum / cnt;
            let mut sq = T::zero();
            for i in 0..x.n {
                let off = (i * self.c + ch) * hw;
                sq = sq + x.data[off..off + hw].iter().map(|&v| (v - mean) * (v - mean)).sum();
            }
            let var = sq / cnt;
            let inv = (var + eps).sqrt().recip();
            for i in 0..x.n {
                let off = (i * self.c + ch) * hw;
                for j in off..off + hw {
                    let xh = (x.data[j] - mean) * inv;
                    x_hat.data[j] = xh;
                    out.data[j] = self.gamma[ch] * xh + self.beta[ch];
                }
            }
            inv_std[ch] = inv;
            means[ch] = mean;
            vars[ch] = var;
        }
        let cache = BnCache {
            x_hat: Some(x_hat),
            inv_std,
            mean: means,
            var: vars,
            count,
        };
        (out, cache)
    }

    pub fn backward(&mut self, cache: BnCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let x_hat = cache.x_hat.expect("batchnorm backward without a training forward");
        let hw = dy.h * dy.w;
        let m = T::lit(cache.count as f64);
        let mut dx = dy.zeros_like();
        for ch in 0..self.c {
            let mut dgamma = T::zero();
            let mut dbeta = T::zero();
            for i in 0..dy.n {
                let off = (i * self.c + ch) * hw;
                for j in off..off + hw {
                    dgamma = dgamma + dy.data[j] * x_hat.data[j];
                    dbeta = dbeta + dy.data[j];
                }
            }
            self.grad_gamma[ch] = self.grad_gamma[ch] + dgamma;
            self.grad_beta[ch] = self.grad_beta[ch] + dbeta;
            let k = self.gamma[ch] * cache.inv_std[ch] / m;
            for i in 0..dy.n {
                let off = (i * self.c + ch) * hw;
                for j in off..off + hw {
                    dx.data[j] = k * (m * dy.data[j] - dbeta - x_hat.data[j] * dgamma);
                }
            }
            let mom = T::lit(BN_MOMENTUM);
            let unbiased = if cache.count > 1 {
                cache.var[ch] * m / (m - T::one())
            } else {
                cache.var[ch]
            };
            self.running_mean[ch] = (T::one() - mom) * self.running_mean[ch] + mom * cache.mean[ch];
            self.running_var[ch] = (T::one() - mom) * self.running_var[ch] + mom * unbiased;
        }
        dx
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[T])) {
        f(&self.gamma);
        f(&self.beta);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        f(&mut self.gamma, &mut self.grad_gamma);
        f(&mut self.beta, &mut self.grad_beta);
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&[T])) {
        f(&self.running_mean);
        f(&self.running_var);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

/// Convolution (no bias) followed by batch normalization and an optional ReLU.
#[derive(Debug, Clone)]
pub struct ConvBn<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    pub relu: bool,
}

#[derive(Debug)]
pub struct ConvBnCache<T> {
    conv: ConvCache<T>,
    bn: BnCache<T>,
    out: Option<Tensor<T>>,
}

impl<T: Scalar> ConvBn<T> {
    pub fn new<R: Rng>(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        relu: bool,
        rng: &mut R,
    ) -> Self {
        ConvBn {
            conv: Conv2d::new(in_c, out_c, k, stride, false, rng),
            bn: BatchNorm2d::new(out_c),
            relu,
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, ConvBnCache<T>) {
        let (y, conv) = self.conv.forward(x, train);
        let (mut y, bn) = self.bn.forward(&y, train);
        if self.relu {
            y.relu_in_place();
        }
        let out = (train && self.relu).then(|| y.clone());
        (y, ConvBnCache { conv, bn, out })
    }

    pub fn backward(&mut self, cache: ConvBnCache<T>, dy: Tensor<T>) -> Tensor<T> {
        let mut dy = dy;
        if let Some(out) = &cache.out {
            out.relu_backward(&mut dy);
        }
        let d = self.bn.backward(cache.bn, &dy);
        self.conv.backward(cache.conv, &d)
    }
}

impl<T: Scalar> Module<T> for ConvBn<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[T])) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.conv.visit_params_mut(f);
        self.bn.visit_params_mut(f);
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&[T])) {
        self.bn.visit_buffers(f);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.bn.visit_buffers_mut(f);
    }
}
