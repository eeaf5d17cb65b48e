//! Residual building blocks.

use rand::Rng;

use super::layers::{ConvBn, ConvBnCache};
use super::{Module, Scalar, Tensor};

/// Two 3x3 conv-bn layers with an identity shortcut.
#[derive(Debug, Clone)]
pub struct BasicBlock<T> {
    conv1: ConvBn<T>,
    conv2: ConvBn<T>,
}

#[derive(Debug)]
pub struct BasicCache<T> {
    c1: ConvBnCache<T>,
    c2: ConvBnCache<T>,
    out: Option<Tensor<T>>,
}

impl<T: Scalar> BasicBlock<T> {
    pub fn new<R: Rng>(channels: usize, rng: &mut R) -> Self {
        BasicBlock {
            conv1: ConvBn::new(channels, channels, 3, 1, true, rng),
            conv2: ConvBn::new(channels, channels, 3, 1, false, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, BasicCache<T>) {
        let (y, c1) = self.conv1.forward(x, train);
        let (mut y, c2) = self.conv2.forward(&y, train);
        y.add_assign(x);
        y.relu_in_place();
        let out = train.then(|| y.clone());
        (y, BasicCache { c1, c2, out })
    }

    pub fn backward(&mut self, cache: BasicCache<T>, dy: Tensor<T>) -> Tensor<T> {
        let mut dy = dy;
        cache.out.as_ref().expect("training cache").relu_backward(&mut dy);
        let d = self.conv2.backward(cache.c2, dy.clone());
        let mut dx = self.conv1.backward(cache.c1, d);
        dx.add_assign(&dy);
        dx
    }
}

impl<T: Scalar> Module<T> for BasicBlock<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[T])) {
        self.conv1.visit_params(f);
        self.conv2.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.conv1.visit_params_mut(f);
        self.conv2.visit_params_mut(f);
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&[T])) {
        self.conv1.visit_buffers(f);
        self.conv2.visit_buffers(f);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.conv1.visit_buffers_mut(f);
        self.conv2.visit_buffers_mut(f);
    }
}

/// 1x1 reduce, 3x3, 1x1 expand (x4) with a projection shortcut when the
/// input width differs from the expanded width.
#[derive(Debug, Clone)]
pub struct Bottleneck<T> {
    reduce: ConvBn<T>,
    conv: ConvBn<T>,
    expand: ConvBn<T>,
    shortcut: Option<ConvBn<T>>,
}

pub const BOTTLENECK_EXPANSION: usize = 4;

#[derive(Debug)]
pub struct BottleneckCache<T> {
    reduce: ConvBnCache<T>,
    conv: ConvBnCache<T>,
    expand: ConvBnCache<T>,
    shortcut: Option<ConvBnCache<T>>,
    out: Option<Tensor<T>>,
}

impl<T: Scalar> Bottleneck<T> {
    pub fn new<R: Rng>(in_c: usize, width: usize, rng: &mut R) -> Self {
        let out_c = width * BOTTLENECK_EXPANSION;
        Bottleneck {
            reduce: ConvBn::new(in_c, width, 1, 1, true, rng),
            conv: ConvBn::new(width, width, 3, 1, true, rng),
            expand: ConvBn::new(width, out_c, 1, 1, false, rng),
            shortcut: (in_c != out_c).then(|| ConvBn::new(in_c, out_c, 1, 1, false, rng)),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, BottleneckCache<T>) {
        let (y, reduce) = self.reduce.forward(x, train);
        let (y, conv) = self.conv.forward(&y, train);
        let (mut y, expand) = self.expand.forward(&y, train);
        let shortcut = match &self.shortcut {
            Some(s) => {
                let (r, c) = s.forward(x, train);
                y.add_assign(&r);
                Some(c)
            }
            None => {
                y.add_assign(x);
                None
            }
        };
        y.relu_in_place();
        let out = train.then(|| y.clone());
        (
            y,
            BottleneckCache {
                reduce,
                conv,
                expand,
                shortcut,
                out,
            },
        )
    }

    pub fn backward(&mut self, cache: BottleneckCache<T>, dy: Tensor<T>) -> Tensor<T> {
        let mut dy = dy;
        cache.out.as_ref().expect("training cache").relu_backward(&mut dy);
        let d = self.expand.backward(cache.expand, dy.clone());
        let d = self.conv.backward(cache.conv, d);
        let mut dx = self.reduce.backward(cache.reduce, d);
        match (&mut self.shortcut, cache.shortcut) {
            (Some(s), Some(c)) => dx.add_assign(&s.backward(c, dy)),
            _ => dx.add_assign(&dy),
        }
        dx
    }
}

impl<T: Scalar> Module<T> for Bottleneck<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[T])) {
        self.reduce.visit_params(f);
        self.conv.visit_params(f);
        self.expand.visit_params(f);
        if let Some(s) = &self.shortcut {
            s.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.reduce.visit_params_mut(f);
        self.conv.visit_params_mut(f);
        self.expand.visit_params_mut(f);
        if let Some(s) = &mut self.shortcut {
            s.visit_params_mut(f);
        }
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&[T])) {
        self.reduce.visit_buffers(f);
        self.conv.visit_buffers(f);
        self.expand.visit_buffers(f);
        if let Some(s) = &self.shortcut {
            s.visit_buffers(f);
        }
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.reduce.visit_buffers_mut(f);
        self.conv.visit_buffers_mut(f);
        self.expand.visit_buffers_mut(f);
        if let Some(s) = &mut self.shortcut {
            s.visit_buffers_mut(f);
        }
    }
}
