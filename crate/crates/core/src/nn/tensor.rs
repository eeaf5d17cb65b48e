use super::Scalar;

/// Batch tensor, `n x c x h x w`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor buffer length");
        Tensor { n, c, h, w, data }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n, self.c, self.h, self.w)
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    /// Elements in one sample.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let s = self.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [T] {
        let s = self.sample_len();
        &mut self.data[i * s..(i + 1) * s]
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape(), other.shape(), "tensor add shape");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn relu_in_place(&mut self) {
        for v in &mut self.data {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }

    /// Zeroes `grad` wherever the (post-ReLU) activation is not positive.
    pub fn relu_backward(&self, grad: &mut Tensor<T>) {
        for (g, &a) in grad.data.iter_mut().zip(&self.data) {
            if a <= T::zero() {
                *g = T::zero();
            }
        }
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Tensor<T> {
        if factor == 1 {
            return self.clone();
        }
        let (oh, ow) = (self.h * factor, self.w * factor);
        let mut out = Tensor::zeros(self.n, self.c, oh, ow);
        for plane in 0..self.n * self.c {
            let src = &self.data[plane * self.h * self.w..(plane + 1) * self.h * self.w];
            let dst = &mut out.data[plane * oh * ow..(plane + 1) * oh * ow];
            for y in 0..oh {
                let srow = &src[(y / factor) * self.w..(y / factor + 1) * self.w];
                let drow = &mut dst[y * ow..(y + 1) * ow];
                for (x, d) in drow.iter_mut().enumerate() {
                    *d = srow[x / factor];
                }
            }
        }
        out
    }

    /// Adjoint of [`Tensor::upsample_nearest`]: sums each `factor x factor` cell.
    pub fn downsample_sum(&self, factor: usize) -> Tensor<T> {
        if factor == 1 {
            return self.clone();
        }
        let (oh, ow) = (self.h / factor, self.w / factor);
        let mut out = Tensor::zeros(self.n, self.c, oh, ow);
        for plane in 0..self.n * self.c {
            let src = &self.data[plane * self.h * self.w..(plane + 1) * self.h * self.w];
            let dst = &mut out.data[plane * oh * ow..(plane + 1) * oh * ow];
            for y in 0..self.h {
                let srow = &src[y * self.w..(y + 1) * self.w];
                let drow = &mut dst[(y / factor) * ow..(y / factor + 1) * ow];
                for (x, &s) in srow.iter().enumerate() {
                    drow[x / factor] = drow[x / factor] + s;
                }
            }
        }
        out
    }
}
