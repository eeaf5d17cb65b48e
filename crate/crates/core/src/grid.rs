//! Dense channel-major grids.

use num_traits::{Float, NumCast};

use crate::error::{Error, Result};

/// Rank-3 grid (`channels x height x width`), row-major with channel outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// The toolkit's carrier for images, heatmaps, and target/prediction maps.
pub type TensorGrid = Grid<f32>;

impl<T: Copy + Default> Grid<T> {
    /// Zero-filled grid. Panics if any dimension is zero.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::default())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        assert!(
            channels > 0 && height > 0 && width > 0,
            "grid dimensions must be positive"
        );
        Grid {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::DimensionMismatch(format!(
                "grid dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::DimensionMismatch(format!(
                "buffer of {} values for a {channels}x{height}x{width} grid",
                data.len()
            )));
        }
        Ok(Grid {
            channels,
            height,
            width,
            data,
        })
    }

    /// Copies out channels `range` as a new grid.
    pub fn channel_slice(&self, start: usize, count: usize) -> Self {
        assert!(start + count <= self.channels && count > 0);
        let plane = self.height * self.width;
        Grid {
            channels: count,
            height: self.height,
            width: self.width,
            data: self.data[start * plane..(start + count) * plane].to_vec(),
        }
    }
}

impl<T> Grid<T> {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        (c * self.height + y) * self.width + x
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn check_dims<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }
}

impl<T: Copy> Grid<T> {
    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: T) {
        let i = self.index(c, y, x);
        self.data[i] = value;
    }
}

impl<T: Float> Grid<T> {
    /// Converts element type, e.g. `f32` maps to `f64` for gradient checks.
    pub fn cast<U: Float>(&self) -> Grid<U> {
        Grid {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&v| <U as NumCast>::from(v).expect("float cast"))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }
}
