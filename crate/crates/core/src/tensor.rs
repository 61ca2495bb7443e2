use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{bail, Result};

/// Dense row-major array of `f64` with shape metadata.
///
/// Spatial activations use `(rows, cols, channels)` layout.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            bail!(Dimension, "shape {:?} has a zero extent", shape);
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            bail!(Dimension, "shape {:?} needs {} values, got {}", shape, n, data.len());
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            bail!(Dimension, "cannot reshape {:?} into {:?}", self.shape, shape);
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Value at `(row, col, channel)` of a rank-3 tensor.
    #[inline]
    pub fn at3(&self, r: usize, c: usize, ch: usize) -> f64 {
        let (cols, chans) = (self.shape[1], self.shape[2]);
        self.data[(r * cols + c) * chans + ch]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            bail!(Dimension, "{:?} vs {:?}", self.shape, other.shape);
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Copy of the `h x w` window at `(top, left)` of a rank-3 tensor.
    pub fn window(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor> {
        if self.rank() != 3 {
            bail!(Dimension, "window needs a rank-3 tensor, got {:?}", self.shape);
        }
        let (rows, cols, ch) = (self.shape[0], self.shape[1], self.shape[2]);
        if top + h > rows || left + w > cols || h == 0 || w == 0 {
            bail!(
                Range,
                "window {}x{} at ({}, {}) exceeds {}x{}",
                h,
                w,
                top,
                left,
                rows,
                cols
            );
        }
        let mut data = Vec::with_capacity(h * w * ch);
        for r in top..top + h {
            let start = (r * cols + left) * ch;
            data.extend_from_slice(&self.data[start..start + w * ch]);
        }
        Ok(Tensor { shape: vec![h, w, ch], data })
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        best
    }
}
