//! Dense rank-3 feature maps and the transfer-layer kernels.
//!
//! A [`Tensor`] is a `(channels, height, width)` block of `f32` stored flat
//! in channel-major, then row-major order. Every constructor enforces the two
//! module invariants: the data length matches the shape exactly, and all
//! values are finite.

use std::fmt;

/// Shape of a rank-3 tensor.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, height, width }
    }

    pub fn elements(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Raw payload size when serialized as 32-bit reals.
    pub fn payload_bytes(&self) -> u64 {
        self.elements() as u64 * 4
    }

    pub fn spatial_dims_even(&self) -> bool {
        self.height % 2 == 0 && self.width % 2 == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Errors from tensor construction and layer math.
#[derive(Clone, PartialEq, Debug)]
pub enum TensorError {
    /// The transfer-layer pooling kernel needs even spatial dims.
    OddSpatialDims { height: usize, width: usize },
    /// Data length does not match the declared shape.
    DataLength { expected: usize, got: usize },
    /// An operation produced or received a NaN/infinite value.
    NonFinite { index: usize, value: f32 },
    /// A layer was applied to an input it cannot accept.
    ShapeMismatch { expected: String, actual: Shape },
    /// Conv2D/Dense executed without its weights.
    MissingWeights { layer: String },
    /// Weight blob length does not match the layer geometry.
    WeightLength { layer: String, expected: usize, got: usize },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::OddSpatialDims { height, width } => {
                write!(f, "spatial dims {height}x{width} must both be even for 2x2/2 pooling")
            }
            TensorError::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape ({expected} elements)")
            }
            TensorError::NonFinite { index, value } => {
                write!(f, "non-finite value {value} at flat index {index}")
            }
            TensorError::ShapeMismatch { expected, actual } => {
                write!(f, "shape mismatch: expected {expected}, got {actual}")
            }
            TensorError::MissingWeights { layer } => {
                write!(f, "layer {layer} has no weights attached")
            }
            TensorError::WeightLength { layer, expected, got } => {
                write!(f, "layer {layer} weight blob has {got} elements, expected {expected}")
            }
        }
    }
}

impl std::error::Error for TensorError {}

/// Dense rank-3 feature map; the unit of all inter-layer data.
#[derive(Clone, PartialEq, Debug)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    /// Build a tensor, validating length and finiteness.
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self, TensorError> {
        if data.len() != shape.elements() {
            return Err(TensorError::DataLength { expected: shape.elements(), got: data.len() });
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(TensorError::NonFinite { index: i, value: v });
            }
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![0.0; shape.elements()] }
    }

    /// Fill from a function of (channel, y, x).
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self, TensorError> {
        let mut data = Vec::with_capacity(shape.elements());
        for c in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    data.push(f(c, y, x));
                }
            }
        }
        Tensor::new(shape, data)
    }

    /// Deterministic random tensor in [-1, 1), for tests and synthetic inputs.
    pub fn random(shape: Shape, rng: &mut crate::rng::Rng) -> Self {
        let data = (0..shape.elements()).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    /// Same values viewed under a different shape with equal element count.
    pub fn reshaped(&self, shape: Shape) -> Result<Tensor, TensorError> {
        if shape.elements() != self.shape.elements() {
            return Err(TensorError::DataLength { expected: shape.elements(), got: self.shape.elements() });
        }
        Ok(Tensor { shape, data: self.data.clone() })
    }
}

/// 2x2 max pooling with stride 2 and no padding: the device-side half of the
/// transfer layer. Output element count is exactly a quarter of the input.
pub fn max_pool_2x2(input: &Tensor) -> Result<Tensor, TensorError> {
    let s = input.shape();
    if s.height % 2 != 0 || s.width % 2 != 0 || s.height < 2 || s.width < 2 {
        return Err(TensorError::OddSpatialDims { height: s.height, width: s.width });
    }
    let out_shape = Shape::new(s.channels, s.height / 2, s.width / 2);
    let mut out = vec![0.0f32; out_shape.elements()];
    let (h, w) = (s.height, s.width);
    let (oh, ow) = (out_shape.height, out_shape.width);
    for c in 0..s.channels {
        let base = c * h * w;
        let obase = c * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let y = oy * 2;
                let x = ox * 2;
                let a = input.data[base + y * w + x];
                let b = input.data[base + y * w + x + 1];
                let cc = input.data[base + (y + 1) * w + x];
                let d = input.data[base + (y + 1) * w + x + 1];
                out[obase + oy * ow + ox] = a.max(b).max(cc).max(d);
            }
        }
    }
    Tensor::new(out_shape, out)
}

/// Like [`max_pool_2x2`] but also returns, per output cell, the flat input
/// index of the selected maximum. Ties resolve to the first index in
/// row-major window order, which keeps the backward pass deterministic.
pub fn max_pool_2x2_with_argmax(input: &Tensor) -> Result<(Tensor, Vec<usize>), TensorError> {
    let s = input.shape();
    if s.height % 2 != 0 || s.width % 2 != 0 || s.height < 2 || s.width < 2 {
        return Err(TensorError::OddSpatialDims { height: s.height, width: s.width });
    }
    let out_shape = Shape::new(s.channels, s.height / 2, s.width / 2);
    let mut out = vec![0.0f32; out_shape.elements()];
    let mut arg = vec![0usize; out_shape.elements()];
    let (h, w) = (s.height, s.width);
    let (oh, ow) = (out_shape.height, out_shape.width);
    for c in 0..s.channels {
        let base = c * h * w;
        let obase = c * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let y = oy * 2;
                let x = ox * 2;
                let idxs = [
                    base + y * w + x,
                    base + y * w + x + 1,
                    base + (y + 1) * w + x,
                    base + (y + 1) * w + x + 1,
                ];
                let mut best = idxs[0];
                let mut best_v = input.data[idxs[0]];
                for &i in &idxs[1..] {
                    if input.data[i] > best_v {
                        best_v = input.data[i];
                        best = i;
                    }
                }
                out[obase + oy * ow + ox] = best_v;
                arg[obase + oy * ow + ox] = best;
            }
        }
    }
    Ok((Tensor::new(out_shape, out)?, arg))
}

/// Nearest-neighbor 2x upsampling in both spatial dims: the edge-side half of
/// the transfer layer. `out[c][y][x] = in[c][y/2][x/2]`.
pub fn nn_upsample_2x(input: &Tensor) -> Tensor {
    let s = input.shape();
    let out_shape = Shape::new(s.channels, s.height * 2, s.width * 2);
    let mut out = vec![0.0f32; out_shape.elements()];
    let (h, w) = (s.height, s.width);
    let (oh, ow) = (out_shape.height, out_shape.width);
    for c in 0..s.channels {
        let base = c * h * w;
        let obase = c * oh * ow;
        for y in 0..oh {
            let src_row = base + (y / 2) * w;
            let dst_row = obase + y * ow;
            for x in 0..ow {
                out[dst_row + x] = input.data[src_row + x / 2];
            }
        }
    }
    Tensor { shape: out_shape, data: out }
}

/// Gradient of [`nn_upsample_2x`]: each input cell receives the sum of the
/// upstream gradient over its replicated 2x2 group.
pub fn nn_upsample_2x_backward(input_shape: Shape, upstream: &Tensor) -> Result<Tensor, TensorError> {
    let expect = Shape::new(input_shape.channels, input_shape.height * 2, input_shape.width * 2);
    if upstream.shape() != expect {
        return Err(TensorError::ShapeMismatch { expected: expect.to_string(), actual: upstream.shape() });
    }
    let mut grad = vec![0.0f32; input_shape.elements()];
    let (h, w) = (input_shape.height, input_shape.width);
    let (uh, uw) = (expect.height, expect.width);
    for c in 0..input_shape.channels {
        let base = c * h * w;
        let ubase = c * uh * uw;
        for y in 0..uh {
            for x in 0..uw {
                grad[base + (y / 2) * w + x / 2] += upstream.data[ubase + y * uw + x];
            }
        }
    }
    Tensor::new(input_shape, grad)
}
