//! Layer kinds, forward passes, and the backward passes needed for
//! toy-scale retraining.
//!
//! The transfer-layer pair is expressed as two dedicated kinds: `DeviceTL`
//! is fixed to 2x2 stride-2 max pooling with no padding, `EdgeTL` to 2x
//! nearest-neighbor upsampling. A `Block` groups sub-layers that execute as
//! one indivisible unit.

use crate::tensor::{max_pool_2x2, max_pool_2x2_with_argmax, nn_upsample_2x, nn_upsample_2x_backward, Shape, Tensor, TensorError};

/// Spatial padding mode for convolutions.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Padding {
    /// Output spatial dims equal input dims; requires stride 1 and an odd kernel.
    Same,
    /// No padding; output shrinks by kernel-1 before striding.
    Valid,
}

/// The supported layer kinds.
#[derive(Clone, PartialEq, Debug)]
pub enum LayerKind {
    Conv2D { out_channels: usize, kernel: usize, stride: usize, padding: Padding },
    Dense { out_units: usize },
    ReLU,
    MaxPool { kernel: usize, stride: usize },
    GlobalAvgPool,
    Flatten,
    /// Device-side transfer layer: exactly MaxPool(kernel=2, stride=2, no padding).
    DeviceTL,
    /// Edge-side transfer layer: exactly nearest-neighbor upsample by 2.
    EdgeTL,
    /// An indivisible group of sub-layers (collapsed parallel branches).
    Block(Vec<Layer>),
}

/// Trainable parameters of a Conv2D or Dense layer.
///
/// Conv2D: `w` is `[out][in][ky][kx]` flattened, `b` is `[out]`.
/// Dense: `w` is `[out][in]` flattened, `b` is `[out]`.
#[derive(Clone, PartialEq, Debug)]
pub struct Weights {
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

/// Gradients with the same layout as [`Weights`].
#[derive(Clone, Debug)]
pub struct WeightGrads {
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

/// A layer instance: a kind plus optional weights.
#[derive(Clone, PartialEq, Debug)]
pub struct Layer {
    pub kind: LayerKind,
    pub weights: Option<Weights>,
}

impl Layer {
    pub fn new(kind: LayerKind) -> Self {
        Layer { kind, weights: None }
    }

    pub fn with_weights(kind: LayerKind, weights: Weights) -> Self {
        Layer { kind, weights: Some(weights) }
    }

    /// Number of sub-layers for blocks, 1 otherwise.
    pub fn concrete_len(&self) -> usize {
        match &self.kind {
            LayerKind::Block(subs) => subs.len(),
            _ => 1,
        }
    }
}

impl LayerKind {
    /// Short lowercase name used in model files and error messages.
    pub fn type_name(&self) -> &'static str {
        match self {
            LayerKind::Conv2D { .. } => "conv2d",
            LayerKind::Dense { .. } => "dense",
            LayerKind::ReLU => "relu",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::GlobalAvgPool => "globalavgpool",
            LayerKind::Flatten => "flatten",
            LayerKind::DeviceTL => "devicetl",
            LayerKind::EdgeTL => "edgetl",
            LayerKind::Block(_) => "block",
        }
    }

    /// Whether this kind carries trainable weights.
    pub fn parameterized(&self) -> bool {
        matches!(self, LayerKind::Conv2D { .. } | LayerKind::Dense { .. })
    }

    /// Expected (weight, bias) element counts for the given input shape,
    /// or None for parameterless kinds.
    pub fn param_counts(&self, input: Shape) -> Option<(usize, usize)> {
        match self {
            LayerKind::Conv2D { out_channels, kernel, .. } => {
                Some((out_channels * input.channels * kernel * kernel, *out_channels))
            }
            LayerKind::Dense { out_units } => Some((out_units * input.channels, *out_units)),
            _ => None,
        }
    }

    /// Output shape under shape propagation; errors on any incompatibility.
    pub fn output_shape(&self, input: Shape) -> Result<Shape, TensorError> {
        match self {
            LayerKind::Conv2D { out_channels, kernel, stride, padding } => {
                if *kernel == 0 || *stride == 0 || *out_channels == 0 {
                    return Err(TensorError::ShapeMismatch {
                        expected: "conv2d with kernel, stride, out_channels >= 1".into(),
                        actual: input,
                    });
                }
                let pad = match padding {
                    Padding::Same => {
                        if *stride != 1 || kernel % 2 == 0 {
                            return Err(TensorError::ShapeMismatch {
                                expected: "same padding requires stride 1 and an odd kernel".into(),
                                actual: input,
                            });
                        }
                        (kernel - 1) / 2
                    }
                    Padding::Valid => 0,
                };
                let eff_h = input.height + 2 * pad;
                let eff_w = input.width + 2 * pad;
                if eff_h < *kernel || eff_w < *kernel {
                    return Err(TensorError::ShapeMismatch {
                        expected: format!("spatial dims >= kernel {kernel}"),
                        actual: input,
                    });
                }
                Ok(Shape::new(*out_channels, (eff_h - kernel) / stride + 1, (eff_w - kernel) / stride + 1))
            }
            LayerKind::Dense { out_units } => {
                if input.height != 1 || input.width != 1 {
                    return Err(TensorError::ShapeMismatch {
                        expected: "flattened input (Cx1x1) before dense".into(),
                        actual: input,
                    });
                }
                if *out_units == 0 {
                    return Err(TensorError::ShapeMismatch { expected: "dense with out_units >= 1".into(), actual: input });
                }
                Ok(Shape::new(*out_units, 1, 1))
            }
            LayerKind::ReLU => Ok(input),
            LayerKind::MaxPool { kernel, stride } => {
                if *kernel == 0 || *stride == 0 {
                    return Err(TensorError::ShapeMismatch { expected: "maxpool with kernel, stride >= 1".into(), actual: input });
                }
                if input.height < *kernel || input.width < *kernel {
                    return Err(TensorError::ShapeMismatch {
                        expected: format!("spatial dims >= kernel {kernel}"),
                        actual: input,
                    });
                }
                Ok(Shape::new(input.channels, (input.height - kernel) / stride + 1, (input.width - kernel) / stride + 1))
            }
            LayerKind::GlobalAvgPool => Ok(Shape::new(input.channels, 1, 1)),
            LayerKind::Flatten => Ok(Shape::new(input.elements(), 1, 1)),
            LayerKind::DeviceTL => {
                if !input.spatial_dims_even() || input.height < 2 || input.width < 2 {
                    return Err(TensorError::OddSpatialDims { height: input.height, width: input.width });
                }
                Ok(Shape::new(input.channels, input.height / 2, input.width / 2))
            }
            LayerKind::EdgeTL => Ok(Shape::new(input.channels, input.height * 2, input.width * 2)),
            LayerKind::Block(subs) => {
                if subs.len() < 2 {
                    return Err(TensorError::ShapeMismatch { expected: "block with >= 2 sub-layers".into(), actual: input });
                }
                let mut shape = input;
                for sub in subs {
                    if matches!(sub.kind, LayerKind::Block(_)) {
                        return Err(TensorError::ShapeMismatch { expected: "no nested blocks".into(), actual: input });
                    }
                    shape = sub.kind.output_shape(shape)?;
                }
                Ok(shape)
            }
        }
    }
}

fn weights_for<'a>(layer: &'a Layer, input: Shape) -> Result<&'a Weights, TensorError> {
    let (w_len, b_len) = layer
        .kind
        .param_counts(input)
        .expect("weights_for called on parameterless layer");
    let weights = layer
        .weights
        .as_ref()
        .ok_or_else(|| TensorError::MissingWeights { layer: layer.kind.type_name().into() })?;
    if weights.w.len() != w_len || weights.b.len() != b_len {
        return Err(TensorError::WeightLength {
            layer: layer.kind.type_name().into(),
            expected: w_len + b_len,
            got: weights.w.len() + weights.b.len(),
        });
    }
    Ok(weights)
}

/// Copy a channel-major tensor into a zero-padded spatial buffer so the
/// convolution inner loops need no boundary branches.
fn padded_input(x: &[f32], shape: Shape, pad: usize) -> (Vec<f32>, usize, usize) {
    let (ph, pw) = (shape.height + 2 * pad, shape.width + 2 * pad);
    if pad == 0 {
        return (x.to_vec(), ph, pw);
    }
    let mut out = vec![0.0f32; shape.channels * ph * pw];
    for c in 0..shape.channels {
        for y in 0..shape.height {
            let src = (c * shape.height + y) * shape.width;
            let dst = (c * ph + y + pad) * pw + pad;
            out[dst..dst + shape.width].copy_from_slice(&x[src..src + shape.width]);
        }
    }
    (out, ph, pw)
}

/// Run one layer forward. Standard semantics: Conv2D is cross-correlation,
/// Dense an affine map over a flattened input, pooling as defined by the
/// transfer-layer kernels, blocks apply sub-layers in order.
pub fn forward(layer: &Layer, input: &Tensor) -> Result<Tensor, TensorError> {
    let in_shape = input.shape();
    match &layer.kind {
        LayerKind::Conv2D { out_channels, kernel, stride, padding } => {
            let out_shape = layer.kind.output_shape(in_shape)?;
            let weights = weights_for(layer, in_shape)?;
            let k = *kernel;
            let s = *stride;
            let pad = match padding {
                Padding::Same => (k - 1) / 2,
                Padding::Valid => 0,
            };
            let (ic, _ih, _iw) = (in_shape.channels, in_shape.height, in_shape.width);
            let (oh, ow) = (out_shape.height, out_shape.width);
            let (xp, ph, pw) = padded_input(input.data(), in_shape, pad);
            let mut out = vec![0.0f32; out_shape.elements()];
            for o in 0..*out_channels {
                let obase = o * oh * ow;
                out[obase..obase + oh * ow].fill(weights.b[o]);
                for i in 0..ic {
                    let wbase = ((o * ic + i) * k) * k;
                    for ky in 0..k {
                        let wrow = &weights.w[wbase + ky * k..wbase + ky * k + k];
                        for oy in 0..oh {
                            let xrow = &xp[(i * ph + oy * s + ky) * pw..];
                            let orow = &mut out[obase + oy * ow..obase + oy * ow + ow];
                            for (ox, slot) in orow.iter_mut().enumerate() {
                                let window = &xrow[ox * s..ox * s + k];
                                let mut acc = 0.0f32;
                                for (wv, xv) in wrow.iter().zip(window.iter()) {
                                    acc += wv * xv;
                                }
                                *slot += acc;
                            }
                        }
                    }
                }
            }
            Tensor::new(out_shape, out)
        }
        LayerKind::Dense { out_units } => {
            let out_shape = layer.kind.output_shape(in_shape)?;
            let weights = weights_for(layer, in_shape)?;
            let n = in_shape.channels;
            let x = input.data();
            let mut out = vec![0.0f32; *out_units];
            for (o, slot) in out.iter_mut().enumerate() {
                let row = &weights.w[o * n..(o + 1) * n];
                let mut acc = weights.b[o];
                for (wv, xv) in row.iter().zip(x.iter()) {
                    acc += wv * xv;
                }
                *slot = acc;
            }
            Tensor::new(out_shape, out)
        }
        LayerKind::ReLU => Tensor::new(in_shape, input.data().iter().map(|v| v.max(0.0)).collect()),
        LayerKind::MaxPool { kernel, stride } => {
            let out_shape = layer.kind.output_shape(in_shape)?;
            let (k, s) = (*kernel, *stride);
            let (ih, iw) = (in_shape.height, in_shape.width);
            let (oh, ow) = (out_shape.height, out_shape.width);
            let x = input.data();
            let mut out = vec![0.0f32; out_shape.elements()];
            for c in 0..in_shape.channels {
                let base = c * ih * iw;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut m = f32::MIN;
                        for ky in 0..k {
                            let row = base + (oy * s + ky) * iw + ox * s;
                            for kx in 0..k {
                                m = m.max(x[row + kx]);
                            }
                        }
                        out[(c * oh + oy) * ow + ox] = m;
                    }
                }
            }
            Tensor::new(out_shape, out)
        }
        LayerKind::GlobalAvgPool => {
            let out_shape = layer.kind.output_shape(in_shape)?;
            let hw = (in_shape.height * in_shape.width) as f32;
            let x = input.data();
            let mut out = vec![0.0f32; in_shape.channels];
            for (c, slot) in out.iter_mut().enumerate() {
                let base = c * in_shape.height * in_shape.width;
                let sum: f32 = x[base..base + in_shape.height * in_shape.width].iter().sum();
                *slot = sum / hw;
            }
            Tensor::new(out_shape, out)
        }
        LayerKind::Flatten => input.reshaped(layer.kind.output_shape(in_shape)?),
        LayerKind::DeviceTL => max_pool_2x2(input),
        LayerKind::EdgeTL => Ok(nn_upsample_2x(input)),
        LayerKind::Block(subs) => {
            layer.kind.output_shape(in_shape)?;
            let mut t = input.clone();
            for sub in subs {
                t = forward(sub, &t)?;
            }
            Ok(t)
        }
    }
}

/// Backward pass of one layer.
///
/// Returns the gradient w.r.t. the input and the gradients w.r.t. weights
/// (empty for parameterless kinds; for a block, one entry per parameterized
/// sub-layer in declaration order).
pub fn backward(layer: &Layer, input: &Tensor, upstream: &Tensor) -> Result<(Tensor, Vec<WeightGrads>), TensorError> {
    let in_shape = input.shape();
    let out_shape = layer.kind.output_shape(in_shape)?;
    if upstream.shape() != out_shape {
        return Err(TensorError::ShapeMismatch { expected: out_shape.to_string(), actual: upstream.shape() });
    }
    match &layer.kind {
        LayerKind::Conv2D { out_channels, kernel, stride, padding } => {
            let weights = weights_for(layer, in_shape)?;
            let k = *kernel;
            let s = *stride;
            let pad = match padding {
                Padding::Same => (k - 1) / 2,
                Padding::Valid => 0,
            };
            let (ic, ih, iw) = (in_shape.channels, in_shape.height, in_shape.width);
            let (oh, ow) = (out_shape.height, out_shape.width);
            let (xp, ph, pw) = padded_input(input.data(), in_shape, pad);
            let up = upstream.data();
            // Gradients accumulate in the padded frame; cropping drops what
            // fell on the zero padding.
            let mut dxp = vec![0.0f32; xp.len()];
            let mut dw = vec![0.0f32; weights.w.len()];
            let mut db = vec![0.0f32; weights.b.len()];
            for o in 0..*out_channels {
                let obase = o * oh * ow;
                db[o] += up[obase..obase + oh * ow].iter().sum::<f32>();
                for i in 0..ic {
                    let wbase = ((o * ic + i) * k) * k;
                    for ky in 0..k {
                        let wrow = &weights.w[wbase + ky * k..wbase + ky * k + k];
                        let dwrow = &mut dw[wbase + ky * k..wbase + ky * k + k];
                        for oy in 0..oh {
                            let row = (i * ph + oy * s + ky) * pw;
                            let xrow = &xp[row..];
                            let uprow = &up[obase + oy * ow..obase + oy * ow + ow];
                            let dxrow = &mut dxp[row..];
                            for (ox, &g) in uprow.iter().enumerate() {
                                let xwin = &xrow[ox * s..ox * s + k];
                                let dxwin = &mut dxrow[ox * s..ox * s + k];
                                for kx in 0..k {
                                    dwrow[kx] += g * xwin[kx];
                                    dxwin[kx] += g * wrow[kx];
                                }
                            }
                        }
                    }
                }
            }
            let mut dx = vec![0.0f32; in_shape.elements()];
            for i in 0..ic {
                for y in 0..ih {
                    let src = (i * ph + y + pad) * pw + pad;
                    let dst = (i * ih + y) * iw;
                    dx[dst..dst + iw].copy_from_slice(&dxp[src..src + iw]);
                }
            }
            Ok((Tensor::new(in_shape, dx)?, vec![WeightGrads { w: dw, b: db }]))
        }
        LayerKind::Dense { out_units } => {
            let weights = weights_for(layer, in_shape)?;
            let n = in_shape.channels;
            let x = input.data();
            let up = upstream.data();
            let mut dx = vec![0.0f32; n];
            let mut dw = vec![0.0f32; weights.w.len()];
            let mut db = vec![0.0f32; weights.b.len()];
            for o in 0..*out_units {
                let g = up[o];
                db[o] = g;
                let row = o * n;
                for i in 0..n {
                    dw[row + i] = g * x[i];
                    dx[i] += g * weights.w[row + i];
                }
            }
            Ok((Tensor::new(in_shape, dx)?, vec![WeightGrads { w: dw, b: db }]))
        }
        LayerKind::ReLU => {
            let dx = input
                .data()
                .iter()
                .zip(upstream.data().iter())
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect();
            Ok((Tensor::new(in_shape, dx)?, vec![]))
        }
        LayerKind::MaxPool { kernel, stride } => {
            let (k, s) = (*kernel, *stride);
            let (ih, iw) = (in_shape.height, in_shape.width);
            let (oh, ow) = (out_shape.height, out_shape.width);
            let x = input.data();
            let up = upstream.data();
            let mut dx = vec![0.0f32; in_shape.elements()];
            for c in 0..in_shape.channels {
                let base = c * ih * iw;
                for oy in 0..oh {
                    for ox in 0..ow {
                        // Argmax with first-index tie-break, matching forward.
                        let mut best = base + (oy * s) * iw + ox * s;
                        let mut best_v = x[best];
                        for ky in 0..k {
                            let row = base + (oy * s + ky) * iw + ox * s;
                            for kx in 0..k {
                                if x[row + kx] > best_v {
                                    best_v = x[row + kx];
                                    best = row + kx;
                                }
                            }
                        }
                        dx[best] += up[(c * oh + oy) * ow + ox];
                    }
                }
            }
            Ok((Tensor::new(in_shape, dx)?, vec![]))
        }
        LayerKind::GlobalAvgPool => {
            let hw = (in_shape.height * in_shape.width) as f32;
            let up = upstream.data();
            let mut dx = vec![0.0f32; in_shape.elements()];
            for c in 0..in_shape.channels {
                let g = up[c] / hw;
                let base = c * in_shape.height * in_shape.width;
                for slot in &mut dx[base..base + in_shape.height * in_shape.width] {
                    *slot = g;
                }
            }
            Ok((Tensor::new(in_shape, dx)?, vec![]))
        }
        LayerKind::Flatten => Ok((upstream.reshaped(in_shape)?, vec![])),
        LayerKind::DeviceTL => {
            let (_, argmax) = max_pool_2x2_with_argmax(input)?;
            let up = upstream.data();
            let mut dx = vec![0.0f32; in_shape.elements()];
            for (cell, &src) in argmax.iter().enumerate() {
                dx[src] += up[cell];
            }
            Ok((Tensor::new(in_shape, dx)?, vec![]))
        }
        LayerKind::EdgeTL => Ok((nn_upsample_2x_backward(in_shape, upstream)?, vec![])),
        LayerKind::Block(subs) => {
            // Recompute the forward trace, then chain backward.
            let mut acts = Vec::with_capacity(subs.len());
            let mut t = input.clone();
            for sub in subs {
                acts.push(t.clone());
                t = forward(sub, &t)?;
            }
            let mut grad = upstream.clone();
            let mut per_sub: Vec<Vec<WeightGrads>> = Vec::with_capacity(subs.len());
            for (sub, act) in subs.iter().zip(acts.iter()).rev() {
                let (g, wg) = backward(sub, act, &grad)?;
                grad = g;
                per_sub.push(wg);
            }
            per_sub.reverse();
            Ok((grad, per_sub.into_iter().flatten().collect()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn flat(values: &[f32]) -> Tensor {
        Tensor::new(Shape::new(values.len(), 1, 1), values.to_vec()).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let x = flat(&[-1.0, 0.0, 2.0]);
        let y = forward(&Layer::new(LayerKind::ReLU), &x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn dense_identity_is_identity() {
        let n = 5;
        let mut w = vec![0.0f32; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        let layer = Layer::with_weights(LayerKind::Dense { out_units: n }, Weights { w, b: vec![0.0; n] });
        let x = flat(&[0.5, -1.5, 2.0, 3.25, -0.125]);
        let y = forward(&layer, &x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_1x1_weight_two_doubles() {
        let c = 3;
        let mut w = vec![0.0f32; c * c];
        for i in 0..c {
            w[i * c + i] = 2.0;
        }
        let layer = Layer::with_weights(
            LayerKind::Conv2D { out_channels: c, kernel: 1, stride: 1, padding: Padding::Valid },
            Weights { w, b: vec![0.0; c] },
        );
        let mut rng = Rng::new(2);
        let x = Tensor::random(Shape::new(c, 4, 5), &mut rng);
        let y = forward(&layer, &x).unwrap();
        for (a, b) in x.data().iter().zip(y.data().iter()) {
            assert_eq!(*b, 2.0 * *a);
        }
    }

    #[test]
    fn conv_same_preserves_spatial_dims() {
        let mut rng = Rng::new(3);
        let kind = LayerKind::Conv2D { out_channels: 4, kernel: 3, stride: 1, padding: Padding::Same };
        let in_shape = Shape::new(3, 7, 9);
        let (wl, bl) = kind.param_counts(in_shape).unwrap();
        let w: Vec<f32> = (0..wl).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let layer = Layer::with_weights(kind, Weights { w, b: vec![0.1; bl] });
        let x = Tensor::random(in_shape, &mut rng);
        let y = forward(&layer, &x).unwrap();
        assert_eq!(y.shape(), Shape::new(4, 7, 9));
    }

    #[test]
    fn conv_valid_stride_two_shape() {
        let kind = LayerKind::Conv2D { out_channels: 2, kernel: 3, stride: 2, padding: Padding::Valid };
        assert_eq!(kind.output_shape(Shape::new(1, 8, 8)).unwrap(), Shape::new(2, 3, 3));
    }

    #[test]
    fn conv_matches_direct_convolution_oracle() {
        // Hand-rolled dense correlation, no padding tricks, as the oracle.
        let mut rng = Rng::new(17);
        let in_shape = Shape::new(2, 5, 5);
        let kind = LayerKind::Conv2D { out_channels: 3, kernel: 3, stride: 1, padding: Padding::Valid };
        let (wl, bl) = kind.param_counts(in_shape).unwrap();
        let w: Vec<f32> = (0..wl).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f32> = (0..bl).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let layer = Layer::with_weights(kind, Weights { w: w.clone(), b: b.clone() });
        let x = Tensor::random(in_shape, &mut rng);
        let y = forward(&layer, &x).unwrap();
        for o in 0..3 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut acc = b[o];
                    for i in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                acc += w[((o * 2 + i) * 3 + ky) * 3 + kx] * x.at(i, oy + ky, ox + kx);
                            }
                        }
                    }
                    let got = y.at(o, oy, ox);
                    assert!((acc - got).abs() <= 1e-5 * acc.abs().max(1.0), "o={o} oy={oy} ox={ox}: {acc} vs {got}");
                }
            }
        }
    }

    #[test]
    fn dense_requires_flat_input() {
        let layer = Layer::new(LayerKind::Dense { out_units: 4 });
        let err = layer.kind.output_shape(Shape::new(2, 3, 3)).unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { .. }));
    }

    #[test]
    fn missing_weights_reported() {
        let layer = Layer::new(LayerKind::Dense { out_units: 2 });
        let err = forward(&layer, &flat(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, TensorError::MissingWeights { .. }));
    }

    #[test]
    fn relu_backward_masks() {
        let x = flat(&[-1.0, 2.0]);
        let up = flat(&[1.0, 1.0]);
        let (dx, wg) = backward(&Layer::new(LayerKind::ReLU), &x, &up).unwrap();
        assert_eq!(dx.data(), &[0.0, 1.0]);
        assert!(wg.is_empty());
    }

    #[test]
    fn device_tl_backward_routes_to_argmax() {
        let x = Tensor::new(Shape::new(1, 2, 2), vec![1.0, 3.0, 2.0, 4.0]).unwrap();
        let up = Tensor::new(Shape::new(1, 1, 1), vec![2.5]).unwrap();
        let (dx, _) = backward(&Layer::new(LayerKind::DeviceTL), &x, &up).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 0.0, 2.5]);
    }

    #[test]
    fn block_applies_in_order_and_backprops() {
        let mut rng = Rng::new(23);
        let in_shape = Shape::new(2, 4, 4);
        let conv = LayerKind::Conv2D { out_channels: 2, kernel: 3, stride: 1, padding: Padding::Same };
        let (wl, bl) = conv.param_counts(in_shape).unwrap();
        let w: Vec<f32> = (0..wl).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let block = Layer::new(LayerKind::Block(vec![
            Layer::with_weights(conv, Weights { w, b: vec![0.0; bl] }),
            Layer::new(LayerKind::ReLU),
        ]));
        let x = Tensor::random(in_shape, &mut rng);
        let y = forward(&block, &x).unwrap();
        assert_eq!(y.shape(), in_shape);
        let up = Tensor::random(in_shape, &mut rng);
        let (dx, wgs) = backward(&block, &x, &up).unwrap();
        assert_eq!(dx.shape(), in_shape);
        assert_eq!(wgs.len(), 1); // one parameterized sub-layer
    }

    #[test]
    fn block_needs_two_sublayers() {
        let b = LayerKind::Block(vec![Layer::new(LayerKind::ReLU)]);
        assert!(b.output_shape(Shape::new(1, 2, 2)).is_err());
    }
}
