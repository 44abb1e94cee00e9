//! Shared helpers for the integration suites: a global lock serializing
//! timing-sensitive tests, and a finite-difference gradient oracle built on
//! an independent f64 re-implementation of every layer's forward pass. All
//! supported layers are piecewise linear, so central differences in f64 are
//! exact away from kinks and the oracle never touches the production path it
//! checks.

use std::sync::{Mutex, MutexGuard, OnceLock};

use slicekit::layers::{Layer, LayerKind, Padding};
use slicekit::tensor::{Shape, Tensor};

/// Tests that measure wall time must hold this lock so they never share the
/// machine with each other.
pub fn timing_lock() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(())).lock().unwrap_or_else(|p| p.into_inner())
}

/// f64 mirror of one concrete layer (or a block of them).
#[derive(Clone)]
pub enum RefLayer {
    Conv2D { out_channels: usize, kernel: usize, stride: usize, pad: usize, w: Vec<f64>, b: Vec<f64> },
    Dense { out_units: usize, w: Vec<f64>, b: Vec<f64> },
    ReLU,
    MaxPool { kernel: usize, stride: usize },
    GlobalAvgPool,
    Flatten,
    DeviceTL,
    EdgeTL,
    Block(Vec<RefLayer>),
}

impl RefLayer {
    pub fn from_layer(layer: &Layer) -> RefLayer {
        let wb = || {
            let w = layer.weights.as_ref().expect("oracle weights");
            (w.w.iter().map(|&v| v as f64).collect(), w.b.iter().map(|&v| v as f64).collect())
        };
        match &layer.kind {
            LayerKind::Conv2D { out_channels, kernel, stride, padding } => {
                let (w, b) = wb();
                let pad = match padding {
                    Padding::Same => (kernel - 1) / 2,
                    Padding::Valid => 0,
                };
                RefLayer::Conv2D { out_channels: *out_channels, kernel: *kernel, stride: *stride, pad, w, b }
            }
            LayerKind::Dense { out_units } => {
                let (w, b) = wb();
                RefLayer::Dense { out_units: *out_units, w, b }
            }
            LayerKind::ReLU => RefLayer::ReLU,
            LayerKind::MaxPool { kernel, stride } => RefLayer::MaxPool { kernel: *kernel, stride: *stride },
            LayerKind::GlobalAvgPool => RefLayer::GlobalAvgPool,
            LayerKind::Flatten => RefLayer::Flatten,
            LayerKind::DeviceTL => RefLayer::DeviceTL,
            LayerKind::EdgeTL => RefLayer::EdgeTL,
            LayerKind::Block(subs) => RefLayer::Block(subs.iter().map(RefLayer::from_layer).collect()),
        }
    }

    /// Mutable views of (weights, biases) for each parameterized slot, in
    /// declaration order.
    pub fn param_slots(&mut self) -> Vec<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            RefLayer::Conv2D { w, b, .. } | RefLayer::Dense { w, b, .. } => vec![(w, b)],
            RefLayer::Block(subs) => subs.iter_mut().flat_map(|s| s.param_slots()).collect(),
            _ => Vec::new(),
        }
    }
}

/// Naive f64 forward pass. Deliberately written with plain quadruple loops
/// and explicit bounds tests, sharing nothing with the production kernels.
pub fn ref_forward(layer: &RefLayer, x: &[f64], shape: Shape) -> (Vec<f64>, Shape) {
    let (c, h, w) = (shape.channels, shape.height, shape.width);
    let at = |buf: &[f64], ch: usize, y: usize, xx: usize| buf[(ch * h + y) * w + xx];
    match layer {
        RefLayer::Conv2D { out_channels, kernel, stride, pad, w: wt, b } => {
            let oh = (h + 2 * pad - kernel) / stride + 1;
            let ow = (w + 2 * pad - kernel) / stride + 1;
            let mut out = vec![0.0f64; out_channels * oh * ow];
            for o in 0..*out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[o];
                        for i in 0..c {
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    let iy = (oy * stride + ky) as isize - *pad as isize;
                                    let ix = (ox * stride + kx) as isize - *pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += wt[((o * c + i) * kernel + ky) * kernel + kx]
                                        * at(x, i, iy as usize, ix as usize);
                                }
                            }
                        }
                        out[(o * oh + oy) * ow + ox] = acc;
                    }
                }
            }
            (out, Shape::new(*out_channels, oh, ow))
        }
        RefLayer::Dense { out_units, w: wt, b } => {
            assert_eq!((h, w), (1, 1), "dense oracle needs flat input");
            let mut out = vec![0.0f64; *out_units];
            for (o, slot) in out.iter_mut().enumerate() {
                *slot = b[o] + (0..c).map(|i| wt[o * c + i] * x[i]).sum::<f64>();
            }
            (out, Shape::new(*out_units, 1, 1))
        }
        RefLayer::ReLU => (x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(), shape),
        RefLayer::MaxPool { kernel, stride } => {
            let oh = (h - kernel) / stride + 1;
            let ow = (w - kernel) / stride + 1;
            let mut out = vec![0.0f64; c * oh * ow];
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut m = f64::MIN;
                        for ky in 0..*kernel {
                            for kx in 0..*kernel {
                                m = m.max(at(x, ch, oy * stride + ky, ox * stride + kx));
                            }
                        }
                        out[(ch * oh + oy) * ow + ox] = m;
                    }
                }
            }
            (out, Shape::new(c, oh, ow))
        }
        RefLayer::GlobalAvgPool => {
            let mut out = vec![0.0f64; c];
            for (ch, slot) in out.iter_mut().enumerate() {
                *slot = (0..h).flat_map(|y| (0..w).map(move |xx| (y, xx))).map(|(y, xx)| at(x, ch, y, xx)).sum::<f64>()
                    / (h * w) as f64;
            }
            (out, Shape::new(c, 1, 1))
        }
        RefLayer::Flatten => (x.to_vec(), Shape::new(c * h * w, 1, 1)),
        RefLayer::DeviceTL => ref_forward(&RefLayer::MaxPool { kernel: 2, stride: 2 }, x, shape),
        RefLayer::EdgeTL => {
            let (oh, ow) = (2 * h, 2 * w);
            let mut out = vec![0.0f64; c * oh * ow];
            for ch in 0..c {
                for y in 0..oh {
                    for xx in 0..ow {
                        out[(ch * oh + y) * ow + xx] = at(x, ch, y / 2, xx / 2);
                    }
                }
            }
            (out, Shape::new(c, oh, ow))
        }
        RefLayer::Block(subs) => {
            let mut cur = x.to_vec();
            let mut s = shape;
            for sub in subs {
                let (next, ns) = ref_forward(sub, &cur, s);
                cur = next;
                s = ns;
            }
            (cur, s)
        }
    }
}

/// Scalar loss for the oracle: fixed linear functional of the f64 output.
pub fn ref_loss(layer: &RefLayer, x: &[f64], shape: Shape, coeffs: &[f32]) -> f64 {
    let (out, _) = ref_forward(layer, x, shape);
    assert_eq!(out.len(), coeffs.len(), "coefficient count must match output");
    out.iter().zip(coeffs.iter()).map(|(&y, &c)| y * c as f64).sum()
}

/// Central finite differences of the f64 oracle loss w.r.t. the input.
pub fn fd_input_gradient(layer: &Layer, input: &Tensor, coeffs: &[f32], eps: f32) -> Vec<f32> {
    let reference = RefLayer::from_layer(layer);
    let shape = input.shape();
    let base: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let eps = eps as f64;
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += eps;
        let mut minus = base.clone();
        minus[i] -= eps;
        let lp = ref_loss(&reference, &plus, shape, coeffs);
        let lm = ref_loss(&reference, &minus, shape, coeffs);
        grad.push(((lp - lm) / (2.0 * eps)) as f32);
    }
    grad
}

/// Central finite differences of the f64 oracle loss w.r.t. one
/// parameterized slot's weights and biases.
pub fn fd_weight_gradient(
    layer: &Layer,
    input: &Tensor,
    coeffs: &[f32],
    eps: f32,
    slot: usize,
) -> (Vec<f32>, Vec<f32>) {
    let reference = RefLayer::from_layer(layer);
    let shape = input.shape();
    let x: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let eps = eps as f64;
    let (w_len, b_len) = {
        let mut probe = reference.clone();
        let slots = probe.param_slots();
        (slots[slot].0.len(), slots[slot].1.len())
    };

    let eval = |mutate: &dyn Fn(&mut Vec<f64>, &mut Vec<f64>)| -> f64 {
        let mut l = reference.clone();
        {
            let mut slots = l.param_slots();
            let (w, b) = &mut slots[slot];
            mutate(w, b);
        }
        ref_loss(&l, &x, shape, coeffs)
    };

    let mut dw = Vec::with_capacity(w_len);
    for i in 0..w_len {
        let lp = eval(&|w, _| w[i] += eps);
        let lm = eval(&|w, _| w[i] -= eps);
        dw.push(((lp - lm) / (2.0 * eps)) as f32);
    }
    let mut db = Vec::with_capacity(b_len);
    for i in 0..b_len {
        let lp = eval(&|_, b| b[i] += eps);
        let lm = eval(&|_, b| b[i] -= eps);
        db.push(((lp - lm) / (2.0 * eps)) as f32);
    }
    (dw, db)
}

/// Relative agreement with a floor that keeps near-zero entries from
/// dominating: |a-b| / max(|a|, |b|, 0.05).
pub fn max_relative_error(analytic: &[f32], numeric: &[f32]) -> f32 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(0.05))
        .fold(0.0, f32::max)
}

/// Random input for the checks, nudged away from zero so ReLU kinks cannot
/// sit inside the finite-difference stencil.
pub fn kink_free_input(shape: Shape, rng: &mut slicekit::rng::Rng, margin: f32) -> Tensor {
    Tensor::from_fn(shape, |_, _, _| {
        let mut v = rng.uniform(-1.0, 1.0);
        if v.abs() < margin {
            v = if v >= 0.0 { margin } else { -margin };
        }
        v
    })
    .unwrap()
}
