//! Small sequential convolutional networks with hand-written backprop.
//!
//! Tensors are `(channels, height, width)` in row-major order. A network is
//! a list of [`Layer`]s whose parameters live in one flat `f64` vector; each
//! layer owns a contiguous slice of it. Layers that need their input
//! channel count infer it from the shape flowing into them.

mod adam;
pub mod gradcheck;
mod train;

pub use adam::Adam;
pub use train::{train, CurvePoint, Objective, TrainConfig, TrainOutcome};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(invalid(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }
}

/// 2-D convolution; `circular_w` wraps the width axis instead of zero-padding it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub circular_w: bool,
}

impl Conv2d {
    pub fn new(out_channels: usize, kernel: (usize, usize)) -> Self {
        Self {
            out_channels,
            kernel,
            stride: (1, 1),
            padding: (0, 0),
            circular_w: false,
        }
    }

    pub fn stride(mut self, sh: usize, sw: usize) -> Self {
        self.stride = (sh, sw);
        self
    }

    pub fn padding(mut self, ph: usize, pw: usize) -> Self {
        self.padding = (ph, pw);
        self
    }

    pub fn circular(mut self) -> Self {
        self.circular_w = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    /// Per-channel learnable scale and shift.
    Affine,
    Relu,
    Sigmoid,
    /// `x + body(x)`; the body must preserve shape.
    Residual(Vec<Layer>),
    /// `(C, H, W) -> (W, H, C)`.
    SwapChannelsWidth,
    /// Mean over the height axis, `(C, H, W) -> (C, 1, W)`.
    MeanHeight,
    Flatten,
    Dense {
        out: usize,
    },
}

#[derive(Debug, Clone)]
enum Op {
    Conv { spec: Conv2d, in_ch: usize },
    Affine,
    Relu,
    Sigmoid,
    Residual(Vec<Node>),
    Swap,
    MeanHeight,
    Flatten,
    Dense { inp: usize, out: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    offset: usize,
    input: Shape,
    output: Shape,
}

impl Node {
    fn param_len(&self) -> usize {
        match &self.op {
            Op::Conv { spec, in_ch } => {
                spec.out_channels * in_ch * spec.kernel.0 * spec.kernel.1 + spec.out_channels
            }
            Op::Affine => 2 * self.input.c,
            Op::Dense { inp, out } => inp * out + out,
            Op::Residual(body) => body.iter().map(Node::param_len).sum(),
            _ => 0,
        }
    }
}

/// Per-node record of the forward pass needed for backprop.
#[derive(Debug, Clone)]
pub struct Cache(Vec<NodeCache>);

#[derive(Debug, Clone)]
struct NodeCache {
    input: Tensor,
    inner: Option<Vec<NodeCache>>,
}

#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    input: Shape,
    output: Shape,
    params: usize,
}

fn build_nodes(
    layers: &[Layer],
    mut shape: Shape,
    offset: &mut usize,
) -> Result<(Vec<Node>, Shape)> {
    let mut nodes = Vec::with_capacity(layers.len());
    for layer in layers {
        let input = shape;
        let (op, output) = match layer {
            Layer::Conv2d(spec) => {
                let (kh, kw) = spec.kernel;
                let (sh, sw) = spec.stride;
                let (ph, pw) = spec.padding;
                if spec.out_channels == 0 || kh == 0 || kw == 0 || sh == 0 || sw == 0 {
                    return Err(invalid(format!("degenerate convolution {spec:?}")));
                }
                let (span_h, span_w) = (input.h + 2 * ph, input.w + 2 * pw);
                if span_h < kh || span_w < kw {
                    return Err(invalid(format!(
                        "kernel {:?} larger than padded input {input:?}",
                        spec.kernel
                    )));
                }
                let out = Shape::new(
                    spec.out_channels,
                    (span_h - kh) / sh + 1,
                    (span_w - kw) / sw + 1,
                );
                (
                    Op::Conv {
                        spec: *spec,
                        in_ch: input.c,
                    },
                    out,
                )
            }
            Layer::Affine => (Op::Affine, input),
            Layer::Relu => (Op::Relu, input),
            Layer::Sigmoid => (Op::Sigmoid, input),
            Layer::Residual(body) => {
                let mut inner_offset = *offset;
                let (inner, out) = build_nodes(body, input, &mut inner_offset)?;
                if out != input {
                    return Err(invalid(format!("residual body maps {input:?} to {out:?}")));
                }
                (Op::Residual(inner), input)
            }
            Layer::SwapChannelsWidth => (Op::Swap, Shape::new(input.w, input.h, input.c)),
            Layer::MeanHeight => (Op::MeanHeight, Shape::new(input.c, 1, input.w)),
            Layer::Flatten => (Op::Flatten, Shape::new(input.len(), 1, 1)),
            Layer::Dense { out } => {
                if input.h != 1 || input.w != 1 {
                    return Err(invalid(format!(
                        "dense layer needs a flat input, got {input:?}"
                    )));
                }
                (
                    Op::Dense {
                        inp: input.c,
                        out: *out,
                    },
                    Shape::new(*out, 1, 1),
                )
            }
        };
        let node = Node {
            op,
            offset: *offset,
            input,
            output,
        };
        *offset += node.param_len();
        nodes.push(node);
        shape = output;
    }
    Ok((nodes, shape))
}

impl Network {
    pub fn new(input: Shape, layers: &[Layer]) -> Result<Self> {
        let mut params = 0;
        let (nodes, output) = build_nodes(layers, input, &mut params)?;
        Ok(Self {
            nodes,
            input,
            output,
            params,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        self.output
    }

    pub fn param_count(&self) -> usize {
        self.params
    }

    /// Parameter range of the last layer that has parameters.
    pub fn last_layer_params(&self) -> core::ops::Range<usize> {
        self.nodes
            .iter()
            .rev()
            .find(|n| n.param_len() > 0)
            .map_or(0..0, |n| n.offset..n.offset + n.param_len())
    }

    /// Kaiming-uniform weights, zero biases, unit affine scales.
    pub fn init_params(&self, rng_seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(rng_seed);
        let mut p = vec![0.0; self.params];
        init_nodes(&self.nodes, &mut p, &mut rng);
        p
    }

    fn check(&self, params: &[f64], x: &Tensor) -> Result<()> {
        if params.len() != self.params {
            return Err(invalid(format!(
                "{} parameters for a network of {}",
                params.len(),
                self.params
            )));
        }
        if x.shape != self.input {
            return Err(invalid(format!(
                "input shape {:?}, expected {:?}",
                x.shape, self.input
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], x: &Tensor) -> Result<Tensor> {
        self.check(params, x)?;
        Ok(forward_nodes(&self.nodes, params, x.clone(), None))
    }

    pub fn forward_cached(&self, params: &[f64], x: &Tensor) -> Result<(Tensor, Cache)> {
        self.check(params, x)?;
        let mut cache = Vec::with_capacity(self.nodes.len());
        let y = forward_nodes(&self.nodes, params, x.clone(), Some(&mut cache));
        Ok((y, Cache(cache)))
    }

    /// Smallest `|input|` seen by any ReLU in a cached pass; infinite if the
    /// network has none. Finite-difference checks need this well above the step.
    pub fn relu_margin(&self, cache: &Cache) -> f64 {
        fn walk(nodes: &[Node], caches: &[NodeCache]) -> f64 {
            let mut m = f64::INFINITY;
            for (node, c) in nodes.iter().zip(caches) {
                match &node.op {
                    Op::Relu => m = c.input.data.iter().fold(m, |a, v| a.min(v.abs())),
                    Op::Residual(inner) => {
                        m = m.min(walk(inner, c.inner.as_deref().unwrap_or(&[])))
                    }
                    _ => {}
                }
            }
            m
        }
        walk(&self.nodes, &cache.0)
    }

    /// Accumulates `dL/dparams` into `grad` and returns `dL/dinput`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &Cache,
        grad_out: &Tensor,
        grad: &mut [f64],
    ) -> Tensor {
        assert_eq!(grad.len(), self.params);
        assert_eq!(grad_out.shape, self.output);
        backward_nodes(&self.nodes, params, &cache.0, grad_out.clone(), grad)
    }
}

fn init_nodes(nodes: &[Node], p: &mut [f64], rng: &mut impl Rng) {
    for node in nodes {
        let o = node.offset;
        match &node.op {
            Op::Conv { spec, in_ch } => {
                let fan_in = in_ch * spec.kernel.0 * spec.kernel.1;
                let n = spec.out_channels * fan_in;
                let bound = libm::sqrt(6.0 / fan_in as f64);
                for v in &mut p[o..o + n] {
                    *v = rng.gen_range(-bound..bound);
                }
            }
            Op::Dense { inp, out } => {
                let bound = libm::sqrt(6.0 / *inp as f64);
                for v in &mut p[o..o + inp * out] {
                    *v = rng.gen_range(-bound..bound);
                }
            }
            Op::Affine => {
                for v in &mut p[o..o + node.input.c] {
                    *v = 1.0;
                }
            }
            Op::Residual(body) => init_nodes(body, p, rng),
            _ => {}
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Consecutive outputs `out..out+len` reading inputs `inp, inp+stride, ...`.
#[derive(Debug, Clone, Copy)]
struct Run {
    out: usize,
    inp: usize,
    len: usize,
}

/// Runs of one kernel tap along an axis; a circular wrap starts a new run.
fn tap_runs(
    out_len: usize,
    in_len: usize,
    stride: usize,
    pad: usize,
    k: usize,
    circular: bool,
) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for o in 0..out_len {
        let i = (o * stride + k) as isize - pad as isize;
        let i = if circular {
            i.rem_euclid(in_len as isize) as usize
        } else if i >= 0 && (i as usize) < in_len {
            i as usize
        } else {
            continue;
        };
        match runs.last_mut() {
            Some(r) if r.out + r.len == o && r.inp + r.len * stride == i => r.len += 1,
            _ => runs.push(Run {
                out: o,
                inp: i,
                len: 1,
            }),
        }
    }
    runs
}

struct ConvMaps {
    rows: Vec<Vec<Run>>,
    cols: Vec<Vec<Run>>,
    stride_w: usize,
}

fn conv_maps(spec: &Conv2d, input: Shape, output: Shape) -> ConvMaps {
    ConvMaps {
        rows: (0..spec.kernel.0)
            .map(|k| tap_runs(output.h, input.h, spec.stride.0, spec.padding.0, k, false))
            .collect(),
        cols: (0..spec.kernel.1)
            .map(|k| {
                tap_runs(
                    output.w,
                    input.w,
                    spec.stride.1,
                    spec.padding.1,
                    k,
                    spec.circular_w,
                )
            })
            .collect(),
        stride_w: spec.stride.1,
    }
}

impl ConvMaps {
    /// `(out_row, in_row)` pairs for kernel row `ky`.
    fn row_pairs(&self, ky: usize, stride_h: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows[ky]
            .iter()
            .flat_map(move |r| (0..r.len).map(move |i| (r.out + i, r.inp + i * stride_h)))
    }
}

/// `y[i] += a * x[i * stride]`.
fn axpy(y: &mut [f64], x: &[f64], a: f64, stride: usize) {
    if stride == 1 {
        for (o, v) in y.iter_mut().zip(x) {
            *o += a * v;
        }
    } else {
        for (o, v) in y.iter_mut().zip(x.iter().step_by(stride)) {
            *o += a * v;
        }
    }
}

/// `Σ y[i] * x[i * stride]`.
fn dot(y: &[f64], x: &[f64], stride: usize) -> f64 {
    if stride == 1 {
        y.iter().zip(x).map(|(a, b)| a * b).sum()
    } else {
        y.iter()
            .zip(x.iter().step_by(stride))
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// `x[i * stride] += a * y[i]`.
fn scatter(x: &mut [f64], y: &[f64], a: f64, stride: usize) {
    if stride == 1 {
        for (o, v) in x.iter_mut().zip(y) {
            *o += a * v;
        }
    } else {
        for (o, v) in x.iter_mut().step_by(stride).zip(y) {
            *o += a * v;
        }
    }
}

fn forward_nodes(
    nodes: &[Node],
    params: &[f64],
    mut x: Tensor,
    mut cache: Option<&mut Vec<NodeCache>>,
) -> Tensor {
    for node in nodes {
        let (y, inner) = forward_node(node, params, &x, cache.is_some());
        if let Some(c) = cache.as_deref_mut() {
            c.push(NodeCache { input: x, inner });
        }
        x = y;
    }
    x
}

fn forward_node(
    node: &Node,
    params: &[f64],
    x: &Tensor,
    keep: bool,
) -> (Tensor, Option<Vec<NodeCache>>) {
    let (si, so) = (node.input, node.output);
    let p = &params[node.offset..node.offset + node.param_len()];
    let mut y = Tensor::zeros(so);
    match &node.op {
        Op::Conv { spec, in_ch } => {
            let (kh, kw) = spec.kernel;
            let (weights, bias) = p.split_at(spec.out_channels * in_ch * kh * kw);
            let maps = conv_maps(spec, si, so);
            let plane_out = so.h * so.w;
            for oc in 0..so.c {
                y.data[oc * plane_out..(oc + 1) * plane_out].fill(bias[oc]);
                for ic in 0..*in_ch {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = weights[((oc * in_ch + ic) * kh + ky) * kw + kx];
                            for (oy, iy) in maps.row_pairs(ky, spec.stride.0) {
                                let yrow = &mut y.data[(oc * so.h + oy) * so.w..][..so.w];
                                let xrow = &x.data[(ic * si.h + iy) * si.w..][..si.w];
                                for r in &maps.cols[kx] {
                                    axpy(
                                        &mut yrow[r.out..r.out + r.len],
                                        &xrow[r.inp..],
                                        wv,
                                        maps.stride_w,
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        Op::Affine => {
            let plane = si.h * si.w;
            let (scale, shift) = p.split_at(si.c);
            for c in 0..si.c {
                for i in c * plane..(c + 1) * plane {
                    y.data[i] = scale[c] * x.data[i] + shift[c];
                }
            }
        }
        Op::Relu => {
            for (o, &v) in y.data.iter_mut().zip(&x.data) {
                *o = v.max(0.0);
            }
        }
        Op::Sigmoid => {
            for (o, &v) in y.data.iter_mut().zip(&x.data) {
                *o = sigmoid(v);
            }
        }
        Op::Residual(body) => {
            let mut inner = Vec::new();
            let out = forward_nodes(body, params, x.clone(), keep.then_some(&mut inner));
            for ((o, a), b) in y.data.iter_mut().zip(&x.data).zip(&out.data) {
                *o = a + b;
            }
            return (y, keep.then_some(inner));
        }
        Op::Swap => {
            for c in 0..si.c {
                for h in 0..si.h {
                    for w in 0..si.w {
                        y.data[(w * si.h + h) * si.c + c] = x.data[(c * si.h + h) * si.w + w];
                    }
                }
            }
        }
        Op::MeanHeight => {
            let inv = 1.0 / si.h as f64;
            for c in 0..si.c {
                for h in 0..si.h {
                    for w in 0..si.w {
                        y.data[c * si.w + w] += x.data[(c * si.h + h) * si.w + w] * inv;
                    }
                }
            }
        }
        Op::Flatten => y.data.copy_from_slice(&x.data),
        Op::Dense { inp, out } => {
            let (weights, bias) = p.split_at(inp * out);
            for o in 0..*out {
                let row = &weights[o * inp..(o + 1) * inp];
                y.data[o] = bias[o] + row.iter().zip(&x.data).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    (y, None)
}

fn backward_nodes(
    nodes: &[Node],
    params: &[f64],
    cache: &[NodeCache],
    mut dy: Tensor,
    grad: &mut [f64],
) -> Tensor {
    for (node, c) in nodes.iter().zip(cache).rev() {
        dy = backward_node(node, params, c, &dy, grad);
    }
    dy
}

fn backward_node(
    node: &Node,
    params: &[f64],
    cache: &NodeCache,
    dy: &Tensor,
    grad: &mut [f64],
) -> Tensor {
    let (si, so) = (node.input, node.output);
    let x = &cache.input;
    let range = node.offset..node.offset + node.param_len();
    let mut dx = Tensor::zeros(si);
    match &node.op {
        Op::Conv { spec, in_ch } => {
            let (kh, kw) = spec.kernel;
            let nw = spec.out_channels * in_ch * kh * kw;
            let weights = &params[range.start..range.start + nw];
            let g = &mut grad[range];
            let (gw, gb) = g.split_at_mut(nw);
            let maps = conv_maps(spec, si, so);
            let plane_out = so.h * so.w;
            for oc in 0..so.c {
                gb[oc] += dy.data[oc * plane_out..(oc + 1) * plane_out]
                    .iter()
                    .sum::<f64>();
                for ic in 0..*in_ch {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wi = ((oc * in_ch + ic) * kh + ky) * kw + kx;
                            let wv = weights[wi];
                            let mut acc = 0.0;
                            for (oy, iy) in maps.row_pairs(ky, spec.stride.0) {
                                let drow = &dy.data[(oc * so.h + oy) * so.w..][..so.w];
                                let xoff = (ic * si.h + iy) * si.w;
                                for r in &maps.cols[kx] {
                                    let d = &drow[r.out..r.out + r.len];
                                    acc += dot(d, &x.data[xoff + r.inp..], maps.stride_w);
                                    scatter(&mut dx.data[xoff + r.inp..], d, wv, maps.stride_w);
                                }
                            }
                            gw[wi] += acc;
                        }
                    }
                }
            }
        }
        Op::Affine => {
            let plane = si.h * si.w;
            let scale = &params[range.start..range.start + si.c];
            let g = &mut grad[range];
            for c in 0..si.c {
                let (mut gs, mut gt) = (0.0, 0.0);
                for i in c * plane..(c + 1) * plane {
                    gs += dy.data[i] * x.data[i];
                    gt += dy.data[i];
                    dx.data[i] = dy.data[i] * scale[c];
                }
                g[c] += gs;
                g[si.c + c] += gt;
            }
        }
        Op::Relu => {
            for ((d, &g), &v) in dx.data.iter_mut().zip(&dy.data).zip(&x.data) {
                *d = if v > 0.0 { g } else { 0.0 };
            }
        }
        Op::Sigmoid => {
            for ((d, &g), &v) in dx.data.iter_mut().zip(&dy.data).zip(&x.data) {
                let s = sigmoid(v);
                *d = g * s * (1.0 - s);
            }
        }
        Op::Residual(body) => {
            let inner = cache.inner.as_deref().unwrap_or(&[]);
            let through = backward_nodes(body, params, inner, dy.clone(), grad);
            for ((d, a), b) in dx.data.iter_mut().zip(&dy.data).zip(&through.data) {
                *d = a + b;
            }
        }
        Op::Swap => {
            for c in 0..si.c {
                for h in 0..si.h {
                    for w in 0..si.w {
                        dx.data[(c * si.h + h) * si.w + w] = dy.data[(w * si.h + h) * si.c + c];
                    }
                }
            }
        }
        Op::MeanHeight => {
            let inv = 1.0 / si.h as f64;
            for c in 0..si.c {
                for h in 0..si.h {
                    for w in 0..si.w {
                        dx.data[(c * si.h + h) * si.w + w] = dy.data[c * si.w + w] * inv;
                    }
                }
            }
        }
        Op::Flatten => dx.data.copy_from_slice(&dy.data),
        Op::Dense { inp, out } => {
            let nw = inp * out;
            let weights = &params[range.start..range.start + nw];
            let g = &mut grad[range];
            let (gw, gb) = g.split_at_mut(nw);
            for o in 0..*out {
                let d = dy.data[o];
                gb[o] += d;
                for i in 0..*inp {
                    gw[o * inp + i] += d * x.data[i];
                    dx.data[i] += d * weights[o * inp + i];
                }
            }
        }
    }
    dx
}
