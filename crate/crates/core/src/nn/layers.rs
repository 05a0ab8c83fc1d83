//! Layers with retained forward state and hand-written backward passes.
//!
//! All activations carry a leading batch dimension. Convolutions are "valid"
//! (no padding) over NCHW tensors and are computed by unrolling patches into
//! a column matrix and running a single GEMM per batch chunk.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::real::{gemm, Strides};
use super::{Real, Tensor};
use crate::{Error, Result};

/// Upper bound on the unrolled column buffer, in elements.
const COLUMN_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    Flatten,
    /// Appends `extra` features from a second input to a `[batch, features]` tensor.
    Concat { extra: usize },
}

/// `floor((input - kernel) / stride) + 1`, or `None` when the window does not fit.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || input < kernel {
        None
    } else {
        Some((input - kernel) / stride + 1)
    }
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Concat { .. } => "concat",
        }
    }

    /// Output shape for a batched input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: String| {
            Error::config(format!(
                "{}: expected input {expected}, got {input:?}",
                self.name()
            ))
        };
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride } => {
                if input.len() != 4 || input[1] != in_channels {
                    return Err(mismatch(format!("[batch, {in_channels}, height, width]")));
                }
                let oh = conv_output_extent(input[2], kernel, stride);
                let ow = conv_output_extent(input[3], kernel, stride);
                match (oh, ow) {
                    (Some(oh), Some(ow)) if out_channels > 0 => Ok(vec![input[0], out_channels, oh, ow]),
                    _ => Err(Error::config(format!(
                        "conv2d: kernel {kernel} stride {stride} leaves no output for input {input:?}"
                    ))),
                }
            }
            LayerSpec::Dense { in_features, out_features } => {
                if input.len() != 2 || input[1] != in_features {
                    return Err(mismatch(format!("[batch, {in_features}]")));
                }
                Ok(vec![input[0], out_features])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => {
                if input.len() < 2 {
                    return Err(mismatch(String::from("[batch, ...]")));
                }
                Ok(vec![input[0], input[1..].iter().product()])
            }
            LayerSpec::Concat { extra } => {
                if input.len() != 2 {
                    return Err(mismatch(String::from("[batch, features]")));
                }
                Ok(vec![input[0], input[1] + extra])
            }
        }
    }
}

fn backward_before_forward(name: &str) -> Error {
    Error::usage(format!("{name}: backward called before forward"))
}

fn check_grad_shape(name: &str, expected: &[usize], got: &[usize]) -> Result<()> {
    if expected != got {
        return Err(Error::usage(format!(
            "{name}: output gradient shape {got:?} does not match forward output {expected:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Conv2d<R> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[out_channels, in_channels, kernel, kernel]`
    pub weight: Tensor<R>,
    /// `[out_channels]`
    pub bias: Tensor<R>,
    input: Option<Tensor<R>>,
    output_shape: Vec<usize>,
    cols: Vec<R>,
    scratch: Vec<R>,
}

struct ConvGeometry {
    batch: usize,
    height: usize,
    width: usize,
    out_h: usize,
    out_w: usize,
    patch: usize,
    chunk: usize,
}

impl ConvGeometry {
    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

impl<R: Real> Conv2d<R> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: Tensor::zeros(vec![out_channels, in_channels, kernel, kernel]).with_grad(),
            bias: Tensor::zeros(vec![out_channels]).with_grad(),
            input: None,
            output_shape: Vec::new(),
            cols: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Conv2d {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            stride: self.stride,
        }
    }

    fn geometry(&self, shape: &[usize]) -> Result<ConvGeometry> {
        let out = self.spec().output_shape(shape)?;
        let patch = self.in_channels * self.kernel * self.kernel;
        let positions = out[2] * out[3];
        let chunk = (COLUMN_BUDGET / (patch * positions)).clamp(1, shape[0]);
        Ok(ConvGeometry {
            batch: shape[0],
            height: shape[2],
            width: shape[3],
            out_h: out[2],
            out_w: out[3],
            patch,
            chunk,
        })
    }

    /// Unrolls samples `[start, start + count)` into `self.cols` as a
    /// `[patch, count * positions]` matrix.
    fn unroll(&mut self, x: &[R], g: &ConvGeometry, start: usize, count: usize) {
        let (k, s) = (self.kernel, self.stride);
        let positions = g.positions();
        let width = count * positions;
        self.cols.resize(g.patch * width, R::zero());
        let plane = g.height * g.width;
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst_row = &mut self.cols[row * width..(row + 1) * width];
                    for bi in 0..count {
                        let src = &x[((start + bi) * self.in_channels + c) * plane..][..plane];
                        for oy in 0..g.out_h {
                            let src_row = &src[(oy * s + ky) * g.width + kx..];
                            let dst = &mut dst_row[bi * positions + oy * g.out_w..][..g.out_w];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d = src_row[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, input: Tensor<R>) -> Result<Tensor<R>> {
        let g = self.geometry(input.shape())?;
        let positions = g.positions();
        let oc = self.out_channels;
        let mut out = vec![R::zero(); g.batch * oc * positions];
        let x = input.data();
        let mut start = 0;
        while start < g.batch {
            let count = g.chunk.min(g.batch - start);
            let width = count * positions;
            self.unroll(x, &g, start, count);
            self.scratch.resize(oc * width, R::zero());
            gemm(
                oc,
                g.patch,
                width,
                R::one(),
                self.weight.data(),
                Strides::row_major(g.patch),
                &self.cols,
                Strides::row_major(width),
                R::zero(),
                &mut self.scratch,
                Strides::row_major(width),
            );
            for bi in 0..count {
                for o in 0..oc {
                    let bias = self.bias.data()[o];
                    let src = &self.scratch[o * width + bi * positions..][..positions];
                    let dst = &mut out[((start + bi) * oc + o) * positions..][..positions];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d = v + bias;
                    }
                }
            }
            start += count;
        }
        let shape = vec![g.batch, oc, g.out_h, g.out_w];
        self.output_shape = shape.clone();
        self.input = Some(input);
        Tensor::new(shape, out)
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward_impl(&mut self, grad_out: &Tensor<R>, want_input_grad: bool) -> Result<Option<Tensor<R>>> {
        let input = self.input.take().ok_or_else(|| backward_before_forward("conv2d"))?;
        let result = self.backward_with(&input, grad_out, want_input_grad);
        self.input = Some(input);
        result
    }

    fn backward_with(
        &mut self,
        input: &Tensor<R>,
        grad_out: &Tensor<R>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<R>>> {
        check_grad_shape("conv2d", &self.output_shape, grad_out.shape())?;
        let g = self.geometry(input.shape())?;
        let positions = g.positions();
        let oc = self.out_channels;
        let (k, s) = (self.kernel, self.stride);
        let gy = grad_out.data();
        let mut dx = if want_input_grad { vec![R::zero(); input.len()] } else { Vec::new() };
        let mut gt = Vec::new();
        let mut dcols = Vec::new();
        let plane = g.height * g.width;
        let mut start = 0;
        while start < g.batch {
            let count = g.chunk.min(g.batch - start);
            let width = count * positions;
            self.unroll(input.data(), &g, start, count);
            // Output gradient regrouped as [out_channels, count * positions].
            gt.resize(oc * width, R::zero());
            for bi in 0..count {
                for o in 0..oc {
                    let src = &gy[((start + bi) * oc + o) * positions..][..positions];
                    gt[o * width + bi * positions..][..positions].copy_from_slice(src);
                }
            }
            {
                let db = self.bias.grad_mut().expect("bias has a grad slot");
                for o in 0..oc {
                    db[o] += gt[o * width..(o + 1) * width].iter().copied().sum::<R>();
                }
            }
            let dw = self.weight.grad_mut().expect("weight has a grad slot");
            gemm(
                oc,
                width,
                g.patch,
                R::one(),
                &gt,
                Strides::row_major(width),
                &self.cols,
                Strides::transposed(width),
                R::one(),
                dw,
                Strides::row_major(g.patch),
            );
            if want_input_grad {
                dcols.resize(g.patch * width, R::zero());
                gemm(
                    g.patch,
                    oc,
                    width,
                    R::one(),
                    self.weight.data(),
                    Strides::transposed(g.patch),
                    &gt,
                    Strides::row_major(width),
                    R::zero(),
                    &mut dcols,
                    Strides::row_major(width),
                );
                for c in 0..self.in_channels {
                    for ky in 0..k {
                        for kx in 0..k {
                            let row = (c * k + ky) * k + kx;
                            let src_row = &dcols[row * width..(row + 1) * width];
                            for bi in 0..count {
                                let dst = &mut dx[((start + bi) * self.in_channels + c) * plane..][..plane];
                                for oy in 0..g.out_h {
                                    let base = (oy * s + ky) * g.width + kx;
                                    let src = &src_row[bi * positions + oy * g.out_w..][..g.out_w];
                                    for (ox, &v) in src.iter().enumerate() {
                                        dst[base + ox * s] += v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            start += count;
        }
        if want_input_grad {
            Ok(Some(Tensor::new(input.shape().to_vec(), dx)?))
        } else {
            Ok(None)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dense<R> {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out_features, in_features]`
    pub weight: Tensor<R>,
    /// `[out_features]`
    pub bias: Tensor<R>,
    input: Option<Tensor<R>>,
}

impl<R: Real> Dense<R> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Dense {
            in_features,
            out_features,
            weight: Tensor::zeros(vec![out_features, in_features]).with_grad(),
            bias: Tensor::zeros(vec![out_features]).with_grad(),
            input: None,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Dense { in_features: self.in_features, out_features: self.out_features }
    }

    pub fn forward(&mut self, input: Tensor<R>) -> Result<Tensor<R>> {
        let shape = self.spec().output_shape(input.shape())?;
        let (batch, nin, nout) = (shape[0], self.in_features, self.out_features);
        let mut out = vec![R::zero(); batch * nout];
        for row in out.chunks_exact_mut(nout) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(
            batch,
            nin,
            nout,
            R::one(),
            input.data(),
            Strides::row_major(nin),
            self.weight.data(),
            Strides::transposed(nin),
            R::one(),
            &mut out,
            Strides::row_major(nout),
        );
        self.input = Some(input);
        Tensor::new(shape, out)
    }

    pub fn backward_impl(&mut self, grad_out: &Tensor<R>, want_input_grad: bool) -> Result<Option<Tensor<R>>> {
        let input = self.input.as_ref().ok_or_else(|| backward_before_forward("dense"))?;
        let batch = input.shape()[0];
        let (nin, nout) = (self.in_features, self.out_features);
        check_grad_shape("dense", &[batch, nout], grad_out.shape())?;
        let gy = grad_out.data();
        {
            let db = self.bias.grad_mut().expect("bias has a grad slot");
            for row in gy.chunks_exact(nout) {
                for (d, &g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
        }
        gemm(
            nout,
            batch,
            nin,
            R::one(),
            gy,
            Strides::transposed(nout),
            input.data(),
            Strides::row_major(nin),
            R::one(),
            self.weight.grad_mut().expect("weight has a grad slot"),
            Strides::row_major(nin),
        );
        if !want_input_grad {
            return Ok(None);
        }
        let mut dx = vec![R::zero(); batch * nin];
        gemm(
            batch,
            nout,
            nin,
            R::one(),
            gy,
            Strides::row_major(nout),
            self.weight.data(),
            Strides::row_major(nin),
            R::zero(),
            &mut dx,
            Strides::row_major(nin),
        );
        Ok(Some(Tensor::new(vec![batch, nin], dx)?))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    /// `true` where the pre-activation was strictly positive.
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: None }
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn forward<R: Real>(&mut self, mut input: Tensor<R>) -> Result<Tensor<R>> {
        let mask = input.data().iter().map(|&x| x > R::zero()).collect();
        for x in input.data_mut() {
            if !(*x > R::zero()) {
                *x = R::zero();
            }
        }
        self.mask = Some(mask);
        Ok(input)
    }

    pub fn backward<R: Real>(&self, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
        let mask = self.mask.as_ref().ok_or_else(|| backward_before_forward("relu"))?;
        if mask.len() != grad_out.len() {
            return Err(Error::usage(format!(
                "relu: output gradient has {} elements, forward produced {}",
                grad_out.len(),
                mask.len()
            )));
        }
        let data = grad_out
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m { g } else { R::zero() })
            .collect();
        Tensor::new(grad_out.shape().to_vec(), data)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten { input_shape: None }
    }

    pub fn forward<R: Real>(&mut self, input: Tensor<R>) -> Result<Tensor<R>> {
        let shape = LayerSpec::Flatten.output_shape(input.shape())?;
        self.input_shape = Some(input.shape().to_vec());
        input.reshape(shape)
    }

    pub fn backward<R: Real>(&self, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
        let shape = self.input_shape.clone().ok_or_else(|| backward_before_forward("flatten"))?;
        grad_out.clone().reshape(shape)
    }
}

/// Row-wise concatenation of `[batch, a]` and `[batch, b]`.
pub fn concat<R: Real>(left: &Tensor<R>, right: &Tensor<R>) -> Result<Tensor<R>> {
    let (ls, rs) = (left.shape(), right.shape());
    if ls.len() != 2 || rs.len() != 2 || ls[0] != rs[0] {
        return Err(Error::config(format!("concat: incompatible shapes {ls:?} and {rs:?}")));
    }
    let (batch, a, b) = (ls[0], ls[1], rs[1]);
    let mut data = Vec::with_capacity(batch * (a + b));
    for i in 0..batch {
        data.extend_from_slice(&left.data()[i * a..(i + 1) * a]);
        data.extend_from_slice(&right.data()[i * b..(i + 1) * b]);
    }
    Tensor::new(vec![batch, a + b], data)
}

/// Inverse of [`concat`] for gradients: splits `[batch, a + b]` at column `a`.
pub fn split_columns<R: Real>(joined: &Tensor<R>, a: usize) -> Result<(Tensor<R>, Tensor<R>)> {
    let s = joined.shape();
    if s.len() != 2 || a == 0 || a >= s[1] {
        return Err(Error::usage(format!("split: cannot split {s:?} at column {a}")));
    }
    let (batch, total) = (s[0], s[1]);
    let b = total - a;
    let mut left = Vec::with_capacity(batch * a);
    let mut right = Vec::with_capacity(batch * b);
    for row in joined.data().chunks_exact(total) {
        left.extend_from_slice(&row[..a]);
        right.extend_from_slice(&row[a..]);
    }
    Ok((Tensor::new(vec![batch, a], left)?, Tensor::new(vec![batch, b], right)?))
}

/// A single-input layer.
#[derive(Debug, Clone)]
pub enum Layer<R> {
    Conv2d(Conv2d<R>),
    Dense(Dense<R>),
    Relu(Relu),
    Flatten(Flatten),
}

impl<R: Real> Layer<R> {
    /// Builds an uninitialized (zero-parameter) layer from its spec.
    pub fn from_spec(spec: LayerSpec) -> Result<Self> {
        Ok(match spec {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err(Error::config(format!("conv2d: degenerate spec {spec:?}")));
                }
                Layer::Conv2d(Conv2d::new(in_channels, out_channels, kernel, stride))
            }
            LayerSpec::Dense { in_features, out_features } => {
                if in_features == 0 || out_features == 0 {
                    return Err(Error::config(format!("dense: degenerate spec {spec:?}")));
                }
                Layer::Dense(Dense::new(in_features, out_features))
            }
            LayerSpec::Relu => Layer::Relu(Relu::new()),
            LayerSpec::Flatten => Layer::Flatten(Flatten::new()),
            LayerSpec::Concat { .. } => {
                return Err(Error::config("concat takes two inputs; use nn::concat"));
            }
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(l) => l.spec(),
            Layer::Dense(l) => l.spec(),
            Layer::Relu(_) => LayerSpec::Relu,
            Layer::Flatten(_) => LayerSpec::Flatten,
        }
    }

    pub fn forward(&mut self, input: Tensor<R>) -> Result<Tensor<R>> {
        match self {
            Layer::Conv2d(l) => l.forward(input),
            Layer::Dense(l) => l.forward(input),
            Layer::Relu(l) => l.forward(input),
            Layer::Flatten(l) => l.forward(input),
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
        match self {
            Layer::Conv2d(l) => l.backward_impl(grad_out, true).map(|g| g.expect("requested")),
            Layer::Dense(l) => l.backward_impl(grad_out, true).map(|g| g.expect("requested")),
            Layer::Relu(l) => l.backward(grad_out),
            Layer::Flatten(l) => l.backward(grad_out),
        }
    }

    /// Like [`Layer::backward`] but skips the input gradient.
    pub fn backward_params(&mut self, grad_out: &Tensor<R>) -> Result<()> {
        match self {
            Layer::Conv2d(l) => l.backward_impl(grad_out, false).map(drop),
            Layer::Dense(l) => l.backward_impl(grad_out, false).map(drop),
            Layer::Relu(l) => l.backward(grad_out).map(drop),
            Layer::Flatten(l) => l.backward(grad_out).map(drop),
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor<R>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Dense(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<R>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn relu_mask(&self) -> Option<&[bool]> {
        match self {
            Layer::Relu(r) => r.mask(),
            _ => None,
        }
    }
}

/// Plain layer chain.
#[derive(Debug, Clone)]
pub struct Sequential<R> {
    pub layers: Vec<Layer<R>>,
}

impl<R: Real> Sequential<R> {
    pub fn new(layers: Vec<Layer<R>>) -> Self {
        Sequential { layers }
    }

    pub fn from_specs(specs: &[LayerSpec]) -> Result<Self> {
        Ok(Sequential { layers: specs.iter().map(|&s| Layer::from_spec(s)).collect::<Result<_>>()? })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.layers.iter().try_fold(input.to_vec(), |shape, l| l.spec().output_shape(&shape))
    }

    pub fn forward(&mut self, input: Tensor<R>) -> Result<Tensor<R>> {
        self.layers.iter_mut().try_fold(input, |x, l| l.forward(x))
    }

    pub fn backward(&mut self, grad_out: &Tensor<R>) -> Result<Tensor<R>> {
        let mut g = grad_out.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    /// Backward pass that stops producing gradients below the first layer.
    pub fn backward_params(&mut self, grad_out: &Tensor<R>) -> Result<()> {
        let Some((first, rest)) = self.layers.split_first_mut() else {
            return Ok(());
        };
        let mut g = grad_out.clone();
        for l in rest.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        first.backward_params(&g)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<R>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn relu_masks(&self) -> Vec<bool> {
        self.layers.iter().filter_map(|l| l.relu_mask()).flatten().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_naive(x: &Tensor<f64>, conv: &Conv2d<f64>) -> Vec<f64> {
        let s = x.shape();
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (k, st, oc) = (conv.kernel, conv.stride, conv.out_channels);
        let oh = (h - k) / st + 1;
        let ow = (w - k) / st + 1;
        let mut out = vec![0.0; b * oc * oh * ow];
        for bi in 0..b {
            for o in 0..oc {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.data()[o];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    acc += conv.weight.data()[((o * c + ci) * k + ky) * k + kx]
                                        * x.data()[((bi * c + ci) * h + oy * st + ky) * w + ox * st + kx];
                                }
                            }
                        }
                        out[((bi * oc + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn filled(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let mut state = seed;
        let data = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn conv_shape_follows_valid_rule() {
        let spec = LayerSpec::Conv2d { in_channels: 9, out_channels: 32, kernel: 8, stride: 4 };
        assert_eq!(spec.output_shape(&[1, 9, 84, 84]).unwrap(), vec![1, 32, 20, 20]);
        assert!(matches!(spec.output_shape(&[1, 9, 7, 84]), Err(Error::Config(_))));
        let err = spec.output_shape(&[1, 3, 84, 84]).unwrap_err();
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains("conv2d") && msg.contains("[1, 3, 84, 84]"), "{msg}");
    }

    #[test]
    fn unrolled_conv_matches_direct_loops() {
        let mut conv = Conv2d::<f64>::new(3, 5, 3, 2);
        conv.weight = filled(vec![5, 3, 3, 3], 1).with_grad();
        conv.bias = filled(vec![5], 2).with_grad();
        let x = filled(vec![4, 3, 11, 9], 3);
        let want = conv_naive(&x, &conv);
        let got = conv.forward(x).unwrap();
        assert_eq!(got.shape(), &[4, 5, 5, 4]);
        for (a, b) in got.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chunked_batches_match_single_chunk() {
        // A batch large enough to exceed the column budget splits into chunks.
        let mut conv = Conv2d::<f64>::new(2, 3, 4, 1);
        conv.weight = filled(vec![3, 2, 4, 4], 4).with_grad();
        let x = filled(vec![300, 2, 40, 40], 5);
        let g = conv.geometry(x.shape()).unwrap();
        assert!(g.chunk < 300);
        let single = conv_naive(&filled(vec![300, 2, 40, 40], 5), &conv);
        let got = conv.forward(x).unwrap();
        for (a, b) in got.data().iter().zip(&single) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_zeroes_negatives_and_blocks_their_gradient() {
        let mut relu = Relu::new();
        let y = relu.forward(Tensor::<f64>::new(vec![1, 3], vec![-1.0, 0.0, 2.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let g = relu.backward(&Tensor::new(vec![1, 3], vec![5.0, 5.0, 5.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn identity_dense_is_identity() {
        let mut dense = Dense::<f64>::new(3, 3);
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        dense.weight = Tensor::new(vec![3, 3], eye).unwrap().with_grad();
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
        assert_eq!(dense.forward(x.clone()).unwrap().data(), x.data());
    }

    #[test]
    fn dense_weight_gradient_is_outer_product() {
        let mut dense = Dense::<f64>::new(3, 2);
        dense.weight = filled(vec![2, 3], 9).with_grad();
        let x = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        dense.forward(x).unwrap();
        let g = Tensor::new(vec![1, 2], vec![0.5, -1.0]).unwrap();
        dense.backward_impl(&g, true).unwrap();
        assert_eq!(dense.weight.grad().unwrap(), &[0.5, 1.0, 1.5, -1.0, -2.0, -3.0]);
        assert_eq!(dense.bias.grad().unwrap(), &[0.5, -1.0]);
    }

    #[test]
    fn backward_before_forward_is_usage_error() {
        let mut layer = Layer::<f64>::from_spec(LayerSpec::Dense { in_features: 2, out_features: 2 }).unwrap();
        let g = Tensor::zeros(vec![1, 2]);
        assert!(matches!(layer.backward(&g), Err(Error::Usage(_))));
        let mut relu = Layer::<f64>::Relu(Relu::new());
        assert!(matches!(relu.backward(&g), Err(Error::Usage(_))));
    }

    #[test]
    fn concat_then_split_round_trips() {
        let a = filled(vec![3, 4], 1);
        let b = filled(vec![3, 2], 2);
        let joined = concat(&a, &b).unwrap();
        assert_eq!(joined.shape(), &[3, 6]);
        let (l, r) = split_columns(&joined, 4).unwrap();
        assert_eq!(l.data(), a.data());
        assert_eq!(r.data(), b.data());
    }
}
