use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Grads, Module, Tensor};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub(crate) fn uniform_fan_in(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

fn expect_shape(context: &str, expected: &[usize], got: &[usize]) -> Result<(), NnError> {
    if expected != got {
        return Err(NnError::Shape {
            context: context.to_string(),
            expected: expected.to_vec(),
            got: got.to_vec(),
        });
    }
    Ok(())
}

/// Fully connected layer: `y = act(W x + b)` with `W: [out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn new(rng: &mut impl Rng, input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: uniform_fan_in(rng, &[output, input], input),
            bias: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self, NnError> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(NnError::Shape {
                context: "dense parts (weight [out,in], bias [out])".into(),
                expected: weight.shape().to_vec(),
                got: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn input_size(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_size(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Pre-activation `W x + b`.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        let n_in = self.input_size();
        let w = self.weight.data();
        self.bias
            .data()
            .iter()
            .enumerate()
            .map(|(o, b)| {
                let row = &w[o * n_in..(o + 1) * n_in];
                b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        expect_shape("dense input", &[self.input_size()], x.shape())?;
        let out: Vec<f64> = self
            .affine(x.data())
            .into_iter()
            .map(|z| self.activation.apply(z))
            .collect();
        Ok(Tensor::from_vec(out))
    }

    /// Backward given the cached input and output. Accumulates into `grads = [dW, db]`.
    pub fn backward(&self, input: &Tensor, output: &Tensor, grad_out: &Tensor, grads: &mut [Tensor]) -> Tensor {
        let n_in = self.input_size();
        let n_out = self.output_size();
        let x = input.data();
        let dz: Vec<f64> = grad_out
            .data()
            .iter()
            .zip(output.data())
            .map(|(g, y)| g * self.activation.derivative_from_output(*y))
            .collect();
        let (gw, gb) = grads.split_at_mut(1);
        let gw = gw[0].data_mut();
        let gb = gb[0].data_mut();
        for o in 0..n_out {
            let d = dz[o];
            gb[o] += d;
            if d != 0.0 {
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
        }
        let w = self.weight.data();
        let mut dx = vec![0.0; n_in];
        for o in 0..n_out {
            let d = dz[o];
            if d != 0.0 {
                let row = &w[o * n_in..(o + 1) * n_in];
                for (g, wi) in dx.iter_mut().zip(row) {
                    *g += d * wi;
                }
            }
        }
        Tensor::from_vec(dx)
    }
}

/// 2D convolution over `[channels, height, width]` inputs with zero padding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
}

impl Conv2d {
    pub fn new(
        rng: &mut impl Rng,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: uniform_fan_in(rng, &[out_channels, in_channels, kernel, kernel], fan_in),
            bias: Tensor::zeros(&[out_channels]),
            stride: stride.max(1),
            padding,
            activation,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let k = self.kernel();
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < k || wp < k {
            return None;
        }
        Some(((hp - k) / self.stride + 1, (wp - k) / self.stride + 1))
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize), NnError> {
        let s = x.shape();
        if s.len() != 3 || s[0] != self.in_channels() {
            return Err(NnError::Shape {
                context: "conv2d input [channels, height, width]".into(),
                expected: vec![self.in_channels(), 0, 0],
                got: s.to_vec(),
            });
        }
        let (oh, ow) = self.output_hw(s[1], s[2]).ok_or_else(|| NnError::Shape {
            context: "conv2d input smaller than kernel".into(),
            expected: vec![self.in_channels(), self.kernel(), self.kernel()],
            got: s.to_vec(),
        })?;
        Ok((s[1], s[2], oh, ow))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (h, w, oh, ow) = self.check_input(x)?;
        let (cin, cout, k, st, pad) = (self.in_channels(), self.out_channels(), self.kernel(), self.stride, self.padding as isize);
        let xd = x.data();
        let wd = self.weight.data();
        let mut out = vec![0.0; cout * oh * ow];
        for o in 0..cout {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = self.bias.data()[o]);
            for i in 0..cin {
                let xin = &xd[i * h * w..(i + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wd[((o * cin + i) * k + ky) * k + kx];
                        for oy in 0..oh {
                            let iy = (oy * st + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = &xin[iy as usize * w..(iy as usize + 1) * w];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            let (lo, hi) = valid_range(ow, st, kx, pad, w);
                            if st == 1 {
                                let base = (lo + kx) as isize - pad;
                                let xs = &xrow[base as usize..base as usize + (hi - lo)];
                                for (ov, xv) in orow[lo..hi].iter_mut().zip(xs) {
                                    *ov += wv * xv;
                                }
                            } else {
                                for ox in lo..hi {
                                    let ix = (ox * st + kx) as isize - pad;
                                    orow[ox] += wv * xrow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
            plane.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        }
        Tensor::new(vec![cout, oh, ow], out)
    }

    pub fn backward(&self, input: &Tensor, output: &Tensor, grad_out: &Tensor, grads: &mut [Tensor]) -> Tensor {
        let s = input.shape();
        let (h, w) = (s[1], s[2]);
        let (oh, ow) = (output.shape()[1], output.shape()[2]);
        let (cin, cout, k, st, pad) = (self.in_channels(), self.out_channels(), self.kernel(), self.stride, self.padding as isize);
        let dz: Vec<f64> = grad_out
            .data()
            .iter()
            .zip(output.data())
            .map(|(g, y)| g * self.activation.derivative_from_output(*y))
            .collect();
        let xd = input.data();
        let wd = self.weight.data();
        let mut dx = vec![0.0; cin * h * w];
        let (gw, gb) = grads.split_at_mut(1);
        let gw = gw[0].data_mut();
        let gb = gb[0].data_mut();
        for o in 0..cout {
            let dplane = &dz[o * oh * ow..(o + 1) * oh * ow];
            gb[o] += dplane.iter().sum::<f64>();
            for i in 0..cin {
                let xin = &xd[i * h * w..(i + 1) * h * w];
                let dxin = &mut dx[i * h * w..(i + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * cin + i) * k + ky) * k + kx;
                        let wv = wd[widx];
                        let (lo, hi) = valid_range(ow, st, kx, pad, w);
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * st + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row_off = iy as usize * w;
                            let drow = &dplane[oy * ow..(oy + 1) * ow];
                            if st == 1 {
                                let base = row_off + ((lo + kx) as isize - pad) as usize;
                                let n = hi - lo;
                                let xs = &xin[base..base + n];
                                for ((d, xv), dxv) in drow[lo..hi].iter().zip(xs).zip(&mut dxin[base..base + n]) {
                                    acc += d * xv;
                                    *dxv += d * wv;
                                }
                                continue;
                            }
                            for ox in lo..hi {
                                let ix = ((ox * st + kx) as isize - pad) as usize;
                                let d = drow[ox];
                                acc += d * xin[row_off + ix];
                                dxin[row_off + ix] += d * wv;
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
        Tensor::new(vec![cin, h, w], dx).expect("input shape")
    }
}

/// Range of output columns `ox` whose input column `ox*stride + kx - pad` lies inside `[0, w)`.
fn valid_range(ow: usize, stride: usize, kx: usize, pad: isize, w: usize) -> (usize, usize) {
    let mut lo = 0usize;
    while lo < ow && ((lo * stride + kx) as isize) < pad {
        lo += 1;
    }
    let mut hi = ow;
    while hi > lo && ((hi - 1) * stride + kx) as isize - pad >= w as isize {
        hi -= 1;
    }
    (lo, hi)
}

/// Non-overlapping max pooling (window = stride = `size`); trailing rows/cols that do not fill a window are dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxPool2d {
    pub size: usize,
}

impl MaxPool2d {
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<usize>), NnError> {
        let s = x.shape();
        if s.len() != 3 || s[1] < self.size || s[2] < self.size {
            return Err(NnError::Shape {
                context: "maxpool input [channels, height, width]".into(),
                expected: vec![0, self.size, self.size],
                got: s.to_vec(),
            });
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (oh, ow) = (h / self.size, w / self.size);
        let xd = x.data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for dy in 0..self.size {
                        for dx in 0..self.size {
                            let idx = (ch * h + oy * self.size + dy) * w + ox * self.size + dx;
                            if xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
        Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
    }

    pub fn backward(&self, input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
        let mut dx = Tensor::zeros(input_shape);
        let d = dx.data_mut();
        for (g, idx) in grad_out.data().iter().zip(argmax) {
            d[*idx] += g;
        }
        dx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    MaxPool(MaxPool2d),
    Flatten,
}

/// Per-layer values saved by [`Sequential::forward_cached`].
#[derive(Clone, Debug)]
pub enum LayerCache {
    Dense { input: Tensor, output: Tensor },
    Conv2d { input: Tensor, output: Tensor },
    MaxPool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Flatten { input_shape: Vec<usize> },
}

impl Layer {
    fn param_slots(&self) -> usize {
        match self {
            Layer::Dense(_) | Layer::Conv2d(_) => 2,
            _ => 0,
        }
    }

    fn forward_cached(&self, x: Tensor) -> Result<(Tensor, LayerCache), NnError> {
        match self {
            Layer::Dense(d) => {
                let y = d.forward(&x)?;
                Ok((y.clone(), LayerCache::Dense { input: x, output: y }))
            }
            Layer::Conv2d(c) => {
                let y = c.forward(&x)?;
                Ok((y.clone(), LayerCache::Conv2d { input: x, output: y }))
            }
            Layer::MaxPool(p) => {
                let (y, argmax) = p.forward(&x)?;
                Ok((
                    y,
                    LayerCache::MaxPool {
                        input_shape: x.shape().to_vec(),
                        argmax,
                    },
                ))
            }
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let n = x.len();
                Ok((x.reshape(&[n])?, LayerCache::Flatten { input_shape: shape }))
            }
        }
    }

    fn forward(&self, x: Tensor) -> Result<Tensor, NnError> {
        match self {
            Layer::Dense(d) => d.forward(&x),
            Layer::Conv2d(c) => c.forward(&x),
            Layer::MaxPool(p) => Ok(p.forward(&x)?.0),
            Layer::Flatten => {
                let n = x.len();
                x.reshape(&[n])
            }
        }
    }

    fn backward(&self, cache: &LayerCache, grad_out: Tensor, grads: &mut [Tensor]) -> Tensor {
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Dense { input, output }) => d.backward(input, output, &grad_out, grads),
            (Layer::Conv2d(c), LayerCache::Conv2d { input, output }) => c.backward(input, output, &grad_out, grads),
            (Layer::MaxPool(p), LayerCache::MaxPool { input_shape, argmax }) => p.backward(input_shape, argmax, &grad_out),
            (Layer::Flatten, LayerCache::Flatten { input_shape }) => grad_out.reshape(input_shape).expect("flatten round trip"),
            _ => unreachable!("layer cache kind mismatch"),
        }
    }

    fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            _ => Vec::new(),
        }
    }
}

/// Feed-forward stack of layers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

#[derive(Clone, Debug)]
pub struct SequentialCache {
    caches: Vec<LayerCache>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.layers.iter().try_fold(x.clone(), |acc, layer| layer.forward(acc))
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, SequentialCache), NnError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut acc = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward_cached(acc)?;
            caches.push(cache);
            acc = y;
        }
        Ok((acc, SequentialCache { caches }))
    }

    /// Backpropagates `grad_out`, accumulating parameter gradients into `grads`
    /// (aligned with [`Module::params`]) and returning the input gradient.
    pub fn backward(&self, cache: &SequentialCache, grad_out: Tensor, grads: &mut [Tensor]) -> Tensor {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_slots();
        }
        let mut g = grad_out;
        for ((layer, cache), off) in self.layers.iter().zip(&cache.caches).zip(offsets).rev() {
            let slots = layer.param_slots();
            g = layer.backward(cache, g, &mut grads[off..off + slots]);
        }
        g
    }
}

impl Module for Sequential {
    fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }
}

impl Sequential {
    pub fn backward_into(&self, cache: &SequentialCache, grad_out: Tensor, grads: &mut Grads) -> Tensor {
        self.backward(cache, grad_out, &mut grads.0)
    }
}
