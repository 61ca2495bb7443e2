use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

/// Declarative layer description used to build a [`Network`](super::Network).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Valid padding, stride 1.
    Conv2D { filters: usize, kernel: (usize, usize), activation: Activation },
    /// Stride equals the pool extent; trailing rows/cols that do not fill a
    /// window are dropped.
    MaxPool2D { pool: usize },
    Flatten,
    Dense { units: usize, activation: Activation },
    /// Inverted dropout.
    Dropout { rate: f64 },
    /// Normalizes over the last axis.
    Softmax,
}

/// Convolution weights are stored `(kh, kw, in_channels, filters)`, which is
/// also the memory order of a dense weight `(kh * kw * in_channels, filters)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2D {
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub filters: usize,
    pub activation: Activation,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Dense weights are stored `(inputs, units)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub units: usize,
    pub activation: Activation,
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    /// Inactive dropout is the identity even in train mode.
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2D(Conv2D),
    MaxPool2D { pool: usize },
    Flatten,
    Dense(Dense),
    Dropout(Dropout),
    Softmax,
}

/// Per-layer state kept by a training forward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Conv { input: Tensor, output: Tensor },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Flatten { input_shape: Vec<usize> },
    Dense { input: Tensor, output: Tensor },
    Dropout { mask: Option<Vec<f64>> },
    Softmax { output: Tensor },
}

fn glorot(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_in(-limit, limit)).collect();
    Tensor::from_vec(shape, data).expect("glorot shape")
}

/// Weight and bias gradients of one layer.
pub(crate) type ParamGrads = (Tensor, Tensor);

impl Layer {
    /// Builds the layer for an input of `input_shape` and returns it with its
    /// output shape.
    pub(crate) fn build(
        spec: &LayerSpec,
        input_shape: &[usize],
        rng: &mut Rng,
    ) -> Result<(Layer, Vec<usize>)> {
        match *spec {
            LayerSpec::Conv2D { filters, kernel: (kh, kw), activation } => {
                let [h, w, c] = rank3(input_shape, "Conv2D")?;
                if kh == 0 || kw == 0 || filters == 0 {
                    bail!(Argument, "Conv2D needs positive kernel and filter count");
                }
                if kh > h || kw > w {
                    bail!(
                        Dimension,
                        "Conv2D kernel {}x{} larger than input {}x{}",
                        kh,
                        kw,
                        h,
                        w
                    );
                }
                let weight = glorot(rng, &[kh, kw, c, filters], kh * kw * c, kh * kw * filters);
                let layer = Conv2D {
                    kernel: (kh, kw),
                    in_channels: c,
                    filters,
                    activation,
                    weight,
                    bias: Tensor::zeros(&[filters]),
                };
                Ok((Layer::Conv2D(layer), vec![h - kh + 1, w - kw + 1, filters]))
            }
            LayerSpec::MaxPool2D { pool } => {
                let [h, w, c] = rank3(input_shape, "MaxPool2D")?;
                if pool == 0 || pool > h || pool > w {
                    bail!(Dimension, "pool {} does not fit input {}x{}", pool, h, w);
                }
                Ok((Layer::MaxPool2D { pool }, vec![h / pool, w / pool, c]))
            }
            LayerSpec::Flatten => {
                let n = input_shape.iter().product();
                Ok((Layer::Flatten, vec![n]))
            }
            LayerSpec::Dense { units, activation } => {
                if input_shape.len() != 1 {
                    bail!(Dimension, "Dense expects a flat input, got {:?}", input_shape);
                }
                if units == 0 {
                    bail!(Argument, "Dense needs at least one unit");
                }
                let inputs = input_shape[0];
                let layer = Dense {
                    inputs,
                    units,
                    activation,
                    weight: glorot(rng, &[inputs, units], inputs, units),
                    bias: Tensor::zeros(&[units]),
                };
                Ok((Layer::Dense(layer), vec![units]))
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    bail!(Range, "dropout rate {} not in [0, 1)", rate);
                }
                Ok((Layer::Dropout(Dropout { rate, active: true }), input_shape.to_vec()))
            }
            LayerSpec::Softmax => Ok((Layer::Softmax, input_shape.to_vec())),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2D(c) => LayerSpec::Conv2D {
                filters: c.filters,
                kernel: c.kernel,
                activation: c.activation,
            },
            Layer::MaxPool2D { pool } => LayerSpec::MaxPool2D { pool: *pool },
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Dense(d) => LayerSpec::Dense { units: d.units, activation: d.activation },
            Layer::Dropout(d) => LayerSpec::Dropout { rate: d.rate },
            Layer::Softmax => LayerSpec::Softmax,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv2D(_) => "Conv2D",
            Layer::MaxPool2D { .. } => "MaxPool2D",
            Layer::Flatten => "Flatten",
            Layer::Dense(_) => "Dense",
            Layer::Dropout(_) => "Dropout",
            Layer::Softmax => "Softmax",
        }
    }

    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Conv2D(c) => Some((&c.weight, &c.bias)),
            Layer::Dense(d) => Some((&d.weight, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Conv2D(c) => Some((&mut c.weight, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias)),
            _ => None,
        }
    }

    /// Output shape for a given input shape, without building anything.
    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2D(c) => {
                let [h, w, ch] = rank3(input, "Conv2D")?;
                let (kh, kw) = c.kernel;
                if ch != c.in_channels {
                    bail!(Dimension, "Conv2D expects {} channels, got {}", c.in_channels, ch);
                }
                if kh > h || kw > w {
                    bail!(Range, "input {}x{} smaller than kernel {}x{}", h, w, kh, kw);
                }
                Ok(vec![h - kh + 1, w - kw + 1, c.filters])
            }
            Layer::MaxPool2D { pool } => {
                let [h, w, ch] = rank3(input, "MaxPool2D")?;
                if *pool > h || *pool > w {
                    bail!(Range, "input {}x{} smaller than pool {}", h, w, pool);
                }
                Ok(vec![h / pool, w / pool, ch])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense(d) => {
                if input != [d.inputs] {
                    bail!(Dimension, "Dense expects [{}], got {:?}", d.inputs, input);
                }
                Ok(vec![d.units])
            }
            Layer::Dropout(_) | Layer::Softmax => Ok(input.to_vec()),
        }
    }

    /// Forward pass. `train` carries the dropout stream when training;
    /// returns the cache only then.
    pub(crate) fn forward(
        &self,
        x: Tensor,
        train: Option<&mut Rng>,
    ) -> Result<(Tensor, Option<Cache>)> {
        let keep = train.is_some();
        match self {
            Layer::Conv2D(c) => {
                let y = conv_forward(c, &x)?;
                let cache = keep.then(|| Cache::Conv { input: x, output: y.clone() });
                Ok((y, cache))
            }
            Layer::MaxPool2D { pool } => {
                let (y, argmax) = pool_forward(*pool, &x)?;
                let cache =
                    keep.then(|| Cache::Pool { input_shape: x.shape().to_vec(), argmax });
                Ok((y, cache))
            }
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let n = x.len();
                let y = x.reshape(&[n])?;
                Ok((y, keep.then_some(Cache::Flatten { input_shape: shape })))
            }
            Layer::Dense(d) => {
                let y = dense_forward(d, &x)?;
                let cache = keep.then(|| Cache::Dense { input: x, output: y.clone() });
                Ok((y, cache))
            }
            Layer::Dropout(d) => match train {
                Some(rng) if d.active && d.rate > 0.0 => {
                    let scale = 1.0 / (1.0 - d.rate);
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| if rng.uniform() >= d.rate { scale } else { 0.0 })
                        .collect();
                    let mut y = x;
                    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    Ok((y, Some(Cache::Dropout { mask: Some(mask) })))
                }
                Some(_) => Ok((x, Some(Cache::Dropout { mask: None }))),
                None => Ok((x, None)),
            },
            Layer::Softmax => {
                let y = softmax_last_axis(x);
                let cache = keep.then(|| Cache::Softmax { output: y.clone() });
                Ok((y, cache))
            }
        }
    }

    /// Backward pass. Returns the input gradient (when `need_input_grad`)
    /// and the (weight, bias) gradients for parameterized layers.
    pub(crate) fn backward(
        &self,
        cache: &Cache,
        dy: Tensor,
        need_input_grad: bool,
    ) -> Result<(Option<Tensor>, Option<ParamGrads>)> {
        match (self, cache) {
            (Layer::Conv2D(c), Cache::Conv { input, output }) => {
                let (dx, dw, db) = conv_backward(c, input, output, dy, need_input_grad);
                Ok((dx, Some((dw, db))))
            }
            (Layer::MaxPool2D { .. }, Cache::Pool { input_shape, argmax }) => {
                let mut dx = Tensor::zeros(input_shape);
                let buf = dx.data_mut();
                for (g, &src) in dy.data().iter().zip(argmax) {
                    buf[src] += g;
                }
                Ok((Some(dx), None))
            }
            (Layer::Flatten, Cache::Flatten { input_shape }) => Ok((Some(dy.reshape(input_shape)?), None)),
            (Layer::Dense(d), Cache::Dense { input, output }) => {
                let (dx, dw, db) = dense_backward(d, input, output, dy, need_input_grad);
                Ok((dx, Some((dw, db))))
            }
            (Layer::Dropout(_), Cache::Dropout { mask }) => {
                let mut dx = dy;
                if let Some(mask) = mask {
                    for (v, m) in dx.data_mut().iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                Ok((Some(dx), None))
            }
            (Layer::Softmax, Cache::Softmax { output }) => {
                Ok((Some(softmax_backward(output, &dy)), None))
            }
            _ => bail!(State, "cache does not belong to a {} layer", self.kind_name()),
        }
    }
}

fn rank3(shape: &[usize], who: &str) -> Result<[usize; 3]> {
    match *shape {
        [h, w, c] => Ok([h, w, c]),
        _ => bail!(Dimension, "{} expects (rows, cols, channels), got {:?}", who, shape),
    }
}

fn activate(v: &mut [f64], act: Activation) {
    if act == Activation::Relu {
        v.iter_mut().for_each(|x| {
            if *x < 0.0 {
                *x = 0.0
            }
        });
    }
}

fn conv_forward(c: &Conv2D, x: &Tensor) -> Result<Tensor> {
    let [h, w, cin] = rank3(x.shape(), "Conv2D")?;
    if cin != c.in_channels {
        bail!(Dimension, "Conv2D expects {} channels, got {}", c.in_channels, cin);
    }
    let (kh, kw) = c.kernel;
    if kh > h || kw > w {
        bail!(Range, "input {}x{} smaller than kernel {}x{}", h, w, kh, kw);
    }
    let (oh, ow, cout) = (h - kh + 1, w - kw + 1, c.filters);
    let xd = x.data();
    let wd = c.weight.data();
    let bias = c.bias.data();
    let span = kw * cin;
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * cout..][..cout];
            acc.copy_from_slice(bias);
            for ky in 0..kh {
                let xs = &xd[((oy + ky) * w + ox) * cin..][..span];
                let ws = &wd[ky * span * cout..][..span * cout];
                for (t, &xv) in xs.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let wr = &ws[t * cout..][..cout];
                    for (a, &wv) in acc.iter_mut().zip(wr) {
                        *a += xv * wv;
                    }
                }
            }
        }
    }
    activate(&mut out, c.activation);
    Tensor::from_vec(&[oh, ow, cout], out)
}

fn conv_backward(
    c: &Conv2D,
    x: &Tensor,
    y: &Tensor,
    mut dy: Tensor,
    need_dx: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    if c.activation == Activation::Relu {
        for (g, &v) in dy.data_mut().iter_mut().zip(y.data()) {
            if v <= 0.0 {
                *g = 0.0;
            }
        }
    }
    let (w, cin) = (x.shape()[1], x.shape()[2]);
    let (oh, ow, cout) = (y.shape()[0], y.shape()[1], y.shape()[2]);
    let (kh, kw) = c.kernel;
    let span = kw * cin;
    let xd = x.data();
    let wd = c.weight.data();
    let mut dw = Tensor::zeros(c.weight.shape());
    let mut db = Tensor::zeros(c.bias.shape());
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
    let dwd = dw.data_mut();
    let dbd = db.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            let g = &dy.data()[(oy * ow + ox) * cout..][..cout];
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (b, &gv) in dbd.iter_mut().zip(g) {
                *b += gv;
            }
            for ky in 0..kh {
                let base = ((oy + ky) * w + ox) * cin;
                let xs = &xd[base..][..span];
                let dws = &mut dwd[ky * span * cout..][..span * cout];
                for (t, &xv) in xs.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    for (d, &gv) in dws[t * cout..][..cout].iter_mut().zip(g) {
                        *d += xv * gv;
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    let ws = &wd[ky * span * cout..][..span * cout];
                    let dxs = &mut dx.data_mut()[base..][..span];
                    for (t, d) in dxs.iter_mut().enumerate() {
                        let wr = &ws[t * cout..][..cout];
                        *d += wr.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

fn pool_forward(pool: usize, x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [h, w, c] = rank3(x.shape(), "MaxPool2D")?;
    if pool > h || pool > w {
        bail!(Range, "input {}x{} smaller than pool {}", h, w, pool);
    }
    let (oh, ow) = (h / pool, w / pool);
    let xd = x.data();
    let mut out = vec![0.0; oh * ow * c];
    let mut argmax = vec![0usize; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut at = 0;
                for py in 0..pool {
                    for px in 0..pool {
                        let i = ((oy * pool + py) * w + ox * pool + px) * c + ch;
                        if xd[i] > best {
                            best = xd[i];
                            at = i;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out[o] = best;
                argmax[o] = at;
            }
        }
    }
    Ok((Tensor::from_vec(&[oh, ow, c], out)?, argmax))
}

fn dense_forward(d: &Dense, x: &Tensor) -> Result<Tensor> {
    if x.shape() != [d.inputs] {
        bail!(Dimension, "Dense expects [{}], got {:?}", d.inputs, x.shape());
    }
    let mut out = d.bias.data().to_vec();
    let wd = d.weight.data();
    for (i, &xv) in x.data().iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&wd[i * d.units..][..d.units]) {
            *o += xv * wv;
        }
    }
    activate(&mut out, d.activation);
    Tensor::from_vec(&[d.units], out)
}

fn dense_backward(
    d: &Dense,
    x: &Tensor,
    y: &Tensor,
    mut dy: Tensor,
    need_dx: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    if d.activation == Activation::Relu {
        for (g, &v) in dy.data_mut().iter_mut().zip(y.data()) {
            if v <= 0.0 {
                *g = 0.0;
            }
        }
    }
    let g = dy.data();
    let mut dw = Tensor::zeros(d.weight.shape());
    let dwd = dw.data_mut();
    for (i, &xv) in x.data().iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, &gv) in dwd[i * d.units..][..d.units].iter_mut().zip(g) {
            *o += xv * gv;
        }
    }
    let db = dy.clone();
    let dx = need_dx.then(|| {
        let wd = d.weight.data();
        let data = (0..d.inputs)
            .map(|i| wd[i * d.units..][..d.units].iter().zip(g).map(|(a, b)| a * b).sum())
            .collect();
        Tensor::from_vec(&[d.inputs], data).expect("dense dx")
    });
    (dx, dw, db)
}

/// Softmax over the last axis of any-rank tensor.
pub(crate) fn softmax_last_axis(mut x: Tensor) -> Tensor {
    let n = *x.shape().last().expect("non-empty shape");
    for row in x.data_mut().chunks_mut(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    x
}

fn softmax_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let n = *y.shape().last().expect("non-empty shape");
    let mut dx = dy.clone();
    for (d, p) in dx.data_mut().chunks_mut(n).zip(y.data().chunks(n)) {
        let dot: f64 = d.iter().zip(p).map(|(a, b)| a * b).sum();
        for (dv, &pv) in d.iter_mut().zip(p) {
            *dv = pv * (*dv - dot);
        }
    }
    dx
}

/// Stable textual tag for a layer, used by the weights container.
pub fn layer_tag(layer: &Layer) -> String {
    let act = |a: Activation| match a {
        Activation::Linear => "linear",
        Activation::Relu => "relu",
    };
    match layer {
        Layer::Conv2D(c) => format!("conv2d:{}", act(c.activation)),
        Layer::MaxPool2D { pool } => format!("maxpool2d:{}", pool),
        Layer::Flatten => "flatten".into(),
        Layer::Dense(d) => format!("dense:{}", act(d.activation)),
        Layer::Dropout(d) => format!("dropout:{}", d.rate),
        Layer::Softmax => "softmax".into(),
    }
}
