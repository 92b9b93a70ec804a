//! Minimal deterministic neural-network engine.
//!
//! Supports 2-D same-padding convolutions, average pooling, dense layers,
//! ReLU, inverted dropout, and a terminal regression layer trained with MSE
//! loss and SGD-with-momentum. Everything is driven by explicit seeds:
//! initialization, batch shuffling, and dropout masks are bit-reproducible,
//! and frozen layers are never touched by training.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use train::{train, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SeedRng};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Dense real tensor in height x width x channels layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Tensor {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_fn(h: usize, w: usize, c: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor::zeros(h, w, c);
        for i in 0..h {
            for j in 0..w {
                for k in 0..c {
                    t.data[(i * w + j) * c + k] = f(i, j, k);
                }
            }
        }
        t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.w + j) * self.c + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.w + j) * self.c + k] = v;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// One layer descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Same-padding stride-1 convolution.
    Conv { filters: usize, kh: usize, kw: usize },
    /// Non-overlapping average pooling by an integer factor.
    Pool { factor: usize },
    Dense { units: usize },
    Relu,
    Dropout { rate: f64 },
    /// Terminal linear layer; the training loss is MSE on its output.
    Regression { outputs: usize },
}

/// Ordered layer stack plus the input shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl NetSpec {
    /// Channel-estimation stack: two convolutions and two dropout-guarded
    /// dense layers in front of the regression output.
    pub fn channel_estimator(
        input_shape: (usize, usize, usize),
        outputs: usize,
        conv_filters: usize,
        dense1: usize,
        dense2: usize,
    ) -> Self {
        NetSpec {
            input_shape,
            layers: vec![
                LayerSpec::Conv { filters: conv_filters, kh: 3, kw: 3 },
                LayerSpec::Relu,
                LayerSpec::Conv { filters: conv_filters, kh: 3, kw: 3 },
                LayerSpec::Relu,
                LayerSpec::Dense { units: dense1 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { units: dense2 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Regression { outputs },
            ],
        }
    }

    /// Beamformer stack: as [`Self::channel_estimator`] but with pooling
    /// after each convolution.
    pub fn beamformer(
        input_shape: (usize, usize, usize),
        outputs: usize,
        conv_filters: usize,
        dense1: usize,
        dense2: usize,
    ) -> Self {
        NetSpec {
            input_shape,
            layers: vec![
                LayerSpec::Conv { filters: conv_filters, kh: 3, kw: 3 },
                LayerSpec::Relu,
                LayerSpec::Pool { factor: 2 },
                LayerSpec::Conv { filters: conv_filters, kh: 3, kw: 3 },
                LayerSpec::Relu,
                LayerSpec::Pool { factor: 2 },
                LayerSpec::Dense { units: dense1 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { units: dense2 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Regression { outputs },
            ],
        }
    }

    /// Infers the per-layer output shapes and validates the chain.
    pub fn shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape;
        if cur.0 == 0 || cur.1 == 0 || cur.2 == 0 {
            return Err(Error::invalid("input shape must be non-degenerate"));
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            let terminal = idx + 1 == self.layers.len();
            match *layer {
                LayerSpec::Conv { filters, kh, kw } => {
                    if filters == 0 || kh == 0 || kw == 0 {
                        return Err(Error::invalid("conv needs positive filters and kernel"));
                    }
                    cur = (cur.0, cur.1, filters);
                }
                LayerSpec::Pool { factor } => {
                    if factor == 0 || cur.0 % factor != 0 || cur.1 % factor != 0 {
                        return Err(Error::invalid(format!(
                            "pool factor {factor} must divide {}x{}",
                            cur.0, cur.1
                        )));
                    }
                    cur = (cur.0 / factor, cur.1 / factor, cur.2);
                }
                LayerSpec::Dense { units } => {
                    if units == 0 {
                        return Err(Error::invalid("dense needs positive units"));
                    }
                    cur = (1, 1, units);
                }
                LayerSpec::Relu => {}
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::invalid("dropout rate must be in [0, 1)"));
                    }
                }
                LayerSpec::Regression { outputs } => {
                    if outputs == 0 {
                        return Err(Error::invalid("regression needs positive outputs"));
                    }
                    if !terminal {
                        return Err(Error::invalid("regression must be the terminal layer"));
                    }
                    cur = (1, 1, outputs);
                }
            }
            shapes.push(cur);
        }
        match self.layers.last() {
            Some(LayerSpec::Regression { .. }) => Ok(shapes),
            _ => Err(Error::invalid("network must end with a regression layer")),
        }
    }

    pub fn output_dim(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        let (h, w, c) = *shapes.last().unwrap();
        Ok(h * w * c)
    }
}

/// A parameterized network: flat parameter vector with per-layer views and
/// per-layer trainability flags.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNet {
    pub spec: NetSpec,
    pub params: Vec<f64>,
    /// Per-layer frozen flags; frozen layers receive zero gradient and are
    /// bitwise invariant under training.
    pub frozen: Vec<bool>,
    layer_ranges: Vec<Range<usize>>,
    shapes: Vec<(usize, usize, usize)>,
}

fn fan_dims(layer: &LayerSpec, in_shape: (usize, usize, usize)) -> (usize, usize) {
    match *layer {
        LayerSpec::Conv { filters, kh, kw } => (kh * kw * in_shape.2, kh * kw * filters),
        LayerSpec::Dense { units } => (in_shape.0 * in_shape.1 * in_shape.2, units),
        LayerSpec::Regression { outputs } => (in_shape.0 * in_shape.1 * in_shape.2, outputs),
        _ => (0, 0),
    }
}

fn param_count(layer: &LayerSpec, in_shape: (usize, usize, usize)) -> usize {
    match *layer {
        LayerSpec::Conv { filters, kh, kw } => filters * kh * kw * in_shape.2 + filters,
        LayerSpec::Dense { units } => in_shape.0 * in_shape.1 * in_shape.2 * units + units,
        LayerSpec::Regression { outputs } => in_shape.0 * in_shape.1 * in_shape.2 * outputs + outputs,
        _ => 0,
    }
}

impl NeuralNet {
    /// Glorot-uniform initialization, deterministic in the seed.
    pub fn init(spec: NetSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = rng_from_seed(seed);
        let mut params = Vec::new();
        let mut layer_ranges = Vec::with_capacity(spec.layers.len());
        let mut in_shape = spec.input_shape;
        for (idx, layer) in spec.layers.iter().enumerate() {
            let start = params.len();
            let count = param_count(layer, in_shape);
            if count > 0 {
                let (fan_in, fan_out) = fan_dims(layer, in_shape);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let biases = match *layer {
                    LayerSpec::Conv { filters, .. } => filters,
                    LayerSpec::Dense { units } => units,
                    LayerSpec::Regression { outputs } => outputs,
                    _ => 0,
                };
                for _ in 0..count - biases {
                    params.push((rng.random::<f64>() * 2.0 - 1.0) * limit);
                }
                params.extend(std::iter::repeat_n(0.0, biases));
            }
            layer_ranges.push(start..params.len());
            in_shape = shapes[idx];
        }
        Ok(NeuralNet {
            frozen: vec![false; spec.layers.len()],
            spec,
            params,
            layer_ranges,
            shapes,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layer_params(&self, layer: usize) -> &[f64] {
        &self.params[self.layer_ranges[layer].clone()]
    }

    pub fn layer_range(&self, layer: usize) -> Range<usize> {
        self.layer_ranges[layer].clone()
    }

    /// Freezes every convolutional layer (the environment-invariant lower
    /// stack); dense and regression layers stay trainable.
    pub fn freeze_conv_layers(&mut self) {
        for (i, layer) in self.spec.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::Conv { .. }) {
                self.frozen[i] = true;
            }
        }
    }

    /// Inference pass (dropout disabled).
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.forward(x, false, 0)
    }

    /// Forward pass; dropout is active only in train mode and is a
    /// deterministic function of the seed.
    pub fn forward(&self, x: &Tensor, train_mode: bool, seed: u64) -> Result<Vec<f64>> {
        let trace = self.forward_trace(x, train_mode, seed)?;
        Ok(trace.output().data.clone())
    }

    pub(crate) fn forward_trace(&self, x: &Tensor, train_mode: bool, seed: u64) -> Result<Trace> {
        if x.shape() != self.spec.input_shape {
            return Err(Error::dims(format!(
                "input shape {:?} does not match spec {:?}",
                x.shape(),
                self.spec.input_shape
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut activations = vec![x.clone()];
        let mut masks: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.spec.layers.len());
        for (idx, layer) in self.spec.layers.iter().enumerate() {
            let input = activations.last().unwrap();
            let (out, mask) = self.apply_layer(idx, layer, input, train_mode, &mut rng)?;
            activations.push(out);
            masks.push(mask);
        }
        Ok(Trace { activations, masks })
    }

    fn apply_layer(
        &self,
        idx: usize,
        layer: &LayerSpec,
        input: &Tensor,
        train_mode: bool,
        rng: &mut SeedRng,
    ) -> Result<(Tensor, Option<Vec<f64>>)> {
        let params = self.layer_params(idx);
        let out = match *layer {
            LayerSpec::Conv { filters, kh, kw } => conv_forward(input, params, filters, kh, kw),
            LayerSpec::Pool { factor } => pool_forward(input, factor),
            LayerSpec::Dense { units } | LayerSpec::Regression { outputs: units } => {
                dense_forward(input, params, units)
            }
            LayerSpec::Relu => {
                let mut t = input.clone();
                for v in &mut t.data {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                t
            }
            LayerSpec::Dropout { rate } => {
                // Draw the mask in train mode only; inverted scaling keeps
                // the inference pass rescale-free.
                if train_mode && rate > 0.0 {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = (0..input.len())
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    let mut t = input.clone();
                    for (v, m) in t.data.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    return Ok((t, Some(mask)));
                }
                input.clone()
            }
        };
        Ok((out, None))
    }

    /// Gradient of the MSE loss against `target` with respect to all
    /// parameters; entries of frozen layers are exactly zero. Uses the same
    /// dropout masks as a forward pass with the given seed.
    pub fn backward(
        &self,
        x: &Tensor,
        target: &[f64],
        train_mode: bool,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let trace = self.forward_trace(x, train_mode, seed)?;
        self.backward_from_trace(&trace, target).map(|(g, _)| g)
    }

    /// MSE loss for one sample in inference mode.
    pub fn loss(&self, x: &Tensor, target: &[f64]) -> Result<f64> {
        let out = self.predict(x)?;
        mse(&out, target)
    }

    pub(crate) fn backward_from_trace(&self, trace: &Trace, target: &[f64]) -> Result<(Vec<f64>, f64)> {
        let output = trace.output();
        if output.len() != target.len() {
            return Err(Error::dims(format!(
                "target length {} does not match output {}",
                target.len(),
                output.len()
            )));
        }
        let n_out = output.len() as f64;
        let loss = mse(&output.data, target)?;

        let mut grad = vec![0.0; self.params.len()];
        // dL/dy for L = mean((y - t)^2).
        let mut upstream = Tensor {
            h: output.h,
            w: output.w,
            c: output.c,
            data: output
                .data
                .iter()
                .zip(target)
                .map(|(y, t)| 2.0 * (y - t) / n_out)
                .collect(),
        };

        for idx in (0..self.spec.layers.len()).rev() {
            let input = &trace.activations[idx];
            let range = self.layer_ranges[idx].clone();
            let params = &self.params[range.clone()];
            let frozen = self.frozen[idx];
            let layer = &self.spec.layers[idx];
            let (g_params, g_input) = match *layer {
                LayerSpec::Conv { filters, kh, kw } => {
                    conv_backward(input, params, filters, kh, kw, &upstream)
                }
                LayerSpec::Pool { factor } => (Vec::new(), pool_backward(input, factor, &upstream)),
                LayerSpec::Dense { units } | LayerSpec::Regression { outputs: units } => {
                    dense_backward(input, params, units, &upstream)
                }
                LayerSpec::Relu => {
                    let mut g = upstream.clone();
                    g.h = input.h;
                    g.w = input.w;
                    g.c = input.c;
                    for (gv, iv) in g.data.iter_mut().zip(&input.data) {
                        if *iv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    (Vec::new(), g)
                }
                LayerSpec::Dropout { .. } => {
                    let mut g = upstream.clone();
                    g.h = input.h;
                    g.w = input.w;
                    g.c = input.c;
                    if let Some(mask) = &trace.masks[idx] {
                        for (gv, m) in g.data.iter_mut().zip(mask) {
                            *gv *= m;
                        }
                    }
                    (Vec::new(), g)
                }
            };
            if !frozen && !g_params.is_empty() {
                grad[range].copy_from_slice(&g_params);
            }
            upstream = g_input;
        }
        Ok((grad, loss))
    }
}

pub(crate) struct Trace {
    /// activations[0] is the input; activations[i + 1] is layer i's output.
    activations: Vec<Tensor>,
    masks: Vec<Option<Vec<f64>>>,
}

impl Trace {
    pub(crate) fn output(&self) -> &Tensor {
        self.activations.last().unwrap()
    }
}

pub fn mse(output: &[f64], target: &[f64]) -> Result<f64> {
    if output.len() != target.len() {
        return Err(Error::dims("MSE length mismatch"));
    }
    let n = output.len() as f64;
    Ok(output
        .iter()
        .zip(target)
        .map(|(y, t)| (y - t) * (y - t))
        .sum::<f64>()
        / n)
}

fn conv_forward(input: &Tensor, params: &[f64], filters: usize, kh: usize, kw: usize) -> Tensor {
    let (h, w, c) = input.shape();
    let pad_t = (kh - 1) / 2;
    let pad_l = (kw - 1) / 2;
    let w_len = filters * kh * kw * c;
    let (weights, biases) = params.split_at(w_len);
    let mut out = Tensor::zeros(h, w, filters);
    for i in 0..h {
        for j in 0..w {
            for f in 0..filters {
                let mut acc = biases[f];
                let base = f * kh * kw * c;
                for di in 0..kh {
                    let si = i as isize + di as isize - pad_t as isize;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for dj in 0..kw {
                        let sj = j as isize + dj as isize - pad_l as isize;
                        if sj < 0 || sj >= w as isize {
                            continue;
                        }
                        let in_off = ((si as usize) * w + sj as usize) * c;
                        let w_off = base + (di * kw + dj) * c;
                        for k in 0..c {
                            acc += input.data[in_off + k] * weights[w_off + k];
                        }
                    }
                }
                out.data[(i * w + j) * filters + f] = acc;
            }
        }
    }
    out
}

fn conv_backward(
    input: &Tensor,
    params: &[f64],
    filters: usize,
    kh: usize,
    kw: usize,
    upstream: &Tensor,
) -> (Vec<f64>, Tensor) {
    let (h, w, c) = input.shape();
    let pad_t = (kh - 1) / 2;
    let pad_l = (kw - 1) / 2;
    let w_len = filters * kh * kw * c;
    let weights = &params[..w_len];
    let mut g_params = vec![0.0; params.len()];
    let (g_weights, g_biases) = g_params.split_at_mut(w_len);
    let mut g_input = Tensor::zeros(h, w, c);
    for i in 0..h {
        for j in 0..w {
            for f in 0..filters {
                let g = upstream.data[(i * w + j) * filters + f];
                if g == 0.0 {
                    continue;
                }
                g_biases[f] += g;
                let base = f * kh * kw * c;
                for di in 0..kh {
                    let si = i as isize + di as isize - pad_t as isize;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for dj in 0..kw {
                        let sj = j as isize + dj as isize - pad_l as isize;
                        if sj < 0 || sj >= w as isize {
                            continue;
                        }
                        let in_off = ((si as usize) * w + sj as usize) * c;
                        let w_off = base + (di * kw + dj) * c;
                        for k in 0..c {
                            g_weights[w_off + k] += g * input.data[in_off + k];
                            g_input.data[in_off + k] += g * weights[w_off + k];
                        }
                    }
                }
            }
        }
    }
    (g_params, g_input)
}

fn pool_forward(input: &Tensor, factor: usize) -> Tensor {
    let (h, w, c) = input.shape();
    let (oh, ow) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Tensor::zeros(oh, ow, c);
    for i in 0..oh {
        for j in 0..ow {
            for k in 0..c {
                let mut acc = 0.0;
                for di in 0..factor {
                    for dj in 0..factor {
                        acc += input.get(i * factor + di, j * factor + dj, k);
                    }
                }
                out.set(i, j, k, acc * norm);
            }
        }
    }
    out
}

fn pool_backward(input: &Tensor, factor: usize, upstream: &Tensor) -> Tensor {
    let (h, w, c) = input.shape();
    let norm = 1.0 / (factor * factor) as f64;
    let mut g = Tensor::zeros(h, w, c);
    for i in 0..upstream.h {
        for j in 0..upstream.w {
            for k in 0..c {
                let v = upstream.get(i, j, k) * norm;
                for di in 0..factor {
                    for dj in 0..factor {
                        g.set(i * factor + di, j * factor + dj, k, v);
                    }
                }
            }
        }
    }
    g
}

fn dense_forward(input: &Tensor, params: &[f64], units: usize) -> Tensor {
    let n_in = input.len();
    let (weights, biases) = params.split_at(n_in * units);
    let mut out = Tensor::zeros(1, 1, units);
    for (i, &x) in input.data.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let row = &weights[i * units..(i + 1) * units];
        for (u, wv) in row.iter().enumerate() {
            out.data[u] += x * wv;
        }
    }
    for (u, b) in biases.iter().enumerate() {
        out.data[u] += b;
    }
    out
}

fn dense_backward(
    input: &Tensor,
    params: &[f64],
    units: usize,
    upstream: &Tensor,
) -> (Vec<f64>, Tensor) {
    let n_in = input.len();
    let weights = &params[..n_in * units];
    let mut g_params = vec![0.0; params.len()];
    {
        let (g_weights, g_biases) = g_params.split_at_mut(n_in * units);
        for (i, &x) in input.data.iter().enumerate() {
            if x != 0.0 {
                let row = &mut g_weights[i * units..(i + 1) * units];
                for (u, gv) in upstream.data.iter().enumerate() {
                    row[u] += x * gv;
                }
            }
        }
        for (u, gv) in upstream.data.iter().enumerate() {
            g_biases[u] += gv;
        }
    }
    let mut g_input = Tensor {
        h: input.h,
        w: input.w,
        c: input.c,
        data: vec![0.0; n_in],
    };
    for i in 0..n_in {
        let row = &weights[i * units..(i + 1) * units];
        let mut acc = 0.0;
        for (u, gv) in upstream.data.iter().enumerate() {
            acc += row[u] * gv;
        }
        g_input.data[i] = acc;
    }
    (g_params, g_input)
}

#[cfg(test)]
mod tests;
