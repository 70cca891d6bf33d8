//! Hand-derived forward and backward passes for the text-CNN layers.
//!
//! Batched activations are laid out `B×T×C` (batch, time, channel) or `B×N`.
//! Every reduction accumulates in `f64` in a fixed order and rounds once at
//! store, so results do not depend on thread count.

use rand::Rng;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Gradients produced by one backward pass.
#[derive(Clone, Debug)]
pub struct LayerGrad<S = f32> {
    pub input_grad: Tensor<S>,
    pub param_grads: Vec<(&'static str, Tensor<S>)>,
}

/// A layer with a hand-written backward pass.
pub trait Layer<S: Scalar> {
    fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>>;

    /// Gradients of `Σ grad_output ⊙ forward(input)` with respect to the input
    /// and every parameter.
    fn backward(&self, input: &Tensor<S>, grad_output: &Tensor<S>) -> Result<LayerGrad<S>>;

    fn params(&self) -> Vec<(&'static str, &Tensor<S>)> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        Vec::new()
    }

    /// False when the input is discrete (token ids).
    fn input_is_differentiable(&self) -> bool {
        true
    }
}

/// Forward or inference behaviour for stochastic layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

// ---------------------------------------------------------------------------
// Embedding

/// Lookup table `V×D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<S = f32> {
    pub table: Tensor<S>,
}

impl<S: Scalar> Embedding<S> {
    pub fn new(table: Tensor<S>) -> Result<Self> {
        table.expect_rank(2, "embedding table")?;
        Ok(Embedding { table })
    }

    pub fn vocab_size(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    /// `ids` is a flattened `batch×len` block.
    pub fn forward_ids(&self, ids: &[u32], batch: usize, len: usize) -> Result<Tensor<S>> {
        if ids.len() != batch * len || batch == 0 || len == 0 {
            return Err(Error::Shape(format!(
                "embedding input: {} ids for batch {batch} × length {len}",
                ids.len()
            )));
        }
        let (vocab, dim) = (self.vocab_size(), self.dim());
        let table = self.table.data();
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            let id = id as usize;
            if id >= vocab {
                return Err(Error::IdOutOfRange { id, vocab });
            }
            out.extend_from_slice(&table[id * dim..(id + 1) * dim]);
        }
        Tensor::new(vec![batch, len, dim], out)
    }

    /// Scatter-add of upstream rows into a table-shaped gradient.
    pub fn backward_ids(&self, ids: &[u32], grad_output: &Tensor<S>) -> Result<Tensor<S>> {
        let dim = self.dim();
        if grad_output.len() != ids.len() * dim {
            return Err(Error::Shape(format!(
                "embedding backward: {} upstream values for {} ids of dim {dim}",
                grad_output.len(),
                ids.len()
            )));
        }
        let vocab = self.vocab_size();
        let mut acc = vec![0f64; vocab * dim];
        let upstream = grad_output.data();
        for (pos, &id) in ids.iter().enumerate() {
            let id = id as usize;
            if id >= vocab {
                return Err(Error::IdOutOfRange { id, vocab });
            }
            let row = &mut acc[id * dim..(id + 1) * dim];
            for (a, g) in row.iter_mut().zip(&upstream[pos * dim..(pos + 1) * dim]) {
                *a += g.to_f64();
            }
        }
        Tensor::from_f64(&[vocab, dim], &acc)
    }
}

fn ids_from_tensor<S: Scalar>(input: &Tensor<S>) -> Result<(Vec<u32>, usize, usize)> {
    input.expect_rank(2, "embedding input")?;
    let ids = input
        .data()
        .iter()
        .map(|v| {
            let x = v.to_f64();
            if x < 0.0 || x.fract() != 0.0 {
                Err(Error::InvalidArgument(format!("token id {x} is not a non-negative integer")))
            } else {
                Ok(x as u32)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ids, input.shape()[0], input.shape()[1]))
}

/// Token ids travel as an integer-valued `B×L` tensor through this impl.
impl<S: Scalar> Layer<S> for Embedding<S> {
    fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        let (ids, b, l) = ids_from_tensor(input)?;
        self.forward_ids(&ids, b, l)
    }

    fn backward(&self, input: &Tensor<S>, grad_output: &Tensor<S>) -> Result<LayerGrad<S>> {
        let (ids, _, _) = ids_from_tensor(input)?;
        let table = self.backward_ids(&ids, grad_output)?;
        Ok(LayerGrad {
            input_grad: Tensor::zeros(input.shape()),
            param_grads: vec![("table", table)],
        })
    }

    fn params(&self) -> Vec<(&'static str, &Tensor<S>)> {
        vec![("table", &self.table)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.table]
    }

    fn input_is_differentiable(&self) -> bool {
        false
    }
}

// ---------------------------------------------------------------------------
// Conv1d

/// Valid, stride-1 convolution over time. Kernels are `K×C×F`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<S = f32> {
    pub kernels: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Conv1d<S> {
    pub fn new(kernels: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        kernels.expect_rank(3, "conv kernels")?;
        bias.expect_shape(&[kernels.shape()[2]], "conv bias")?;
        Ok(Conv1d { kernels, bias })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn filters(&self) -> usize {
        self.kernels.shape()[2]
    }

    fn check_input(&self, input: &Tensor<S>) -> Result<(usize, usize, usize)> {
        input.expect_rank(3, "conv input")?;
        let (b, l, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "conv input has {c} channels, kernels expect {}",
                self.channels()
            )));
        }
        if l < self.kernel_size() {
            return Err(Error::Shape(format!(
                "conv input length {l} shorter than kernel size {}",
                self.kernel_size()
            )));
        }
        Ok((b, l, l - self.kernel_size() + 1))
    }
}

impl<S: Scalar> Layer<S> for Conv1d<S> {
    fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        let (batch, len, out_len) = self.check_input(input)?;
        let (k_size, channels, filters) = (self.kernel_size(), self.channels(), self.filters());
        let x = input.data();
        let w = self.kernels.data();
        let bias: Vec<f64> = self.bias.to_f64_vec();
        let mut out = Vec::with_capacity(batch * out_len * filters);
        let mut acc = vec![0f64; filters];
        for b in 0..batch {
            let xb = &x[b * len * channels..(b + 1) * len * channels];
            for t in 0..out_len {
                acc.copy_from_slice(&bias);
                for k in 0..k_size {
                    let row = &xb[(t + k) * channels..(t + k + 1) * channels];
                    for (c, xv) in row.iter().enumerate() {
                        let xv = xv.to_f64();
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &w[(k * channels + c) * filters..(k * channels + c + 1) * filters];
                        for (a, wv) in acc.iter_mut().zip(wrow) {
                            *a += xv * wv.to_f64();
                        }
                    }
                }
                out.extend(acc.iter().map(|&a| S::from_f64(a)));
            }
        }
        Tensor::new(vec![batch, out_len, filters], out)
    }

    fn backward(&self, input: &Tensor<S>, grad_output: &Tensor<S>) -> Result<LayerGrad<S>> {
        let (batch, len, out_len) = self.check_input(input)?;
        let (k_size, channels, filters) = (self.kernel_size(), self.channels(), self.filters());
        grad_output.expect_shape(&[batch, out_len, filters], "conv upstream gradient")?;
        let x = input.data();
        let w = self.kernels.data();
        let g = grad_output.data();

        let mut gx = vec![0f64; batch * len * channels];
        let mut gw = vec![0f64; k_size * channels * filters];
        let mut gb = vec![0f64; filters];
        // Upstream gradients after max pooling are mostly zero; visit only the
        // non-zero (t, f) cells.
        let mut live: Vec<(usize, f64)> = Vec::with_capacity(filters);
        for b in 0..batch {
            for t in 0..out_len {
                let grow = &g[(b * out_len + t) * filters..(b * out_len + t + 1) * filters];
                live.clear();
                live.extend(
                    grow.iter()
                        .enumerate()
                        .map(|(f, v)| (f, v.to_f64()))
                        .filter(|&(_, v)| v != 0.0),
                );
                if live.is_empty() {
                    continue;
                }
                for &(f, gv) in &live {
                    gb[f] += gv;
                }
                for k in 0..k_size {
                    let xrow = (b * len + t + k) * channels;
                    for c in 0..channels {
                        let xv = x[xrow + c].to_f64();
                        let base = (k * channels + c) * filters;
                        let mut dx = 0f64;
                        for &(f, gv) in &live {
                            gw[base + f] += xv * gv;
                            dx += w[base + f].to_f64() * gv;
                        }
                        gx[xrow + c] += dx;
                    }
                }
            }
        }
        Ok(LayerGrad {
            input_grad: Tensor::from_f64(&[batch, len, channels], &gx)?,
            param_grads: vec![
                ("kernels", Tensor::from_f64(&[k_size, channels, filters], &gw)?),
                ("bias", Tensor::from_f64(&[filters], &gb)?),
            ],
        })
    }

    fn params(&self) -> Vec<(&'static str, &Tensor<S>)> {
        vec![("kernels", &self.kernels), ("bias", &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.kernels, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// Dense

/// Fully connected layer, `out = x·W + b` with `W` of shape `N×M`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<S = f32> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Dense<S> {
    pub fn new(weight: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        weight.expect_rank(2, "dense weight")?;
        bias.expect_shape(&[weight.shape()[1]], "dense bias")?;
        Ok(Dense { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    fn check_input(&self, input: &Tensor<S>) -> Result<usize> {
        input.expect_rank(2, "dense input")?;
        if input.shape()[1] != self.inputs() {
            return Err(Error::Shape(format!(
                "dense input width {} does not match weight rows {}",
                input.shape()[1],
                self.inputs()
            )));
        }
        Ok(input.shape()[0])
    }
}

impl<S: Scalar> Layer<S> for Dense<S> {
    fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        let batch = self.check_input(input)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let x = input.data();
        let w = self.weight.data();
        let bias = self.bias.to_f64_vec();
        let mut out = Vec::with_capacity(batch * n_out);
        let mut acc = vec![0f64; n_out];
        for b in 0..batch {
            acc.copy_from_slice(&bias);
            for (n, xv) in x[b * n_in..(b + 1) * n_in].iter().enumerate() {
                let xv = xv.to_f64();
                if xv == 0.0 {
                    continue;
                }
                for (a, wv) in acc.iter_mut().zip(&w[n * n_out..(n + 1) * n_out]) {
                    *a += xv * wv.to_f64();
                }
            }
            out.extend(acc.iter().map(|&a| S::from_f64(a)));
        }
        Tensor::new(vec![batch, n_out], out)
    }

    fn backward(&self, input: &Tensor<S>, grad_output: &Tensor<S>) -> Result<LayerGrad<S>> {
        let batch = self.check_input(input)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        grad_output.expect_shape(&[batch, n_out], "dense upstream gradient")?;
        let x = input.data();
        let w = self.weight.data();
        let g = grad_output.data();

        let mut gx = vec![0f64; batch * n_in];
        let mut gw = vec![0f64; n_in * n_out];
        let mut gb = vec![0f64; n_out];
        for b in 0..batch {
            let grow: Vec<f64> = g[b * n_out..(b + 1) * n_out].iter().map(|v| v.to_f64()).collect();
            for (a, gv) in gb.iter_mut().zip(&grow) {
                *a += gv;
            }
            for n in 0..n_in {
                let xv = x[b * n_in + n].to_f64();
                let wrow = &w[n * n_out..(n + 1) * n_out];
                let gwrow = &mut gw[n * n_out..(n + 1) * n_out];
                let mut dx = 0f64;
                for m in 0..n_out {
                    gwrow[m] += xv * grow[m];
                    dx += wrow[m].to_f64() * grow[m];
                }
                gx[b * n_in + n] = dx;
            }
        }
        Ok(LayerGrad {
            input_grad: Tensor::from_f64(&[batch, n_in], &gx)?,
            param_grads: vec![
                ("weight", Tensor::from_f64(&[n_in, n_out], &gw)?),
                ("bias", Tensor::from_f64(&[n_out], &gb)?),
            ],
        })
    }

    fn params(&self) -> Vec<(&'static str, &Tensor<S>)> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// ReLU

#[derive(Clone, Copy, Debug, Default)]
pub struct Relu;

pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// The gradient at exactly zero is zero.
pub fn relu_backward<S: Scalar>(input: &Tensor<S>, grad_output: &Tensor<S>) -> Result<Tensor<S>> {
    grad_output.expect_shape(input.shape(), "relu upstream gradient")?;
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(x, g)| if x.to_f64() > 0.0 { *g } else { S::default() })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

impl<S: Scalar> Layer<S> for Relu {
    fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(relu(input))
    }

    fn backward(&self, input: &Tensor<S>, grad_output: &Tensor<S>) -> Result<LayerGrad<S>> {
        Ok(LayerGrad {
            input_grad: relu_backward(input, grad_output)?,
            param_grads: Vec::new(),
        })
    }
}

// ---------------------------------------------------------------------------
// Global max pooling over time

#[derive(Clone, Copy, Debug, Default)]
pub struct GlobalMaxPool1d;

/// Earliest index of the maximum for every `(b, f)`; shape `B×F`.
fn argmax_over_time<S: Scalar>(x: &Tensor<S>) -> Result<(usize, usize, usize, Vec<usize>)> {
    x.expect_rank(3, "max-pool input")?;
    let (batch, steps, feats) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let data = x.data();
    let mut arg = vec![0usize; batch * feats];
    for b in 0..batch {
        let best = &mut arg[b * feats..(b + 1) * feats];
        for t in 1..steps {
            let row = &data[(b * steps + t) * feats..(b * steps + t + 1) * feats];
            for f in 0..feats {
                let cur = data[(b * steps + best[f]) * feats + f];
                if row[f] > cur {
                    best[f] = t;
                }
            }
        }
    }
    Ok((batch, steps, feats, arg))
}

pub fn global_max_pool1d<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let (batch, steps, feats, arg) = argmax_over_time(x)?;
    let data = x.data();
    let out = (0..batch * feats)
        .map(|i| {
            let (b, f) = (i / feats, i % feats);
            data[(b * steps + arg[i]) * feats + f]
        })
        .collect();
    Tensor::new(vec![batch, feats], out)
}

/// Routes each pooled gradient to the earliest argmax position.
pub fn global_max_pool1d_backward<S: Scalar>(
    input: &Tensor<S>,
    grad_output: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (batch, steps, feats, arg) = argmax_over_time(input)?;
    grad_output.expect_shape(&[batch, feats], "max-pool upstream gradient")?;
    let mut out = Tensor::zeros(input.shape());
    let g = grad_output.data();
    let dst = out.data_mut();
    for i in 0..batch * feats {
        let (b, f) = (i / feats, i % feats);
        dst[(b * steps + arg[i]) * feats + f] = g[i];
    }
    Ok(out)
}

impl<S: Scalar> Layer<S> for GlobalMaxPool1d {
    fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        global_max_pool1d(input)
    }

    fn backward(&self, input: &Tensor<S>, grad_output: &Tensor<S>) -> Result<LayerGrad<S>> {
        Ok(LayerGrad {
            input_grad: global_max_pool1d_backward(input, grad_output)?,
            param_grads: Vec::new(),
        })
    }
}

// ---------------------------------------------------------------------------
// Dropout

/// Kept-unit mask and survivor scale from one train-mode dropout draw.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub scale: f64,
}

impl DropoutMask {
    pub fn apply<S: Scalar>(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        if x.len() != self.keep.len() {
            return Err(Error::Shape(format!(
                "dropout mask has {} units, tensor has {}",
                self.keep.len(),
                x.len()
            )));
        }
        let data = x
            .data()
            .iter()
            .zip(&self.keep)
            .map(|(v, &k)| if k { S::from_f64(v.to_f64() * self.scale) } else { S::default() })
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }
}

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout. Eval mode and rate 0 are the identity and draw nothing
/// from `rng`; train mode returns the mask so backward can reuse it.
pub fn dropout<S: Scalar, R: Rng + ?Sized>(
    x: &Tensor<S>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<S>, Option<DropoutMask>)> {
    check_dropout_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep: Vec<bool> = (0..x.len()).map(|_| rng.random::<f64>() >= rate).collect();
    let mask = DropoutMask {
        keep,
        scale: 1.0 / (1.0 - rate),
    };
    Ok((mask.apply(x)?, Some(mask)))
}

/// Dropout with a frozen mask, usable as a deterministic [`Layer`].
#[derive(Clone, Debug)]
pub struct FixedDropout {
    pub mask: DropoutMask,
}

impl<S: Scalar> Layer<S> for FixedDropout {
    fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        self.mask.apply(input)
    }

    fn backward(&self, _input: &Tensor<S>, grad_output: &Tensor<S>) -> Result<LayerGrad<S>> {
        Ok(LayerGrad {
            input_grad: self.mask.apply(grad_output)?,
            param_grads: Vec::new(),
        })
    }
}
