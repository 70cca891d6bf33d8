//! The text-CNN: embedding → dropout → conv1d+relu → global max pool →
//! dense+relu → dropout → dense → softmax.

mod file;

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::features::PaddedSequence;
use crate::labeler::TriLabel;
use crate::nncore::gradcheck::Parameterized;
use crate::nncore::layers::{
    check_dropout_rate, dropout, global_max_pool1d, global_max_pool1d_backward, relu,
    relu_backward, Conv1d, Dense, DropoutMask, Embedding, Layer, Mode,
};
use crate::nncore::loss::{softmax, softmax_cross_entropy_backward};
use crate::nncore::tensor::{Scalar, Tensor};
use crate::seed::{stage, stage_rng};

pub use file::{load_model, read_model, save_model, write_model, MAGIC, FORMAT_VERSION};

pub const NUM_CLASSES: usize = 3;

/// Architecture hyperparameters. Defaults reproduce the published stack.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub maxlen: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub hidden: usize,
    pub classes: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 5000,
            embed_dim: 50,
            maxlen: 400,
            filters: 250,
            kernel_size: 3,
            hidden: 250,
            classes: NUM_CLASSES,
            dropout: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("maxlen", self.maxlen),
            ("filters", self.filters),
            ("kernel_size", self.kernel_size),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.kernel_size > self.maxlen {
            return Err(Error::InvalidArgument(format!(
                "kernel size {} exceeds sequence length {}",
                self.kernel_size, self.maxlen
            )));
        }
        if self.classes != NUM_CLASSES {
            return Err(Error::InvalidArgument(format!(
                "classes must be {NUM_CLASSES}, got {}",
                self.classes
            )));
        }
        check_dropout_rate(self.dropout)
    }

    pub fn conv_len(&self) -> usize {
        self.maxlen - self.kernel_size + 1
    }

    /// Parameter tensor names and shapes, in storage order.
    pub fn tensor_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        vec![
            ("embedding.table", vec![self.vocab_size, self.embed_dim]),
            ("conv1d.kernels", vec![self.kernel_size, self.embed_dim, self.filters]),
            ("conv1d.bias", vec![self.filters]),
            ("dense.weight", vec![self.filters, self.hidden]),
            ("dense.bias", vec![self.hidden]),
            ("dense_1.weight", vec![self.hidden, self.classes]),
            ("dense_1.bias", vec![self.classes]),
        ]
    }
}

/// Per-layer trainable parameter counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub embedding: usize,
    pub conv: usize,
    pub dense: usize,
    pub output: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.embedding + self.conv + self.dense + self.output
    }
}

pub fn param_count(config: &ModelConfig) -> ParamCounts {
    let c = config;
    ParamCounts {
        embedding: c.vocab_size * c.embed_dim,
        conv: c.kernel_size * c.embed_dim * c.filters + c.filters,
        dense: c.filters * c.hidden + c.hidden,
        output: c.hidden * c.classes + c.classes,
    }
}

/// One row of a layer summary table (batch dimension omitted).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: &'static str,
    pub kind: &'static str,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

/// Layer table with activations folded into the preceding layer.
pub fn layer_summary(config: &ModelConfig) -> Vec<LayerSummary> {
    let counts = param_count(config);
    let row = |name, kind, output_shape, params| LayerSummary {
        name,
        kind,
        output_shape,
        params,
    };
    vec![
        row("embedding", "Embedding", vec![config.maxlen, config.embed_dim], counts.embedding),
        row("dropout", "Dropout", vec![config.maxlen, config.embed_dim], 0),
        row("conv1d", "Conv1D", vec![config.conv_len(), config.filters], counts.conv),
        row("global_max_pooling1d", "GlobalMaxPooling1D", vec![config.filters], 0),
        row("dense", "Dense", vec![config.hidden], counts.dense),
        row("dropout_1", "Dropout", vec![config.hidden], 0),
        row("dense_1", "Dense", vec![config.classes], counts.output),
    ]
}

/// The network's parameters. `S` is `f32` in production; `f64` copies are
/// used by the gradient checker.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<S = f32> {
    config: ModelConfig,
    pub embedding: Embedding<S>,
    pub conv: Conv1d<S>,
    pub hidden: Dense<S>,
    pub output: Dense<S>,
}

fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform_tensor<R: Rng>(shape: &[usize], limit: f64, rng: &mut R) -> Tensor<f32> {
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::from_f64(shape, &values).expect("shape matches")
}

/// Builds a freshly initialised model from the `init` stream of `seed`.
///
/// Embedding rows are uniform in [−0.05, 0.05]; conv and dense weights are
/// Glorot-uniform; biases start at zero.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model<f32>> {
    config.validate()?;
    let c = config;
    let mut rng = stage_rng(seed, stage::INIT);
    let table = uniform_tensor(&[c.vocab_size, c.embed_dim], 0.05, &mut rng);
    let kernels = uniform_tensor(
        &[c.kernel_size, c.embed_dim, c.filters],
        glorot_limit(c.kernel_size * c.embed_dim, c.kernel_size * c.filters),
        &mut rng,
    );
    let hidden = uniform_tensor(&[c.filters, c.hidden], glorot_limit(c.filters, c.hidden), &mut rng);
    let output = uniform_tensor(&[c.hidden, c.classes], glorot_limit(c.hidden, c.classes), &mut rng);
    Ok(Model {
        config: config.clone(),
        embedding: Embedding::new(table)?,
        conv: Conv1d::new(kernels, Tensor::zeros(&[c.filters]))?,
        hidden: Dense::new(hidden, Tensor::zeros(&[c.hidden]))?,
        output: Dense::new(output, Tensor::zeros(&[c.classes]))?,
    })
}

/// Intermediate activations of one forward pass, kept for backward.
#[derive(Clone, Debug)]
pub struct ForwardPass<S = f32> {
    pub ids: Vec<u32>,
    pub batch: usize,
    embed_mask: Option<DropoutMask>,
    conv_input: Tensor<S>,
    conv_pre: Tensor<S>,
    conv_act: Tensor<S>,
    pooled: Tensor<S>,
    hidden_pre: Tensor<S>,
    hidden_mask: Option<DropoutMask>,
    hidden_out: Tensor<S>,
    pub logits: Tensor<S>,
    pub probs: Tensor<S>,
}

/// Index of the largest value, earliest on exact ties.
pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

impl<S: Scalar> Model<S> {
    /// Assemble from explicit parameter tensors (storage order).
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<S>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.tensor_shapes();
        if tensors.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            t.expect_shape(shape, name)?;
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        Ok(Model {
            embedding: Embedding::new(next())?,
            conv: Conv1d::new(next(), next())?,
            hidden: Dense::new(next(), next())?,
            output: Dense::new(next(), next())?,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Parameter tensors in storage order.
    pub fn params(&self) -> Vec<(&'static str, &Tensor<S>)> {
        let names = self.config.tensor_shapes();
        let tensors = [
            &self.embedding.table,
            &self.conv.kernels,
            &self.conv.bias,
            &self.hidden.weight,
            &self.hidden.bias,
            &self.output.weight,
            &self.output.bias,
        ];
        names.into_iter().map(|(n, _)| n).zip(tensors).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![
            &mut self.embedding.table,
            &mut self.conv.kernels,
            &mut self.conv.bias,
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }

    /// Elements actually allocated across all parameter tensors.
    pub fn allocated_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> Model<T> {
        Model {
            config: self.config.clone(),
            embedding: Embedding { table: self.embedding.table.cast() },
            conv: Conv1d { kernels: self.conv.kernels.cast(), bias: self.conv.bias.cast() },
            hidden: Dense { weight: self.hidden.weight.cast(), bias: self.hidden.bias.cast() },
            output: Dense { weight: self.output.weight.cast(), bias: self.output.bias.cast() },
        }
    }

    /// Runs the stack on a flattened `batch × maxlen` id block. `rng` feeds
    /// both dropout layers and is untouched in eval mode.
    pub fn forward_pass<R: Rng + ?Sized>(
        &self,
        ids: &[u32],
        batch: usize,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardPass<S>> {
        let c = &self.config;
        let embedded = self.embedding.forward_ids(ids, batch, c.maxlen)?;
        let (conv_input, embed_mask) = dropout(&embedded, c.dropout, mode, rng)?;
        let conv_pre = self.conv.forward(&conv_input)?;
        let conv_act = relu(&conv_pre);
        let pooled = global_max_pool1d(&conv_act)?;
        let hidden_pre = self.hidden.forward(&pooled)?;
        let (hidden_out, hidden_mask) = dropout(&relu(&hidden_pre), c.dropout, mode, rng)?;
        let logits = self.output.forward(&hidden_out)?;
        let probs = softmax(&logits)?;
        Ok(ForwardPass {
            ids: ids.to_vec(),
            batch,
            embed_mask,
            conv_input,
            conv_pre,
            conv_act,
            pooled,
            hidden_pre,
            hidden_mask,
            hidden_out,
            logits,
            probs,
        })
    }

    /// Gradients of mean cross-entropy against one-hot `targets`, in
    /// storage order.
    pub fn backward(&self, pass: &ForwardPass<S>, targets: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
        let g_logits = softmax_cross_entropy_backward(&pass.probs, targets)?;
        let out = self.output.backward(&pass.hidden_out, &g_logits)?;
        let g_hidden_act = match &pass.hidden_mask {
            Some(mask) => mask.apply(&out.input_grad)?,
            None => out.input_grad,
        };
        let g_hidden_pre = relu_backward(&pass.hidden_pre, &g_hidden_act)?;
        let hidden = self.hidden.backward(&pass.pooled, &g_hidden_pre)?;
        let g_conv_act = global_max_pool1d_backward(&pass.conv_act, &hidden.input_grad)?;
        let g_conv_pre = relu_backward(&pass.conv_pre, &g_conv_act)?;
        let conv = self.conv.backward(&pass.conv_input, &g_conv_pre)?;
        let g_embedded = match &pass.embed_mask {
            Some(mask) => mask.apply(&conv.input_grad)?,
            None => conv.input_grad,
        };
        let g_table = self.embedding.backward_ids(&pass.ids, &g_embedded)?;

        let mut grads = vec![g_table];
        grads.extend(conv.param_grads.into_iter().map(|(_, t)| t));
        grads.extend(hidden.param_grads.into_iter().map(|(_, t)| t));
        grads.extend(out.param_grads.into_iter().map(|(_, t)| t));
        Ok(grads)
    }

    fn flatten(&self, batch: &[PaddedSequence]) -> Result<Vec<u32>> {
        let mut ids = Vec::with_capacity(batch.len() * self.config.maxlen);
        for seq in batch {
            if seq.len() != self.config.maxlen {
                return Err(Error::Shape(format!(
                    "sequence length {} does not match model maxlen {}",
                    seq.len(),
                    self.config.maxlen
                )));
            }
            ids.extend_from_slice(seq.ids());
        }
        Ok(ids)
    }

    /// Class probabilities, `B×3`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &[PaddedSequence],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Tensor<S>> {
        let ids = self.flatten(batch)?;
        Ok(self.forward_pass(&ids, batch.len(), mode, rng)?.probs)
    }

    /// Eval-mode probabilities for a flattened id block.
    pub fn probabilities(&self, ids: &[u32], batch: usize) -> Result<Tensor<S>> {
        // eval mode draws nothing
        let mut unused = crate::seed::StageRng::seed_from_u64(0);
        Ok(self.forward_pass(ids, batch, Mode::Eval, &mut unused)?.probs)
    }

    pub fn predict_ids(&self, ids: &[u32], batch: usize) -> Result<Vec<TriLabel>> {
        let probs = self.probabilities(ids, batch)?;
        Ok(labels_from_probs(&probs))
    }

    pub fn predict(&self, batch: &[PaddedSequence]) -> Result<Vec<TriLabel>> {
        let ids = self.flatten(batch)?;
        self.predict_ids(&ids, batch.len())
    }
}

/// Argmax of each row mapped to (−1, 0, 1).
pub fn labels_from_probs<S: Scalar>(probs: &Tensor<S>) -> Vec<TriLabel> {
    let classes = probs.shape().last().copied().unwrap_or(NUM_CLASSES);
    probs
        .data()
        .chunks(classes)
        .map(|row| TriLabel::from_index(argmax(row)).expect("three classes"))
        .collect()
}

impl Parameterized for Model<f64> {
    fn parameter_tensors(&mut self) -> Vec<&mut Tensor<f64>> {
        self.params_mut()
    }
}
