//! Central finite-difference verification of hand-written backward passes.
//!
//! Checks run on `f64` instantiations of the layers so that the numeric
//! derivative is limited by truncation error rather than storage rounding.
//! The scalar objective for a layer is `Σ r ⊙ forward(x)` with a fixed
//! pseudo-random projection `r`, which makes every output element matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::Layer;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Anything whose trainable tensors can be perturbed in place.
pub trait Parameterized {
    fn parameter_tensors(&mut self) -> Vec<&mut Tensor<f64>>;
}

impl<L: Layer<f64>> Parameterized for L {
    fn parameter_tensors(&mut self) -> Vec<&mut Tensor<f64>> {
        self.params_mut()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn projection(len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn project(out: &Tensor<f64>, weights: &[f64]) -> f64 {
    out.data().iter().zip(weights).map(|(a, b)| a * b).sum()
}

/// Max relative error between `analytic` and central differences of
/// `objective` over every element of every parameter tensor of `target`.
pub fn check_parameters<M: Parameterized>(
    target: &mut M,
    analytic: &[Tensor<f64>],
    epsilon: f64,
    objective: impl Fn(&M) -> Result<f64>,
) -> Result<f64> {
    let shapes: Vec<Vec<usize>> = target
        .parameter_tensors()
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    if shapes.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors but {} analytic gradients",
            shapes.len(),
            analytic.len()
        )));
    }
    let mut worst = 0f64;
    for (p, (shape, grad)) in shapes.iter().zip(analytic).enumerate() {
        grad.expect_shape(shape, "analytic gradient")?;
        for i in 0..grad.len() {
            let original = target.parameter_tensors()[p].data()[i];
            let mut eval = |v: f64| {
                target.parameter_tensors()[p].data_mut()[i] = v;
                objective(target)
            };
            let plus = eval(original + epsilon)?;
            let minus = eval(original - epsilon)?;
            target.parameter_tensors()[p].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
    }
    Ok(worst)
}

/// Max relative error of `layer`'s backward pass against central finite
/// differences, over the input (when differentiable) and all parameters.
///
/// The layer must be deterministic: dropout only as [`super::FixedDropout`].
pub fn gradient_check<L: Layer<f64>>(
    layer: &mut L,
    input: &Tensor<f64>,
    epsilon: f64,
) -> Result<f64> {
    let out = layer.forward(input)?;
    let weights = projection(out.len());
    let upstream = Tensor::new(out.shape().to_vec(), weights.clone())?;
    let grads = layer.backward(input, &upstream)?;
    grads.input_grad.expect_shape(input.shape(), "input gradient")?;

    let mut worst = 0f64;
    if layer.input_is_differentiable() {
        let mut probe = input.clone();
        for i in 0..probe.len() {
            let original = probe.data()[i];
            probe.data_mut()[i] = original + epsilon;
            let plus = project(&layer.forward(&probe)?, &weights);
            probe.data_mut()[i] = original - epsilon;
            let minus = project(&layer.forward(&probe)?, &weights);
            probe.data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(grads.input_grad.data()[i], numeric));
        }
    }

    let analytic: Vec<Tensor<f64>> = grads.param_grads.into_iter().map(|(_, t)| t).collect();
    let param_worst = check_parameters(layer, &analytic, epsilon, |l| {
        Ok(project(&l.forward(input)?, &weights))
    })?;
    Ok(worst.max(param_worst))
}
