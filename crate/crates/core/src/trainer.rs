//! Mini-batch training with Adam, a validation carve-out and early stopping
//! on validation loss.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::features::{one_hot, EncodedDataset};
use crate::labeler::TriLabel;
use crate::model::{labels_from_probs, Model};
use crate::nncore::layers::Mode;
use crate::nncore::loss::cross_entropy_of_probs;
use crate::nncore::tensor::{Scalar, Tensor};
use crate::seed::{stage, stage_rng};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-7,
            patience: 2,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("validation fraction {} outside (0, 1)", self.val_fraction));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("Adam epsilon must be positive".into());
        }
        Ok(())
    }
}

/// First and second moment estimates per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S = f32> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new<'a, I>(shapes: I) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let m: Vec<Tensor<S>> = shapes.into_iter().map(Tensor::zeros).collect();
        AdamState {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn for_model(model: &Model<S>) -> Self {
        Self::new(model.params().iter().map(|(_, t)| t.shape()))
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step<S: Scalar>(
    params: Vec<&mut Tensor<S>>,
    grads: &[Tensor<S>],
    state: &mut AdamState<S>,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "Adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        g.expect_shape(p.shape(), "Adam gradient")?;
        state.m[i].expect_shape(p.shape(), "Adam first moment")?;
        if let Some(j) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter tensor {i} at element {j} (step {})",
                state.t + 1
            )));
        }
    }

    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let correction1 = 1.0 - b1.powi(state.t as i32);
    let correction2 = 1.0 - b2.powi(state.t as i32);
    let (lr, eps) = (config.learning_rate, config.adam_epsilon);
    for (i, (param, grad)) in params.into_iter().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((p, g), mi), vi) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let g = g.to_f64();
            let m_new = b1 * mi.to_f64() + (1.0 - b1) * g;
            let v_new = b2 * vi.to_f64() + (1.0 - b2) * g * g;
            *mi = S::from_f64(m_new);
            *vi = S::from_f64(v_new);
            let m_hat = m_new / correction1;
            let v_hat = v_new / correction2;
            *p = S::from_f64(p.to_f64() - lr * m_hat / (v_hat.sqrt() + eps));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    /// Last epoch run, 1-based.
    pub stopped_epoch: usize,
    /// Epoch with the lowest validation loss, 1-based.
    pub best_epoch: usize,
    /// True when patience ran out before the epoch budget.
    pub early_stopped: bool,
}

impl History {
    /// `epoch,train_loss,train_acc,val_loss,val_acc` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for (i, e) in self.epochs.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                i + 1,
                e.train_loss,
                e.train_acc,
                e.val_loss,
                e.val_acc
            ));
        }
        out
    }
}

/// Patience rule on validation loss: an epoch improves when its loss is
/// strictly below the best so far; training stops once `patience`
/// consecutive epochs fail to improve.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Records `val_loss` for 1-based `epoch`; returns true when training
    /// should stop.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.wait = 0;
            false
        } else {
            self.wait += 1;
            self.wait >= self.patience
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Epoch driver shared by [`train`] and tests: calls `run_epoch` for
/// 1-based epochs until the budget is spent or patience runs out.
pub fn fit_loop(
    epochs: usize,
    patience: usize,
    mut run_epoch: impl FnMut(usize) -> Result<EpochStats>,
) -> Result<History> {
    let mut stopper = EarlyStopping::new(patience);
    let mut history = Vec::with_capacity(epochs);
    let mut early_stopped = false;
    for epoch in 1..=epochs {
        let stats = run_epoch(epoch)?;
        history.push(stats);
        if stopper.observe(epoch, stats.val_loss) {
            early_stopped = epoch < epochs;
            break;
        }
    }
    Ok(History {
        stopped_epoch: history.len(),
        best_epoch: stopper.best_epoch(),
        epochs: history,
        early_stopped,
    })
}

pub fn one_hot_targets<S: Scalar>(labels: &[TriLabel]) -> Tensor<S> {
    let values: Vec<f64> = labels
        .iter()
        .flat_map(|&l| one_hot(l).0.map(f64::from))
        .collect();
    Tensor::from_f64(&[labels.len(), 3], &values).expect("three columns per label")
}

const EVAL_BATCH: usize = 256;

/// Eval-mode mean cross-entropy and accuracy.
pub fn evaluate_loss_acc<S: Scalar>(model: &Model<S>, data: &EncodedDataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let mut loss_sum = 0f64;
    let mut correct = 0usize;
    let order: Vec<usize> = (0..data.len()).collect();
    for chunk in order.chunks(EVAL_BATCH) {
        let batch = data.select(chunk);
        let probs = model.probabilities(&batch.ids, chunk.len())?;
        loss_sum += cross_entropy_of_probs(&probs, &one_hot_targets(&batch.labels))? * chunk.len() as f64;
        correct += labels_from_probs(&probs)
            .iter()
            .zip(&batch.labels)
            .filter(|(p, t)| p == t)
            .count();
    }
    let n = data.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

/// Trains `model` in place. The last `val_fraction` of a seeded shuffle of
/// `data` is held out for validation; the remainder is reshuffled each
/// epoch and fed in mini-batches (the final short batch included). The
/// weights at the stopping epoch are kept.
pub fn train(model: &mut Model<f32>, data: &EncodedDataset, config: &TrainConfig) -> Result<History> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if data.seq_len != model.config().maxlen {
        return Err(Error::Shape(format!(
            "training sequences have length {}, model expects {}",
            data.seq_len,
            model.config().maxlen
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut stage_rng(config.seed, stage::VALIDATION));
    let n_val = (config.val_fraction * data.len() as f64).round() as usize;
    if n_val == 0 || n_val >= data.len() {
        return Err(Error::Empty(format!(
            "validation carve-out of {n_val} from {} examples leaves an empty partition",
            data.len()
        )));
    }
    let val_rows = order.split_off(data.len() - n_val);
    let val = data.select(&val_rows);
    let mut train_rows = order;

    let mut adam = AdamState::for_model(model);
    let mut shuffle_rng = stage_rng(config.seed, stage::EPOCH_SHUFFLE);
    let mut dropout_rng = stage_rng(config.seed, stage::DROPOUT);

    fit_loop(config.epochs, config.patience, |epoch| {
        train_rows.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0f64;
        let mut correct = 0usize;
        for chunk in train_rows.chunks(config.batch_size) {
            let batch = data.select(chunk);
            let targets = one_hot_targets(&batch.labels);
            let pass = model.forward_pass(&batch.ids, chunk.len(), Mode::Train, &mut dropout_rng)?;
            let loss = cross_entropy_of_probs(&pass.probs, &targets)?;
            let grads = model.backward(&pass, &targets)?;
            adam_step(model.params_mut(), &grads, &mut adam, config)?;
            loss_sum += loss * chunk.len() as f64;
            correct += labels_from_probs(&pass.probs)
                .iter()
                .zip(&batch.labels)
                .filter(|(p, t)| p == t)
                .count();
        }
        let n = train_rows.len() as f64;
        let (val_loss, val_acc) = evaluate_loss_acc(model, &val)?;
        let stats = EpochStats {
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss,
            val_acc,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4}",
            stats.train_loss,
            stats.train_acc,
            stats.val_loss,
            stats.val_acc
        );
        Ok(stats)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(val_loss: f64) -> EpochStats {
        EpochStats {
            train_loss: 0.0,
            train_acc: 0.0,
            val_loss,
            val_acc: 0.0,
        }
    }

    fn run(losses: &[f64], epochs: usize, patience: usize) -> History {
        fit_loop(epochs, patience, |e| Ok(stats(losses[e - 1]))).unwrap()
    }

    #[test]
    fn patience_trace() {
        let h = run(&[0.9, 0.8, 0.85, 0.9, 0.7], 5, 2);
        assert_eq!(h.stopped_epoch, 4);
        assert_eq!(h.best_epoch, 2);
        assert!(h.early_stopped);
        assert_eq!(h.epochs.len(), 4);
    }

    #[test]
    fn improving_runs_everything() {
        let h = run(&[0.9, 0.8, 0.7, 0.6, 0.5], 5, 2);
        assert_eq!((h.stopped_epoch, h.best_epoch, h.early_stopped), (5, 5, false));
        let h = run(&[0.5, 0.6, 0.7, 0.8, 0.9], 5, 5);
        assert_eq!((h.stopped_epoch, h.best_epoch), (5, 1));
    }

    #[test]
    fn zero_patience_stops_on_first_stall() {
        let h = run(&[0.9, 0.95, 0.1], 3, 0);
        assert_eq!((h.stopped_epoch, h.best_epoch), (2, 1));
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = Tensor::<f32>::zeros(&[1]);
        let g = Tensor::from_f64(&[1], &[0.5]).unwrap();
        let mut st = AdamState::new([p.shape()]);
        adam_step(vec![&mut p], &[g], &mut st, &TrainConfig::default()).unwrap();
        // m̂ = g, v̂ = g², step = lr · g / (|g| + ε)
        let expected = -1e-3 * 0.5 / (0.5 + 1e-7);
        assert!((p.data()[0] as f64 - expected).abs() < 1e-9);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_bitwise_noop() {
        let mut p = Tensor::from_f64(&[3], &[0.1, -2.5, 7.0]).unwrap();
        let before = p.clone();
        let mut st = AdamState::<f32>::new([p.shape()]);
        adam_step(vec![&mut p], &[Tensor::zeros(&[3])], &mut st, &TrainConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn equal_gradients_equal_updates() {
        let mut p = Tensor::<f32>::from_f64(&[2], &[0.3, 0.3]).unwrap();
        let g = Tensor::from_f64(&[2], &[-0.2, -0.2]).unwrap();
        let mut st = AdamState::new([p.shape()]);
        for _ in 0..3 {
            adam_step(vec![&mut p], std::slice::from_ref(&g), &mut st, &TrainConfig::default()).unwrap();
        }
        assert_eq!(p.data()[0], p.data()[1]);
        assert!(st.v[0].data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = Tensor::<f32>::zeros(&[2]);
        let g = Tensor::new(vec![2], vec![0.0, f32::NAN]).unwrap();
        let mut st = AdamState::new([p.shape()]);
        let err = adam_step(vec![&mut p], &[g], &mut st, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(st.t, 0);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.val_fraction = 1.0;
        assert!(c.validate().is_err());
        let c = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn history_csv() {
        let h = run(&[0.9, 0.8], 2, 2);
        let csv = h.to_csv();
        assert!(csv.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n1,"));
        assert_eq!(csv.lines().count(), 3);
    }
}
