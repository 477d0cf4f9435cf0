use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, Mode, Model, NnError, Real, Tensor};
use crate::features::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patience: usize,
    pub max_epochs: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_updates: Option<usize>,
    /// Share of the train split held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            adam: AdamConfig::default(),
            patience: 15,
            max_epochs: 200,
            max_updates: None,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be at least 1"));
        }
        if self.patience == 0 {
            return Err(NnError::InvalidConfig("patience must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(NnError::InvalidConfig("max_epochs must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(NnError::InvalidConfig(
                "validation_fraction must be in [0, 1)",
            ));
        }
        Ok(())
    }
}

/// Feature matrices paired with standardized six-vectors.
#[derive(Clone, Copy, Debug)]
pub struct Samples<'a> {
    pub inputs: &'a [&'a FeatureMatrix],
    pub targets: &'a [[f64; 6]],
}

impl Samples<'_> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub updates: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    MaxUpdates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) whose weights were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop: StopReason,
}

/// Tracks the best validation loss; signals a stop after `patience`
/// consecutive epochs without strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Returns true when `loss` is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            true
        } else {
            self.wait += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.wait >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// `(B, 1, frames, coeffs)` batch; every matrix must have the same shape.
pub fn stack_features<T: Real>(inputs: &[&FeatureMatrix]) -> Result<Tensor<T>, NnError> {
    let first = inputs.first().ok_or(NnError::EmptySplit("batch"))?;
    let (rows, cols) = (first.rows(), first.cols());
    let mut data = Vec::with_capacity(inputs.len() * rows * cols);
    for m in inputs {
        if (m.rows(), m.cols()) != (rows, cols) {
            return Err(NnError::ShapeMismatch(format!(
                "batch mixes {}×{} and {}×{} features",
                rows,
                cols,
                m.rows(),
                m.cols()
            )));
        }
        data.extend(m.values().iter().map(|&v| T::lit(v as f64)));
    }
    Tensor::new(vec![inputs.len(), 1, rows, cols], data)
}

/// Mean over batch and outputs of the squared error, and its gradient.
pub fn mse_loss<T: Real>(
    pred: &Tensor<T>,
    targets: &[[f64; 6]],
) -> Result<(f64, Tensor<T>), NnError> {
    if pred.shape() != [targets.len(), 6] {
        return Err(NnError::ShapeMismatch(format!(
            "predictions {:?} vs {} targets",
            pred.shape(),
            targets.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape().to_vec());
    for ((p, g), t) in pred
        .data()
        .iter()
        .zip(grad.data_mut())
        .zip(targets.iter().flatten())
    {
        let e = p.as_f64() - t;
        loss += e * e;
        *g = T::lit(2.0 * e / n);
    }
    Ok((loss / n, grad))
}

/// One optimizer update on a batch; returns the pre-step loss.
pub fn train_step<T: Real>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    x: Tensor<T>,
    targets: &[[f64; 6]],
    rng: &mut ChaCha8Rng,
) -> Result<f64, NnError> {
    model.zero_grad();
    let pred = model.forward(x, Mode::Train, rng)?;
    let (loss, grad) = mse_loss(&pred, targets)?;
    if !loss.is_finite() {
        return Err(NnError::NonFiniteLoss(adam.steps() as usize + 1));
    }
    model.backward(grad);
    adam.step(model);
    Ok(loss)
}

/// Raw network outputs in batches of `batch`.
pub fn predict_raw<T: Real>(
    model: &Model<T>,
    inputs: &[&FeatureMatrix],
    batch: usize,
) -> Result<Vec<[f64; 6]>, NnError> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch.max(1)) {
        let y = model.predict(stack_features(chunk)?)?;
        for row in y.data().chunks_exact(6) {
            out.push(core::array::from_fn(|k| row[k].as_f64()));
        }
    }
    Ok(out)
}

/// Inference-mode MSE over a split.
pub fn evaluate_mse<T: Real>(
    model: &Model<T>,
    s: Samples<'_>,
    batch: usize,
) -> Result<f64, NnError> {
    let pred = predict_raw(model, s.inputs, batch)?;
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(s.targets) {
        sum += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(sum / (6 * pred.len()) as f64)
}

/// Seeded partition of `0..n` into `(train, validation)` with `round(n·fraction)`
/// held out, at least one each side when `n ≥ 2`. Both lists are sorted.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((n as f64 * fraction).round() as usize).min(n);
    let k = if n >= 2 { k.clamp(1, n - 1) } else { k };
    let mut val = idx.split_off(n - k);
    idx.sort_unstable();
    val.sort_unstable();
    (idx, val)
}

/// Seeded mini-batch training with early stopping on `val`. On return the
/// model holds the weights of the best validation epoch.
pub fn train<T: Real>(
    model: &mut Model<T>,
    train: Samples<'_>,
    val: Samples<'_>,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, NnError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(NnError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(NnError::EmptySplit("validation"));
    }
    if train.inputs.len() != train.targets.len() || val.inputs.len() != val.targets.len() {
        return Err(NnError::ShapeMismatch(
            "inputs and targets differ in count".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.snapshot();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut updates = 0usize;
    let mut stop = StopReason::MaxEpochs;
    let mut batch_inputs = Vec::with_capacity(cfg.batch_size);
    let mut batch_targets = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        let mut capped = false;
        for idx in order.chunks(cfg.batch_size) {
            batch_inputs.clear();
            batch_targets.clear();
            for &i in idx {
                batch_inputs.push(train.inputs[i]);
                batch_targets.push(train.targets[i]);
            }
            let x = stack_features(&batch_inputs)?;
            let loss = train_step(model, &mut adam, x, &batch_targets, &mut rng)?;
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
            updates += 1;
            if cfg.max_updates.is_some_and(|m| updates >= m) {
                capped = true;
                break;
            }
        }
        let val_loss = evaluate_mse(model, val, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(NnError::NonFiniteLoss(updates));
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss,
            updates,
        };
        on_epoch(&record);
        history.push(record);
        if stopper.observe(epoch, val_loss) {
            best = model.snapshot();
        }
        if capped {
            stop = StopReason::MaxUpdates;
            break;
        }
        if stopper.should_stop() {
            stop = StopReason::Patience;
            break;
        }
    }
    model.restore(&best);
    Ok(TrainOutcome {
        history,
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Fingerprint;
    use crate::nn::{LayerSpec, ModelKind, ModelSpec};
    use rand::Rng;

    #[test]
    fn validation_split_sizes() {
        let (t, v) = validation_split(100, 0.1, 3);
        assert_eq!((t.len(), v.len()), (90, 10));
        assert!(t.iter().all(|i| !v.contains(i)));
        assert_eq!(validation_split(100, 0.1, 3), (t, v));
        assert_eq!(validation_split(5, 0.1, 0).1.len(), 1);
        assert_eq!(validation_split(1, 0.5, 0).1.len(), 1);
    }

    #[test]
    fn increasing_validation_stops_at_epoch_sixteen() {
        let mut es = EarlyStopping::new(15);
        let mut stopped = None;
        for epoch in 1..100 {
            es.observe(epoch, epoch as f64);
            if es.should_stop() {
                stopped = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped, Some(16));
        assert_eq!(es.best_epoch(), 1);
    }

    fn toy_set(
        n: usize,
        frames: usize,
        coeffs: usize,
        seed: u64,
    ) -> (Vec<FeatureMatrix>, Vec<[f64; 6]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut feats = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..n {
            let v: Vec<f32> = (0..frames * coeffs)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let mean = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
            targets.push(core::array::from_fn(|k| {
                mean * (k as f64 + 1.0) + rng.random_range(-0.5..0.5)
            }));
            feats.push(FeatureMatrix::new(
                frames,
                coeffs,
                v,
                Fingerprint::default(),
            ));
        }
        (feats, targets)
    }

    #[test]
    fn loss_decreases_on_fixed_batch() {
        let (feats, targets) = toy_set(8, 16, 8, 1);
        let refs: Vec<&FeatureMatrix> = feats.iter().collect();
        let spec = ModelSpec {
            name: "small".into(),
            input_frames: 16,
            input_coeffs: 8,
            layers: vec![
                LayerSpec::Conv2d {
                    kernel: 3,
                    filters: 4,
                },
                LayerSpec::BatchNorm,
                LayerSpec::Activation {
                    act: crate::nn::Act::Elu,
                },
                LayerSpec::MaxPool,
                LayerSpec::TimeFlatten,
                LayerSpec::Gru {
                    units: 8,
                    return_sequences: false,
                },
                LayerSpec::Dense { units: 6 },
            ],
        };
        let mut model = Model::<f32>::new(spec, 3).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut losses = Vec::new();
        for _ in 0..50 {
            let x = stack_features(&refs).unwrap();
            losses.push(train_step(&mut model, &mut adam, x, &targets, &mut rng).unwrap());
        }
        assert!(
            losses[49] < 0.5 * losses[0],
            "{} -> {}",
            losses[0],
            losses[49]
        );
    }

    #[test]
    fn training_is_deterministic_and_restores_best() {
        let (feats, targets) = toy_set(12, 32, 16, 2);
        let refs: Vec<&FeatureMatrix> = feats.iter().collect();
        let spec = ModelSpec::new(ModelKind::Crnn, 32, 16, 0.2);
        let cfg = TrainConfig {
            batch_size: 4,
            max_epochs: 4,
            patience: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = Model::<f32>::new(spec.clone(), 1).unwrap();
            let s = Samples {
                inputs: &refs[..8],
                targets: &targets[..8],
            };
            let v = Samples {
                inputs: &refs[8..],
                targets: &targets[8..],
            };
            let out = train(&mut m, s, v, &cfg, &mut |_| {}).unwrap();
            let val = evaluate_mse(&m, v, 4).unwrap();
            (out, val)
        };
        let (a, va) = run();
        let (b, _) = run();
        assert_eq!(a.history, b.history);
        assert_eq!(va, a.best_val_loss);
        assert_eq!(a.history[a.best_epoch - 1].val_loss, a.best_val_loss);
    }

    #[test]
    fn update_cap_and_empty_splits() {
        let (feats, targets) = toy_set(4, 32, 16, 3);
        let refs: Vec<&FeatureMatrix> = feats.iter().collect();
        let spec = ModelSpec::new(ModelKind::Crnn, 32, 16, 0.0);
        let mut m = Model::<f32>::new(spec, 1).unwrap();
        let s = Samples {
            inputs: &refs,
            targets: &targets,
        };
        let cfg = TrainConfig {
            batch_size: 1,
            max_updates: Some(6),
            ..TrainConfig::default()
        };
        let out = train(&mut m, s, s, &cfg, &mut |_| {}).unwrap();
        assert_eq!(out.stop, StopReason::MaxUpdates);
        assert_eq!(out.history.last().unwrap().updates, 6);
        let empty = Samples {
            inputs: &[],
            targets: &[],
        };
        assert_eq!(
            train(&mut m, empty, s, &cfg, &mut |_| {}).unwrap_err(),
            NnError::EmptySplit("train")
        );
    }
}
