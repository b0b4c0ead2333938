//! Momentum SGD, the training loop and its CSV log.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::network::{Gradients, Network};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Learning rate `lr` from epoch `from_epoch` (0-based) onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrStep {
    pub from_epoch: usize,
    pub lr: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    /// Piecewise-constant schedule; must start at epoch 0 and be sorted.
    pub lr_schedule: Vec<LrStep>,
    pub momentum: f32,
    #[serde(default)]
    pub weight_decay: f32,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            lr_schedule: vec![LrStep {
                from_epoch: 0,
                lr: 0.1,
            }],
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 64,
            epochs: 10,
        }
    }
}

impl TrainConfig {
    /// Schedule used for the blob task: 20 epochs of batch-64 momentum SGD,
    /// learning rate 0.1 dropping to 0.01 at epoch 13.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            seed,
            lr_schedule: vec![
                LrStep {
                    from_epoch: 0,
                    lr: 0.1,
                },
                LrStep {
                    from_epoch: 13,
                    lr: 0.01,
                },
            ],
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 64,
            epochs: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epoch count must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight decay must be finite and >= 0, got {}",
                self.weight_decay
            ));
        }
        match self.lr_schedule.first() {
            Some(s) if s.from_epoch == 0 => {}
            _ => return bad("learning-rate schedule must start at epoch 0".into()),
        }
        if self
            .lr_schedule
            .windows(2)
            .any(|w| w[1].from_epoch <= w[0].from_epoch)
        {
            return bad("learning-rate schedule epochs must be strictly increasing".into());
        }
        if self
            .lr_schedule
            .iter()
            .any(|s| !(s.lr.is_finite() && s.lr >= 0.0))
        {
            return bad("learning rates must be finite and >= 0".into());
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f32 {
        self.lr_schedule
            .iter()
            .take_while(|s| s.from_epoch <= epoch)
            .last()
            .map_or(0.0, |s| s.lr)
    }
}

/// Heavy-ball SGD on the master weights:
/// `v ← μ·v + (g + λ·w)`, `w ← w − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(momentum: f32, weight_decay: f32) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.momentum, cfg.weight_decay)
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f32) -> Result<()> {
        let names: Vec<String> = net.params().into_iter().map(|(n, _)| n).collect();
        if grads.entries.len() != names.len()
            || grads.entries.iter().zip(&names).any(|((g, _), n)| g != n)
        {
            return shape_err("gradients do not line up with the network parameters");
        }
        if self.velocity.is_empty() {
            self.velocity = grads
                .entries
                .iter()
                .map(|(_, g)| vec![0.0; g.len()])
                .collect();
        }
        for ((param, (name, g)), v) in net
            .params_mut()
            .into_iter()
            .zip(&grads.entries)
            .zip(&mut self.velocity)
        {
            if g.shape() != param.shape() || v.len() != g.len() {
                return shape_err(format!("gradient for {name} has shape {:?}", g.shape()));
            }
            let mut w = param.data().to_vec();
            for ((wi, &gi), vi) in w.iter_mut().zip(g.data()).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + gi + self.weight_decay * *wi;
                *wi -= lr * *vi;
            }
            *param = Tensor::new(param.shape().to_vec(), w)?;
        }
        net.bump_version();
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches.
    pub loss: f64,
    /// Top-1 accuracy on the evaluation set, as a fraction.
    pub top1: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<EpochRecord>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,loss,top1";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            writeln!(s, "{},{:.6},{:.6}", r.epoch, r.loss, r.top1).unwrap();
        }
        s
    }

    pub fn final_top1(&self) -> Option<f64> {
        self.rows.last().map(|r| r.top1)
    }
}

/// Top-1 accuracy of inference-mode predictions.
pub fn evaluate(net: &Network, data: &Dataset, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(chunk)?;
        let logits = net.predict(&x)?;
        for (row, &label) in logits.data().chunks_exact(net.num_classes).zip(&y) {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0;
            correct += usize::from(best == label);
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains in place. Each epoch visits the training set in an order drawn
/// from `config.seed` and the epoch number, then scores `eval` (or the
/// training set when `eval` is `None`).
pub fn train(
    net: &mut Network,
    train_set: &Dataset,
    eval: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainLog> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if train_set.num_classes() > net.num_classes || train_set.sample_shape() != net.input {
        return shape_err(format!(
            "dataset ({:?}, {} classes) does not fit network input {:?} with {} classes",
            train_set.sample_shape(),
            train_set.num_classes(),
            net.input,
            net.num_classes
        ));
    }
    let mut sgd = Sgd::from_config(config);
    let mut log = TrainLog::default();
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            config
                .seed
                .wrapping_mul(1_000_003)
                .wrapping_add(epoch as u64),
        );
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = train_set.batch(chunk)?;
            let (loss, cache) = net.forward(&x, &y)?;
            let grads = net.backward(&cache)?;
            net.update_running_stats(&cache)?;
            sgd.step(net, &grads, lr)?;
            loss_sum += f64::from(loss) * chunk.len() as f64;
        }
        let top1 = evaluate(net, eval.unwrap_or(train_set), config.batch_size.max(256))?;
        log.rows.push(EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / train_set.len() as f64,
            top1,
        });
    }
    Ok(log)
}
