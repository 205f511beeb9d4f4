use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use super::engine::{argmax, batch_gradient, forward_with, Mode, Params};
use super::model::NetworkModel;
use crate::error::{invalid, Result};
use crate::exec::{self, Execution};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Clipped to the training-set size.
    pub batch_size: usize,
    /// Multiplier applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 512,
            lr_decay: 0.9,
            decay_every: 10,
            patience: 3,
            max_epochs: 100,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in
            [("learning rate", self.learning_rate), ("momentum", self.momentum), ("lr decay", self.lr_decay)]
        {
            if !(v > 0.0 && v <= 1.0) {
                return invalid(format!("{name} {v} is outside (0, 1]"));
            }
        }
        if self.batch_size == 0 || self.decay_every == 0 || self.max_epochs == 0 {
            return invalid("batch size, decay period and epoch cap must be positive");
        }
        Ok(())
    }
}

/// Step size used during 1-based epoch `epoch`.
pub fn learning_rate_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.learning_rate * cfg.lr_decay.powi(((epoch.max(1) - 1) / cfg.decay_every) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub stop_reason: StopReason,
    /// Validation accuracy of the retained weights.
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub wall_time: Duration,
}

fn accuracy(model: &NetworkModel, params: &Params, data: &[(&[f32], usize)], exec: Execution) -> f64 {
    let hits =
        exec::map_slice(exec, data, |(x, l)| usize::from(argmax(&forward_with(model, params, x, Mode::Infer)) == *l));
    hits.iter().sum::<usize>() as f64 / data.len() as f64
}

/// Mini-batch SGD with momentum on every unfrozen layer. The model keeps the
/// weights of the epoch with the best validation accuracy (training accuracy
/// when `validation` is empty).
pub fn train(
    model: &mut NetworkModel,
    train_set: &[(&[f32], usize)],
    validation: &[(&[f32], usize)],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return invalid("empty training split");
    }
    let start = Instant::now();
    let monitor = if validation.is_empty() { train_set } else { validation };
    let batch = cfg.batch_size.min(train_set.len());
    let mut params = Params::from_model(model);
    let mut velocity = params.zeros_like();
    let frozen: Vec<bool> = model.layers().iter().map(|l| l.frozen).collect();

    let mut best_acc = accuracy(model, &params, monitor, cfg.exec);
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let lr = learning_rate_at(cfg, epoch);
        order.sort_unstable();
        order.shuffle(&mut rng::rng_for(cfg.seed, &[epoch as u64]));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(batch).enumerate() {
            let items: Vec<(&[f32], usize)> = idx.iter().map(|&i| train_set[i]).collect();
            let seeds: Vec<u64> =
                (0..items.len()).map(|j| rng::derive_seed(cfg.seed, &[epoch as u64, b as u64, j as u64])).collect();
            let g = batch_gradient(model, &params, &items, Some(&seeds), cfg.exec)?;
            loss_sum += g.loss * items.len() as f64;
            for (i, &fz) in frozen.iter().enumerate() {
                if fz {
                    continue;
                }
                step(&mut params.weights[i], &mut velocity.weights[i], &g.grads.weights[i], lr, cfg.momentum);
                step(&mut params.bias[i], &mut velocity.bias[i], &g.grads.bias[i], lr, cfg.momentum);
            }
        }
        let acc = accuracy(model, &params, monitor, cfg.exec);
        let stats = EpochStats { train_loss: loss_sum / train_set.len() as f64, val_accuracy: acc, learning_rate: lr };
        log::info!("epoch {epoch}: loss {:.5} accuracy {:.4} lr {:.5}", stats.train_loss, acc, lr);
        epochs.push(stats);
        if acc > best_acc || epoch == 1 && acc >= best_acc {
            best_acc = acc;
            best_params = params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stop_reason = StopReason::Patience;
                break;
            }
        }
    }

    for (i, layer) in model.layers_mut().iter_mut().enumerate() {
        if frozen[i] {
            continue;
        }
        layer.weights.iter_mut().zip(&best_params.weights[i]).for_each(|(w, &v)| *w = v as f32);
        layer.bias.iter_mut().zip(&best_params.bias[i]).for_each(|(w, &v)| *w = v as f32);
    }
    model.mark_trained();
    Ok(TrainReport { epochs, stop_reason, best_val_accuracy: best_acc, best_epoch, wall_time: start.elapsed() })
}

/// `v ← μv − lr·g`, `w ← w + v`, with `w` kept on the f32 grid.
fn step(w: &mut [f64], v: &mut [f64], g: &[f64], lr: f64, momentum: f64) {
    for ((w, v), g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = momentum * *v - lr * g;
        *w = ((*w + *v) as f32) as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{LayerKind, NetworkModel};

    fn toy() -> (Vec<Vec<f32>>, Vec<usize>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..20 {
            let c = i % 2;
            let s = if c == 0 { 1.0 } else { -1.0 };
            let j = (i / 2) as f32 * 0.05;
            xs.push(vec![s * (0.8 + j), s * (0.5 - j), -s * 0.3, s * j]);
            ys.push(c);
        }
        (xs, ys)
    }

    fn toy_net(seed: u64) -> NetworkModel {
        NetworkModel::from_kinds(
            &[
                LayerKind::Input { channels: 1, height: 2, width: 2, standardize: false },
                LayerKind::FullyConnected { units: 6, dropout: 0.0 },
                LayerKind::Relu,
                LayerKind::Softmax { units: 2 },
                LayerKind::ClassificationOutput { classes: 2 },
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn schedule() {
        let cfg = TrainConfig::default();
        assert!((learning_rate_at(&cfg, 25) - 0.0081).abs() < 1e-15);
        assert_eq!(learning_rate_at(&cfg, 10), 0.01);
        assert!((learning_rate_at(&cfg, 11) - 0.009).abs() < 1e-15);
    }

    #[test]
    fn separable_toy_problem() {
        let (xs, ys) = toy();
        let data: Vec<(&[f32], usize)> = xs.iter().map(|x| x.as_slice()).zip(ys.iter().copied()).collect();
        let mut net = toy_net(4);
        let cfg =
            TrainConfig { batch_size: 20, patience: 100, max_epochs: 40, learning_rate: 0.1, ..Default::default() };
        let report = train(&mut net, &data, &data, &cfg).unwrap();
        for w in report.epochs[..5].windows(2) {
            assert!(w[1].train_loss < w[0].train_loss);
        }
        assert_eq!(report.best_val_accuracy, 1.0);
        assert!(net.is_trained());
    }

    #[test]
    fn frozen_network_is_untouched_and_runs_are_reproducible() {
        let (xs, ys) = toy();
        let data: Vec<(&[f32], usize)> = xs.iter().map(|x| x.as_slice()).zip(ys.iter().copied()).collect();
        let mut net = toy_net(1);
        for l in net.layers_mut() {
            l.frozen = true;
        }
        let before = net.clone();
        let cfg = TrainConfig { batch_size: 4, max_epochs: 3, ..Default::default() };
        let r = train(&mut net, &data, &[], &cfg).unwrap();
        assert_eq!(r.epochs.len(), 3.min(r.epochs.len()));
        assert_eq!(net.layers(), before.layers());

        let mut a = toy_net(2);
        let mut b = toy_net(2);
        let cfg = TrainConfig { batch_size: 3, max_epochs: 4, patience: 10, seed: 9, ..Default::default() };
        let ra = train(&mut a, &data, &data[..6], &cfg).unwrap();
        let rb = train(&mut b, &data, &data[..6], &TrainConfig { exec: Execution::Sequential, ..cfg }).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.epochs, rb.epochs);
        assert!(train(&mut a, &[], &[], &cfg).is_err());
    }
}
