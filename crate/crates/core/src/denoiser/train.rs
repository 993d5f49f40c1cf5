//! Supervised training of the denoiser on (noisy, clean, sigma2) triples with
//! the per-sample normalized squared error and Adam.

use rand::seq::SliceRandom;

use super::net::{block_scale, decode_item, encode_batch, encode_targets, Architecture, ConvParams, Network};
use super::tensor::{Real, Tensor4};
use crate::channel_model::{stream_rng, AngularCsi, SampleSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub lr_floor: f64,
    /// Epochs without validation improvement before the rate is cut.
    pub patience_epochs: usize,
    /// Multiplier applied to the rate on a plateau.
    pub halving_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 200,
            initial_lr: 1e-4,
            lr_floor: 1e-7,
            patience_epochs: 20,
            halving_factor: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParameter(
                "batch_size and epochs must be at least 1".into(),
            ));
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= self.initial_lr) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < lr_floor ({}) <= initial_lr ({})",
                self.lr_floor, self.initial_lr
            )));
        }
        if !(self.halving_factor > 0.0 && self.halving_factor < 1.0) {
            return Err(Error::InvalidParameter("halving_factor must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One (noisy input, clean target, noise variance) training triple.
#[derive(Debug, Clone, Copy)]
pub struct TrainingExample<'a> {
    pub noisy: &'a AngularCsi,
    pub clean: &'a AngularCsi,
    pub sigma2: f64,
}

pub fn examples(set: &SampleSet) -> Vec<TrainingExample<'_>> {
    set.samples
        .iter()
        .map(|s| TrainingExample {
            noisy: &s.noisy_ad,
            clean: &s.clean_ad,
            sigma2: s.sigma2,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation loss.
    pub weights: Network<f32>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Mean over items of `||out - target||^2 / ||target||^2`, plus the
/// gradient of that mean with respect to `out`.
pub fn normalized_loss<T: Real>(out: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Tensor4<T>)> {
    if out.dims() != target.dims() {
        return Err(Error::dim("loss: output and target shapes differ"));
    }
    let b = out.dims()[0];
    let mut grad = Tensor4::zeros(out.dims());
    let mut total = 0.0;
    for i in 0..b {
        let t = target.item(i);
        let norm: f64 = t.iter().map(|v| v.as_f64().powi(2)).sum();
        if !(norm > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let o = out.item(i);
        let err: f64 = o
            .iter()
            .zip(t)
            .map(|(a, c)| (a.as_f64() - c.as_f64()).powi(2))
            .sum();
        total += err / norm;
        let scale = T::of_f64(2.0 / (norm * b as f64));
        for ((g, &a), &c) in grad.item_mut(i).iter_mut().zip(o).zip(t) {
            *g = scale * (a - c);
        }
    }
    Ok((total / b as f64, grad))
}

fn targets<'a>(batch: &[TrainingExample<'a>]) -> Vec<(&'a AngularCsi, f64)> {
    batch.iter().map(|e| (e.clean, block_scale(e.noisy))).collect()
}

/// Loss and parameter gradients of `net` on one batch.
pub fn batch_gradient<T: Real>(
    net: &Network<T>,
    batch: &[TrainingExample<'_>],
) -> Result<(f64, Vec<ConvParams<T>>)> {
    let pairs: Vec<_> = batch.iter().map(|e| (e.noisy, e.sigma2)).collect();
    let x = encode_batch::<T>(&pairs)?;
    let target = encode_targets::<T>(&targets(batch))?;
    let (out, cache) = net.forward_cached(&x)?;
    let (loss, d_out) = normalized_loss(&out, &target)?;
    let mut grads = net.zero_grads();
    net.backward(&cache, &d_out, &mut grads)?;
    Ok((loss, grads))
}

/// Mean normalized loss over `set`, evaluated in chunks of `batch_size`.
pub fn evaluate_loss(
    net: &Network<f32>,
    set: &[TrainingExample<'_>],
    batch_size: usize,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyDataset("evaluation set".into()));
    }
    let mut total = 0.0;
    for chunk in set.chunks(batch_size.max(1)) {
        let pairs: Vec<_> = chunk.iter().map(|e| (e.noisy, e.sigma2)).collect();
        let x = encode_batch::<f32>(&pairs)?;
        let target = encode_targets::<f32>(&targets(chunk))?;
        let out = net.forward(&x)?;
        let (loss, _) = normalized_loss(&out, &target)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

/// Denoise every item of `set` with `net` and return the outputs.
pub fn predict(net: &Network<f32>, set: &[TrainingExample<'_>]) -> Result<Vec<AngularCsi>> {
    let mut out = Vec::with_capacity(set.len());
    for chunk in set.chunks(64) {
        let pairs: Vec<_> = chunk.iter().map(|e| (e.noisy, e.sigma2)).collect();
        let y = net.forward(&encode_batch::<f32>(&pairs)?)?;
        for (b, e) in chunk.iter().enumerate() {
            out.push(decode_item(&y, b, e.noisy.n_s(), block_scale(e.noisy))?);
        }
    }
    Ok(out)
}

struct Adam {
    m: Vec<ConvParams<f32>>,
    v: Vec<ConvParams<f32>>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Network<f32>) -> Self {
        Self {
            m: net.zero_grads(),
            v: net.zero_grads(),
            step: 0,
        }
    }

    fn update(&mut self, net: &mut Network<f32>, grads: &[ConvParams<f32>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let step_size = (lr * c2.sqrt() / c1) as f32;
        let (b1, b2, eps) = (Self::BETA1 as f32, Self::BETA2 as f32, (Self::EPS * c2.sqrt()) as f32);
        for (((p, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let params = p.kernel.data_mut().iter_mut().chain(p.bias.iter_mut());
            let gs = g.kernel.data().iter().chain(&g.bias);
            let ms = m.kernel.data_mut().iter_mut().chain(m.bias.iter_mut());
            let vs = v.kernel.data_mut().iter_mut().chain(v.bias.iter_mut());
            for (((p, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step_size * *m / (v.sqrt() + eps);
            }
        }
    }
}

pub fn train(
    train_set: &[TrainingExample<'_>],
    val_set: &[TrainingExample<'_>],
    arch: Architecture,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_progress(train_set, val_set, arch, cfg, |_| {})
}

/// Train from a He-uniform start; `progress` sees every finished epoch.
/// The learning rate is multiplied by `halving_factor` after
/// `patience_epochs` epochs without a new best validation loss, never going
/// below `lr_floor`. With an empty validation set the training loss is
/// monitored instead.
pub fn train_with_progress(
    train_set: &[TrainingExample<'_>],
    val_set: &[TrainingExample<'_>],
    arch: Architecture,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    let mut net = Network::<f32>::init(arch, cfg.seed)?;
    let mut adam = Adam::new(&net);
    let mut rng = stream_rng(cfg.seed, 1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut lr = cfg.initial_lr;
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut stale = 0;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<_> = idx.iter().map(|&i| train_set[i]).collect();
            let (loss, grads) = batch_gradient(&net, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch, batch: bi });
            }
            adam.update(&mut net, &grads, lr);
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            evaluate_loss(&net, val_set, cfg.batch_size)?
        };
        if !val_loss.is_finite() {
            return Err(Error::NanLoss { epoch, batch: 0 });
        }
        let stats = EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
        };
        progress(&stats);
        history.push(stats);
        if val_loss < best.0 {
            best = (val_loss, net.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience_epochs {
                lr = (lr * cfg.halving_factor).max(cfg.lr_floor);
                stale = 0;
            }
        }
    }
    Ok(TrainOutcome {
        weights: best.1,
        history,
        best_epoch: best.2,
    })
}
