use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::net::{NetScalar, TinyNet};
use crate::datagen::Dataset;
use crate::{item_rng, par, Error, Result};

/// Examples per gradient chunk. Chunks are reduced in a fixed order, so the
/// result does not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay per epoch once `decay_start` epochs
    /// have passed.
    pub decay: f64,
    pub decay_start: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            decay: 1e-3,
            decay_start: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(Error::config("learning-rate decay must lie in [0, 1)"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return Err(Error::config("Adam betas must lie in [0, 1) and epsilon must be positive"));
        }
        Ok(())
    }

    /// Learning rate used during 1-based `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let decayed = epoch.saturating_sub(self.decay_start);
        self.learning_rate * libm::pow(1.0 - self.decay, decayed as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: NetScalar> Adam<T> {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c = |x: f64| T::from(x).expect("finite");
        let (b1, b2) = (c(cfg.beta1), c(cfg.beta2));
        let (one, eps) = (T::one(), c(cfg.epsilon));
        let step = c(lr / (1.0 - libm::pow(cfg.beta1, self.t as f64)));
        let vcorr = c(1.0 / (1.0 - libm::pow(cfg.beta2, self.t as f64)));
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p -= step * *m / ((*v * vcorr).sqrt() + eps);
        }
    }
}

/// Minimizes the batch mean of `‖N̂ - label‖²` with Adam.
///
/// Examples are shuffled every epoch from `seed`; `on_epoch` is called after
/// each epoch with the updated network. Training stops with
/// [`Error::NonFiniteLoss`] as soon as a batch loss is not finite.
pub fn train<T: NetScalar>(
    net: &mut TinyNet<T>,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &TinyNet<T>),
) -> Result<TrainReport> {
    cfg.validate()?;
    let arch = net.architecture();
    if data.map_size() != arch.map_size || data.channels() != arch.channels {
        return Err(Error::dimension(
            alloc::format!("{0}x{0}x{1} dataset", arch.map_size, arch.channels),
            alloc::format!("{0}x{0}x{1} dataset", data.map_size(), data.channels()),
        ));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData {
            available: 0,
            required: 1,
        });
    }
    let n_params = net.param_count();
    let mut adam = Adam::new(n_params);
    let mut grad = vec![T::zero(); n_params];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut item_rng(cfg.seed, epoch as u64));
        let lr = cfg.learning_rate_at(epoch);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let chunks = batch.len().div_ceil(CHUNK);
            let partial = {
                let net = &*net;
                par::map_range(chunks, |c| -> Result<(Vec<T>, T)> {
                    let mut g = vec![T::zero(); n_params];
                    let mut loss = T::zero();
                    let mut input = vec![T::zero(); arch.input_len()];
                    for &i in &batch[c * CHUNK..((c + 1) * CHUNK).min(batch.len())] {
                        data.write_input(i, &mut input);
                        loss += net.accumulate_gradient(&input, &data.label::<T>(i), &mut g)?;
                    }
                    Ok((g, loss))
                })
            };
            grad.iter_mut().for_each(|g| *g = T::zero());
            let mut loss = T::zero();
            for part in partial {
                let (g, l) = part.map_err(|e| match e {
                    Error::Numerical(_) => Error::NonFiniteLoss {
                        epoch,
                        batch: b,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
                loss += l;
                grad.iter_mut().zip(&g).for_each(|(a, &x)| *a += x);
            }
            let scale = T::one() / T::from(batch.len()).expect("batch size");
            let loss = (loss * scale).to_f64().unwrap_or(f64::NAN);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b, loss });
            }
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(net.params_mut(), &grad, lr, cfg);
            report.steps += 1;
            epoch_loss += loss * batch.len() as f64;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: epoch_loss / data.len() as f64,
            learning_rate: lr,
        };
        on_epoch(&stats, net);
        report.epochs.push(stats);
    }
    Ok(report)
}
