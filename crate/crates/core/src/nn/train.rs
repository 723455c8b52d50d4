//! Minibatch training loop shared by every strategy.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpNetwork, NetSpec};
use super::optim::Sgd;
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub augmentation: f64,
    pub hidden: Vec<usize>,
    pub projection_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 0.0,
            augmentation: 0.3,
            hidden: vec![64, 64],
            projection_dim: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be at least 2"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden layer sizes must be positive"));
        }
        Ok(())
    }

    /// Backbone `[input, hidden...]` with a head of `n_outputs`.
    pub fn net_spec(&self, input_dim: usize, n_outputs: usize) -> NetSpec {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        NetSpec::new(dims, n_outputs)
    }

    pub fn optimizer(&self, n_params: usize) -> Sgd {
        Sgd::new(
            self.learning_rate,
            self.momentum,
            self.weight_decay,
            n_params,
        )
    }
}

/// A random partition of `0..n` into batches of at most `batch_size`.
pub fn shuffled_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Runs `epochs` passes over `n` samples, updating `params[range]` with the
/// gradient returned by `batch_grad`. The closure sees the current network,
/// the batch indices and a generator private to that batch; it returns
/// `None` to skip the batch. Returns the mean loss of every epoch.
#[allow(clippy::too_many_arguments)]
pub fn train_loop<F>(
    net: &mut MlpNetwork,
    sgd: &mut Sgd,
    n: usize,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    range: Range<usize>,
    mut batch_grad: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&MlpNetwork, &[usize], &mut ChaCha8Rng) -> Result<Option<(f64, Vec<f64>)>>,
{
    let mut epoch_losses = Vec::with_capacity(epochs);
    let mut batch_no = 0;
    for epoch in 0..epochs {
        let mut order_rng = substream(seed, &[domain::SHUFFLE, epoch as u64]);
        let (mut total, mut counted) = (0.0, 0usize);
        for batch in shuffled_batches(n, batch_size, &mut order_rng) {
            let mut rng = substream(seed, &[domain::AUGMENT, batch_no as u64]);
            if let Some((loss, grad)) = batch_grad(net, &batch, &mut rng)? {
                sgd.step(net.params_mut(), &grad, range.clone(), batch_no)?;
                total += loss;
                counted += 1;
            }
            batch_no += 1;
        }
        epoch_losses.push(if counted > 0 { total / counted as f64 } else { 0.0 });
    }
    Ok(epoch_losses)
}
