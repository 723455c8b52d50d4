//! Continual-learning strategies.
//!
//! A strategy sees the stream one experience at a time through
//! [`Strategy::train_experience`] and answers test queries through
//! [`Strategy::predict`]. The three ensemble strategies live in [`hatcir`],
//! [`horde`] and [`dwgrnet`]; reference methods in [`baselines`].

pub mod baselines;
pub mod dwgrnet;
pub mod hatcir;
pub mod horde;
mod registry;

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{augment, cross_entropy, train_loop, Matrix, MlpNetwork, TrainConfig};
use crate::rng::{domain, substream};

pub use registry::{build_strategy, StrategyConfigs, STRATEGY_IDS};

/// The training data of one experience, already materialized.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperienceData {
    /// 1-based position in the stream.
    pub index: usize,
    /// Classes present, ascending.
    pub classes: Vec<usize>,
    pub x: Matrix,
    /// Global class ids, one per row of `x`.
    pub y: Vec<usize>,
}

impl ExperienceData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Labels as positions in `self.classes`.
    pub fn local_labels(&self) -> Vec<usize> {
        self.y
            .iter()
            .map(|y| self.classes.binary_search(y).expect("label among classes"))
            .collect()
    }

    /// All rows and labels of several experiences stacked in order.
    pub fn concat(parts: &[ExperienceData]) -> Result<ExperienceData> {
        let xs: Vec<&Matrix> = parts.iter().map(|p| &p.x).collect();
        let classes: BTreeSet<usize> = parts.iter().flat_map(|p| p.classes.clone()).collect();
        Ok(ExperienceData {
            index: parts.last().map_or(1, |p| p.index),
            classes: classes.into_iter().collect(),
            x: Matrix::vstack(&xs)?,
            y: parts.iter().flat_map(|p| p.y.clone()).collect(),
        })
    }
}

/// Static facts about the run a strategy is created for.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyContext {
    pub input_dim: usize,
    /// Total number of classes in the dataset.
    pub n_classes: usize,
    /// Number of experiences in the stream.
    pub n_experiences: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl StrategyContext {
    pub(crate) fn seed_for(&self, path: &[u64]) -> u64 {
        crate::rng::derive_seed(self.seed, path)
    }
}

pub trait Strategy: Send {
    fn name(&self) -> &str;

    fn train_experience(&mut self, experience: &ExperienceData) -> Result<()>;

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>>;

    /// Strategies that train once on the union of the stream (the IID upper
    /// bound) return true; the harness then calls `train_experience` a single
    /// time with every experience concatenated.
    fn is_joint(&self) -> bool {
        false
    }

    /// Notable events (skipped phases, warnings) in the order they happened.
    fn run_log(&self) -> &[String] {
        &[]
    }
}

/// Plain cross-entropy training of every parameter of `net` on `(x, labels)`
/// with input augmentation of the given strength.
pub(crate) fn fit_cross_entropy(
    net: &mut MlpNetwork,
    x: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
    epochs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut sgd = cfg.optimizer(net.n_params());
    let range = 0..net.n_params();
    let strength = cfg.augmentation;
    train_loop(
        net,
        &mut sgd,
        labels.len(),
        cfg.batch_size,
        epochs,
        seed,
        range,
        |net, batch, rng| {
            let bx = augment(&x.select_rows(batch), strength, rng);
            let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let fwd = net.forward(&bx)?;
            let lg = cross_entropy(&fwd.logits, &by)?;
            Ok(Some((lg.loss, net.backward(&fwd, Some(&lg.grad), None, None)?)))
        },
    )
}

/// Fresh network with `n_outputs` logits (and an optional projection head)
/// initialized from the substream at `path`.
pub(crate) fn fresh_network(
    ctx: &StrategyContext,
    n_outputs: usize,
    projection: bool,
    path: &[u64],
) -> Result<MlpNetwork> {
    let mut spec = ctx.train.net_spec(ctx.input_dim, n_outputs);
    if projection {
        spec = spec.with_projection(ctx.train.projection_dim);
    }
    let mut full_path = vec![domain::INIT];
    full_path.extend_from_slice(path);
    MlpNetwork::init(spec, &mut substream(ctx.seed, &full_path))
}

/// Draws `k` indices in `0..n` with replacement.
pub(crate) fn draw_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|_| rng.random_range(0..n)).collect()
}
