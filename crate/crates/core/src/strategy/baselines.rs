//! Reference strategies: naive fine-tuning, experience replay with a
//! class-balanced reservoir, EWC, LwF and the joint upper bound.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{draw_indices, fit_cross_entropy, fresh_network, ExperienceData, Strategy, StrategyContext};
use crate::error::{Error, Result};
use crate::nn::{
    augment, cross_entropy, distillation_loss, train_loop, Matrix, MlpNetwork, Predictor,
};
use crate::rng::{domain, substream};

/// Sequential fine-tuning of one network with a head over every class.
pub struct Naive {
    name: String,
    ctx: StrategyContext,
    net: MlpNetwork,
}

impl Naive {
    pub fn new(ctx: StrategyContext) -> Result<Self> {
        Self::named("naive", ctx)
    }

    fn named(name: &str, ctx: StrategyContext) -> Result<Self> {
        let net = fresh_network(&ctx, ctx.n_classes, false, &[0])?;
        Ok(Naive {
            name: name.into(),
            ctx,
            net,
        })
    }

    pub fn network(&self) -> &MlpNetwork {
        &self.net
    }
}

impl Strategy for Naive {
    fn name(&self) -> &str {
        &self.name
    }

    fn train_experience(&mut self, exp: &ExperienceData) -> Result<()> {
        let seed = self.ctx.seed_for(&[domain::STRATEGY, exp.index as u64]);
        let epochs = self.ctx.train.epochs;
        fit_cross_entropy(&mut self.net, &exp.x, &exp.y, &self.ctx.train, epochs, seed)?;
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.net.predict(x)
    }
}

/// IID training on the union of the stream.
pub struct Joint(Naive);

impl Joint {
    pub fn new(ctx: StrategyContext) -> Result<Self> {
        Ok(Joint(Naive::named("joint", ctx)?))
    }

    pub fn network(&self) -> &MlpNetwork {
        self.0.network()
    }
}

impl Strategy for Joint {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn train_experience(&mut self, exp: &ExperienceData) -> Result<()> {
        self.0.train_experience(exp)
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.0.predict(x)
    }

    fn is_joint(&self) -> bool {
        true
    }
}

/// Bounded sample store filled by class-balanced reservoir sampling.
///
/// While there is room every sample is kept. Once full, a sample of a class
/// that is not among the largest in the buffer evicts a random instance of a
/// largest class (lowest id on ties); a sample of a largest class replaces a
/// random stored instance of its own class with probability `stored / seen`.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<(Vec<f64>, usize)>,
    seen: BTreeMap<usize, usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            seen: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[(Vec<f64>, usize)] {
        &self.items
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for (_, y) in &self.items {
            *counts.entry(*y).or_insert(0) += 1;
        }
        counts
    }

    fn positions_of(&self, class: usize) -> Vec<usize> {
        (0..self.items.len())
            .filter(|&i| self.items[i].1 == class)
            .collect()
    }

    pub fn insert<R: Rng + ?Sized>(&mut self, x: &[f64], y: usize, rng: &mut R) {
        let n_seen = {
            let n = self.seen.entry(y).or_insert(0);
            *n += 1;
            *n
        };
        if self.capacity == 0 {
            return;
        }
        if self.items.len() < self.capacity {
            self.items.push((x.to_vec(), y));
            return;
        }
        let counts = self.class_counts();
        let largest = counts.values().copied().max().unwrap_or(0);
        let own = counts.get(&y).copied().unwrap_or(0);
        if own < largest {
            let victim_class = counts
                .iter()
                .find(|(_, &n)| n == largest)
                .map(|(&c, _)| c)
                .expect("buffer is full");
            let pos = self.positions_of(victim_class);
            let slot = pos[rng.random_range(0..pos.len())];
            self.items[slot] = (x.to_vec(), y);
        } else if rng.random::<f64>() < own as f64 / n_seen as f64 {
            let pos = self.positions_of(y);
            let slot = pos[rng.random_range(0..pos.len())];
            self.items[slot] = (x.to_vec(), y);
        }
    }
}

/// Experience replay: every batch of current data is joined by an equal-size
/// draw from the buffer, which is updated after the experience.
pub struct Replay {
    name: String,
    inner: Naive,
    buffer: ReplayBuffer,
}

impl Replay {
    pub fn new(ctx: StrategyContext, capacity: usize) -> Result<Self> {
        Ok(Replay {
            name: format!("er{capacity}"),
            inner: Naive::named("er", ctx)?,
            buffer: ReplayBuffer::new(capacity),
        })
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }
}

impl Strategy for Replay {
    fn name(&self) -> &str {
        &self.name
    }

    fn train_experience(&mut self, exp: &ExperienceData) -> Result<()> {
        let ctx = &self.inner.ctx;
        let cfg = &ctx.train;
        let seed = ctx.seed_for(&[domain::STRATEGY, exp.index as u64]);
        let buffer = &self.buffer;
        let net = &mut self.inner.net;
        let mut sgd = cfg.optimizer(net.n_params());
        let range = 0..net.n_params();
        train_loop(net, &mut sgd, exp.len(), cfg.batch_size, cfg.epochs, seed, range, |net, batch, rng| {
            let mut bx = exp.x.select_rows(batch);
            let mut by: Vec<usize> = batch.iter().map(|&i| exp.y[i]).collect();
            if !buffer.is_empty() {
                let picks = draw_indices(rng, buffer.len(), batch.len());
                let rows: Vec<Vec<f64>> = picks.iter().map(|&i| buffer.items[i].0.clone()).collect();
                bx = Matrix::vstack(&[&bx, &Matrix::from_rows(&rows)?])?;
                by.extend(picks.iter().map(|&i| buffer.items[i].1));
            }
            let bx = augment(&bx, cfg.augmentation, rng);
            let fwd = net.forward(&bx)?;
            let lg = cross_entropy(&fwd.logits, &by)?;
            Ok(Some((lg.loss, net.backward(&fwd, Some(&lg.grad), None, None)?)))
        })?;
        let mut rng = substream(seed, &[domain::REPLAY]);
        let mut order: Vec<usize> = (0..exp.len()).collect();
        order.shuffle(&mut rng);
        for i in order {
            self.buffer.insert(exp.x.row(i), exp.y[i], &mut rng);
        }
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.inner.predict(x)
    }
}

/// Diagonal importances and anchor weights accumulated over experiences.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherState {
    pub importance: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl FisherState {
    /// `sum_k F_k (w_k - w*_k)^2`, without the lambda factor.
    pub fn penalty(&self, params: &[f64]) -> f64 {
        self.importance
            .iter()
            .zip(params.iter().zip(&self.anchor))
            .map(|(f, (w, a))| f * (w - a) * (w - a))
            .sum()
    }
}

/// Elastic weight consolidation.
///
/// The quadratic penalty is applied as an exact proximal step after each SGD
/// update, `w <- (w + 2 lr lambda F w*) / (1 + 2 lr lambda F)`, which stays
/// stable for arbitrarily large lambda.
pub struct Ewc {
    name: String,
    inner: Naive,
    pub lambda: f64,
    fisher: Option<FisherState>,
}

impl Ewc {
    pub fn new(ctx: StrategyContext, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::config("ewc lambda must be non-negative"));
        }
        Ok(Ewc {
            name: "ewc".into(),
            inner: Naive::named("ewc", ctx)?,
            lambda,
            fisher: None,
        })
    }

    pub fn fisher(&self) -> Option<&FisherState> {
        self.fisher.as_ref()
    }

    pub fn network(&self) -> &MlpNetwork {
        &self.inner.net
    }

    /// Mean squared minibatch gradient over one pass of the experience.
    fn estimate_importance(&self, exp: &ExperienceData, seed: u64) -> Result<Vec<f64>> {
        let net = &self.inner.net;
        let mut rng = substream(seed, &[domain::SHUFFLE, u64::MAX]);
        let batches = crate::nn::shuffled_batches(exp.len(), self.inner.ctx.train.batch_size, &mut rng);
        let mut acc = vec![0.0; net.n_params()];
        for batch in &batches {
            let bx = exp.x.select_rows(batch);
            let by: Vec<usize> = batch.iter().map(|&i| exp.y[i]).collect();
            let fwd = net.forward(&bx)?;
            let lg = cross_entropy(&fwd.logits, &by)?;
            let g = net.backward(&fwd, Some(&lg.grad), None, None)?;
            acc.iter_mut().zip(&g).for_each(|(a, g)| *a += g * g);
        }
        let n = batches.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

impl Strategy for Ewc {
    fn name(&self) -> &str {
        &self.name
    }

    fn train_experience(&mut self, exp: &ExperienceData) -> Result<()> {
        let cfg = self.inner.ctx.train.clone();
        let seed = self.inner.ctx.seed_for(&[domain::STRATEGY, exp.index as u64]);
        let net = &mut self.inner.net;
        let mut sgd = cfg.optimizer(net.n_params());
        let n_params = net.n_params();
        let mut batch_no = 0;
        for epoch in 0..cfg.epochs {
            let mut order = substream(seed, &[domain::SHUFFLE, epoch as u64]);
            for batch in crate::nn::shuffled_batches(exp.len(), cfg.batch_size, &mut order) {
                let mut rng = substream(seed, &[domain::AUGMENT, batch_no]);
                let bx = augment(&exp.x.select_rows(&batch), cfg.augmentation, &mut rng);
                let by: Vec<usize> = batch.iter().map(|&i| exp.y[i]).collect();
                let fwd = net.forward(&bx)?;
                let lg = cross_entropy(&fwd.logits, &by)?;
                let grad = net.backward(&fwd, Some(&lg.grad), None, None)?;
                sgd.step(net.params_mut(), &grad, 0..n_params, batch_no as usize)?;
                if let Some(f) = &self.fisher {
                    let step = 2.0 * cfg.learning_rate * self.lambda;
                    for ((w, &fk), &a) in net.params_mut().iter_mut().zip(&f.importance).zip(&f.anchor) {
                        let k = step * fk;
                        *w = (*w + k * a) / (1.0 + k);
                    }
                }
                batch_no += 1;
            }
        }
        let fresh = self.estimate_importance(exp, seed)?;
        let importance = match self.fisher.take() {
            Some(old) => old.importance.iter().zip(&fresh).map(|(a, b)| a + b).collect(),
            None => fresh,
        };
        self.fisher = Some(FisherState {
            importance,
            anchor: self.inner.net.params().to_vec(),
        });
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.inner.predict(x)
    }
}

/// Learning without forgetting: cross-entropy plus distillation towards a
/// snapshot of the model taken after the previous experience, restricted to
/// the classes that snapshot had seen.
pub struct Lwf {
    name: String,
    inner: Naive,
    pub alpha: f64,
    pub temperature: f64,
    teacher: Option<(MlpNetwork, Vec<usize>)>,
    seen: std::collections::BTreeSet<usize>,
}

impl Lwf {
    pub fn new(ctx: StrategyContext, alpha: f64, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !(alpha >= 0.0) {
            return Err(Error::config("lwf needs alpha >= 0 and temperature > 0"));
        }
        Ok(Lwf {
            name: "lwf".into(),
            inner: Naive::named("lwf", ctx)?,
            alpha,
            temperature,
            teacher: None,
            seen: Default::default(),
        })
    }

    pub fn network(&self) -> &MlpNetwork {
        &self.inner.net
    }
}

impl Strategy for Lwf {
    fn name(&self) -> &str {
        &self.name
    }

    fn train_experience(&mut self, exp: &ExperienceData) -> Result<()> {
        let Some((teacher, classes)) = &self.teacher else {
            self.inner.train_experience(exp)?;
            self.seen.extend(&exp.classes);
            self.teacher = Some((self.inner.net.clone(), self.seen.iter().copied().collect()));
            return Ok(());
        };
        let cfg = &self.inner.ctx.train;
        let seed = self.inner.ctx.seed_for(&[domain::STRATEGY, exp.index as u64]);
        let (alpha, t) = (self.alpha, self.temperature);
        let net = &mut self.inner.net;
        let mut sgd = cfg.optimizer(net.n_params());
        let range = 0..net.n_params();
        train_loop(net, &mut sgd, exp.len(), cfg.batch_size, cfg.epochs, seed, range, |net, batch, rng: &mut ChaCha8Rng| {
            let bx = augment(&exp.x.select_rows(batch), cfg.augmentation, rng);
            let by: Vec<usize> = batch.iter().map(|&i| exp.y[i]).collect();
            let fwd = net.forward(&bx)?;
            let mut lg = cross_entropy(&fwd.logits, &by)?;
            let kd = distillation_loss(&fwd.logits, &teacher.logits(&bx)?, classes, t, alpha)?;
            crate::nn::axpy(1.0, kd.grad.as_slice(), lg.grad.as_mut_slice());
            Ok(Some((lg.loss + kd.loss, net.backward(&fwd, Some(&lg.grad), None, None)?)))
        })?;
        self.seen.extend(&exp.classes);
        self.teacher = Some((self.inner.net.clone(), self.seen.iter().copied().collect()));
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.inner.predict(x)
    }
}

/// Hyperparameters of the parameterized baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub ewc_lambda: f64,
    pub lwf_alpha: f64,
    pub lwf_temperature: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            ewc_lambda: 1.0,
            lwf_alpha: 1.0,
            lwf_temperature: 2.0,
        }
    }
}
