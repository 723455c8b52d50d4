//! One frozen branch per experience; branch logits are fused per class with
//! entropy, class-count and feature-norm factors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fresh_network, ExperienceData, Strategy, StrategyContext};
use crate::error::{Error, Result};
use crate::nn::{
    accuracy, argmax, augment, blend, cross_entropy, l2_norm, softmax_entropy, train_loop, Matrix,
    MlpNetwork,
};
use crate::rng::domain;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionReduce {
    #[default]
    Max,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub use_entropy: bool,
    pub use_class_count: bool,
    pub use_feature_norm: bool,
    pub entropy_floor: f64,
    pub fusion_reduce: FusionReduce,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            use_entropy: true,
            use_class_count: true,
            use_feature_norm: true,
            entropy_floor: 1e-4,
            fusion_reduce: FusionReduce::Max,
        }
    }
}

impl FusionConfig {
    pub fn raw(reduce: FusionReduce) -> Self {
        FusionConfig {
            use_entropy: false,
            use_class_count: false,
            use_feature_norm: false,
            fusion_reduce: reduce,
            ..FusionConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.entropy_floor > 0.0) {
            return Err(Error::config("entropy_floor must be positive"));
        }
        Ok(())
    }

    /// `logit / entropy * n_c * norm`, disabled factors replaced by 1.
    pub fn fused_value(&self, logit: f64, entropy: f64, n_c: usize, norm: f64) -> f64 {
        let e = if self.use_entropy { entropy } else { 1.0 };
        let n = if self.use_class_count { n_c as f64 } else { 1.0 };
        let f = if self.use_feature_norm { norm } else { 1.0 };
        logit / e * n * f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DwgrConfig {
    pub use_entropy: bool,
    pub use_class_count: bool,
    pub use_feature_norm: bool,
    pub entropy_floor: f64,
    pub fusion_reduce: FusionReduce,
    /// Weight of the blended augmented views in the training input.
    pub mix_coefficient: f64,
}

impl Default for DwgrConfig {
    fn default() -> Self {
        let f = FusionConfig::default();
        DwgrConfig {
            use_entropy: f.use_entropy,
            use_class_count: f.use_class_count,
            use_feature_norm: f.use_feature_norm,
            entropy_floor: f.entropy_floor,
            fusion_reduce: f.fusion_reduce,
            mix_coefficient: 0.5,
        }
    }
}

impl DwgrConfig {
    pub fn validate(&self) -> Result<()> {
        self.fusion().validate()?;
        if !(0.0..=1.0).contains(&self.mix_coefficient) {
            return Err(Error::config("mix_coefficient must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            use_entropy: self.use_entropy,
            use_class_count: self.use_class_count,
            use_feature_norm: self.use_feature_norm,
            entropy_floor: self.entropy_floor,
            fusion_reduce: self.fusion_reduce,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub net: MlpNetwork,
    pub experience: usize,
    /// Output space of the branch, ascending.
    pub classes: Vec<usize>,
}

impl Branch {
    pub fn n_c(&self) -> usize {
        self.classes.len()
    }
}

/// What a branch contributes to fusion for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchSignals {
    pub classes: Vec<usize>,
    /// Rows x branch classes.
    pub logits: Matrix,
    pub entropy: Vec<f64>,
    pub feature_norm: Vec<f64>,
}

/// Branch logits, softmax entropy clamped below by `entropy_floor`, and the
/// L2 norm of the penultimate features.
pub fn branch_signals(branch: &Branch, x: &Matrix, entropy_floor: f64) -> Result<BranchSignals> {
    let fwd = branch.net.forward(x)?;
    let feature_norm = fwd.features().iter_rows().map(l2_norm).collect();
    let entropy = fwd
        .logits
        .iter_rows()
        .map(|r| softmax_entropy(r).max(entropy_floor))
        .collect();
    Ok(BranchSignals {
        classes: branch.classes.clone(),
        logits: fwd.logits,
        entropy,
        feature_norm,
    })
}

/// Streaming fusion state: branches are absorbed one at a time in order.
#[derive(Clone, Debug)]
pub struct FusionAccumulator {
    fusion: FusionConfig,
    acc: Matrix,
    counts: Vec<usize>,
}

impl FusionAccumulator {
    pub fn new(fusion: FusionConfig, rows: usize, n_classes: usize) -> Self {
        let init = match fusion.fusion_reduce {
            FusionReduce::Max => f64::NEG_INFINITY,
            FusionReduce::Mean => 0.0,
        };
        FusionAccumulator {
            fusion,
            acc: Matrix::from_vec(rows, n_classes, vec![init; rows * n_classes]).expect("shape"),
            counts: vec![0; n_classes],
        }
    }

    pub fn absorb(&mut self, s: &BranchSignals) -> Result<()> {
        if s.logits.rows() != self.acc.rows() || s.logits.cols() != s.classes.len() {
            return Err(Error::shape("branch signals do not match the batch"));
        }
        if let Some(&c) = s.classes.iter().find(|&&c| c >= self.acc.cols()) {
            return Err(Error::shape(format!("branch class {c} out of range")));
        }
        let n_c = s.classes.len();
        for i in 0..s.logits.rows() {
            for (r, &c) in s.classes.iter().enumerate() {
                let v = self.fusion.fused_value(s.logits.get(i, r), s.entropy[i], n_c, s.feature_norm[i]);
                let cur = self.acc.get(i, c);
                self.acc.set(
                    i,
                    c,
                    match self.fusion.fusion_reduce {
                        FusionReduce::Max => cur.max(v),
                        FusionReduce::Mean => cur + v,
                    },
                );
            }
        }
        for &c in &s.classes {
            self.counts[c] += 1;
        }
        Ok(())
    }

    pub fn finish(mut self) -> FusedOutput {
        let uncovered: Vec<usize> = (0..self.counts.len()).filter(|&c| self.counts[c] == 0).collect();
        for i in 0..self.acc.rows() {
            for c in 0..self.acc.cols() {
                let n = self.counts[c];
                if n == 0 {
                    self.acc.set(i, c, f64::NEG_INFINITY);
                } else if self.fusion.fusion_reduce == FusionReduce::Mean {
                    self.acc.set(i, c, self.acc.get(i, c) / n as f64);
                }
            }
        }
        let labels = self.acc.iter_rows().map(argmax).collect();
        FusedOutput {
            logits: self.acc,
            labels,
            uncovered,
        }
    }
}

/// Fused per-class logits; classes no branch covers hold `-inf` and are
/// listed in `uncovered`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedOutput {
    pub logits: Matrix,
    pub labels: Vec<usize>,
    pub uncovered: Vec<usize>,
}

/// Fuses precomputed signals of all branches.
pub fn fuse(signals: &[BranchSignals], fusion: FusionConfig, rows: usize, n_classes: usize) -> Result<FusedOutput> {
    let mut acc = FusionAccumulator::new(fusion, rows, n_classes);
    for s in signals {
        acc.absorb(s)?;
    }
    Ok(acc.finish())
}

/// Activates the branches one by one, folding each into the fused logits
/// before the next is evaluated.
pub fn ensemble_predict(
    branches: &[Branch],
    fusion: FusionConfig,
    n_classes: usize,
    x: &Matrix,
) -> Result<FusedOutput> {
    if branches.is_empty() {
        return Err(Error::Run("no trained branch".into()));
    }
    let mut acc = FusionAccumulator::new(fusion, x.rows(), n_classes);
    for b in branches {
        acc.absorb(&branch_signals(b, x, fusion.entropy_floor)?)?;
    }
    Ok(acc.finish())
}

/// Trains a new branch with cross-entropy on
/// `(1 - m) x + m * blend(aug(x), aug(x), lambda)`, `lambda ~ U(0, 1)`.
pub fn train_branch(exp: &ExperienceData, ctx: &StrategyContext, mix: f64) -> Result<Branch> {
    if exp.is_empty() {
        return Err(Error::config(format!("experience {} is empty", exp.index)));
    }
    let train = &ctx.train;
    let mut net = fresh_network(ctx, exp.classes.len(), false, &[exp.index as u64])?;
    let labels = exp.local_labels();
    let seed = ctx.seed_for(&[domain::STRATEGY, exp.index as u64]);
    let mut sgd = train.optimizer(net.n_params());
    let range = 0..net.n_params();
    train_loop(&mut net, &mut sgd, exp.len(), train.batch_size, train.epochs, seed, range, |net, batch, rng| {
        let x = exp.x.select_rows(batch);
        let bx = if mix == 0.0 {
            x
        } else {
            let a1 = augment(&x, train.augmentation, rng);
            let a2 = augment(&x, train.augmentation, rng);
            let lambda: f64 = rng.random();
            blend(&x, &blend(&a1, &a2, lambda), 1.0 - mix)
        };
        let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let fwd = net.forward(&bx)?;
        let lg = cross_entropy(&fwd.logits, &by)?;
        Ok(Some((lg.loss, net.backward(&fwd, Some(&lg.grad), None, None)?)))
    })?;
    Ok(Branch {
        net,
        experience: exp.index,
        classes: exp.classes.clone(),
    })
}

/// The cumulative fusion settings compared in the ablation, in order.
pub fn ablation_settings(entropy_floor: f64) -> Vec<(&'static str, FusionConfig)> {
    let none = FusionConfig {
        entropy_floor,
        ..FusionConfig::raw(FusionReduce::Mean)
    };
    let ent = FusionConfig {
        use_entropy: true,
        fusion_reduce: FusionReduce::Max,
        ..none
    };
    let nc = FusionConfig {
        use_class_count: true,
        ..ent
    };
    let norm = FusionConfig {
        use_feature_norm: true,
        ..nc
    };
    vec![
        ("only_mean", none),
        ("+entropy", ent),
        ("+n_c", nc),
        ("+feature_norm", norm),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub accuracy: f64,
}

/// Test accuracy of one trained branch set under every ablation setting.
pub fn ablation_run(
    branches: &[Branch],
    n_classes: usize,
    entropy_floor: f64,
    x: &Matrix,
    y: &[usize],
) -> Result<Vec<AblationRow>> {
    let signals: Vec<BranchSignals> = branches
        .iter()
        .map(|b| branch_signals(b, x, entropy_floor))
        .collect::<Result<_>>()?;
    ablation_settings(entropy_floor)
        .into_iter()
        .map(|(name, fusion)| {
            let out = fuse(&signals, fusion, x.rows(), n_classes)?;
            Ok(AblationRow {
                setting: name.into(),
                accuracy: accuracy(&out.labels, y),
            })
        })
        .collect()
}

pub struct DwgrNet {
    ctx: StrategyContext,
    cfg: DwgrConfig,
    branches: Vec<Branch>,
}

impl DwgrNet {
    pub fn new(ctx: StrategyContext, cfg: DwgrConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(DwgrNet {
            ctx,
            cfg,
            branches: Vec::new(),
        })
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_classes(&self) -> usize {
        self.ctx.n_classes
    }

    pub fn config(&self) -> &DwgrConfig {
        &self.cfg
    }
}

impl Strategy for DwgrNet {
    fn name(&self) -> &str {
        "dwgrnet"
    }

    fn train_experience(&mut self, exp: &ExperienceData) -> Result<()> {
        let b = train_branch(exp, &self.ctx, self.cfg.mix_coefficient)?;
        self.branches.push(b);
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(ensemble_predict(&self.branches, self.cfg.fusion(), self.ctx.n_classes, x)?.labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TrainConfig;
    use crate::strategy::baselines::tests::two_blob_experiences;
    use crate::strategy::fit_cross_entropy;

    fn sig(classes: Vec<usize>, logits: Vec<f64>, entropy: f64, norm: f64) -> BranchSignals {
        BranchSignals {
            logits: Matrix::from_vec(1, classes.len(), logits).unwrap(),
            classes,
            entropy: vec![entropy],
            feature_norm: vec![norm],
        }
    }

    #[test]
    fn hand_example() {
        let a = sig(vec![0, 1, 2, 3], vec![2.0, 0.0, 0.0, 0.0], 0.5, 1.0);
        let b = sig(vec![0, 4], vec![3.0, 0.0], 2.0, 1.0);
        let out = fuse(&[a, b], FusionConfig::default(), 1, 5).unwrap();
        assert_eq!(out.logits.get(0, 0), 16.0);
    }

    #[test]
    fn degenerate_configs() {
        let a = sig(vec![0, 1], vec![1.5, -0.5], 0.25, 3.0);
        let only_entropy = FusionConfig {
            use_class_count: false,
            use_feature_norm: false,
            ..FusionConfig::default()
        };
        assert_eq!(fuse(std::slice::from_ref(&a), only_entropy, 1, 2).unwrap().logits.get(0, 0), 1.5 / 0.25);
        let b = sig(vec![1], vec![4.0], 0.5, 1.0);
        let raw = fuse(&[a, b], FusionConfig::raw(FusionReduce::Max), 1, 3).unwrap();
        assert_eq!(raw.logits.row(0)[..2], [1.5, 4.0]);
        assert_eq!(raw.uncovered, vec![2]);
        assert_eq!(raw.logits.get(0, 2), f64::NEG_INFINITY);
    }

    fn small_ctx() -> StrategyContext {
        StrategyContext {
            input_dim: 8,
            n_classes: 4,
            n_experiences: 2,
            train: TrainConfig {
                epochs: 5,
                hidden: vec![16],
                ..TrainConfig::default()
            },
            seed: 2,
        }
    }

    #[test]
    fn branch_isolation_and_sequential_equals_batched() {
        let (exps, tx, ty) = two_blob_experiences();
        let mut s = DwgrNet::new(small_ctx(), DwgrConfig::default()).unwrap();
        s.train_experience(&exps[0]).unwrap();
        let first = s.branches()[0].net.params().to_vec();
        s.train_experience(&exps[1]).unwrap();
        assert_eq!(s.branches()[0].net.params(), &first[..]);
        assert_eq!(s.branches()[1].classes, exps[1].classes);
        let fusion = FusionConfig::default();
        let seq = ensemble_predict(s.branches(), fusion, 4, &tx).unwrap();
        let sigs: Vec<_> = s.branches().iter().map(|b| branch_signals(b, &tx, 1e-4).unwrap()).collect();
        assert_eq!(seq, fuse(&sigs, fusion, tx.rows(), 4).unwrap());
        assert!(seq.logits.is_finite());
        let rows = ablation_run(s.branches(), 4, 1e-4, &tx, &ty).unwrap();
        assert_eq!(rows.len(), 4);
    }

    #[test]
    fn zero_mix_is_plain_cross_entropy() {
        let (exps, _, _) = two_blob_experiences();
        let ctx = small_ctx();
        let b = train_branch(&exps[1], &ctx, 0.0).unwrap();
        let mut net = fresh_network(&ctx, 2, false, &[2]).unwrap();
        let cfg = TrainConfig { augmentation: 0.0, ..ctx.train.clone() };
        let seed = ctx.seed_for(&[domain::STRATEGY, 2]);
        fit_cross_entropy(&mut net, &exps[1].x, &exps[1].local_labels(), &cfg, cfg.epochs, seed).unwrap();
        assert_eq!(b.net.params(), net.params());
    }

    #[test]
    fn entropy_signal_is_clamped() {
        let (exps, tx, _) = two_blob_experiences();
        let b = train_branch(&exps[0], &small_ctx(), 0.5).unwrap();
        let s = branch_signals(&b, &tx, 0.3).unwrap();
        assert!(s.entropy.iter().all(|&e| e >= 0.3 && e <= 2f64.ln() + 1e-12));
    }
}
