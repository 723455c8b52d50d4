//! Fragment/ensemble replicas with two-phase training and a momentum-weighted
//! decision over the most recent fragments that saw each class.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{fresh_network, ExperienceData, Strategy, StrategyContext};
use crate::error::{Error, Result};
use crate::nn::{
    argmax, augment, cross_entropy, train_loop, triplet_contrastive_loss, Matrix, Mining,
    MlpNetwork,
};
use crate::rng::{domain, substream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HatCirConfig {
    /// Number of fragments; 0 means one per experience.
    pub fragments: usize,
    pub ensembles: usize,
    pub momentum_window: usize,
    /// Oldest to newest.
    pub momentum_weights: Vec<f64>,
    /// Views per test input, the first one clean.
    pub tta_views: usize,
    /// Fraction of epochs spent on the metric-learning phase.
    pub phase_split: f64,
    pub margin: f64,
    /// Subtract, per fragment and input, the mean logit over the fragment's
    /// seen classes before the momentum average.
    pub center_logits: bool,
}

impl Default for HatCirConfig {
    fn default() -> Self {
        HatCirConfig {
            fragments: 0,
            ensembles: 2,
            momentum_window: 3,
            momentum_weights: vec![1.0, 2.0, 3.0],
            tta_views: 4,
            phase_split: 0.6,
            margin: 0.5,
            center_logits: true,
        }
    }
}

impl HatCirConfig {
    pub fn validate(&self) -> Result<()> {
        self.rule()?;
        if self.ensembles == 0 {
            return Err(Error::config("hatcir needs at least one ensemble member"));
        }
        if self.tta_views == 0 {
            return Err(Error::config("tta_views counts the clean view and must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.phase_split) {
            return Err(Error::config("phase_split must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn rule(&self) -> Result<MomentumRule> {
        MomentumRule::new(self.momentum_window, self.momentum_weights.clone())
    }
}

/// Which fragment trains on which experience.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplicaPlan {
    pub n_fragments: usize,
    pub n_ensembles: usize,
    /// `assignment[t - 1]` is the fragment of experience `t`.
    pub assignment: Vec<usize>,
}

impl ReplicaPlan {
    pub fn fragment_of(&self, experience: usize) -> usize {
        self.assignment[experience - 1]
    }

    /// Number of experiences per fragment, in fragment order.
    pub fn coverage(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_fragments];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Contiguous balanced grouping of `n` experiences into `f` fragments; the
/// first `n mod f` fragments take one extra experience.
pub fn plan_fragments(n: usize, f: usize, ensembles: usize) -> Result<ReplicaPlan> {
    if f == 0 || f > n {
        return Err(Error::config(format!(
            "cannot split {n} experiences into {f} fragments"
        )));
    }
    let (base, extra) = (n / f, n % f);
    let assignment = (0..f)
        .flat_map(|i| std::iter::repeat_n(i, base + usize::from(i < extra)))
        .collect();
    Ok(ReplicaPlan {
        n_fragments: f,
        n_ensembles: ensembles,
        assignment,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentumRule {
    window: usize,
    weights: Vec<f64>,
}

impl MomentumRule {
    pub fn new(window: usize, weights: Vec<f64>) -> Result<Self> {
        if window == 0 || weights.len() != window {
            return Err(Error::config("momentum_weights must have momentum_window entries"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::config("momentum weights must be positive"));
        }
        Ok(MomentumRule { window, weights })
    }

    /// Picks the claims that count and their weights, oldest first. A claim
    /// is `(last experience containing the class, fragment id)`; the newest
    /// claim always receives the last weight.
    pub fn select(&self, claims: &[(usize, usize)]) -> Vec<(usize, f64)> {
        let mut order: Vec<usize> = (0..claims.len()).collect();
        order.sort_by_key(|&i| claims[i]);
        let k = order.len().min(self.window);
        let used = &order[order.len() - k..];
        used.iter()
            .zip(&self.weights[self.window - k..])
            .map(|(&i, &w)| (i, w))
            .collect()
    }

    /// Weighted mean of `(recency, fragment id, logit)` entries; `None`
    /// when nothing claims the class.
    pub fn score(&self, entries: &[(usize, usize, f64)]) -> Option<f64> {
        let claims: Vec<(usize, usize)> = entries.iter().map(|e| (e.0, e.1)).collect();
        let picked = self.select(&claims);
        match picked.as_slice() {
            [] => return None,
            [(i, _)] => return Some(entries[*i].2),
            _ => {}
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (i, w) in picked {
            num += w * entries[i].2;
            den += w;
        }
        Some(num / den)
    }
}

#[derive(Clone, Debug)]
pub struct Fragment {
    pub id: usize,
    pub members: Vec<MlpNetwork>,
    pub classes_seen: BTreeSet<usize>,
    pub experience_indices: Vec<usize>,
    /// Latest experience index in which each class was trained.
    pub last_seen: BTreeMap<usize, usize>,
}

impl Fragment {
    /// Mean logits over members and the given input views.
    pub fn mean_logits(&self, views: &[Matrix]) -> Result<Matrix> {
        let mut acc: Option<Matrix> = None;
        for net in &self.members {
            for v in views {
                let l = net.logits(v)?;
                match &mut acc {
                    None => acc = Some(l),
                    Some(a) => crate::nn::axpy(1.0, l.as_slice(), a.as_mut_slice()),
                }
            }
        }
        let mut out = acc.ok_or_else(|| Error::shape("fragment has no members"))?;
        out.scale(1.0 / (self.members.len() * views.len()) as f64);
        Ok(out)
    }

    /// [`Fragment::mean_logits`] shifted so that the logits of the seen
    /// classes average to zero in every row. A single-class fragment thus
    /// scores its class at zero instead of at an input-independent high.
    pub fn centered_logits(&self, views: &[Matrix]) -> Result<Matrix> {
        let mut out = self.mean_logits(views)?;
        if self.classes_seen.is_empty() {
            return Ok(out);
        }
        let k = self.classes_seen.len() as f64;
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let mean = self.classes_seen.iter().map(|&c| row[c]).sum::<f64>() / k;
            row.iter_mut().for_each(|v| *v -= mean);
        }
        Ok(out)
    }
}

/// Per-class scores and labels of a momentum decision. Classes claimed by no
/// fragment score `-inf` and are listed in `unclaimed`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumOutput {
    pub scores: Matrix,
    pub labels: Vec<usize>,
    pub unclaimed: Vec<usize>,
}

/// The `tta_views` inputs used at test time: the clean batch followed by
/// augmented copies drawn from fixed substreams of `seed`.
pub fn tta_views(x: &Matrix, views: usize, strength: f64, seed: u64) -> Vec<Matrix> {
    (0..views)
        .map(|v| {
            if v == 0 {
                x.clone()
            } else {
                augment(x, strength, &mut substream(seed, &[domain::TTA, v as u64]))
            }
        })
        .collect()
}

pub fn momentum_predict(
    fragments: &[Fragment],
    rule: &MomentumRule,
    n_classes: usize,
    views: &[Matrix],
    center: bool,
) -> Result<MomentumOutput> {
    let rows = views.first().map_or(0, Matrix::rows);
    let logits: Vec<Option<Matrix>> = fragments
        .iter()
        .map(|f| {
            (!f.members.is_empty() && !f.classes_seen.is_empty())
                .then(|| if center { f.centered_logits(views) } else { f.mean_logits(views) })
                .transpose()
        })
        .collect::<Result<_>>()?;
    let mut scores = Matrix::zeros(rows, n_classes);
    let mut unclaimed = Vec::new();
    for c in 0..n_classes {
        let claims: Vec<(usize, usize, usize)> = fragments
            .iter()
            .enumerate()
            .filter_map(|(pos, f)| f.last_seen.get(&c).map(|&t| (t, f.id, pos)))
            .collect();
        if claims.is_empty() {
            unclaimed.push(c);
            (0..rows).for_each(|i| scores.set(i, c, f64::NEG_INFINITY));
            continue;
        }
        for i in 0..rows {
            let entries: Vec<(usize, usize, f64)> = claims
                .iter()
                .map(|&(t, id, pos)| (t, id, logits[pos].as_ref().expect("claimed").get(i, c)))
                .collect();
            scores.set(i, c, rule.score(&entries).expect("non-empty"));
        }
    }
    let labels = scores.iter_rows().map(argmax).collect();
    Ok(MomentumOutput {
        scores,
        labels,
        unclaimed,
    })
}

pub struct HatCir {
    ctx: StrategyContext,
    cfg: HatCirConfig,
    rule: MomentumRule,
    plan: ReplicaPlan,
    fragments: Vec<Fragment>,
    log: Vec<String>,
}

impl HatCir {
    pub fn new(ctx: StrategyContext, cfg: HatCirConfig) -> Result<Self> {
        cfg.validate()?;
        let f = if cfg.fragments == 0 { ctx.n_experiences } else { cfg.fragments };
        let plan = plan_fragments(ctx.n_experiences, f, cfg.ensembles)?;
        let fragments = (0..f)
            .map(|id| {
                let members = (0..cfg.ensembles)
                    .map(|m| fresh_network(&ctx, ctx.n_classes, true, &[id as u64, m as u64]))
                    .collect::<Result<_>>()?;
                Ok(Fragment {
                    id,
                    members,
                    classes_seen: BTreeSet::new(),
                    experience_indices: Vec::new(),
                    last_seen: BTreeMap::new(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(HatCir {
            rule: cfg.rule()?,
            ctx,
            cfg,
            plan,
            fragments,
            log: Vec::new(),
        })
    }

    pub fn plan(&self) -> &ReplicaPlan {
        &self.plan
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn predict_scores(&self, x: &Matrix) -> Result<MomentumOutput> {
        let views = tta_views(x, self.cfg.tta_views, self.ctx.train.augmentation, self.ctx.seed);
        momentum_predict(&self.fragments, &self.rule, self.ctx.n_classes, &views, self.cfg.center_logits)
    }
}

/// Trains every member of `fragment` on `exp`: metric learning through the
/// projection head, then cross-entropy through the classification head.
pub fn train_fragment(
    fragment: &mut Fragment,
    exp: &ExperienceData,
    ctx: &StrategyContext,
    cfg: &HatCirConfig,
    log: &mut Vec<String>,
) -> Result<()> {
    if exp.is_empty() {
        return Err(Error::config(format!("experience {} is empty", exp.index)));
    }
    let train = &ctx.train;
    let p1 = (train.epochs as f64 * cfg.phase_split).round() as usize;
    let p2 = train.epochs - p1.min(train.epochs);
    let metric = exp.classes.len() >= 2;
    if !metric && p1 > 0 {
        log.push(format!(
            "hatcir: experience {} has one class, metric phase skipped",
            exp.index
        ));
    }
    for (m, net) in fragment.members.iter_mut().enumerate() {
        let seed = ctx.seed_for(&[domain::STRATEGY, fragment.id as u64, m as u64, exp.index as u64]);
        let range = 0..net.n_params();
        if metric && p1 > 0 {
            let mut sgd = train.optimizer(net.n_params());
            train_loop(net, &mut sgd, exp.len(), train.batch_size, p1, seed, range.clone(), |net, batch, rng| {
                let bx = augment(&exp.x.select_rows(batch), train.augmentation, rng);
                let by: Vec<usize> = batch.iter().map(|&i| exp.y[i]).collect();
                let fwd = net.forward(&bx)?;
                let z = fwd.projection.as_ref().expect("members carry a projection head");
                match triplet_contrastive_loss(z, &by, cfg.margin, Mining::Random, rng) {
                    Ok((mut lg, anchors)) => {
                        lg.grad.scale(1.0 / anchors as f64);
                        let g = net.backward(&fwd, None, Some(&lg.grad), None)?;
                        Ok(Some((lg.loss / anchors as f64, g)))
                    }
                    Err(Error::DegenerateBatch(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })?;
        }
        if p2 > 0 {
            let mut sgd = train.optimizer(net.n_params());
            let seed2 = crate::rng::derive_seed(seed, &[2]);
            train_loop(net, &mut sgd, exp.len(), train.batch_size, p2, seed2, range, |net, batch, rng| {
                let bx = augment(&exp.x.select_rows(batch), train.augmentation, rng);
                let by: Vec<usize> = batch.iter().map(|&i| exp.y[i]).collect();
                let fwd = net.forward(&bx)?;
                let lg = cross_entropy(&fwd.logits, &by)?;
                Ok(Some((lg.loss, net.backward(&fwd, Some(&lg.grad), None, None)?)))
            })?;
        }
    }
    fragment.classes_seen.extend(&exp.classes);
    fragment.experience_indices.push(exp.index);
    for &c in &exp.classes {
        fragment.last_seen.insert(c, exp.index);
    }
    Ok(())
}

impl Strategy for HatCir {
    fn name(&self) -> &str {
        "hatcir"
    }

    fn train_experience(&mut self, exp: &ExperienceData) -> Result<()> {
        if exp.index == 0 || exp.index > self.plan.assignment.len() {
            return Err(Error::config(format!(
                "experience {} outside the planned stream of {}",
                exp.index,
                self.plan.assignment.len()
            )));
        }
        let f = self.plan.fragment_of(exp.index);
        train_fragment(&mut self.fragments[f], exp, &self.ctx, &self.cfg, &mut self.log)
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.predict_scores(x)?.labels)
    }

    fn run_log(&self) -> &[String] {
        &self.log
    }
}
