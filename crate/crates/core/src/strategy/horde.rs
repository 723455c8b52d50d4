//! A growing ensemble of frozen feature extractors with a unified head over
//! their concatenated features, trained with pseudo-feature projection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{fresh_network, ExperienceData, Strategy, StrategyContext};
use crate::error::{Error, Result};
use crate::nn::{
    argmax, augment, cross_entropy, train_loop, triplet_contrastive_loss, Matrix, Mining,
    MlpNetwork, Sgd,
};
use crate::rng::{domain, substream};

pub const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationHeuristic {
    Zeros,
    Random,
    #[default]
    #[serde(rename = "original")]
    OriginalFeatures,
}

/// How the metric-learning weight of feature-extractor training is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AlphaMode {
    /// Starts at 0.5, then `mean L_ML / (mean L_CE + mean L_ML)` of the
    /// previous epoch.
    #[default]
    Adaptive,
    Fixed(f64),
}

impl FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "adaptive" {
            return Ok(AlphaMode::Adaptive);
        }
        let v = s
            .strip_prefix("fixed:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::config(format!("alpha_mode `{s}`: expected adaptive or fixed:<value>")))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::config("fixed alpha must lie in [0, 1]"));
        }
        Ok(AlphaMode::Fixed(v))
    }
}

impl TryFrom<String> for AlphaMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AlphaMode> for String {
    fn from(m: AlphaMode) -> String {
        m.to_string()
    }
}

impl fmt::Display for AlphaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaMode::Adaptive => f.write_str("adaptive"),
            AlphaMode::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

/// The next-epoch metric weight from the epoch means of both losses.
pub fn adaptive_alpha(mean_ce: f64, mean_ml: f64, previous: f64) -> f64 {
    let total = mean_ce + mean_ml;
    if total > 0.0 && total.is_finite() {
        mean_ml / total
    } else {
        previous
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HordeConfig {
    pub min_classes_for_fe: usize,
    pub seen_fraction_stop: f64,
    pub max_fes: usize,
    pub estimation_heuristic: EstimationHeuristic,
    pub alpha_mode: AlphaMode,
    pub margin: f64,
    /// Epochs of unified-head training per experience; 0 uses the train config.
    pub head_epochs: usize,
}

impl Default for HordeConfig {
    fn default() -> Self {
        HordeConfig {
            min_classes_for_fe: 5,
            seen_fraction_stop: 0.85,
            max_fes: 10,
            estimation_heuristic: EstimationHeuristic::OriginalFeatures,
            alpha_mode: AlphaMode::Adaptive,
            margin: 0.5,
            head_epochs: 0,
        }
    }
}

impl HordeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_fes == 0 {
            return Err(Error::config("max_fes must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.seen_fraction_stop) {
            return Err(Error::config("seen_fraction_stop must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Whether the experience gets a new feature extractor. `seen_before` counts
/// the distinct classes seen before this experience.
pub fn should_add_fe(
    is_first: bool,
    experience_classes: usize,
    seen_before: usize,
    total_classes: usize,
    ensemble_size: usize,
    cfg: &HordeConfig,
) -> bool {
    if is_first {
        return true;
    }
    let fraction = seen_before as f64 / total_classes.max(1) as f64;
    experience_classes >= cfg.min_classes_for_fe
        && fraction < cfg.seen_fraction_stop
        && ensemble_size < cfg.max_fes
}

/// A frozen backbone.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    pub id: usize,
    pub net: MlpNetwork,
    pub classes_trained_on: BTreeSet<usize>,
    /// Metric weight used in each training epoch.
    pub alpha_history: Vec<f64>,
}

impl FeatureExtractor {
    pub fn feature_dim(&self) -> usize {
        self.net.spec().feature_dim()
    }
}

/// Trains a fresh extractor with `(1 - alpha) CE + alpha ML` and strips its
/// heads. A one-class experience falls back to cross-entropy alone.
pub fn train_fe(
    id: usize,
    exp: &ExperienceData,
    ctx: &StrategyContext,
    cfg: &HordeConfig,
    log: &mut Vec<String>,
) -> Result<FeatureExtractor> {
    let train = &ctx.train;
    let mut net = fresh_network(ctx, exp.classes.len(), true, &[id as u64])?;
    let labels = exp.local_labels();
    let metric = exp.classes.len() >= 2;
    if !metric {
        log.push(format!(
            "horde: experience {} has one class, extractor {id} trained with cross-entropy only",
            exp.index
        ));
    }
    let mut alpha = match cfg.alpha_mode {
        AlphaMode::Adaptive => 0.5,
        AlphaMode::Fixed(a) => a,
    };
    if !metric {
        alpha = 0.0;
    }
    let seed = ctx.seed_for(&[domain::STRATEGY, id as u64, exp.index as u64]);
    let n_params = net.n_params();
    let mut sgd = train.optimizer(n_params);
    let mut history = Vec::with_capacity(train.epochs);
    for epoch in 0..train.epochs {
        history.push(alpha);
        let (mut ce_sum, mut ml_sum, mut ml_batches) = (0.0, 0.0, 0usize);
        let epoch_seed = crate::rng::derive_seed(seed, &[epoch as u64]);
        let a = alpha;
        let losses = train_loop(&mut net, &mut sgd, exp.len(), train.batch_size, 1, epoch_seed, 0..n_params, |net, batch, rng| {
            let bx = augment(&exp.x.select_rows(batch), train.augmentation, rng);
            let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let fwd = net.forward(&bx)?;
            let mut ce = cross_entropy(&fwd.logits, &by)?;
            ce_sum += ce.loss;
            let mut loss = (1.0 - a) * ce.loss;
            ce.grad.scale(1.0 - a);
            let mut grad_proj = None;
            if a > 0.0 {
                let z = fwd.projection.as_ref().expect("extractors train with a projection head");
                match triplet_contrastive_loss(z, &by, cfg.margin, Mining::HardNegative, rng) {
                    Ok((mut ml, anchors)) => {
                        let mean = ml.loss / anchors as f64;
                        ml_sum += mean;
                        ml_batches += 1;
                        loss += a * mean;
                        ml.grad.scale(a / anchors as f64);
                        grad_proj = Some(ml.grad);
                    }
                    Err(Error::DegenerateBatch(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            let g = net.backward(&fwd, Some(&ce.grad), grad_proj.as_ref(), None)?;
            Ok(Some((loss, g)))
        });
        let losses = match losses {
            Err(Error::Training { batch, message }) => {
                return Err(Error::Training {
                    batch: batch + epoch * exp.len().div_ceil(train.batch_size),
                    message,
                })
            }
            other => other?,
        };
        debug_assert_eq!(losses.len(), 1);
        if cfg.alpha_mode == AlphaMode::Adaptive && metric && ml_batches > 0 {
            let n = exp.len().div_ceil(train.batch_size) as f64;
            alpha = adaptive_alpha(ce_sum / n, ml_sum / ml_batches as f64, alpha);
        }
    }
    Ok(FeatureExtractor {
        id,
        net: net.strip_heads()?,
        classes_trained_on: exp.classes.iter().copied().collect(),
        alpha_history: history,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ClassStats {
    /// Column means and sample standard deviations (denominator `n - 1`),
    /// floored at [`STD_FLOOR`].
    pub fn from_features(f: &Matrix) -> Result<Self> {
        let (n, d) = f.shape();
        if n == 0 {
            return Err(Error::shape("class statistics need at least one sample"));
        }
        let mut mean = vec![0.0; d];
        for row in f.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in f.iter_rows() {
            var.iter_mut()
                .zip(row.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let std = var
            .iter()
            .map(|s| {
                if n > 1 {
                    (s / (n - 1) as f64).sqrt().max(STD_FLOOR)
                } else {
                    STD_FLOOR
                }
            })
            .collect();
        Ok(ClassStats { mean, std })
    }
}

/// Statistics keyed by `(class, extractor id)`; an absent key is unknown.
pub type StatsTable = BTreeMap<(usize, usize), ClassStats>;

/// Recomputes the statistics of every class in `exp` under every extractor,
/// replacing earlier values.
pub fn update_class_stats(
    stats: &mut StatsTable,
    exp: &ExperienceData,
    extractors: &[FeatureExtractor],
) -> Result<()> {
    if extractors.is_empty() {
        return Err(Error::config("class statistics need at least one extractor"));
    }
    for fe in extractors {
        let feats = fe.net.features(&exp.x)?;
        for &c in &exp.classes {
            let rows: Vec<usize> = (0..exp.len()).filter(|&i| exp.y[i] == c).collect();
            stats.insert((c, fe.id), ClassStats::from_features(&feats.select_rows(&rows))?);
        }
    }
    Ok(())
}

/// Moves concatenated features `a_i` of class `i` to the statistics of
/// class `j`, block by block: `mu_j + (a_i - mu_i) / sigma_i * sigma_j`.
/// Unknown target statistics use `sigma = 1` and a mean set by `heuristic`.
pub fn pseudo_project<R: Rng + ?Sized>(
    a_i: &[f64],
    source: &[&ClassStats],
    target: &[Option<&ClassStats>],
    heuristic: EstimationHeuristic,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if source.len() != target.len() {
        return Err(Error::shape("one source and one target entry per extractor"));
    }
    let width: usize = source.iter().map(|s| s.mean.len()).sum();
    if width != a_i.len() {
        return Err(Error::shape("feature width differs from the statistics"));
    }
    let mut out = Vec::with_capacity(a_i.len());
    let mut start = 0;
    for (src, tgt) in source.iter().zip(target) {
        let block = &a_i[start..start + src.mean.len()];
        start += src.mean.len();
        if tgt.is_some_and(|t| t == *src) {
            out.extend_from_slice(block);
            continue;
        }
        for (k, &a) in block.iter().enumerate() {
            let z = (a - src.mean[k]) / src.std[k].max(STD_FLOOR);
            let (mu, sigma) = match tgt {
                Some(t) => (t.mean[k], t.std[k]),
                None => (
                    match heuristic {
                        EstimationHeuristic::Zeros => 0.0,
                        EstimationHeuristic::Random => StandardNormal.sample(rng),
                        EstimationHeuristic::OriginalFeatures => a,
                    },
                    1.0,
                ),
            };
            out.push(mu + z * sigma);
        }
    }
    Ok(out)
}

/// Linear classifier over concatenated extractor features. Row `r` of the
/// weights belongs to `classes[r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnifiedHead {
    pub classes: Vec<usize>,
    pub in_dim: usize,
    /// Row-major `classes.len() x in_dim` weights, then one bias per class.
    pub params: Vec<f64>,
}

impl UnifiedHead {
    pub fn empty() -> Self {
        UnifiedHead {
            classes: Vec::new(),
            in_dim: 0,
            params: Vec::new(),
        }
    }

    fn n_out(&self) -> usize {
        self.classes.len()
    }

    pub fn weight(&self, r: usize, k: usize) -> f64 {
        self.params[r * self.in_dim + k]
    }

    pub fn bias(&self, r: usize) -> f64 {
        self.params[self.n_out() * self.in_dim + r]
    }

    /// Adds zero rows for new classes (kept sorted) and zero columns for new
    /// input features appended at the end.
    pub fn grow(&mut self, classes: &BTreeSet<usize>, in_dim: usize) {
        let new_classes: Vec<usize> = classes.iter().copied().collect();
        let mut params = vec![0.0; new_classes.len() * (in_dim + 1)];
        let bias_at = new_classes.len() * in_dim;
        for (r, c) in new_classes.iter().enumerate() {
            if let Ok(old) = self.classes.binary_search(c) {
                for k in 0..self.in_dim {
                    params[r * in_dim + k] = self.weight(old, k);
                }
                params[bias_at + r] = self.bias(old);
            }
        }
        self.classes = new_classes;
        self.in_dim = in_dim;
        self.params = params;
    }

    pub fn logits(&self, a: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), self.n_out());
        for i in 0..a.rows() {
            let row = a.row(i);
            for r in 0..self.n_out() {
                let w = &self.params[r * self.in_dim..(r + 1) * self.in_dim];
                out.set(i, r, crate::nn::dot(w, row) + self.bias(r));
            }
        }
        out
    }

    /// Gradient of the parameters given the loss gradient at the logits.
    pub fn backward(&self, a: &Matrix, grad_logits: &Matrix) -> Vec<f64> {
        let mut g = vec![0.0; self.params.len()];
        let bias_at = self.n_out() * self.in_dim;
        for i in 0..a.rows() {
            let row = a.row(i);
            for r in 0..self.n_out() {
                let gl = grad_logits.get(i, r);
                if gl != 0.0 {
                    crate::nn::axpy(gl, row, &mut g[r * self.in_dim..(r + 1) * self.in_dim]);
                    g[bias_at + r] += gl;
                }
            }
        }
        g
    }

    pub fn predict(&self, a: &Matrix) -> Vec<usize> {
        self.logits(a)
            .iter_rows()
            .map(|row| self.classes[argmax(row)])
            .collect()
    }
}

/// Concatenated features of all extractors, in ensemble order.
pub fn concat_features(extractors: &[FeatureExtractor], x: &Matrix) -> Result<Matrix> {
    let blocks: Vec<Matrix> = extractors
        .iter()
        .map(|fe| fe.net.features(x))
        .collect::<Result<_>>()?;
    let refs: Vec<&Matrix> = blocks.iter().collect();
    Matrix::hstack(&refs)
}

pub struct Horde {
    ctx: StrategyContext,
    cfg: HordeConfig,
    extractors: Vec<FeatureExtractor>,
    stats: StatsTable,
    head: UnifiedHead,
    seen: BTreeSet<usize>,
    experiences_seen: usize,
    log: Vec<String>,
}

impl Horde {
    pub fn new(ctx: StrategyContext, cfg: HordeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Horde {
            ctx,
            cfg,
            extractors: Vec::new(),
            stats: StatsTable::new(),
            head: UnifiedHead::empty(),
            seen: BTreeSet::new(),
            experiences_seen: 0,
            log: Vec::new(),
        })
    }

    pub fn extractors(&self) -> &[FeatureExtractor] {
        &self.extractors
    }

    pub fn head(&self) -> &UnifiedHead {
        &self.head
    }

    pub fn stats(&self) -> &StatsTable {
        &self.stats
    }

    /// Fine-tunes the head on original features (own label) and one pseudo
    /// projection per sample towards a class learned earlier.
    fn train_head(&mut self, exp: &ExperienceData, old_classes: &[usize]) -> Result<()> {
        let train = &self.ctx.train;
        let epochs = if self.cfg.head_epochs == 0 { train.epochs } else { self.cfg.head_epochs };
        let feats = concat_features(&self.extractors, &exp.x)?;
        let fe_ids: Vec<usize> = self.extractors.iter().map(|fe| fe.id).collect();
        let row_of: BTreeMap<usize, usize> =
            self.head.classes.iter().enumerate().map(|(r, &c)| (c, r)).collect();
        let seed = self.ctx.seed_for(&[domain::PROJECTION, exp.index as u64]);
        let mut sgd = Sgd::new(train.learning_rate, train.momentum, train.weight_decay, self.head.params.len());
        let mut batch_no = 0usize;
        for epoch in 0..epochs {
            let mut order = substream(seed, &[domain::SHUFFLE, epoch as u64]);
            for batch in crate::nn::shuffled_batches(exp.len(), train.batch_size, &mut order) {
                let mut rng = substream(seed, &[domain::AUGMENT, batch_no as u64]);
                let mut rows: Vec<Vec<f64>> = batch.iter().map(|&i| feats.row(i).to_vec()).collect();
                let mut labels: Vec<usize> = batch.iter().map(|&i| row_of[&exp.y[i]]).collect();
                if !old_classes.is_empty() {
                    for &i in &batch {
                        let ci = exp.y[i];
                        let j = old_classes[rng.random_range(0..old_classes.len())];
                        let src: Vec<&ClassStats> = fe_ids.iter().map(|&e| &self.stats[&(ci, e)]).collect();
                        let tgt: Vec<Option<&ClassStats>> = fe_ids.iter().map(|&e| self.stats.get(&(j, e))).collect();
                        rows.push(pseudo_project(feats.row(i), &src, &tgt, self.cfg.estimation_heuristic, &mut rng)?);
                        labels.push(row_of[&j]);
                    }
                }
                let a = Matrix::from_rows(&rows)?;
                let lg = cross_entropy(&self.head.logits(&a), &labels)?;
                let g = self.head.backward(&a, &lg.grad);
                let n = self.head.params.len();
                sgd.step(&mut self.head.params, &g, 0..n, batch_no)?;
                batch_no += 1;
            }
        }
        Ok(())
    }
}

impl Strategy for Horde {
    fn name(&self) -> &str {
        "horde"
    }

    fn train_experience(&mut self, exp: &ExperienceData) -> Result<()> {
        if exp.is_empty() {
            return Err(Error::config(format!("experience {} is empty", exp.index)));
        }
        let is_first = self.experiences_seen == 0;
        if should_add_fe(
            is_first,
            exp.classes.len(),
            self.seen.len(),
            self.ctx.n_classes,
            self.extractors.len(),
            &self.cfg,
        ) {
            let id = self.extractors.len();
            let fe = train_fe(id, exp, &self.ctx, &self.cfg, &mut self.log)?;
            self.extractors.push(fe);
        }
        update_class_stats(&mut self.stats, exp, &self.extractors)?;
        let old: Vec<usize> = self.seen.iter().copied().collect();
        self.seen.extend(&exp.classes);
        let width = self.extractors.iter().map(FeatureExtractor::feature_dim).sum();
        self.head.grow(&self.seen, width);
        self.train_head(exp, &old)?;
        self.experiences_seen += 1;
        Ok(())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        if self.extractors.is_empty() {
            return Err(Error::Run("horde has not been trained".into()));
        }
        Ok(self.head.predict(&concat_features(&self.extractors, x)?))
    }

    fn run_log(&self) -> &[String] {
        &self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TrainConfig;
    use crate::strategy::baselines::tests::two_blob_experiences;

    #[test]
    fn fe_rule_examples() {
        let cfg = HordeConfig::default();
        assert!(should_add_fe(true, 2, 0, 100, 0, &cfg));
        assert!(!should_add_fe(false, 4, 10, 100, 1, &cfg));
        assert!(!should_add_fe(false, 10, 86, 100, 1, &cfg));
        assert!(should_add_fe(false, 10, 84, 100, 1, &cfg));
        assert!(!should_add_fe(false, 10, 20, 100, 10, &cfg));
    }

    #[test]
    fn alpha_parsing_and_rule() {
        assert_eq!("adaptive".parse::<AlphaMode>().unwrap(), AlphaMode::Adaptive);
        assert_eq!("fixed:0.25".parse::<AlphaMode>().unwrap(), AlphaMode::Fixed(0.25));
        assert!("fixed:2".parse::<AlphaMode>().is_err());
        assert!("sometimes".parse::<AlphaMode>().is_err());
        assert_eq!(adaptive_alpha(2.0, 1.0, 0.5), 1.0 / 3.0);
        assert_eq!(adaptive_alpha(0.0, 0.0, 0.4), 0.4);
    }

    #[test]
    fn stats_examples() {
        let s = ClassStats::from_features(&Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(s.mean, vec![1.0, 1.0]);
        assert_eq!(s.std, vec![2f64.sqrt(); 2]);
        let c = ClassStats::from_features(&Matrix::from_rows(&[vec![3.0], vec![3.0]]).unwrap()).unwrap();
        assert_eq!(c.std, vec![STD_FLOOR]);
        let one = ClassStats::from_features(&Matrix::from_rows(&[vec![3.0]]).unwrap()).unwrap();
        assert_eq!(one.std, vec![STD_FLOOR]);
    }

    #[test]
    fn projection_examples() {
        let mut rng = substream(0, &[]);
        let si = ClassStats { mean: vec![1.0, 2.0], std: vec![1.0, 2.0] };
        let sj = ClassStats { mean: vec![0.0, 0.0], std: vec![2.0, 1.0] };
        let out = pseudo_project(&[2.0, 4.0], &[&si], &[Some(&sj)], EstimationHeuristic::Zeros, &mut rng).unwrap();
        assert_eq!(out, vec![2.0, 1.0]);
        let a = [0.3, -7.1];
        assert_eq!(pseudo_project(&a, &[&si], &[Some(&si)], EstimationHeuristic::Zeros, &mut rng).unwrap(), a);
        let unit = ClassStats { mean: vec![0.0, 0.0], std: vec![1.0, 1.0] };
        let out = pseudo_project(&a, &[&unit], &[Some(&sj)], EstimationHeuristic::Zeros, &mut rng).unwrap();
        assert_eq!(out, vec![0.3 * 2.0, -7.1]);
    }

    #[test]
    fn unknown_target_heuristics() {
        let mut rng = substream(0, &[]);
        let si = ClassStats { mean: vec![1.0], std: vec![2.0] };
        let run = |h, rng: &mut _| pseudo_project(&[5.0], &[&si], &[None], h, rng).unwrap()[0];
        assert_eq!(run(EstimationHeuristic::Zeros, &mut rng), 2.0);
        assert_eq!(run(EstimationHeuristic::OriginalFeatures, &mut rng), 7.0);
        let r = run(EstimationHeuristic::Random, &mut rng);
        assert!(r.is_finite() && r != 2.0);
    }

    #[test]
    fn head_growth_keeps_rows() {
        let mut h = UnifiedHead::empty();
        h.grow(&(0..10).collect(), 3);
        h.params.iter_mut().enumerate().for_each(|(i, p)| *p = i as f64);
        let before = h.clone();
        h.grow(&(0..15).collect(), 5);
        assert_eq!(h.classes.len(), 15);
        assert_eq!(h.weight(4, 2), before.weight(4, 2));
        assert_eq!(h.weight(4, 3), 0.0);
        assert_eq!(h.bias(9), before.bias(9));
        assert_eq!(h.bias(12), 0.0);
    }

    fn small_ctx() -> StrategyContext {
        StrategyContext {
            input_dim: 8,
            n_classes: 4,
            n_experiences: 2,
            train: TrainConfig {
                epochs: 6,
                hidden: vec![16],
                projection_dim: 8,
                ..TrainConfig::default()
            },
            seed: 9,
        }
    }

    #[test]
    fn alpha_zero_is_cross_entropy_only() {
        let (exps, _, _) = two_blob_experiences();
        let ctx = small_ctx();
        let cfg = HordeConfig { alpha_mode: AlphaMode::Fixed(0.0), ..HordeConfig::default() };
        let fe = train_fe(0, &exps[0], &ctx, &cfg, &mut Vec::new()).unwrap();
        let mut net = fresh_network(&ctx, 2, true, &[0]).unwrap();
        let seed = ctx.seed_for(&[domain::STRATEGY, 0, 1]);
        let n = net.n_params();
        let mut sgd = ctx.train.optimizer(n);
        let labels = exps[0].local_labels();
        for epoch in 0..ctx.train.epochs {
            let s = crate::rng::derive_seed(seed, &[epoch as u64]);
            train_loop(&mut net, &mut sgd, exps[0].len(), ctx.train.batch_size, 1, s, 0..n, |net, batch, rng| {
                let bx = augment(&exps[0].x.select_rows(batch), ctx.train.augmentation, rng);
                let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                let fwd = net.forward(&bx)?;
                let lg = cross_entropy(&fwd.logits, &by)?;
                Ok(Some((lg.loss, net.backward(&fwd, Some(&lg.grad), None, None)?)))
            })
            .unwrap();
        }
        assert_eq!(fe.net.params(), net.strip_heads().unwrap().params());
    }

    #[test]
    fn extractors_stay_frozen_and_head_grows() {
        let (exps, tx, _) = two_blob_experiences();
        let cfg = HordeConfig { min_classes_for_fe: 2, ..HordeConfig::default() };
        let mut h = Horde::new(small_ctx(), cfg).unwrap();
        h.train_experience(&exps[0]).unwrap();
        let frozen = h.extractors()[0].net.params().to_vec();
        assert_eq!(h.head().classes, vec![0, 1]);
        h.train_experience(&exps[1]).unwrap();
        assert_eq!(h.extractors()[0].net.params(), &frozen[..]);
        assert_eq!(h.extractors().len(), 2);
        assert_eq!(h.head().classes, vec![0, 1, 2, 3]);
        assert_eq!(h.predict(&tx).unwrap(), h.predict(&tx).unwrap());
    }
}
