//! Class presence schedule: first occurrences, repetition probabilities and
//! the Bernoulli presence draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{RepetitionSpec, StreamConfig};
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// An entry inserted to keep an experience from being empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixup {
    pub class: usize,
    /// 1-based experience index.
    pub experience: usize,
}

/// Which classes are present in which experience.
///
/// Experience indices are 1-based throughout the public API; the presence
/// matrix is stored class-major (`class * n_experiences + (t - 1)`).
#[derive(Clone, Debug, PartialEq)]
pub struct ClassSchedule {
    n_classes: usize,
    n_experiences: usize,
    presence: Vec<bool>,
    pub first_occurrence: Vec<usize>,
    pub repetition_probs: Vec<f64>,
    pub fixups: Vec<Fixup>,
}

impl ClassSchedule {
    /// Assembles a schedule from its parts, checking the structural
    /// invariants.
    pub fn from_parts(
        n_classes: usize,
        n_experiences: usize,
        presence: Vec<bool>,
        first_occurrence: Vec<usize>,
        repetition_probs: Vec<f64>,
        fixups: Vec<Fixup>,
    ) -> Result<Self> {
        let schedule = ClassSchedule {
            n_classes,
            n_experiences,
            presence,
            first_occurrence,
            repetition_probs,
            fixups,
        };
        schedule.check()?;
        Ok(schedule)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_experiences(&self) -> usize {
        self.n_experiences
    }

    /// Raw class-major presence bits.
    pub fn presence_bits(&self) -> &[bool] {
        &self.presence
    }

    /// Whether `class` is present in experience `t` (1-based).
    pub fn is_present(&self, class: usize, t: usize) -> bool {
        self.presence[class * self.n_experiences + (t - 1)]
    }

    fn set(&mut self, class: usize, t: usize, value: bool) {
        self.presence[class * self.n_experiences + (t - 1)] = value;
    }

    /// Present classes of experience `t`, ascending.
    pub fn classes_at(&self, t: usize) -> Vec<usize> {
        (0..self.n_classes).filter(|&c| self.is_present(c, t)).collect()
    }

    fn check(&self) -> Result<()> {
        let (c_n, t_n) = (self.n_classes, self.n_experiences);
        if self.presence.len() != c_n * t_n
            || self.first_occurrence.len() != c_n
            || self.repetition_probs.len() != c_n
        {
            return Err(Error::shape("schedule dimensions are inconsistent"));
        }
        for c in 0..c_n {
            let first = self.first_occurrence[c];
            if first == 0 || first > t_n {
                return Err(Error::config(format!(
                    "class {c} first occurs at {first}, outside 1..={t_n}"
                )));
            }
            if !self.is_present(c, first) || (1..first).any(|t| self.is_present(c, t)) {
                return Err(Error::config(format!(
                    "presence row of class {c} disagrees with its first occurrence {first}"
                )));
            }
            if !(0.0..=1.0).contains(&self.repetition_probs[c]) {
                return Err(Error::config(format!(
                    "repetition probability of class {c} outside [0, 1]"
                )));
            }
        }
        if let Some(t) = (1..=t_n).find(|&t| (0..c_n).all(|c| !self.is_present(c, t))) {
            return Err(Error::config(format!("experience {t} has no classes")));
        }
        Ok(())
    }
}

/// Draws the first-occurrence experience (1-based) of every class.
///
/// Class `c` uses its own substream, so the value for a class does not depend
/// on how many classes the stream has.
pub fn sample_first_occurrences(config: &StreamConfig) -> Result<Vec<usize>> {
    let pmf = config.first_occurrence.pmf(config.n_experiences)?;
    let cdf: Vec<f64> = pmf
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    Ok((0..config.n_classes)
        .map(|c| {
            let u: f64 = substream(config.seed, &[domain::FIRST_OCCURRENCE, c as u64]).random();
            invert_cdf(&cdf, &pmf, u) + 1
        })
        .collect())
}

/// Smallest index whose cumulative mass exceeds `u`, skipping zero-mass
/// entries so rounding in the tail never selects an impossible experience.
fn invert_cdf(cdf: &[f64], pmf: &[f64], u: f64) -> usize {
    let idx = cdf.partition_point(|&acc| acc <= u);
    let idx = idx.min(cdf.len() - 1);
    if pmf[idx] > 0.0 {
        idx
    } else {
        (0..=idx).rev().find(|&i| pmf[i] > 0.0).unwrap_or(idx)
    }
}

/// Realizes per-class repetition probabilities.
///
/// Zipf ranks classes by ascending first occurrence, ties broken by class id;
/// rank 1 receives probability 1 and rank `k` receives `k^-e`.
pub fn realize_repetition_probs(
    spec: &RepetitionSpec,
    first_occurrence: &[usize],
) -> Result<Vec<f64>> {
    let n_classes = first_occurrence.len();
    if n_classes == 0 {
        return Err(Error::config("at least one class is required"));
    }
    spec.validate(n_classes)?;
    Ok(match spec {
        RepetitionSpec::Fixed { q } => vec![*q; n_classes],
        RepetitionSpec::Explicit { probs } => probs.clone(),
        RepetitionSpec::Zipf { exponent } => {
            let mut order: Vec<usize> = (0..n_classes).collect();
            order.sort_by_key(|&c| (first_occurrence[c], c));
            let mut probs = vec![0.0; n_classes];
            for (rank0, &c) in order.iter().enumerate() {
                probs[c] = ((rank0 + 1) as f64).powf(-exponent);
            }
            probs
        }
    })
}

/// Builds the full presence schedule for `config`.
///
/// Steps: draw first occurrences; if no class starts in experience 1, move
/// the earliest class (lowest id on ties) there; realize repetition
/// probabilities; draw presence after the first occurrence; fill any
/// remaining empty experience with a uniformly chosen class that already
/// appeared.
pub fn build_schedule(config: &StreamConfig) -> Result<ClassSchedule> {
    config.validate()?;
    let (n_classes, n_exp) = (config.n_classes, config.n_experiences);
    let mut first = sample_first_occurrences(config)?;
    let mut fixups = Vec::new();

    if !first.contains(&1) {
        let earliest = (0..n_classes)
            .min_by_key(|&c| (first[c], c))
            .expect("n_classes >= 1");
        first[earliest] = 1;
        fixups.push(Fixup {
            class: earliest,
            experience: 1,
        });
    }

    let probs = realize_repetition_probs(&config.repetition, &first)?;
    let mut schedule = ClassSchedule {
        n_classes,
        n_experiences: n_exp,
        presence: vec![false; n_classes * n_exp],
        first_occurrence: first,
        repetition_probs: probs,
        fixups,
    };

    for c in 0..n_classes {
        let first_c = schedule.first_occurrence[c];
        schedule.set(c, first_c, true);
        for t in first_c + 1..=n_exp {
            if repeats(config.seed, c, t, schedule.repetition_probs[c]) {
                schedule.set(c, t, true);
            }
        }
    }

    for t in 2..=n_exp {
        if (0..n_classes).any(|c| schedule.is_present(c, t)) {
            continue;
        }
        let candidates: Vec<usize> = (0..n_classes)
            .filter(|&c| schedule.first_occurrence[c] < t)
            .collect();
        let mut rng = substream(config.seed, &[domain::FIXUP, t as u64]);
        let class = candidates[rng.random_range(0..candidates.len())];
        schedule.set(class, t, true);
        schedule.fixups.push(Fixup {
            class,
            experience: t,
        });
    }

    debug_assert!(schedule.check().is_ok());
    Ok(schedule)
}

/// The Bernoulli repetition draw of `class` at experience `t`.
fn repeats(seed: u64, class: usize, t: usize, prob: f64) -> bool {
    if prob >= 1.0 {
        return true;
    }
    if prob <= 0.0 {
        return false;
    }
    let u: f64 = substream(seed, &[domain::REPETITION, class as u64, t as u64]).random();
    u < prob
}
