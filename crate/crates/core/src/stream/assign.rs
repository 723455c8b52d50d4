//! Sample assignment: turns a presence schedule into concrete experiences.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::StreamConfig;
use super::schedule::{build_schedule, ClassSchedule};
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// One experience of a stream. Sample ids index into the training pool of
/// their class (`0..samples_per_class`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    /// 1-based position in the stream.
    pub index: usize,
    pub classes: Vec<usize>,
    pub samples: BTreeMap<usize, Vec<u32>>,
}

impl Experience {
    pub fn total_samples(&self) -> usize {
        self.samples.values().map(Vec::len).sum()
    }
}

/// A realized stream: its configuration, schedule and experiences.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub config: StreamConfig,
    pub schedule: ClassSchedule,
    pub experiences: Vec<Experience>,
}

impl Stream {
    /// Generates the stream fully determined by `config` (including its seed).
    pub fn generate(config: &StreamConfig) -> Result<Self> {
        let schedule = build_schedule(config)?;
        assign_samples(schedule, config)
    }

    pub fn len(&self) -> usize {
        self.experiences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiences.is_empty()
    }

    /// Checks the structural invariants tying experiences to the schedule.
    pub fn validate(&self) -> Result<()> {
        let n = self.config.n_experiences;
        if self.experiences.len() != n || self.schedule.n_experiences() != n {
            return Err(Error::config(format!(
                "stream has {} experiences, config says {n}",
                self.experiences.len()
            )));
        }
        if self.schedule.n_classes() != self.config.n_classes {
            return Err(Error::config("schedule class count differs from config"));
        }
        for (i, exp) in self.experiences.iter().enumerate() {
            if exp.index != i + 1 {
                return Err(Error::config(format!(
                    "experience at position {i} has index {}",
                    exp.index
                )));
            }
            if exp.classes != self.schedule.classes_at(exp.index) {
                return Err(Error::config(format!(
                    "experience {} class list disagrees with the schedule",
                    exp.index
                )));
            }
            if exp.samples.keys().copied().collect::<Vec<_>>() != exp.classes {
                return Err(Error::config(format!(
                    "experience {} sample map keys differ from its classes",
                    exp.index
                )));
            }
            let pool = self.config.samples_per_class as u32;
            if exp.samples.values().flatten().any(|&id| id >= pool) {
                return Err(Error::config(format!(
                    "experience {} references a sample outside the class pool",
                    exp.index
                )));
            }
        }
        Ok(())
    }
}

/// Per-class sample quotas for an experience of `size` samples over the
/// given ascending class list: `size / k` each, remainder to the lowest ids.
pub fn class_quotas(size: usize, classes: &[usize]) -> Vec<usize> {
    let k = classes.len();
    if k == 0 {
        return Vec::new();
    }
    let (base, rem) = (size / k, size % k);
    (0..k).map(|i| base + usize::from(i < rem)).collect()
}

/// Fills every experience of the schedule with sample ids.
///
/// Within an experience ids are drawn without replacement from the class pool
/// (with replacement when the quota exceeds the pool); draws for different
/// experiences are independent.
pub fn assign_samples(schedule: ClassSchedule, config: &StreamConfig) -> Result<Stream> {
    if config.samples_per_class == 0 {
        return Err(Error::config("class pool is empty (samples_per_class = 0)"));
    }
    if schedule.n_experiences() != config.n_experiences || schedule.n_classes() != config.n_classes
    {
        return Err(Error::config("schedule does not match the stream config"));
    }
    let pool = config.samples_per_class;
    let experiences = (1..=config.n_experiences)
        .map(|t| {
            let classes = schedule.classes_at(t);
            let quotas = class_quotas(config.experience_size, &classes);
            let samples = classes
                .iter()
                .zip(quotas)
                .map(|(&c, quota)| {
                    let mut rng =
                        substream(config.seed, &[domain::SAMPLES, t as u64, c as u64]);
                    let mut ids: Vec<u32> = if quota <= pool {
                        index::sample(&mut rng, pool, quota)
                            .into_iter()
                            .map(|i| i as u32)
                            .collect()
                    } else {
                        (0..quota).map(|_| rng.random_range(0..pool) as u32).collect()
                    };
                    ids.sort_unstable();
                    (c, ids)
                })
                .collect();
            Experience {
                index: t,
                classes,
                samples,
            }
        })
        .collect();
    Ok(Stream {
        config: config.clone(),
        schedule,
        experiences,
    })
}
