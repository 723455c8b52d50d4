//! Runs (strategy x stream x seed) jobs and persists their metrics.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::compare::{compare, ComparisonTable};
use super::config::{ExperimentConfig, StreamSource};
use super::records::{write_records, write_timings, MetricsRecord, RunStatus, Timing};
use crate::error::{Error, Result};
use crate::nn::{accuracy, Dataset, Matrix};
use crate::rng::{derive_seed, domain};
use crate::strategy::{build_strategy, ExperienceData, Strategy, StrategyContext};
use crate::stream::{
    assign_samples, ClassSchedule, Experience, FirstOccurrenceDist, RepetitionSpec, Stream,
    StreamConfig,
};

/// Materializes the samples of one experience, rows grouped by class.
pub fn experience_data(dataset: &Dataset, exp: &Experience) -> ExperienceData {
    let blocks: Vec<Matrix> = exp
        .samples
        .iter()
        .map(|(&c, ids)| dataset.train_rows(c, ids))
        .collect();
    let refs: Vec<&Matrix> = blocks.iter().collect();
    let x = if refs.is_empty() {
        Matrix::zeros(0, dataset.input_dim)
    } else {
        Matrix::vstack(&refs).expect("rows share the input width")
    };
    ExperienceData {
        index: exp.index,
        classes: exp.classes.clone(),
        x,
        y: exp
            .samples
            .iter()
            .flat_map(|(&c, ids)| std::iter::repeat_n(c, ids.len()))
            .collect(),
    }
}

/// Standard class-incremental stream: consecutive groups of `group` classes,
/// each group one experience holding the full training pool of its classes.
/// A class count not divisible by `group` leaves a smaller last group.
pub fn no_repetition_stream(
    n_classes: usize,
    group: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<Stream> {
    if group == 0 || n_classes == 0 || samples_per_class == 0 {
        return Err(Error::config("no-repetition stream needs classes, samples and a group size"));
    }
    let n = n_classes.div_ceil(group);
    let first_occurrence: Vec<usize> = (0..n_classes).map(|c| c / group + 1).collect();
    let mut presence = vec![false; n_classes * n];
    for (c, &t) in first_occurrence.iter().enumerate() {
        presence[c * n + t - 1] = true;
    }
    let mut pmf = vec![0.0; n];
    for &t in &first_occurrence {
        pmf[t - 1] += 1.0 / n_classes as f64;
    }
    let schedule = ClassSchedule::from_parts(
        n_classes,
        n,
        presence,
        first_occurrence,
        vec![0.0; n_classes],
        Vec::new(),
    )?;
    let config = StreamConfig {
        n_experiences: n,
        experience_size: group * samples_per_class,
        n_classes,
        samples_per_class,
        first_occurrence: FirstOccurrenceDist::Explicit { pmf },
        repetition: RepetitionSpec::Fixed { q: 0.0 },
        seed,
    };
    let mut stream = assign_samples(schedule, &config)?;
    for exp in &mut stream.experiences {
        for ids in exp.samples.values_mut() {
            *ids = (0..samples_per_class as u32).collect();
        }
    }
    Ok(stream)
}

fn name_hash(s: &str) -> u64 {
    // FNV-1a; only needs to be stable.
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// The stream a config id resolves to for one seed. Class count and pool
/// size always follow the dataset; presets contribute their distributions
/// and the scale its length and experience size.
pub fn build_stream(cfg: &ExperimentConfig, id: &str, dataset: &Dataset, seed: u64) -> Result<Stream> {
    let stream_seed = derive_seed(seed, &[domain::STREAM, name_hash(id)]);
    let (c, pool) = (dataset.n_classes(), dataset.samples_per_class());
    match cfg.resolve_stream(id)? {
        StreamSource::NoRepetition { group } => no_repetition_stream(c, group, pool, stream_seed),
        StreamSource::Preset(p) => {
            let mut sc = p.config(cfg.experiment.scale, stream_seed);
            sc.n_classes = c;
            sc.samples_per_class = pool;
            Stream::generate(&sc)
        }
        StreamSource::Custom(custom) => Stream::generate(&StreamConfig {
            n_experiences: custom.n_experiences,
            experience_size: custom.experience_size,
            n_classes: c,
            samples_per_class: pool,
            first_occurrence: custom.first_occurrence,
            repetition: custom.repetition,
            seed: stream_seed,
        }),
    }
}

/// Feeds a stream to a strategy one experience at a time. Returns the
/// accuracy trajectory and the training seconds per experience.
pub fn drive_strategy(
    strategy: &mut dyn Strategy,
    stream: &Stream,
    dataset: &Dataset,
    eval_every_experience: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let evaluate = |s: &dyn Strategy| -> Result<f64> {
        Ok(accuracy(&s.predict(&dataset.test_x)?, &dataset.test_y))
    };
    let mut trajectory = Vec::new();
    let mut seconds = Vec::new();
    if strategy.is_joint() {
        let parts: Vec<ExperienceData> = stream
            .experiences
            .iter()
            .map(|e| experience_data(dataset, e))
            .collect();
        let union = ExperienceData::concat(&parts)?;
        drop(parts);
        let start = Instant::now();
        strategy.train_experience(&union)?;
        seconds.push(start.elapsed().as_secs_f64());
        trajectory.push(evaluate(strategy)?);
        return Ok((trajectory, seconds));
    }
    let last = stream.experiences.len();
    for exp in &stream.experiences {
        let data = experience_data(dataset, exp);
        let start = Instant::now();
        strategy.train_experience(&data)?;
        seconds.push(start.elapsed().as_secs_f64());
        drop(data);
        if eval_every_experience || exp.index == last {
            trajectory.push(evaluate(strategy)?);
        }
    }
    Ok((trajectory, seconds))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Job {
    pub strategy: String,
    pub stream: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobOutput {
    pub record: MetricsRecord,
    pub timing: Timing,
}

/// Runs one job. Failures (errors or panics inside the strategy) become a
/// failed record instead of an error.
pub fn run_job(cfg: &ExperimentConfig, job: &Job, dataset: &Dataset, stream: &Stream) -> JobOutput {
    let ctx = StrategyContext {
        input_dim: dataset.input_dim,
        n_classes: dataset.n_classes(),
        n_experiences: stream.len(),
        train: cfg.train.clone(),
        seed: derive_seed(job.seed, &[domain::STRATEGY]),
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<_> {
        let mut s = build_strategy(&job.strategy, ctx, &cfg.strategy_configs())?;
        let (trajectory, seconds) =
            drive_strategy(s.as_mut(), stream, dataset, cfg.experiment.eval_every_experience)?;
        Ok((trajectory, seconds, s.run_log().to_vec()))
    }));
    let outcome = match outcome {
        Ok(r) => r,
        Err(panic) => Err(Error::Run(
            panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "strategy panicked".into()),
        )),
    };
    let base = MetricsRecord {
        strategy: job.strategy.clone(),
        stream: job.stream.clone(),
        seed: job.seed,
        status: RunStatus::Ok,
        trajectory: Vec::new(),
        final_accuracy: None,
        n_experiences: stream.len(),
        error: None,
        run_log: Vec::new(),
    };
    let (record, seconds) = match outcome {
        Ok((trajectory, seconds, run_log)) => (
            MetricsRecord {
                final_accuracy: trajectory.last().copied(),
                trajectory,
                run_log,
                ..base
            },
            seconds,
        ),
        Err(e) => (
            MetricsRecord {
                status: RunStatus::Failed,
                error: Some(e.to_string()),
                ..base
            },
            Vec::new(),
        ),
    };
    JobOutput {
        record,
        timing: Timing {
            strategy: job.strategy.clone(),
            stream: job.stream.clone(),
            seed: job.seed,
            seconds,
        },
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub records: Vec<MetricsRecord>,
    pub timings: Vec<Timing>,
    pub files: Vec<PathBuf>,
    pub table: ComparisonTable,
}

#[cfg(feature = "parallel")]
fn map_jobs<F>(jobs: &[Job], threads: usize, f: F) -> Result<Vec<JobOutput>>
where
    F: Fn(&Job) -> JobOutput + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Run(e.to_string()))?;
    Ok(pool.install(|| jobs.par_iter().map(&f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn map_jobs<F>(jobs: &[Job], _threads: usize, f: F) -> Result<Vec<JobOutput>>
where
    F: Fn(&Job) -> JobOutput + Sync,
{
    Ok(jobs.iter().map(f).collect())
}

/// Runs every job of the config, writes `.rec`, `.timings` and
/// `summary.txt` into `out_dir` and returns what was written. Relative
/// dataset paths resolve against `base_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let mut inputs: BTreeMap<u64, (Dataset, BTreeMap<String, Stream>)> = BTreeMap::new();
    for &seed in &e.seeds {
        if inputs.contains_key(&seed) {
            continue;
        }
        let dataset = cfg.dataset.load(seed, base_dir)?;
        let streams = e
            .streams
            .iter()
            .map(|id| Ok((id.clone(), build_stream(cfg, id, &dataset, seed)?)))
            .collect::<Result<_>>()?;
        inputs.insert(seed, (dataset, streams));
    }
    let mut jobs = Vec::new();
    for strategy in &e.strategies {
        for stream in &e.streams {
            for &seed in &e.seeds {
                jobs.push(Job {
                    strategy: strategy.clone(),
                    stream: stream.clone(),
                    seed,
                });
            }
        }
    }
    let outputs = map_jobs(&jobs, e.jobs, |job| {
        let (dataset, streams) = &inputs[&job.seed];
        run_job(cfg, job, dataset, &streams[&job.stream])
    })?;
    let (records, timings): (Vec<_>, Vec<_>) =
        outputs.into_iter().map(|o| (o.record, o.timing)).unzip();
    let files = write_records(out_dir, &records)?;
    write_timings(out_dir, &timings)?;
    let table = compare(&records);
    std::fs::write(out_dir.join("summary.txt"), table.render())?;
    Ok(RunSummary {
        records,
        timings,
        files,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn no_repetition_examples() {
        let s = no_repetition_stream(20, 5, 10, 0).unwrap();
        assert_eq!(s.len(), 4);
        s.validate().unwrap();
        let mut all = BTreeSet::new();
        for e in &s.experiences {
            assert_eq!(e.classes.len(), 5);
            for c in &e.classes {
                assert!(all.insert(*c));
            }
            assert!(e.samples.values().all(|ids| ids.len() == 10));
        }
        assert_eq!(all, (0..20).collect());
        let uneven = no_repetition_stream(7, 3, 2, 0).unwrap();
        let sizes: Vec<usize> = uneven.experiences.iter().map(|e| e.classes.len()).collect();
        assert_eq!(sizes, vec![3, 3, 1]);
    }

    #[test]
    fn experience_rows_match_labels() {
        let ds = crate::nn::SyntheticSpec {
            n_classes: 3,
            input_dim: 2,
            train_per_class: 5,
            test_per_class: 1,
            ..Default::default()
        }
        .generate(0)
        .unwrap();
        let exp = Experience {
            index: 1,
            classes: vec![0, 2],
            samples: BTreeMap::from([(0, vec![1, 3]), (2, vec![4])]),
        };
        let d = experience_data(&ds, &exp);
        assert_eq!(d.y, vec![0, 0, 2]);
        assert_eq!(d.x.row(2), ds.train[2].row(4));
    }
}
