//! Experiment configuration (TOML).
//!
//! ```toml
//! [experiment]
//! name = "table3"
//! streams = ["S4", "NOREP-20x5"]
//! strategies = ["naive", "er200", "hatcir"]
//! seeds = [0, 1, 2, 3, 4]
//! scale = "desk"
//!
//! [dataset]
//! kind = "synthetic"
//! n_classes = 20
//!
//! [train]
//! epochs = 20
//!
//! [hatcir]
//! ensembles = 2
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Dataset, SyntheticSpec, TrainConfig};
use crate::strategy::baselines::BaselineConfig;
use crate::strategy::dwgrnet::DwgrConfig;
use crate::strategy::hatcir::HatCirConfig;
use crate::strategy::horde::HordeConfig;
use crate::strategy::StrategyConfigs;
use crate::stream::{FirstOccurrenceDist, Preset, RepetitionSpec, Scale};

/// Environment variable that overrides `experiment.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "CIRSIM_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub streams: Vec<String>,
    pub strategies: Vec<String>,
    pub seeds: Vec<u64>,
    pub scale: Scale,
    pub output_dir: PathBuf,
    /// Evaluate after every experience, not only after the last.
    pub eval_every_experience: bool,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            name: "experiment".into(),
            streams: vec!["S4".into()],
            strategies: vec!["naive".into()],
            seeds: vec![0],
            scale: Scale::Desk,
            output_dir: PathBuf::from("results"),
            eval_every_experience: true,
            jobs: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    /// Pre-extracted feature vectors: `label,f1,f2,...` per line.
    Csv {
        n_classes: usize,
        train: PathBuf,
        test: PathBuf,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic(SyntheticSpec::default())
    }
}

impl DatasetSpec {
    /// Synthetic data depends on the run seed; files do not.
    pub fn load(&self, seed: u64, base: &Path) -> Result<Dataset> {
        match self {
            DatasetSpec::Synthetic(spec) => {
                spec.generate(crate::rng::derive_seed(seed, &[crate::rng::domain::DATASET]))
            }
            DatasetSpec::Csv {
                n_classes,
                train,
                test,
            } => Dataset::load_csv(*n_classes, &base.join(train), &base.join(test)),
        }
    }
}

/// A stream defined in the config file, generated per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomStream {
    pub n_experiences: usize,
    pub experience_size: usize,
    pub first_occurrence: FirstOccurrenceDist,
    pub repetition: RepetitionSpec,
}

/// How a stream id in `experiment.streams` is resolved.
#[derive(Clone, Debug, PartialEq)]
pub enum StreamSource {
    Preset(Preset),
    /// Disjoint groups of `group` classes, each seen once.
    NoRepetition { group: usize },
    Custom(CustomStream),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub stream: BTreeMap<String, CustomStream>,
    pub hatcir: HatCirConfig,
    pub horde: HordeConfig,
    pub dwgrnet: DwgrConfig,
    pub baselines: BaselineConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn strategy_configs(&self) -> StrategyConfigs {
        StrategyConfigs {
            hatcir: self.hatcir.clone(),
            horde: self.horde.clone(),
            dwgrnet: self.dwgrnet.clone(),
            baselines: self.baselines.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.seeds.is_empty() {
            return Err(Error::config("experiment.seeds must not be empty"));
        }
        if e.streams.is_empty() || e.strategies.is_empty() {
            return Err(Error::config("experiment needs at least one stream and one strategy"));
        }
        self.train.validate()?;
        self.hatcir.validate()?;
        self.horde.validate()?;
        self.dwgrnet.validate()?;
        for s in &e.streams {
            self.resolve_stream(s)?;
        }
        for id in &e.strategies {
            let ctx = crate::strategy::StrategyContext {
                input_dim: 1,
                n_classes: 1,
                n_experiences: 1,
                train: self.train.clone(),
                seed: 0,
            };
            match crate::strategy::build_strategy(id, ctx, &self.strategy_configs()) {
                Ok(_) => {}
                // Fragment counts are checked against the real stream later.
                Err(Error::Config(m)) if m.contains("fragments") => {}
                Err(err) => return Err(err),
            }
        }
        Ok(())
    }

    pub fn resolve_stream(&self, id: &str) -> Result<StreamSource> {
        if let Some(custom) = self.stream.get(id) {
            return Ok(StreamSource::Custom(custom.clone()));
        }
        if let Some(rest) = id.strip_prefix("NOREP") {
            // `NOREP-<experiences>x<group>`; the experience count follows from
            // the dataset's class count, only the group size is used.
            let group = match rest.rsplit_once('x') {
                None if rest.is_empty() => 5,
                Some((_, g)) => g
                    .parse()
                    .map_err(|_| Error::config(format!("stream `{id}`: bad group size")))?,
                None => return Err(Error::config(format!("unknown stream `{id}`"))),
            };
            if group == 0 {
                return Err(Error::config("no-repetition group size must be positive"));
            }
            return Ok(StreamSource::NoRepetition { group });
        }
        Preset::parse(id).map(StreamSource::Preset)
    }

    /// The output directory, honouring [`OUTPUT_DIR_ENV`].
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.experiment.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[experiment]
name = "demo"
streams = ["S4", "NOREP-20x5", "tiny"]
strategies = ["naive", "er:50", "hatcir"]
seeds = [1, 2]

[dataset]
kind = "synthetic"
n_classes = 6
input_dim = 4

[train]
epochs = 3

[stream.tiny]
n_experiences = 3
experience_size = 30
first_occurrence = { kind = "uniform" }
repetition = { kind = "fixed", q = 0.5 }

[hatcir]
ensembles = 1
"#;

    #[test]
    fn parses_all_sections() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.experiment.seeds, vec![1, 2]);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.hatcir.ensembles, 1);
        assert!(matches!(cfg.dataset, DatasetSpec::Synthetic(SyntheticSpec { n_classes: 6, .. })));
        assert_eq!(cfg.resolve_stream("NOREP-20x5").unwrap(), StreamSource::NoRepetition { group: 5 });
        assert!(matches!(cfg.resolve_stream("tiny").unwrap(), StreamSource::Custom(_)));
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "[experiment]\nseeds = []",
            "[experiment]\nstreams = [\"S9\"]",
            "[experiment]\nstrategies = [\"magic\"]",
            "[train]\nepochs = 0",
            "[experiment]\nunknown = 1",
            "[hatcir]\nmomentum_weights = [1.0]",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }
}
