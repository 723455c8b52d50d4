//! Generator parameters and the bundled challenge presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution over experiences `1..=N` of the first appearance of a class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FirstOccurrenceDist {
    /// Geometric with success probability `p`, truncated to `1..=N` and
    /// renormalized.
    Geometric { p: f64 },
    Uniform,
    /// Arbitrary weights over experiences; truncated or zero-padded to `N`
    /// entries and renormalized.
    Explicit { pmf: Vec<f64> },
}

impl FirstOccurrenceDist {
    /// The normalized pmf over experiences `1..=n` (index 0 is experience 1).
    pub fn pmf(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::config("stream length must be at least 1"));
        }
        let raw: Vec<f64> = match self {
            FirstOccurrenceDist::Geometric { p } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::config(format!(
                        "geometric first-occurrence p must lie in (0, 1], got {p}"
                    )));
                }
                let q = 1.0 - p;
                (0..n).map(|t| p * q.powi(t as i32)).collect()
            }
            FirstOccurrenceDist::Uniform => vec![1.0; n],
            FirstOccurrenceDist::Explicit { pmf } => {
                if let Some(bad) = pmf.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
                    return Err(Error::config(format!(
                        "first-occurrence pmf entries must be finite and non-negative, got {bad}"
                    )));
                }
                (0..n).map(|t| pmf.get(t).copied().unwrap_or(0.0)).collect()
            }
        };
        let mass: f64 = raw.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::config(
                "first-occurrence pmf has zero mass over the stream",
            ));
        }
        Ok(raw.into_iter().map(|w| w / mass).collect())
    }
}

/// How the per-class repetition probabilities are realized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RepetitionSpec {
    /// Class of rank `k` repeats with probability `k^-exponent`.
    Zipf { exponent: f64 },
    Fixed { q: f64 },
    Explicit { probs: Vec<f64> },
}

impl RepetitionSpec {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        match self {
            RepetitionSpec::Zipf { exponent } if !(exponent.is_finite() && *exponent >= 0.0) => {
                Err(Error::config(format!(
                    "zipf exponent must be a non-negative real, got {exponent}"
                )))
            }
            RepetitionSpec::Fixed { q } if !(0.0..=1.0).contains(q) => Err(Error::config(
                format!("fixed repetition probability must lie in [0, 1], got {q}"),
            )),
            RepetitionSpec::Explicit { probs } => {
                if probs.len() != n_classes {
                    return Err(Error::config(format!(
                        "explicit repetition list has {} entries for {} classes",
                        probs.len(),
                        n_classes
                    )));
                }
                match probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    Some(p) => Err(Error::config(format!(
                        "repetition probability {p} outside [0, 1]"
                    ))),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

/// The four control parameters plus dataset size and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub n_experiences: usize,
    pub experience_size: usize,
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub first_occurrence: FirstOccurrenceDist,
    pub repetition: RepetitionSpec,
    pub seed: u64,
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_experiences == 0 {
            return Err(Error::config("n_experiences must be at least 1"));
        }
        if self.experience_size == 0 {
            return Err(Error::config("experience_size must be at least 1"));
        }
        if self.n_classes == 0 {
            return Err(Error::config("n_classes must be at least 1"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("class pool is empty (samples_per_class = 0)"));
        }
        self.first_occurrence.pmf(self.n_experiences)?;
        self.repetition.validate(self.n_classes)
    }
}

/// Sizes a preset is instantiated at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 50 experiences of 2000 samples over 100 classes of 500 images.
    Challenge,
    /// 20 experiences of 200 samples over 20 classes of 200 samples.
    Desk,
}

impl Scale {
    /// `(n_experiences, experience_size, n_classes, samples_per_class)`
    pub fn dims(self) -> (usize, usize, usize, usize) {
        match self {
            Scale::Challenge => (50, 2000, 100, 500),
            Scale::Desk => (20, 200, 20, 200),
        }
    }
}

/// The six challenge streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
}

#[derive(Deserialize)]
struct PresetFile {
    #[allow(dead_code)]
    name: String,
    first_occurrence: FirstOccurrenceDist,
    repetition: RepetitionSpec,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::S1,
        Preset::S2,
        Preset::S3,
        Preset::S4,
        Preset::S5,
        Preset::S6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::S1 => "S1",
            Preset::S2 => "S2",
            Preset::S3 => "S3",
            Preset::S4 => "S4",
            Preset::S5 => "S5",
            Preset::S6 => "S6",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(id))
            .ok_or_else(|| Error::config(format!("unknown stream preset `{id}`")))
    }

    /// The shipped preset file.
    pub fn source(self) -> &'static str {
        match self {
            Preset::S1 => include_str!("../../presets/S1.toml"),
            Preset::S2 => include_str!("../../presets/S2.toml"),
            Preset::S3 => include_str!("../../presets/S3.toml"),
            Preset::S4 => include_str!("../../presets/S4.toml"),
            Preset::S5 => include_str!("../../presets/S5.toml"),
            Preset::S6 => include_str!("../../presets/S6.toml"),
        }
    }

    pub fn distributions(self) -> (FirstOccurrenceDist, RepetitionSpec) {
        let file: PresetFile =
            toml::from_str(self.source()).expect("bundled preset files are valid");
        (file.first_occurrence, file.repetition)
    }

    pub fn config(self, scale: Scale, seed: u64) -> StreamConfig {
        let (n_experiences, experience_size, n_classes, samples_per_class) = scale.dims();
        let (first_occurrence, repetition) = self.distributions();
        StreamConfig {
            n_experiences,
            experience_size,
            n_classes,
            samples_per_class,
            first_occurrence,
            repetition,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_mirror_challenge_table() {
        let expect = [
            (0.5, RepetitionSpec::Zipf { exponent: 0.7 }),
            (0.001, RepetitionSpec::Zipf { exponent: 0.8 }),
            (0.2, RepetitionSpec::Fixed { q: 0.04 }),
            (0.6, RepetitionSpec::Zipf { exponent: 0.8 }),
            (0.001, RepetitionSpec::Zipf { exponent: 0.6 }),
            (0.1, RepetitionSpec::Fixed { q: 0.05 }),
        ];
        for (preset, (p, rep)) in Preset::ALL.into_iter().zip(expect) {
            let cfg = preset.config(Scale::Challenge, 0);
            assert_eq!(cfg.first_occurrence, FirstOccurrenceDist::Geometric { p });
            assert_eq!(cfg.repetition, rep);
            assert_eq!((cfg.n_experiences, cfg.experience_size), (50, 2000));
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn pmf_is_normalized() {
        for dist in [
            FirstOccurrenceDist::Geometric { p: 0.9 },
            FirstOccurrenceDist::Geometric { p: 1.0 },
            FirstOccurrenceDist::Uniform,
            FirstOccurrenceDist::Explicit { pmf: vec![3.0, 0.0, 1.0] },
        ] {
            let pmf = dist.pmf(50).unwrap();
            assert_eq!(pmf.len(), 50);
            assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(pmf.iter().all(|w| *w >= 0.0));
        }
    }

    #[test]
    fn invalid_pmf_is_rejected() {
        let neg = FirstOccurrenceDist::Explicit { pmf: vec![0.5, -0.1] };
        assert!(matches!(neg.pmf(5), Err(Error::Config(_))));
        let zero = FirstOccurrenceDist::Explicit { pmf: vec![0.0; 3] };
        assert!(matches!(zero.pmf(5), Err(Error::Config(_))));
        let beyond = FirstOccurrenceDist::Explicit { pmf: vec![0.0, 0.0, 1.0] };
        assert!(beyond.pmf(2).is_err());
        assert!(FirstOccurrenceDist::Geometric { p: 0.0 }.pmf(5).is_err());
    }

    #[test]
    fn explicit_repetition_length_checked() {
        let spec = RepetitionSpec::Explicit { probs: vec![0.1, 0.2] };
        assert!(spec.validate(2).is_ok());
        assert!(matches!(spec.validate(3), Err(Error::Config(_))));
        assert!(RepetitionSpec::Fixed { q: 1.5 }.validate(1).is_err());
    }
}
