//! Datasets: per-class training pools plus a held-out test split.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// A labeled dataset. Stream sample ids index the rows of `train[class]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub input_dim: usize,
    pub train: Vec<Matrix>,
    pub test_x: Matrix,
    pub test_y: Vec<usize>,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.train.len()
    }

    /// Smallest training pool, which bounds the stream's `samples_per_class`.
    pub fn samples_per_class(&self) -> usize {
        self.train.iter().map(Matrix::rows).min().unwrap_or(0)
    }

    /// Builds a dataset from pre-extracted feature vectors.
    pub fn from_labeled(
        n_classes: usize,
        train: &[(Vec<f64>, usize)],
        test: &[(Vec<f64>, usize)],
    ) -> Result<Self> {
        let input_dim = train
            .first()
            .map(|(x, _)| x.len())
            .ok_or_else(|| Error::config("training set is empty"))?;
        let check = |(x, y): &(Vec<f64>, usize)| -> Result<()> {
            if x.len() != input_dim {
                return Err(Error::shape(format!(
                    "feature vector of length {} (expected {input_dim})",
                    x.len()
                )));
            }
            if *y >= n_classes {
                return Err(Error::config(format!("label {y} >= {n_classes} classes")));
            }
            Ok(())
        };
        train.iter().chain(test).try_for_each(check)?;
        let mut pools: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_classes];
        for (x, y) in train {
            pools[*y].push(x.clone());
        }
        if let Some(c) = pools.iter().position(Vec::is_empty) {
            return Err(Error::config(format!("class {c} has no training samples")));
        }
        let mut seen = vec![false; n_classes];
        test.iter().for_each(|(_, y)| seen[*y] = true);
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!("class {c} has no test samples")));
        }
        let train = pools
            .iter()
            .map(|rows| Matrix::from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        let test_rows: Vec<Vec<f64>> = test.iter().map(|(x, _)| x.clone()).collect();
        Ok(Dataset {
            input_dim,
            train,
            test_x: Matrix::from_rows(&test_rows)?,
            test_y: test.iter().map(|(_, y)| *y).collect(),
        })
    }

    /// Loads pre-extracted features from two CSV files whose rows are
    /// `label,f_1,...,f_D`.
    pub fn load_csv(n_classes: usize, train: &Path, test: &Path) -> Result<Self> {
        Self::from_labeled(n_classes, &read_csv(train)?, &read_csv(test)?)
    }

    /// Materializes the given sample ids of one class.
    pub fn train_rows(&self, class: usize, ids: &[u32]) -> Matrix {
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        self.train[class].select_rows(&idx)
    }
}

fn read_csv(path: &Path) -> Result<Vec<(Vec<f64>, usize)>> {
    let text = std::fs::read_to_string(path)?;
    let mut offset = 0;
    let mut rows = Vec::new();
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('#') {
            let bad = |what: &str| Error::Parse {
                offset,
                message: format!("{}: {what}", path.display()),
            };
            let mut fields = trimmed.split(',').map(str::trim);
            let label = fields
                .next()
                .and_then(|f| f.parse::<usize>().ok())
                .ok_or_else(|| bad("invalid label"))?;
            let x = fields
                .map(|f| f.parse::<f64>().map_err(|_| bad("invalid feature value")))
                .collect::<Result<Vec<f64>>>()?;
            rows.push((x, label));
        }
        offset += line.len();
    }
    Ok(rows)
}

/// Gaussian class clusters: class means are drawn with per-coordinate
/// standard deviation `separation`, samples add isotropic noise of standard
/// deviation `spread`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub input_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    pub spread: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 20,
            input_dim: 32,
            train_per_class: 200,
            test_per_class: 50,
            separation: 0.5,
            spread: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        if self.n_classes == 0 || self.input_dim == 0 {
            return Err(Error::config("synthetic dataset needs classes and dimensions"));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::config(
                "every class needs at least one train and one test sample",
            ));
        }
        let d = self.input_dim;
        let mut train = Vec::with_capacity(self.n_classes);
        let mut test_x = Vec::with_capacity(self.n_classes * self.test_per_class * d);
        let mut test_y = Vec::with_capacity(self.n_classes * self.test_per_class);
        for c in 0..self.n_classes {
            let mut rng = substream(seed, &[domain::DATASET, c as u64]);
            let mean: Vec<f64> = (0..d).map(|_| self.separation * normal(&mut rng)).collect();
            let mut draw = |n: usize, out: &mut Vec<f64>| {
                for _ in 0..n {
                    out.extend(mean.iter().map(|m| m + self.spread * normal(&mut rng)));
                }
            };
            let mut pool = Vec::with_capacity(self.train_per_class * d);
            draw(self.train_per_class, &mut pool);
            draw(self.test_per_class, &mut test_x);
            test_y.extend(std::iter::repeat_n(c, self.test_per_class));
            train.push(Matrix::from_vec(self.train_per_class, d, pool)?);
        }
        Ok(Dataset {
            input_dim: d,
            train,
            test_x: Matrix::from_vec(test_y.len(), d, test_x)?,
            test_y,
        })
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_split_shapes() {
        let spec = SyntheticSpec {
            n_classes: 4,
            input_dim: 3,
            train_per_class: 10,
            test_per_class: 2,
            ..Default::default()
        };
        let ds = spec.generate(1).unwrap();
        assert_eq!(ds.n_classes(), 4);
        assert!(ds.train.iter().all(|m| m.shape() == (10, 3)));
        assert_eq!(ds.test_x.shape(), (8, 3));
        assert_eq!(ds.test_y, vec![0, 0, 1, 1, 2, 2, 3, 3]);
        assert_eq!(spec.generate(1).unwrap(), ds);
    }

    #[test]
    fn labeled_loader_groups_by_class() {
        let train = vec![(vec![1.0, 2.0], 1), (vec![3.0, 4.0], 0), (vec![5.0, 6.0], 1)];
        let test = vec![(vec![0.0, 0.0], 0), (vec![1.0, 1.0], 1)];
        let ds = Dataset::from_labeled(2, &train, &test).unwrap();
        assert_eq!(ds.train[1].rows(), 2);
        assert_eq!(ds.train_rows(1, &[1]).row(0), &[5.0, 6.0]);
        assert!(Dataset::from_labeled(3, &train, &test).is_err());
    }

    #[test]
    fn csv_loader_reports_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let (tr, te) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
        std::fs::write(&tr, "# label,x,y\n0,1.0,2.0\n1,0.5,-1\n").unwrap();
        std::fs::write(&te, "0,0,0\n1,1,1\n").unwrap();
        let ds = Dataset::load_csv(2, &tr, &te).unwrap();
        assert_eq!(ds.input_dim, 2);
        std::fs::write(&te, "0,0,0\n1,x,1\n").unwrap();
        match Dataset::load_csv(2, &tr, &te) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
    }
}
