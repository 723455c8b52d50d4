use super::matrix::{argmax, Matrix};
use super::mlp::MlpNetwork;
use crate::error::Result;

/// Anything that maps a batch of inputs to class predictions.
pub trait Predictor {
    fn predict(&self, x: &Matrix) -> Result<Vec<usize>>;
}

impl Predictor for MlpNetwork {
    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.iter_rows().map(argmax).collect())
    }
}

/// Fraction of matching entries; 0 for an empty set.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    correct as f64 / labels.len() as f64
}

pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, x: &Matrix, labels: &[usize]) -> Result<f64> {
    Ok(accuracy(&predictor.predict(x)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    struct Fixed(Vec<usize>);

    impl Predictor for Fixed {
        fn predict(&self, _: &Matrix) -> Result<Vec<usize>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn oracle_and_constant_predictors() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let x = Matrix::zeros(40, 1);
        assert_eq!(evaluate(&Fixed(labels.clone()), &x, &labels).unwrap(), 1.0);
        assert_eq!(evaluate(&Fixed(vec![2; 40]), &x, &labels).unwrap(), 0.25);
    }

    #[test]
    fn random_predictor_is_near_chance() {
        let mut rng = substream(12, &[]);
        let labels: Vec<usize> = (0..10_000).map(|i| i % 10).collect();
        let preds: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..10)).collect();
        // binomial sd = sqrt(0.09 / 1e4) = 0.003
        assert!((accuracy(&preds, &labels) - 0.1).abs() < 0.01);
    }
}
