use std::ops::Range;

use crate::error::{Error, Result};

/// SGD with heavy-ball momentum and L2 weight decay:
/// `v <- momentum * v + (g + weight_decay * w)`, `w <- w - lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
    steps: usize,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64, n_params: usize) -> Self {
        Sgd {
            learning_rate,
            momentum,
            weight_decay,
            velocity: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    /// Applies one update to `params[range]`. A non-finite gradient aborts
    /// the step and reports the batch index.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        range: Range<usize>,
        batch: usize,
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.velocity.len() {
            return Err(Error::shape("optimizer, parameter and gradient sizes differ"));
        }
        if let Some(i) = range.clone().find(|&i| !grads[i].is_finite()) {
            return Err(Error::Training {
                batch,
                message: format!("non-finite gradient at parameter {i}"),
            });
        }
        for i in range {
            let g = grads[i] + self.weight_decay * params[i];
            self.velocity[i] = self.momentum * self.velocity[i] + g;
            params[i] -= self.learning_rate * self.velocity[i];
        }
        self.steps += 1;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}
