//! Label-preserving perturbations for vector inputs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::Matrix;

/// Probability that a coordinate is selected for masking.
pub const MASK_RATE: f64 = 0.1;

/// Returns `x + strength * (eps - mask * x)` with `eps ~ N(0, I)` and `mask`
/// a Bernoulli(`MASK_RATE`) selection, drawn independently per entry.
///
/// At strength 1 a masked coordinate is replaced by pure noise; the
/// perturbation is linear in `strength` for fixed draws, and strength 0 is
/// the identity.
pub fn augment<R: Rng + ?Sized>(x: &Matrix, strength: f64, rng: &mut R) -> Matrix {
    if strength == 0.0 {
        return x.clone();
    }
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        let eps: f64 = StandardNormal.sample(rng);
        let masked = rng.random_bool(MASK_RATE);
        let delta = eps - if masked { *v } else { 0.0 };
        *v += strength * delta;
    }
    out
}

/// Convex blend `lambda * a + (1 - lambda) * b`.
pub fn blend(a: &Matrix, b: &Matrix, lambda: f64) -> Matrix {
    let mut out = a.clone();
    out.as_mut_slice()
        .iter_mut()
        .zip(b.as_slice())
        .for_each(|(x, y)| *x = lambda * *x + (1.0 - lambda) * y);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn batch() -> Matrix {
        Matrix::from_rows(&[vec![1.0, -2.0, 0.5, 3.0], vec![0.0, 4.0, -1.0, 2.0]]).unwrap()
    }

    #[test]
    fn zero_strength_is_identity() {
        let x = batch();
        assert_eq!(augment(&x, 0.0, &mut substream(1, &[])), x);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let x = batch();
        let a = augment(&x, 0.7, &mut substream(9, &[2]));
        let b = augment(&x, 0.7, &mut substream(9, &[2]));
        assert_eq!(a, b);
        assert_eq!(a.shape(), x.shape());
        assert_ne!(a, x);
    }

    #[test]
    fn perturbation_scales_linearly() {
        // Monte-Carlo estimate of E|x' - x| at two strengths over 10^4 draws
        let x = Matrix::from_vec(1, 1, vec![1.5]).unwrap();
        let mean_abs = |s: f64| {
            let mut rng = substream(4, &[]);
            (0..10_000)
                .map(|_| (augment(&x, s, &mut rng).get(0, 0) - 1.5).abs())
                .sum::<f64>()
                / 10_000.0
        };
        let (m1, m3) = (mean_abs(0.2), mean_abs(0.6));
        // identical draws at both strengths, so the ratio is exactly 3
        assert!((m3 / m1 - 3.0).abs() < 1e-9);
        // E|eps - mask x| ~= 0.9 E|eps| + 0.1 E|eps - 1.5|
        let expect = 0.9 * (2.0 / std::f64::consts::PI).sqrt() + 0.1 * 1.558_613_6;
        assert!((m1 / 0.2 - expect).abs() < 0.03, "{}", m1 / 0.2);
    }
}
