//! Losses with analytic gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{l2_norm, Matrix};
use crate::error::{Error, Result};

/// Loss value and its gradient with respect to the loss input.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Matrix,
}

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Shannon entropy (nats) of the softmax of `logits`.
pub fn softmax_entropy(logits: &[f64]) -> f64 {
    let logp = log_softmax(logits);
    -logp.iter().map(|&lp| lp.exp() * lp).sum::<f64>()
}

/// Mean cross-entropy over the batch; gradient with respect to the logits.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<LossGrad> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::shape(format!(
            "label {bad} out of range for {} outputs",
            logits.cols()
        )));
    }
    let n = labels.len().max(1) as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let logp = log_softmax(logits.row(i));
        loss -= logp[y];
        let g = grad.row_mut(i);
        for (k, lp) in logp.iter().enumerate() {
            g[k] = lp.exp() / n;
        }
        g[y] -= 1.0 / n;
    }
    Ok(LossGrad {
        loss: loss / n,
        grad,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mining {
    /// Uniformly drawn negative.
    Random,
    /// Closest negative to the anchor.
    HardNegative,
}

/// `(anchor, positive, negative)` row indices.
pub type Triplet = (usize, usize, usize);

/// Rows scaled to unit L2 norm, plus the norms used.
pub fn l2_normalize_rows(x: &Matrix) -> (Matrix, Vec<f64>) {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let norm = l2_norm(x.row(i)).max(1e-12);
        out.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        norms.push(norm);
    }
    (out, norms)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Selects one triplet per anchor. Every sample with at least one in-batch
/// positive is an anchor; its positive is uniform over the other samples of
/// its class and its negative follows `mining`.
pub fn mine_triplets<R: Rng + ?Sized>(
    features: &Matrix,
    labels: &[usize],
    mining: Mining,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    if features.rows() != labels.len() {
        return Err(Error::shape("feature rows and labels differ in length"));
    }
    let first = labels.first().copied();
    if labels.iter().all(|&y| Some(y) == first) {
        return Err(Error::DegenerateBatch(
            "triplet loss needs at least two classes in the batch".into(),
        ));
    }
    let (normed, _) = l2_normalize_rows(features);
    let mut triplets = Vec::new();
    for (a, &ya) in labels.iter().enumerate() {
        let positives: Vec<usize> = (0..labels.len())
            .filter(|&j| j != a && labels[j] == ya)
            .collect();
        if positives.is_empty() {
            continue;
        }
        let negatives: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != ya).collect();
        let p = positives[rng.random_range(0..positives.len())];
        let n = match mining {
            Mining::Random => negatives[rng.random_range(0..negatives.len())],
            Mining::HardNegative => *negatives
                .iter()
                .min_by(|&&i, &&j| {
                    sq_dist(normed.row(a), normed.row(i))
                        .total_cmp(&sq_dist(normed.row(a), normed.row(j)))
                })
                .expect("at least two classes"),
        };
        triplets.push((a, p, n));
    }
    if triplets.is_empty() {
        return Err(Error::DegenerateBatch(
            "no class in the batch has two samples".into(),
        ));
    }
    Ok(triplets)
}

/// Triplet margin loss `sum_i max(0, D(a,p) - D(a,n) + margin)` with `D` the
/// squared Euclidean distance between L2-normalized rows of `features`.
///
/// The gradient is taken with respect to the raw (unnormalized) features.
pub fn triplet_loss(features: &Matrix, triplets: &[Triplet], margin: f64) -> LossGrad {
    let (z, norms) = l2_normalize_rows(features);
    let dim = features.cols();
    let mut gz = Matrix::zeros(features.rows(), dim);
    let mut loss = 0.0;
    for &(a, p, n) in triplets {
        let d_ap = sq_dist(z.row(a), z.row(p));
        let d_an = sq_dist(z.row(a), z.row(n));
        let hinge = d_ap - d_an + margin;
        if hinge <= 0.0 {
            continue;
        }
        loss += hinge;
        for k in 0..dim {
            let (za, zp, zn) = (z.get(a, k), z.get(p, k), z.get(n, k));
            // d/dza (|za-zp|^2 - |za-zn|^2) = 2(zn - zp)
            gz.row_mut(a)[k] += 2.0 * (zn - zp);
            gz.row_mut(p)[k] += -2.0 * (za - zp);
            gz.row_mut(n)[k] += 2.0 * (za - zn);
        }
    }
    // back through z = f / |f|: df = (gz - z (z . gz)) / |f|
    let mut grad = Matrix::zeros(features.rows(), dim);
    for (i, &norm) in norms.iter().enumerate() {
        let zi = z.row(i);
        let gi = gz.row(i);
        let proj: f64 = zi.iter().zip(gi).map(|(a, b)| a * b).sum();
        let out = grad.row_mut(i);
        for k in 0..dim {
            out[k] = (gi[k] - zi[k] * proj) / norm;
        }
    }
    LossGrad { loss, grad }
}

/// Mines triplets and evaluates [`triplet_loss`] on them.
pub fn triplet_contrastive_loss<R: Rng + ?Sized>(
    features: &Matrix,
    labels: &[usize],
    margin: f64,
    mining: Mining,
    rng: &mut R,
) -> Result<(LossGrad, usize)> {
    let triplets = mine_triplets(features, labels, mining, rng)?;
    Ok((triplet_loss(features, &triplets, margin), triplets.len()))
}

/// Knowledge distillation: `alpha * T^2 * mean_i KL(p_teacher || p_student)`
/// with both distributions taken as temperature-`T` softmaxes restricted to
/// the logit columns in `classes`. The gradient covers the student logits.
pub fn distillation_loss(
    student: &Matrix,
    teacher: &Matrix,
    classes: &[usize],
    temperature: f64,
    alpha: f64,
) -> Result<LossGrad> {
    if student.rows() != teacher.rows() {
        return Err(Error::shape("student and teacher batches differ"));
    }
    if let Some(&bad) = classes
        .iter()
        .find(|&&c| c >= student.cols() || c >= teacher.cols())
    {
        return Err(Error::shape(format!("distillation class {bad} out of range")));
    }
    let mut grad = Matrix::zeros(student.rows(), student.cols());
    if classes.is_empty() || student.rows() == 0 {
        return Ok(LossGrad { loss: 0.0, grad });
    }
    let n = student.rows() as f64;
    let t = temperature;
    let scale = alpha * t * t / n;
    let mut loss = 0.0;
    for i in 0..student.rows() {
        let s: Vec<f64> = classes.iter().map(|&c| student.get(i, c) / t).collect();
        let q: Vec<f64> = classes.iter().map(|&c| teacher.get(i, c) / t).collect();
        let (log_ps, log_pt) = (log_softmax(&s), log_softmax(&q));
        let kl: f64 = log_pt
            .iter()
            .zip(&log_ps)
            .map(|(&lt, &ls)| lt.exp() * (lt - ls))
            .sum();
        loss += kl;
        let row = grad.row_mut(i);
        for (k, &c) in classes.iter().enumerate() {
            // d KL / d s_c = (p_s - p_t) / T
            row[c] = scale * (log_ps[k].exp() - log_pt[k].exp()) / t;
        }
    }
    Ok(LossGrad {
        loss: scale * loss,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Matrix::zeros(3, 7);
        let lg = cross_entropy(&logits, &[0, 3, 6]).unwrap();
        assert!((lg.loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logit_gives_zero_loss() {
        let logits = Matrix::from_rows(&[vec![1e3, 0.0, 0.0]]).unwrap();
        let lg = cross_entropy(&logits, &[0]).unwrap();
        assert!(lg.loss < 1e-12);
    }

    #[test]
    fn ce_gradient_rows_sum_to_zero() {
        let logits = Matrix::from_rows(&[vec![0.3, -2.0, 5.0], vec![1.0, 1.0, -1.0]]).unwrap();
        let lg = cross_entropy(&logits, &[2, 0]).unwrap();
        for row in lg.grad.iter_rows() {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
        assert!(cross_entropy(&logits, &[3, 0]).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -1000.0, 3.0, 2.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((softmax_entropy(&[0.0; 5]) - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn equal_distances_cost_one_margin_each() {
        // anchors 0 and 2; (0,1) same class, 2 and 3 same class, and every
        // point sits at the same distance from the others' directions
        let f = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, -1.0, 0.0],
        ])
        .unwrap();
        let triplets = [(0, 1, 2), (2, 3, 0)];
        let lg = triplet_loss(&f, &triplets, 0.5);
        assert!((lg.loss - 2.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn separated_triplets_cost_nothing() {
        let f = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.01],
            vec![-1.0, 0.0],
            vec![-1.0, 0.02],
        ])
        .unwrap();
        let lg = triplet_loss(&f, &[(0, 1, 2), (2, 3, 1)], 0.5);
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_class_batch_is_degenerate() {
        let f = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let mut rng = substream(0, &[]);
        assert!(matches!(
            mine_triplets(&f, &[4, 4], Mining::Random, &mut rng),
            Err(Error::DegenerateBatch(_))
        ));
        assert!(matches!(
            mine_triplets(&f, &[4, 5], Mining::Random, &mut rng),
            Err(Error::DegenerateBatch(_))
        ));
    }

    #[test]
    fn hard_negative_is_the_closest() {
        let f = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.1],
            vec![0.0, 1.0],
            vec![0.9, -0.1],
        ])
        .unwrap();
        let mut rng = substream(0, &[]);
        let t = mine_triplets(&f, &[0, 0, 1, 1], Mining::HardNegative, &mut rng).unwrap();
        assert_eq!(t[0], (0, 1, 3));
    }

    #[test]
    fn identical_teacher_costs_nothing() {
        let s = Matrix::from_rows(&[vec![0.2, 1.0, -0.5], vec![2.0, 0.0, 0.1]]).unwrap();
        let lg = distillation_loss(&s, &s, &[0, 2], 2.0, 1.0).unwrap();
        assert!(lg.loss.abs() < 1e-15);
        assert!(lg.grad.as_slice().iter().all(|g| g.abs() < 1e-15));
        // column 1 is outside the teacher's classes and never receives gradient
        let t = Matrix::from_rows(&[vec![1.0, 5.0, 0.0], vec![0.0, 5.0, 1.0]]).unwrap();
        let lg = distillation_loss(&s, &t, &[0, 2], 2.0, 1.0).unwrap();
        assert!(lg.loss > 0.0);
        assert_eq!(lg.grad.get(0, 1), 0.0);
    }
}
