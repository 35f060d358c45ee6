//! Graph-free numerical kernels shared by the tape ops and inference paths.

use crate::error::{Error, Result};

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_masked_into(logits, None, &mut out);
    out
}

pub(crate) fn softmax_masked_into(row: &[f64], mask: Option<&[bool]>, out: &mut [f64]) {
    let keep = |c: usize| mask.is_none_or(|m| m[c]);
    let max = (0..row.len())
        .filter(|&c| keep(c))
        .map(|c| row[c])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for c in 0..row.len() {
        out[c] = if keep(c) { (row[c] - max).exp() } else { 0.0 };
        total += out[c];
    }
    out.iter_mut().for_each(|v| *v /= total);
}

/// Supervision for [`cross_entropy`].
#[derive(Clone, Debug)]
pub enum Target<'a> {
    Index(usize),
    Distribution(&'a [f64]),
}

/// Loss `−Σ_k t_k log softmax(logits)_k` and its gradient
/// `softmax(logits) − t` with respect to the logits.
pub fn cross_entropy(logits: &[f64], target: Target<'_>) -> Result<(f64, Vec<f64>)> {
    let k = logits.len();
    let dense = match target {
        Target::Index(i) => {
            if i >= k {
                return Err(Error::validation("target", format!("class {i} out of range 0..{k}")));
            }
            let mut t = vec![0.0; k];
            t[i] = 1.0;
            t
        }
        Target::Distribution(t) => {
            if t.len() != k {
                return Err(Error::validation("target", format!("{} entries for {k} classes", t.len())));
            }
            let sum: f64 = t.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || t.iter().any(|&v| v < 0.0) {
                return Err(Error::validation("target", format!("not a distribution (sum {sum})")));
            }
            t.to_vec()
        }
    };
    let lse = log_sum_exp(logits);
    let loss = dense
        .iter()
        .zip(logits)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, x)| t * (lse - x))
        .sum();
    let grad = logits
        .iter()
        .zip(&dense)
        .map(|(x, t)| (x - lse).exp() - t)
        .collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[10.0 / 3.0, 7.0 / 3.0]);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[0] - 0.7311).abs() < 1e-4);
        assert!((p[1] - 0.2689).abs() < 1e-4);
        assert_eq!(softmax(&[-3.7]), vec![1.0]);
    }

    #[test]
    fn masked_softmax_zeroes_masked_columns() {
        let mut out = vec![0.0; 3];
        softmax_masked_into(&[1.0, 50.0, 1.0], Some(&[true, false, true]), &mut out);
        assert_eq!(out, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_k() {
        let (loss, grad) = cross_entropy(&[0.3; 4], Target::Index(2)).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((grad[2] + 0.75).abs() < 1e-12);
        assert!((grad[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_vanishes_at_perfect_prediction() {
        let (loss, _) = cross_entropy(&[800.0, 0.0, 0.0], Target::Index(0)).unwrap();
        assert!(loss < 1e-300);
    }

    #[test]
    fn cross_entropy_rejects_unnormalized_targets() {
        let err = cross_entropy(&[0.0, 1.0], Target::Distribution(&[0.5, 0.6])).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn cross_entropy_gradient_matches_central_differences() {
        let logits = [0.4, -1.3, 2.2, 0.05, -0.7];
        let target = [0.1, 0.2, 0.5, 0.0, 0.2];
        let (_, grad) = cross_entropy(&logits, Target::Distribution(&target)).unwrap();
        let h = 1e-5;
        for i in 0..logits.len() {
            let mut up = logits;
            let mut dn = logits;
            up[i] += h;
            dn[i] -= h;
            let fd = (cross_entropy(&up, Target::Distribution(&target)).unwrap().0
                - cross_entropy(&dn, Target::Distribution(&target)).unwrap().0)
                / (2.0 * h);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(fd.abs());
            assert!(rel < 1e-5, "coordinate {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(row in prop::collection::vec(-1e4f64..1e4, 1..40)) {
            let p = softmax(&row);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_is_shift_invariant(row in prop::collection::vec(-50f64..50.0, 1..20), c in -100f64..100.0) {
            let shifted: Vec<f64> = row.iter().map(|v| v + c).collect();
            for (a, b) in softmax(&row).iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
