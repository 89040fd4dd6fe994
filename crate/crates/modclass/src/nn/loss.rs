//! Softmax cross-entropy with the max-subtraction stabilization.

use super::kernels::sum;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
///
/// `logits` is `[N, C]`; `labels[n]` must lie in `[0, C)`. The gradient is
/// `(softmax - onehot) / N`.
pub fn softmax_xent<F: Real>(logits: &Tensor<F>, labels: &[usize]) -> Result<(F, Tensor<F>)> {
    let (n, c) = match *logits.shape() {
        [n, c] => (n, c),
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "softmax_xent expects [N, C] logits, got {:?}",
                logits.shape()
            )))
        }
    };
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} logits rows",
            labels.len(),
            n
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {c} classes"
        )));
    }

    let inv_n = F::from_f64(1.0 / n as f64);
    let mut grad = Tensor::zeros(&[n, c]);
    let mut loss = F::ZERO;
    for s in 0..n {
        let row = &logits.data()[s * c..(s + 1) * c];
        let mut m = row[0];
        for &v in row.iter().skip(1) {
            m = m.maximum(v);
        }
        let gr = &mut grad.data_mut()[s * c..(s + 1) * c];
        for (g, &v) in gr.iter_mut().zip(row) {
            *g = (v - m).exp();
        }
        let z = sum(gr);
        let log_z = z.ln();
        loss += log_z - (row[labels[s]] - m);
        let inv_z = F::ONE / z;
        for g in gr.iter_mut() {
            *g = *g * inv_z * inv_n;
        }
        gr[labels[s]] -= inv_n;
    }
    Ok((loss * inv_n, grad))
}

/// Row-wise softmax probabilities (used for reports and tests).
pub fn softmax_rows<F: Real>(logits: &Tensor<F>) -> Result<Tensor<F>> {
    let (n, c) = match *logits.shape() {
        [n, c] => (n, c),
        _ => return Err(Error::ShapeMismatch("softmax expects [N, C]".into())),
    };
    let mut probs = logits.clone();
    for s in 0..n {
        let row = &mut probs.data_mut()[s * c..(s + 1) * c];
        let mut m = row[0];
        for &v in row.iter().skip(1) {
            m = m.maximum(v);
        }
        for v in row.iter_mut() {
            *v = (*v - m).exp();
        }
        let z = sum(row);
        let inv_z = F::ONE / z;
        for v in row.iter_mut() {
            *v *= inv_z;
        }
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Tensor::from_vec(&[2, 6], vec![0.5f64; 12]).unwrap();
        let (loss, grad) = softmax_xent(&logits, &[0, 3]).unwrap();
        assert!((loss - 6.0f64.ln()).abs() < 1e-12, "loss {loss} vs ln 6");
        // Gradient rows: (1/6 - onehot)/2.
        assert!((grad.data()[0] - (1.0 / 6.0 - 1.0) / 2.0).abs() < 1e-12);
        assert!((grad.data()[1] - (1.0 / 6.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_true_logit_gives_tiny_loss() {
        let mut v = vec![0.0f64; 6];
        v[2] = 1000.0;
        let logits = Tensor::from_vec(&[1, 6], v).unwrap();
        let (loss, _) = softmax_xent(&logits, &[2]).unwrap();
        assert!(loss >= 0.0);
        assert!(loss < 1e-6, "saturated loss {loss}");
    }

    #[test]
    fn out_of_range_label_rejected() {
        let logits = Tensor::from_vec(&[1, 3], vec![0.0f64; 3]).unwrap();
        assert!(softmax_xent(&logits, &[3]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits =
            Tensor::from_vec(&[3, 4], (0..12).map(|i| (i as f64 * 1.3).sin() * 5.0).collect())
                .unwrap();
        let p = softmax_rows(&logits).unwrap();
        for s in 0..3 {
            let row_sum: f64 = p.data()[s * 4..(s + 1) * 4].iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-6);
            assert!(p.data()[s * 4..(s + 1) * 4].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn loss_is_nonnegative() {
        let logits =
            Tensor::from_vec(&[4, 3], (0..12).map(|i| (i as f64 * 0.77).cos() * 3.0).collect())
                .unwrap();
        let (loss, _) = softmax_xent(&logits, &[0, 1, 2, 0]).unwrap();
        assert!(loss >= 0.0);
    }
}
