use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Rows with Euclidean norm below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// Max-shifted `ln Σ exp(v)`; `-inf` for an empty input.
pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Scales every row to unit length. Rows with norm below [`ZERO_NORM`] map to zero.
pub fn l2_normalize_rows(x: ArrayView2<f64>) -> Array2<f64> {
    l2_normalize_rows_with_norms(x).0
}

/// As [`l2_normalize_rows`], also returning the row norms for backprop.
pub fn l2_normalize_rows_with_norms(x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = x.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let mut y = x.to_owned();
    for (mut row, &n) in y.rows_mut().into_iter().zip(norms.iter()) {
        if n < ZERO_NORM {
            row.fill(0.0);
        } else {
            row /= n;
        }
    }
    (y, norms)
}

/// Gradient through row normalization: `dx = (dy − y·(y·dy)) / ‖x‖`.
pub fn l2_normalize_backward(
    y: ArrayView2<f64>,
    norms: ArrayView1<f64>,
    dy: ArrayView2<f64>,
) -> Array2<f64> {
    let mut dx = dy.to_owned();
    for ((mut g, yr), &n) in dx.rows_mut().into_iter().zip(y.rows()).zip(norms.iter()) {
        if n < ZERO_NORM {
            g.fill(0.0);
            continue;
        }
        let proj = yr.dot(&g);
        g.scaled_add(-proj, &yr);
        g /= n;
    }
    dx
}

/// Row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Mean cross-entropy and its gradient `(softmax − onehot)/n` with respect to the logits.
pub fn softmax_cross_entropy(
    logits: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>)> {
    let (n, classes) = logits.dim();
    if labels.len() != n {
        return Err(Error::usage(format!(
            "{} labels for {} rows of logits",
            labels.len(),
            n
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::usage(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        loss += log_sum_exp(row.iter().cloned()) - row[label];
        grad[[i, label]] -= 1.0;
    }
    let nf = n as f64;
    grad /= nf;
    Ok((loss / nf, grad))
}
