use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use super::DenominatorMode;
use crate::error::Result;
use crate::nn::{
    l2_normalize_backward, l2_normalize_rows_with_norms, log_sum_exp, DenseNet, Gradients,
};

/// Stacks every (complement, window) pair of every row of `x`.
///
/// Row `b·k + d` of the first matrix is `x_b` with columns `d..d+l` removed;
/// the same row of the second matrix is `x_b[d..d+l]`.
pub fn build_pair_matrices(x: ArrayView2<f64>, l: usize) -> (Array2<f64>, Array2<f64>) {
    let (n, dim) = x.dim();
    let k = dim + 1 - l;
    let mut q = Array2::<f64>::zeros((n * k, dim - l));
    let mut p = Array2::<f64>::zeros((n * k, l));
    for b in 0..n {
        let row = x.row(b);
        for d in 0..k {
            let r = b * k + d;
            p.row_mut(r).assign(&row.slice(s![d..d + l]));
            let mut qr = q.row_mut(r);
            qr.slice_mut(s![..d]).assign(&row.slice(s![..d]));
            qr.slice_mut(s![d..]).assign(&row.slice(s![d + l..]));
        }
    }
    (q, p)
}

/// Loss at position `d` given the similarity row `m[d][·]`, and its gradient
/// with respect to that row.
///
/// `loss = −m_d/τ + ln Σ_{d' ∈ S} exp(m_{d'}/τ)` with `S` all positions except
/// `d` (exclude mode) or all positions (include mode).
pub fn row_loss_and_grad(
    row: ArrayView1<f64>,
    d: usize,
    tau: f64,
    mode: DenominatorMode,
) -> (f64, Array1<f64>) {
    let k = row.len();
    let in_denominator = |j: usize| mode == DenominatorMode::IncludePositive || j != d;
    let scaled = (0..k).filter(|&j| in_denominator(j)).map(|j| row[j] / tau);
    let lse = log_sum_exp(scaled);
    let loss = lse - row[d] / tau;
    let mut grad = Array1::<f64>::zeros(k);
    for j in 0..k {
        if in_denominator(j) {
            grad[j] = (row[j] / tau - lse).exp() / tau;
        }
    }
    grad[d] -= 1.0 / tau;
    (loss, grad)
}

/// Mean loss over a batch with gradients for both encoders.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub loss: f64,
    pub f_grads: Gradients,
    pub g_grads: Gradients,
}

/// Full per-batch objective: mean over rows and positions of the position loss.
///
/// Runs both encoders through [`DenseNet::forward`] in their current mode, so
/// train-mode batch normalization sees all `n·k` pair rows of the batch.
pub fn batch_objective(
    f: &mut DenseNet,
    g: &mut DenseNet,
    x: ArrayView2<f64>,
    l: usize,
    tau: f64,
    mode: DenominatorMode,
) -> Result<BatchObjective> {
    let n = x.nrows();
    let k = x.ncols() + 1 - l;
    let (q, p) = build_pair_matrices(x, l);
    let (f_out, f_cache) = f.forward(q.view())?;
    let (g_out, g_cache) = g.forward(p.view())?;
    let (f_norm, f_norms) = l2_normalize_rows_with_norms(f_out.view());
    let (g_norm, g_norms) = l2_normalize_rows_with_norms(g_out.view());

    let mut d_fn = Array2::<f64>::zeros(f_norm.raw_dim());
    let mut d_gn = Array2::<f64>::zeros(g_norm.raw_dim());
    let scale = 1.0 / (n * k) as f64;
    let mut total = 0.0;
    for b in 0..n {
        let rows = s![b * k..(b + 1) * k, ..];
        let fb = f_norm.slice(rows);
        let gb = g_norm.slice(rows);
        let sim = fb.dot(&gb.t());
        let mut d_sim = Array2::<f64>::zeros((k, k));
        for d in 0..k {
            let (loss, grad) = row_loss_and_grad(sim.row(d), d, tau, mode);
            total += loss;
            d_sim.row_mut(d).assign(&(grad * scale));
        }
        d_fn.slice_mut(rows).assign(&d_sim.dot(&gb));
        d_gn.slice_mut(rows).assign(&d_sim.t().dot(&fb));
    }

    let d_f_out = l2_normalize_backward(f_norm.view(), f_norms.view(), d_fn.view());
    let d_g_out = l2_normalize_backward(g_norm.view(), g_norms.view(), d_gn.view());
    let f_grads = f.backward(&f_cache, d_f_out.view())?;
    let g_grads = g.backward(&g_cache, d_g_out.view())?;
    Ok(BatchObjective {
        loss: total * scale,
        f_grads,
        g_grads,
    })
}
