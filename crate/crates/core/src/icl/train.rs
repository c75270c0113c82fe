use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::objective::batch_objective;
use super::{IclConfig, IclModel};
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, DenseNet, LayerSpec};

/// Builds freshly initialized encoders `(F, G)` for `dim` features.
pub fn build_encoders(
    config: &IclConfig,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(DenseNet, DenseNet)> {
    let act = Activation::LeakyRelu(config.leaky_slope);
    let u = config.u;
    let f = DenseNet::new(
        dim - config.l,
        &[
            LayerSpec::new(u, act, true),
            LayerSpec::new(2 * u, act, true),
            LayerSpec::new(config.embed_dim, Activation::Linear, false),
        ],
        rng,
    )?;
    let g = DenseNet::new(
        config.l,
        &[
            LayerSpec::new(u / 4, act, true),
            LayerSpec::new(u / 2, act, false),
            LayerSpec::new(config.embed_dim, Activation::Linear, false),
        ],
        rng,
    )?;
    Ok((f, g))
}

/// Trains both encoders with Adam on the mean position loss.
pub fn train_icl(train: &TabularDataset, config: &IclConfig) -> Result<IclModel> {
    train_icl_matrix(train.values(), config)
}

pub fn train_icl_matrix(x: ArrayView2<f64>, config: &IclConfig) -> Result<IclModel> {
    let (n, dim) = x.dim();
    if n == 0 {
        return Err(Error::usage("cannot train on an empty dataset"));
    }
    config.validate(dim)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut f, mut g) = build_encoders(config, dim, &mut rng)?;
    let adam = AdamConfig::with_lr(config.lr);
    let mut f_state = AdamState::for_params(adam, &f.params());
    let mut g_state = AdamState::for_params(adam, &g.params());

    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let xb = x.select(Axis(0), idx);
            let obj = batch_objective(
                &mut f,
                &mut g,
                xb.view(),
                config.l,
                config.tau,
                config.denominator_mode,
            )?;
            if !obj.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch,
                    loss: obj.loss,
                });
            }
            adam_step(&mut f.params_mut(), &obj.f_grads.slices(), &mut f_state)?;
            adam_step(&mut g.params_mut(), &obj.g_grads.slices(), &mut g_state)?;
            if !f.is_finite() || !g.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch,
                    loss: f64::NAN,
                });
            }
            epoch_loss += obj.loss * idx.len() as f64;
        }
        history.push(epoch_loss / n as f64);
    }
    IclModel::from_parts(f, g, config.clone(), dim, history)
}
