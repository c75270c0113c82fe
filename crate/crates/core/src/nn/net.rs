use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, BatchNorm, Dense};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Shape of one layer when building a network.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub units: usize,
    pub activation: Activation,
    pub batchnorm: bool,
}

impl LayerSpec {
    pub fn new(units: usize, activation: Activation, batchnorm: bool) -> Self {
        LayerSpec {
            units,
            activation,
            batchnorm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
    mode: Mode,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_stats: bool,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    /// Value fed to the activation.
    pre_activation: Array2<f64>,
    bn: Option<BnCache>,
}

/// Intermediates recorded by [`DenseNet::forward`] for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Pre-activations of every layer, in order.
    pub fn pre_activations(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.layers.iter().map(|l| &l.pre_activation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

/// Parameter gradients mirroring the network layout, plus the gradient with
/// respect to the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub input: Array2<f64>,
}

impl Gradients {
    /// Flat views in the same order as [`DenseNet::params_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g.as_slice().expect("standard layout"));
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        out
    }
}

impl DenseNet {
    /// Builds and initializes a network from layer specs.
    pub fn new<R: Rng + ?Sized>(input: usize, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if input == 0 || specs.is_empty() || specs.iter().any(|s| s.units == 0) {
            return Err(Error::config(
                "network needs a positive input size and nonempty layers",
            ));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input;
        for spec in specs {
            layers.push(Dense::init(
                fan_in,
                spec.units,
                spec.activation,
                spec.batchnorm,
                rng,
            ));
            fan_in = spec.units;
        }
        Self::from_layers(layers)
    }

    /// Assembles a network from existing layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::config(format!("layer {i}: bias length mismatch")));
            }
            if let Some(bn) = &l.batchnorm {
                if bn.features() != l.output_dim()
                    || bn.beta.len() != bn.features()
                    || bn.running_mean.len() != bn.features()
                    || bn.running_var.len() != bn.features()
                {
                    return Err(Error::config(format!("layer {i}: batchnorm size mismatch")));
                }
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::config(format!(
                    "layer {} outputs {} features but layer {} expects {}",
                    i,
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(DenseNet {
            layers,
            mode: Mode::Train,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| l.batchnorm.is_some())
    }

    fn check_input(&self, x: &ArrayView2<f64>, batch_stats: bool) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::config(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::usage("empty batch"));
        }
        if batch_stats && self.has_batchnorm() && x.nrows() < 2 {
            return Err(Error::BatchSize(x.nrows()));
        }
        Ok(())
    }

    /// Forward pass honoring the current mode, caching intermediates.
    ///
    /// In train mode batch normalization uses batch statistics and updates the
    /// running estimates; in infer mode it uses the running estimates only.
    pub fn forward(&mut self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let batch_stats = self.mode == Mode::Train;
        self.check_input(&x, batch_stats)?;
        let mut cache = ForwardCache {
            layers: Vec::with_capacity(self.layers.len()),
        };
        let mut current = x.to_owned();
        for layer in &mut self.layers {
            let (out, lc, stats) = layer_forward(layer, current, batch_stats, true);
            if let (Some(bn), Some((mean, var))) = (&mut layer.batchnorm, stats) {
                update_running(bn, &mean, &var, out.nrows());
            }
            cache.layers.push(lc);
            current = out;
        }
        Ok((current, cache))
    }

    /// Inference forward pass: running statistics only, no caching, no mutation.
    ///
    /// Each output row depends only on the matching input row.
    pub fn infer(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x, false)?;
        let mut current = x.to_owned();
        for layer in &self.layers {
            let (out, _, _) = layer_forward(layer, current, false, false);
            current = out;
        }
        Ok(current)
    }

    /// Backpropagates `grad_out` (dL/d output) through the cached forward pass.
    ///
    /// Parameters are not modified.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> Result<Gradients> {
        if cache.layers.is_empty() {
            return Err(Error::usage("backward called without a forward cache"));
        }
        if cache.layers.len() != self.layers.len() {
            return Err(Error::usage("forward cache does not match this network"));
        }
        let rows = cache.layers[0].input.nrows();
        if grad_out.nrows() != rows || grad_out.ncols() != self.output_dim() {
            return Err(Error::usage(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                grad_out.nrows(),
                grad_out.ncols(),
                rows,
                self.output_dim()
            )));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_out.to_owned();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let act = layer.activation;
            let mut d_h = upstream;
            Zip::from(&mut d_h)
                .and(&lc.pre_activation)
                .for_each(|g, &h| *g *= act.derivative(h));

            let (d_z, gamma, beta) = match (&layer.batchnorm, &lc.bn) {
                (Some(bn), Some(bc)) => {
                    let d_gamma = (&d_h * &bc.xhat).sum_axis(Axis(0));
                    let d_beta = d_h.sum_axis(Axis(0));
                    let d_xhat = &d_h * &bn.gamma;
                    let d_z = if bc.batch_stats {
                        let n = d_xhat.nrows() as f64;
                        let sum_dx = d_xhat.sum_axis(Axis(0));
                        let sum_dx_xhat = (&d_xhat * &bc.xhat).sum_axis(Axis(0));
                        let mut d_z = &d_xhat * n - &sum_dx - &(&bc.xhat * &sum_dx_xhat);
                        d_z *= &(&bc.inv_std / n);
                        d_z
                    } else {
                        &d_xhat * &bc.inv_std
                    };
                    (d_z, Some(d_gamma), Some(d_beta))
                }
                (None, None) => (d_h, None, None),
                _ => return Err(Error::usage("forward cache does not match this network")),
            };

            let d_w = d_z.t().dot(&lc.input);
            let d_b = d_z.sum_axis(Axis(0));
            upstream = d_z.dot(&layer.weight);
            grads.push(LayerGrads {
                weight: d_w,
                bias: d_b,
                gamma,
                beta,
            });
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: upstream,
        })
    }

    /// Mutable flat views of every learnable parameter.
    ///
    /// Order per layer: weight (row-major), bias, then gamma and beta when the
    /// layer has batch normalization.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut l.batchnorm {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    /// Flat views of every learnable parameter, same order as [`Self::params_mut`].
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let Some(bn) = &l.batchnorm {
                out.push(bn.gamma.as_slice().expect("standard layout"));
                out.push(bn.beta.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// True when every parameter and running statistic is finite.
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite())
                && l.batchnorm.as_ref().is_none_or(|bn| {
                    bn.gamma
                        .iter()
                        .chain(bn.beta.iter())
                        .chain(bn.running_mean.iter())
                        .chain(bn.running_var.iter())
                        .all(|v| v.is_finite())
                })
        })
    }
}

type BatchMoments = (Array1<f64>, Array1<f64>);

fn layer_forward(
    layer: &Dense,
    input: Array2<f64>,
    batch_stats: bool,
    keep_cache: bool,
) -> (Array2<f64>, LayerCache, Option<BatchMoments>) {
    let mut z = input.dot(&layer.weight.t());
    z += &layer.bias;

    let mut moments = None;
    let (h, bn_cache) = match &layer.batchnorm {
        Some(bn) => {
            let (xhat, inv_std) = if batch_stats {
                let (xhat, inv_std, mean, var) = normalize_with_batch(bn, &z);
                moments = Some((mean, var));
                (xhat, inv_std)
            } else {
                normalize_with_running(bn, &z)
            };
            let h = &xhat * &bn.gamma + &bn.beta;
            (
                h,
                Some(BnCache {
                    xhat,
                    inv_std,
                    batch_stats,
                }),
            )
        }
        None => (z, None),
    };

    let act = layer.activation;
    let out = h.mapv(|v| act.apply(v));
    let cache = if keep_cache {
        LayerCache {
            input,
            pre_activation: h,
            bn: bn_cache,
        }
    } else {
        LayerCache {
            input: Array2::zeros((0, 0)),
            pre_activation: Array2::zeros((0, 0)),
            bn: None,
        }
    };
    (out, cache, moments)
}

/// Returns `(xhat, 1/std, mean, population variance)` of the batch.
fn normalize_with_batch(
    bn: &BatchNorm,
    z: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>, Array1<f64>) {
    let n = z.nrows() as f64;
    let mean = z.mean_axis(Axis(0)).expect("nonempty batch");
    let centered = z - &mean;
    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
    let inv_std = var.mapv(|v| 1.0 / (v + bn.epsilon).sqrt());
    let xhat = &centered * &inv_std;
    (xhat, inv_std, mean, var)
}

/// Running estimates track the unbiased batch variance.
fn update_running(bn: &mut BatchNorm, mean: &Array1<f64>, var: &Array1<f64>, rows: usize) {
    let m = bn.momentum;
    let n = rows as f64;
    let unbiased = if rows > 1 { n / (n - 1.0) } else { 1.0 };
    Zip::from(&mut bn.running_mean)
        .and(mean)
        .for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
    Zip::from(&mut bn.running_var)
        .and(var)
        .for_each(|r, &b| *r = m * *r + (1.0 - m) * b * unbiased);
}

fn normalize_with_running(bn: &BatchNorm, z: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.epsilon).sqrt());
    let xhat = (z - &bn.running_mean) * &inv_std;
    (xhat, inv_std)
}
