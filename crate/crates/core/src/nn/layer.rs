use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Elementwise activation applied after the (optionally normalized) affine map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "slope")]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

    pub fn leaky() -> Self {
        Activation::LeakyRelu(Self::DEFAULT_LEAKY_SLOPE)
    }

    #[inline]
    pub fn apply(self, h: f64) -> f64 {
        match self {
            Activation::Linear => h,
            Activation::Relu => h.max(0.0),
            Activation::LeakyRelu(slope) => {
                if h >= 0.0 {
                    h
                } else {
                    slope * h
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, h: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if h >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

/// Per-feature batch normalization with a learnable affine map.
///
/// Running statistics follow `running = momentum·running + (1 − momentum)·batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            momentum: Self::DEFAULT_MOMENTUM,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }
}

/// One fully-connected layer: `act(bn(x·Wᵀ + b))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub batchnorm: Option<BatchNorm>,
}

impl Dense {
    /// Uniform fan-in initialization: weights in `±sqrt(6/in)`, biases in `±1/sqrt(in)`.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        activation: Activation,
        batchnorm: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = input.max(1) as f64;
        let w_bound = (6.0 / fan_in).sqrt();
        let b_bound = 1.0 / fan_in.sqrt();
        let weight = Array2::from_shape_fn((output, input), |_| rng.gen_range(-w_bound..w_bound));
        let bias = Array1::from_shape_fn(output, |_| rng.gen_range(-b_bound..b_bound));
        Dense {
            weight,
            bias,
            activation,
            batchnorm: batchnorm.then(|| BatchNorm::new(output)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}
