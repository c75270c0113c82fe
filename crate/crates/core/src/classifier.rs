//! Known-class softmax classifier: one hidden ReLU layer trained with Adam
//! and cross-entropy.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::nn::{
    adam_step, checkpoint, softmax_cross_entropy, softmax_rows, Activation, AdamConfig, AdamState,
    DenseNet, LayerSpec, Mode,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden_units: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden_units: 20,
            lr: 1e-3,
            epochs: 200,
            batch_size: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Array1<f64>,
    pub class_id: u32,
}

/// Trained network plus the mapping from output index to original class id.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    net: DenseNet,
    classes: Vec<u32>,
    config: ClassifierConfig,
}

#[derive(Serialize, Deserialize)]
struct ClassesJson {
    classes: Vec<u32>,
    config: ClassifierConfig,
}

pub fn train_classifier(train: &TabularDataset, config: &ClassifierConfig) -> Result<Classifier> {
    if config.hidden_units == 0 || config.batch_size == 0 {
        return Err(Error::config(
            "classifier needs hidden_units ≥ 1 and batch_size ≥ 1",
        ));
    }
    let classes: Vec<u32> = train.classes().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::config(format!(
            "classifier needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    let targets: Vec<usize> = train
        .labels()
        .iter()
        .map(|l| classes.binary_search(l).expect("label from the class set"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = DenseNet::new(
        train.dim(),
        &[
            LayerSpec::new(config.hidden_units, Activation::Relu, false),
            LayerSpec::new(classes.len(), Activation::Linear, false),
        ],
        &mut rng,
    )?;
    let mut adam = AdamState::for_params(AdamConfig::with_lr(config.lr), &net.params());
    let x = train.values();
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let xb = x.select(Axis(0), idx);
            let yb: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            let (logits, cache) = net.forward(xb.view())?;
            let (loss, grad) = softmax_cross_entropy(logits.view(), &yb)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch, loss });
            }
            let grads = net.backward(&cache, grad.view())?;
            adam_step(&mut net.params_mut(), &grads.slices(), &mut adam)?;
        }
    }
    net.set_mode(Mode::Infer);
    Ok(Classifier {
        net,
        classes,
        config: config.clone(),
    })
}

impl Classifier {
    /// Known class ids in output-index order (ascending).
    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    /// Hash of the network parameters and the class mapping.
    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprint::new();
        for p in self.net.params() {
            fp.floats(p.iter());
        }
        for c in &self.classes {
            fp.bytes(&c.to_le_bytes());
        }
        fp.hex()
    }

    pub fn index_of(&self, class_id: u32) -> Option<usize> {
        self.classes.binary_search(&class_id).ok()
    }

    pub fn class_of(&self, index: usize) -> Option<u32> {
        self.classes.get(index).copied()
    }

    /// Softmax probabilities for every row (`n × N`).
    pub fn probabilities(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(self.net.infer(x)?.view()))
    }

    pub fn predict_known(&self, x: ArrayView1<f64>) -> Result<Prediction> {
        let p = self.probabilities(x.insert_axis(Axis(0)))?;
        let probabilities = p.row(0).to_owned();
        let class_id = self.classes[argmax(probabilities.view())];
        Ok(Prediction {
            probabilities,
            class_id,
        })
    }

    /// Arg-max class id per row.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<u32>)> {
        let p = self.probabilities(x)?;
        let ids = p
            .rows()
            .into_iter()
            .map(|r| self.classes[argmax(r)])
            .collect();
        Ok((p, ids))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        checkpoint::save(&dir.join("classifier.nn"), &self.net, None)?;
        let mut text = serde_json::to_string_pretty(&ClassesJson {
            classes: self.classes.clone(),
            config: self.config.clone(),
        })?;
        text.push('\n');
        std::fs::write(dir.join("classes.json"), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (mut net, _) = checkpoint::load(&dir.join("classifier.nn"))?;
        let meta: ClassesJson =
            serde_json::from_str(&std::fs::read_to_string(dir.join("classes.json"))?)?;
        if net.output_dim() != meta.classes.len() {
            return Err(Error::config(
                "classifier output size does not match its class list",
            ));
        }
        net.set_mode(Mode::Infer);
        Ok(Classifier {
            net,
            classes: meta.classes,
            config: meta.config,
        })
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
