use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::objective::{build_pair_matrices, row_loss_and_grad};
use super::{DenominatorMode, IclConfig, ScoreMode};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::nn::{checkpoint, l2_normalize_rows, DenseNet, Mode};

/// Splits `x` at window start `d` into `(p, q)`: the `l`-long window and its
/// complement with the original order preserved.
pub fn slice_pairs(x: ArrayView1<f64>, d: usize, l: usize) -> Result<(Array1<f64>, Array1<f64>)> {
    let dim = x.len();
    if l == 0 || l > dim || d > dim - l {
        return Err(Error::usage(format!(
            "window start {d} with length {l} does not fit a {dim}-vector"
        )));
    }
    let p = x.slice(s![d..d + l]).to_owned();
    let q = x
        .iter()
        .enumerate()
        .filter(|(i, _)| *i < d || *i >= d + l)
        .map(|(_, v)| *v)
        .collect();
    Ok((p, q))
}

/// Contrastive loss at position `d` from the similarity row `m[d][·]`.
pub fn internal_loss(
    similarities: ArrayView1<f64>,
    d: usize,
    tau: f64,
    mode: DenominatorMode,
) -> f64 {
    row_loss_and_grad(similarities, d, tau, mode).0
}

/// Per-sample outlier features: the `k` position losses, or their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEmbedding(pub Array1<f64>);

impl ScoreEmbedding {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("contiguous")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Trained pair of encoders plus the slicing configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct IclModel {
    pub(crate) f: DenseNet,
    pub(crate) g: DenseNet,
    pub(crate) config: IclConfig,
    pub(crate) dim: usize,
    pub(crate) loss_history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "D")]
    dim: usize,
    l: usize,
    tau: f64,
    u: usize,
    embed_dim: usize,
    k: usize,
    denominator_mode: DenominatorMode,
    score_mode: ScoreMode,
    seed: u64,
    config: IclConfig,
    loss_history: Vec<f64>,
}

impl IclModel {
    /// Wraps trained encoders, checking their shapes against `config` and `dim`.
    pub fn from_parts(
        mut f: DenseNet,
        mut g: DenseNet,
        config: IclConfig,
        dim: usize,
        loss_history: Vec<f64>,
    ) -> Result<Self> {
        config.validate(dim)?;
        if f.input_dim() != dim - config.l || g.input_dim() != config.l {
            return Err(Error::config(
                "encoder input sizes do not match the slicing",
            ));
        }
        if f.output_dim() != g.output_dim() {
            return Err(Error::config("encoders disagree on embedding size"));
        }
        f.set_mode(Mode::Infer);
        g.set_mode(Mode::Infer);
        Ok(IclModel {
            f,
            g,
            config,
            dim,
            loss_history,
        })
    }

    pub fn config(&self) -> &IclConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of window positions `D − l + 1`.
    pub fn positions(&self) -> usize {
        self.config.positions(self.dim)
    }

    /// Width of a score embedding in the configured mode.
    pub fn score_dim(&self) -> usize {
        match self.config.score_mode {
            ScoreMode::Vector => self.positions(),
            ScoreMode::Scalar => 1,
        }
    }

    pub fn complement_encoder(&self) -> &DenseNet {
        &self.f
    }

    pub fn window_encoder(&self) -> &DenseNet {
        &self.g
    }

    /// Mean training loss per epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }

    /// Normalized-embedding dot product of a complement and a window.
    pub fn similarity(&self, q: ArrayView1<f64>, p: ArrayView1<f64>) -> Result<f64> {
        let fq = l2_normalize_rows(self.f.infer(q.insert_axis(Axis(0)))?.view());
        let gp = l2_normalize_rows(self.g.infer(p.insert_axis(Axis(0)))?.view());
        Ok(fq.row(0).dot(&gp.row(0)))
    }

    /// `k × k` matrix `M[d][d'] = F̂(q_d)·Ĝ(p_{d'})` for one sample.
    pub fn similarity_matrix(&self, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        self.check_len(x.len())?;
        let (q, p) = build_pair_matrices(x.insert_axis(Axis(0)), self.config.l);
        let fq = l2_normalize_rows(self.f.infer(q.view())?.view());
        let gp = l2_normalize_rows(self.g.infer(p.view())?.view());
        Ok(fq.dot(&gp.t()))
    }

    pub fn internal_loss(&self, x: ArrayView1<f64>, d: usize) -> Result<f64> {
        let k = self.positions();
        if d >= k {
            return Err(Error::usage(format!("position {d} out of range 0..{k}")));
        }
        let m = self.similarity_matrix(x)?;
        Ok(internal_loss(
            m.row(d),
            d,
            self.config.tau,
            self.config.denominator_mode,
        ))
    }

    /// Score embedding of a single sample.
    pub fn score(&self, x: ArrayView1<f64>) -> Result<ScoreEmbedding> {
        let s = self.score_batch(x.insert_axis(Axis(0)))?;
        Ok(ScoreEmbedding(s.row(0).to_owned()))
    }

    /// Per-position losses for every row (`n × k`), regardless of score mode.
    pub fn position_losses(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_len(x.ncols())?;
        let n = x.nrows();
        let k = self.positions();
        let mut out = Array2::<f64>::zeros((n, k));
        if n == 0 {
            return Ok(out);
        }
        let (q, p) = build_pair_matrices(x, self.config.l);
        let fq = l2_normalize_rows(self.f.infer(q.view())?.view());
        let gp = l2_normalize_rows(self.g.infer(p.view())?.view());
        for b in 0..n {
            let rows = s![b * k..(b + 1) * k, ..];
            let m = fq.slice(rows).dot(&gp.slice(rows).t());
            for d in 0..k {
                out[[b, d]] =
                    internal_loss(m.row(d), d, self.config.tau, self.config.denominator_mode);
            }
        }
        Ok(out)
    }

    /// Score embeddings of every row: `n × k` (vector mode) or `n × 1` (scalar).
    pub fn score_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let losses = self.position_losses(x)?;
        Ok(match self.config.score_mode {
            ScoreMode::Vector => losses,
            ScoreMode::Scalar => losses.sum_axis(Axis(1)).insert_axis(Axis(1)),
        })
    }

    /// Same model with a different score mode; the encoders are shared.
    pub fn with_score_mode(&self, mode: ScoreMode) -> Self {
        let mut m = self.clone();
        m.config.score_mode = mode;
        m
    }

    /// Hash of every encoder parameter and running statistic.
    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprint::new();
        for net in [&self.f, &self.g] {
            for layer in net.layers() {
                fp.floats(layer.weight.iter()).floats(layer.bias.iter());
                if let Some(bn) = &layer.batchnorm {
                    fp.floats(bn.gamma.iter())
                        .floats(bn.beta.iter())
                        .floats(bn.running_mean.iter())
                        .floats(bn.running_var.iter());
                }
            }
        }
        fp.hex()
    }

    /// Writes `f.nn`, `g.nn` and `icl.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        checkpoint::save(&dir.join("f.nn"), &self.f, None)?;
        checkpoint::save(&dir.join("g.nn"), &self.g, None)?;
        let header = Header {
            dim: self.dim,
            l: self.config.l,
            tau: self.config.tau,
            u: self.config.u,
            embed_dim: self.config.embed_dim,
            k: self.positions(),
            denominator_mode: self.config.denominator_mode,
            score_mode: self.config.score_mode,
            seed: self.config.seed,
            config: self.config.clone(),
            loss_history: self.loss_history.clone(),
        };
        let mut text = serde_json::to_string_pretty(&header)?;
        text.push('\n');
        std::fs::write(dir.join("icl.json"), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: Header = serde_json::from_str(&std::fs::read_to_string(dir.join("icl.json"))?)?;
        let (f, _) = checkpoint::load(&dir.join("f.nn"))?;
        let (g, _) = checkpoint::load(&dir.join("g.nn"))?;
        Self::from_parts(f, g, header.config, header.dim, header.loss_history)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::config(format!(
                "sample has {len} features, model expects {}",
                self.dim
            )));
        }
        Ok(())
    }
}
