//! Internal contrastive learning over tabular samples.
//!
//! For a `D`-vector `x` and sub-vector length `l`, each start index
//! `d ∈ 0..=D−l` splits `x` into a window `p_d` (length `l`) and its
//! complement `q_d` (length `D − l`). Encoder `F` embeds complements,
//! encoder `G` embeds windows; after row normalization their dot products form
//! a `k × k` similarity matrix per sample (`k = D − l + 1`). The loss at `d`
//! contrasts the matched pair `(q_d, p_d)` against the mismatched windows.

mod config;
mod model;
mod objective;
mod train;

pub use config::{DenominatorMode, IclConfig, ScoreMode};
pub use model::{internal_loss, slice_pairs, IclModel, ScoreEmbedding};
pub use objective::{batch_objective, build_pair_matrices, row_loss_and_grad, BatchObjective};
pub use train::{build_encoders, train_icl, train_icl_matrix};
