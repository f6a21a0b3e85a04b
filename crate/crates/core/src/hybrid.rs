//! Two-branch model: a row autoencoder and a column autoencoder whose hidden
//! codes are tied together by a cosine-similarity head. Each observed entry
//! `(i, j)` contributes three weighted squared residuals to the objective:
//!
//! ```text
//! gamma1 (X_i(j) - X̂_i(j))² + gamma2 (Y_j(i) - Ŷ_j(i))²
//!     + gamma3 (cos(h_i, h_j) - M_ij)²
//! ```
//!
//! averaged over the batch, everything in the scaled `[-1, 1]` domain. The
//! similarity head is what couples the branches: with `gamma3 = 0` they
//! reduce to two independent single-branch autoencoders.

use std::collections::HashMap;

use crate::autorec::ModelError;
use crate::data::{RatingScale, TrainingView};
use crate::net::{
    backward_cosine_into, backward_decoder, cosine_similarity, init_params, AutoencoderParams,
    CoordBuckets, GradientBuffer,
};
use crate::seeds;

/// Which readout produces a rating prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    /// Row-branch reconstruction `X̂_i(j)`.
    Row,
    /// Column-branch reconstruction `Ŷ_j(i)`.
    Column,
    /// Similarity head `cos(h_i, h_j)`.
    Cosine,
}

impl std::fmt::Display for PredictMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PredictMode::Row => f.write_str("row"),
            PredictMode::Column => f.write_str("column"),
            PredictMode::Cosine => f.write_str("cosine"),
        }
    }
}

/// Row branch, column branch and the loss weights `(gamma1, gamma2, gamma3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub row_branch: AutoencoderParams,
    pub col_branch: AutoencoderParams,
    pub gammas: [f64; 3],
    pub scale: RatingScale,
}

impl HybridModel {
    /// Validates that the branches share a hidden dimension (required by the
    /// inner product of the similarity head) and that the loss weights are
    /// finite and nonnegative.
    pub fn new(
        row_branch: AutoencoderParams,
        col_branch: AutoencoderParams,
        gammas: [f64; 3],
        scale: RatingScale,
    ) -> Result<Self, ModelError> {
        if row_branch.hidden_dim() != col_branch.hidden_dim() {
            return Err(ModelError::HiddenDimMismatch {
                row: row_branch.hidden_dim(),
                col: col_branch.hidden_dim(),
            });
        }
        if gammas.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(ModelError::BadGammas(gammas));
        }
        Ok(Self { row_branch, col_branch, gammas, scale })
    }

    /// Fresh model over an `n_rows x n_cols` matrix; branch weights draw
    /// from independent streams of `seed`.
    pub fn init(
        n_rows: usize,
        n_cols: usize,
        hidden_dim: usize,
        gammas: [f64; 3],
        scale: RatingScale,
        seed: u64,
    ) -> Result<Self, ModelError> {
        Self::new(
            init_params(n_cols, hidden_dim, seeds::mix(seed, seeds::ROW_INIT)),
            init_params(n_rows, hidden_dim, seeds::mix(seed, seeds::COL_INIT)),
            gammas,
            scale,
        )
    }

    pub fn hidden_dim(&self) -> usize {
        self.row_branch.hidden_dim()
    }

    pub fn n_rows(&self) -> usize {
        self.col_branch.visible_dim()
    }

    pub fn n_cols(&self) -> usize {
        self.row_branch.visible_dim()
    }

    /// Predict the rating of entry `(i, j)` from training-visible inputs,
    /// descaled and clamped.
    pub fn predict(
        &self,
        i: usize,
        j: usize,
        view: &TrainingView,
        mode: PredictMode,
    ) -> Result<f64, ModelError> {
        Ok(self.scale.descale(self.predict_scaled(i, j, view, mode)?))
    }

    /// Scaled-domain prediction, no descaling or clamping.
    pub fn predict_scaled(
        &self,
        i: usize,
        j: usize,
        view: &TrainingView,
        mode: PredictMode,
    ) -> Result<f64, ModelError> {
        if i >= view.n_rows() || j >= view.n_cols() {
            return Err(ModelError::IndexOutOfBounds {
                row: i,
                col: j,
                n_rows: view.n_rows(),
                n_cols: view.n_cols(),
            });
        }
        Ok(match mode {
            PredictMode::Row => {
                let h = self.row_branch.encode_sparse(view.row(i));
                self.row_branch.decode_at(&h, j)
            }
            PredictMode::Column => {
                let h = self.col_branch.encode_sparse(view.col(j));
                self.col_branch.decode_at(&h, i)
            }
            PredictMode::Cosine => {
                let hi = self.row_branch.encode_sparse(view.row(i));
                let hj = self.col_branch.encode_sparse(view.col(j));
                cosine_similarity(&hi, &hj)
            }
        })
    }
}

/// A minibatch of observed entries with the deduplicated row and column
/// index sets; targets are in the scaled domain.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryBatch {
    entries: Vec<(usize, usize, f64)>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    row_slot: Vec<usize>,
    col_slot: Vec<usize>,
}

impl EntryBatch {
    /// Builds the batch and its dedup index sets (first-appearance order).
    pub fn new(
        entries: Vec<(usize, usize, f64)>,
        n_rows: usize,
        n_cols: usize,
    ) -> Result<Self, ModelError> {
        if entries.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut row_index: HashMap<usize, usize> = HashMap::new();
        let mut col_index: HashMap<usize, usize> = HashMap::new();
        let mut row_slot = Vec::with_capacity(entries.len());
        let mut col_slot = Vec::with_capacity(entries.len());
        for &(i, j, _) in &entries {
            if i >= n_rows || j >= n_cols {
                return Err(ModelError::IndexOutOfBounds { row: i, col: j, n_rows, n_cols });
            }
            row_slot.push(*row_index.entry(i).or_insert_with(|| {
                rows.push(i);
                rows.len() - 1
            }));
            col_slot.push(*col_index.entry(j).or_insert_with(|| {
                cols.push(j);
                cols.len() - 1
            }));
        }
        Ok(Self { entries, rows, cols, row_slot, col_slot })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(row, col, scaled target)` per entry.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Unique row indices, in order of first appearance.
    pub fn unique_rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn unique_cols(&self) -> &[usize] {
        &self.cols
    }
}

/// Forward state of one batch: hidden codes per unique row/column and the
/// three per-entry readouts.
#[derive(Debug, Clone)]
pub struct JointForward {
    /// Hidden code per unique batch row, aligned with `batch.unique_rows()`.
    pub row_hidden: Vec<Vec<f64>>,
    pub col_hidden: Vec<Vec<f64>>,
    /// Euclidean norms of the hidden codes, cached for the similarity head.
    pub row_norms: Vec<f64>,
    pub col_norms: Vec<f64>,
    /// Per-entry row-branch reconstruction `X̂_i(j)`.
    pub row_recon: Vec<f64>,
    /// Per-entry column-branch reconstruction `Ŷ_j(i)`.
    pub col_recon: Vec<f64>,
    /// Per-entry similarity `cos(h_i, h_j)`.
    pub similarity: Vec<f64>,
}

fn row_buckets(batch: &EntryBatch, view: &TrainingView) -> CoordBuckets {
    let vectors: Vec<&[(usize, f64)]> = batch.rows.iter().map(|&i| view.row(i)).collect();
    CoordBuckets::build(&vectors, view.n_cols())
}

fn col_buckets(batch: &EntryBatch, view: &TrainingView) -> CoordBuckets {
    let vectors: Vec<&[(usize, f64)]> = batch.cols.iter().map(|&j| view.col(j)).collect();
    CoordBuckets::build(&vectors, view.n_rows())
}

/// Encode every unique row and column of the batch exactly once and read
/// out the three predictions for each entry.
pub fn joint_forward(model: &HybridModel, batch: &EntryBatch, view: &TrainingView) -> JointForward {
    let row_hidden = row_buckets(batch, view).encode_batch(&model.row_branch);
    let col_hidden = col_buckets(batch, view).encode_batch(&model.col_branch);
    let row_norms: Vec<f64> = row_hidden.iter().map(|h| norm(h)).collect();
    let col_norms: Vec<f64> = col_hidden.iter().map(|h| norm(h)).collect();

    let mut row_recon = Vec::with_capacity(batch.len());
    let mut col_recon = Vec::with_capacity(batch.len());
    let mut similarity = Vec::with_capacity(batch.len());
    for (k, &(i, j, _)) in batch.entries.iter().enumerate() {
        let (rs, cs) = (batch.row_slot[k], batch.col_slot[k]);
        let hi = &row_hidden[rs];
        let hj = &col_hidden[cs];
        debug_assert_eq!((batch.rows[rs], batch.cols[cs]), (i, j));
        row_recon.push(model.row_branch.decode_at(hi, j));
        col_recon.push(model.col_branch.decode_at(hj, i));
        similarity.push(dot(hi, hj) / (row_norms[rs] * col_norms[cs] + COSINE_EPS));
    }
    JointForward { row_hidden, col_hidden, row_norms, col_norms, row_recon, col_recon, similarity }
}

/// Per-entry mean of the three weighted loss terms over the batch.
pub fn joint_loss(model: &HybridModel, batch: &EntryBatch, forward: &JointForward) -> f64 {
    let [g1, g2, g3] = model.gammas;
    let mut sum = 0.0;
    for (k, &(_, _, target)) in batch.entries.iter().enumerate() {
        let r1 = forward.row_recon[k] - target;
        let r2 = forward.col_recon[k] - target;
        let r3 = forward.similarity[k] - target;
        sum += g1 * r1 * r1 + g2 * r2 * r2 + g3 * r3 * r3;
    }
    sum / batch.len() as f64
}

/// Scaled-domain means of the three loss components over the batch,
/// unweighted by the gammas: `(recon_row, recon_col, manifold)`.
pub fn loss_components(batch: &EntryBatch, forward: &JointForward) -> (f64, f64, f64) {
    let mut sums = (0.0, 0.0, 0.0);
    for (k, &(_, _, target)) in batch.entries.iter().enumerate() {
        let r1 = forward.row_recon[k] - target;
        let r2 = forward.col_recon[k] - target;
        let r3 = forward.similarity[k] - target;
        sums.0 += r1 * r1;
        sums.1 += r2 * r2;
        sums.2 += r3 * r3;
    }
    let n = batch.len() as f64;
    (sums.0 / n, sums.1 / n, sums.2 / n)
}

/// Exact gradients of [`joint_loss`] with respect to all eight parameter
/// tensors, accumulated into the two gradient buffers.
///
/// The reconstruction terms flow through the decoder coordinate of each
/// entry only; the similarity term reaches both encoders through the cosine
/// gradient. Branch terms with a zero gamma are skipped entirely, which
/// leaves their gradient contribution exactly zero.
pub fn joint_backward(
    model: &HybridModel,
    batch: &EntryBatch,
    view: &TrainingView,
    forward: &JointForward,
    row_grads: &mut GradientBuffer,
    col_grads: &mut GradientBuffer,
) {
    let [g1, g2, g3] = model.gammas;
    let inv_n = 1.0 / batch.len() as f64;
    let hidden = model.hidden_dim();

    // Per-entry output gradients, grouped by unique row/column so each
    // encoder is backpropagated once per unique vector. The hidden-code
    // gradients accumulate in one flat buffer per branch.
    let mut row_coord_grads: Vec<Vec<(usize, f64)>> = vec![Vec::new(); batch.rows.len()];
    let mut col_coord_grads: Vec<Vec<(usize, f64)>> = vec![Vec::new(); batch.cols.len()];
    let mut row_dl_dh = vec![0.0f64; batch.rows.len() * hidden];
    let mut col_dl_dh = vec![0.0f64; batch.cols.len() * hidden];

    for (k, &(i, j, target)) in batch.entries.iter().enumerate() {
        let (rs, cs) = (batch.row_slot[k], batch.col_slot[k]);
        debug_assert_eq!((batch.rows[rs], batch.cols[cs]), (i, j));
        if g1 > 0.0 {
            let c = 2.0 * g1 * inv_n * (forward.row_recon[k] - target);
            row_coord_grads[rs].push((j, c));
        }
        if g2 > 0.0 {
            let c = 2.0 * g2 * inv_n * (forward.col_recon[k] - target);
            col_coord_grads[cs].push((i, c));
        }
        if g3 > 0.0 {
            let upstream = 2.0 * g3 * inv_n * (forward.similarity[k] - target);
            backward_cosine_into(
                &forward.row_hidden[rs],
                &forward.col_hidden[cs],
                upstream,
                &mut row_dl_dh[rs * hidden..(rs + 1) * hidden],
                &mut col_dl_dh[cs * hidden..(cs + 1) * hidden],
            );
        }
    }

    // Decoder backward per unique vector, then sigmoid deltas, then one
    // bucketed scatter per branch so each encoder-gradient row streams once.
    let mut row_deltas = vec![0.0f64; batch.rows.len() * hidden];
    for (slot, delta) in row_deltas.chunks_exact_mut(hidden).enumerate() {
        let h = &forward.row_hidden[slot];
        let decode_path =
            backward_decoder(&model.row_branch, h, &row_coord_grads[slot], row_grads);
        let dl_dh = &row_dl_dh[slot * hidden..(slot + 1) * hidden];
        for (d, (h, (a, b))) in delta.iter_mut().zip(h.iter().zip(dl_dh.iter().zip(&decode_path)))
        {
            *d = (a + b) * h * (1.0 - h);
        }
    }
    row_buckets(batch, view).scatter_encoder_gradients(&row_deltas, row_grads);

    let mut col_deltas = vec![0.0f64; batch.cols.len() * hidden];
    for (slot, delta) in col_deltas.chunks_exact_mut(hidden).enumerate() {
        let h = &forward.col_hidden[slot];
        let decode_path =
            backward_decoder(&model.col_branch, h, &col_coord_grads[slot], col_grads);
        let dl_dh = &col_dl_dh[slot * hidden..(slot + 1) * hidden];
        for (d, (h, (a, b))) in delta.iter_mut().zip(h.iter().zip(dl_dh.iter().zip(&decode_path)))
        {
            *d = (a + b) * h * (1.0 - h);
        }
    }
    col_buckets(batch, view).scatter_encoder_gradients(&col_deltas, col_grads);
}
