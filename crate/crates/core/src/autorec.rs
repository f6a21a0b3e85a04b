//! Single-branch masked autoencoder over user rows or item columns: the
//! model reconstructs a partially observed vector and is penalized only on
//! the observed coordinates. Unobserved inputs are imputed with 0 in the
//! scaled domain, i.e. the midpoint rating.

use std::fmt;

use thiserror::Error;

use crate::data::{RatingScale, TrainingView};
use crate::net::{init_params, AutoencoderParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("batch contains no vectors")]
    EmptyBatch,
    #[error("batch contains no observed entries; the masked loss is undefined")]
    NoObservedEntries,
    #[error("index ({row}, {col}) outside matrix bounds {n_rows}x{n_cols}")]
    IndexOutOfBounds { row: usize, col: usize, n_rows: usize, n_cols: usize },
    #[error("coordinate {coord} outside visible dimension {dim}")]
    CoordinateOutOfRange { coord: usize, dim: usize },
    #[error("row and column branches must share a hidden dimension ({row} vs {col})")]
    HiddenDimMismatch { row: usize, col: usize },
    #[error("loss weights must be finite and nonnegative, got {0:?}")]
    BadGammas([f64; 3]),
}

/// Whether the autoencoder consumes user rows or item columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Row,
    Column,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Orientation::Row => f.write_str("row"),
            Orientation::Column => f.write_str("column"),
        }
    }
}

/// Single-branch baseline model.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoRecModel {
    pub orientation: Orientation,
    pub params: AutoencoderParams,
    pub scale: RatingScale,
}

impl AutoRecModel {
    /// Fresh model with Glorot-initialized weights. The visible dimension is
    /// the number of columns for row orientation and vice versa.
    pub fn init(
        orientation: Orientation,
        n_rows: usize,
        n_cols: usize,
        hidden_dim: usize,
        scale: RatingScale,
        seed: u64,
    ) -> Self {
        let visible = match orientation {
            Orientation::Row => n_cols,
            Orientation::Column => n_rows,
        };
        Self { orientation, params: init_params(visible, hidden_dim, seed), scale }
    }

    pub fn visible_dim(&self) -> usize {
        self.params.visible_dim()
    }

    /// Dense reconstruction of a sparse scaled vector: densify with zero
    /// imputation, encode, decode.
    pub fn reconstruct(&self, sparse: &[(usize, f64)]) -> Result<Vec<f64>, ModelError> {
        let dim = self.visible_dim();
        if let Some(&(coord, _)) = sparse.iter().find(|&&(j, _)| j >= dim) {
            return Err(ModelError::CoordinateOutOfRange { coord, dim });
        }
        let hidden = self.params.encode_sparse(sparse);
        Ok(self.params.decode(&hidden))
    }

    /// Mean squared error over the observed entries of a batch of sparse
    /// vectors; the denominator is the number of observed entries in the
    /// batch.
    pub fn masked_loss(&self, batch: &[Vec<(usize, f64)>]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for sparse in batch {
            let hidden = self.params.encode_sparse(sparse);
            for &(j, target) in sparse {
                let r = self.params.decode_at(&hidden, j) - target;
                sum += r * r;
                count += 1;
            }
        }
        if count == 0 {
            return Err(ModelError::NoObservedEntries);
        }
        Ok(sum / count as f64)
    }

    /// Input vector and readout coordinate for the matrix entry `(i, j)`.
    pub(crate) fn input_for<'v>(
        &self,
        view: &'v TrainingView,
        i: usize,
        j: usize,
    ) -> Result<(&'v [(usize, f64)], usize), ModelError> {
        if i >= view.n_rows() || j >= view.n_cols() {
            return Err(ModelError::IndexOutOfBounds {
                row: i,
                col: j,
                n_rows: view.n_rows(),
                n_cols: view.n_cols(),
            });
        }
        Ok(match self.orientation {
            Orientation::Row => (view.row(i), j),
            Orientation::Column => (view.col(j), i),
        })
    }

    /// Predict the rating of entry `(i, j)` from training-visible inputs,
    /// descaled and clamped to the rating scale.
    pub fn predict_entry(
        &self,
        i: usize,
        j: usize,
        view: &TrainingView,
    ) -> Result<f64, ModelError> {
        let (input, coord) = self.input_for(view, i, j)?;
        let hidden = self.params.encode_sparse(input);
        Ok(self.scale.descale(self.params.decode_at(&hidden, coord)))
    }
}
