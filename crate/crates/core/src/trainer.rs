//! Epoch orchestration for both models: permutation batch sampling, the
//! forward/backward/step loop, per-epoch curve logging, and best-validation
//! checkpoint selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autorec::{AutoRecModel, ModelError, Orientation};
use crate::data::{DataSplit, RatingDataset, RatingScale, TrainingView};
use crate::eval::{predictions_for, ModelRef};
use crate::hybrid::{
    joint_backward, joint_forward, joint_loss, loss_components, EntryBatch, HybridModel,
    PredictMode,
};
use crate::net::{backward_reconstruction, GradientBuffer};
use crate::optim::{AdamState, OptimError, Schedule};
use crate::seeds;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty; checkpoint selection needs validation entries")]
    EmptyValidationSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("optimizer failure at epoch {epoch}, batch {batch}: {source}")]
    Optim {
        epoch: usize,
        batch: usize,
        #[source]
        source: OptimError,
    },
    #[error("epoch {epoch} is not recorded in the curve log")]
    MissingEpoch { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub schedule: Schedule,
    pub l2_weight: f64,
    pub gammas: [f64; 3],
    pub hidden_dim: usize,
    pub seed: u64,
    /// Clamp descaled predictions when computing metrics.
    pub eval_clamp: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 200,
            schedule: Schedule::default(),
            l2_weight: 0.001,
            gammas: [1.0, 1.0, 10.0],
            hidden_dim: 500,
            seed: 42,
            eval_clamp: true,
        }
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub val_mae: f64,
    /// Scaled-domain mean squared row-reconstruction residual.
    pub recon_row: f64,
    pub recon_col: f64,
    pub manifold: f64,
}

/// Per-epoch metrics of a run, always for the run's primary prediction mode
/// and the running (not best-checkpoint) parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveLog {
    pub records: Vec<EpochRecord>,
}

impl CurveLog {
    pub fn record(&self, epoch: usize) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == epoch)
    }

    /// Epoch with the smallest validation RMSE (earliest on ties).
    pub fn best_val_epoch(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in &self.records {
            if best.map_or(true, |(_, v)| r.val_rmse < v) {
                best = Some((r.epoch, r.val_rmse));
            }
        }
        best.map(|(e, _)| e)
    }

    /// CSV serialization: `epoch,train_rmse,val_rmse,learning_rate`, plus the
    /// three loss-component columns for hybrid runs.
    pub fn to_csv(&self, include_components: bool) -> String {
        let mut out = String::from("epoch,train_rmse,val_rmse,learning_rate");
        if include_components {
            out.push_str(",recon_row,recon_col,manifold");
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}", r.epoch, r.train_rmse, r.val_rmse, r.lr));
            if include_components {
                out.push_str(&format!(",{},{},{}", r.recon_row, r.recon_col, r.manifold));
            }
            out.push('\n');
        }
        out
    }
}

/// Validation RMSE minus training RMSE at a recorded epoch.
pub fn generalization_gap(log: &CurveLog, epoch: usize) -> Result<f64, TrainError> {
    let r = log.record(epoch).ok_or(TrainError::MissingEpoch { epoch })?;
    Ok(r.val_rmse - r.train_rmse)
}

/// A fresh uniform permutation of `0..count`, chunked into batches. The last
/// batch may be short. Deterministic in `(seed, epoch)`.
fn permuted_chunks(count: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(seed, seeds::SHUFFLE));
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Per-epoch entry batches for hybrid training: a permutation of the
/// training entries chunked into [`EntryBatch`]es with scaled targets.
pub fn sample_batches(
    dataset: &RatingDataset,
    train_entries: &[usize],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<EntryBatch> {
    let scale = dataset.scale();
    permuted_chunks(train_entries.len(), batch_size, seed, epoch)
        .into_iter()
        .map(|chunk| {
            let list: Vec<(usize, usize, f64)> = chunk
                .iter()
                .map(|&slot| {
                    let t = dataset.triples()[train_entries[slot]];
                    (t.row, t.col, scale.scale(t.value).expect("validated at load"))
                })
                .collect();
            EntryBatch::new(list, dataset.n_rows(), dataset.n_cols())
                .expect("chunks of a nonempty permutation are nonempty and in bounds")
        })
        .collect()
}

/// Trained model plus its curve log.
#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Parameters of the best-validation epoch.
    pub model: M,
    pub best_epoch: usize,
    pub log: CurveLog,
}

/// Outcome of a hybrid run with one best-validation checkpoint per
/// requested prediction mode.
#[derive(Debug, Clone)]
pub struct MultiOutcome {
    /// Best checkpoints, aligned with the requested modes.
    pub models: Vec<HybridModel>,
    pub best_epochs: Vec<usize>,
    /// Curve for the first (primary) requested mode.
    pub log: CurveLog,
}

fn descale_with(scale: RatingScale, scaled: f64, clamp: bool) -> f64 {
    if clamp {
        scale.descale(scaled)
    } else {
        scale.mu() + scaled * (scale.mu() - scale.alpha)
    }
}

fn rmse_mae(truth: &[f64], preds: &[f64]) -> (f64, f64) {
    debug_assert_eq!(truth.len(), preds.len());
    debug_assert!(!truth.is_empty());
    let n = truth.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (t, p) in truth.iter().zip(preds) {
        sq += (t - p) * (t - p);
        abs += (t - p).abs();
    }
    ((sq / n).sqrt(), abs / n)
}

fn validation_entries(dataset: &RatingDataset, split: &DataSplit) -> (Vec<(usize, usize)>, Vec<f64>) {
    let pairs = split
        .validation
        .iter()
        .map(|&e| {
            let t = dataset.triples()[e];
            (t.row, t.col)
        })
        .collect();
    let truth = split.validation.iter().map(|&e| dataset.triples()[e].value).collect();
    (pairs, truth)
}

/// Train the two-branch model, tracking a best-validation checkpoint for
/// each requested prediction mode in a single run (training itself is
/// mode-independent; only checkpoint selection differs). The curve log and
/// `on_epoch` callback follow the running parameters.
pub fn train_hybrid_multi(
    dataset: &RatingDataset,
    data_split: &DataSplit,
    config: &TrainConfig,
    modes: &[PredictMode],
    mut on_epoch: impl FnMut(usize, &HybridModel),
) -> Result<MultiOutcome, TrainError> {
    assert!(!modes.is_empty(), "at least one prediction mode is required");
    if data_split.train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if data_split.validation.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }
    let scale = dataset.scale();
    let view = TrainingView::new(dataset, &data_split.train_mask(dataset.len()));
    let mut model = HybridModel::init(
        dataset.n_rows(),
        dataset.n_cols(),
        config.hidden_dim,
        config.gammas,
        scale,
        config.seed,
    )?;
    let mut adam_row = AdamState::new(&model.row_branch);
    let mut adam_col = AdamState::new(&model.col_branch);
    let mut row_grads = GradientBuffer::zeros_like(&model.row_branch);
    let mut col_grads = GradientBuffer::zeros_like(&model.col_branch);

    let (val_pairs, val_truth) = validation_entries(dataset, data_split);
    let primary = modes[0];
    let mut best: Vec<Option<(f64, HybridModel, usize)>> = vec![None; modes.len()];
    let mut log = CurveLog::default();

    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at_epoch(epoch);
        let batches =
            sample_batches(dataset, &data_split.train, config.batch_size, config.seed, epoch);
        let mut comp_sums = [0.0f64; 3];
        let mut train_sq = 0.0;
        let mut n_entries = 0usize;

        for (batch_idx, batch) in batches.iter().enumerate() {
            let fwd = joint_forward(&model, batch, &view);
            let loss = joint_loss(&model, batch, &fwd);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_idx });
            }
            let (c1, c2, c3) = loss_components(batch, &fwd);
            let nb = batch.len() as f64;
            comp_sums[0] += c1 * nb;
            comp_sums[1] += c2 * nb;
            comp_sums[2] += c3 * nb;
            for (k, &(_, _, target)) in batch.entries().iter().enumerate() {
                let scaled = match primary {
                    PredictMode::Row => fwd.row_recon[k],
                    PredictMode::Column => fwd.col_recon[k],
                    PredictMode::Cosine => fwd.similarity[k],
                };
                let pred = descale_with(scale, scaled, config.eval_clamp);
                let truth = scale.descale(target);
                train_sq += (pred - truth) * (pred - truth);
            }
            n_entries += batch.len();

            row_grads.clear();
            col_grads.clear();
            joint_backward(&model, batch, &view, &fwd, &mut row_grads, &mut col_grads);
            // Fused l2-plus-Adam; bitwise-identical to apply_l2 followed by
            // a plain step.
            adam_row
                .step_with_l2(&mut model.row_branch, &row_grads, lr, config.l2_weight)
                .map_err(|source| TrainError::Optim { epoch, batch: batch_idx, source })?;
            adam_col
                .step_with_l2(&mut model.col_branch, &col_grads, lr, config.l2_weight)
                .map_err(|source| TrainError::Optim { epoch, batch: batch_idx, source })?;
        }

        let mut primary_metrics = (f64::NAN, f64::NAN);
        for (slot, &mode) in modes.iter().enumerate() {
            let preds =
                predictions_for(ModelRef::Hybrid(&model, mode), &view, &val_pairs, config.eval_clamp)?;
            let (val_rmse, val_mae) = rmse_mae(&val_truth, &preds);
            if slot == 0 {
                primary_metrics = (val_rmse, val_mae);
            }
            if best[slot].as_ref().map_or(true, |(b, _, _)| val_rmse < *b) {
                best[slot] = Some((val_rmse, model.clone(), epoch));
            }
        }

        log.records.push(EpochRecord {
            epoch,
            lr,
            train_rmse: (train_sq / n_entries as f64).sqrt(),
            val_rmse: primary_metrics.0,
            val_mae: primary_metrics.1,
            recon_row: comp_sums[0] / n_entries as f64,
            recon_col: comp_sums[1] / n_entries as f64,
            manifold: comp_sums[2] / n_entries as f64,
        });
        on_epoch(epoch, &model);
    }

    let mut models = Vec::with_capacity(modes.len());
    let mut best_epochs = Vec::with_capacity(modes.len());
    for slot in best {
        let (_, m, e) = slot.expect("at least one epoch ran");
        models.push(m);
        best_epochs.push(e);
    }
    Ok(MultiOutcome { models, best_epochs, log })
}

/// Train the two-branch model and return the checkpoint with the best
/// validation RMSE under `mode`.
pub fn train_hybrid(
    dataset: &RatingDataset,
    data_split: &DataSplit,
    config: &TrainConfig,
    mode: PredictMode,
) -> Result<TrainOutcome<HybridModel>, TrainError> {
    let mut outcome = train_hybrid_multi(dataset, data_split, config, &[mode], |_, _| {})?;
    Ok(TrainOutcome {
        model: outcome.models.pop().expect("one mode requested"),
        best_epoch: outcome.best_epochs[0],
        log: outcome.log,
    })
}

/// Train a single-branch baseline on whole-vector batches (rows for row
/// orientation, columns otherwise), returning the best-validation
/// checkpoint.
pub fn train_autorec(
    dataset: &RatingDataset,
    data_split: &DataSplit,
    config: &TrainConfig,
    orientation: Orientation,
) -> Result<TrainOutcome<AutoRecModel>, TrainError> {
    train_autorec_with(dataset, data_split, config, orientation, |_, _| {})
}

/// [`train_autorec`] with a per-epoch observer over the running model.
pub fn train_autorec_with(
    dataset: &RatingDataset,
    data_split: &DataSplit,
    config: &TrainConfig,
    orientation: Orientation,
    mut on_epoch: impl FnMut(usize, &AutoRecModel),
) -> Result<TrainOutcome<AutoRecModel>, TrainError> {
    if data_split.train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if data_split.validation.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }
    let scale = dataset.scale();
    let view = TrainingView::new(dataset, &data_split.train_mask(dataset.len()));
    let mut model = AutoRecModel::init(
        orientation,
        dataset.n_rows(),
        dataset.n_cols(),
        config.hidden_dim,
        scale,
        seeds::mix(config.seed, seeds::SINGLE_INIT),
    );
    let mut adam = AdamState::new(&model.params);
    let mut grads = GradientBuffer::zeros_like(&model.params);
    let vector_count = match orientation {
        Orientation::Row => dataset.n_rows(),
        Orientation::Column => dataset.n_cols(),
    };
    let vector_input = |v: usize| -> &[(usize, f64)] {
        match orientation {
            Orientation::Row => view.row(v),
            Orientation::Column => view.col(v),
        }
    };

    let (val_pairs, val_truth) = validation_entries(dataset, data_split);
    let mut best: Option<(f64, AutoRecModel, usize)> = None;
    let mut log = CurveLog::default();

    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at_epoch(epoch);
        let mut epoch_sq_scaled = 0.0;
        let mut train_sq = 0.0;
        let mut n_observed = 0usize;

        for (batch_idx, chunk) in
            permuted_chunks(vector_count, config.batch_size, config.seed, epoch)
                .into_iter()
                .enumerate()
        {
            // Forward every vector of the batch, keeping residuals at the
            // observed coordinates only.
            let mut hiddens = Vec::with_capacity(chunk.len());
            let mut residuals: Vec<Vec<(usize, f64)>> = Vec::with_capacity(chunk.len());
            let mut batch_sq = 0.0;
            let mut batch_obs = 0usize;
            for &v in &chunk {
                let input = vector_input(v);
                let h = model.params.encode_sparse(input);
                let rs: Vec<(usize, f64)> = input
                    .iter()
                    .map(|&(coord, target)| {
                        let pred = model.params.decode_at(&h, coord);
                        let r = pred - target;
                        batch_sq += r * r;
                        let p = descale_with(scale, pred, config.eval_clamp);
                        let t = scale.descale(target);
                        train_sq += (p - t) * (p - t);
                        (coord, r)
                    })
                    .collect();
                batch_obs += rs.len();
                hiddens.push(h);
                residuals.push(rs);
            }
            if batch_obs == 0 {
                // A batch of entirely unobserved vectors carries no signal.
                continue;
            }
            let loss = batch_sq / batch_obs as f64;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_idx });
            }
            epoch_sq_scaled += batch_sq;
            n_observed += batch_obs;

            grads.clear();
            let weight = 1.0 / batch_obs as f64;
            for ((&v, h), rs) in chunk.iter().zip(&hiddens).zip(&residuals) {
                backward_reconstruction(&model.params, vector_input(v), h, rs, weight, &mut grads);
            }
            adam.step_with_l2(&mut model.params, &grads, lr, config.l2_weight)
                .map_err(|source| TrainError::Optim { epoch, batch: batch_idx, source })?;
        }

        let preds =
            predictions_for(ModelRef::AutoRec(&model), &view, &val_pairs, config.eval_clamp)?;
        let (val_rmse, val_mae) = rmse_mae(&val_truth, &preds);
        if best.as_ref().map_or(true, |(b, _, _)| val_rmse < *b) {
            best = Some((val_rmse, model.clone(), epoch));
        }
        let recon = if n_observed == 0 { 0.0 } else { epoch_sq_scaled / n_observed as f64 };
        log.records.push(EpochRecord {
            epoch,
            lr,
            train_rmse: if n_observed == 0 {
                0.0
            } else {
                (train_sq / n_observed as f64).sqrt()
            },
            val_rmse,
            val_mae,
            recon_row: if orientation == Orientation::Row { recon } else { 0.0 },
            recon_col: if orientation == Orientation::Column { recon } else { 0.0 },
            manifold: 0.0,
        });
        on_epoch(epoch, &model);
    }

    let (_, model, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model, best_epoch, log })
}
