//! RMSE / MAE over held-out entries, multi-split aggregation, and report
//! rendering.
//!
//! Evaluation only ever feeds training-visible entries into the models:
//! validation and evaluation ratings never appear in input vectors.

use std::collections::HashMap;

use thiserror::Error;

use crate::autorec::{AutoRecModel, ModelError};
use crate::data::{split, DataSplit, RatingDataset, TrainingView};
use crate::hybrid::{HybridModel, PredictMode};
use crate::trainer::{train_autorec, train_hybrid_multi, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot compute metrics over an empty prediction list")]
    EmptyPredictions,
    #[error("split seeds must be distinct, got {0:?}")]
    DuplicateSeeds(Vec<u64>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Root mean squared error over `(truth, predicted)` pairs.
pub fn rmse(predictions: &[(f64, f64)]) -> Result<f64, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    let sum: f64 = predictions.iter().map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

/// Mean absolute error over `(truth, predicted)` pairs.
pub fn mae(predictions: &[(f64, f64)]) -> Result<f64, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    let sum: f64 = predictions.iter().map(|(t, p)| (t - p).abs()).sum();
    Ok(sum / predictions.len() as f64)
}

/// A model under evaluation.
#[derive(Clone, Copy)]
pub enum ModelRef<'a> {
    AutoRec(&'a AutoRecModel),
    Hybrid(&'a HybridModel, PredictMode),
}

/// Descaled predictions for a list of `(i, j)` pairs, encoding each needed
/// row/column vector once. Returned in input order.
pub(crate) fn predictions_for(
    model: ModelRef<'_>,
    view: &TrainingView,
    pairs: &[(usize, usize)],
    clamp: bool,
) -> Result<Vec<f64>, ModelError> {
    let mut out = Vec::with_capacity(pairs.len());
    match model {
        ModelRef::AutoRec(m) => {
            let mut cache: HashMap<usize, Vec<f64>> = HashMap::new();
            for &(i, j) in pairs {
                let (input, coord) = m.input_for(view, i, j)?;
                let key = match m.orientation {
                    crate::autorec::Orientation::Row => i,
                    crate::autorec::Orientation::Column => j,
                };
                let hidden =
                    cache.entry(key).or_insert_with(|| m.params.encode_sparse(input));
                out.push(descale(m.scale, m.params.decode_at(hidden, coord), clamp));
            }
        }
        ModelRef::Hybrid(m, mode) => {
            let mut row_cache: HashMap<usize, Vec<f64>> = HashMap::new();
            let mut col_cache: HashMap<usize, Vec<f64>> = HashMap::new();
            for &(i, j) in pairs {
                if i >= view.n_rows() || j >= view.n_cols() {
                    return Err(ModelError::IndexOutOfBounds {
                        row: i,
                        col: j,
                        n_rows: view.n_rows(),
                        n_cols: view.n_cols(),
                    });
                }
                let scaled = match mode {
                    PredictMode::Row => {
                        let h = row_cache
                            .entry(i)
                            .or_insert_with(|| m.row_branch.encode_sparse(view.row(i)));
                        m.row_branch.decode_at(h, j)
                    }
                    PredictMode::Column => {
                        let h = col_cache
                            .entry(j)
                            .or_insert_with(|| m.col_branch.encode_sparse(view.col(j)));
                        m.col_branch.decode_at(h, i)
                    }
                    PredictMode::Cosine => {
                        let hi = row_cache
                            .entry(i)
                            .or_insert_with(|| m.row_branch.encode_sparse(view.row(i)))
                            .clone();
                        let hj = col_cache
                            .entry(j)
                            .or_insert_with(|| m.col_branch.encode_sparse(view.col(j)));
                        crate::net::cosine_similarity(&hi, hj)
                    }
                };
                out.push(descale(m.scale, scaled, clamp));
            }
        }
    }
    Ok(out)
}

fn descale(scale: crate::data::RatingScale, scaled: f64, clamp: bool) -> f64 {
    if clamp {
        scale.descale(scaled)
    } else {
        scale.mu() + scaled * (scale.mu() - scale.alpha)
    }
}

/// RMSE and MAE over the evaluation entries of a split, predicting from
/// training-visible inputs only.
pub fn evaluate(
    model: ModelRef<'_>,
    dataset: &RatingDataset,
    data_split: &DataSplit,
    clamp: bool,
) -> Result<(f64, f64), EvalError> {
    if data_split.evaluation.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    let view = TrainingView::new(dataset, &data_split.train_mask(dataset.len()));
    let pairs: Vec<(usize, usize)> = data_split
        .evaluation
        .iter()
        .map(|&e| {
            let t = dataset.triples()[e];
            (t.row, t.col)
        })
        .collect();
    let preds = predictions_for(model, &view, &pairs, clamp)?;
    let with_truth: Vec<(f64, f64)> = data_split
        .evaluation
        .iter()
        .zip(&preds)
        .map(|(&e, &p)| (dataset.triples()[e].value, p))
        .collect();
    Ok((rmse(&with_truth)?, mae(&with_truth)?))
}

/// Per-split metrics of one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMetrics {
    pub seed: u64,
    pub rmse: f64,
    pub mae: f64,
}

/// Metrics of one model kind across several random splits, with plain
/// arithmetic-mean averages.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub mode: String,
    pub gammas: Option<[f64; 3]>,
    pub per_split: Vec<SplitMetrics>,
    pub avg_rmse: f64,
    pub avg_mae: f64,
}

impl EvalReport {
    pub fn new(
        model: impl Into<String>,
        mode: impl Into<String>,
        gammas: Option<[f64; 3]>,
        per_split: Vec<SplitMetrics>,
    ) -> Self {
        let n = per_split.len().max(1) as f64;
        let avg_rmse = per_split.iter().map(|m| m.rmse).sum::<f64>() / n;
        let avg_mae = per_split.iter().map(|m| m.mae).sum::<f64>() / n;
        Self { model: model.into(), mode: mode.into(), gammas, per_split, avg_rmse, avg_mae }
    }

    pub fn split_seeds(&self) -> Vec<u64> {
        self.per_split.iter().map(|m| m.seed).collect()
    }

    /// Human-readable per-split table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("model: {} (mode: {})\n", self.model, self.mode));
        if let Some(g) = self.gammas {
            out.push_str(&format!("gammas: {} {} {}\n", g[0], g[1], g[2]));
        }
        out.push_str("seed    rmse      mae\n");
        for m in &self.per_split {
            out.push_str(&format!("{:<7} {:<9.4} {:<9.4}\n", m.seed, m.rmse, m.mae));
        }
        out.push_str(&format!("avg     {:<9.4} {:<9.4}\n", self.avg_rmse, self.avg_mae));
        out
    }

    /// Machine-readable key=value lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("report.model = {}\n", self.model));
        out.push_str(&format!("report.mode = {}\n", self.mode));
        if let Some(g) = self.gammas {
            out.push_str(&format!("report.gamma1 = {}\n", g[0]));
            out.push_str(&format!("report.gamma2 = {}\n", g[1]));
            out.push_str(&format!("report.gamma3 = {}\n", g[2]));
        }
        let seeds: Vec<String> = self.per_split.iter().map(|m| m.seed.to_string()).collect();
        out.push_str(&format!("report.split_seeds = {}\n", seeds.join(",")));
        for m in &self.per_split {
            out.push_str(&format!("report.split.{}.rmse = {}\n", m.seed, m.rmse));
            out.push_str(&format!("report.split.{}.mae = {}\n", m.seed, m.mae));
        }
        out.push_str(&format!("report.avg_rmse = {}\n", self.avg_rmse));
        out.push_str(&format!("report.avg_mae = {}\n", self.avg_mae));
        out
    }
}

/// Which model a multi-split run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    AutoRecRow,
    AutoRecCol,
    Hybrid(PredictMode),
}

/// Split, train and evaluate once per seed, then aggregate. Each seed
/// drives both the split and the training run.
pub fn run_splits(
    dataset: &RatingDataset,
    config: &TrainConfig,
    kind: ModelKind,
    ratios: (f64, f64, f64),
    seeds: &[u64],
) -> Result<EvalReport, EvalError> {
    match kind {
        ModelKind::Hybrid(mode) => {
            Ok(run_splits_hybrid(dataset, config, ratios, seeds, &[mode])?.pop().unwrap())
        }
        ModelKind::AutoRecRow | ModelKind::AutoRecCol => {
            check_seeds(seeds)?;
            let orientation = match kind {
                ModelKind::AutoRecRow => crate::autorec::Orientation::Row,
                _ => crate::autorec::Orientation::Column,
            };
            let mut per_split = Vec::new();
            for &seed in seeds {
                let data_split = split(dataset, ratios, seed)?;
                let mut cfg = config.clone();
                cfg.seed = seed;
                let outcome = train_autorec(dataset, &data_split, &cfg, orientation)?;
                let (r, m) = evaluate(
                    ModelRef::AutoRec(&outcome.model),
                    dataset,
                    &data_split,
                    config.eval_clamp,
                )?;
                per_split.push(SplitMetrics { seed, rmse: r, mae: m });
            }
            Ok(EvalReport::new(
                format!("autorec-{orientation}"),
                orientation.to_string(),
                None,
                per_split,
            ))
        }
    }
}

/// Hybrid multi-split run that trains once per seed and reads out a
/// best-validation checkpoint per requested prediction mode.
pub fn run_splits_hybrid(
    dataset: &RatingDataset,
    config: &TrainConfig,
    ratios: (f64, f64, f64),
    seeds: &[u64],
    modes: &[PredictMode],
) -> Result<Vec<EvalReport>, EvalError> {
    check_seeds(seeds)?;
    assert!(!modes.is_empty(), "at least one prediction mode is required");
    let mut per_mode: Vec<Vec<SplitMetrics>> = vec![Vec::new(); modes.len()];
    for &seed in seeds {
        let data_split = split(dataset, ratios, seed)?;
        let mut cfg = config.clone();
        cfg.seed = seed;
        let outcome = train_hybrid_multi(dataset, &data_split, &cfg, modes, |_, _| {})?;
        for (idx, (model, &mode)) in outcome.models.iter().zip(modes).enumerate() {
            let (r, m) =
                evaluate(ModelRef::Hybrid(model, mode), dataset, &data_split, config.eval_clamp)?;
            per_mode[idx].push(SplitMetrics { seed, rmse: r, mae: m });
        }
    }
    Ok(per_mode
        .into_iter()
        .zip(modes)
        .map(|(metrics, &mode)| {
            EvalReport::new("hybrid", mode.to_string(), Some(config.gammas), metrics)
        })
        .collect())
}

fn check_seeds(seeds: &[u64]) -> Result<(), EvalError> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(EvalError::DuplicateSeeds(seeds.to_vec()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autorec::Orientation;
    use crate::data::{RatingScale, RatingTriple};

    #[test]
    fn rmse_and_mae_hand_cases() {
        assert_eq!(rmse(&[(3.0, 3.0), (4.0, 4.0)]).unwrap(), 0.0);
        assert_eq!(rmse(&[(3.0, 4.0)]).unwrap(), 1.0);
        let pairs = [(1.0, 2.0), (3.0, 3.0), (5.0, 1.0)];
        assert!((rmse(&pairs).unwrap() - (17.0f64 / 3.0).sqrt()).abs() < 1e-12);

        assert_eq!(mae(&[(3.0, 3.0)]).unwrap(), 0.0);
        assert_eq!(mae(&[(3.0, 4.0)]).unwrap(), 1.0);
        assert!((mae(&pairs).unwrap() - 5.0 / 3.0).abs() < 1e-12);

        assert!(rmse(&[]).is_err());
        assert!(mae(&[]).is_err());
    }

    #[test]
    fn rmse_dominates_mae() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let pairs: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.gen_range(1.0..5.0), rng.gen_range(1.0..5.0))).collect();
            assert!(rmse(&pairs).unwrap() >= mae(&pairs).unwrap() - 1e-12);
        }
    }

    #[test]
    fn metrics_match_bruteforce() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pairs: Vec<(f64, f64)> =
            (0..100).map(|_| (rng.gen_range(1.0..5.0), rng.gen_range(0.0..6.0))).collect();
        let mut se = 0.0;
        let mut ae = 0.0;
        for &(t, p) in &pairs {
            se += (t - p) * (t - p);
            ae += (t - p).abs();
        }
        assert!((rmse(&pairs).unwrap() - (se / 100.0).sqrt()).abs() < 1e-12);
        assert!((mae(&pairs).unwrap() - ae / 100.0).abs() < 1e-12);
    }

    fn toy_dataset() -> RatingDataset {
        let mut triples = Vec::new();
        for i in 0..10 {
            for j in 0..8 {
                if (i * 8 + j) % 2 == 0 {
                    triples.push(RatingTriple {
                        row: i,
                        col: j,
                        value: ((i + j) % 5 + 1) as f64,
                    });
                }
            }
        }
        RatingDataset::from_triples(10, 8, triples, RatingScale::new(1.0, 5.0)).unwrap()
    }

    #[test]
    fn evaluation_inputs_never_read_heldout_ratings() {
        let ds = toy_dataset();
        let sp = split(&ds, (0.6, 0.2, 0.2), 3).unwrap();
        let view = TrainingView::new(&ds, &sp.train_mask(ds.len()));
        let pairs: Vec<(usize, usize)> = sp
            .evaluation
            .iter()
            .map(|&e| (ds.triples()[e].row, ds.triples()[e].col))
            .collect();

        let autorec = AutoRecModel::init(Orientation::Row, 10, 8, 4, ds.scale(), 5);
        let hybrid = HybridModel::init(10, 8, 4, [1.0, 1.0, 1.0], ds.scale(), 6).unwrap();

        // Perturb every validation and evaluation rating; training entries
        // stay fixed, so the training view and therefore the predictions
        // must be bitwise identical.
        let mut perturbed_triples = ds.triples().to_vec();
        for &e in sp.validation.iter().chain(&sp.evaluation) {
            let v = perturbed_triples[e].value;
            perturbed_triples[e].value = if v > 3.0 { v - 1.0 } else { v + 1.0 };
        }
        let perturbed =
            RatingDataset::from_triples(10, 8, perturbed_triples, ds.scale()).unwrap();
        let view2 = TrainingView::new(&perturbed, &sp.train_mask(ds.len()));

        for model in [
            ModelRef::AutoRec(&autorec),
            ModelRef::Hybrid(&hybrid, PredictMode::Row),
            ModelRef::Hybrid(&hybrid, PredictMode::Column),
            ModelRef::Hybrid(&hybrid, PredictMode::Cosine),
        ] {
            let a = predictions_for(model, &view, &pairs, true).unwrap();
            let b = predictions_for(model, &view2, &pairs, true).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn evaluate_uses_cached_and_direct_paths_consistently() {
        let ds = toy_dataset();
        let sp = split(&ds, (0.6, 0.2, 0.2), 4).unwrap();
        let view = TrainingView::new(&ds, &sp.train_mask(ds.len()));
        let hybrid = HybridModel::init(10, 8, 4, [1.0, 1.0, 1.0], ds.scale(), 7).unwrap();
        for mode in [PredictMode::Row, PredictMode::Column, PredictMode::Cosine] {
            let pairs: Vec<(usize, usize)> = sp
                .evaluation
                .iter()
                .map(|&e| (ds.triples()[e].row, ds.triples()[e].col))
                .collect();
            let bulk =
                predictions_for(ModelRef::Hybrid(&hybrid, mode), &view, &pairs, true).unwrap();
            for (&(i, j), &p) in pairs.iter().zip(&bulk) {
                assert_eq!(hybrid.predict(i, j, &view, mode).unwrap(), p);
            }
        }
    }

    #[test]
    fn report_averages_are_arithmetic_means() {
        let report = EvalReport::new(
            "hybrid",
            "column",
            Some([1.0, 1.0, 10.0]),
            vec![
                SplitMetrics { seed: 1, rmse: 0.9, mae: 0.7 },
                SplitMetrics { seed: 2, rmse: 1.1, mae: 0.8 },
            ],
        );
        assert!((report.avg_rmse - 1.0).abs() < 1e-15);
        assert!((report.avg_mae - 0.75).abs() < 1e-15);
        assert_eq!(report.split_seeds(), vec![1, 2]);
        assert!(report.render_table().contains("avg"));
        assert!(report.to_key_values().contains("report.avg_rmse"));
    }

    #[test]
    fn duplicate_seeds_are_rejected() {
        let ds = toy_dataset();
        let config = TrainConfig { epochs: 1, hidden_dim: 2, ..TrainConfig::default() };
        let err = run_splits(&ds, &config, ModelKind::AutoRecRow, (0.6, 0.2, 0.2), &[1, 1]);
        assert!(matches!(err, Err(EvalError::DuplicateSeeds(_))));
    }
}
