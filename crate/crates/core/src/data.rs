//! Rating-file ingestion, the sparse observed-entry structure, train /
//! validation / evaluation splits, and rating scaling.
//!
//! Raw user and item ids are remapped to dense zero-based indices (sorted by
//! raw id); the mapping is kept for reporting. Entities that only appear in
//! held-out entries still occupy an index, so their training-visible sparse
//! vectors are simply empty.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: duplicate entry for user {user}, item {item}")]
    DuplicateEntry { line: usize, user: u64, item: u64 },
    #[error("line {line}: rating {value} outside [{min}, {max}]")]
    RatingOutOfRange { line: usize, value: f64, min: f64, max: f64 },
    #[error("dataset contains no ratings")]
    EmptyDataset,
    #[error("value {value} outside the rating scale [{min}, {max}]")]
    ValueOutOfScale { value: f64, min: f64, max: f64 },
    #[error("entry ({row}, {col}) outside matrix bounds {n_rows}x{n_cols}")]
    EntryOutOfBounds { row: usize, col: usize, n_rows: usize, n_cols: usize },
    #[error("split ratios must be positive and sum to 1 (got {0:?})")]
    BadSplitRatios([f64; 3]),
}

/// Bounds of the rating scale. The midpoint `mu = (alpha + beta) / 2` maps
/// to zero in the scaled domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingScale {
    pub alpha: f64,
    pub beta: f64,
}

impl RatingScale {
    pub fn new(alpha: f64, beta: f64) -> Self {
        assert!(alpha < beta, "rating scale needs alpha < beta");
        Self { alpha, beta }
    }

    pub fn mu(&self) -> f64 {
        (self.alpha + self.beta) / 2.0
    }

    /// Map a rating to the `[-1, 1]` training domain:
    /// `(value - mu) / (mu - alpha)`.
    pub fn scale(&self, value: f64) -> Result<f64, DataError> {
        if value < self.alpha || value > self.beta || !value.is_finite() {
            return Err(DataError::ValueOutOfScale {
                value,
                min: self.alpha,
                max: self.beta,
            });
        }
        Ok((value - self.mu()) / (self.mu() - self.alpha))
    }

    /// Inverse of [`RatingScale::scale`], clamped to `[alpha, beta]`.
    pub fn descale(&self, scaled: f64) -> f64 {
        (self.mu() + scaled * (self.mu() - self.alpha)).clamp(self.alpha, self.beta)
    }
}

/// One observed matrix entry on the original rating scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Supported rating-file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`
    Tab,
    /// `user::item::rating::timestamp`
    DoubleColon,
    /// `row,col,value` with a header line
    Csv,
}

impl FileFormat {
    pub fn name(&self) -> &'static str {
        match self {
            FileFormat::Tab => "tab",
            FileFormat::DoubleColon => "double-colon",
            FileFormat::Csv => "csv",
        }
    }
}

impl fmt::Display for FileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sparse observed-entry structure of a partially observed rating matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    n_rows: usize,
    n_cols: usize,
    triples: Vec<RatingTriple>,
    scale: RatingScale,
    row_entries: Vec<Vec<u32>>,
    col_entries: Vec<Vec<u32>>,
    raw_row_ids: Vec<u64>,
    raw_col_ids: Vec<u64>,
}

impl RatingDataset {
    /// Build a dataset from already-indexed triples, validating bounds,
    /// duplicates and the rating range.
    pub fn from_triples(
        n_rows: usize,
        n_cols: usize,
        triples: Vec<RatingTriple>,
        scale: RatingScale,
    ) -> Result<Self, DataError> {
        if triples.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let mut seen = HashMap::new();
        for (idx, t) in triples.iter().enumerate() {
            if t.row >= n_rows || t.col >= n_cols {
                return Err(DataError::EntryOutOfBounds {
                    row: t.row,
                    col: t.col,
                    n_rows,
                    n_cols,
                });
            }
            if t.value < scale.alpha || t.value > scale.beta {
                return Err(DataError::RatingOutOfRange {
                    line: idx + 1,
                    value: t.value,
                    min: scale.alpha,
                    max: scale.beta,
                });
            }
            if seen.insert((t.row, t.col), idx).is_some() {
                return Err(DataError::DuplicateEntry {
                    line: idx + 1,
                    user: t.row as u64,
                    item: t.col as u64,
                });
            }
        }
        let mut row_entries = vec![Vec::new(); n_rows];
        let mut col_entries = vec![Vec::new(); n_cols];
        for (idx, t) in triples.iter().enumerate() {
            row_entries[t.row].push(idx as u32);
            col_entries[t.col].push(idx as u32);
        }
        let raw_row_ids = (0..n_rows as u64).collect();
        let raw_col_ids = (0..n_cols as u64).collect();
        Ok(Self {
            n_rows,
            n_cols,
            triples,
            scale,
            row_entries,
            col_entries,
            raw_row_ids,
            raw_col_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[RatingTriple] {
        &self.triples
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    /// Raw file id of a dense row index.
    pub fn raw_row_id(&self, row: usize) -> u64 {
        self.raw_row_ids[row]
    }

    /// Raw file id of a dense column index.
    pub fn raw_col_id(&self, col: usize) -> u64 {
        self.raw_col_ids[col]
    }

    /// Entry indices observed in row `i`.
    pub fn row_entry_ids(&self, i: usize) -> &[u32] {
        &self.row_entries[i]
    }

    /// Entry indices observed in column `j`.
    pub fn col_entry_ids(&self, j: usize) -> &[u32] {
        &self.col_entries[j]
    }

    /// Training-visible observed entries of row `i` as coordinate-ascending
    /// `(col, scaled value)` pairs. `visible` marks entry indices that may
    /// be read.
    pub fn sparse_row(&self, visible: &[bool], i: usize) -> Vec<(usize, f64)> {
        assert!(i < self.n_rows, "row index {i} out of bounds");
        let mut out: Vec<(usize, f64)> = self.row_entries[i]
            .iter()
            .filter(|&&e| visible[e as usize])
            .map(|&e| {
                let t = &self.triples[e as usize];
                (t.col, self.scale.scale(t.value).expect("validated at construction"))
            })
            .collect();
        out.sort_unstable_by_key(|&(j, _)| j);
        out
    }

    /// Column counterpart of [`RatingDataset::sparse_row`]:
    /// coordinate-ascending `(row, scaled value)` pairs of column `j`.
    pub fn sparse_column(&self, visible: &[bool], j: usize) -> Vec<(usize, f64)> {
        assert!(j < self.n_cols, "column index {j} out of bounds");
        let mut out: Vec<(usize, f64)> = self.col_entries[j]
            .iter()
            .filter(|&&e| visible[e as usize])
            .map(|&e| {
                let t = &self.triples[e as usize];
                (t.row, self.scale.scale(t.value).expect("validated at construction"))
            })
            .collect();
        out.sort_unstable_by_key(|&(i, _)| i);
        out
    }
}

/// Parse a MovieLens-style rating file. Distinct raw ids become contiguous
/// zero-based indices; the scale is fixed to ratings in `[1, 5]` and
/// timestamps are discarded.
pub fn load_movielens(path: impl AsRef<Path>, format: FileFormat) -> Result<RatingDataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let scale = RatingScale::new(1.0, 5.0);

    let mut raw: Vec<(u64, u64, f64)> = Vec::new();
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    let mut header_done = false;
    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if format == FileFormat::Csv && !header_done {
            header_done = true;
            if line.trim() != "row,col,value" {
                return Err(DataError::MalformedLine {
                    line: line_no,
                    reason: format!("expected header \"row,col,value\", got \"{line}\""),
                });
            }
            continue;
        }
        let fields: Vec<&str> = match format {
            FileFormat::Tab => line.split('\t').collect(),
            FileFormat::DoubleColon => line.split("::").collect(),
            FileFormat::Csv => line.split(',').collect(),
        };
        let expected = if format == FileFormat::Csv { 3 } else { 4 };
        if fields.len() != expected {
            return Err(DataError::MalformedLine {
                line: line_no,
                reason: format!(
                    "expected {expected} {}-separated fields, got {}",
                    format.name(),
                    fields.len()
                ),
            });
        }
        let user: u64 = fields[0].trim().parse().map_err(|_| DataError::MalformedLine {
            line: line_no,
            reason: format!("invalid user id \"{}\"", fields[0]),
        })?;
        let item: u64 = fields[1].trim().parse().map_err(|_| DataError::MalformedLine {
            line: line_no,
            reason: format!("invalid item id \"{}\"", fields[1]),
        })?;
        let value: f64 = fields[2].trim().parse().map_err(|_| DataError::MalformedLine {
            line: line_no,
            reason: format!("invalid rating \"{}\"", fields[2]),
        })?;
        if !value.is_finite() || value < scale.alpha || value > scale.beta {
            return Err(DataError::RatingOutOfRange {
                line: line_no,
                value,
                min: scale.alpha,
                max: scale.beta,
            });
        }
        if seen.insert((user, item), line_no).is_some() {
            return Err(DataError::DuplicateEntry { line: line_no, user, item });
        }
        raw.push((user, item, value));
    }
    if raw.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let mut user_ids: Vec<u64> = raw.iter().map(|r| r.0).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    let mut item_ids: Vec<u64> = raw.iter().map(|r| r.1).collect();
    item_ids.sort_unstable();
    item_ids.dedup();
    let user_index: HashMap<u64, usize> =
        user_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let item_index: HashMap<u64, usize> =
        item_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let triples: Vec<RatingTriple> = raw
        .iter()
        .map(|&(u, i, v)| RatingTriple {
            row: user_index[&u],
            col: item_index[&i],
            value: v,
        })
        .collect();

    let mut dataset =
        RatingDataset::from_triples(user_ids.len(), item_ids.len(), triples, scale)?;
    dataset.raw_row_ids = user_ids;
    dataset.raw_col_ids = item_ids;
    Ok(dataset)
}

/// Disjoint train / validation / evaluation partition of a dataset's entry
/// indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub evaluation: Vec<usize>,
}

impl DataSplit {
    /// Boolean membership mask over entry indices for one of the three sets.
    pub fn mask(&self, set: &[usize], total: usize) -> Vec<bool> {
        let mut mask = vec![false; total];
        for &e in set {
            mask[e] = true;
        }
        mask
    }

    pub fn train_mask(&self, total: usize) -> Vec<bool> {
        self.mask(&self.train, total)
    }
}

/// Uniform random partition of entry indices, deterministic in `seed`.
/// Set sizes follow the largest-remainder rule, so they are within one entry
/// of the exact proportions and sum to the dataset size.
pub fn split(
    dataset: &RatingDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DataSplit, DataError> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(x > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::BadSplitRatios(r));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut counts: [usize; 3] = [0; 3];
    let mut fracs: Vec<(usize, f64)> = Vec::with_capacity(3);
    for (i, &ratio) in r.iter().enumerate() {
        let exact = ratio * n as f64;
        counts[i] = exact.floor() as usize;
        fracs.push((i, exact - exact.floor()));
    }
    // Three fractional parts each below one, so at most two entries remain.
    let remaining = n - counts.iter().sum::<usize>();
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(i, _) in fracs.iter().take(remaining) {
        counts[i] += 1;
    }

    let mut train: Vec<usize> = order[..counts[0]].to_vec();
    let mut validation: Vec<usize> = order[counts[0]..counts[0] + counts[1]].to_vec();
    let mut evaluation: Vec<usize> = order[counts[0] + counts[1]..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    evaluation.sort_unstable();
    Ok(DataSplit { train, validation, evaluation })
}

/// Precomputed training-visible sparse vectors of every row and column,
/// values already scaled. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TrainingView {
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
}

impl TrainingView {
    pub fn new(dataset: &RatingDataset, visible: &[bool]) -> Self {
        let rows = (0..dataset.n_rows()).map(|i| dataset.sparse_row(visible, i)).collect();
        let cols = (0..dataset.n_cols()).map(|j| dataset.sparse_column(visible, j)).collect();
        Self { rows, cols }
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn col(&self, j: usize) -> &[(usize, f64)] {
        &self.cols[j]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }
}
