//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            8 bytes  b"TANDEMCK"
//! version          u32      currently 1
//! kind             u8       0 = autorec-row, 1 = autorec-col, 2 = hybrid
//! seed             u64      training seed, for provenance
//! alpha, beta      2 x f64  rating scale
//! gamma1..gamma3   3 x f64  loss weights (zeros for autorec kinds)
//! branches         u8       1 for autorec, 2 for hybrid (row branch first)
//! per branch:
//!   visible_dim    u32
//!   hidden_dim     u32
//!   encoder weights  visible*hidden x f64, visible-major rows
//!   encoder biases   hidden x f64
//!   decoder weights  visible*hidden x f64, visible-major rows
//!   decoder biases   visible x f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::autorec::{AutoRecModel, ModelError, Orientation};
use crate::data::RatingScale;
use crate::hybrid::HybridModel;
use crate::net::{AutoencoderParams, DenseLayer, Matrix};

const MAGIC: &[u8; 8] = b"TANDEMCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A saved model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    AutoRec(AutoRecModel),
    Hybrid(HybridModel),
}

impl Checkpoint {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Checkpoint::AutoRec(m) => match m.orientation {
                Orientation::Row => "autorec-row",
                Orientation::Column => "autorec-col",
            },
            Checkpoint::Hybrid(_) => "hybrid",
        }
    }
}

pub fn save(path: impl AsRef<Path>, model: &Checkpoint, seed: u64) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let (kind, scale, gammas) = match model {
        Checkpoint::AutoRec(m) => (
            if m.orientation == Orientation::Row { 0u8 } else { 1u8 },
            m.scale,
            [0.0; 3],
        ),
        Checkpoint::Hybrid(m) => (2u8, m.scale, m.gammas),
    };
    w.write_u8(kind)?;
    w.write_u64::<LittleEndian>(seed)?;
    w.write_f64::<LittleEndian>(scale.alpha)?;
    w.write_f64::<LittleEndian>(scale.beta)?;
    for g in gammas {
        w.write_f64::<LittleEndian>(g)?;
    }
    match model {
        Checkpoint::AutoRec(m) => {
            w.write_u8(1)?;
            write_branch(&mut w, &m.params)?;
        }
        Checkpoint::Hybrid(m) => {
            w.write_u8(2)?;
            write_branch(&mut w, &m.row_branch)?;
            write_branch(&mut w, &m.col_branch)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint; returns the model and the recorded training seed.
pub fn load(path: impl AsRef<Path>) -> Result<(Checkpoint, u64), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let kind = r.read_u8()?;
    let seed = r.read_u64::<LittleEndian>()?;
    let alpha = r.read_f64::<LittleEndian>()?;
    let beta = r.read_f64::<LittleEndian>()?;
    if !(alpha < beta) {
        return Err(CheckpointError::Corrupt(format!("invalid scale [{alpha}, {beta}]")));
    }
    let scale = RatingScale::new(alpha, beta);
    let mut gammas = [0.0; 3];
    for g in &mut gammas {
        *g = r.read_f64::<LittleEndian>()?;
    }
    let branches = r.read_u8()?;
    let model = match (kind, branches) {
        (0 | 1, 1) => {
            let params = read_branch(&mut r)?;
            Checkpoint::AutoRec(AutoRecModel {
                orientation: if kind == 0 { Orientation::Row } else { Orientation::Column },
                params,
                scale,
            })
        }
        (2, 2) => {
            let row = read_branch(&mut r)?;
            let col = read_branch(&mut r)?;
            Checkpoint::Hybrid(HybridModel::new(row, col, gammas, scale)?)
        }
        _ => {
            return Err(CheckpointError::Corrupt(format!(
                "kind {kind} with {branches} branches"
            )))
        }
    };
    Ok((model, seed))
}

fn write_branch<W: Write>(w: &mut W, params: &AutoencoderParams) -> Result<(), CheckpointError> {
    w.write_u32::<LittleEndian>(params.visible_dim() as u32)?;
    w.write_u32::<LittleEndian>(params.hidden_dim() as u32)?;
    for &x in params.encoder.weights.as_slice() {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in &params.encoder.biases {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in params.decoder.weights.as_slice() {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in &params.decoder.biases {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_branch<R: Read>(r: &mut R) -> Result<AutoencoderParams, CheckpointError> {
    let visible = r.read_u32::<LittleEndian>()? as usize;
    let hidden = r.read_u32::<LittleEndian>()? as usize;
    if visible == 0 || hidden == 0 || visible.saturating_mul(hidden) > (1 << 32) {
        return Err(CheckpointError::Corrupt(format!("branch dims {visible}x{hidden}")));
    }
    let mut read_vec = |n: usize| -> Result<Vec<f64>, CheckpointError> {
        let mut v = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut v)?;
        Ok(v)
    };
    let enc_w = read_vec(visible * hidden)?;
    let enc_b = read_vec(hidden)?;
    let dec_w = read_vec(visible * hidden)?;
    let dec_b = read_vec(visible)?;
    Ok(AutoencoderParams {
        encoder: DenseLayer { weights: Matrix::from_vec(visible, hidden, enc_w), biases: enc_b },
        decoder: DenseLayer { weights: Matrix::from_vec(visible, hidden, dec_w), biases: dec_b },
    })
}
