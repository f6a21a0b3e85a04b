//! Dense-layer algebra for single-hidden-layer autoencoders.
//!
//! A branch maps a (sparse) visible vector to a sigmoid hidden code and back
//! through an affine decoder. Both weight tensors are stored visible-major
//! (`visible_dim` rows of `hidden_dim` contiguous values) so that sparse
//! encoding, per-coordinate decoding and gradient scatter all touch
//! contiguous memory:
//!
//! - `encoder.weights.row(j)` holds the hidden-unit coefficients of visible
//!   coordinate `j` (the transpose of the usual out-by-in convention),
//! - `decoder.weights.row(j)` holds the weights producing output coordinate
//!   `j` (the usual convention).
//!
//! Shape mismatches are programmer errors and panic; data-dependent failures
//! (non-finite losses during finite-difference probing) return [`NetError`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Guards cosine denominators; sigmoid codes never vanish, but this keeps
/// the function total for arbitrary vectors.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("non-finite loss encountered while probing parameter {tensor:?}[{index}]")]
    NonFiniteLoss { tensor: TensorId, index: usize },
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self { rows: rows.len(), cols: n_cols, data: rows.concat() }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }
}

/// One affine layer: weight matrix plus per-output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// Identifies one of the four parameter tensors of a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorId {
    EncoderWeights,
    EncoderBiases,
    DecoderWeights,
    DecoderBiases,
}

impl TensorId {
    pub const ALL: [TensorId; 4] = [
        TensorId::EncoderWeights,
        TensorId::EncoderBiases,
        TensorId::DecoderWeights,
        TensorId::DecoderBiases,
    ];

    /// ℓ2 regularization applies to weight tensors only.
    pub fn is_weights(self) -> bool {
        matches!(self, TensorId::EncoderWeights | TensorId::DecoderWeights)
    }
}

/// Encoder and decoder of a single branch.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub encoder: DenseLayer,
    pub decoder: DenseLayer,
}

impl AutoencoderParams {
    pub fn visible_dim(&self) -> usize {
        self.encoder.weights.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.weights.cols()
    }

    pub fn tensor(&self, id: TensorId) -> &[f64] {
        match id {
            TensorId::EncoderWeights => self.encoder.weights.as_slice(),
            TensorId::EncoderBiases => &self.encoder.biases,
            TensorId::DecoderWeights => self.decoder.weights.as_slice(),
            TensorId::DecoderBiases => &self.decoder.biases,
        }
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
        match id {
            TensorId::EncoderWeights => self.encoder.weights.as_mut_slice(),
            TensorId::EncoderBiases => &mut self.encoder.biases,
            TensorId::DecoderWeights => self.decoder.weights.as_mut_slice(),
            TensorId::DecoderBiases => &mut self.decoder.biases,
        }
    }

    /// Hidden code of a dense visible vector: `h = sigmoid(W_e x + b_e)`.
    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.visible_dim(), "encode: input length mismatch");
        let sparse: Vec<(usize, f64)> = x.iter().copied().enumerate().collect();
        self.encode_sparse(&sparse)
    }

    /// Hidden code of a sparse visible vector; absent coordinates are 0.
    /// Zero-valued coordinates (midpoint ratings in the scaled domain) are
    /// skipped: they contribute nothing to the pre-activation.
    pub fn encode_sparse(&self, x: &[(usize, f64)]) -> Vec<f64> {
        let mut pre = self.encoder.biases.clone();
        for &(j, v) in x {
            assert!(j < self.visible_dim(), "encode: coordinate {j} out of range");
            if v != 0.0 {
                axpy(&mut pre, v, self.encoder.weights.row(j));
            }
        }
        pre.iter_mut().for_each(|z| *z = sigmoid(*z));
        pre
    }

    /// Affine reconstruction of the full visible vector from a hidden code.
    /// The decoder applies no activation.
    pub fn decode(&self, h: &[f64]) -> Vec<f64> {
        assert_eq!(h.len(), self.hidden_dim(), "decode: hidden length mismatch");
        (0..self.visible_dim()).map(|j| self.decode_at(h, j)).collect()
    }

    /// Single reconstructed coordinate `x̂(j)`.
    #[inline]
    pub fn decode_at(&self, h: &[f64], j: usize) -> f64 {
        dot(self.decoder.weights.row(j), h) + self.decoder.biases[j]
    }
}

/// Gradients of a scalar loss with respect to every branch parameter;
/// shape-congruent with [`AutoencoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub encoder_weights: Matrix,
    pub encoder_biases: Vec<f64>,
    pub decoder_weights: Matrix,
    pub decoder_biases: Vec<f64>,
}

impl GradientBuffer {
    pub fn zeros_like(params: &AutoencoderParams) -> Self {
        Self {
            encoder_weights: Matrix::zeros(params.visible_dim(), params.hidden_dim()),
            encoder_biases: vec![0.0; params.hidden_dim()],
            decoder_weights: Matrix::zeros(params.visible_dim(), params.hidden_dim()),
            decoder_biases: vec![0.0; params.visible_dim()],
        }
    }

    pub fn clear(&mut self) {
        self.encoder_weights.fill(0.0);
        self.encoder_biases.iter_mut().for_each(|v| *v = 0.0);
        self.decoder_weights.fill(0.0);
        self.decoder_biases.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn tensor(&self, id: TensorId) -> &[f64] {
        match id {
            TensorId::EncoderWeights => self.encoder_weights.as_slice(),
            TensorId::EncoderBiases => &self.encoder_biases,
            TensorId::DecoderWeights => self.decoder_weights.as_slice(),
            TensorId::DecoderBiases => &self.decoder_biases,
        }
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
        match id {
            TensorId::EncoderWeights => self.encoder_weights.as_mut_slice(),
            TensorId::EncoderBiases => &mut self.encoder_biases,
            TensorId::DecoderWeights => self.decoder_weights.as_mut_slice(),
            TensorId::DecoderBiases => &mut self.decoder_biases,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Dot product with eight independent accumulators so the reduction
/// vectorizes instead of serializing on one dependency chain.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xs, ys) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += xs[k] * ys[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `acc += scale * values`, elementwise.
#[inline]
pub fn axpy(acc: &mut [f64], scale: f64, values: &[f64]) {
    debug_assert_eq!(acc.len(), values.len());
    for (a, v) in acc.iter_mut().zip(values) {
        *a += scale * v;
    }
}

/// Glorot-uniform weights (`bound = sqrt(6 / (in + out))`), zero biases.
/// Deterministic in `seed`.
pub fn init_params(visible_dim: usize, hidden_dim: usize, seed: u64) -> AutoencoderParams {
    assert!(visible_dim >= 1 && hidden_dim >= 1, "dimensions must be at least 1");
    let bound = (6.0 / (visible_dim + hidden_dim) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |m: &mut Matrix| {
        m.as_mut_slice().iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
    };
    let mut encoder_weights = Matrix::zeros(visible_dim, hidden_dim);
    fill(&mut encoder_weights);
    let mut decoder_weights = Matrix::zeros(visible_dim, hidden_dim);
    fill(&mut decoder_weights);
    AutoencoderParams {
        encoder: DenseLayer { weights: encoder_weights, biases: vec![0.0; hidden_dim] },
        decoder: DenseLayer { weights: decoder_weights, biases: vec![0.0; visible_dim] },
    }
}

/// Cosine similarity `u·v / (‖u‖‖v‖ + eps)`; lies in `[-1, 1]` up to the
/// epsilon guard.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "cosine_similarity: length mismatch");
    dot(u, v) / (norm(u) * norm(v) + COSINE_EPS)
}

/// Gradient of `upstream * cosine_similarity(u, v)` with respect to `u` and
/// `v`. Exact for the epsilon-guarded definition.
pub fn backward_cosine(u: &[f64], v: &[f64], upstream: f64) -> (Vec<f64>, Vec<f64>) {
    let mut du = vec![0.0; u.len()];
    let mut dv = vec![0.0; v.len()];
    backward_cosine_into(u, v, upstream, &mut du, &mut dv);
    (du, dv)
}

/// [`backward_cosine`] accumulating into existing buffers.
///
/// `d/da [a·b / (‖a‖‖b‖+eps)] = b/denom - f·(‖b‖/‖a‖)·a/denom`.
pub fn backward_cosine_into(
    u: &[f64],
    v: &[f64],
    upstream: f64,
    du_acc: &mut [f64],
    dv_acc: &mut [f64],
) {
    assert_eq!(u.len(), v.len(), "backward_cosine: length mismatch");
    let (nu, nv) = (norm(u), norm(v));
    let f = dot(u, v) / (nu * nv + COSINE_EPS);
    backward_cosine_cached(u, v, nu, nv, f, upstream, du_acc, dv_acc);
}

/// Cosine backward with the norms and similarity already known, as the
/// batch forward caches them.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_cosine_cached(
    u: &[f64],
    v: &[f64],
    nu: f64,
    nv: f64,
    f: f64,
    upstream: f64,
    du_acc: &mut [f64],
    dv_acc: &mut [f64],
) {
    let denom = nu * nv + COSINE_EPS;
    let radial_u = if nu > 0.0 { f * nv / (nu * denom) } else { 0.0 };
    let radial_v = if nv > 0.0 { f * nu / (nv * denom) } else { 0.0 };
    axpy(du_acc, upstream / denom, v);
    axpy(du_acc, -upstream * radial_u, u);
    axpy(dv_acc, upstream / denom, u);
    axpy(dv_acc, -upstream * radial_v, v);
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Backpropagate per-coordinate output gradients through the decoder,
/// accumulating into `grads` and returning `∂L/∂h`.
///
/// `coord_grads` holds `(j, ∂L/∂x̂(j))` pairs; coordinates may repeat.
pub fn backward_decoder(
    params: &AutoencoderParams,
    hidden: &[f64],
    coord_grads: &[(usize, f64)],
    grads: &mut GradientBuffer,
) -> Vec<f64> {
    let mut dl_dh = vec![0.0; params.hidden_dim()];
    for &(j, g) in coord_grads {
        assert!(j < params.visible_dim(), "backward_decoder: coordinate {j} out of range");
        axpy(grads.decoder_weights.row_mut(j), g, hidden);
        grads.decoder_biases[j] += g;
        axpy(&mut dl_dh, g, params.decoder.weights.row(j));
    }
    dl_dh
}

/// Backpropagate a hidden-code gradient through the sigmoid encoder,
/// accumulating into `grads`. `input` is the sparse visible vector that
/// produced `hidden`.
pub fn backward_encoder(
    params: &AutoencoderParams,
    input: &[(usize, f64)],
    hidden: &[f64],
    dl_dh: &[f64],
    grads: &mut GradientBuffer,
) {
    debug_assert_eq!(hidden.len(), params.hidden_dim());
    debug_assert_eq!(dl_dh.len(), params.hidden_dim());
    // sigma'(z) expressed through the activation: h (1 - h).
    let delta: Vec<f64> =
        dl_dh.iter().zip(hidden).map(|(g, h)| g * h * (1.0 - h)).collect();
    for (acc, d) in grads.encoder_biases.iter_mut().zip(&delta) {
        *acc += d;
    }
    for &(j, v) in input {
        if v != 0.0 {
            axpy(grads.encoder_weights.row_mut(j), v, &delta);
        }
    }
}

/// Exact gradients of the masked squared error
/// `weight * Σ_j residual(j)²` through decoder and encoder, where
/// `masked_residuals` holds `(j, x̂(j) - target(j))` for the observed
/// coordinates. Accumulates into `grads` and returns the decode-path
/// `∂L/∂h` for composition with additional hidden-code terms.
pub fn backward_reconstruction(
    params: &AutoencoderParams,
    input: &[(usize, f64)],
    hidden: &[f64],
    masked_residuals: &[(usize, f64)],
    weight: f64,
    grads: &mut GradientBuffer,
) -> Vec<f64> {
    let coord_grads: Vec<(usize, f64)> =
        masked_residuals.iter().map(|&(j, r)| (j, 2.0 * weight * r)).collect();
    let dl_dh = backward_decoder(params, hidden, &coord_grads, grads);
    backward_encoder(params, input, hidden, &dl_dh, grads);
    dl_dh
}

/// The sparse vectors of one batch bucketed by visible coordinate, so that
/// batched encoding and encoder-gradient scatter stream each weight row
/// exactly once per batch instead of once per vector.
///
/// Within a vector, coordinates must be ascending; batched encoding then
/// accumulates every vector's pre-activation in the same order as
/// [`AutoencoderParams::encode_sparse`], making the two paths bitwise equal.
pub struct CoordBuckets {
    visible: usize,
    offsets: Vec<u32>,
    /// Vector slots grouped by coordinate, slot-ascending within a bucket.
    slots: Vec<u32>,
    /// Input values aligned with `slots`.
    values: Vec<f64>,
    n_slots: usize,
}

impl CoordBuckets {
    /// Zero-valued coordinates are dropped here for the same reason
    /// [`AutoencoderParams::encode_sparse`] skips them.
    pub fn build(vectors: &[&[(usize, f64)]], visible: usize) -> Self {
        let mut offsets = vec![0u32; visible + 1];
        for v in vectors {
            for &(j, x) in *v {
                debug_assert!(j < visible);
                if x != 0.0 {
                    offsets[j + 1] += 1;
                }
            }
        }
        for j in 0..visible {
            offsets[j + 1] += offsets[j];
        }
        let total = offsets[visible] as usize;
        let mut cursor: Vec<u32> = offsets[..visible].to_vec();
        let mut slots = vec![0u32; total];
        let mut values = vec![0.0f64; total];
        for (slot, v) in vectors.iter().enumerate() {
            for &(j, x) in *v {
                if x == 0.0 {
                    continue;
                }
                let at = cursor[j] as usize;
                slots[at] = slot as u32;
                values[at] = x;
                cursor[j] += 1;
            }
        }
        Self { visible, offsets, slots, values, n_slots: vectors.len() }
    }

    /// Hidden codes of every bucketed vector, equal to calling
    /// [`AutoencoderParams::encode_sparse`] per vector. The accumulators
    /// live in one flat buffer so the hot loop stays pointer-chase free.
    pub fn encode_batch(&self, params: &AutoencoderParams) -> Vec<Vec<f64>> {
        assert_eq!(self.visible, params.visible_dim());
        let hidden = params.hidden_dim();
        let mut pre = vec![0.0f64; self.n_slots * hidden];
        for chunk in pre.chunks_exact_mut(hidden) {
            chunk.copy_from_slice(&params.encoder.biases);
        }
        for j in 0..self.visible {
            let (s, e) = (self.offsets[j] as usize, self.offsets[j + 1] as usize);
            if s == e {
                continue;
            }
            let w = &params.encoder.weights.row(j)[..hidden];
            for (slot, x) in self.slots[s..e].iter().zip(&self.values[s..e]) {
                let base = *slot as usize * hidden;
                axpy(&mut pre[base..base + hidden], *x, w);
            }
        }
        pre.chunks_exact(hidden)
            .map(|chunk| chunk.iter().map(|&z| sigmoid(z)).collect())
            .collect()
    }

    /// Accumulate `weights[j] += input_j(slot) * delta(slot)` over every
    /// bucketed entry, plus the bias gradient `sum of deltas`. `deltas` is a
    /// flat `n_slots x hidden` buffer of sigmoid-backpropagated hidden
    /// gradients.
    pub fn scatter_encoder_gradients(&self, deltas: &[f64], grads: &mut GradientBuffer) {
        let hidden = grads.encoder_weights.cols();
        assert_eq!(deltas.len(), self.n_slots * hidden);
        for j in 0..self.visible {
            let (s, e) = (self.offsets[j] as usize, self.offsets[j + 1] as usize);
            if s == e {
                continue;
            }
            let row = grads.encoder_weights.row_mut(j);
            for (slot, x) in self.slots[s..e].iter().zip(&self.values[s..e]) {
                let base = *slot as usize * hidden;
                axpy(row, *x, &deltas[base..base + hidden]);
            }
        }
        for delta in deltas.chunks_exact(hidden) {
            for (acc, d) in grads.encoder_biases.iter_mut().zip(delta) {
                *acc += d;
            }
        }
    }
}

/// Central finite differences of an arbitrary scalar loss over every branch
/// parameter: `(L(θ+δ) - L(θ-δ)) / 2δ`.
pub fn finite_difference_gradient<F>(
    mut loss: F,
    params: &AutoencoderParams,
    step: f64,
) -> Result<GradientBuffer, NetError>
where
    F: FnMut(&AutoencoderParams) -> f64,
{
    assert!(step > 0.0, "finite differences need a positive step");
    let mut grads = GradientBuffer::zeros_like(params);
    let mut probe = params.clone();
    for id in TensorId::ALL {
        for idx in 0..params.tensor(id).len() {
            let original = probe.tensor(id)[idx];
            probe.tensor_mut(id)[idx] = original + step;
            let plus = loss(&probe);
            probe.tensor_mut(id)[idx] = original - step;
            let minus = loss(&probe);
            probe.tensor_mut(id)[idx] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NetError::NonFiniteLoss { tensor: id, index: idx });
            }
            grads.tensor_mut(id)[idx] = (plus - minus) / (2.0 * step);
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn rng_params(visible: usize, hidden: usize, seed: u64) -> AutoencoderParams {
        init_params(visible, hidden, seed)
    }

    fn random_vec(len: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    // Straightforward out-by-in matrix arithmetic, independent of the
    // layout tricks in the implementation.
    fn naive_forward(params: &AutoencoderParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (vis, hid) = (params.visible_dim(), params.hidden_dim());
        let mut h = vec![0.0; hid];
        for k in 0..hid {
            let mut z = params.encoder.biases[k];
            for j in 0..vis {
                z += params.encoder.weights.row(j)[k] * x[j];
            }
            h[k] = sigmoid(z);
        }
        let mut out = vec![0.0; vis];
        for j in 0..vis {
            let mut z = params.decoder.biases[j];
            for k in 0..hid {
                z += params.decoder.weights.row(j)[k] * h[k];
            }
            out[j] = z;
        }
        (h, out)
    }

    #[test]
    fn encode_zero_params_gives_half() {
        let mut params = rng_params(3, 2, 0);
        params.encoder.weights.fill(0.0);
        params.encoder.biases.iter_mut().for_each(|b| *b = 0.0);
        let h = params.encode(&[0.3, -0.8, 0.5]);
        assert_eq!(h, vec![0.5, 0.5]);
    }

    #[test]
    fn encode_zero_input_gives_sigmoid_bias() {
        let mut params = rng_params(3, 2, 1);
        params.encoder.biases = vec![0.7, -1.2];
        let h = params.encode(&[0.0, 0.0, 0.0]);
        assert_close(h[0], sigmoid(0.7), 1e-15);
        assert_close(h[1], sigmoid(-1.2), 1e-15);
    }

    #[test]
    fn forward_matches_naive_matrix_arithmetic() {
        for seed in 0..5 {
            let params = rng_params(6, 4, seed);
            let x = random_vec(6, seed + 100);
            let h = params.encode(&x);
            let out = params.decode(&h);
            let (h2, out2) = naive_forward(&params, &x);
            for (a, b) in h.iter().zip(&h2) {
                assert_close(*a, *b, 1e-12);
            }
            for (a, b) in out.iter().zip(&out2) {
                assert_close(*a, *b, 1e-12);
            }
        }
    }

    #[test]
    fn decode_zero_weights_gives_bias() {
        let mut params = rng_params(3, 2, 2);
        params.decoder.weights.fill(0.0);
        params.decoder.biases = vec![0.1, 0.2, 0.3];
        assert_eq!(params.decode(&[0.4, 0.9]), vec![0.1, 0.2, 0.3]);
        // h = 0 hits the bias path no matter the weights.
        let params = rng_params(3, 2, 3);
        let out = params.decode(&[0.0, 0.0]);
        for (o, b) in out.iter().zip(&params.decoder.biases) {
            assert_close(*o, *b, 1e-15);
        }
    }

    #[test]
    fn encode_output_strictly_inside_unit_interval() {
        for seed in 0..20 {
            let params = rng_params(8, 6, seed);
            let x = random_vec(8, seed + 7);
            for h in params.encode(&x) {
                assert!(h > 0.0 && h < 1.0);
            }
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let params = rng_params(5, 3, 9);
        let x = random_vec(5, 10);
        let first = params.decode(&params.encode(&x));
        for _ in 0..3 {
            assert_eq!(params.decode(&params.encode(&x)), first);
        }
    }

    #[test]
    fn init_respects_glorot_bound_and_seed() {
        let params = rng_params(3, 2, 77);
        let bound = (6.0f64 / 5.0).sqrt();
        for id in [TensorId::EncoderWeights, TensorId::DecoderWeights] {
            for &w in params.tensor(id) {
                assert!(w.abs() <= bound);
            }
        }
        assert!(params.encoder.biases.iter().all(|&b| b == 0.0));
        assert!(params.decoder.biases.iter().all(|&b| b == 0.0));
        assert_eq!(params, rng_params(3, 2, 77));
        assert_ne!(params, rng_params(3, 2, 78));
    }

    #[test]
    fn cosine_basic_cases() {
        let u = [0.3, -0.7, 0.2];
        assert_close(cosine_similarity(&u, &u), 1.0, 1e-9);
        assert_close(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0, 1e-12);
        assert_close(cosine_similarity(&[1.0, 2.0], &[2.0, 4.0]), 1.0, 1e-9);
    }

    #[test]
    fn cosine_scale_invariance() {
        for seed in 0..20 {
            let u = random_vec(6, seed);
            let v = random_vec(6, seed + 50);
            let scaled: Vec<f64> = u.iter().map(|x| x * 3.7).collect();
            let a = cosine_similarity(&u, &v);
            let b = cosine_similarity(&scaled, &v);
            assert_close(a, b, 1e-9);
            assert!(a.abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn backward_cosine_identical_vectors_is_tangential() {
        let h = [0.4, 0.6, 0.2];
        let (gu, _) = backward_cosine(&h, &h, 1.0);
        assert_close(dot(&gu, &h), 0.0, 1e-9);
    }

    #[test]
    fn backward_cosine_orthonormal_case() {
        let u = [1.0, 0.0];
        let v = [0.0, 1.0];
        let (gu, gv) = backward_cosine(&u, &v, 1.0);
        for i in 0..2 {
            assert_close(gu[i], v[i], 1e-9);
            assert_close(gv[i], u[i], 1e-9);
        }
    }

    #[test]
    fn backward_cosine_matches_finite_differences() {
        let step = 1e-6;
        for seed in 0..20 {
            let u = random_vec(5, seed);
            let v = random_vec(5, seed + 21);
            let (gu, gv) = backward_cosine(&u, &v, 1.0);
            for i in 0..5 {
                let mut up = u.clone();
                up[i] += step;
                let mut um = u.clone();
                um[i] -= step;
                let fd = (cosine_similarity(&up, &v) - cosine_similarity(&um, &v)) / (2.0 * step);
                assert_close(gu[i], fd, 1e-6);

                let mut vp = v.clone();
                vp[i] += step;
                let mut vm = v.clone();
                vm[i] -= step;
                let fd = (cosine_similarity(&u, &vp) - cosine_similarity(&u, &vm)) / (2.0 * step);
                assert_close(gv[i], fd, 1e-6);
            }
        }
    }

    #[test]
    fn reconstruction_backward_zero_residuals_zero_grads() {
        let params = rng_params(4, 3, 5);
        let input = vec![(0, 0.5), (2, -1.0)];
        let hidden = params.encode_sparse(&input);
        let mut grads = GradientBuffer::zeros_like(&params);
        let dl_dh =
            backward_reconstruction(&params, &input, &hidden, &[(0, 0.0), (2, 0.0)], 1.0, &mut grads);
        assert!(dl_dh.iter().all(|&g| g == 0.0));
        for id in TensorId::ALL {
            assert!(grads.tensor(id).iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn reconstruction_backward_single_entry_bias_gradient() {
        let params = rng_params(4, 3, 6);
        let input = vec![(1, 0.25)];
        let hidden = params.encode_sparse(&input);
        let mut grads = GradientBuffer::zeros_like(&params);
        backward_reconstruction(&params, &input, &hidden, &[(2, 0.4)], 1.0, &mut grads);
        assert_close(grads.decoder_biases[2], 2.0 * 0.4, 1e-15);
    }

    #[test]
    fn reconstruction_backward_matches_finite_differences() {
        for seed in 0..20 {
            let params = rng_params(5, 4, seed);
            let input = vec![(0, 0.8), (2, -0.4), (4, 0.1)];
            let targets = vec![(0, 0.5), (3, -0.2), (4, 0.9)];
            let weight = 0.5;

            let loss = |p: &AutoencoderParams| -> f64 {
                let h = p.encode_sparse(&input);
                weight
                    * targets
                        .iter()
                        .map(|&(j, t)| {
                            let r = p.decode_at(&h, j) - t;
                            r * r
                        })
                        .sum::<f64>()
            };

            let hidden = params.encode_sparse(&input);
            let residuals: Vec<(usize, f64)> = targets
                .iter()
                .map(|&(j, t)| (j, params.decode_at(&hidden, j) - t))
                .collect();
            let mut analytic = GradientBuffer::zeros_like(&params);
            backward_reconstruction(&params, &input, &hidden, &residuals, weight, &mut analytic);

            let numeric = finite_difference_gradient(loss, &params, 1e-5).unwrap();
            for id in TensorId::ALL {
                let (a, n) = (analytic.tensor(id), numeric.tensor(id));
                let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                let scale: f64 = a.iter().chain(n).map(|x| x * x).sum::<f64>().sqrt();
                assert!(diff <= 1e-5 * scale.max(1e-8), "tensor {id:?}: {diff} vs scale {scale}");
            }
        }
    }

    #[test]
    fn finite_differences_on_known_losses() {
        let params = rng_params(3, 2, 11);
        // L = ‖θ‖² / 2 has gradient θ.
        let grads = finite_difference_gradient(
            |p| TensorId::ALL.iter().map(|&id| dot(p.tensor(id), p.tensor(id))).sum::<f64>() / 2.0,
            &params,
            1e-5,
        )
        .unwrap();
        for id in TensorId::ALL {
            for (g, w) in grads.tensor(id).iter().zip(params.tensor(id)) {
                assert_close(*g, *w, 1e-9);
            }
        }
        let zero = finite_difference_gradient(|_| 42.0, &params, 1e-5).unwrap();
        for id in TensorId::ALL {
            assert!(zero.tensor(id).iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn bucketed_encode_matches_per_vector_encode_bitwise() {
        for seed in 0..5 {
            let params = rng_params(23, 37, seed);
            // A few sparse vectors with ascending coordinates.
            let vectors: Vec<Vec<(usize, f64)>> = (0..7)
                .map(|v| {
                    (0..23)
                        .filter(|j| (j * 3 + v + seed as usize) % 4 != 0)
                        .map(|j| (j, ((j * 7 + v) % 11) as f64 / 11.0 - 0.5))
                        .collect()
                })
                .collect();
            let refs: Vec<&[(usize, f64)]> = vectors.iter().map(|v| v.as_slice()).collect();
            let buckets = CoordBuckets::build(&refs, 23);
            let batched = buckets.encode_batch(&params);
            for (v, h) in vectors.iter().zip(&batched) {
                assert_eq!(h, &params.encode_sparse(v));
            }

            // Scatter equals per-vector encoder backward.
            let mut deltas = vec![0.0f64; 7 * 37];
            for (v, chunk) in deltas.chunks_exact_mut(37).enumerate() {
                for (k, d) in chunk.iter_mut().enumerate() {
                    *d = ((k * 5 + v) % 9) as f64 / 9.0 - 0.4;
                }
            }
            let mut bucketed = GradientBuffer::zeros_like(&params);
            buckets.scatter_encoder_gradients(&deltas, &mut bucketed);
            let mut reference = GradientBuffer::zeros_like(&params);
            for (v, delta) in vectors.iter().zip(deltas.chunks_exact(37)) {
                for &(j, x) in v {
                    axpy(reference.encoder_weights.row_mut(j), x, delta);
                }
                for (acc, d) in reference.encoder_biases.iter_mut().zip(delta) {
                    *acc += d;
                }
            }
            for id in [TensorId::EncoderWeights, TensorId::EncoderBiases] {
                for (a, b) in bucketed.tensor(id).iter().zip(reference.tensor(id)) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn finite_differences_reports_non_finite_loss() {
        let params = rng_params(2, 2, 12);
        let result = finite_difference_gradient(|_| f64::NAN, &params, 1e-5);
        assert!(matches!(result, Err(NetError::NonFiniteLoss { .. })));
    }
}
