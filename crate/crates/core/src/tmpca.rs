//! Training, application and closed-form expansion of the tree-structured
//! multi-stage PCA (TMPCA) transform.
//!
//! A TMPCA model reduces a length-`N` sequence of `D`-dimensional elements to
//! a single `D`-vector through `log_P N` PCA stages. Each stage concatenates
//! `P` adjacent elements into `P·D`-wide rows, fits a PCA kernel mapping them
//! back down to `D`, and applies it, halving (dividing by `P`) the sequence
//! length. Because every stage is a linear map with orthonormal rows, the
//! whole tree collapses to one `D x N·D` matrix with orthonormal rows; for
//! `P = 2` that matrix is available explicitly via
//! [`TmpcaModel::expand_closed_form`].

use crate::format::{dim_to_u32, EnvelopeReader, EnvelopeWriter};
use crate::linalg::Matrix;
use crate::pca::{pca_fit, CovAccumulator, StageKernel};
use crate::{Error, Result};

const MODEL_MAGIC: &[u8; 4] = b"TMPC";
/// Kernels loaded from disk must stay orthonormal within this defect.
const LOAD_ORTHONORMALITY_TOL: f64 = 1e-6;

/// Knobs for [`TmpcaModel::fit_with_options`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Sequences streamed through the covariance accumulator per chunk.
    pub chunk_size: usize,
    /// Worker threads for covariance accumulation; 1 keeps fitting
    /// single-threaded and byte-reproducible regardless of core count.
    pub workers: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            chunk_size: 4096,
            workers: 1,
        }
    }
}

/// A trained multi-stage PCA transform: per-stage kernels plus the dataset
/// mean removed before fitting.
///
/// Immutable after fitting; transforms are pure and safe to run concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct TmpcaModel {
    element_dim: usize,
    seq_len: usize,
    fan_in: usize,
    stage_count: usize,
    dataset_mean: Vec<f64>,
    kernels: Vec<StageKernel>,
}

impl TmpcaModel {
    /// Fits the tree on already mean-removed sequences with the default
    /// streaming options. The stored dataset mean is zero; see
    /// [`TmpcaModel::with_dataset_mean`].
    pub fn fit(data: &[Matrix], fan_in: usize) -> Result<Self> {
        Self::fit_with_options(data, fan_in, &FitOptions::default())
    }

    pub fn fit_with_options(data: &[Matrix], fan_in: usize, opts: &FitOptions) -> Result<Self> {
        Self::fit_transform(data, fan_in, opts).map(|(model, _)| model)
    }

    /// Fits the tree and also returns the final-stage representation of every
    /// training sequence as an `M x D` matrix.
    pub fn fit_transform(
        data: &[Matrix],
        fan_in: usize,
        opts: &FitOptions,
    ) -> Result<(Self, Matrix)> {
        if data.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "fitting needs at least 2 sequences, got {}",
                data.len()
            )));
        }
        let seq_len = data[0].rows();
        let element_dim = data[0].cols();
        if element_dim == 0 {
            return Err(Error::InvalidInput(
                "element dimension must be positive".to_string(),
            ));
        }
        for (i, seq) in data.iter().enumerate() {
            if seq.rows() != seq_len || seq.cols() != element_dim {
                return Err(Error::InvalidInput(format!(
                    "sequence {i} is {}x{}, expected {}x{}",
                    seq.rows(),
                    seq.cols(),
                    seq_len,
                    element_dim
                )));
            }
        }
        let stage_count = stage_count_for(seq_len, fan_in)?;
        let chunk_size = opts.chunk_size.max(1);

        let mut current: Vec<Vec<f64>> = data.iter().map(|s| s.as_slice().to_vec()).collect();
        let mut kernels = Vec::with_capacity(stage_count);
        let mut cur_len = seq_len;
        for _ in 0..stage_count {
            let group_count = cur_len / fan_in;
            let in_dim = fan_in * element_dim;

            // Reinterpreting a row-major (len x D) sequence as
            // (len/P x P·D) concatenates each group of P adjacent elements,
            // which is exactly the stage training matrix.
            let mut acc = CovAccumulator::new(in_dim);
            for chunk in current.chunks(chunk_size) {
                let mut flat = Vec::with_capacity(chunk.len() * group_count * in_dim);
                for seq in chunk {
                    flat.extend_from_slice(seq);
                }
                let rows = Matrix::from_vec(chunk.len() * group_count, in_dim, flat)?;
                if opts.workers > 1 {
                    acc.accumulate_parallel(&rows, opts.workers)?;
                } else {
                    acc.accumulate(&rows)?;
                }
            }
            let kernel = pca_fit(&acc.finalize()?, element_dim)?;
            for seq in current.iter_mut() {
                *seq = apply_stage(&kernel, seq, group_count, element_dim);
            }
            kernels.push(kernel);
            cur_len = group_count;
        }

        let mut features = Vec::with_capacity(data.len() * element_dim);
        for seq in &current {
            features.extend_from_slice(seq);
        }
        let features = Matrix::from_vec(data.len(), element_dim, features)?;
        let model = Self {
            element_dim,
            seq_len,
            fan_in,
            stage_count,
            dataset_mean: vec![0.0; seq_len * element_dim],
            kernels,
        };
        Ok((model, features))
    }

    /// Stores the mean that was subtracted from the training data, so
    /// [`TmpcaModel::transform_raw`] can center unseen sequences the same way.
    pub fn with_dataset_mean(mut self, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != self.seq_len * self.element_dim {
            return Err(Error::InvalidInput(format!(
                "dataset mean has length {}, expected {}",
                mean.len(),
                self.seq_len * self.element_dim
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "dataset mean must be finite".to_string(),
            ));
        }
        self.dataset_mean = mean;
        Ok(self)
    }

    pub fn element_dim(&self) -> usize {
        self.element_dim
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn stage_count(&self) -> usize {
        self.stage_count
    }

    pub fn dataset_mean(&self) -> &[f64] {
        &self.dataset_mean
    }

    pub fn kernels(&self) -> &[StageKernel] {
        &self.kernels
    }

    /// Applies the staged transform to an already mean-removed sequence,
    /// producing the final `D`-vector.
    pub fn transform(&self, seq: &Matrix) -> Result<Vec<f64>> {
        self.check_shape(seq)?;
        Ok(self.transform_flat(seq.as_slice().to_vec()))
    }

    /// Like [`TmpcaModel::transform`] but subtracts the stored dataset mean
    /// first, for raw (uncentered) sequences.
    pub fn transform_raw(&self, seq: &Matrix) -> Result<Vec<f64>> {
        self.check_shape(seq)?;
        let flat: Vec<f64> = seq
            .as_slice()
            .iter()
            .zip(&self.dataset_mean)
            .map(|(v, m)| v - m)
            .collect();
        Ok(self.transform_flat(flat))
    }

    /// Per-stage representations of a mean-removed sequence: entry `s` is the
    /// `(N/P^{s+1}) x D` output of stage `s+1`.
    pub fn stage_outputs(&self, seq: &Matrix) -> Result<Vec<Matrix>> {
        self.check_shape(seq)?;
        let mut flat = seq.as_slice().to_vec();
        let mut cur_len = self.seq_len;
        let mut outputs = Vec::with_capacity(self.stage_count);
        for kernel in &self.kernels {
            let group_count = cur_len / self.fan_in;
            flat = apply_stage(kernel, &flat, group_count, self.element_dim);
            outputs.push(Matrix::from_vec(
                group_count,
                self.element_dim,
                flat.clone(),
            )?);
            cur_len = group_count;
        }
        Ok(outputs)
    }

    /// Collapses a binary (`P = 2`) tree into its single `D x N·D` transform
    /// matrix. Block `j` is the stage-ordered product of kernel blocks
    /// selected by [`digit_index`], with the last stage's factor leftmost.
    pub fn expand_closed_form(&self) -> Result<ClosedFormMatrix> {
        if self.fan_in != 2 {
            return Err(Error::UnsupportedConfiguration(format!(
                "closed-form expansion is defined for fan-in 2, model has {}",
                self.fan_in
            )));
        }
        let d = self.element_dim;
        let n = self.seq_len;
        let mut weights = Matrix::zeros(d, n * d);
        for j in 1..=n {
            let mut block = Matrix::identity(d);
            for s in (1..=self.stage_count).rev() {
                let f = digit_index(j, s, self.stage_count)?;
                block = block.matmul(&self.kernels[s - 1].block(f))?;
            }
            for r in 0..d {
                for c in 0..d {
                    weights.set(r, (j - 1) * d + c, block.get(r, c));
                }
            }
        }
        Ok(ClosedFormMatrix {
            element_dim: d,
            weights,
        })
    }

    /// Binary model file image; layout documented in the crate README.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = EnvelopeWriter::new(MODEL_MAGIC);
        w.put_u32(dim_to_u32(self.element_dim, "element dimension")?);
        w.put_u32(dim_to_u32(self.seq_len, "sequence length")?);
        w.put_u32(dim_to_u32(self.fan_in, "fan-in")?);
        w.put_u32(dim_to_u32(self.stage_count, "stage count")?);
        w.put_f64_slice(&self.dataset_mean);
        for kernel in &self.kernels {
            w.put_f64_slice(kernel.weights().as_slice());
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = EnvelopeReader::new(bytes, MODEL_MAGIC)?;
        let element_dim = r.get_usize()?;
        let seq_len = r.get_usize()?;
        let fan_in = r.get_usize()?;
        let stage_count = r.get_usize()?;
        if element_dim == 0 {
            return Err(Error::Validation(
                "element dimension must be positive".to_string(),
            ));
        }
        let expected_stages = stage_count_for(seq_len, fan_in)
            .map_err(|e| Error::Validation(format!("inconsistent dimensions: {e}")))?;
        if expected_stages != stage_count {
            return Err(Error::Validation(format!(
                "stage count {stage_count} does not match sequence length {seq_len} and fan-in {fan_in}"
            )));
        }
        let dataset_mean = r.get_f64_vec(seq_len * element_dim)?;
        if dataset_mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("dataset mean must be finite".to_string()));
        }
        let mut kernels = Vec::with_capacity(stage_count);
        for s in 0..stage_count {
            let data = r.get_f64_vec(element_dim * fan_in * element_dim)?;
            let weights = Matrix::from_vec(element_dim, fan_in * element_dim, data)
                .map_err(|e| Error::Validation(format!("stage {} kernel: {e}", s + 1)))?;
            let defect = weights.row_orthonormality_defect();
            if defect > LOAD_ORTHONORMALITY_TOL {
                return Err(Error::Validation(format!(
                    "stage {} kernel rows are not orthonormal (defect {defect:e})",
                    s + 1
                )));
            }
            kernels.push(StageKernel::new(weights));
        }
        r.expect_end()?;
        Ok(Self {
            element_dim,
            seq_len,
            fan_in,
            stage_count,
            dataset_mean,
            kernels,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    #[cfg(test)]
    fn from_parts(dataset_mean: Vec<f64>, kernels: Vec<StageKernel>, fan_in: usize) -> Self {
        let stage_count = kernels.len();
        let element_dim = kernels.first().map_or(1, StageKernel::out_dim);
        Self {
            element_dim,
            seq_len: fan_in.pow(stage_count as u32),
            fan_in,
            stage_count,
            dataset_mean,
            kernels,
        }
    }

    fn check_shape(&self, seq: &Matrix) -> Result<()> {
        if seq.rows() != self.seq_len || seq.cols() != self.element_dim {
            return Err(Error::InvalidInput(format!(
                "sequence is {}x{}, model expects {}x{}",
                seq.rows(),
                seq.cols(),
                self.seq_len,
                self.element_dim
            )));
        }
        Ok(())
    }

    fn transform_flat(&self, mut flat: Vec<f64>) -> Vec<f64> {
        let mut cur_len = self.seq_len;
        for kernel in &self.kernels {
            let group_count = cur_len / self.fan_in;
            flat = apply_stage(kernel, &flat, group_count, self.element_dim);
            cur_len = group_count;
        }
        flat
    }
}

/// The single matrix equivalent of a binary TMPCA tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormMatrix {
    element_dim: usize,
    weights: Matrix,
}

impl ClosedFormMatrix {
    /// The full `D x N·D` matrix.
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// 1-based `D x D` block applied to element `j` of the flattened input.
    pub fn block(&self, j: usize) -> Matrix {
        assert!(
            j >= 1 && j * self.element_dim <= self.weights.cols(),
            "block index out of range"
        );
        self.weights
            .column_block((j - 1) * self.element_dim, self.element_dim)
    }

    /// Applies the matrix to a flattened sequence.
    pub fn apply(&self, seq: &Matrix) -> Result<Vec<f64>> {
        if seq.rows() * seq.cols() != self.weights.cols() {
            return Err(Error::InvalidInput(format!(
                "sequence flattens to {}, matrix expects {}",
                seq.rows() * seq.cols(),
                self.weights.cols()
            )));
        }
        self.weights.matvec(seq.as_slice())
    }
}

/// Which kernel block (1 or 2) element position `j` routes through at stage
/// `s` of an `l`-stage binary tree: bit `s` of `j - 1`, counting bit 1 as the
/// least significant, plus one.
pub fn digit_index(j: usize, s: usize, l: usize) -> Result<usize> {
    if l >= usize::BITS as usize {
        return Err(Error::InvalidInput(format!("stage count {l} too large")));
    }
    if j < 1 || j > (1usize << l) {
        return Err(Error::InvalidInput(format!(
            "position {j} out of range 1..={}",
            1usize << l
        )));
    }
    if s < 1 || s > l {
        return Err(Error::InvalidInput(format!(
            "stage {s} out of range 1..={l}"
        )));
    }
    Ok(((j - 1) >> (s - 1) & 1) + 1)
}

/// Stage count `log_P N`, validating that `N` is an exact power of `P`.
pub fn stage_count_for(seq_len: usize, fan_in: usize) -> Result<usize> {
    if fan_in < 2 {
        return Err(Error::InvalidInput(format!(
            "fan-in must be at least 2, got {fan_in}"
        )));
    }
    if seq_len == 0 {
        return Err(Error::InvalidInput(
            "sequence length must be positive".to_string(),
        ));
    }
    let mut n = seq_len;
    let mut stages = 0;
    while n > 1 {
        if !n.is_multiple_of(fan_in) {
            return Err(Error::InvalidInput(format!(
                "sequence length {seq_len} is not a power of fan-in {fan_in}"
            )));
        }
        n /= fan_in;
        stages += 1;
    }
    Ok(stages)
}

/// One stage of the tree: concatenates groups of `P` adjacent elements (a
/// contiguous slice of the flat sequence) and maps each through the kernel.
fn apply_stage(kernel: &StageKernel, flat: &[f64], group_count: usize, out_dim: usize) -> Vec<f64> {
    let in_dim = kernel.in_dim();
    let mut out = vec![0.0; group_count * out_dim];
    for g in 0..group_count {
        let x = &flat[g * in_dim..(g + 1) * in_dim];
        for r in 0..out_dim {
            out[g * out_dim + r] = kernel
                .weights()
                .row(r)
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    out
}
