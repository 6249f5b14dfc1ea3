//! Covariance accumulation over data chunks and PCA kernel fitting.
//!
//! The accumulator keeps the running second moment `Σ xxᵀ` of mean-removed
//! rows. It is mergeable, so large datasets can be split into chunks that
//! are accumulated independently (optionally on worker threads) and combined
//! afterwards.

use crate::linalg::{self, Matrix};
use crate::{Error, Result};

/// Running `Σ xxᵀ` plus a sample count over mean-removed rows.
#[derive(Debug, Clone)]
pub struct CovAccumulator {
    dim: usize,
    sum_outer: Matrix,
    sample_count: usize,
}

impl CovAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            sum_outer: Matrix::zeros(dim, dim),
            sample_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn sum_outer(&self) -> &Matrix {
        &self.sum_outer
    }

    /// Adds `chunkᵀ·chunk` row by row.
    ///
    /// Accumulation is row-sequential into the upper triangle, so splitting a
    /// dataset into consecutive chunks produces bit-identical sums to a
    /// single pass over the stacked rows.
    pub fn accumulate(&mut self, chunk: &Matrix) -> Result<()> {
        if chunk.cols() != self.dim {
            return Err(Error::InvalidInput(format!(
                "chunk has {} columns, accumulator dimension is {}",
                chunk.cols(),
                self.dim
            )));
        }
        for r in 0..chunk.rows() {
            let x = chunk.row(r);
            for i in 0..self.dim {
                let xi = x[i];
                for (j, &xj) in x.iter().enumerate().skip(i) {
                    self.sum_outer.set(i, j, self.sum_outer.get(i, j) + xi * xj);
                }
            }
        }
        self.mirror_lower();
        self.sample_count += chunk.rows();
        Ok(())
    }

    /// Splits `chunk` into `workers` contiguous row ranges, accumulates each
    /// on its own thread, and merges the partial sums in range order. The
    /// merge order is fixed, so results are reproducible for a given worker
    /// count.
    pub fn accumulate_parallel(&mut self, chunk: &Matrix, workers: usize) -> Result<()> {
        if workers <= 1 || chunk.rows() < 2 * workers {
            return self.accumulate(chunk);
        }
        let dim = self.dim;
        if chunk.cols() != dim {
            return Err(Error::InvalidInput(format!(
                "chunk has {} columns, accumulator dimension is {}",
                chunk.cols(),
                dim
            )));
        }
        let rows = chunk.rows();
        let per = rows.div_ceil(workers);
        let partials: Vec<CovAccumulator> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let lo = (w * per).min(rows);
                    let hi = ((w + 1) * per).min(rows);
                    let chunk = &chunk;
                    scope.spawn(move || {
                        let mut acc = CovAccumulator::new(dim);
                        for r in lo..hi {
                            let x = chunk.row(r);
                            for i in 0..dim {
                                let xi = x[i];
                                for (j, &xj) in x.iter().enumerate().skip(i) {
                                    acc.sum_outer.set(i, j, acc.sum_outer.get(i, j) + xi * xj);
                                }
                            }
                            acc.sample_count += 1;
                        }
                        acc.mirror_lower();
                        acc
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        for p in &partials {
            self.merge(p)?;
        }
        Ok(())
    }

    /// Entrywise sum of the outer-product sums plus the counts.
    pub fn merge(&mut self, other: &CovAccumulator) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::InvalidInput(format!(
                "cannot merge accumulators of dimension {} and {}",
                other.dim, self.dim
            )));
        }
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.sum_outer
                    .set(i, j, self.sum_outer.get(i, j) + other.sum_outer.get(i, j));
            }
        }
        self.sample_count += other.sample_count;
        Ok(())
    }

    /// Covariance estimate `sum_outer / (count - 1)`.
    pub fn finalize(&self) -> Result<Matrix> {
        if self.sample_count < 2 {
            return Err(Error::InsufficientData(format!(
                "covariance needs at least 2 samples, got {}",
                self.sample_count
            )));
        }
        let divisor = (self.sample_count - 1) as f64;
        let mut out = Matrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(i, j, self.sum_outer.get(i, j) / divisor);
            }
        }
        Ok(out)
    }

    fn mirror_lower(&mut self) {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let v = self.sum_outer.get(i, j);
                self.sum_outer.set(j, i, v);
            }
        }
    }
}

/// PCA transform with orthonormal rows, mapping `in_dim` down to `out_dim`.
///
/// Block `j` (1-based, `j ∈ 1..=in_dim/out_dim` when the kernel merges
/// equal-sized element groups) is the column range `[(j-1)·out_dim, j·out_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageKernel {
    out_dim: usize,
    in_dim: usize,
    weights: Matrix,
}

impl StageKernel {
    pub fn new(weights: Matrix) -> Self {
        Self {
            out_dim: weights.rows(),
            in_dim: weights.cols(),
            weights,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// 1-based `out_dim x out_dim` column block.
    pub fn block(&self, j: usize) -> Matrix {
        assert!(
            j >= 1 && j * self.out_dim <= self.in_dim,
            "block index out of range"
        );
        self.weights
            .column_block((j - 1) * self.out_dim, self.out_dim)
    }

    /// Applies the kernel to one input vector.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.weights.matvec(x)
    }
}

/// Fits a PCA kernel: the `out_dim` leading eigenvectors of `cov`, rows
/// ordered by non-increasing eigenvalue with the deterministic sign and tie
/// conventions of [`linalg::sym_eig`].
///
/// Rank-deficient covariances still yield exactly `out_dim` rows; the
/// eigenvectors of zero eigenvalues are kept in their deterministic order.
pub fn pca_fit(cov: &Matrix, out_dim: usize) -> Result<StageKernel> {
    if out_dim < 1 || out_dim > cov.rows() {
        return Err(Error::InvalidInput(format!(
            "out_dim {} out of range for a {}x{} covariance",
            out_dim,
            cov.rows(),
            cov.cols()
        )));
    }
    let eig = linalg::sym_eig(cov)?;
    let rows: Vec<Vec<f64>> = (0..out_dim)
        .map(|i| eig.eigenvectors.row(i).to_vec())
        .collect();
    Ok(StageKernel::new(Matrix::from_rows(&rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::testutil::{random_matrix, random_orthonormal_rows};

    #[test]
    fn empty_chunk_is_a_no_op() {
        let mut acc = CovAccumulator::new(3);
        acc.accumulate(&Matrix::zeros(0, 3)).unwrap();
        assert_eq!(acc.sample_count(), 0);
        assert_eq!(acc.sum_outer().max_abs(), 0.0);
    }

    #[test]
    fn single_row_outer_product_by_hand() {
        let mut acc = CovAccumulator::new(2);
        acc.accumulate(&Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap())
            .unwrap();
        let expect = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert_eq!(acc.sum_outer(), &expect);
        assert_eq!(acc.sample_count(), 1);
    }

    #[test]
    fn chunked_accumulation_matches_stacked_bitwise() {
        let a = random_matrix(5, 4, 1);
        let b = random_matrix(3, 4, 2);
        let mut stacked_rows: Vec<Vec<f64>> = (0..5).map(|i| a.row(i).to_vec()).collect();
        stacked_rows.extend((0..3).map(|i| b.row(i).to_vec()));
        let stacked = Matrix::from_rows(&stacked_rows).unwrap();

        let mut split = CovAccumulator::new(4);
        split.accumulate(&a).unwrap();
        split.accumulate(&b).unwrap();
        let mut joint = CovAccumulator::new(4);
        joint.accumulate(&stacked).unwrap();

        assert_eq!(split.sum_outer(), joint.sum_outer());
        assert_eq!(split.sample_count(), joint.sample_count());
    }

    #[test]
    fn finalize_two_hand_rows() {
        // Rows (1,0) and (-1,0): Σxxᵀ = [[2,0],[0,0]], divisor 1.
        let mut acc = CovAccumulator::new(2);
        acc.accumulate(&Matrix::from_vec(2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap())
            .unwrap();
        let cov = acc.finalize().unwrap();
        assert_eq!(
            cov,
            Matrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 0.0]).unwrap()
        );
    }

    #[test]
    fn finalize_zero_rows_gives_zero_matrix() {
        let mut acc = CovAccumulator::new(2);
        acc.accumulate(&Matrix::zeros(4, 2)).unwrap();
        assert_eq!(acc.finalize().unwrap().max_abs(), 0.0);
    }

    #[test]
    fn finalize_requires_two_samples() {
        let mut acc = CovAccumulator::new(2);
        assert!(matches!(acc.finalize(), Err(Error::InsufficientData(_))));
        acc.accumulate(&Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap())
            .unwrap();
        assert!(matches!(acc.finalize(), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn merge_equals_joint_accumulation() {
        let a = random_matrix(6, 3, 3);
        let b = random_matrix(4, 3, 4);
        let mut left = CovAccumulator::new(3);
        left.accumulate(&a).unwrap();
        let mut right = CovAccumulator::new(3);
        right.accumulate(&b).unwrap();
        left.merge(&right).unwrap();

        let mut joint = CovAccumulator::new(3);
        joint.accumulate(&a).unwrap();
        joint.accumulate(&b).unwrap();
        assert!(
            left.finalize()
                .unwrap()
                .max_abs_diff(&joint.finalize().unwrap())
                <= 1e-9
        );
    }

    #[test]
    fn merge_is_commutative() {
        let a = random_matrix(6, 3, 5);
        let b = random_matrix(4, 3, 6);
        let mut acc_a = CovAccumulator::new(3);
        acc_a.accumulate(&a).unwrap();
        let mut acc_b = CovAccumulator::new(3);
        acc_b.accumulate(&b).unwrap();

        let mut ab = acc_a.clone();
        ab.merge(&acc_b).unwrap();
        let mut ba = acc_b.clone();
        ba.merge(&acc_a).unwrap();
        assert_eq!(ab.sum_outer(), ba.sum_outer());
    }

    #[test]
    fn parallel_accumulation_matches_sequential() {
        let data = random_matrix(257, 5, 8);
        let mut seq = CovAccumulator::new(5);
        seq.accumulate(&data).unwrap();
        for workers in [2, 3, 4] {
            let mut par = CovAccumulator::new(5);
            par.accumulate_parallel(&data, workers).unwrap();
            assert_eq!(par.sample_count(), seq.sample_count());
            assert!(par.sum_outer().max_abs_diff(seq.sum_outer()) <= 1e-9);
        }
    }

    #[test]
    fn parallel_accumulation_is_reproducible() {
        let data = random_matrix(101, 4, 9);
        let mut a = CovAccumulator::new(4);
        a.accumulate_parallel(&data, 3).unwrap();
        let mut b = CovAccumulator::new(4);
        b.accumulate_parallel(&data, 3).unwrap();
        assert_eq!(a.sum_outer(), b.sum_outer());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut acc = CovAccumulator::new(3);
        assert!(matches!(
            acc.accumulate(&Matrix::zeros(2, 4)),
            Err(Error::InvalidInput(_))
        ));
        let other = CovAccumulator::new(4);
        assert!(matches!(acc.merge(&other), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pca_fit_diagonal_selects_leading_axes() {
        let mut cov = Matrix::zeros(4, 4);
        for (i, v) in [4.0, 3.0, 2.0, 1.0].iter().enumerate() {
            cov.set(i, i, *v);
        }
        let kernel = pca_fit(&cov, 2).unwrap();
        let expect = Matrix::from_vec(2, 4, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(kernel.weights(), &expect);
    }

    #[test]
    fn pca_fit_analytic_two_by_two() {
        let cov = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let kernel = pca_fit(&cov, 1).unwrap();
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert!((kernel.weights().get(0, 0) - inv_sqrt2).abs() < 1e-12);
        assert!((kernel.weights().get(0, 1) - inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn pca_fit_full_rank_is_a_rotation() {
        let data = random_matrix(20, 4, 10);
        let mut acc = CovAccumulator::new(4);
        acc.accumulate(&data).unwrap();
        let kernel = pca_fit(&acc.finalize().unwrap(), 4).unwrap();
        assert!(kernel.weights().row_orthonormality_defect() < 1e-10);
    }

    #[test]
    fn pca_fit_rank_deficient_still_returns_out_dim_rows() {
        // Rank-1 covariance in 3 dimensions.
        let mut acc = CovAccumulator::new(3);
        let rows =
            Matrix::from_vec(3, 3, vec![1.0, 1.0, 0.0, 2.0, 2.0, 0.0, -1.0, -1.0, 0.0]).unwrap();
        acc.accumulate(&rows).unwrap();
        let kernel = pca_fit(&acc.finalize().unwrap(), 3).unwrap();
        assert_eq!(kernel.weights().rows(), 3);
        assert!(kernel.weights().row_orthonormality_defect() < 1e-8);
    }

    #[test]
    fn pca_fit_rejects_out_of_range_dims() {
        let cov = Matrix::identity(3);
        assert!(matches!(pca_fit(&cov, 0), Err(Error::InvalidInput(_))));
        assert!(matches!(pca_fit(&cov, 4), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn block_views_partition_the_kernel() {
        let weights = random_orthonormal_rows(2, 4, 11);
        let kernel = StageKernel::new(weights.clone());
        assert_eq!(kernel.block(1), weights.column_block(0, 2));
        assert_eq!(kernel.block(2), weights.column_block(2, 2));
    }

    proptest! {
        #[test]
        fn retained_energy_beats_random_projections(seed in 0u64..100) {
            let data = random_matrix(40, 5, seed.wrapping_add(77));
            let mut acc = CovAccumulator::new(5);
            acc.accumulate(&data).unwrap();
            let cov = acc.finalize().unwrap();
            let kernel = pca_fit(&cov, 2).unwrap();
            let retained = kernel
                .weights()
                .matmul(&cov)
                .unwrap()
                .matmul(&kernel.weights().transpose())
                .unwrap()
                .trace();
            for probe_seed in 0..4u64 {
                let q = random_orthonormal_rows(2, 5, seed.wrapping_mul(31).wrapping_add(probe_seed));
                let other = q.matmul(&cov).unwrap().matmul(&q.transpose()).unwrap().trace();
                prop_assert!(other <= retained + 1e-9);
            }
        }
    }
}
