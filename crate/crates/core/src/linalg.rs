//! Dense real matrix primitives, a symmetric eigensolver and a
//! positive-semidefinite log-determinant.
//!
//! Everything here is 64-bit, deterministic, and sized for the small
//! matrices this crate works with (at most a few hundred rows), so the
//! eigensolver performs a full cyclic Jacobi decomposition rather than
//! anything iterative or partial.

use crate::{Error, Result};

/// Row-major dense matrix of finite 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zeros matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from a row-major entry vector.
    ///
    /// Fails if the length does not match `rows * cols` or any entry is
    /// non-finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "matrix entries must be finite".to_string(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices, validating rectangularity and finiteness.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::InvalidInput(
                    "matrix rows have inconsistent lengths".to_string(),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// The full row-major entry slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::InvalidInput(format!(
                "matmul shape mismatch: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::InvalidInput(format!(
                "matvec shape mismatch: {}x{} * len {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Copies columns `[start, start + width)` into a new matrix.
    pub fn column_block(&self, start: usize, width: usize) -> Matrix {
        assert!(start + width <= self.cols);
        let mut out = Matrix::zeros(self.rows, width);
        for i in 0..self.rows {
            out.data[i * width..(i + 1) * width]
                .copy_from_slice(&self.data[i * self.cols + start..i * self.cols + start + width]);
        }
        out
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference against `other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sum of diagonal entries.
    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Largest absolute deviation of `self * selfᵀ` from the identity.
    pub fn row_orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.rows {
                let dot: f64 = self
                    .row(i)
                    .iter()
                    .zip(self.row(j))
                    .map(|(a, b)| a * b)
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Row `i` of `eigenvectors` is the unit eigenvector paired with
/// `eigenvalues[i]`; eigenvalues are sorted non-increasing.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOL_FACTOR: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
const LOGDET_EIGENVALUE_FLOOR: f64 = 1e-30;
const PSD_TOL_FACTOR: f64 = 1e-10;

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                let v = a.get(p, q);
                sum += v * v;
            }
        }
    }
    sum.sqrt()
}

fn check_symmetric(s: &Matrix) -> Result<()> {
    if s.rows() != s.cols() {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{}, expected square",
            s.rows(),
            s.cols()
        )));
    }
    let scale = s.max_abs();
    let mut asym = 0.0f64;
    for i in 0..s.rows() {
        for j in (i + 1)..s.cols() {
            asym = asym.max((s.get(i, j) - s.get(j, i)).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "matrix is asymmetric: max deviation {asym:e} exceeds tolerance"
        )));
    }
    Ok(())
}

/// Flips each row so its largest-magnitude entry is positive (lowest index
/// wins ties), then orders rows of exactly equal eigenvalue lexicographically.
fn canonicalize(mut eigenvalues: Vec<f64>, mut rows: Vec<Vec<f64>>) -> EigenResult {
    for r in rows.iter_mut() {
        let mut pivot = 0usize;
        for (i, v) in r.iter().enumerate() {
            if v.abs() > r[pivot].abs() {
                pivot = i;
            }
        }
        if r.get(pivot).copied().unwrap_or(0.0) < 0.0 {
            for v in r.iter_mut() {
                *v = -*v;
            }
        }
    }
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .expect("finite eigenvalues")
            .then_with(|| {
                rows[a]
                    .iter()
                    .zip(&rows[b])
                    .find_map(|(x, y)| {
                        let c = x.partial_cmp(y).expect("finite eigenvector entries");
                        (c != std::cmp::Ordering::Equal).then_some(c)
                    })
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let sorted_vals: Vec<f64> = order.iter().map(|&i| eigenvalues[i]).collect();
    let sorted_rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    eigenvalues = sorted_vals;
    let eigenvectors = Matrix::from_rows(&sorted_rows).expect("rotations keep entries finite");
    EigenResult {
        eigenvalues,
        eigenvectors,
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Deterministic: identical input bytes yield identical output bytes. The
/// sweep loop stops once the off-diagonal Frobenius norm falls below
/// `1e-12 * ‖S‖F` and fails with [`Error::Convergence`] after 100 sweeps.
pub fn sym_eig(s: &Matrix) -> Result<EigenResult> {
    check_symmetric(s)?;
    let n = s.rows();
    let tol = JACOBI_TOL_FACTOR * s.frobenius_norm();

    let mut a = s.clone();
    // Work on an exactly symmetric copy so both triangles agree bit-for-bit.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a.get(i, j);
            a.set(j, i, v);
        }
    }
    let mut v = Matrix::identity(n);

    let mut converged = off_diagonal_norm(&a) <= tol;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta < 0.0 { -1.0 } else { 1.0 };
                    sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                let tau = sn / (1.0 + c);

                let h = t * apq;
                a.set(p, p, a.get(p, p) - h);
                a.set(q, q, a.get(q, q) + h);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    let new_kp = akp - sn * (akq + tau * akp);
                    let new_kq = akq + sn * (akp - tau * akq);
                    a.set(k, p, new_kp);
                    a.set(p, k, new_kp);
                    a.set(k, q, new_kq);
                    a.set(q, k, new_kq);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp - sn * (vkq + tau * vkp));
                    v.set(k, q, vkq + sn * (vkp - tau * vkq));
                }
            }
        }
        converged = off_diagonal_norm(&a) <= tol;
    }
    if !converged {
        return Err(Error::Convergence(format!(
            "Jacobi sweep cap of {JACOBI_MAX_SWEEPS} reached"
        )));
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    // Rotation columns are the eigenvectors; hand them over as rows.
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| v.get(i, j)).collect())
        .collect();
    Ok(canonicalize(eigenvalues, rows))
}

/// Log-determinant of a symmetric positive-semidefinite matrix, computed in
/// log-space as `Σ ln(max(λᵢ, 1e-30))` so large-magnitude determinants never
/// overflow.
///
/// Eigenvalues below `-1e-10 * trace(S)/d` mark the matrix as indefinite and
/// are rejected.
pub fn logdet_psd(s: &Matrix) -> Result<f64> {
    let eig = sym_eig(s)?;
    let d = s.rows();
    if d == 0 {
        return Ok(0.0);
    }
    let threshold = -PSD_TOL_FACTOR * s.trace() / d as f64;
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l < threshold) {
        return Err(Error::InvalidInput(format!(
            "matrix is indefinite: eigenvalue {bad:e} below PSD tolerance {threshold:e}"
        )));
    }
    Ok(eig
        .eigenvalues
        .iter()
        .map(|&l| l.max(LOGDET_EIGENVALUE_FLOOR).ln())
        .sum())
}
