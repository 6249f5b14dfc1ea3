//! Deterministic data generators shared by the unit tests.

use crate::linalg::Matrix;

/// Splitmix-style congruential stream, independent of the rand crate so test
/// fixtures never move when dependencies are bumped.
pub fn lcg_stream(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed
        .wrapping_mul(2862933555777941757)
        .wrapping_add(3037000493);
    move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut next = lcg_stream(seed);
    let data: Vec<f64> = (0..rows * cols).map(|_| next()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// A batch of `count` random sequences of shape `rows x cols`, centered so the
/// per-coordinate mean over the batch is exactly removed.
pub fn random_centered_sequences(count: usize, rows: usize, cols: usize, seed: u64) -> Vec<Matrix> {
    let mut seqs: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            random_matrix(
                rows,
                cols,
                seed.wrapping_add(i as u64).wrapping_mul(2654435761),
            )
            .as_slice()
            .to_vec()
        })
        .collect();
    let dim = rows * cols;
    let mut mean = vec![0.0; dim];
    for s in &seqs {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    for s in seqs.iter_mut() {
        for (v, m) in s.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    seqs.into_iter()
        .map(|s| Matrix::from_vec(rows, cols, s).unwrap())
        .collect()
}

/// Orthonormal rows built by Gram-Schmidt over a random matrix.
pub fn random_orthonormal_rows(rows: usize, cols: usize, seed: u64) -> Matrix {
    let raw = random_matrix(rows, cols, seed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 0..rows {
        let mut v = raw.row(i).to_vec();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (x, c) in v.iter_mut().zip(b) {
                *x -= dot * c;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 1e-8, "degenerate random draw");
        for x in v.iter_mut() {
            *x /= norm;
        }
        basis.push(v);
    }
    Matrix::from_rows(&basis).unwrap()
}
