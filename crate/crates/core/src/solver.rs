//! Symmetric sparse matrix storage and a direct sparse Cholesky solve (faer, sequential,
//! fill-reducing ordering).

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Symmetric sparse matrix assembled from triplets, lower triangle kept per row.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    n: usize,
    /// Row `i` holds `(col, value)` with `col <= i`, sorted by column, duplicates summed.
    rows: Vec<Vec<(usize, f64)>>,
}

impl SymmetricMatrix {
    /// Builds from `(row, col, value)` triplets; entries above the diagonal are mirrored
    /// into the lower triangle, so callers may pass either or both halves consistently.
    pub fn from_lower_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in triplets {
            let (r, c) = if j <= i { (i, j) } else { (j, i) };
            rows[r].push((c, v));
        }
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(c, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            *row = merged;
        }
        SymmetricMatrix { n, rows }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }
}

/// `L L^T` factorisation of a [`SymmetricMatrix`].
pub struct SparseCholesky {
    n: usize,
    llt: Llt<usize, f64>,
}

impl SparseCholesky {
    /// Fails if the matrix is not numerically positive definite.
    pub fn factor(a: &SymmetricMatrix) -> Result<Self> {
        let triplets: Vec<Triplet<usize, usize, f64>> = a
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| Triplet::new(i, j, v)))
            .collect();
        let lower = SparseColMat::<usize, f64>::try_new_from_triplets(a.n, a.n, &triplets)
            .map_err(|e| Error::Solver(format!("sparse assembly failed: {e:?}")))?;
        let llt = lower
            .sp_cholesky(Side::Lower)
            .map_err(|_| Error::Solver("matrix is not positive definite".into()))?;
        Ok(SparseCholesky { n: a.n, llt })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.llt.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SymmetricMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
        }
        SymmetricMatrix::from_lower_triplets(n, t)
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = laplacian_1d(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul(&x_true);
        let x = SparseCholesky::factor(&a).unwrap().solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicates_are_summed_and_upper_entries_mirrored() {
        let a = SymmetricMatrix::from_lower_triplets(2, [(0, 0, 1.0), (0, 0, 1.0), (0, 1, 0.5), (1, 1, 3.0)]);
        assert_eq!(a.mul(&[1.0, 1.0]), vec![2.5, 3.5]);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = SymmetricMatrix::from_lower_triplets(2, [(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(SparseCholesky::factor(&a).is_err());
    }
}
