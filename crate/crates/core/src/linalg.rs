//! Sparse direct solves used by every harmonic / Poisson problem in the crate.
//!
//! Systems are assembled row-wise in the caller's state order and factorized
//! once with a sparse LU (partial pivoting); all right-hand sides of a batch
//! share that factorization. One step of iterative refinement is applied to
//! every solve.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Square sparse matrix kept in row form for residual evaluation.
#[derive(Debug, Clone)]
pub(crate) struct SparseMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            rows: vec![Vec::new(); n],
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Adds `value` to entry `(row, col)`; duplicates accumulate.
    pub(crate) fn add(&mut self, row: usize, col: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        let r = &mut self.rows[row];
        match r.iter_mut().find(|(c, _)| *c == col) {
            Some((_, v)) => *v += value,
            None => r.push((col, value)),
        }
    }

    fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    pub(crate) fn factorize(self) -> Result<Factorization> {
        Factorization::new(self)
    }
}

pub(crate) struct Factorization {
    matrix: SparseMatrix,
    lu: Option<Lu<usize, f64>>,
}

impl Factorization {
    fn new(matrix: SparseMatrix) -> Result<Self> {
        let n = matrix.dim();
        if n == 0 {
            return Ok(Self { matrix, lu: None });
        }
        let triplets: Vec<Triplet<usize, usize, f64>> = matrix
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| Triplet::new(i, j, v)))
            .collect();
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::SolverFailure(format!("matrix assembly: {e:?}")))?;
        let lu = csc
            .sp_lu()
            .map_err(|e| Error::SolverFailure(format!("sparse LU: {e:?}")))?;
        Ok(Self { matrix, lu: Some(lu) })
    }

    pub(crate) fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.solve_many(&[rhs.to_vec()])?;
        Ok(out.pop().unwrap_or_default())
    }

    /// Solves `A x_k = b_k` for every column `b_k`.
    pub(crate) fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let Some(lu) = &self.lu else {
            return Ok(rhs.iter().map(|_| Vec::new()).collect());
        };
        let k = rhs.len();
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut x = Mat::<f64>::from_fn(n, k, |i, j| rhs[j][i]);
        lu.solve_in_place(&mut x);

        // one round of iterative refinement
        let mut resid = Mat::<f64>::zeros(n, k);
        for j in 0..k {
            let xj: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
            let ax = self.matrix.mul_vec(&xj);
            for i in 0..n {
                resid[(i, j)] = rhs[j][i] - ax[i];
            }
        }
        lu.solve_in_place(&mut resid);

        let mut out = Vec::with_capacity(k);
        for j in 0..k {
            let col: Vec<f64> = (0..n).map(|i| x[(i, j)] + resid[(i, j)]).collect();
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::SolverFailure("non-finite solution".into()));
            }
            out.push(col);
        }
        Ok(out)
    }
}
