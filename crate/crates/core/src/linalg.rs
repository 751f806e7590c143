//! Sparse and dense linear algebra used by the solver.
//!
//! Step-2 systems are nonsymmetric, so the sparse path is ILU(0)-preconditioned
//! BiCGSTAB with a dense LU fallback for small systems. Dense angular systems
//! go through `nalgebra`'s partial-pivoting LU.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Default relative residual target for sparse solves.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Square matrix in compressed sparse row form with sorted, unique column
/// indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries. Explicit zeros are kept, so the pattern is
    /// determined by the triplet positions alone.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) outside a {n}x{n} matrix"
                )));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a matrix on an existing pattern.
    pub fn from_parts(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if row_ptr.len() != n + 1 || col_idx.len() != values.len() || row_ptr[n] != values.len() {
            return Err(Error::InvalidArgument("inconsistent CSR arrays".into()));
        }
        for i in 0..n {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&j| j >= n) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has unsorted, duplicate or out-of-range columns"
                )));
            }
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Entry (i, j), zero when outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(p) => self.values[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    /// Replaces row `i` by the unit row e_iᵀ. The diagonal must be in the
    /// pattern.
    pub fn set_identity_row(&mut self, i: usize) {
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            self.values[p] = if self.col_idx[p] == i { 1.0 } else { 0.0 };
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            y[i] = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.col_idx[p])] += self.values[p];
            }
        }
        d
    }

    fn diag_positions(&self) -> Result<Vec<usize>> {
        (0..self.n)
            .map(|i| {
                let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
                cols.binary_search(&i)
                    .map(|p| self.row_ptr[i] + p)
                    .map_err(|_| Error::Numerical(format!("row {i} has no diagonal entry")))
            })
            .collect()
    }
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut lu = a.clone();
        let diag = lu.diag_positions()?;
        let n = lu.n;
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                pos[lu.col_idx[p]] = p;
            }
            for p in start..end {
                let k = lu.col_idx[p];
                if k >= i {
                    break;
                }
                let pivot = lu.values[diag[k]];
                if pivot == 0.0 {
                    return Err(Error::Numerical(format!("zero pivot in ILU(0) at row {k}")));
                }
                let factor = lu.values[p] / pivot;
                lu.values[p] = factor;
                for q in diag[k] + 1..lu.row_ptr[k + 1] {
                    let target = pos[lu.col_idx[q]];
                    if target != usize::MAX {
                        lu.values[target] -= factor * lu.values[q];
                    }
                }
            }
            for p in start..end {
                pos[lu.col_idx[p]] = usize::MAX;
            }
            if lu.values[diag[i]] == 0.0 {
                return Err(Error::Numerical(format!("zero pivot in ILU(0) at row {i}")));
            }
        }
        Ok(Self { lu, diag })
    }

    /// z = (LU)⁻¹ r.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut acc = r[i];
            for p in lu.row_ptr[i]..self.diag[i] {
                acc -= lu.values[p] * z[lu.col_idx[p]];
            }
            z[i] = acc;
        }
        for i in (0..lu.n).rev() {
            let mut acc = z[i];
            for p in self.diag[i] + 1..lu.row_ptr[i + 1] {
                acc -= lu.values[p] * z[lu.col_idx[p]];
            }
            z[i] = acc / lu.values[self.diag[i]];
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// ‖b − Ax‖ / ‖b‖ recomputed from the returned x.
    pub relative_residual: f64,
}

/// A sparse matrix with its preconditioner, reusable across right-hand sides.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    matrix: CsrMatrix,
    ilu: Ilu0,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        let ilu = Ilu0::new(&matrix)?;
        Ok(Self { matrix, ilu })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Solves A x = b in place, using the incoming `x` as the initial guess.
    pub fn solve_into(&self, b: &[f64], x: &mut [f64], tol: f64) -> Result<SolveStats> {
        let n = self.matrix.n;
        if b.len() != n || x.len() != n {
            return Err(Error::InvalidArgument(format!(
                "right-hand side of length {} for a {n}x{n} system",
                b.len()
            )));
        }
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            });
        }
        let mut iterations = 0;
        for _restart in 0..4 {
            let (done, its) = bicgstab(&self.matrix, &self.ilu, b, x, tol * bnorm, 4 * n + 100);
            iterations += its;
            if done {
                break;
            }
        }
        let mut res = residual(&self.matrix, b, x);
        if res > tol * bnorm && n <= 3000 {
            // dense fallback for stagnated small systems
            let dense = self.matrix.to_dense();
            let sol = dense
                .lu()
                .solve(&DVector::from_column_slice(b))
                .ok_or_else(|| Error::Numerical("singular sparse system".into()))?;
            x.copy_from_slice(sol.as_slice());
            res = residual(&self.matrix, b, x);
        }
        let relative_residual = res / bnorm;
        if !(relative_residual <= tol) {
            return Err(Error::Numerical(format!(
                "sparse solve did not converge: relative residual {relative_residual:.3e} > {tol:.1e} after {iterations} iterations"
            )));
        }
        Ok(SolveStats {
            iterations,
            relative_residual,
        })
    }

    pub fn solve(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let mut x = vec![0.0; b.len()];
        self.solve_into(b, &mut x, tol)?;
        Ok(x)
    }
}

/// Solves A x = b to relative residual `tol`.
pub fn sparse_solve(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    SparseSystem::new(a.clone())?.solve(b, tol)
}

fn residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let ax = a.mul(x);
    b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt()
}

#[inline]
fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm2(a: &[f64]) -> f64 {
    dotp(a, a).sqrt()
}

// Right-preconditioned BiCGSTAB. Returns (converged, iterations).
fn bicgstab(a: &CsrMatrix, m: &Ilu0, b: &[f64], x: &mut [f64], abs_tol: f64, max_iter: usize) -> (bool, usize) {
    let n = a.n;
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if norm2(&r) <= abs_tol {
        return (true, 0);
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dotp(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return (false, it);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        m.apply(&p, &mut y);
        a.matvec(&y, &mut v);
        let rv = dotp(&r_hat, &v);
        if rv == 0.0 {
            return (false, it);
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= abs_tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return (true, it);
        }
        m.apply(&s, &mut z);
        a.matvec(&z, &mut t);
        let tt = dotp(&t, &t);
        if tt == 0.0 {
            return (false, it);
        }
        omega = dotp(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= abs_tol {
            return (true, it);
        }
        if omega == 0.0 {
            return (false, it);
        }
    }
    (false, max_iter)
}

/// Dense LU with partial pivoting, reusable across right-hand sides.
#[derive(Clone, Debug)]
pub struct DenseFactorization {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Factors a square dense matrix. Fails when a pivot is negligible relative
/// to the largest one, reporting the pivot ratio.
pub fn dense_factor(a: DMatrix<f64>) -> Result<DenseFactorization> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(format!(
            "cannot factor a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let lu = a.lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if !(min > max * 1e-14) {
        return Err(Error::Numerical(format!(
            "matrix is numerically singular (pivot ratio estimate {:.3e})",
            max / min
        )));
    }
    Ok(DenseFactorization { lu })
}

impl DenseFactorization {
    pub fn dim(&self) -> usize {
        self.lu.l().nrows()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut v = DVector::from_column_slice(b);
        if v.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "right-hand side of length {} for a {0}x{0} factorization",
                self.dim()
            )));
        }
        if !self.lu.solve_mut(&mut v) {
            return Err(Error::Numerical("singular factorization".into()));
        }
        Ok(v.data.into())
    }

    /// Solves for every column of `b` in place.
    pub fn solve_columns(&self, b: &mut DMatrix<f64>) -> Result<()> {
        if self.lu.solve_mut(b) {
            Ok(())
        } else {
            Err(Error::Numerical("singular factorization".into()))
        }
    }
}
