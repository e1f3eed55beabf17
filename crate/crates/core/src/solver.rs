//! Linear solvers for the assembled systems.
//!
//! The default is a sparse LU factorization with partial pivoting followed
//! by a few steps of iterative refinement. Restarted GMRES with an ILU(0)
//! preconditioner is available behind the same interface.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::assembly::LinearSystem;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const DEFAULT_TOL: f64 = 1e-12;
const MAX_REFINEMENT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    #[default]
    Direct,
    Gmres {
        restart: usize,
        max_iter: usize,
    },
}

impl SolverMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            SolverMethod::Direct => "sparse-lu",
            SolverMethod::Gmres { .. } => "gmres-ilu0",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    /// `|Ax - b| / |b|`, or `|Ax|` when `b = 0`.
    pub relative_residual: f64,
    /// Krylov iterations; 0 for the direct solver.
    pub iterations: usize,
    pub refinement_steps: usize,
    pub method: SolverMethod,
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let bn = norm2(b);
    let r = norm2(&residual(a, x, b));
    if bn > 0.0 {
        r / bn
    } else {
        r
    }
}

/// Solves with the sparse direct method.
pub fn solve(system: &LinearSystem, tol: f64) -> Result<SolveReport> {
    solve_with(&system.matrix, &system.rhs, tol, SolverMethod::Direct)
}

pub fn solve_with(a: &CsrMatrix, b: &[f64], tol: f64, method: SolverMethod) -> Result<SolveReport> {
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::InvalidArgument(format!("solver tolerance {tol} outside (0, 1e-6]")));
    }
    if a.n_rows != a.n_cols || a.n_rows != b.len() {
        return Err(Error::InvalidArgument(format!(
            "system is {}x{} with right-hand side of length {}",
            a.n_rows,
            a.n_cols,
            b.len()
        )));
    }
    let n = b.len();
    if n == 0 || b.iter().all(|v| *v == 0.0) {
        return Ok(SolveReport {
            solution: vec![0.0; n],
            relative_residual: 0.0,
            iterations: 0,
            refinement_steps: 0,
            method,
        });
    }
    let report = match method {
        SolverMethod::Direct => direct(a, b)?,
        SolverMethod::Gmres { restart, max_iter } => gmres(a, b, tol, restart.max(1), max_iter)?,
    };
    if !(report.relative_residual <= tol) {
        return Err(Error::SolverFailure {
            reason: format!("{} did not reach tolerance {tol:e}", method.tag()),
            residual: report.relative_residual,
        });
    }
    Ok(report)
}

fn direct(a: &CsrMatrix, b: &[f64]) -> Result<SolveReport> {
    let n = b.len();
    let triplets: Vec<Triplet<usize, usize, f64>> =
        a.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets).map_err(|e| Error::SolverFailure {
        reason: format!("matrix construction: {e:?}"),
        residual: f64::INFINITY,
    })?;
    let lu = m.sp_lu().map_err(|e| Error::SolverFailure {
        reason: format!("factorization: {e:?}"),
        residual: f64::INFINITY,
    })?;
    let lu_solve = |rhs: &[f64]| -> Vec<f64> {
        let col = Col::<f64>::from_fn(n, |i| rhs[i]);
        let x = lu.solve(&col);
        (0..n).map(|i| x[i]).collect()
    };
    let mut x = lu_solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure {
            reason: "factorization produced non-finite values (singular matrix)".into(),
            residual: f64::INFINITY,
        });
    }
    let mut rel = relative_residual(a, &x, b);
    let mut steps = 0;
    while steps < MAX_REFINEMENT && rel > 1e-15 {
        let dx = lu_solve(&residual(a, &x, b));
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
        let next = relative_residual(a, &candidate, b);
        if !(next < rel) {
            break;
        }
        x = candidate;
        rel = next;
        steps += 1;
    }
    Ok(SolveReport {
        solution: x,
        relative_residual: rel,
        iterations: 0,
        refinement_steps: steps,
        method: SolverMethod::Direct,
    })
}

/// Incomplete LU with the sparsity pattern of `A`; `L` has unit diagonal
/// and shares storage with `U`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    factors: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows;
        let mut f = a.clone();
        let mut diag = vec![usize::MAX; n];
        for r in 0..n {
            for k in f.row_ptr[r]..f.row_ptr[r + 1] {
                if f.col_idx[k] == r {
                    diag[r] = k;
                }
            }
            if diag[r] == usize::MAX {
                return Err(Error::SolverFailure {
                    reason: format!("ILU(0): missing diagonal in row {r}"),
                    residual: f64::INFINITY,
                });
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (f.row_ptr[i], f.row_ptr[i + 1]);
            for k in start..end {
                pos[f.col_idx[k]] = k;
            }
            for k in start..end {
                let col = f.col_idx[k];
                if col >= i {
                    continue;
                }
                let pivot = f.values[diag[col]];
                if pivot == 0.0 {
                    return Err(Error::SolverFailure {
                        reason: format!("ILU(0): zero pivot in row {col}"),
                        residual: f64::INFINITY,
                    });
                }
                let l = f.values[k] / pivot;
                f.values[k] = l;
                for kk in diag[col] + 1..f.row_ptr[col + 1] {
                    let c = f.col_idx[kk];
                    if c > col && pos[c] != usize::MAX {
                        f.values[pos[c]] -= l * f.values[kk];
                    }
                }
            }
            for k in start..end {
                pos[f.col_idx[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 { factors: f, diag })
    }

    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let f = &self.factors;
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            for k in f.row_ptr[i]..self.diag[i] {
                y[i] -= f.values[k] * y[f.col_idx[k]];
            }
        }
        for i in (0..n).rev() {
            for k in self.diag[i] + 1..f.row_ptr[i + 1] {
                y[i] -= f.values[k] * y[f.col_idx[k]];
            }
            y[i] /= f.values[self.diag[i]];
        }
        y
    }
}

/// Right-preconditioned restarted GMRES.
fn gmres(a: &CsrMatrix, b: &[f64], tol: f64, restart: usize, max_iter: usize) -> Result<SolveReport> {
    let n = b.len();
    // the CSR rows are column-sorted, which the ILU sweep relies on
    let ilu = Ilu0::new(a)?;
    let bn = norm2(b);
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < max_iter {
        let r = residual(a, &x, b);
        let beta = norm2(&r);
        rel = beta / bn;
        if rel <= tol {
            break;
        }
        let m = restart.min(max_iter - iterations);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let zj = ilu.apply(&v[j]);
            let mut w = a.mul_vec(&zj);
            z.push(zj);
            for i in 0..=j {
                let hij: f64 = w.iter().zip(&v[i]).map(|(a, b)| a * b).sum();
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= hij * vk;
                }
            }
            let wn = norm2(&w);
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            iterations += 1;
            if g[j + 1].abs() / bn <= tol * 0.1 || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wk| wk / wn).collect());
        }
        if used == 0 {
            break;
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| h[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            for (xk, zk) in x.iter_mut().zip(zi) {
                *xk += yi * zk;
            }
        }
    }
    rel = rel.min(relative_residual(a, &x, b));
    Ok(SolveReport {
        solution: x,
        relative_residual: rel,
        iterations,
        refinement_steps: 0,
        method: SolverMethod::Gmres { restart, max_iter },
    })
}
