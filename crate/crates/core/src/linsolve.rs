//! Iterative solvers and preconditioners used by the projections and the
//! coupled time stepper.

use crate::error::{Error, Result};
use crate::par;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD systems. `x` holds the
/// initial guess on entry and the solution on return.
pub fn pcg(a: &SparseMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = b.len();
    if a.n_rows() != n || x.len() != n {
        return Err(Error::LengthMismatch { expected: a.n_rows(), got: n });
    }
    let b_norm = par::norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();

    let mut r = a.mul_vec(x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = par::dot(&r, &z);
    let mut res = par::norm(&r) / b_norm;

    for it in 0..max_iter {
        if res <= tol {
            return Ok(SolveStats { iterations: it, relative_residual: res });
        }
        a.mul_vec_into(&p, &mut ap);
        let alpha = rz / par::dot(&p, &ap);
        par::axpy(x, alpha, &p);
        par::axpy(&mut r, -alpha, &ap);
        res = par::norm(&r) / b_norm;
        z.iter_mut().zip(&r).zip(&inv_diag).for_each(|((zi, ri), di)| *zi = ri * di);
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }

    // Recurrence residual can drift from the true one; report the true value.
    let mut true_r = a.mul_vec(x);
    true_r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let res = par::norm(&true_r) / b_norm;
    if res <= tol {
        Ok(SolveStats { iterations: max_iter, relative_residual: res })
    } else {
        Err(Error::NotConverged { iterations: max_iter, residual: res })
    }
}

/// Zero-fill incomplete Cholesky factor `L Lᵀ ≈ A` of a symmetric matrix:
/// `L` keeps the sparsity of the lower triangle of `A`. Exact for
/// tridiagonal matrices.
#[derive(Debug, Clone)]
pub struct IncompleteCholesky {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    /// Row `i` holds `L[i, j]` for `j < i` in column order, then `L[i, i]`.
    vals: Vec<f64>,
}

impl IncompleteCholesky {
    /// Returns `None` on a non-positive pivot.
    pub fn factor(a: &SparseMatrix) -> Option<Self> {
        let n = a.n_rows();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    cols.push(j);
                    vals.push(v);
                }
            }
            if cols.last() != Some(&i) {
                return None;
            }
            offsets.push(cols.len());
        }
        for i in 0..n {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            for p in lo..hi {
                let k = cols[p];
                // Σ_{j<k} L[i,j] L[k,j] over the shared pattern
                let (klo, khi) = (offsets[k], offsets[k + 1] - 1);
                let mut s = vals[p];
                let (mut q, mut r) = (lo, klo);
                while q < p && r < khi {
                    match cols[q].cmp(&cols[r]) {
                        std::cmp::Ordering::Less => q += 1,
                        std::cmp::Ordering::Greater => r += 1,
                        std::cmp::Ordering::Equal => {
                            s -= vals[q] * vals[r];
                            q += 1;
                            r += 1;
                        }
                    }
                }
                if k == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    vals[p] = s.sqrt();
                } else {
                    vals[p] = s / vals[offsets[k + 1] - 1];
                }
            }
        }
        Some(Self { offsets, cols, vals })
    }

    pub fn dim(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `x ← (L Lᵀ)⁻¹ x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let (lo, hi) = (self.offsets[i], self.offsets[i + 1] - 1);
            let mut s = x[i];
            for p in lo..hi {
                s -= self.vals[p] * x[self.cols[p]];
            }
            x[i] = s / self.vals[hi];
        }
        for i in (0..n).rev() {
            let (lo, hi) = (self.offsets[i], self.offsets[i + 1] - 1);
            x[i] /= self.vals[hi];
            let xi = x[i];
            for p in lo..hi {
                x[self.cols[p]] -= self.vals[p] * xi;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { tol: 1e-12, restart: 50, max_iter: 5000 }
    }
}

const STALL_CYCLES: usize = 3;

/// Right-preconditioned restarted GMRES. With right preconditioning the
/// Arnoldi residual is the true residual of `A x = b`, which is what the
/// stopping test uses. `x` is the initial guess on entry and holds the last
/// iterate on failure. Gives up early after a few restart cycles without
/// progress.
pub fn gmres<A, P>(apply: A, precondition: P, b: &[f64], x: &mut [f64], opts: GmresOptions) -> Result<SolveStats>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    if x.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: x.len() });
    }
    let b_norm = par::norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let m = opts.restart.max(1);
    let mut total = 0usize;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];

    loop {
        apply(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = par::norm(&r);
        let res = beta / b_norm;
        if res <= opts.tol {
            return Ok(SolveStats { iterations: total, relative_residual: res });
        }
        // a full cycle that no longer halves the true residual means
        // rounding has taken over
        if res > 0.5 * best {
            stalled += 1;
        } else {
            stalled = 0;
        }
        best = best.min(res);
        if total >= opts.max_iter || stalled >= STALL_CYCLES {
            return Err(Error::NotConverged { iterations: total, residual: res });
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut precond_basis: Vec<Vec<f64>> = Vec::with_capacity(m);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;

        for j in 0..m {
            let mut z = vec![0.0; n];
            precondition(&basis[j], &mut z);
            apply(&z, &mut w);
            precond_basis.push(z);
            for (i, v) in basis.iter().enumerate() {
                let hij = par::dot(&w, v);
                hess[i][j] = hij;
                par::axpy(&mut w, -hij, v);
            }
            let h_next = par::norm(&w);
            hess[j + 1][j] = h_next;

            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = hess[j][j].hypot(hess[j + 1][j]);
            if denom == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = hess[j][j] / denom;
                sn[j] = hess[j + 1][j] / denom;
            }
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];

            used = j + 1;
            total += 1;
            let est = g[j + 1].abs() / b_norm;
            if est <= opts.tol || total >= opts.max_iter || h_next == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= hess[i][k] * y[k];
            }
            y[i] = s / hess[i][i];
        }
        for (yi, z) in y.iter().zip(&precond_basis) {
            par::axpy(x, *yi, z);
        }
    }
}
