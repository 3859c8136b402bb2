//! Geometric multigrid for `p M + q S` on the nested uniform meshes, used to
//! precondition the diagonal blocks of the time-stepping system in 2D.

use crate::error::Result;
use crate::fem::{assemble_mass, assemble_stiffness};
use crate::linsolve::IncompleteCholesky;
use crate::mesh::Mesh;
use crate::sparse::SparseMatrix;

/// Coarsest level solved directly when it has at most this many unknowns.
const DIRECT_LIMIT: usize = 2048;
const PRE_SWEEPS: usize = 2;
const POST_SWEEPS: usize = 2;

/// Mass and stiffness matrices on a chain of nested meshes, finest first,
/// with the P1 prolongations between consecutive levels.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    mass: Vec<SparseMatrix>,
    stiffness: Vec<SparseMatrix>,
    /// `prolong[l]` maps level `l + 1` (coarser) to level `l`.
    prolong: Vec<SparseMatrix>,
    restrict: Vec<SparseMatrix>,
}

/// Interpolation of coarse P1 functions at the fine interior nodes.
pub fn prolongation(fine: &Mesh, coarse: &Mesh) -> Result<SparseMatrix> {
    let mut t = Vec::new();
    for (row, &node) in fine.interior_nodes().iter().enumerate() {
        let loc = coarse.locate(fine.node(node))?;
        for (k, &w) in coarse.element(loc.element).iter().zip(&loc.weights) {
            if let Some(col) = coarse.interior_index(*k) {
                if w.abs() > 1e-12 {
                    t.push((row, col, w));
                }
            }
        }
    }
    SparseMatrix::from_triplets(fine.n_interior(), coarse.n_interior(), &t)
}

fn transpose(a: &SparseMatrix) -> Result<SparseMatrix> {
    let mut t = Vec::with_capacity(a.nnz());
    for i in 0..a.n_rows() {
        t.extend(a.row(i).map(|(j, v)| (j, i, v)));
    }
    SparseMatrix::from_triplets(a.n_cols(), a.n_rows(), &t)
}

impl MeshHierarchy {
    /// Halves the mesh while the cell count stays even and above 2.
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let mut mass = vec![assemble_mass(mesh)];
        let mut stiffness = vec![assemble_stiffness(mesh)];
        let mut prolong = Vec::new();
        let mut restrict = Vec::new();
        let mut fine = mesh.clone();
        while fine.n_cells().is_multiple_of(2) && fine.n_cells() > 2 {
            let coarse = Mesh::build(fine.dimension(), fine.n_cells() / 2)?;
            let p = prolongation(&fine, &coarse)?;
            restrict.push(transpose(&p)?);
            prolong.push(p);
            mass.push(assemble_mass(&coarse));
            stiffness.push(assemble_stiffness(&coarse));
            fine = coarse;
        }
        Ok(Self { mass, stiffness, prolong, restrict })
    }

    pub fn n_levels(&self) -> usize {
        self.mass.len()
    }
}

enum CoarseSolver {
    Dense(Vec<f64>, usize),
    Incomplete(IncompleteCholesky),
}

/// V-cycle preconditioner for `A = p M + q S`.
pub struct Multigrid<'h> {
    hierarchy: &'h MeshHierarchy,
    ops: Vec<SparseMatrix>,
    coarse: CoarseSolver,
}

fn dense_cholesky(a: &SparseMatrix) -> Option<Vec<f64>> {
    let n = a.n_rows();
    let mut l = a.to_dense().into_iter().flatten().collect::<Vec<f64>>();
    for j in 0..n {
        let mut d = l[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = l[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

fn dense_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

/// One Gauss–Seidel sweep, forward or backward.
fn gauss_seidel(a: &SparseMatrix, b: &[f64], x: &mut [f64], forward: bool) {
    let n = a.n_rows();
    let mut sweep = |i: usize| {
        let mut s = b[i];
        let mut d = 0.0;
        for (j, v) in a.row(i) {
            if j == i {
                d = v;
            } else {
                s -= v * x[j];
            }
        }
        x[i] = s / d;
    };
    if forward {
        (0..n).for_each(&mut sweep);
    } else {
        (0..n).rev().for_each(&mut sweep);
    }
}

impl<'h> Multigrid<'h> {
    /// `None` when the operator is not positive definite on the coarsest
    /// level, in which case Gauss–Seidel smoothing is not trustworthy.
    pub fn new(hierarchy: &'h MeshHierarchy, p: f64, q: f64) -> Result<Option<Self>> {
        let ops = (0..hierarchy.n_levels())
            .map(|l| SparseMatrix::linear_combination(p, &hierarchy.mass[l], q, &hierarchy.stiffness[l]))
            .collect::<Result<Vec<_>>>()?;
        if ops.iter().any(|a| a.diagonal().iter().any(|&d| !(d > 0.0))) {
            return Ok(None);
        }
        let last = ops.last().expect("hierarchy has at least one level");
        let coarse = if last.n_rows() <= DIRECT_LIMIT {
            match dense_cholesky(last) {
                Some(l) => CoarseSolver::Dense(l, last.n_rows()),
                None => return Ok(None),
            }
        } else {
            match IncompleteCholesky::factor(last) {
                Some(ic) => CoarseSolver::Incomplete(ic),
                None => return Ok(None),
            }
        };
        Ok(Some(Self { hierarchy, ops, coarse }))
    }

    pub fn n_levels(&self) -> usize {
        self.ops.len()
    }

    /// `x ≈ A⁻¹ b` by one V-cycle from a zero guess.
    pub fn apply(&self, b: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        self.cycle(0, b, x);
    }

    fn cycle(&self, level: usize, b: &[f64], x: &mut [f64]) {
        let a = &self.ops[level];
        if level + 1 == self.ops.len() {
            x.copy_from_slice(b);
            match &self.coarse {
                CoarseSolver::Dense(l, n) => dense_solve(l, *n, x),
                CoarseSolver::Incomplete(ic) => ic.solve_in_place(x),
            }
            return;
        }
        for _ in 0..PRE_SWEEPS {
            gauss_seidel(a, b, x, true);
        }
        let ax = a.mul_vec(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rc = self.hierarchy.restrict[level].mul_vec(&r);
        let mut ec = vec![0.0; rc.len()];
        self.cycle(level + 1, &rc, &mut ec);
        let e = self.hierarchy.prolong[level].mul_vec(&ec);
        x.iter_mut().zip(&e).for_each(|(xi, ei)| *xi += ei);
        for _ in 0..POST_SWEEPS {
            gauss_seidel(a, b, x, false);
        }
    }
}
