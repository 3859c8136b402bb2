//! Fully discrete scheme: backward Euler for the time derivative and
//! backward-Euler convolution quadrature for both fractional operators.
//!
//! Each step solves the coupled block system
//!
//! ```text
//! [ M/τ + d0¹ W     −a d0² M   ] [g1ⁿ]   [ M g1ⁿ⁻¹/τ − Σ d¹ᵢ W g1ⁿ⁻ⁱ + a Σ d²ᵢ M g2ⁿ⁻ⁱ + b1ⁿ ]
//! [   −a d0¹ M    M/τ + d0² W  ] [g2ⁿ] = [ M g2ⁿ⁻¹/τ − Σ d²ᵢ W g2ⁿ⁻ⁱ + a Σ d¹ᵢ M g1ⁿ⁻ⁱ + b2ⁿ ]
//! ```
//!
//! with `W = a M + S` and history sums over `i = 1..n-1`.

use crate::cq::CqWeights;
use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_mass, assemble_stiffness, interpolate, l2_project, ritz_project};
use crate::linsolve::{gmres, GmresOptions, IncompleteCholesky, SolveStats};
use crate::mesh::{Dimension, Mesh};
use crate::multigrid::{MeshHierarchy, Multigrid};
use crate::par;
use crate::problems::{InitProjection, ProblemSpec};
use crate::sparse::SparseMatrix;

/// Relative residual target for each block solve.
pub const BLOCK_TOL: f64 = 1e-12;
pub const BLOCK_MAX_ITER: usize = 5000;
/// Multiple of the rounding level below which a stagnated block solve is
/// accepted even if it misses the requested tolerance.
pub const ROUNDING_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub step: usize,
    pub t: f64,
}

impl StatePair {
    pub fn zeros(n: usize) -> Self {
        Self { g1: vec![0.0; n], g2: vec![0.0; n], step: 0, t: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.g1.iter().chain(&self.g2).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct SchemeMatrices {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    /// `W = a M + S`
    pub combined: SparseMatrix,
    pub a: f64,
    pub tau: f64,
    /// Weights for `D^{1−α1}`.
    pub weights1: CqWeights,
    /// Weights for `D^{1−α2}`.
    pub weights2: CqWeights,
    /// Coarse meshes for the multigrid preconditioner (2D only).
    pub hierarchy: Option<MeshHierarchy>,
}

impl SchemeMatrices {
    pub fn new(mesh: &Mesh, alpha1: f64, alpha2: f64, a: f64, tau: f64, n_steps: usize) -> Result<Self> {
        let mut mats =
            Self::from_matrices(assemble_mass(mesh), assemble_stiffness(mesh), alpha1, alpha2, a, tau, n_steps)?;
        if mesh.dimension() == Dimension::Two {
            mats.hierarchy = Some(MeshHierarchy::new(mesh)?);
        }
        Ok(mats)
    }

    pub fn from_matrices(
        mass: SparseMatrix,
        stiffness: SparseMatrix,
        alpha1: f64,
        alpha2: f64,
        a: f64,
        tau: f64,
        n_steps: usize,
    ) -> Result<Self> {
        let combined = SparseMatrix::linear_combination(a, &mass, 1.0, &stiffness)?;
        let count = n_steps.max(1) + 1;
        Ok(Self {
            weights1: CqWeights::new(1.0 - alpha1, tau, count)?,
            weights2: CqWeights::new(1.0 - alpha2, tau, count)?,
            mass,
            stiffness,
            combined,
            a,
            tau,
            hierarchy: None,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.n_rows()
    }
}

/// Approximate inverses of the two diagonal blocks, combined by a block
/// lower-triangular sweep.
enum BlockPreconditioner<'a> {
    /// Incomplete Cholesky (exact in 1D); the second is shared when the
    /// blocks coincide.
    Cholesky(IncompleteCholesky, Option<IncompleteCholesky>),
    Multigrid(Multigrid<'a>, Multigrid<'a>),
    Jacobi(Vec<f64>, Vec<f64>),
}

fn block_preconditioner<'a>(
    mats: &'a SchemeMatrices,
    diag1: &SparseMatrix,
    diag2: &SparseMatrix,
    d0_1: f64,
    d0_2: f64,
) -> Result<BlockPreconditioner<'a>> {
    let jacobi = || BlockPreconditioner::Jacobi(diag1.diagonal(), diag2.diagonal());
    if let Some(h) = &mats.hierarchy {
        let inv_tau = 1.0 / mats.tau;
        let mg1 = Multigrid::new(h, inv_tau + d0_1 * mats.a, d0_1)?;
        let mg2 = Multigrid::new(h, inv_tau + d0_2 * mats.a, d0_2)?;
        return Ok(match (mg1, mg2) {
            (Some(m1), Some(m2)) => BlockPreconditioner::Multigrid(m1, m2),
            _ => jacobi(),
        });
    }
    Ok(match IncompleteCholesky::factor(diag1) {
        Some(c1) if d0_1 == d0_2 => BlockPreconditioner::Cholesky(c1, None),
        Some(c1) => match IncompleteCholesky::factor(diag2) {
            Some(c2) => BlockPreconditioner::Cholesky(c1, Some(c2)),
            None => jacobi(),
        },
        None => jacobi(),
    })
}

impl BlockPreconditioner<'_> {
    fn apply_first(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Self::Cholesky(c1, _) => {
                z.copy_from_slice(r);
                c1.solve_in_place(z);
            }
            Self::Multigrid(m1, _) => m1.apply(r, z),
            Self::Jacobi(d1, _) => z.iter_mut().zip(r.iter().zip(d1)).for_each(|(v, (r, d))| *v = r / d),
        }
    }

    fn apply_second(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Self::Cholesky(c1, c2) => {
                z.copy_from_slice(r);
                c2.as_ref().unwrap_or(c1).solve_in_place(z);
            }
            Self::Multigrid(_, m2) => m2.apply(r, z),
            Self::Jacobi(_, d2) => z.iter_mut().zip(r.iter().zip(d2)).for_each(|(v, (r, d))| *v = r / d),
        }
    }
}

/// The implicit operator of one step, with its preconditioner.
pub struct BlockSystem<'a> {
    mass: &'a SparseMatrix,
    diag1: SparseMatrix,
    diag2: SparseMatrix,
    /// Coefficients of `M` in the off-diagonal blocks: `−a d0²` and `−a d0¹`.
    off12: f64,
    off21: f64,
    precond: BlockPreconditioner<'a>,
}

impl<'a> BlockSystem<'a> {
    pub fn new(mats: &'a SchemeMatrices, d0_1: f64, d0_2: f64) -> Result<Self> {
        let inv_tau = 1.0 / mats.tau;
        let diag1 = SparseMatrix::linear_combination(inv_tau, &mats.mass, d0_1, &mats.combined)?;
        let diag2 = SparseMatrix::linear_combination(inv_tau, &mats.mass, d0_2, &mats.combined)?;
        let precond = block_preconditioner(mats, &diag1, &diag2, d0_1, d0_2)?;
        Ok(Self { mass: &mats.mass, diag1, diag2, off12: -mats.a * d0_2, off21: -mats.a * d0_1, precond })
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.n_rows()
    }

    /// `y = K x` for the stacked vector `x = [x1; x2]`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n_dofs();
        let (x1, x2) = x.split_at(n);
        let (y1, y2) = y.split_at_mut(n);
        let mut tmp = vec![0.0; n];
        self.diag1.mul_vec_into(x1, y1);
        if self.off12 != 0.0 {
            self.mass.mul_vec_into(x2, &mut tmp);
            par::axpy(y1, self.off12, &tmp);
        }
        self.diag2.mul_vec_into(x2, y2);
        if self.off21 != 0.0 {
            self.mass.mul_vec_into(x1, &mut tmp);
            par::axpy(y2, self.off21, &tmp);
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let n = self.n_dofs();
        let (r1, r2) = r.split_at(n);
        let (z1, z2) = z.split_at_mut(n);
        self.precond.apply_first(r1, z1);
        let mut r2 = r2.to_vec();
        if self.off21 != 0.0 {
            par::axpy(&mut r2, -self.off21, &self.mass.mul_vec(z1));
        }
        self.precond.apply_second(&r2, z2);
    }

    /// Smallest relative residual that rounding lets us certify for `x`:
    /// a multiple of `ε ‖|b| + |K||x|‖ / ‖b‖`.
    pub fn rounding_floor(&self, x: &[f64], b: &[f64]) -> f64 {
        let n = self.n_dofs();
        let (x1, x2) = x.split_at(n);
        let abs_row = |a: &SparseMatrix, i: usize, v: &[f64]| a.row(i).map(|(j, k)| (k * v[j]).abs()).sum::<f64>();
        let mut acc = 0.0;
        for i in 0..n {
            let r1 = b[i].abs() + abs_row(&self.diag1, i, x1) + self.off12.abs() * abs_row(self.mass, i, x2);
            let r2 = b[n + i].abs() + abs_row(&self.diag2, i, x2) + self.off21.abs() * abs_row(self.mass, i, x1);
            acc += r1 * r1 + r2 * r2;
        }
        ROUNDING_FACTOR * f64::EPSILON * acc.sqrt() / par::norm(b)
    }

    /// Relative residual `‖rhs − K x‖ / ‖rhs‖` of the stacked system.
    pub fn residual(&self, x1: &[f64], x2: &[f64], rhs1: &[f64], rhs2: &[f64]) -> f64 {
        let x: Vec<f64> = x1.iter().chain(x2).copied().collect();
        let mut kx = vec![0.0; x.len()];
        self.apply(&x, &mut kx);
        let r: Vec<f64> = kx.iter().zip(rhs1.iter().chain(rhs2)).map(|(p, q)| q - p).collect();
        let b = par::norm(&rhs1.iter().chain(rhs2).copied().collect::<Vec<_>>());
        if b == 0.0 {
            par::norm(&r)
        } else {
            par::norm(&r) / b
        }
    }

    pub fn solve(
        &self,
        rhs1: &[f64],
        rhs2: &[f64],
        guess: Option<(&[f64], &[f64])>,
        tol: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, SolveStats)> {
        let n = self.n_dofs();
        if rhs1.len() != n || rhs2.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: rhs1.len().min(rhs2.len()) });
        }
        let b: Vec<f64> = rhs1.iter().chain(rhs2).copied().collect();
        let mut x = match guess {
            Some((g1, g2)) => g1.iter().chain(g2).copied().collect(),
            None => vec![0.0; 2 * n],
        };
        let opts = GmresOptions { tol, restart: 50, max_iter: BLOCK_MAX_ITER };
        let stats = match gmres(|v, out| self.apply(v, out), |r, z| self.precondition(r, z), &b, &mut x, opts) {
            Ok(stats) => stats,
            Err(Error::NotConverged { iterations, residual }) if residual <= self.rounding_floor(&x, &b) => {
                SolveStats { iterations, relative_residual: residual }
            }
            Err(e) => return Err(e),
        };
        let x2 = x.split_off(n);
        Ok((x, x2, stats))
    }
}

/// One-shot solve of the block system from a zero initial guess.
pub fn solve_block(
    mats: &SchemeMatrices,
    d0_1: f64,
    d0_2: f64,
    rhs1: &[f64],
    rhs2: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sys = BlockSystem::new(mats, d0_1, d0_2)?;
    let (x1, x2, _) = sys.solve(rhs1, rhs2, None, tol)?;
    Ok((x1, x2))
}

/// How past steps are kept for the history sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryMode {
    /// Store `W g` and `M g` for both components (four vectors per step).
    Cached,
    /// Store `g1`, `g2` only and apply `W`, `M` once to the summed history
    /// (two vectors per step, four matvecs per step).
    #[default]
    Deferred,
}

impl std::str::FromStr for HistoryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cached" => Ok(Self::Cached),
            "deferred" => Ok(Self::Deferred),
            other => Err(Error::Config(format!("unknown history mode `{other}` (expected cached or deferred)"))),
        }
    }
}

impl std::fmt::Display for HistoryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Cached => "cached",
            Self::Deferred => "deferred",
        })
    }
}

/// Per-step history, indexed by step number starting at 0.
#[derive(Debug, Clone)]
pub struct HistoryCache {
    mode: HistoryMode,
    pub wg1: Vec<Vec<f64>>,
    pub mg1: Vec<Vec<f64>>,
    pub wg2: Vec<Vec<f64>>,
    pub mg2: Vec<Vec<f64>>,
    pub g1: Vec<Vec<f64>>,
    pub g2: Vec<Vec<f64>>,
}

impl HistoryCache {
    fn new(mode: HistoryMode) -> Self {
        Self { mode, wg1: vec![], mg1: vec![], wg2: vec![], mg2: vec![], g1: vec![], g2: vec![] }
    }

    pub fn mode(&self) -> HistoryMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        match self.mode {
            HistoryMode::Cached => self.mg1.len(),
            HistoryMode::Deferred => self.g1.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&mut self, mats: &SchemeMatrices, state: &StatePair) {
        match self.mode {
            HistoryMode::Cached => {
                self.wg1.push(mats.combined.mul_vec(&state.g1));
                self.mg1.push(mats.mass.mul_vec(&state.g1));
                self.wg2.push(mats.combined.mul_vec(&state.g2));
                self.mg2.push(mats.mass.mul_vec(&state.g2));
            }
            HistoryMode::Deferred => {
                self.g1.push(state.g1.clone());
                self.g2.push(state.g2.clone());
            }
        }
    }
}

/// Time marcher for one run; owns the history and the current state.
pub struct Stepper<'a> {
    mats: &'a SchemeMatrices,
    system: BlockSystem<'a>,
    cache: HistoryCache,
    current: StatePair,
    tol: f64,
    last_stats: SolveStats,
}

impl<'a> Stepper<'a> {
    pub fn new(mats: &'a SchemeMatrices, initial: StatePair, mode: HistoryMode, tol: f64) -> Result<Self> {
        let n = mats.n_dofs();
        if initial.g1.len() != n || initial.g2.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: initial.g1.len() });
        }
        let system = BlockSystem::new(mats, mats.weights1.d0(), mats.weights2.d0())?;
        let mut cache = HistoryCache::new(mode);
        cache.push(mats, &initial);
        Ok(Self {
            mats,
            system,
            cache,
            current: initial,
            tol,
            last_stats: SolveStats { iterations: 0, relative_residual: 0.0 },
        })
    }

    pub fn state(&self) -> &StatePair {
        &self.current
    }

    pub fn cache(&self) -> &HistoryCache {
        &self.cache
    }

    pub fn system(&self) -> &BlockSystem<'a> {
        &self.system
    }

    pub fn last_stats(&self) -> SolveStats {
        self.last_stats
    }

    /// Right-hand side of the step about to be taken.
    pub fn rhs(&self, b1: &[f64], b2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n_dofs = self.mats.n_dofs();
        if b1.len() != n_dofs || b2.len() != n_dofs {
            return Err(Error::LengthMismatch { expected: n_dofs, got: b1.len().min(b2.len()) });
        }
        let n = self.current.step + 1;
        let (w1, w2) = (&self.mats.weights1, &self.mats.weights2);
        if w1.len() < n {
            return Err(Error::InvalidParameter(format!("weights cover {} steps, step {n} requested", w1.len() - 1)));
        }
        let inv_tau = 1.0 / self.mats.tau;
        let a = self.mats.a;
        let c = &self.cache;
        let prev = n - 1;
        let mut rhs1 = b1.to_vec();
        let mut rhs2 = b2.to_vec();
        match c.mode {
            HistoryMode::Cached => {
                par::axpy(&mut rhs1, inv_tau, &c.mg1[prev]);
                par::axpy(&mut rhs2, inv_tau, &c.mg2[prev]);
                if n > 1 {
                    let h_wg1 = w1.history_sum(&c.wg1[1..n], n)?;
                    let h_mg1 = w1.history_sum(&c.mg1[1..n], n)?;
                    let h_wg2 = w2.history_sum(&c.wg2[1..n], n)?;
                    let h_mg2 = w2.history_sum(&c.mg2[1..n], n)?;
                    par::axpy(&mut rhs1, -1.0, &h_wg1);
                    par::axpy(&mut rhs1, a, &h_mg2);
                    par::axpy(&mut rhs2, -1.0, &h_wg2);
                    par::axpy(&mut rhs2, a, &h_mg1);
                }
            }
            HistoryMode::Deferred => {
                let mut m_arg1: Vec<f64> = c.g1[prev].iter().map(|v| v * inv_tau).collect();
                let mut m_arg2: Vec<f64> = c.g2[prev].iter().map(|v| v * inv_tau).collect();
                if n > 1 {
                    let h1 = w1.history_sum(&c.g1[1..n], n)?;
                    let h2 = w2.history_sum(&c.g2[1..n], n)?;
                    par::axpy(&mut m_arg1, a, &h2);
                    par::axpy(&mut m_arg2, a, &h1);
                    par::axpy(&mut rhs1, -1.0, &self.mats.combined.mul_vec(&h1));
                    par::axpy(&mut rhs2, -1.0, &self.mats.combined.mul_vec(&h2));
                }
                par::axpy(&mut rhs1, 1.0, &self.mats.mass.mul_vec(&m_arg1));
                par::axpy(&mut rhs2, 1.0, &self.mats.mass.mul_vec(&m_arg2));
            }
        }
        Ok((rhs1, rhs2))
    }

    /// Advances one step with load vectors `b1`, `b2` of the sources at `t_n`.
    pub fn advance(&mut self, b1: &[f64], b2: &[f64]) -> Result<&StatePair> {
        let (rhs1, rhs2) = self.rhs(b1, b2)?;
        let guess = Some((self.current.g1.as_slice(), self.current.g2.as_slice()));
        let (g1, g2, stats) = self.system.solve(&rhs1, &rhs2, guess, self.tol)?;
        let step = self.current.step + 1;
        let next = StatePair { g1, g2, step, t: step as f64 * self.mats.tau };
        if !next.is_finite() {
            return Err(Error::NonFinite { step });
        }
        self.cache.push(self.mats, &next);
        self.current = next;
        self.last_stats = stats;
        Ok(&self.current)
    }
}

/// Which states a run returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retain {
    All,
    #[default]
    Final,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub history: HistoryMode,
    pub tol: f64,
    pub retain: Retain,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { history: HistoryMode::Deferred, tol: BLOCK_TOL, retain: Retain::Final }
    }
}

/// Initial FE state from the problem's initial data.
pub fn initial_state(problem: &ProblemSpec, mesh: &Mesh, init: InitProjection) -> Result<StatePair> {
    let n = mesh.n_interior();
    let project = |f: &crate::field::ScalarField| -> Result<Vec<f64>> {
        if f.is_zero() {
            return Ok(vec![0.0; n]);
        }
        Ok(match init {
            InitProjection::L2 => l2_project(mesh, f)?.into_coeffs(),
            InitProjection::Ritz => ritz_project(mesh, f)?.into_coeffs(),
            InitProjection::Interpolate => interpolate(mesh, f).into_coeffs(),
            InitProjection::Zero => vec![0.0; n],
        })
    };
    Ok(StatePair { g1: project(&problem.g1_0)?, g2: project(&problem.g2_0)?, step: 0, t: 0.0 })
}

/// Marches `n_steps` steps of size `tau` from the projected initial data.
pub fn run(
    problem: &ProblemSpec,
    mesh: &Mesh,
    tau: f64,
    n_steps: usize,
    init: InitProjection,
    opts: RunOptions,
) -> Result<Vec<StatePair>> {
    problem.validate()?;
    if problem.dimension != mesh.dimension() {
        return Err(Error::InvalidParameter("problem and mesh dimensions differ".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let mats = SchemeMatrices::new(mesh, problem.alpha1, problem.alpha2, problem.a, tau, n_steps)?;
    let initial = initial_state(problem, mesh, init)?;
    let mut stepper = Stepper::new(&mats, initial, opts.history, opts.tol)?;
    let mut out = Vec::new();
    if opts.retain == Retain::All {
        out.push(stepper.state().clone());
    }
    let zeros = vec![0.0; mesh.n_interior()];
    for n in 1..=n_steps {
        let t = n as f64 * tau;
        let (b1, b2) = if problem.is_homogeneous() {
            (zeros.clone(), zeros.clone())
        } else {
            (assemble_load(mesh, &(problem.f1)(t)), assemble_load(mesh, &(problem.f2)(t)))
        };
        stepper.advance(&b1, &b2)?;
        if opts.retain == Retain::All {
            out.push(stepper.state().clone());
        }
    }
    if opts.retain == Retain::Final {
        out.push(stepper.state().clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use std::f64::consts::PI;

    fn one_dof_mats(a: f64, alpha1: f64, alpha2: f64, tau: f64) -> SchemeMatrices {
        let m = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0 / 3.0)]).unwrap();
        let s = SparseMatrix::from_triplets(1, 1, &[(0, 0, 4.0)]).unwrap();
        SchemeMatrices::from_matrices(m, s, alpha1, alpha2, a, tau, 10).unwrap()
    }

    #[test]
    fn scalar_backward_euler_step() {
        let mats = one_dof_mats(0.0, 1.0, 1.0, 0.1);
        let init = StatePair { g1: vec![1.0], g2: vec![0.0], step: 0, t: 0.0 };
        let mut st = Stepper::new(&mats, init, HistoryMode::Cached, 1e-12).unwrap();
        let s = st.advance(&[0.0], &[0.0]).unwrap();
        let expected = (10.0 / 3.0) / (10.0 / 3.0 + 4.0);
        assert!((s.g1[0] - expected).abs() < 1e-14);
        assert_eq!(s.g2[0], 0.0);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn two_by_two_block_matches_hand_elimination() {
        // M = S = [1], a = 1, τ = 1, α = (0.5, 0.5): d0 = 1, W = 2
        let m = SparseMatrix::identity(1);
        let mats = SchemeMatrices::from_matrices(m.clone(), m, 0.5, 0.5, 1.0, 1.0, 4).unwrap();
        let (r1, r2) = (1.0, 2.0);
        // [3 -1; -1 3] x = r
        let x1 = (3.0 * r1 + r2) / 8.0;
        let x2 = (r1 + 3.0 * r2) / 8.0;
        let (y1, y2) = solve_block(&mats, 1.0, 1.0, &[r1], &[r2], 1e-14).unwrap();
        assert!((y1[0] - x1).abs() < 1e-14 && (y2[0] - x2).abs() < 1e-14);
    }

    #[test]
    fn zero_data_stays_zero() {
        let mesh = Mesh::interval(8).unwrap();
        let p = crate::problems::zero_problem();
        let states =
            run(&p, &mesh, 0.01, 5, InitProjection::Zero, RunOptions { retain: Retain::All, ..Default::default() })
                .unwrap();
        assert_eq!(states.len(), 6);
        assert!(states.iter().all(|s| s.g1.iter().chain(&s.g2).all(|&v| v == 0.0)));
    }

    #[test]
    fn history_modes_agree() {
        let mesh = Mesh::interval(16).unwrap();
        let p = crate::problems::example2().with_alphas(0.3, 0.7);
        let mk = |history| RunOptions { history, tol: 1e-13, retain: Retain::All };
        let a = run(&p, &mesh, 1e-3, 20, InitProjection::Ritz, mk(HistoryMode::Cached)).unwrap();
        let b = run(&p, &mesh, 1e-3, 20, InitProjection::Ritz, mk(HistoryMode::Deferred)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.g1.iter().zip(&y.g1).chain(x.g2.iter().zip(&y.g2)) {
                assert!((u - v).abs() < 1e-11 * u.abs().max(1e-3), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn cached_products_match_fresh_matvecs() {
        let mesh = Mesh::interval(12).unwrap();
        let p = crate::problems::example3();
        let mats = SchemeMatrices::new(&mesh, p.alpha1, p.alpha2, p.a, 1e-3, 10).unwrap();
        let init = initial_state(&p, &mesh, InitProjection::L2).unwrap();
        let mut st = Stepper::new(&mats, init, HistoryMode::Cached, 1e-12).unwrap();
        let zeros = vec![0.0; mesh.n_interior()];
        let mut states = vec![st.state().clone()];
        for _ in 0..6 {
            states.push(st.advance(&zeros, &zeros).unwrap().clone());
        }
        assert_eq!(st.cache().len(), 7);
        for (k, s) in states.iter().enumerate() {
            let fresh = mats.combined.mul_vec(&s.g1);
            assert!(fresh.iter().zip(&st.cache().wg1[k]).all(|(a, b)| (a - b).abs() < 1e-14));
            let fresh = mats.mass.mul_vec(&s.g2);
            assert!(fresh.iter().zip(&st.cache().mg2[k]).all(|(a, b)| (a - b).abs() < 1e-14));
        }
    }

    #[test]
    fn every_step_satisfies_block_residual() {
        let mesh = Mesh::interval(32).unwrap();
        let p = crate::problems::example1(1.01).with_alphas(0.4, 0.6);
        let mats = SchemeMatrices::new(&mesh, p.alpha1, p.alpha2, p.a, 0.01, 10).unwrap();
        let mut st = Stepper::new(&mats, StatePair::zeros(mesh.n_interior()), HistoryMode::Deferred, 1e-12).unwrap();
        for n in 1..=10 {
            let t = n as f64 * 0.01;
            let b1 = assemble_load(&mesh, &(p.f1)(t));
            let b2 = assemble_load(&mesh, &(p.f2)(t));
            let (r1, r2) = st.rhs(&b1, &b2).unwrap();
            let s = st.advance(&b1, &b2).unwrap().clone();
            assert!(st.system().residual(&s.g1, &s.g2, &r1, &r2) <= 1e-11);
        }
    }

    #[test]
    fn negative_coupling_uses_a_working_preconditioner() {
        let mesh = Mesh::interval(16).unwrap();
        let p = crate::problems::example2();
        let out = run(&p, &mesh, 0.01 / 50.0, 50, InitProjection::Ritz, RunOptions::default()).unwrap();
        assert!(out[0].is_finite());
    }

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, piv);
            b.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                let (top, bottom) = a.split_at_mut(i);
                for (x, y) in bottom[0][k..].iter_mut().zip(&top[k][k..]) {
                    *x -= f * y;
                }
                b[i] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k][j] * b[j]).sum();
            b[k] = (b[k] - s) / a[k][k];
        }
        b
    }

    /// The scheme written out with dense matrices and the full convolution.
    fn dense_reference(p: &ProblemSpec, mesh: &Mesh, tau: f64, steps: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let m = assemble_mass(mesh).to_dense();
        let s = assemble_stiffness(mesh).to_dense();
        let n = m.len();
        let w: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| p.a * m[i][j] + s[i][j]).collect()).collect();
        let weights = |beta: f64| {
            let mut g = vec![1.0];
            for i in 1..=steps {
                g.push(g[i - 1] * (i as f64 - 1.0 - beta) / i as f64);
            }
            g.into_iter().map(|v| v * tau.powf(-beta)).collect::<Vec<_>>()
        };
        let (d1, d2) = (weights(1.0 - p.alpha1), weights(1.0 - p.alpha2));
        let mv = |a: &[Vec<f64>], x: &[f64]| {
            a.iter().map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum()).collect::<Vec<f64>>()
        };
        let init = initial_state(p, mesh, InitProjection::L2).unwrap();
        let mut hist = vec![(init.g1, init.g2)];
        for k in 1..=steps {
            let t = k as f64 * tau;
            let mut r1 = assemble_load(mesh, &(p.f1)(t));
            let mut r2 = assemble_load(mesh, &(p.f2)(t));
            let (mg1, mg2) = (mv(&m, &hist[k - 1].0), mv(&m, &hist[k - 1].1));
            for i in 0..n {
                r1[i] += mg1[i] / tau;
                r2[i] += mg2[i] / tau;
            }
            for j in 1..k {
                let (g1, g2) = &hist[k - j];
                let (wg1, wg2, mg1, mg2) = (mv(&w, g1), mv(&w, g2), mv(&m, g1), mv(&m, g2));
                for i in 0..n {
                    r1[i] += -d1[j] * wg1[i] + p.a * d2[j] * mg2[i];
                    r2[i] += -d2[j] * wg2[i] + p.a * d1[j] * mg1[i];
                }
            }
            let mut k_mat = vec![vec![0.0; 2 * n]; 2 * n];
            for i in 0..n {
                for j in 0..n {
                    k_mat[i][j] = m[i][j] / tau + d1[0] * w[i][j];
                    k_mat[i][n + j] = -p.a * d2[0] * m[i][j];
                    k_mat[n + i][j] = -p.a * d1[0] * m[i][j];
                    k_mat[n + i][n + j] = m[i][j] / tau + d2[0] * w[i][j];
                }
            }
            let x = dense_solve(k_mat, r1.into_iter().chain(r2).collect());
            hist.push((x[..n].to_vec(), x[n..].to_vec()));
        }
        hist
    }

    fn max_rel_gap(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    #[test]
    fn matches_dense_full_history_scheme() {
        let mesh = Mesh::interval(10).unwrap();
        let cases = [
            (crate::problems::example1(1.01).with_alphas(0.3, 0.8), 0.02, 40),
            (crate::problems::example3().with_alphas(0.6, 0.2).with_coupling(-3.0), 1e-3, 30),
        ];
        for (p, tau, steps) in cases {
            let reference = dense_reference(&p, &mesh, tau, steps);
            for history in [HistoryMode::Cached, HistoryMode::Deferred] {
                let opts = RunOptions { history, tol: 1e-14, retain: Retain::All };
                let got = run(&p, &mesh, tau, steps, InitProjection::L2, opts).unwrap();
                for (s, (r1, r2)) in got.iter().zip(&reference) {
                    assert!(max_rel_gap(&s.g1, r1) < 1e-11 && max_rel_gap(&s.g2, r2) < 1e-11, "step {}", s.step);
                }
            }
        }
    }

    #[test]
    fn swapping_states_swaps_solution() {
        let mesh = Mesh::interval(24).unwrap();
        let p = crate::problems::example3().with_alphas(0.3, 0.7).with_coupling(2.0);
        let q = p.with_alphas(0.7, 0.3).with_initial_data(p.g2_0.clone(), p.g1_0.clone());
        let opts = RunOptions { tol: 1e-14, ..Default::default() };
        let a = run(&p, &mesh, 1e-3, 25, InitProjection::L2, opts).unwrap().pop().unwrap();
        let b = run(&q, &mesh, 1e-3, 25, InitProjection::L2, opts).unwrap().pop().unwrap();
        assert!(max_rel_gap(&a.g1, &b.g2) < 1e-12 && max_rel_gap(&a.g2, &b.g1) < 1e-12);
    }

    #[test]
    fn zero_coupling_decouples_states() {
        let mesh = Mesh::interval(24).unwrap();
        let p = crate::problems::example2().with_alphas(0.4, 0.9).with_coupling(0.0);
        let q = p.with_initial_data(
            p.g1_0.clone(),
            ScalarField::new(|x| (3.0 * PI * x[0]).sin()).with_gradient(|x| [3.0 * PI * (3.0 * PI * x[0]).cos(), 0.0]),
        );
        let opts = RunOptions { tol: 1e-14, ..Default::default() };
        let a = run(&p, &mesh, 1e-3, 25, InitProjection::L2, opts).unwrap().pop().unwrap();
        let b = run(&q, &mesh, 1e-3, 25, InitProjection::L2, opts).unwrap().pop().unwrap();
        assert!(max_rel_gap(&a.g1, &b.g1) < 1e-12);
        assert!(max_rel_gap(&a.g2, &b.g2) > 0.1);
    }
}
