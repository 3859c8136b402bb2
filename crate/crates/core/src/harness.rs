//! Convergence studies in space, in time, and in the small-time limit.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::{assemble_mass, l2_error, mass_norm_diff, FemFunction, Reference};
use crate::mesh::Mesh;
use crate::par;
use crate::problems::{InitProjection, ProblemSpec};
use crate::stepper::{run, HistoryMode, Retain, RunOptions, BLOCK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Spatial,
    Temporal,
    Decay,
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(Self::Spatial),
            "temporal" => Ok(Self::Temporal),
            "decay" => Ok(Self::Decay),
            other => Err(Error::Config(format!("unknown study `{other}` (expected spatial, temporal or decay)"))),
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Spatial => "spatial",
            Self::Temporal => "temporal",
            Self::Decay => "decay",
        })
    }
}

/// What each level's error is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorReference {
    /// The exact solution when the problem has one, else successive levels.
    #[default]
    Auto,
    Exact,
    /// Difference of neighbouring levels: `‖u_h − u_{h/2}‖` in space,
    /// `‖u_{2τ} − u_τ‖` in time.
    Successive,
}

impl FromStr for ErrorReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "exact" => Ok(Self::Exact),
            "successive" => Ok(Self::Successive),
            other => Err(Error::Config(format!("unknown reference `{other}` (expected auto, exact or successive)"))),
        }
    }
}

impl fmt::Display for ErrorReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::Exact => "exact",
            Self::Successive => "successive",
        })
    }
}

/// Reference run for the decay study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayReference {
    /// Same final time with `factor · N` steps.
    Refined(usize),
}

impl Default for DecayReference {
    fn default() -> Self {
        Self::Refined(2)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StudyOptions {
    pub history: HistoryMode,
    pub tol: f64,
    /// Overrides the problem's recommended projection.
    pub init: Option<InitProjection>,
    pub reference: ErrorReference,
    pub decay_reference: DecayReference,
    /// Run levels concurrently (memory grows with the number of live runs).
    pub concurrent: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            history: HistoryMode::Deferred,
            tol: BLOCK_TOL,
            init: None,
            reference: ErrorReference::Auto,
            decay_reference: DecayReference::default(),
            concurrent: true,
        }
    }
}

impl StudyOptions {
    fn run_options(&self) -> RunOptions {
        RunOptions { history: self.history, tol: self.tol, retain: Retain::Final }
    }

    fn use_exact(&self, problem: &ProblemSpec) -> Result<bool> {
        match self.reference {
            ErrorReference::Auto => Ok(problem.exact.is_some()),
            ErrorReference::Successive => Ok(false),
            ErrorReference::Exact if problem.exact.is_some() => Ok(true),
            ErrorReference::Exact => {
                Err(Error::InvalidParameter(format!("problem `{}` has no exact solution", problem.name)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub param: f64,
    pub err_g1: f64,
    pub rate_g1: Option<f64>,
    pub err_g2: f64,
    pub rate_g2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub kind: StudyKind,
    pub problem: String,
    pub alpha1: f64,
    pub alpha2: f64,
    pub a: f64,
    /// Evaluation time; for the decay study, the largest final time.
    pub t_eval: f64,
    /// `τ` (spatial), `h` (temporal and decay).
    pub fixed: f64,
    /// How errors were measured, for the metadata line.
    pub reference: String,
    pub rows: Vec<TableRow>,
}

/// `ln(e_prev / e) / |ln(p / p_prev)|` for each consecutive pair; `None` for
/// the first entry.
pub fn rates(params: &[f64], errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; errors.len()];
    for i in 1..errors.len() {
        out[i] = Some((errors[i - 1] / errors[i]).ln() / (params[i] / params[i - 1]).ln().abs());
    }
    out
}

impl ConvergenceTable {
    fn new(
        kind: StudyKind,
        problem: &ProblemSpec,
        t_eval: f64,
        fixed: f64,
        reference: String,
        params: Vec<f64>,
        errs: Vec<(f64, f64)>,
    ) -> Result<Self> {
        for (p, (e1, e2)) in params.iter().zip(&errs) {
            if !(*e1 > 0.0 && *e2 > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "non-positive error ({e1}, {e2}) at level {p}; the configuration is degenerate"
                )));
            }
        }
        let e1: Vec<f64> = errs.iter().map(|e| e.0).collect();
        let e2: Vec<f64> = errs.iter().map(|e| e.1).collect();
        let (r1, r2) = (rates(&params, &e1), rates(&params, &e2));
        let rows = (0..params.len())
            .map(|i| TableRow { param: params[i], err_g1: e1[i], rate_g1: r1[i], err_g2: e2[i], rate_g2: r2[i] })
            .collect();
        Ok(Self {
            kind,
            problem: problem.name.clone(),
            alpha1: problem.alpha1,
            alpha2: problem.alpha2,
            a: problem.a,
            t_eval,
            fixed,
            reference,
            rows,
        })
    }

    pub fn errors_g1(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_g1).collect()
    }

    pub fn errors_g2(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_g2).collect()
    }

    pub fn rates_g1(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.rate_g1).collect()
    }

    pub fn rates_g2(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.rate_g2).collect()
    }

    pub fn to_csv(&self) -> String {
        let fixed_key = match self.kind {
            StudyKind::Spatial => "tau",
            StudyKind::Temporal | StudyKind::Decay => "h",
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# problem={},alpha1={},alpha2={},a={},t={},study={},{}={},reference={}",
            self.problem,
            self.alpha1,
            self.alpha2,
            self.a,
            self.t_eval,
            self.kind,
            fixed_key,
            self.fixed,
            self.reference
        );
        s.push_str("param,err_G1,rate_G1,err_G2,rate_G2\n");
        let opt = |r: Option<f64>| r.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.param, r.err_g1, opt(r.rate_g1), r.err_g2, opt(r.rate_g2));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// `t / tau` as an integer, if it is one.
pub fn step_count(t: f64, tau: f64) -> Result<usize> {
    if !(t > 0.0 && tau > 0.0) {
        return Err(Error::InvalidParameter(format!("need t > 0 and tau > 0, got t={t}, tau={tau}")));
    }
    let n = (t / tau).round();
    if n < 1.0 || (n * tau - t).abs() > 1e-9 * t {
        return Err(Error::InvalidParameter(format!("t={t} is not an integral multiple of tau={tau}")));
    }
    Ok(n as usize)
}

fn check_doublings(levels: &[usize], what: &str) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} levels must be nonempty")));
    }
    if levels[0] == 0 || levels.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::InvalidParameter(format!("{what} levels {levels:?} are not successive doublings")));
    }
    Ok(())
}

/// Whether the problem's data or sources (at `t`) have jumps inside the domain.
fn has_breaks(problem: &ProblemSpec, t: f64) -> bool {
    let f1 = (problem.f1)(t);
    let f2 = (problem.f2)(t);
    [&problem.g1_0, &problem.g2_0, &f1, &f2].iter().any(|f| !f.breaks_x().is_empty() || !f.breaks_y().is_empty())
}

fn map_levels<T: Sync, R: Send>(items: &[T], concurrent: bool, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if concurrent {
        par::map_collect(items, f)
    } else {
        items.iter().map(f).collect()
    }
}

/// Final `(G1, G2)` coefficient vectors.
type Components = (Vec<f64>, Vec<f64>);

fn final_state(
    problem: &ProblemSpec,
    mesh: &Mesh,
    tau: f64,
    n_steps: usize,
    opts: &StudyOptions,
) -> Result<Components> {
    let init = opts.init.unwrap_or(problem.init_projection);
    let mut out = run(problem, mesh, tau, n_steps, init, opts.run_options())?;
    let s = out.pop().expect("final state is always returned");
    Ok((s.g1, s.g2))
}

fn exact_errors(problem: &ProblemSpec, mesh: &Mesh, t: f64, g1: Vec<f64>, g2: Vec<f64>) -> Result<(f64, f64)> {
    let (x1, x2) = problem.exact.as_ref().expect("caller checked for an exact solution");
    let (x1, x2) = (x1(t), x2(t));
    let u1 = FemFunction::new(mesh, g1)?;
    let u2 = FemFunction::new(mesh, g2)?;
    Ok((l2_error(mesh, &u1, Reference::Field(&x1))?, l2_error(mesh, &u2, Reference::Field(&x2))?))
}

/// Refinement in `h` at fixed `tau`; `levels` are cell counts per direction.
pub fn spatial_study(
    problem: &ProblemSpec,
    levels: &[usize],
    tau: f64,
    t_eval: f64,
    opts: &StudyOptions,
) -> Result<ConvergenceTable> {
    problem.validate()?;
    check_doublings(levels, "spatial")?;
    if has_breaks(problem, t_eval) && levels.iter().any(|n| n % 4 != 0) {
        return Err(Error::InvalidParameter(format!(
            "levels {levels:?} must be multiples of 4 so that mesh lines fall on the data's jumps"
        )));
    }
    let n_steps = step_count(t_eval, tau)?;
    let use_exact = opts.use_exact(problem)?;
    let mut all = levels.to_vec();
    if !use_exact {
        all.push(2 * levels[levels.len() - 1]);
    }
    let meshes = all.iter().map(|&n| Mesh::build(problem.dimension, n)).collect::<Result<Vec<_>>>()?;
    let idx: Vec<usize> = (0..meshes.len()).collect();
    let states = map_levels(&idx, opts.concurrent, |&i| final_state(problem, &meshes[i], tau, n_steps, opts));
    let states = states.into_iter().collect::<Result<Vec<_>>>()?;

    let errs = if use_exact {
        let items: Vec<(usize, Components)> = states.into_iter().enumerate().collect();
        map_levels(&items, opts.concurrent, |(i, (g1, g2))| {
            exact_errors(problem, &meshes[*i], t_eval, g1.clone(), g2.clone())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?
    } else {
        let funcs = states
            .into_iter()
            .enumerate()
            .map(|(i, (g1, g2))| Ok((FemFunction::new(&meshes[i], g1)?, FemFunction::new(&meshes[i], g2)?)))
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<usize> = (0..levels.len()).collect();
        map_levels(&pairs, opts.concurrent, |&i| {
            let fine = &meshes[i + 1];
            let e1 = l2_error(fine, &funcs[i].0, Reference::Fem(&funcs[i + 1].0))?;
            let e2 = l2_error(fine, &funcs[i].1, Reference::Fem(&funcs[i + 1].1))?;
            Ok((e1, e2))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?
    };
    let reference = if use_exact { "exact" } else { "successive" };
    let params = levels.iter().map(|&n| n as f64).collect();
    ConvergenceTable::new(StudyKind::Spatial, problem, t_eval, tau, reference.into(), params, errs)
}

/// Refinement in `tau` at fixed `h = 1/n_cells`; `steps` are step counts to
/// reach `t_eval` (the parameter column). Without an exact solution the error
/// at `N` steps is `‖G_{N/2} − G_N‖`, so one coarser run is prepended.
pub fn temporal_study(
    problem: &ProblemSpec,
    n_cells: usize,
    steps: &[usize],
    t_eval: f64,
    opts: &StudyOptions,
) -> Result<ConvergenceTable> {
    problem.validate()?;
    check_doublings(steps, "temporal")?;
    if !(t_eval > 0.0) {
        return Err(Error::InvalidParameter(format!("t_eval must be positive, got {t_eval}")));
    }
    let use_exact = opts.use_exact(problem)?;
    let mut all = steps.to_vec();
    if !use_exact {
        if !steps[0].is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("coarsest step count {} must be even", steps[0])));
        }
        all.insert(0, steps[0] / 2);
    }
    let mesh = Mesh::build(problem.dimension, n_cells)?;
    let states = map_levels(&all, opts.concurrent, |&n| final_state(problem, &mesh, t_eval / n as f64, n, opts));
    let states = states.into_iter().collect::<Result<Vec<_>>>()?;
    let errs = if use_exact {
        states.into_iter().map(|(g1, g2)| exact_errors(problem, &mesh, t_eval, g1, g2)).collect::<Result<Vec<_>>>()?
    } else {
        let mass = assemble_mass(&mesh);
        (0..steps.len())
            .map(|i| {
                let (a, b) = (&states[i], &states[i + 1]);
                (mass_norm_diff(&mass, &a.0, &b.0), mass_norm_diff(&mass, &a.1, &b.1))
            })
            .collect()
    };
    let reference = if use_exact { "exact" } else { "successive" };
    let params = steps.iter().map(|&n| n as f64).collect();
    ConvergenceTable::new(StudyKind::Temporal, problem, t_eval, mesh.h(), reference.into(), params, errs)
}

/// Temporal error at `N` fixed steps as the final time shrinks. The error at
/// each `t` is the mass-norm distance to a refined-step run to the same `t`;
/// rates are `ln(E(t_prev)/E(t)) / ln(t_prev/t)`, positive when the error
/// decays with `t`.
pub fn decay_study(
    problem: &ProblemSpec,
    n_steps: usize,
    times: &[f64],
    n_cells: usize,
    opts: &StudyOptions,
) -> Result<ConvergenceTable> {
    problem.validate()?;
    if n_steps == 0 || times.is_empty() {
        return Err(Error::InvalidParameter("decay study needs N ≥ 1 and at least one time".into()));
    }
    if times.iter().any(|&t| !(t > 0.0)) || times.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(format!("decay times {times:?} must be positive and decreasing")));
    }
    let DecayReference::Refined(factor) = opts.decay_reference;
    if factor < 2 {
        return Err(Error::InvalidParameter("decay reference factor must be at least 2".into()));
    }
    let mesh = Mesh::build(problem.dimension, n_cells)?;
    let mass = assemble_mass(&mesh);
    let jobs: Vec<(f64, usize)> = times.iter().flat_map(|&t| [(t, n_steps), (t, factor * n_steps)]).collect();
    let states = map_levels(&jobs, opts.concurrent, |&(t, n)| final_state(problem, &mesh, t / n as f64, n, opts));
    let states = states.into_iter().collect::<Result<Vec<_>>>()?;
    let errs = states
        .chunks(2)
        .map(|p| (mass_norm_diff(&mass, &p[0].0, &p[1].0), mass_norm_diff(&mass, &p[0].1, &p[1].1)))
        .collect();
    let reference = format!("{factor}N-step run;rate=ln(E(t_prev)/E(t))/ln(t_prev/t)");
    ConvergenceTable::new(StudyKind::Decay, problem, times[0], mesh.h(), reference, times.to_vec(), errs)
}
