//! Command-line front end: single runs, convergence studies, CQ weights and
//! the spectral reference solution, all written as CSV.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::cq::CqWeights;
use crate::error::{Error, Result};
use crate::harness::{decay_study, spatial_study, step_count, temporal_study, StudyKind};
use crate::mesh::Mesh;
use crate::oracle::{default_modes, oracle_solution};
use crate::problems;
use crate::stepper::{run, Retain, RunOptions, StatePair};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ffpe", version, about = "Coupled two-state fractional Fokker–Planck solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single solve; writes the final nodal values as `x[,y],G1,G2`.
    Run(ConfigArgs),
    /// Spatial, temporal or decay convergence study.
    Study(ConfigArgs),
    /// Convolution quadrature weights as `j,g_j,d_j`.
    Weights {
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Spectral reference solution of a 1D homogeneous problem as `x,G1,G2`.
    Oracle {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        t: f64,
        /// Number of equispaced evaluation points on [0, 1].
        #[arg(long, default_value_t = 11)]
        points: usize,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        alpha1: Option<f64>,
        #[arg(long)]
        alpha2: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        a: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Config file plus overrides; flags win over the file, `--set` wins over
/// both.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub alpha1: Option<String>,
    #[arg(long)]
    pub alpha2: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[arg(long)]
    pub n_cells: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub t_final: Option<String>,
    #[arg(long)]
    pub t_eval: Option<String>,
    #[arg(long)]
    pub study: Option<String>,
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long)]
    pub tol: Option<String>,
    #[arg(long)]
    pub history: Option<String>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print the effective config and exit.
    #[arg(long)]
    pub print_config: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        let flags = [
            ("problem", &self.problem),
            ("alpha1", &self.alpha1),
            ("alpha2", &self.alpha2),
            ("a", &self.a),
            ("n_cells", &self.n_cells),
            ("tau", &self.tau),
            ("t_final", &self.t_final),
            ("t_eval", &self.t_eval),
            ("study", &self.study),
            ("levels", &self.levels),
            ("output", &self.output),
            ("tol", &self.tol),
            ("history", &self.history),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

fn emit(output: Option<&Path>, body: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, body)?,
        None => std::io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}

/// Nodal values of the final state, boundary nodes included.
pub fn state_csv(mesh: &Mesh, state: &StatePair) -> String {
    let mut s = String::from(if mesh.dimension().as_usize() == 1 { "x,G1,G2\n" } else { "x,y,G1,G2\n" });
    for node in 0..mesh.n_nodes() {
        let (g1, g2) = match mesh.interior_index(node) {
            Some(k) => (state.g1[k], state.g2[k]),
            None => (0.0, 0.0),
        };
        for c in mesh.node(node) {
            let _ = write!(s, "{c},");
        }
        let _ = writeln!(s, "{g1},{g2}");
    }
    s
}

pub fn weights_csv(beta: f64, tau: f64, count: usize) -> Result<String> {
    let w = CqWeights::new(beta, tau, count)?;
    let mut s = String::from("j,g_j,d_j\n");
    for (j, (g, d)) in w.g().iter().zip(w.d()).enumerate() {
        let _ = writeln!(s, "{j},{g},{d}");
    }
    Ok(s)
}

fn run_command(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let p = cfg.problem_spec()?;
    let mesh = Mesh::build(p.dimension, cfg.n_cells)?;
    let n_steps = step_count(cfg.t_final, cfg.tau)?;
    let init = cfg.init_projection.unwrap_or(p.init_projection);
    let opts = RunOptions { history: cfg.history, tol: cfg.tol, retain: Retain::Final };
    let states = run(&p, &mesh, cfg.tau, n_steps, init, opts)?;
    let last = states.last().expect("final state is retained");
    emit(cfg.output.as_deref(), &state_csv(&mesh, last))
}

fn study_command(cfg: &RunConfig) -> Result<()> {
    if cfg.study.is_none() {
        return Err(Error::Config("study kind not set (study=spatial|temporal|decay)".into()));
    }
    cfg.validate()?;
    let p = cfg.problem_spec()?;
    let opts = cfg.study_options();
    let table = match cfg.study {
        Some(StudyKind::Spatial) => spatial_study(&p, &cfg.levels, cfg.tau, cfg.eval_time(), &opts)?,
        Some(StudyKind::Temporal) => temporal_study(&p, cfg.n_cells, &cfg.levels, cfg.eval_time(), &opts)?,
        Some(StudyKind::Decay) => decay_study(&p, cfg.decay_steps, &cfg.decay_times, cfg.n_cells, &opts)?,
        None => unreachable!(),
    };
    emit(cfg.output.as_deref(), &table.to_csv())
}

#[allow(clippy::too_many_arguments)]
fn oracle_command(
    problem: &str,
    t: f64,
    points: usize,
    modes: Option<usize>,
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    a: Option<f64>,
) -> Result<String> {
    let mut p = problems::by_name(problem)?;
    if alpha1.is_some() || alpha2.is_some() {
        p = p.with_alphas(alpha1.unwrap_or(p.alpha1), alpha2.unwrap_or(p.alpha2));
    }
    if let Some(a) = a {
        p = p.with_coupling(a);
    }
    if points < 2 {
        return Err(Error::Config("need at least 2 points".into()));
    }
    let sol = oracle_solution(&p, modes.unwrap_or_else(|| default_modes(&p)), t, None)?;
    let mut s = String::from("x,G1,G2\n");
    for i in 0..points {
        let x = i as f64 / (points - 1) as f64;
        let (u1, u2) = sol.eval(x);
        let _ = writeln!(s, "{x},{u1},{u2}");
    }
    Ok(s)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) | Command::Study(args) if args.print_config => {
            print!("{}", args.resolve()?);
            Ok(())
        }
        Command::Run(args) => run_command(&args.resolve()?),
        Command::Study(args) => study_command(&args.resolve()?),
        Command::Weights { beta, tau, count, output } => emit(output.as_deref(), &weights_csv(beta, tau, count)?),
        Command::Oracle { problem, t, points, modes, alpha1, alpha2, a, output } => {
            emit(output.as_deref(), &oracle_command(&problem, t, points, modes, alpha1, alpha2, a)?)
        }
    }
}

/// Exit status for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_solver_failure() {
        EXIT_SOLVER
    } else {
        EXIT_CONFIG
    }
}
