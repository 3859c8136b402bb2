//! Flat `key=value` run configuration.
//!
//! Keys are the [`RunConfig`] field names; `#` starts a comment, lists are
//! comma separated. Later assignments override earlier ones, which is how
//! command-line flags take precedence over a file.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::{step_count, ErrorReference, StudyKind, StudyOptions};
use crate::problems::{self, InitProjection, ProblemSpec};
use crate::stepper::{HistoryMode, BLOCK_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub a: Option<f64>,
    /// Time exponent of the manufactured solution (example1 only).
    pub nu: Option<f64>,
    pub n_cells: usize,
    pub tau: f64,
    pub t_final: f64,
    /// Evaluation time of studies; defaults to `t_final`.
    pub t_eval: Option<f64>,
    pub study: Option<StudyKind>,
    /// Cell counts (spatial) or step counts (temporal).
    pub levels: Vec<usize>,
    pub decay_steps: usize,
    pub decay_times: Vec<f64>,
    pub reference: ErrorReference,
    pub output: Option<PathBuf>,
    pub init_projection: Option<InitProjection>,
    pub tol: f64,
    pub history: HistoryMode,
}

pub const KEYS: [&str; 18] = [
    "problem",
    "alpha1",
    "alpha2",
    "a",
    "nu",
    "n_cells",
    "tau",
    "t_final",
    "t_eval",
    "study",
    "levels",
    "decay_steps",
    "decay_times",
    "reference",
    "output",
    "init_projection",
    "tol",
    "history",
];

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "example1".into(),
            alpha1: None,
            alpha2: None,
            a: None,
            nu: None,
            n_cells: 32,
            tau: 1e-3,
            t_final: 0.1,
            t_eval: None,
            study: None,
            levels: Vec::new(),
            decay_steps: 10,
            decay_times: Vec::new(),
            reference: ErrorReference::Auto,
            output: None,
            init_projection: None,
            tol: BLOCK_TOL,
            history: HistoryMode::Deferred,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_value(key, s)).collect()
}

fn join<T: fmt::Debug>(items: &[T]) -> String {
    items.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies every assignment in `text` to `self`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", k + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", k + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let opt = |v: &str| -> Result<Option<f64>> {
            if v.is_empty() {
                Ok(None)
            } else {
                parse_value(key, v).map(Some)
            }
        };
        match key {
            "problem" => self.problem = value.to_string(),
            "alpha1" => self.alpha1 = opt(value)?,
            "alpha2" => self.alpha2 = opt(value)?,
            "a" => self.a = opt(value)?,
            "nu" => self.nu = opt(value)?,
            "n_cells" => self.n_cells = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "t_final" => self.t_final = parse_value(key, value)?,
            "t_eval" => self.t_eval = opt(value)?,
            "study" => self.study = if value.is_empty() { None } else { Some(value.parse()?) },
            "levels" => self.levels = parse_list(key, value)?,
            "decay_steps" => self.decay_steps = parse_value(key, value)?,
            "decay_times" => self.decay_times = parse_list(key, value)?,
            "reference" => self.reference = value.parse()?,
            "output" => self.output = (!value.is_empty()).then(|| PathBuf::from(value)),
            "init_projection" => self.init_projection = if value.is_empty() { None } else { Some(value.parse()?) },
            "tol" => self.tol = parse_value(key, value)?,
            "history" => self.history = value.parse()?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn eval_time(&self) -> f64 {
        self.t_eval.unwrap_or(self.t_final)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !problems::PROBLEM_NAMES.contains(&self.problem.as_str()) {
            return Err(Error::UnknownProblem(self.problem.clone()));
        }
        if self.nu.is_some() && self.problem != "example1" {
            return bad("nu applies to example1 only".into());
        }
        if self.n_cells < 2 {
            return bad(format!("n_cells must be at least 2, got {}", self.n_cells));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) || !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("tau and t_final must be positive".into());
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive".into());
        }
        let t_eval = self.eval_time();
        if !(t_eval > 0.0 && t_eval <= self.t_final) {
            return bad(format!("t_eval = {t_eval} must lie in (0, t_final = {}]", self.t_final));
        }
        let integral = |t: f64| step_count(t, self.tau).map_err(|e| Error::Config(e.to_string()));
        match self.study {
            None => {
                integral(self.t_final)?;
            }
            Some(StudyKind::Spatial) => {
                integral(t_eval)?;
                if self.levels.is_empty() {
                    return bad("spatial study needs levels".into());
                }
            }
            Some(StudyKind::Temporal) => {
                if self.levels.is_empty() {
                    return bad("temporal study needs levels".into());
                }
            }
            Some(StudyKind::Decay) => {
                if self.decay_times.is_empty() || self.decay_steps == 0 {
                    return bad("decay study needs decay_times and decay_steps >= 1".into());
                }
            }
        }
        Ok(())
    }

    /// The named problem with this config's overrides applied.
    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let mut p = match (self.problem.as_str(), self.nu) {
            ("example1", Some(nu)) => problems::example1(nu),
            (name, _) => problems::by_name(name)?,
        };
        if self.alpha1.is_some() || self.alpha2.is_some() {
            p = p.with_alphas(self.alpha1.unwrap_or(p.alpha1), self.alpha2.unwrap_or(p.alpha2));
        }
        if let Some(a) = self.a {
            p = p.with_coupling(a);
        }
        if let Some(init) = self.init_projection {
            p.init_projection = init;
        }
        Ok(p)
    }

    pub fn study_options(&self) -> StudyOptions {
        StudyOptions {
            history: self.history,
            tol: self.tol,
            init: self.init_projection,
            reference: self.reference,
            ..Default::default()
        }
    }
}

impl fmt::Display for RunConfig {
    /// Every key, in [`KEYS`] order; unset optional keys are left empty.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let mut s = String::new();
        let _ = writeln!(s, "problem={}", self.problem);
        let _ = writeln!(s, "alpha1={}", opt(self.alpha1));
        let _ = writeln!(s, "alpha2={}", opt(self.alpha2));
        let _ = writeln!(s, "a={}", opt(self.a));
        let _ = writeln!(s, "nu={}", opt(self.nu));
        let _ = writeln!(s, "n_cells={}", self.n_cells);
        let _ = writeln!(s, "tau={:?}", self.tau);
        let _ = writeln!(s, "t_final={:?}", self.t_final);
        let _ = writeln!(s, "t_eval={}", opt(self.t_eval));
        let _ = writeln!(s, "study={}", self.study.map(|k| k.to_string()).unwrap_or_default());
        let _ = writeln!(s, "levels={}", join(&self.levels));
        let _ = writeln!(s, "decay_steps={}", self.decay_steps);
        let _ = writeln!(s, "decay_times={}", join(&self.decay_times));
        let _ = writeln!(s, "reference={}", self.reference);
        let _ = writeln!(s, "output={}", self.output.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        let _ = writeln!(s, "init_projection={}", self.init_projection.map(|p| p.to_string()).unwrap_or_default());
        let _ = writeln!(s, "tol={:?}", self.tol);
        let _ = writeln!(s, "history={}", self.history);
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_comments_lists_and_overrides() {
        let text = "# table 1\nproblem = example1\nalpha1=0.1 # first\nalpha2=0.2\nlevels=8, 16,32,64\nstudy=spatial\ntau=6.25e-5\n\nalpha1=0.4\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.alpha1, Some(0.4));
        assert_eq!(c.levels, vec![8, 16, 32, 64]);
        assert_eq!(c.study, Some(StudyKind::Spatial));
        c.validate().unwrap();
    }

    #[test]
    fn reports_bad_lines() {
        for (text, needle) in [
            ("problem=example1\nbogus=1\n", "line 2: unknown key `bogus`"),
            ("tau\n", "line 1: expected key=value"),
            ("n_cells=eight\n", "line 1: cannot parse `eight` for `n_cells`"),
            ("history=lazy\n", "unknown history mode"),
        ] {
            let e = RunConfig::parse(text).unwrap_err().to_string();
            assert!(e.contains(needle), "{e}");
        }
    }

    #[test]
    fn validation_enforces_invariants() {
        let ok = RunConfig::default();
        ok.validate().unwrap();
        let cases = [
            RunConfig { t_eval: Some(0.2), ..ok.clone() },
            RunConfig { tau: 0.03, ..ok.clone() },
            RunConfig { study: Some(StudyKind::Spatial), ..ok.clone() },
            RunConfig { study: Some(StudyKind::Decay), ..ok.clone() },
            RunConfig { nu: Some(1.5), problem: "example2".into(), ..ok.clone() },
            RunConfig { n_cells: 1, ..ok.clone() },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
        let unknown = RunConfig { problem: "example9".into(), ..ok };
        assert!(matches!(unknown.validate(), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn overrides_reach_the_problem() {
        let c = RunConfig::parse("problem=example1\nnu=1.5\nalpha1=0.3\na=-1\ninit_projection=zero\n").unwrap();
        let p = c.problem_spec().unwrap();
        assert_eq!((p.alpha1, p.alpha2, p.a), (0.3, problems::example1(1.5).alpha2, -1.0));
        assert_eq!(p.init_projection, InitProjection::Zero);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), 1e-9..10.0f64]
    }

    fn config() -> impl Strategy<Value = RunConfig> {
        let names = proptest::sample::select(problems::PROBLEM_NAMES.to_vec());
        let study = proptest::option::of(proptest::sample::select(vec![
            StudyKind::Spatial,
            StudyKind::Temporal,
            StudyKind::Decay,
        ]));
        let reference =
            proptest::sample::select(vec![ErrorReference::Auto, ErrorReference::Exact, ErrorReference::Successive]);
        let init = proptest::option::of(proptest::sample::select(vec![
            InitProjection::L2,
            InitProjection::Ritz,
            InitProjection::Interpolate,
            InitProjection::Zero,
        ]));
        let history = proptest::sample::select(vec![HistoryMode::Cached, HistoryMode::Deferred]);
        (
            (names, proptest::option::of(finite()), proptest::option::of(finite()), proptest::option::of(finite())),
            (proptest::option::of(finite()), 2usize..4096, finite(), finite(), proptest::option::of(finite())),
            (
                study,
                proptest::collection::vec(1usize..100_000, 0..6),
                0usize..1000,
                proptest::collection::vec(finite(), 0..6),
            ),
            (reference, proptest::option::of("[a-z0-9_./]{1,20}"), init, finite(), history),
        )
            .prop_map(
                |(
                    (problem, alpha1, alpha2, a),
                    (nu, n_cells, tau, t_final, t_eval),
                    (study, levels, decay_steps, decay_times),
                    (reference, output, init_projection, tol, history),
                )| RunConfig {
                    problem: problem.to_string(),
                    alpha1,
                    alpha2,
                    a,
                    nu,
                    n_cells,
                    tau,
                    t_final,
                    t_eval,
                    study,
                    levels,
                    decay_steps,
                    decay_times,
                    reference,
                    output: output.map(PathBuf::from),
                    init_projection,
                    tol,
                    history,
                },
            )
    }

    proptest! {
        #[test]
        fn printed_config_reparses_identically(c in config()) {
            let printed = c.to_string();
            prop_assert_eq!(RunConfig::parse(&printed).unwrap(), c);
        }
    }

    #[test]
    fn printed_keys_are_the_field_names() {
        let printed = RunConfig::default().to_string();
        let keys: Vec<&str> = printed.lines().map(|l| l.split_once('=').unwrap().0).collect();
        assert_eq!(keys, KEYS);
    }
}
