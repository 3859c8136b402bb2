//! Catalog of the benchmark problems, addressable by name.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::field::{time_field, zero_time_field, ScalarField, TimeField};
use crate::mesh::Dimension;

/// How the initial FE state is obtained from the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitProjection {
    L2,
    Ritz,
    /// Nodal interpolation.
    Interpolate,
    Zero,
}

impl FromStr for InitProjection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Self::L2),
            "ritz" => Ok(Self::Ritz),
            "interpolate" => Ok(Self::Interpolate),
            "zero" => Ok(Self::Zero),
            other => Err(Error::Config(format!(
                "unknown init_projection `{other}` (expected L2, Ritz, interpolate or zero)"
            ))),
        }
    }
}

impl fmt::Display for InitProjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L2 => "L2",
            Self::Ritz => "Ritz",
            Self::Interpolate => "interpolate",
            Self::Zero => "zero",
        })
    }
}

type Rebuild = Arc<dyn Fn(&ProblemSpec) -> ProblemSpec + Send + Sync>;

/// A complete problem instance of the coupled two-state system.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub alpha1: f64,
    pub alpha2: f64,
    pub a: f64,
    pub dimension: Dimension,
    pub g1_0: ScalarField,
    pub g2_0: ScalarField,
    pub f1: TimeField,
    pub f2: TimeField,
    pub exact: Option<(TimeField, TimeField)>,
    pub init_projection: InitProjection,
    homogeneous: bool,
    /// Rebuilds data that depends on (α1, α2, a), e.g. manufactured sources.
    rebuild: Option<Rebuild>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("alpha1", &self.alpha1)
            .field("alpha2", &self.alpha2)
            .field("a", &self.a)
            .field("dimension", &self.dimension)
            .field("has_exact", &self.exact.is_some())
            .field("init_projection", &self.init_projection)
            .finish()
    }
}

impl ProblemSpec {
    /// Homogeneous problem with the given initial data.
    pub fn homogeneous(
        name: &str,
        dimension: Dimension,
        (alpha1, alpha2): (f64, f64),
        a: f64,
        g1_0: ScalarField,
        g2_0: ScalarField,
        init_projection: InitProjection,
    ) -> Self {
        Self {
            name: name.to_string(),
            alpha1,
            alpha2,
            a,
            dimension,
            g1_0,
            g2_0,
            f1: zero_time_field(),
            f2: zero_time_field(),
            exact: None,
            init_projection,
            homogeneous: true,
            rebuild: None,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn with_alphas(&self, alpha1: f64, alpha2: f64) -> Self {
        let mut p = self.clone();
        p.alpha1 = alpha1;
        p.alpha2 = alpha2;
        p.refresh()
    }

    pub fn with_coupling(&self, a: f64) -> Self {
        let mut p = self.clone();
        p.a = a;
        p.refresh()
    }

    pub fn with_initial_data(&self, g1_0: ScalarField, g2_0: ScalarField) -> Self {
        let mut p = self.clone();
        p.g1_0 = g1_0;
        p.g2_0 = g2_0;
        p
    }

    fn refresh(self) -> Self {
        match self.rebuild.clone() {
            Some(f) => f(&self),
            None => self,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, al) in [self.alpha1, self.alpha2].into_iter().enumerate() {
            if !(al > 0.0 && al <= 1.0) {
                return Err(Error::InvalidParameter(format!("alpha{} must lie in (0, 1], got {al}", k + 1)));
            }
        }
        if !self.a.is_finite() {
            return Err(Error::InvalidParameter("coupling a must be finite".into()));
        }
        if self.init_projection == InitProjection::Ritz && !(self.g1_0.has_gradient() && self.g2_0.has_gradient()) {
            return Err(Error::MissingGradient);
        }
        Ok(())
    }
}

const EXAMPLE1_NU: f64 = 1.01;

/// Manufactured solution `(t^ν x(1−x), t^ν x²(1−x))` with `a = 2`. Sources
/// are generated from the strong form using
/// `D^{1−α} t^ν = Γ(1+ν)/Γ(ν+α) t^{ν+α−1}`.
pub fn example1(nu: f64) -> ProblemSpec {
    let mut p = ProblemSpec::homogeneous(
        "example1",
        Dimension::One,
        (0.1, 0.2),
        2.0,
        ScalarField::zero(),
        ScalarField::zero(),
        InitProjection::Zero,
    );
    p.homogeneous = false;
    p.rebuild = Some(Arc::new(move |p: &ProblemSpec| example1_sources(p, nu)));
    example1_sources(&p, nu)
}

fn example1_sources(base: &ProblemSpec, nu: f64) -> ProblemSpec {
    let mut p = base.clone();
    let (al1, al2, a) = (p.alpha1, p.alpha2, p.a);
    let c1 = gamma(1.0 + nu) / gamma(nu + al1);
    let c2 = gamma(1.0 + nu) / gamma(nu + al2);
    let x1 = |x: f64| x * (1.0 - x);
    let x2 = |x: f64| x * x * (1.0 - x);
    // −X1'' = 2, −X2'' = 6x − 2
    p.f1 = time_field(move |t| {
        let (dt, r1, r2) = (nu * t.powf(nu - 1.0), c1 * t.powf(nu + al1 - 1.0), c2 * t.powf(nu + al2 - 1.0));
        ScalarField::new(move |q| {
            let x = q[0];
            dt * x1(x) + a * r1 * x1(x) + r1 * 2.0 - a * r2 * x2(x)
        })
    });
    p.f2 = time_field(move |t| {
        let (dt, r1, r2) = (nu * t.powf(nu - 1.0), c1 * t.powf(nu + al1 - 1.0), c2 * t.powf(nu + al2 - 1.0));
        ScalarField::new(move |q| {
            let x = q[0];
            dt * x2(x) + a * r2 * x2(x) + r2 * (6.0 * x - 2.0) - a * r1 * x1(x)
        })
    });
    p.exact = Some((
        time_field(move |t| {
            let s = t.powf(nu);
            ScalarField::new(move |q| s * x1(q[0]))
        }),
        time_field(move |t| {
            let s = t.powf(nu);
            ScalarField::new(move |q| s * x2(q[0]))
        }),
    ));
    p
}

pub fn quadratic_bump() -> ScalarField {
    ScalarField::new(|p| p[0] * (1.0 - p[0])).with_gradient(|p| [1.0 - 2.0 * p[0], 0.0])
}

pub fn sine_mode() -> ScalarField {
    ScalarField::new(|p| (PI * p[0]).sin()).with_gradient(|p| [PI * (PI * p[0]).cos(), 0.0])
}

/// Smooth 1D data `(x(1−x), sin(πx))`, `a = −10`.
pub fn example2() -> ProblemSpec {
    ProblemSpec::homogeneous(
        "example2",
        Dimension::One,
        (0.45, 0.55),
        -10.0,
        quadratic_bump(),
        sine_mode(),
        InitProjection::Ritz,
    )
}

/// Example 2 with data `(0, sin(πx))` and `α = (0.3, 0.7)`, for small-time decay.
pub fn example2_decay1() -> ProblemSpec {
    let mut p = example2().with_alphas(0.3, 0.7).with_initial_data(ScalarField::zero(), sine_mode());
    p.name = "example2-decay1".into();
    p
}

/// Example 2 with data `(x(1−x), 0)` and `α = (0.3, 0.7)`.
pub fn example2_decay2() -> ProblemSpec {
    let mut p = example2().with_alphas(0.3, 0.7).with_initial_data(quadratic_bump(), ScalarField::zero());
    p.name = "example2-decay2".into();
    p
}

/// Nonsmooth 1D data `(χ_(3/4,1), χ_(0,1/4))`, `a = 10`.
pub fn example3() -> ProblemSpec {
    ProblemSpec::homogeneous(
        "example3",
        Dimension::One,
        (0.4, 0.6),
        10.0,
        ScalarField::indicator_1d(0.75, 1.0),
        ScalarField::indicator_1d(0.0, 0.25),
        InitProjection::L2,
    )
}

/// Smooth 2D data `(x(1−x)y(1−y), x²(1−x)y(1−y)²)`, `a = −2`.
pub fn example4() -> ProblemSpec {
    let g1 = ScalarField::new(|p| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])).with_gradient(|p| {
        let (x, y) = (p[0], p[1]);
        [(1.0 - 2.0 * x) * y * (1.0 - y), x * (1.0 - x) * (1.0 - 2.0 * y)]
    });
    let g2 = ScalarField::new(|p| {
        let (x, y) = (p[0], p[1]);
        x * x * (1.0 - x) * y * (1.0 - y) * (1.0 - y)
    })
    .with_gradient(|p| {
        let (x, y) = (p[0], p[1]);
        [(2.0 * x - 3.0 * x * x) * y * (1.0 - y) * (1.0 - y), x * x * (1.0 - x) * (1.0 - y) * (1.0 - 3.0 * y)]
    });
    ProblemSpec::homogeneous("example4", Dimension::Two, (0.1, 0.2), -2.0, g1, g2, InitProjection::Ritz)
}

/// Nonsmooth 2D indicator data, `a = 1`.
pub fn example5() -> ProblemSpec {
    ProblemSpec::homogeneous(
        "example5",
        Dimension::Two,
        (0.1, 0.2),
        1.0,
        ScalarField::indicator_2d((0.5, 1.0), (0.0, 0.75)),
        ScalarField::indicator_2d((0.0, 0.75), (0.5, 1.0)),
        InitProjection::L2,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example6Variant {
    Spatial,
    Temporal,
}

impl FromStr for Example6Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(Self::Spatial),
            "temporal" => Ok(Self::Temporal),
            other => Err(Error::UnknownProblem(format!("example6-{other}"))),
        }
    }
}

/// Inhomogeneous 2D problem with vanishing initial data, `a = 0.5`.
pub fn example6(variant: Example6Variant) -> ProblemSpec {
    let (name, f1, f2): (&str, TimeField, TimeField) = match variant {
        Example6Variant::Spatial => (
            "example6-spatial",
            time_field(|t| {
                let s = t.powf(0.2);
                ScalarField::new(move |p| s * p[0] * p[1])
            }),
            time_field(|t| ScalarField::constant(t.powf(0.3))),
        ),
        Example6Variant::Temporal => (
            "example6-temporal",
            time_field(|t| ScalarField::indicator_2d((0.0, 0.5), (0.25, 1.0)).scaled(10.0 * t.powf(0.2))),
            time_field(|t| ScalarField::indicator_2d((0.5, 1.0), (0.0, 0.25)).scaled(10.0 * t.powf(0.3))),
        ),
    };
    let mut p = ProblemSpec::homogeneous(
        name,
        Dimension::Two,
        (0.8, 0.9),
        0.5,
        ScalarField::zero(),
        ScalarField::zero(),
        InitProjection::Zero,
    );
    p.f1 = f1;
    p.f2 = f2;
    p.homogeneous = false;
    p
}

/// Zero data and zero sources in 1D.
pub fn zero_problem() -> ProblemSpec {
    ProblemSpec::homogeneous(
        "zero",
        Dimension::One,
        (0.5, 0.5),
        1.0,
        ScalarField::zero(),
        ScalarField::zero(),
        InitProjection::Zero,
    )
}

pub const PROBLEM_NAMES: [&str; 10] = [
    "example1",
    "example2",
    "example2-decay1",
    "example2-decay2",
    "example3",
    "example4",
    "example5",
    "example6-spatial",
    "example6-temporal",
    "zero",
];

pub fn by_name(name: &str) -> Result<ProblemSpec> {
    match name {
        "example1" => Ok(example1(EXAMPLE1_NU)),
        "example2" => Ok(example2()),
        "example2-decay1" => Ok(example2_decay1()),
        "example2-decay2" => Ok(example2_decay2()),
        "example3" => Ok(example3()),
        "example4" => Ok(example4()),
        "example5" => Ok(example5()),
        "zero" => Ok(zero_problem()),
        other => match other.strip_prefix("example6-") {
            Some(v) => Ok(example6(v.parse()?)),
            None => Err(Error::UnknownProblem(other.to_string())),
        },
    }
}
