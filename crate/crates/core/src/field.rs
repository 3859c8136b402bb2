//! Scalar fields on the unit domain: initial data, sources and exact solutions.

use std::fmt;
use std::sync::Arc;

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> [f64; 2] + Send + Sync;

/// A real function on `[0,1]^d`, with an optional gradient and the
/// axis-aligned lines across which it may jump.
#[derive(Clone)]
pub struct ScalarField {
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
    breaks_x: Vec<f64>,
    breaks_y: Vec<f64>,
    zero: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("has_gradient", &self.gradient.is_some())
            .field("breaks_x", &self.breaks_x)
            .field("breaks_y", &self.breaks_y)
            .field("zero", &self.zero)
            .finish()
    }
}

impl ScalarField {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(f), gradient: None, breaks_x: Vec::new(), breaks_y: Vec::new(), zero: false }
    }

    pub fn zero() -> Self {
        let mut f = Self::new(|_| 0.0).with_gradient(|_| [0.0, 0.0]);
        f.zero = true;
        f
    }

    pub fn constant(c: f64) -> Self {
        if c == 0.0 {
            return Self::zero();
        }
        Self::new(move |_| c).with_gradient(|_| [0.0, 0.0])
    }

    /// Indicator of the open interval `(lo, hi)`.
    pub fn indicator_1d(lo: f64, hi: f64) -> Self {
        Self::new(move |p| if p[0] > lo && p[0] < hi { 1.0 } else { 0.0 }).with_breaks_x(vec![lo, hi])
    }

    /// Indicator of the open rectangle `(x0, x1) x (y0, y1)`.
    pub fn indicator_2d(x: (f64, f64), y: (f64, f64)) -> Self {
        Self::new(move |p| if p[0] > x.0 && p[0] < x.1 && p[1] > y.0 && p[1] < y.1 { 1.0 } else { 0.0 })
            .with_breaks_x(vec![x.0, x.1])
            .with_breaks_y(vec![y.0, y.1])
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_breaks_x(mut self, breaks: Vec<f64>) -> Self {
        self.breaks_x = breaks;
        self
    }

    pub fn with_breaks_y(mut self, breaks: Vec<f64>) -> Self {
        self.breaks_y = breaks;
        self
    }

    /// `c * self`, keeping gradient and breaks.
    pub fn scaled(&self, c: f64) -> Self {
        if self.zero || c == 0.0 {
            return Self::zero();
        }
        let v = Arc::clone(&self.value);
        let mut out = Self::new(move |p| c * v(p));
        if let Some(g) = &self.gradient {
            let g = Arc::clone(g);
            out = out.with_gradient(move |p| g(p).map(|d| c * d));
        }
        out.breaks_x = self.breaks_x.clone();
        out.breaks_y = self.breaks_y.clone();
        out
    }

    #[inline]
    pub fn eval(&self, p: &[f64]) -> f64 {
        (self.value)(p)
    }

    pub fn gradient(&self, p: &[f64]) -> Option<[f64; 2]> {
        self.gradient.as_ref().map(|g| g(p))
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn breaks_x(&self) -> &[f64] {
        &self.breaks_x
    }

    pub fn breaks_y(&self) -> &[f64] {
        &self.breaks_y
    }
}

/// A family of fields indexed by time.
pub type TimeField = Arc<dyn Fn(f64) -> ScalarField + Send + Sync>;

pub fn time_field(f: impl Fn(f64) -> ScalarField + Send + Sync + 'static) -> TimeField {
    Arc::new(f)
}

pub fn zero_time_field() -> TimeField {
    Arc::new(|_| ScalarField::zero())
}
