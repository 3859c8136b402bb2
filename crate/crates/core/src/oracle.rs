//! Reference solutions for 1D homogeneous problems: sine-series expansion of
//! the data and numerical Laplace inversion of each mode along the contour
//! made of two rays `arg z = ±θ` joined by the arc `|z| = κ`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::mesh::Dimension;
use crate::problems::ProblemSpec;
use crate::quadrature::gauss_legendre;

/// Imaginary part tolerated in an inverted mode, relative to the data size.
pub const IMAG_TOL: f64 = 1e-10;
pub const DEFAULT_THETA: f64 = 3.0 * PI / 4.0;
pub const DEFAULT_N_QUAD: usize = 300;
pub const MODES_SMOOTH: usize = 200;
pub const MODES_NONSMOOTH: usize = 2000;

const PANEL_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourParams {
    pub theta: f64,
    pub kappa: f64,
    /// Quadrature points on each of the three segments.
    pub n_quad: usize,
    pub r_max: f64,
}

/// Smallest admissible arc radius: singularities of the modal operators lie
/// inside `|z| ≤ (2|a|)^{1/α}` for `α ∈ {α1, α2}`.
pub fn min_kappa(alpha1: f64, alpha2: f64, a: f64) -> f64 {
    let alpha = alpha1.min(alpha2);
    2.0 * (2.0 * a.abs()).powf(1.0 / alpha)
}

impl ContourParams {
    pub fn new(alpha1: f64, alpha2: f64, a: f64, t: f64) -> Self {
        Self::with_theta(DEFAULT_THETA, alpha1, alpha2, a, t)
    }

    pub fn with_theta(theta: f64, alpha1: f64, alpha2: f64, a: f64, t: f64) -> Self {
        let kappa = (1.0 / t).max(min_kappa(alpha1, alpha2, a));
        Self { theta, kappa, n_quad: DEFAULT_N_QUAD, r_max: Self::truncation(theta, kappa, t) }
    }

    /// Ray end beyond which `|e^{zt}| < 1e-16` (with margin).
    pub fn truncation(theta: f64, kappa: f64, t: f64) -> f64 {
        kappa + 40.0 / (t * -theta.cos())
    }

    pub fn validate(&self, alpha1: f64, alpha2: f64, a: f64, t: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.theta > PI / 2.0 && self.theta < PI) {
            return bad(format!("contour angle {} must lie in (π/2, π)", self.theta));
        }
        let alpha_max = alpha1.max(alpha2);
        if self.theta * alpha_max >= PI {
            return bad(format!("contour angle {} too wide for α = {alpha_max}", self.theta));
        }
        if !(t > 0.0) {
            return bad(format!("t must be positive, got {t}"));
        }
        let kmin =
            min_kappa(alpha1, alpha2, a).max(2.0 * a.abs().powf(1.0 / alpha1)).max(2.0 * a.abs().powf(1.0 / alpha2));
        if self.kappa < 1.0 / t * (1.0 - 1e-12) || self.kappa < kmin {
            return bad(format!("kappa {} below the admissible bound {}", self.kappa, kmin.max(1.0 / t)));
        }
        if (self.r_max * t * self.theta.cos()).exp() >= 1e-16 || self.r_max <= self.kappa {
            return bad(format!("r_max {} too small for t = {t}", self.r_max));
        }
        if self.n_quad < PANEL_POINTS {
            return bad(format!("n_quad must be at least {PANEL_POINTS}"));
        }
        Ok(())
    }
}

/// Scalar solution operators of one eigenmode `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalOperators {
    pub alpha1: f64,
    pub alpha2: f64,
    pub a: f64,
    pub lambda: f64,
}

impl ModalOperators {
    /// `(h, h_{α1}, h_{α2})` at `z`.
    pub fn eval(&self, z: Complex64) -> (Complex64, Complex64, Complex64) {
        let p1 = z.powf(self.alpha1) + self.a + self.lambda;
        let p2 = z.powf(self.alpha2) + self.a + self.lambda;
        let h = (p1 * p2 - self.a * self.a).inv();
        (h, h * p2, h * p1)
    }

    /// Laplace transforms of the two components for data `(c1, c2)`.
    pub fn transform(&self, z: Complex64, c1: f64, c2: f64) -> (Complex64, Complex64) {
        let (h, h1, h2) = self.eval(z);
        let z1 = z.powf(self.alpha1 - 1.0);
        let z2 = z.powf(self.alpha2 - 1.0);
        (z1 * (h1 * c1 + h * (self.a * c2)), z2 * (h * (self.a * c1) + h2 * c2))
    }
}

/// Nodes `z_k` and weights `w_k` with `(1/2πi) ∫_Γ e^{zt} F(z) dz ≈ Σ w_k F(z_k)`.
#[derive(Debug, Clone)]
pub struct ContourRule {
    nodes: Vec<(Complex64, Complex64)>,
}

impl ContourRule {
    pub fn new(params: &ContourParams, t: f64) -> Self {
        let panels = (params.n_quad / PANEL_POINTS).max(1);
        let (gx, gw) = gauss_legendre(PANEL_POINTS);
        let mut nodes = Vec::with_capacity(3 * panels * PANEL_POINTS);
        let scale = Complex64::new(0.0, -1.0 / (2.0 * PI));
        let mut push = |z: Complex64, dz: Complex64| nodes.push((z, scale * dz * (z * t).exp()));
        let (theta, kappa) = (params.theta, params.kappa);
        let s_max = (params.r_max / kappa).ln();
        // rays: z = κ e^s e^{±iθ}, traversed from ∞e^{-iθ} in and out to ∞e^{iθ}
        for sign in [-1.0, 1.0] {
            let dir = Complex64::from_polar(1.0, sign * theta);
            for p in 0..panels {
                let (a, b) = (s_max * p as f64 / panels as f64, s_max * (p + 1) as f64 / panels as f64);
                for (x, w) in gx.iter().zip(&gw) {
                    let s = a + (b - a) * x;
                    let r = kappa * s.exp();
                    // incoming ray runs from large r to κ
                    push(dir * r, dir * (r * w * (b - a) * sign));
                }
            }
        }
        for p in 0..panels {
            let a = -theta + 2.0 * theta * p as f64 / panels as f64;
            let b = -theta + 2.0 * theta * (p + 1) as f64 / panels as f64;
            for (x, w) in gx.iter().zip(&gw) {
                let phi = a + (b - a) * x;
                let z = Complex64::from_polar(kappa, phi);
                push(z, Complex64::i() * z * (w * (b - a)));
            }
        }
        Self { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_k F(z_k)` for a pair-valued `F`.
    pub fn integrate(&self, f: impl Fn(Complex64) -> (Complex64, Complex64)) -> (Complex64, Complex64) {
        let mut acc = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for &(z, w) in &self.nodes {
            let (f1, f2) = f(z);
            acc.0 += w * f1;
            acc.1 += w * f2;
        }
        acc
    }
}

fn check_imaginary(u: (Complex64, Complex64), scale: f64) -> Result<(f64, f64)> {
    let residual = u.0.im.abs().max(u.1.im.abs());
    if !(residual <= IMAG_TOL * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::ImaginaryResidual { residual });
    }
    Ok((u.0.re, u.1.re))
}

fn mode_with_rule(ops: &ModalOperators, c1: f64, c2: f64, rule: &ContourRule) -> Result<(f64, f64)> {
    if c1 == 0.0 && c2 == 0.0 {
        return Ok((0.0, 0.0));
    }
    let u = rule.integrate(|z| ops.transform(z, c1, c2));
    check_imaginary(u, c1.abs() + c2.abs())
}

/// Time-domain amplitudes `(u1, u2)` at `t` of the mode with eigenvalue `λ`
/// and initial amplitudes `(c1, c2)`.
#[allow(clippy::too_many_arguments)]
pub fn modal_solution(
    lambda: f64,
    alpha1: f64,
    alpha2: f64,
    a: f64,
    c1: f64,
    c2: f64,
    t: f64,
    contour: &ContourParams,
) -> Result<(f64, f64)> {
    contour.validate(alpha1, alpha2, a, t)?;
    let ops = ModalOperators { alpha1, alpha2, a, lambda };
    mode_with_rule(&ops, c1, c2, &ContourRule::new(contour, t))
}

/// `∫_a^b f` by Gauss–Legendre panels, `panels` of them with `rule` points.
fn composite(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        s += rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(lo + h * x)).sum::<f64>() * h;
    }
    s
}

/// `c_j = ∫₀¹ f(x) √2 sin(jπx) dx` for `j = 1..=k`, integrating piecewise
/// between the field's breaks.
pub fn sine_coefficients(f: &ScalarField, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    if f.is_zero() || k == 0 {
        return out;
    }
    let mut cuts = vec![0.0];
    cuts.extend(f.breaks_x().iter().copied().filter(|&b| b > 0.0 && b < 1.0));
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (gx, gw) = gauss_legendre(16);
    let mut s = vec![0.0; k];
    for piece in cuts.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        let panels = ((k as f64 * (b - a)).ceil() as usize).max(4);
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            for (x, w) in gx.iter().zip(&gw) {
                let xq = a + h * (p as f64 + x);
                let fw = f.eval(&[xq]) * w * h * std::f64::consts::SQRT_2;
                if fw == 0.0 {
                    continue;
                }
                // sin((j+1)θ) = 2 cos θ sin(jθ) − sin((j−1)θ), re-seeded to limit drift
                let th = PI * xq;
                let c2 = 2.0 * th.cos();
                let (mut prev, mut cur) = (0.0, th.sin());
                for (j, sj) in s.iter_mut().enumerate() {
                    if j % 64 == 0 {
                        prev = (j as f64 * th).sin();
                        cur = ((j + 1) as f64 * th).sin();
                    }
                    *sj += fw * cur;
                    let next = c2 * cur - prev;
                    prev = cur;
                    cur = next;
                }
            }
        }
    }
    out.copy_from_slice(&s);
    out
}

/// Modal reference solution `G_i(x, t) = Σ_j u_{i,j}(t) √2 sin(jπx)`.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub t: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl OracleSolution {
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let mut g = (0.0, 0.0);
        for (j, (a, b)) in self.u1.iter().zip(&self.u2).enumerate() {
            let phi = std::f64::consts::SQRT_2 * ((j + 1) as f64 * PI * x).sin();
            g.0 += a * phi;
            g.1 += b * phi;
        }
        g
    }

    /// `(‖G1‖, ‖G2‖)` in `L2(0, 1)`, by Parseval.
    pub fn l2_norms(&self) -> (f64, f64) {
        let n = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
        (n(&self.u1), n(&self.u2))
    }

    pub fn fields(&self) -> (ScalarField, ScalarField) {
        let s = Arc::new(self.clone());
        let s2 = s.clone();
        (ScalarField::new(move |p| s.eval(p[0]).0), ScalarField::new(move |p| s2.eval(p[0]).1))
    }
}

/// Default mode count for the problem's data.
pub fn default_modes(problem: &ProblemSpec) -> usize {
    let rough = [&problem.g1_0, &problem.g2_0].iter().any(|f| !f.breaks_x().is_empty());
    if rough {
        MODES_NONSMOOTH
    } else {
        MODES_SMOOTH
    }
}

/// Reference solution of a 1D homogeneous problem at time `t` with `k`
/// modes; `contour` defaults to [`ContourParams::new`].
pub fn oracle_solution(
    problem: &ProblemSpec,
    k: usize,
    t: f64,
    contour: Option<ContourParams>,
) -> Result<OracleSolution> {
    if problem.dimension != Dimension::One || !problem.is_homogeneous() {
        return Err(Error::InvalidParameter("the spectral oracle needs a 1D homogeneous problem".into()));
    }
    let (alpha1, alpha2, a) = (problem.alpha1, problem.alpha2, problem.a);
    let contour = contour.unwrap_or_else(|| ContourParams::new(alpha1, alpha2, a, t));
    contour.validate(alpha1, alpha2, a, t)?;
    let c1 = sine_coefficients(&problem.g1_0, k);
    let c2 = sine_coefficients(&problem.g2_0, k);
    let rule = ContourRule::new(&contour, t);
    let modes: Vec<usize> = (0..k).collect();
    let amps = crate::par::map_collect(&modes, |&j| {
        let lambda = ((j + 1) as f64 * PI).powi(2);
        mode_with_rule(&ModalOperators { alpha1, alpha2, a, lambda }, c1[j], c2[j], &rule)
    });
    let amps = amps.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(OracleSolution { t, u1: amps.iter().map(|p| p.0).collect(), u2: amps.iter().map(|p| p.1).collect() })
}

/// Adaptive Gauss–Legendre by bisection, comparing 10- and 20-point rules.
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
    r10: &(Vec<f64>, Vec<f64>),
    r20: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let coarse = composite(f, a, b, 1, r10);
    let fine = composite(f, a, b, 1, r20);
    if (fine - coarse).abs() <= tol.max(8.0 * f64::EPSILON * fine.abs()) || depth == 0 {
        return fine;
    }
    let m = 0.5 * (a + b);
    adaptive(f, a, m, tol, depth - 1, r10, r20) + adaptive(f, m, b, tol, depth - 1, r10, r20)
}

/// Largest `|x|` for which the power series is used.
const ML_SERIES_LIMIT: f64 = 1.0;

/// One-parameter Mittag-Leffler function `E_α(x)` for `α ∈ (0, 1]` and
/// `−50 ≤ x ≤ 0`.
pub fn mittag_leffler(alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("Mittag-Leffler order must lie in (0, 1], got {alpha}")));
    }
    if !(-50.0..=0.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("Mittag-Leffler argument {x} outside [-50, 0]")));
    }
    if alpha == 1.0 {
        return Ok(x.exp());
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.abs() <= ML_SERIES_LIMIT {
        return Ok(ml_series(alpha, x));
    }
    Ok(ml_integral(alpha, -x))
}

/// `Σ x^k / Γ(αk + 1)` with Neumaier compensation.
fn ml_series(alpha: f64, x: f64) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for k in 0..10_000 {
        let arg = alpha * k as f64 + 1.0;
        let mag =
            if arg < 150.0 { x.abs().powi(k) / gamma(arg) } else { (k as f64 * x.abs().ln() - ln_gamma(arg)).exp() };
        let term = if k % 2 == 1 && x < 0.0 { -mag } else { mag };
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        if k > 2 && mag <= 1e-17 * (sum + comp).abs() {
            break;
        }
    }
    sum + comp
}

/// `E_α(−x) = (sin απ / απ) ∫₀^∞ e^{−(sx)^{1/α}} / (s² + 2s cos απ + 1) ds`,
/// split at `s = 1` with `s = 1/u` on the tail.
fn ml_integral(alpha: f64, x: f64) -> f64 {
    let c = (alpha * PI).cos();
    let p = 1.0 / alpha;
    let head = |s: f64| (-(s * x).powf(p)).exp() / (s * s + 2.0 * s * c + 1.0);
    let tail = |u: f64| if u == 0.0 { 0.0 } else { (-(x / u).powf(p)).exp() / (1.0 + 2.0 * u * c + u * u) };
    let (r10, r20) = (gauss_legendre(10), gauss_legendre(20));
    let i = adaptive(&head, 0.0, 1.0, 1e-17, 30, &r10, &r20) + adaptive(&tail, 0.0, 1.0, 1e-17, 30, &r10, &r20);
    (alpha * PI).sin() / (alpha * PI) * i
}
