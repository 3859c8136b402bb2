//! Acceptance suite: one PASS/FAIL line per criterion on stdout.
//!
//! Tests are named `cNN_…` so that a single-threaded run reports them in
//! order. Reference values are the published tables; temporal columns are
//! step counts `N` with error `‖G_{N/2} − G_N‖`, spatial columns are the
//! coarser of the two compared meshes.

// `!(x <= tol)` also fails on NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::Cell;
use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use ffpe::cq::CqWeights;
use ffpe::fem::{l2_error, l2_project, ritz_project, FemFunction, Reference};
use ffpe::field::ScalarField;
use ffpe::harness::{decay_study, spatial_study, temporal_study, ConvergenceTable, StudyOptions};
use ffpe::mesh::Mesh;
use ffpe::oracle::{oracle_solution, ContourParams};
use ffpe::problems::{self, Example6Variant, InitProjection};
use ffpe::stepper::{initial_state, run, HistoryMode, Retain, RunOptions};
use proptest::prelude::*;
use statrs::function::gamma::{gamma, ln_gamma};

const ERR_TOL_REL: f64 = 0.05;
const RATE_TOL_1: f64 = 0.1;
const RATE_TOL_TIGHT: f64 = 0.05;
const RATE_TOL_2D_SPATIAL: f64 = 0.1;
const RATE_TOL_2D_TEMPORAL: f64 = 0.05;
const RUNTIME_1D: Duration = Duration::from_secs(5 * 60);
const RUNTIME_2D: Duration = Duration::from_secs(30 * 60);
const CQ_DIRECT_TOL: f64 = 1e-14;
const CQ_SEMIGROUP_TOL: f64 = 1e-12;
const DEGENERATE_TOL: f64 = 1e-13;
const ORACLE_ORDER_TOL: f64 = 0.15;
const CONTOUR_DRIFT_TOL: f64 = 1e-9;
const PROJECTION_ORDER_TOL: f64 = 0.05;

fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{} criterion {id:>2}: {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
}

/// Reference row of a published table; `None` skips that comparison.
struct Expected<'a> {
    label: &'a str,
    e1: Option<&'a [f64]>,
    r1: &'a [f64],
    e2: Option<&'a [f64]>,
    r2: &'a [f64],
}

fn compare(t: &ConvergenceTable, exp: &Expected<'_>, rate_tol: f64, notes: &mut Vec<String>) -> bool {
    let mut ok = true;
    let mut errs = |got: &[f64], want: Option<&[f64]>, which: &str| {
        if let Some(want) = want {
            for (g, w) in got.iter().zip(want) {
                let rel = (g - w).abs() / w;
                if !(rel <= ERR_TOL_REL) {
                    ok = false;
                    notes.push(format!("{} {which} err {g:.4e} vs {w:.4e} ({:.1}%)", exp.label, 100.0 * rel));
                }
            }
        }
    };
    errs(&t.errors_g1(), exp.e1, "G1");
    errs(&t.errors_g2(), exp.e2, "G2");
    for (got, want, which) in [(t.rates_g1(), exp.r1, "G1"), (t.rates_g2(), exp.r2, "G2")] {
        if got.len() != want.len() {
            ok = false;
            notes.push(format!("{} {which}: {} rates vs {}", exp.label, got.len(), want.len()));
        }
        for (g, w) in got.iter().zip(want) {
            if !((g - w).abs() <= rate_tol) {
                ok = false;
                notes.push(format!("{} {which} rate {g:.4} vs {w:.4}", exp.label));
            }
        }
    }
    ok
}

fn summary(t: &ConvergenceTable) -> String {
    let f = |v: Vec<f64>, p: usize| v.iter().map(|x| format!("{x:.p$e}")).collect::<Vec<_>>().join(" ");
    let r = |v: Vec<f64>| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    format!("E1[{}] r1[{}] E2[{}] r2[{}]", f(t.errors_g1(), 3), r(t.rates_g1()), f(t.errors_g2(), 3), r(t.rates_g2()))
}

fn finish(id: u32, title: &str, ok: bool, detail: String, notes: Vec<String>) {
    let detail = if notes.is_empty() { detail } else { format!("{detail}; {}", notes.join("; ")) };
    report(id, title, ok, &detail);
    assert!(ok, "criterion {id} failed: {detail}");
}

#[test]
fn c01_manufactured_spatial_table() {
    let opts = StudyOptions::default();
    let rows = [
        (
            (0.1, 0.2),
            Expected {
                label: "(0.1,0.2)",
                e1: Some(&[2.417e-4, 5.873e-5, 1.316e-5, 2.406e-6]),
                r1: &[2.0409, 2.1574, 2.4519],
                e2: Some(&[2.694e-4, 6.665e-5, 1.585e-5, 3.360e-6]),
                r2: &[2.0149, 2.0719, 2.2380],
            },
        ),
        (
            (0.8, 0.9),
            Expected {
                label: "(0.8,0.9)",
                e1: Some(&[1.924e-4, 4.745e-5, 1.142e-5, 2.520e-6]),
                r1: &[2.0197, 2.0551, 2.1802],
                e2: Some(&[2.339e-4, 5.831e-5, 1.448e-5, 3.528e-6]),
                r2: &[2.0040, 2.0101, 2.0370],
            },
        ),
    ];
    let start = Instant::now();
    let (mut ok, mut notes, mut detail) = (true, Vec::new(), Vec::new());
    for ((a1, a2), exp) in rows {
        let p = problems::example1(1.01).with_alphas(a1, a2);
        let t = spatial_study(&p, &[8, 16, 32, 64], 0.1 / 1600.0, 0.1, &opts).unwrap();
        ok &= compare(&t, &exp, RATE_TOL_1, &mut notes);
        detail.push(format!("{} {}", exp.label, summary(&t)));
    }
    let elapsed = start.elapsed();
    if elapsed > RUNTIME_1D {
        ok = false;
        notes.push(format!("took {elapsed:.0?}"));
    }
    detail.push(format!("{elapsed:.1?}"));
    finish(1, "manufactured spatial", ok, detail.join(" | "), notes);
}

#[test]
fn c02_manufactured_temporal_table() {
    let p = problems::example1(1.01).with_alphas(0.4, 0.6);
    let t = temporal_study(&p, 256, &[100, 200, 400, 800, 1600], 0.1, &StudyOptions::default()).unwrap();
    let exp = Expected {
        label: "(0.4,0.6)",
        e1: Some(&[4.254e-5, 2.180e-5, 1.105e-5, 5.538e-6, 2.727e-6]),
        r1: &[0.9647, 0.9797, 0.9969, 1.0219],
        e2: Some(&[1.512e-5, 7.598e-6, 3.767e-6, 1.830e-6, 8.611e-7]),
        r2: &[0.9930, 1.0123, 1.0417, 1.0874],
    };
    let mut notes = Vec::new();
    let ok = compare(&t, &exp, RATE_TOL_TIGHT, &mut notes);
    finish(2, "manufactured temporal", ok, summary(&t), notes);
}

#[test]
fn c03_smooth_homogeneous_rates() {
    let p = problems::example2().with_alphas(0.45, 0.55);
    let opts = StudyOptions::default();
    let s = spatial_study(&p, &[8, 16, 32, 64], 0.01 / 1600.0, 0.01, &opts).unwrap();
    let t = temporal_study(&p, 256, &[100, 200, 400, 800, 1600], 0.01, &opts).unwrap();
    let spatial =
        Expected { label: "spatial", e1: None, r1: &[1.9815, 1.9954, 1.9989], e2: None, r2: &[1.9840, 1.9960, 1.9990] };
    let temporal = Expected {
        label: "temporal",
        e1: None,
        r1: &[1.0215, 1.0107, 1.0053, 1.0027],
        e2: None,
        r2: &[1.0210, 1.0104, 1.0052, 1.0026],
    };
    let mut notes = Vec::new();
    let ok = compare(&s, &spatial, RATE_TOL_TIGHT, &mut notes) & compare(&t, &temporal, RATE_TOL_TIGHT, &mut notes);
    finish(3, "smooth homogeneous rates", ok, format!("spatial {} | temporal {}", summary(&s), summary(&t)), notes);
}

#[test]
fn c04_nonsmooth_homogeneous() {
    let p = problems::example3().with_alphas(0.4, 0.6);
    let opts = StudyOptions::default();
    let s = spatial_study(&p, &[8, 16, 32, 64], 0.01 / 1600.0, 0.01, &opts).unwrap();
    let t = temporal_study(&p, 256, &[100, 200, 400, 800, 1600], 0.01, &opts).unwrap();
    let spatial = Expected {
        label: "spatial",
        e1: Some(&[1.989e-3, 4.959e-4, 1.239e-4, 3.097e-5]),
        r1: &[2.0042, 2.0009, 2.0002],
        e2: Some(&[3.609e-3, 9.007e-4, 2.251e-4, 5.627e-5]),
        r2: &[2.0025, 2.0006, 2.0002],
    };
    let temporal = Expected {
        label: "temporal",
        e1: None,
        r1: &[1.0073, 1.0037, 1.0018, 1.0009],
        e2: None,
        r2: &[1.0060, 1.0030, 1.0015, 1.0007],
    };
    let mut notes = Vec::new();
    let ok = compare(&s, &spatial, RATE_TOL_TIGHT, &mut notes) & compare(&t, &temporal, RATE_TOL_TIGHT, &mut notes);
    finish(4, "nonsmooth homogeneous", ok, format!("spatial {} | temporal {}", summary(&s), summary(&t)), notes);
}

#[test]
fn c05_two_dimensional_rates() {
    let spatial_opts = StudyOptions::default();
    let temporal_opts = StudyOptions { history: HistoryMode::Cached, ..Default::default() };
    let levels = [8, 16, 32, 64];
    let steps = [20, 40, 80, 160, 320];
    let (mut ok, mut notes, mut detail) = (true, Vec::new(), Vec::new());
    let mut slowest = Duration::ZERO;
    let cases = [
        (
            problems::example4().with_alphas(0.1, 0.2),
            Expected {
                label: "smooth spatial",
                e1: None,
                r1: &[2.3199, 2.1779, 2.0973],
                e2: None,
                r2: &[2.4290, 2.1757, 2.0931],
            },
            Expected {
                label: "smooth temporal",
                e1: None,
                r1: &[1.0236, 1.0118, 1.0059, 1.0030],
                e2: None,
                r2: &[1.0301, 1.0150, 1.0075, 1.0037],
            },
        ),
        (
            problems::example5().with_alphas(0.1, 0.2),
            Expected {
                label: "nonsmooth spatial",
                e1: None,
                r1: &[2.2195, 2.1714, 2.0849],
                e2: None,
                r2: &[2.2287, 2.1701, 2.0849],
            },
            Expected {
                label: "nonsmooth temporal",
                e1: None,
                r1: &[1.0236, 1.0119, 1.0059, 1.0030],
                e2: None,
                r2: &[1.0299, 1.0149, 1.0075, 1.0037],
            },
        ),
    ];
    for (p, spatial, temporal) in cases {
        let s = spatial_study(&p, &levels, 0.1 / 1600.0, 0.1, &spatial_opts).unwrap();
        ok &= compare(&s, &spatial, RATE_TOL_2D_SPATIAL, &mut notes);
        let start = Instant::now();
        let t = temporal_study(&p, 256, &steps, 0.1, &temporal_opts).unwrap();
        let elapsed = start.elapsed();
        slowest = slowest.max(elapsed);
        ok &= compare(&t, &temporal, RATE_TOL_2D_TEMPORAL, &mut notes);
        detail.push(format!(
            "{}: {} | {}: {} ({:.0?})",
            spatial.label,
            summary(&s),
            temporal.label,
            summary(&t),
            elapsed
        ));
    }
    if slowest > RUNTIME_2D {
        ok = false;
        notes.push(format!("h=1/256 temporal study took {slowest:.0?}"));
    }
    finish(5, "2D spot rows", ok, detail.join(" | "), notes);
}

#[test]
fn c06_inhomogeneous_2d() {
    let opts = StudyOptions::default();
    let ps = problems::example6(Example6Variant::Spatial).with_alphas(0.8, 0.9);
    let s = spatial_study(&ps, &[8, 16, 32, 64], 0.1 / 1600.0, 0.1, &opts).unwrap();
    let pt = problems::example6(Example6Variant::Temporal).with_alphas(0.8, 0.9);
    let t = temporal_study(&pt, 256, &[80, 160, 320, 640, 1280], 0.1, &opts).unwrap();
    let spatial = Expected {
        label: "spatial",
        e1: Some(&[2.643e-3, 5.625e-4, 1.268e-4, 2.984e-5]),
        r1: &[2.2321, 2.1492, 2.0871],
        e2: Some(&[9.720e-3, 1.948e-3, 4.343e-4, 1.021e-4]),
        r2: &[2.3190, 2.1650, 2.0895],
    };
    let temporal = Expected {
        label: "temporal",
        e1: Some(&[2.791e-4, 1.358e-4, 6.627e-5, 3.244e-5, 1.592e-5]),
        r1: &[1.0395, 1.0349, 1.0308, 1.0272],
        e2: Some(&[8.463e-5, 4.176e-5, 2.064e-5, 1.022e-5, 5.066e-6]),
        r2: &[1.0192, 1.0167, 1.0143, 1.0121],
    };
    let mut notes = Vec::new();
    let ok = compare(&s, &spatial, RATE_TOL_1, &mut notes) & compare(&t, &temporal, RATE_TOL_1, &mut notes);
    finish(6, "2D inhomogeneous", ok, format!("spatial {} | temporal {}", summary(&s), summary(&t)), notes);
}

#[test]
fn c07_small_time_decay() {
    let times = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let opts = StudyOptions::default();
    let t5 = decay_study(&problems::example2_decay1(), 10, &times, 256, &opts).unwrap();
    let t6 = decay_study(&problems::example2_decay2(), 10, &times, 256, &opts).unwrap();
    let (r5_1, r5_2, r6_2) =
        (*t5.rates_g1().last().unwrap(), *t5.rates_g2().last().unwrap(), *t6.rates_g2().last().unwrap());
    let ok = (0.61..=0.71).contains(&r5_1) && (-0.05..=0.05).contains(&r5_2) && (0.21..=0.31).contains(&r6_2);
    let detail = format!(
        "first data: rate_G1 {r5_1:.4} in [0.61,0.71], rate_G2 {r5_2:.4} in [-0.05,0.05]; second data: rate_G2 {r6_2:.4} in [0.21,0.31] | {} | {}",
        summary(&t5),
        summary(&t6)
    );
    finish(7, "small-time decay", ok, detail, Vec::new());
}

/// `(−1)^j C(β, j)` from the Gamma function.
fn binomial_weight(beta: f64, j: usize) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let mag = (ln_gamma(j as f64 - beta) - ln_gamma(j as f64 + 1.0)).exp() * beta / gamma(1.0 - beta);
    -mag
}

#[test]
fn c08_cq_weight_identities() {
    let mut worst_direct: f64 = 0.0;
    for beta in [0.1, 0.5, 0.9] {
        let w = CqWeights::new(beta, 1.0, 1600).unwrap();
        for (j, g) in w.g().iter().enumerate() {
            worst_direct = worst_direct.max((g - binomial_weight(beta, j)).abs());
        }
    }
    // (1 − ζ)^β1 (1 − ζ)^β2 = (1 − ζ)^{β1+β2}, also after τ scaling
    let mut worst_semigroup: f64 = 0.0;
    let tau = 1e-3;
    for (b1, b2) in [(0.1, 0.5), (0.3, 0.7), (0.45, 0.45), (0.2, 0.0)] {
        let (w1, w2, w12) = (
            CqWeights::new(b1, tau, 1600).unwrap(),
            CqWeights::new(b2, tau, 1600).unwrap(),
            CqWeights::new(b1 + b2, tau, 1600).unwrap(),
        );
        for n in 0..1600 {
            let conv: f64 = (0..=n).map(|k| w1.d()[k] * w2.d()[n - k]).sum();
            let scale = w12.d()[0].abs();
            worst_semigroup = worst_semigroup.max((conv - w12.d()[n]).abs() / scale);
        }
    }
    let ok = worst_direct <= CQ_DIRECT_TOL && worst_semigroup <= CQ_SEMIGROUP_TOL;
    let detail = format!("direct binomial max diff {worst_direct:.2e}, semigroup max rel diff {worst_semigroup:.2e}");
    finish(8, "CQ weight identities", ok, detail, Vec::new());
}

/// Tridiagonal solve for the 1D backward-Euler heat step.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let (mut c, mut d) = (vec![0.0; n], vec![0.0; n]);
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Largest per-step deviation from a standalone heat solver, relative to the
/// initial data.
fn degeneration_gap(n_cells: usize, tau: f64, steps: usize, k1: f64, k2: f64) -> f64 {
    let mesh = Mesh::interval(n_cells).unwrap();
    let g1 = ScalarField::new(move |p| (k1 * PI * p[0]).sin() + p[0] * (1.0 - p[0]));
    let g2 = ScalarField::new(move |p| (k2 * PI * p[0]).sin());
    let mut p = problems::example2().with_initial_data(g1, g2).with_alphas(1.0, 1.0).with_coupling(0.0);
    p.init_projection = InitProjection::L2;
    let opts = RunOptions { history: HistoryMode::Deferred, tol: 1e-14, retain: Retain::All };
    let states = run(&p, &mesh, tau, steps, InitProjection::L2, opts).unwrap();
    let init = initial_state(&p, &mesh, InitProjection::L2).unwrap();
    let h = 1.0 / n_cells as f64;
    let m = n_cells - 1;
    let (md, mo) = (4.0 * h / 6.0, h / 6.0);
    let (sd, so) = (2.0 / h, -1.0 / h);
    let mass = |v: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| md * v[i] + if i > 0 { mo * v[i - 1] } else { 0.0 } + if i + 1 < m { mo * v[i + 1] } else { 0.0 })
            .collect()
    };
    let diag = vec![md / tau + sd; m];
    let off = vec![mo / tau + so; m];
    let mut worst: f64 = 0.0;
    for (comp, start) in [(0, init.g1), (1, init.g2)] {
        // the data are O(1); deviations are measured against their size
        let scale = start.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut u = start;
        for s in &states[1..] {
            let rhs: Vec<f64> = mass(&u).iter().map(|v| v / tau).collect();
            u = thomas(&off, &diag, &off, &rhs);
            let got = if comp == 0 { &s.g1 } else { &s.g2 };
            let diff = got.iter().zip(&u).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            worst = worst.max(diff / scale);
        }
    }
    worst
}

#[test]
fn c09_heat_degeneration() {
    let worst = Cell::new(0.0f64);
    let mut runner =
        proptest::test_runner::TestRunner::new(proptest::test_runner::Config { cases: 32, ..Default::default() });
    let strategy = (4usize..64, 1e-4..0.1f64, 1usize..30, 1u32..6, 1u32..6);
    let result = runner.run(&strategy, |(n, tau, steps, k1, k2)| {
        let gap = degeneration_gap(n, tau, steps, k1 as f64, k2 as f64);
        worst.set(worst.get().max(gap));
        prop_assert!(gap <= DEGENERATE_TOL, "n={} tau={} steps={}: {:e}", n, tau, steps, gap);
        Ok(())
    });
    let ok = result.is_ok();
    let detail = match &result {
        Ok(()) => format!("32 random cases, max per-step deviation {:.2e} of the data size", worst.get()),
        Err(e) => format!("{e}"),
    };
    finish(9, "backward-Euler degeneration", ok, detail, Vec::new());
}

#[test]
fn c10_spectral_oracle_cross_check() {
    let p = problems::example2().with_alphas(0.4, 0.6).with_coupling(1.0);
    let (t, tau): (f64, f64) = (0.01, 1e-5);
    let steps = (t / tau).round() as usize;
    let oracle = oracle_solution(&p, 200, t, None).unwrap();
    let (o1, o2) = oracle.fields();
    let mut errs = Vec::new();
    // at 1/h = 64 the τ = 1e-5 time error is already comparable to the space error
    for n in [8, 16, 32] {
        let mesh = Mesh::interval(n).unwrap();
        let s = run(&p, &mesh, tau, steps, p.init_projection, RunOptions::default()).unwrap().pop().unwrap();
        let u1 = FemFunction::new(&mesh, s.g1).unwrap();
        let u2 = FemFunction::new(&mesh, s.g2).unwrap();
        let e1 = l2_error(&mesh, &u1, Reference::Field(&o1)).unwrap();
        let e2 = l2_error(&mesh, &u2, Reference::Field(&o2)).unwrap();
        errs.push((e1, e2));
    }
    let orders: Vec<(f64, f64)> =
        errs.windows(2).map(|w| ((w[0].0 / w[1].0).log2(), (w[0].1 / w[1].1).log2())).collect();
    let orders_ok =
        orders.iter().all(|(a, b)| (a - 2.0).abs() <= ORACLE_ORDER_TOL && (b - 2.0).abs() <= ORACLE_ORDER_TOL);
    let other = oracle_solution(&p, 200, t, Some(ContourParams::with_theta(2.0 * PI / 3.0, 0.4, 0.6, 1.0, t))).unwrap();
    let drift = (0..=100)
        .map(|i| {
            let x = i as f64 / 100.0;
            let (a, b) = (oracle.eval(x), other.eval(x));
            (a.0 - b.0).abs().max((a.1 - b.1).abs())
        })
        .fold(0.0f64, f64::max);
    let ok = orders_ok && drift < CONTOUR_DRIFT_TOL;
    let detail = format!(
        "errors {:?}, orders {:?}, contour drift {drift:.2e}",
        errs.iter().map(|(a, b)| format!("{a:.3e}/{b:.3e}")).collect::<Vec<_>>(),
        orders.iter().map(|(a, b)| format!("{a:.3}/{b:.3}")).collect::<Vec<_>>()
    );
    finish(10, "spectral oracle cross-check", ok, detail, Vec::new());
}

#[test]
fn c11_projection_rates() {
    let f = ScalarField::new(|p| (PI * p[0]).sin()).with_gradient(|p| [PI * (PI * p[0]).cos(), 0.0]);
    let levels = [8, 16, 32, 64, 128];
    let mut e_l2 = Vec::new();
    let mut e_ritz = Vec::new();
    for n in levels {
        let mesh = Mesh::interval(n).unwrap();
        e_l2.push(l2_error(&mesh, &l2_project(&mesh, &f).unwrap(), Reference::Field(&f)).unwrap());
        e_ritz.push(l2_error(&mesh, &ritz_project(&mesh, &f).unwrap(), Reference::Field(&f)).unwrap());
    }
    let order = |e: &[f64]| e.windows(2).map(|w| (w[0] / w[1]).log2()).collect::<Vec<_>>();
    let (o_l2, o_ritz) = (order(&e_l2), order(&e_ritz));
    let ok = o_l2.iter().chain(&o_ritz).all(|o| (o - 2.0).abs() <= PROJECTION_ORDER_TOL);
    let detail = format!("L2 orders {o_l2:.4?}, Ritz orders {o_ritz:.4?}");
    finish(11, "projection rates", ok, detail, Vec::new());
}
