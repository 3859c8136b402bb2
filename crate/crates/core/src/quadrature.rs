//! Quadrature rules and element-level quadrature point generation.

use crate::field::ScalarField;
use crate::mesh::{Dimension, Mesh};

/// Gauss–Legendre nodes and weights on `[0, 1]`, by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Four-point Gauss–Legendre rule on `[0, 1]` (exact through degree 7).
pub fn gauss4() -> ([f64; 4], [f64; 4]) {
    let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let wa = (18.0 + 30.0f64.sqrt()) / 36.0;
    let wb = (18.0 - 30.0f64.sqrt()) / 36.0;
    ([0.5 * (1.0 - b), 0.5 * (1.0 - a), 0.5 * (1.0 + a), 0.5 * (1.0 + b)], [0.5 * wb, 0.5 * wa, 0.5 * wa, 0.5 * wb])
}

/// Six-point symmetric rule on the reference triangle, exact through
/// degree 4. Barycentric points; weights sum to 1 (multiply by area).
pub const TRIANGLE_DEG4: [([f64; 3], f64); 6] = {
    const A1: f64 = 0.445_948_490_915_965;
    const B1: f64 = 1.0 - 2.0 * A1;
    const W1: f64 = 0.223_381_589_678_011;
    const A2: f64 = 0.091_576_213_509_771;
    const B2: f64 = 1.0 - 2.0 * A2;
    const W2: f64 = 0.109_951_743_655_322;
    [
        ([A1, A1, B1], W1),
        ([A1, B1, A1], W1),
        ([B1, A1, A1], W1),
        ([A2, A2, B2], W2),
        ([A2, B2, A2], W2),
        ([B2, A2, A2], W2),
    ]
};

/// A quadrature point of an element: physical coordinates, barycentric
/// weights with respect to the element's vertices, and the weight.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub x: [f64; 2],
    pub bary: [f64; 3],
    pub w: f64,
}

/// Lines along which integrands may jump; elements are cut along them
/// before quadrature.
#[derive(Debug, Clone, Default)]
pub struct Cuts<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
}

impl<'a> Cuts<'a> {
    pub fn none() -> Self {
        Self { x: &[], y: &[] }
    }

    pub fn of(f: &'a ScalarField) -> Self {
        Self { x: f.breaks_x(), y: f.breaks_y() }
    }
}

/// Quadrature points covering element `e`: 4-point Gauss per sub-interval in
/// 1D, the degree-4 triangle rule per sub-triangle in 2D.
pub fn element_points(mesh: &Mesh, e: usize, cuts: &Cuts<'_>, out: &mut Vec<QuadPoint>) {
    out.clear();
    let v = mesh.element_vertices(e);
    match mesh.dimension() {
        Dimension::One => {
            let (x0, x1) = (v[0][0], v[1][0]);
            let mut pieces = vec![x0];
            pieces.extend(cuts.x.iter().copied().filter(|&c| c > x0 && c < x1));
            pieces.push(x1);
            pieces.sort_by(f64::total_cmp);
            let (gx, gw) = gauss4();
            let len = x1 - x0;
            for win in pieces.windows(2) {
                let (a, b) = (win[0], win[1]);
                for (s, w) in gx.iter().zip(gw) {
                    let x = a + (b - a) * s;
                    let t = (x - x0) / len;
                    out.push(QuadPoint { x: [x, 0.0], bary: [1.0 - t, t, 0.0], w: w * (b - a) });
                }
            }
        }
        Dimension::Two => {
            let mut polys = vec![vec![v[0], v[1], v[2]]];
            for &c in cuts.x {
                polys = polys.into_iter().flat_map(|p| split_polygon(p, 0, c)).collect();
            }
            for &c in cuts.y {
                polys = polys.into_iter().flat_map(|p| split_polygon(p, 1, c)).collect();
            }
            let inv = BaryMap::new(&v);
            for poly in polys {
                for k in 1..poly.len() - 1 {
                    let (a, b, c) = (poly[0], poly[k], poly[k + 1]);
                    let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
                    if area <= 0.0 {
                        continue;
                    }
                    for (l, w) in TRIANGLE_DEG4 {
                        let x = [l[0] * a[0] + l[1] * b[0] + l[2] * c[0], l[0] * a[1] + l[1] * b[1] + l[2] * c[1]];
                        out.push(QuadPoint { x, bary: inv.apply(x), w: w * area });
                    }
                }
            }
        }
    }
}

struct BaryMap {
    origin: [f64; 2],
    inv: [[f64; 2]; 2],
}

impl BaryMap {
    fn new(v: &[[f64; 2]; 3]) -> Self {
        let (a, b, c) = (v[0], v[1], v[2]);
        let m = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        Self { origin: a, inv }
    }

    fn apply(&self, x: [f64; 2]) -> [f64; 3] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let l1 = self.inv[0][0] * d[0] + self.inv[0][1] * d[1];
        let l2 = self.inv[1][0] * d[0] + self.inv[1][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }
}

/// Splits a convex polygon by the line `x[axis] = c`; returns the non-empty
/// pieces.
fn split_polygon(poly: Vec<[f64; 2]>, axis: usize, c: f64) -> Vec<Vec<[f64; 2]>> {
    let lo = poly.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
    let hi = poly.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
    if c <= lo || c >= hi {
        return vec![poly];
    }
    let mut below = Vec::new();
    let mut above = Vec::new();
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        if p[axis] <= c {
            below.push(p);
        }
        if p[axis] >= c {
            above.push(p);
        }
        if (p[axis] - c) * (q[axis] - c) < 0.0 {
            let t = (c - p[axis]) / (q[axis] - p[axis]);
            let mut x = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
            x[axis] = c;
            below.push(x);
            above.push(x);
        }
    }
    [below, above].into_iter().filter(|p| p.len() >= 3).collect()
}
