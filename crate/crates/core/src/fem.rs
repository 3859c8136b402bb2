//! P1 finite elements on interior degrees of freedom: mass and stiffness
//! assembly, load vectors, projections, evaluation and L2 errors.
//!
//! Dirichlet nodes are eliminated, so every vector here is indexed by
//! interior DOF and boundary values are implicitly zero.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linsolve::pcg;
use crate::mesh::{Dimension, Mesh};
use crate::quadrature::{element_points, Cuts, QuadPoint};
use crate::sparse::SparseMatrix;

/// Relative residual target for the projection solves.
pub const PROJECTION_TOL: f64 = 1e-13;

/// A P1 function given by its interior coefficients.
#[derive(Debug, Clone)]
pub struct FemFunction<'m> {
    mesh: &'m Mesh,
    coeffs: Vec<f64>,
}

impl<'m> FemFunction<'m> {
    pub fn new(mesh: &'m Mesh, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != mesh.n_interior() {
            return Err(Error::LengthMismatch { expected: mesh.n_interior(), got: coeffs.len() });
        }
        Ok(Self { mesh, coeffs })
    }

    pub fn zero(mesh: &'m Mesh) -> Self {
        Self { mesh, coeffs: vec![0.0; mesh.n_interior()] }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn nodal_value(&self, node: usize) -> f64 {
        self.mesh.interior_index(node).map_or(0.0, |k| self.coeffs[k])
    }

    /// Value on element `e` at the given barycentric weights.
    pub fn eval_in_element(&self, e: usize, bary: &[f64; 3]) -> f64 {
        self.mesh.element(e).iter().zip(bary).map(|(&v, &w)| w * self.nodal_value(v)).sum()
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        let loc = self.mesh.locate(point)?;
        Ok(self.eval_in_element(loc.element, &loc.weights))
    }
}

/// Nodal interpolant (boundary values dropped).
pub fn interpolate<'m>(mesh: &'m Mesh, f: &ScalarField) -> FemFunction<'m> {
    let coeffs = mesh.interior_nodes().iter().map(|&n| f.eval(mesh.node(n))).collect();
    FemFunction { mesh, coeffs }
}

fn element_mass(mesh: &Mesh, e: usize) -> [[f64; 3]; 3] {
    let m = mesh.element_measure(e);
    match mesh.dimension() {
        Dimension::One => {
            let (d, o) = (m / 3.0, m / 6.0);
            [[d, o, 0.0], [o, d, 0.0], [0.0; 3]]
        }
        Dimension::Two => {
            let (d, o) = (m / 6.0, m / 12.0);
            [[d, o, o], [o, d, o], [o, o, d]]
        }
    }
}

/// Gradients of the element's barycentric (hat) functions; constant per element.
fn hat_gradients(mesh: &Mesh, e: usize) -> [[f64; 2]; 3] {
    let v = mesh.element_vertices(e);
    match mesh.dimension() {
        Dimension::One => {
            let h = v[1][0] - v[0][0];
            [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]]
        }
        Dimension::Two => {
            let twice_area = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
            let mut g = [[0.0; 2]; 3];
            for k in 0..3 {
                let (a, b) = (v[(k + 1) % 3], v[(k + 2) % 3]);
                g[k] = [(a[1] - b[1]) / twice_area, (b[0] - a[0]) / twice_area];
            }
            g
        }
    }
}

fn element_stiffness(mesh: &Mesh, e: usize) -> [[f64; 3]; 3] {
    let g = hat_gradients(mesh, e);
    let m = mesh.element_measure(e);
    let mut k = [[0.0; 3]; 3];
    for i in 0..mesh.nodes_per_element() {
        for j in 0..mesh.nodes_per_element() {
            k[i][j] = m * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

fn assemble(mesh: &Mesh, local: impl Fn(&Mesh, usize) -> [[f64; 3]; 3]) -> SparseMatrix {
    let npe = mesh.nodes_per_element();
    let mut triplets = Vec::with_capacity(mesh.n_elements() * npe * npe);
    for e in 0..mesh.n_elements() {
        let k = local(mesh, e);
        let nodes = mesh.element(e);
        for (a, &na) in nodes.iter().enumerate() {
            let Some(i) = mesh.interior_index(na) else { continue };
            for (b, &nb) in nodes.iter().enumerate() {
                if let Some(j) = mesh.interior_index(nb) {
                    triplets.push((i, j, k[a][b]));
                }
            }
        }
    }
    let n = mesh.n_interior();
    SparseMatrix::from_triplets(n, n, &triplets).expect("mesh indices are in range")
}

/// Gram matrix of the interior hat functions.
pub fn assemble_mass(mesh: &Mesh) -> SparseMatrix {
    assemble(mesh, element_mass)
}

/// Matrix of `(∇φ_j, ∇φ_i)` over interior hat functions.
pub fn assemble_stiffness(mesh: &Mesh) -> SparseMatrix {
    assemble(mesh, element_stiffness)
}

/// `b_i = ∫ f φ_i`, by element quadrature with cuts at the field's breaks.
pub fn assemble_load(mesh: &Mesh, f: &ScalarField) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_interior()];
    if f.is_zero() {
        return b;
    }
    let cuts = Cuts::of(f);
    let mut pts: Vec<QuadPoint> = Vec::new();
    let d = mesh.dimension().as_usize();
    for e in 0..mesh.n_elements() {
        element_points(mesh, e, &cuts, &mut pts);
        let nodes = mesh.element(e);
        for q in &pts {
            let fw = q.w * f.eval(&q.x[..d]);
            for (k, &n) in nodes.iter().enumerate() {
                if let Some(i) = mesh.interior_index(n) {
                    b[i] += fw * q.bary[k];
                }
            }
        }
    }
    b
}

/// `g_i = ∫ ∇f · ∇φ_i`.
fn assemble_gradient_load(mesh: &Mesh, f: &ScalarField) -> Result<Vec<f64>> {
    if !f.has_gradient() {
        return Err(Error::MissingGradient);
    }
    let mut g = vec![0.0; mesh.n_interior()];
    let cuts = Cuts::of(f);
    let mut pts = Vec::new();
    let d = mesh.dimension().as_usize();
    for e in 0..mesh.n_elements() {
        element_points(mesh, e, &cuts, &mut pts);
        let grads = hat_gradients(mesh, e);
        let nodes = mesh.element(e);
        for q in &pts {
            let df = f.gradient(&q.x[..d]).expect("checked above");
            for (k, &n) in nodes.iter().enumerate() {
                if let Some(i) = mesh.interior_index(n) {
                    g[i] += q.w * (df[0] * grads[k][0] + df[1] * grads[k][1]);
                }
            }
        }
    }
    Ok(g)
}

fn spd_solve(a: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut x = vec![0.0; rhs.len()];
    pcg(a, rhs, &mut x, PROJECTION_TOL, 10 * rhs.len().max(10))?;
    Ok(x)
}

/// L2-orthogonal projection onto the P1 space.
pub fn l2_project<'m>(mesh: &'m Mesh, f: &ScalarField) -> Result<FemFunction<'m>> {
    let rhs = assemble_load(mesh, f);
    let coeffs = spd_solve(&assemble_mass(mesh), &rhs)?;
    Ok(FemFunction { mesh, coeffs })
}

/// Ritz (energy) projection onto the P1 space; needs the field's gradient.
pub fn ritz_project<'m>(mesh: &'m Mesh, f: &ScalarField) -> Result<FemFunction<'m>> {
    let rhs = assemble_gradient_load(mesh, f)?;
    let coeffs = spd_solve(&assemble_stiffness(mesh), &rhs)?;
    Ok(FemFunction { mesh, coeffs })
}

/// What an FE function is compared against in [`l2_error`].
pub enum Reference<'a, 'm> {
    Field(&'a ScalarField),
    Fem(&'a FemFunction<'m>),
}

/// `‖u − ref‖_{L2}` by quadrature on `mesh_eval`, which must be `u`'s mesh
/// or a refinement of it. FE references on other (nested) meshes are
/// evaluated through point location.
pub fn l2_error(mesh_eval: &Mesh, u: &FemFunction<'_>, reference: Reference<'_, '_>) -> Result<f64> {
    let same_mesh = |f: &FemFunction<'_>| std::ptr::eq(f.mesh(), mesh_eval);
    let cuts = match &reference {
        Reference::Field(f) => Cuts::of(f),
        Reference::Fem(_) => Cuts::none(),
    };
    let d = mesh_eval.dimension().as_usize();
    let mut pts = Vec::new();
    let mut sum = 0.0;
    for e in 0..mesh_eval.n_elements() {
        element_points(mesh_eval, e, &cuts, &mut pts);
        for q in &pts {
            let x = &q.x[..d];
            let uv = if same_mesh(u) { u.eval_in_element(e, &q.bary) } else { u.evaluate(x)? };
            let rv = match &reference {
                Reference::Field(f) => f.eval(x),
                Reference::Fem(r) if same_mesh(r) => r.eval_in_element(e, &q.bary),
                Reference::Fem(r) => r.evaluate(x)?,
            };
            sum += q.w * (uv - rv) * (uv - rv);
        }
    }
    Ok(sum.sqrt())
}

/// `sqrt(vᵀ M v)`: the exact L2 norm of a P1 function with coefficients `v`.
pub fn mass_norm(mass: &SparseMatrix, v: &[f64]) -> f64 {
    crate::par::dot(v, &mass.mul_vec(v)).max(0.0).sqrt()
}

/// `sqrt((u − w)ᵀ M (u − w))`.
pub fn mass_norm_diff(mass: &SparseMatrix, u: &[f64], w: &[f64]) -> f64 {
    let d: Vec<f64> = u.iter().zip(w).map(|(a, b)| a - b).collect();
    mass_norm(mass, &d)
}
