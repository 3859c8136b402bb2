//! Structured meshes of the unit interval and the unit square.
//!
//! Nodes are numbered lexicographically with `x` running fastest, so node
//! `(i, j)` of the square mesh has index `j * (n + 1) + i`. Every grid square
//! is split along its `(0,0)-(1,1)` diagonal, which keeps successive
//! refinements nested.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn as_usize(self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: Dimension,
    n_cells: usize,
    coords: Vec<f64>,
    connectivity: Vec<usize>,
    interior_index: Vec<Option<usize>>,
    interior_nodes: Vec<usize>,
    h: f64,
}

/// Result of point location: an element and the barycentric weights of the
/// point with respect to that element's vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub element: usize,
    pub weights: [f64; 3],
}

impl Mesh {
    pub fn interval(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidMesh(format!("need at least 2 cells, got {n_cells}")));
        }
        let coords: Vec<f64> = (0..=n_cells).map(|i| i as f64 / n_cells as f64).collect();
        let connectivity = (0..n_cells).flat_map(|e| [e, e + 1]).collect();
        let interior_index = (0..=n_cells).map(|i| (i > 0 && i < n_cells).then(|| i - 1)).collect();
        Ok(Self::finish(Dimension::One, n_cells, coords, connectivity, interior_index, 1.0 / n_cells as f64))
    }

    pub fn unit_square(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidMesh(format!("need at least 2 cells per side, got {n_cells}")));
        }
        let n = n_cells;
        let nn = n + 1;
        let mut coords = Vec::with_capacity(2 * nn * nn);
        let mut interior_index = Vec::with_capacity(nn * nn);
        for j in 0..nn {
            for i in 0..nn {
                coords.push(i as f64 / n as f64);
                coords.push(j as f64 / n as f64);
                let interior = i > 0 && i < n && j > 0 && j < n;
                interior_index.push(interior.then(|| (j - 1) * (n - 1) + (i - 1)));
            }
        }
        let mut connectivity = Vec::with_capacity(6 * n * n);
        for j in 0..n {
            for i in 0..n {
                let p00 = j * nn + i;
                let p10 = p00 + 1;
                let p01 = p00 + nn;
                let p11 = p01 + 1;
                connectivity.extend_from_slice(&[p00, p10, p11, p00, p11, p01]);
            }
        }
        let h = std::f64::consts::SQRT_2 / n as f64;
        Ok(Self::finish(Dimension::Two, n, coords, connectivity, interior_index, h))
    }

    pub fn build(dim: Dimension, n_cells: usize) -> Result<Self> {
        match dim {
            Dimension::One => Self::interval(n_cells),
            Dimension::Two => Self::unit_square(n_cells),
        }
    }

    fn finish(
        dim: Dimension,
        n_cells: usize,
        coords: Vec<f64>,
        connectivity: Vec<usize>,
        interior_index: Vec<Option<usize>>,
        h: f64,
    ) -> Self {
        let mut interior_nodes = vec![0; interior_index.iter().flatten().count()];
        for (node, idx) in interior_index.iter().enumerate() {
            if let Some(k) = idx {
                interior_nodes[*k] = node;
            }
        }
        Self { dim, n_cells, coords, connectivity, interior_index, interior_nodes, h }
    }

    pub fn dimension(&self) -> Dimension {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.interior_index.len()
    }

    pub fn n_elements(&self) -> usize {
        self.connectivity.len() / self.nodes_per_element()
    }

    pub fn n_interior(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.dim.as_usize() + 1
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim.as_usize();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.nodes_per_element();
        &self.connectivity[e * k..(e + 1) * k]
    }

    /// Interior DOF index of a node, `None` on the boundary.
    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }

    /// Node index of each interior DOF.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.interior_index[node].is_none()
    }

    /// Length (1D) or area (2D) of an element.
    pub fn element_measure(&self, e: usize) -> f64 {
        let v = self.element(e);
        match self.dim {
            Dimension::One => self.node(v[1])[0] - self.node(v[0])[0],
            Dimension::Two => {
                let (a, b, c) = (self.node(v[0]), self.node(v[1]), self.node(v[2]));
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            }
        }
    }

    /// Coordinates of element vertices, padded to three 2D points.
    pub fn element_vertices(&self, e: usize) -> [[f64; 2]; 3] {
        let mut out = [[0.0; 2]; 3];
        for (slot, &v) in out.iter_mut().zip(self.element(e)) {
            let p = self.node(v);
            slot[0] = p[0];
            if p.len() > 1 {
                slot[1] = p[1];
            }
        }
        out
    }

    /// Finds the element containing `point`. On shared element boundaries the
    /// element with the smallest index wins.
    pub fn locate(&self, point: &[f64]) -> Result<Location> {
        let d = self.dim.as_usize();
        if point.len() != d {
            return Err(Error::LengthMismatch { expected: d, got: point.len() });
        }
        if point.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::OutsideDomain { point: point.to_vec() });
        }
        let n = self.n_cells;
        let nf = n as f64;
        match self.dim {
            Dimension::One => {
                let k = lowest_cell(point[0], n);
                let s = (point[0] * nf - k as f64).clamp(0.0, 1.0);
                Ok(Location { element: k, weights: [1.0 - s, s, 0.0] })
            }
            Dimension::Two => {
                let (xs, ys) = (point[0] * nf, point[1] * nf);
                let (i0, j0) = (lowest_cell(point[0], n), lowest_cell(point[1], n));
                let (i1, j1) = ((xs.floor() as usize).min(n - 1), (ys.floor() as usize).min(n - 1));
                for j in j0..=j1.max(j0) {
                    for i in i0..=i1.max(i0) {
                        let s = xs - i as f64;
                        let r = ys - j as f64;
                        let base = 2 * (j * n + i);
                        // lower-right triangle (p00, p10, p11)
                        if s >= r && (-1e-12..=1.0 + 1e-12).contains(&s) && r >= -1e-12 {
                            return Ok(Location { element: base, weights: normalize([1.0 - s, s - r, r]) });
                        }
                        // upper-left triangle (p00, p11, p01)
                        if r >= s && (-1e-12..=1.0 + 1e-12).contains(&r) && s >= -1e-12 {
                            return Ok(Location { element: base + 1, weights: normalize([1.0 - r, s, r - s]) });
                        }
                    }
                }
                Err(Error::OutsideDomain { point: point.to_vec() })
            }
        }
    }
}

/// Smallest cell index `k` with `k/n <= x <= (k+1)/n`.
fn lowest_cell(x: f64, n: usize) -> usize {
    let xs = x * n as f64;
    let k = xs.ceil() as isize - 1;
    k.clamp(0, n as isize - 1) as usize
}

fn normalize(w: [f64; 3]) -> [f64; 3] {
    let c = w.map(|v| v.clamp(0.0, 1.0));
    let s: f64 = c.iter().sum();
    c.map(|v| v / s)
}
