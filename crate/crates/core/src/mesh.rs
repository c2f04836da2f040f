//! Structured triangulation of the computational rectangle
//! `[0, s_max] × [0, π]` with an order-p nodal lattice.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{invalid, Result};

/// Orientation of the diagonal that splits each lattice cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagonal {
    /// Bottom-left to top-right in (s, t).
    Rising,
    /// Top-left to bottom-right in (s, t).
    Falling,
}

/// One triangle: three vertices in (s, t) and its nodes in reference
/// lattice order.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    /// Vertices `v0, v1, v2`; the reference point `(a, b)` maps to
    /// `v0 + a (v1 - v0) + b (v2 - v0)`.
    pub vertices: [[f64; 2]; 3],
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub m: usize,
    pub p: usize,
    pub s_max: f64,
    pub diagonal: Diagonal,
    pub elements: Vec<Element>,
    /// `(s, t)` of every node, row-major with `s` running fastest.
    pub nodes: Vec<[f64; 2]>,
    /// True for nodes on the Dirichlet edge `s = s_max`.
    pub boundary_mask: Vec<bool>,
}

/// Reference lattice points `(i, j)`, `i + j <= p`, ordered with `j` outer
/// and `i` inner. Shared with [`crate::basis`].
pub fn reference_lattice(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity((p + 1) * (p + 2) / 2);
    for j in 0..=p {
        for i in 0..=p - j {
            out.push((i, j));
        }
    }
    out
}

impl Mesh {
    pub fn ne(&self) -> usize {
        self.elements.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_mask.iter().filter(|&&b| b).count()
    }

    /// Text listing: a `nodes` block (`index s t`) followed by an
    /// `elements` block (`index n0 n1 ...`).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes {}", self.nodes.len());
        for (i, [s, t]) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "{i} {s:.17e} {t:.17e}");
        }
        let _ = writeln!(out, "elements {}", self.elements.len());
        for (e, el) in self.elements.iter().enumerate() {
            let _ = write!(out, "{e}");
            for n in &el.nodes {
                let _ = write!(out, " {n}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn build_mesh(m: usize, p: usize, s_max: f64) -> Result<Mesh> {
    build_mesh_with(m, p, s_max, Diagonal::Rising)
}

pub fn build_mesh_with(m: usize, p: usize, s_max: f64, diagonal: Diagonal) -> Result<Mesh> {
    if m == 0 {
        return Err(invalid("m", "at least one subdivision is required"));
    }
    if p == 0 {
        return Err(invalid("p", "polynomial order must be positive"));
    }
    if !(s_max > 0.0) || !s_max.is_finite() {
        return Err(invalid("s_max", "domain extent must be positive"));
    }
    let side = p * m + 1;
    let lattice_step = p * m;
    let coord = |k: usize, extent: f64| {
        if k == lattice_step {
            extent
        } else {
            extent * k as f64 / lattice_step as f64
        }
    };
    let mut nodes = Vec::with_capacity(side * side);
    let mut boundary_mask = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            nodes.push([coord(col, s_max), coord(row, PI)]);
            boundary_mask.push(col == lattice_step);
        }
    }

    let reference = reference_lattice(p);
    let mut elements = Vec::with_capacity(2 * m * m);
    for ct in 0..m {
        for cs in 0..m {
            // cell corners in lattice units
            let (c0, c1) = (cs * p, ct * p);
            let corners: [[[usize; 2]; 3]; 2] = match diagonal {
                Diagonal::Rising => [
                    [[0, 0], [p, 0], [p, p]],
                    [[0, 0], [p, p], [0, p]],
                ],
                Diagonal::Falling => [
                    [[0, 0], [p, 0], [0, p]],
                    [[p, p], [0, p], [p, 0]],
                ],
            };
            for tri in corners {
                // cell-local lattice position of reference point (a, b); the
                // vertex differences are 0 or ±p so the step is ±1 lattice unit
                let node_of = |a: usize, b: usize| {
                    let pos = |k: usize| {
                        let v0 = tri[0][k] as isize;
                        let d1 = (tri[1][k] as isize - v0) / p as isize;
                        let d2 = (tri[2][k] as isize - v0) / p as isize;
                        (v0 + a as isize * d1 + b as isize * d2) as usize
                    };
                    (c1 + pos(1)) * side + (c0 + pos(0))
                };
                let nodes_local: Vec<usize> =
                    reference.iter().map(|&(a, b)| node_of(a, b)).collect();
                let vertex = |k: usize| {
                    let [ds, dt] = tri[k];
                    nodes[(c1 + dt) * side + (c0 + ds)]
                };
                elements.push(Element {
                    vertices: [vertex(0), vertex(1), vertex(2)],
                    nodes: nodes_local,
                });
            }
        }
    }
    Ok(Mesh {
        m,
        p,
        s_max,
        diagonal,
        elements,
        nodes,
        boundary_mask,
    })
}

/// Meshes sharing `p` and `s_max` for a strictly increasing list of
/// subdivision counts.
pub fn grid_ladder(m_list: &[usize], p: usize, s_max: f64) -> Result<Vec<Mesh>> {
    if m_list.is_empty() {
        return Err(invalid("m_list", "ladder needs at least one rung"));
    }
    if m_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("m_list", "rungs must be strictly increasing"));
    }
    m_list.iter().map(|&m| build_mesh(m, p, s_max)).collect()
}
