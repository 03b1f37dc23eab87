//! Uniform triangulation of the square `(-1,1)^2`.

use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub const MIN_LEVEL: u32 = 1;
pub const MAX_LEVEL: u32 = 10;

/// Uniform criss-cross mesh: `2^k x 2^k` squares, each split along the
/// lower-left to upper-right diagonal.
#[derive(Debug, Clone)]
pub struct TriMesh {
    level: u32,
    side: usize,
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    node_to_dof: Vec<Option<usize>>,
    dof_to_node: Vec<usize>,
    h: f64,
}

impl TriMesh {
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of squares per side, `2^k`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Longest element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn dof_of(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn node_of(&self, dof: usize) -> usize {
        self.dof_to_node[dof]
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.side + 1) + i
    }

    /// Grid spacing of the squares, `2 / 2^k`.
    pub fn spacing(&self) -> f64 {
        2.0 / self.side as f64
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Vertices and barycentric weights of the triangle containing `x`
    /// (clamped to the closed square).
    pub fn locate(&self, x: Point) -> [(usize, f64); 3] {
        let n = self.side;
        let a = self.spacing();
        let u = ((x[0] + 1.0) / a).clamp(0.0, n as f64);
        let v = ((x[1] + 1.0) / a).clamp(0.0, n as f64);
        let i = (u.floor() as usize).min(n - 1);
        let j = (v.floor() as usize).min(n - 1);
        let (xi, eta) = (u - i as f64, v - j as f64);
        let idx = |ii, jj| self.node_index(ii, jj);
        if xi >= eta {
            [(idx(i, j), 1.0 - xi), (idx(i + 1, j), xi - eta), (idx(i + 1, j + 1), eta)]
        } else {
            [(idx(i, j), 1.0 - eta), (idx(i + 1, j + 1), xi), (idx(i, j + 1), eta - xi)]
        }
    }

    /// Evaluates the P1 function with interior coefficients `dofs` (zero on the
    /// boundary) at an arbitrary point of the closed square.
    pub fn eval_p1(&self, dofs: &[f64], x: Point) -> f64 {
        self.locate(x).iter().map(|&(node, w)| self.node_to_dof[node].map_or(0.0, |d| w * dofs[d])).sum()
    }

    /// Nodal interpolant of `f` (boundary values dropped).
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.dof_to_node.iter().map(|&node| f(self.nodes[node])).collect()
    }
}

/// Builds the level-`k` uniform mesh of `(-1,1)^2`.
pub fn build_uniform_mesh(k: u32) -> Result<TriMesh> {
    if !(MIN_LEVEL..=MAX_LEVEL).contains(&k) {
        return Err(Error::Config(format!(
            "mesh level {k} outside [{MIN_LEVEL}, {MAX_LEVEL}]"
        )));
    }
    let side = 1usize << k;
    let a = 2.0 / side as f64;
    let mut nodes = Vec::with_capacity((side + 1) * (side + 1));
    let mut boundary = Vec::with_capacity(nodes.capacity());
    for j in 0..=side {
        for i in 0..=side {
            nodes.push([-1.0 + a * i as f64, -1.0 + a * j as f64]);
            boundary.push(i == 0 || j == 0 || i == side || j == side);
        }
    }
    let idx = |i: usize, j: usize| j * (side + 1) + i;
    let mut triangles = Vec::with_capacity(2 * side * side);
    for j in 0..side {
        for i in 0..side {
            let (p00, p10, p11, p01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([p00, p10, p11]);
            triangles.push([p00, p11, p01]);
        }
    }
    let mut node_to_dof = vec![None; nodes.len()];
    let mut dof_to_node = Vec::new();
    for (node, &on_boundary) in boundary.iter().enumerate() {
        if !on_boundary {
            node_to_dof[node] = Some(dof_to_node.len());
            dof_to_node.push(node);
        }
    }
    Ok(TriMesh {
        level: k,
        side,
        nodes,
        triangles,
        boundary,
        node_to_dof,
        dof_to_node,
        h: 2.0 * std::f64::consts::SQRT_2 / side as f64,
    })
}
