//! P1 assembly on [`TriMesh`]: mass and stiffness by closed-form element
//! integrals, loads by quadrature, and the Ritz projection.

use crate::error::Result;
use crate::linalg::{BandCholesky, SparseSymmetricMatrix};
use crate::mesh::{Point, TriMesh};
use crate::quadrature::QuadratureRule;

/// Which node set a matrix is numbered over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Numbering {
    /// Interior nodes only (Dirichlet dofs eliminated).
    Interior,
    /// All nodes, including the boundary.
    Full,
}

fn element_vertices(mesh: &TriMesh, t: usize) -> [Point; 3] {
    let tri = mesh.triangles()[t];
    [mesh.nodes()[tri[0]], mesh.nodes()[tri[1]], mesh.nodes()[tri[2]]]
}

/// Gradients of the three barycentric coordinates (constant on the element).
fn barycentric_gradients(v: [Point; 3], area: f64) -> [[f64; 2]; 3] {
    let inv = 1.0 / (2.0 * area);
    std::array::from_fn(|i| {
        let (b, c) = (v[(i + 1) % 3], v[(i + 2) % 3]);
        [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv]
    })
}

fn element_mass(area: f64) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { area / 6.0 } else { area / 12.0 }))
}

fn element_stiffness(v: [Point; 3], area: f64) -> [[f64; 3]; 3] {
    let g = barycentric_gradients(v, area);
    std::array::from_fn(|i| std::array::from_fn(|j| area * (g[i][0] * g[j][0] + g[i][1] * g[j][1])))
}

fn index_of(mesh: &TriMesh, node: usize, numbering: Numbering) -> Option<usize> {
    match numbering {
        Numbering::Interior => mesh.dof_of(node),
        Numbering::Full => Some(node),
    }
}

fn assemble_matrix(
    mesh: &TriMesh,
    numbering: Numbering,
    element: impl Fn([Point; 3], f64) -> [[f64; 3]; 3],
) -> SparseSymmetricMatrix {
    let n = match numbering {
        Numbering::Interior => mesh.n_dofs(),
        Numbering::Full => mesh.n_nodes(),
    };
    let mut triplets = Vec::with_capacity(9 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let v = element_vertices(mesh, t);
        let local = element(v, mesh.triangle_area(t));
        for a in 0..3 {
            let Some(i) = index_of(mesh, tri[a], numbering) else { continue };
            for b in 0..3 {
                if let Some(j) = index_of(mesh, tri[b], numbering) {
                    triplets.push((i, j, local[a][b]));
                }
            }
        }
    }
    SparseSymmetricMatrix::from_triplets(n, &triplets)
}

/// `M_ij = (phi_i, phi_j)` over interior basis functions.
pub fn assemble_mass(mesh: &TriMesh) -> SparseSymmetricMatrix {
    assemble_mass_with(mesh, Numbering::Interior)
}

pub fn assemble_mass_with(mesh: &TriMesh, numbering: Numbering) -> SparseSymmetricMatrix {
    assemble_matrix(mesh, numbering, |_, area| element_mass(area))
}

/// `K_ij = (grad phi_i, grad phi_j)` over interior basis functions.
pub fn assemble_stiffness(mesh: &TriMesh) -> SparseSymmetricMatrix {
    assemble_stiffness_with(mesh, Numbering::Interior)
}

pub fn assemble_stiffness_with(mesh: &TriMesh, numbering: Numbering) -> SparseSymmetricMatrix {
    assemble_matrix(mesh, numbering, element_stiffness)
}

/// `b_i = (f, phi_i)` by the given rule, interior dofs only.
pub fn assemble_load(mesh: &TriMesh, f: impl Fn(Point) -> f64, rule: &QuadratureRule) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_dofs()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let v = element_vertices(mesh, t);
        for (x, lam, w) in rule.on_triangle(v, mesh.triangle_area(t)) {
            let fx = f(x);
            for a in 0..3 {
                if let Some(i) = mesh.dof_of(tri[a]) {
                    b[i] += w * fx * lam[a];
                }
            }
        }
    }
    b
}

/// Ritz projection of a function given through its gradient:
/// solves `(grad R y, grad phi) = (grad y, grad phi)` for all interior `phi`.
pub fn ritz_projection(
    mesh: &TriMesh,
    gradient: impl Fn(Point) -> [f64; 2],
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; mesh.n_dofs()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let v = element_vertices(mesh, t);
        let area = mesh.triangle_area(t);
        let g = barycentric_gradients(v, area);
        for (x, _, w) in rule.on_triangle(v, area) {
            let grad = gradient(x);
            for a in 0..3 {
                if let Some(i) = mesh.dof_of(tri[a]) {
                    rhs[i] += w * (grad[0] * g[a][0] + grad[1] * g[a][1]);
                }
            }
        }
    }
    let chol = BandCholesky::factor(&assemble_stiffness(mesh))?;
    Ok(chol.solve(&rhs))
}

/// Ritz projection of a function already in `S_h` (given by coefficients).
pub fn ritz_projection_of_nodal(mesh: &TriMesh, coeffs: &[f64]) -> Result<Vec<f64>> {
    let k = assemble_stiffness(mesh);
    let chol = BandCholesky::factor(&k)?;
    Ok(chol.solve(&k.apply(coeffs)))
}

/// `|| f - u_h ||_{L^2}` for a P1 function `u_h` by element quadrature.
pub fn l2_error(mesh: &TriMesh, dofs: &[f64], f: impl Fn(Point) -> f64, rule: &QuadratureRule) -> f64 {
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let v = element_vertices(mesh, t);
        let nodal: [f64; 3] = std::array::from_fn(|a| mesh.dof_of(tri[a]).map_or(0.0, |d| dofs[d]));
        for (x, lam, w) in rule.on_triangle(v, mesh.triangle_area(t)) {
            let uh = lam[0] * nodal[0] + lam[1] * nodal[1] + lam[2] * nodal[2];
            acc += w * (f(x) - uh).powi(2);
        }
    }
    acc.sqrt()
}

/// Interpolates a coarse P1 function onto the nodes of a finer nested mesh.
/// Exact since the coarse space is a subspace of the fine one.
pub fn prolongate(coarse: &TriMesh, fine: &TriMesh, dofs: &[f64]) -> Vec<f64> {
    debug_assert!(fine.level() >= coarse.level());
    (0..fine.n_dofs()).map(|d| coarse.eval_p1(dofs, fine.nodes()[fine.node_of(d)])).collect()
}

/// Largest generalized eigenvalue `lambda_max(K, M)` by power iteration on
/// `M^{-1} K` with a Rayleigh quotient estimate.
pub fn max_generalized_eigenvalue(
    stiffness: &SparseSymmetricMatrix,
    mass: &SparseSymmetricMatrix,
    max_iter: usize,
    rel_tol: f64,
) -> Result<f64> {
    let n = stiffness.dim();
    let mass_chol = BandCholesky::factor(mass)?;
    // an alternating start vector overlaps strongly with the top modes
    let mut x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -0.7 } + 1e-3 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let kx = stiffness.apply(&x);
        let num: f64 = x.iter().zip(&kx).map(|(a, b)| a * b).sum();
        let den = mass.bilinear(&x, &x);
        let next = num / den;
        let mut y = kx;
        mass_chol.solve_in_place(&mut y);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Ok(lambda)
}

/// Certified upper bound `max_K lambda_max(K_e, M_e) >= lambda_max(K, M)`.
pub fn elementwise_eigenvalue_bound(mesh: &TriMesh) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..mesh.triangles().len() {
        let v = element_vertices(mesh, t);
        let area = mesh.triangle_area(t);
        let km = nalgebra::Matrix3::from_fn(|i, j| element_stiffness(v, area)[i][j]);
        let mm = nalgebra::Matrix3::from_fn(|i, j| element_mass(area)[i][j]);
        let chol = mm.cholesky().expect("element mass is SPD");
        let linv = chol.l().try_inverse().expect("invertible");
        let sym = linv * km * linv.transpose();
        let eig = nalgebra::SymmetricEigen::new(sym);
        worst = worst.max(eig.eigenvalues.max());
    }
    worst
}
