//! Uniform triangulations of (-1,1)^2, P1 mass/stiffness assembly and the
//! spectral quantities the stability gate depends on.
//!
//! cargo run --release --example mesh_assembly

use bvwave::experiments::g;
use bvwave::fem::{assemble_load, elementwise_eigenvalue_bound, max_generalized_eigenvalue};
use bvwave::mesh::build_uniform_mesh;
use bvwave::quadrature::QuadratureRule;
use bvwave::wave::Discretization;

fn main() -> bvwave::Result<()> {
    println!("{:>2} {:>9} {:>6} {:>8} {:>5} {:>12} {:>12} {:>10}", "k", "h", "dofs", "nnz(K)", "band", "h^2 lam_max", "elem bound", "(g,1)");
    for k in 1..=7 {
        let disc = Discretization::new(build_uniform_mesh(k)?);
        let mesh = disc.mesh();
        let lambda = max_generalized_eigenvalue(disc.stiffness(), disc.mass(), 500, 1e-10)?;
        // (g, 1) tends to 16 / pi^2 under refinement
        let g_load = assemble_load(mesh, g, &QuadratureRule::seven_point());
        println!(
            "{k:>2} {:>9.5} {:>6} {:>8} {:>5} {:>12.6} {:>12.6} {:>10.6}",
            mesh.h(),
            disc.n_dofs(),
            disc.stiffness().nnz(),
            disc.stiffness().half_bandwidth(),
            mesh.h().powi(2) * lambda,
            mesh.h().powi(2) * elementwise_eigenvalue_bound(mesh),
            g_load.iter().sum::<f64>(),
        );
    }
    println!("16/pi^2 = {:.6}", 16.0 / std::f64::consts::PI.powi(2));
    Ok(())
}
