//! The discrete adjoint as a time-reversed forward solve: the identity
//! (g, L f) = (f, L* g) holds to round-off.
//!
//! cargo run --release --example adjoint

use std::sync::Arc;

use bvwave::mesh::build_uniform_mesh;
use bvwave::time::TimeGrid;
use bvwave::wave::{Discretization, SchemeParams, TimeLoad, WaveSolver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_load(grid: TimeGrid, n: usize, rng: &mut ChaCha8Rng) -> TimeLoad {
    let mut load = TimeLoad::zeros(grid, n);
    for m in 0..grid.n_nodes() {
        load.slice_mut(m).iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    load
}

fn main() -> bvwave::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (k, sigma) in [(3, 0.25), (4, 0.25), (4, 0.5), (5, 0.25)] {
        let disc = Arc::new(Discretization::new(build_uniform_mesh(k)?));
        let grid = TimeGrid::with_level(2.0, k)?;
        let solver = WaveSolver::new(disc.clone(), grid, SchemeParams::new(sigma))?;
        let f = random_load(grid, disc.n_dofs(), &mut rng);
        let g = random_load(grid, disc.n_dofs(), &mut rng);
        let lhs = g.pair(&solver.solve_source(&f)?);
        let rhs = f.pair(&solver.solve_adjoint(&g)?);
        println!("k={k} sigma={sigma}: (g, Lf) = {lhs:+.12e}, (f, L*g) = {rhs:+.12e}, rel diff {:.1e}", (lhs - rhs).abs() / lhs.abs());
    }
    Ok(())
}
