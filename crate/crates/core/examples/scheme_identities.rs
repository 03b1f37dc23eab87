//! The three-level recurrence against the assembled space-time Galerkin
//! system, and the stability gate across sigma and level.
//!
//! cargo run --release --example scheme_identities

use std::sync::Arc;

use bvwave::mesh::build_uniform_mesh;
use bvwave::time::TimeGrid;
use bvwave::wave::{galerkin_oracle, stability_gate, Discretization, InitialData, SchemeParams, TimeLoad, WaveSolver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bvwave::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let disc = Arc::new(Discretization::new(build_uniform_mesh(2)?));
    let grid = TimeGrid::new(0.8, 4)?;
    let n = disc.n_dofs();
    let mut load = TimeLoad::zeros(grid, n);
    for m in 0..grid.n_nodes() {
        load.slice_mut(m).iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    let init = InitialData {
        y0: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        y1_load: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    println!("recurrence vs Galerkin oracle, k=2, M=4:");
    for sigma in [0.0, 1.0 / 6.0, 0.25, 1.0 / 3.0] {
        let params = SchemeParams::new(sigma);
        let y = WaveSolver::new(disc.clone(), grid, params)?.solve_forward(&load, &init)?;
        let oracle = galerkin_oracle(&disc, &grid, &params, &load, &init)?;
        let scale = oracle.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = y.data().iter().zip(oracle.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("  sigma = {sigma:.4}: relative max difference {:.2e}", diff / scale);
    }

    println!("\nstability gate on the study grids (T = 2, tau = 2^-k):");
    for k in 2..=6 {
        let disc = Discretization::new(build_uniform_mesh(k)?);
        let grid = TimeGrid::with_level(2.0, k)?;
        for sigma in [0.0, 1.0 / 12.0, 0.1, 0.25] {
            let params = SchemeParams::new(sigma);
            let verdict = if params.is_unconditional() {
                "unconditional".to_string()
            } else {
                stability_gate(&params, &grid, &disc)?.describe()
            };
            println!("  k={k} sigma={sigma:.4}: {verdict}");
        }
    }
    Ok(())
}
