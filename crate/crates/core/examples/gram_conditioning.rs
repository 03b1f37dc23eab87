//! Conditioning of the reference problem: the Gram matrix of the state
//! columns belonging to the three true jumps and the offset, and the
//! discretization error of p1 at the exact control. Small eigenvalues
//! amplify the O(tau^2 + h^2) error in p1 into large magnitude errors on
//! coarse levels.
//!
//! cargo run --release --example gram_conditioning -- [reference level]

use bvwave::control::compute_p1;
use bvwave::experiments::{PhiVariant, ReferenceContext, ALPHA, HORIZON};
use bvwave::pdap::{atom_column, offset_column};
use bvwave::wave::SchemeParams;
use nalgebra::DMatrix;

fn main() -> bvwave::Result<()> {
    let k_ref: u32 = std::env::args().nth(1).map_or(7, |s| s.parse().expect("level"));
    let params = SchemeParams::crank_nicolson();
    let reference = ReferenceContext::build(PhiVariant::Corrected, k_ref, params, false)?;
    let psi = reference.data.psi;
    for k in 3..k_ref {
        let problem = reference.problem(k, params)?;
        let mass = problem.solver.discretization().mass();
        let mut cols = Vec::new();
        for a in reference.solution.control.atoms(0) {
            cols.push(atom_column(&problem, 0, a.time)?);
        }
        cols.push(offset_column(&problem, 0)?);
        let gram = DMatrix::from_fn(cols.len(), cols.len(), |a, b| cols[a].inner(&cols[b], mass));
        let mut eig: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));

        // p1 of the discrete problem at the exact control
        let y = problem.state(&reference.solution.control)?;
        let mut residual = y.moments(mass);
        residual.axpy(-1.0, &problem.target);
        let p1 = compute_p1(&problem.solver.solve_adjoint(&residual)?, &problem.g_loads[0]);
        let err = (0..=4000)
            .map(|s| HORIZON * f64::from(s) / 4000.0)
            .map(|t| (p1.eval(t) - psi.p1(t, HORIZON)).abs())
            .fold(0.0, f64::max);
        let eig: Vec<String> = eig.iter().map(|v| format!("{v:.3e}")).collect();
        println!("k={k}: Gram eigenvalues [{}], max |p1_h - p1| / alpha = {:.3e}", eig.join(", "), err / ALPHA);
    }
    Ok(())
}
