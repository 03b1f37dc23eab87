//! The L1-penalized quadratic solved in every PDAP iteration, compared with
//! plain soft thresholding for an orthogonal Gram matrix.
//!
//! cargo run --release --example magnitude_subproblem

use bvwave::subproblem::{soft_threshold, solve_magnitude_subproblem, SubproblemConfig, SubproblemModel};
use nalgebra::{DMatrix, DVector};

fn main() -> bvwave::Result<()> {
    let config = SubproblemConfig::default();
    let diag = SubproblemModel {
        gram: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.5])),
        rhs: DVector::from_vec(vec![1.5, -0.2, 0.9]),
        weights: vec![0.4; 3],
    };
    let sol = solve_magnitude_subproblem(&diag, &config, None)?;
    let expected: Vec<f64> = (0..3).map(|i| soft_threshold(diag.rhs[i], 0.4) / diag.gram[(i, i)]).collect();
    println!("orthogonal: q = {:?}, soft thresholding gives {expected:?}", sol.q.as_slice());

    // nearly collinear atom columns plus an unpenalized offset
    let gram = DMatrix::from_row_slice(4, 4, &[
        1.00, 0.98, 0.10, 0.30,
        0.98, 1.00, 0.12, 0.28,
        0.10, 0.12, 1.00, 0.05,
        0.30, 0.28, 0.05, 0.50,
    ]);
    let model = SubproblemModel { gram, rhs: DVector::from_vec(vec![1.0, 0.9, -0.6, 0.2]), weights: vec![0.05, 0.05, 0.05, 0.0] };
    let sol = solve_magnitude_subproblem(&model, &config, None)?;
    println!(
        "coupled: q = {:.6?}\n  objective {:.9}, KKT residual {:.1e}, gamma {:.1e}, fallback used: {}",
        sol.q.as_slice(),
        sol.objective,
        sol.kkt_residual,
        sol.gamma,
        sol.used_fallback
    );
    Ok(())
}
