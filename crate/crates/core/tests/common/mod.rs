//! Oracles shared by the integration targets.
#![allow(dead_code)]

use bvwave::subproblem::SubproblemModel;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Minimum over all sign patterns of the objective at the pattern's
/// stationary point; the optimal pattern attains the true minimum.
pub fn brute_force(model: &SubproblemModel) -> f64 {
    let n = model.dim();
    let penalized: Vec<usize> = (0..n).filter(|&i| model.weights[i] > 0.0).collect();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(penalized.len() as u32) {
        let mut signs = vec![2i8; n];
        let mut c = code;
        for &i in &penalized {
            signs[i] = (c % 3) as i8 - 1;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| signs[i] != 0).collect();
        let mut q = DVector::zeros(n);
        if !free.is_empty() {
            let h = DMatrix::from_fn(free.len(), free.len(), |a, b| model.gram[(free[a], free[b])]);
            let r = DVector::from_fn(free.len(), |a, _| {
                let i = free[a];
                let s = if signs[i] == 2 { 0.0 } else { f64::from(signs[i]) };
                model.rhs[i] - model.weights[i] * s
            });
            let Some(sol) = h.lu().solve(&r) else { continue };
            for (a, &i) in free.iter().enumerate() {
                q[i] = sol[a];
            }
        }
        best = best.min(model.objective(&q));
    }
    best
}

pub fn random_model(rng: &mut ChaCha8Rng) -> SubproblemModel {
    let atoms = rng.gen_range(1..=6);
    let offsets = rng.gen_range(1..=2);
    let n = atoms + offsets;
    // Gram matrix of random columns, as PDAP produces
    let rows = n + 3;
    let a = DMatrix::from_fn(rows, n, |_, _| rng.gen_range(-1.0..1.0));
    let gram = a.transpose() * &a;
    let rhs = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let alpha = rng.gen_range(0.01..1.0);
    let weights = (0..n).map(|i| if i < atoms { alpha } else { 0.0 }).collect();
    SubproblemModel { gram, rhs, weights }
}

use bvwave::wave::{Discretization, InitialData, TimeLoad};

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Nodal loads of a load that is constant in time on every interval,
/// `F_m = tau/2 (f_{m-1/2} + f_{m+1/2})`.
pub fn piecewise_constant_load(grid: bvwave::time::TimeGrid, f_half: &[Vec<f64>]) -> TimeLoad {
    let n = f_half[0].len();
    let tau = grid.tau();
    let mut load = TimeLoad::zeros(grid, n);
    for m in 0..grid.n_nodes() {
        for i in 0..n {
            let left = if m > 0 { f_half[m - 1][i] } else { 0.0 };
            let right = if m < grid.steps() { f_half[m][i] } else { 0.0 };
            load.slice_mut(m)[i] = 0.5 * tau * (left + right);
        }
    }
    load
}

/// Crank-Nicolson for `y' = v, M v' = -K y + f` with `f` constant per
/// interval and `M v_0 = b1`. Returns `y` at every node.
pub fn crank_nicolson(disc: &Discretization, tau: f64, f_half: &[Vec<f64>], init: &InitialData) -> Vec<Vec<f64>> {
    let mm = disc.mass().to_dense();
    let kk = disc.stiffness().to_dense();
    let lhs = (&mm * (2.0 / (tau * tau)) + &kk * 0.5).lu();
    let rhs_y = &mm * (2.0 / (tau * tau)) - &kk * 0.5;
    let mut y = DVector::from_column_slice(&init.y0);
    let mut v = mm.clone().lu().solve(&DVector::from_column_slice(&init.y1_load)).unwrap();
    let mut out = vec![init.y0.clone()];
    for f in f_half {
        let rhs = &rhs_y * &y + &mm * &v * (2.0 / tau) + DVector::from_column_slice(f);
        let next = lhs.solve(&rhs).unwrap();
        v = (&next - &y) * (2.0 / tau) - v;
        y = next;
        out.push(y.as_slice().to_vec());
    }
    out
}

/// Staggered leap-frog with velocities at half steps, driven by nodal loads.
pub fn leap_frog(disc: &Discretization, load: &TimeLoad, init: &InitialData) -> Vec<Vec<f64>> {
    let tau = load.grid().tau();
    let minv = disc.mass().to_dense().try_inverse().unwrap();
    let kk = disc.stiffness().to_dense();
    let col = DVector::from_column_slice;
    let mut y = col(&init.y0);
    let mut v = &minv * col(&init.y1_load) + &minv * (-(&kk * &y) + col(load.slice(0)) * (2.0 / tau)) * (tau / 2.0);
    let mut out = vec![init.y0.clone()];
    for step in 0..load.grid().steps() {
        if step > 0 {
            v += &minv * (-(&kk * &y) + col(load.slice(step)) / tau) * tau;
        }
        y += &v * tau;
        out.push(y.as_slice().to_vec());
    }
    out
}
