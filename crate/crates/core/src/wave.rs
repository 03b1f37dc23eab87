//! Stabilized space-time finite elements for the wave equation.
//!
//! The discrete solution is continuous and piecewise linear in time with P1
//! values in space. Testing the space-time weak form with `e_n (x) phi_i`
//! reduces it to a three-level recurrence with the constant matrix
//! `A = M + sigma tau^2 K`:
//!
//! ```text
//! A (y_{n+1} - 2 y_n + y_{n-1}) / tau^2 + K y_n = F_n / tau,   n = 1..M-1
//! A (y_1 - y_0) / tau + (tau / 2) K y_0 = (y_1, phi) + F_0
//! ```
//!
//! where `F_n = int int f e_n phi` are the hat moments of the source. The
//! recurrence is cross-checked against a direct assembly of the full
//! space-time system in [`galerkin_oracle`]. The adjoint is obtained by time
//! reversal of the forward solve.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_mass, assemble_stiffness, max_generalized_eigenvalue, ritz_projection};
use crate::linalg::{axpy, dot, BandCholesky, SparseSymmetricMatrix};
use crate::mesh::{Point, TriMesh};
use crate::quadrature::QuadratureRule;
use crate::time::TimeGrid;

/// Mesh plus its assembled interior mass and stiffness matrices.
#[derive(Debug)]
pub struct Discretization {
    mesh: TriMesh,
    mass: SparseSymmetricMatrix,
    stiffness: SparseSymmetricMatrix,
}

impl Discretization {
    pub fn new(mesh: TriMesh) -> Self {
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh);
        Self { mesh, mass, stiffness }
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn mass(&self) -> &SparseSymmetricMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseSymmetricMatrix {
        &self.stiffness
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_dofs()
    }
}

/// Nodal coefficients `y[m][i]` of a function in `S_tau (x) S_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: TimeGrid,
    n_dofs: usize,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: TimeGrid, n_dofs: usize) -> Self {
        Self { grid, n_dofs, data: vec![0.0; grid.n_nodes() * n_dofs] }
    }

    pub fn from_fn(grid: TimeGrid, n_dofs: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(grid, n_dofs);
        for m in 0..grid.n_nodes() {
            for i in 0..n_dofs {
                out.data[m * n_dofs + i] = f(m, i);
            }
        }
        out
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        &self.data[m * self.n_dofs..(m + 1) * self.n_dofs]
    }

    pub fn slice_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.n_dofs..(m + 1) * self.n_dofs]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `t -> T - t`
    pub fn reversed(&self) -> Self {
        let mut out = Self::zeros(self.grid, self.n_dofs);
        let last = self.grid.steps();
        for m in 0..=last {
            out.slice_mut(m).copy_from_slice(self.slice(last - m));
        }
        out
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &SpaceTimeField) {
        assert_eq!(self.data.len(), other.data.len());
        axpy(alpha, &other.data, &mut self.data);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { grid: self.grid, n_dofs: self.n_dofs, data: self.data.iter().map(|v| alpha * v).collect() }
    }

    /// Hat moments of this field as a source: `int int y e_m phi_i`.
    pub fn moments(&self, mass: &SparseSymmetricMatrix) -> TimeLoad {
        let (diag, off) = self.grid.mass_entries();
        let n = self.n_dofs;
        let mut out = TimeLoad::zeros(self.grid, n);
        let mut tmp = vec![0.0; n];
        for m in 0..self.grid.n_nodes() {
            mass.mul_vec(self.slice(m), &mut tmp);
            axpy(diag[m], &tmp, out.slice_mut(m));
            if m > 0 {
                axpy(off, &tmp, out.slice_mut(m - 1));
            }
            if m < self.grid.steps() {
                axpy(off, &tmp, out.slice_mut(m + 1));
            }
        }
        out
    }

    /// Exact `L^2(Omega_T)` inner product of two fields on the same grids.
    pub fn inner(&self, other: &SpaceTimeField, mass: &SparseSymmetricMatrix) -> f64 {
        self.moments(mass).pair(other)
    }

    pub fn l2_norm(&self, mass: &SparseSymmetricMatrix) -> f64 {
        self.inner(self, mass).max(0.0).sqrt()
    }

    /// `max_m || y(t_m) ||_{L^2(Omega)}` (attained at a node for piecewise linear `y`).
    pub fn max_l2_in_time(&self, mass: &SparseSymmetricMatrix) -> f64 {
        (0..self.grid.n_nodes())
            .map(|m| mass.bilinear(self.slice(m), self.slice(m)).max(0.0).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn eval(&self, mesh: &TriMesh, t: f64, x: Point) -> f64 {
        let j = self.grid.interval_of(t);
        let r = ((t - self.grid.node(j)) / self.grid.tau()).clamp(0.0, 1.0);
        (1.0 - r) * mesh.eval_p1(self.slice(j), x) + r * mesh.eval_p1(self.slice(j + 1), x)
    }

    /// Interpolates onto a nested finer space-time grid (exact).
    pub fn prolongate(&self, coarse: &TriMesh, fine: &TriMesh, fine_grid: TimeGrid) -> Result<Self> {
        if !self.grid.nests_in(&fine_grid) || fine.level() < coarse.level() {
            return Err(Error::NonNested(format!(
                "cannot prolongate M={} level {} to M={} level {}",
                self.grid.steps(),
                coarse.level(),
                fine_grid.steps(),
                fine.level()
            )));
        }
        let ratio = fine_grid.steps() / self.grid.steps();
        let spatial: Vec<Vec<f64>> =
            (0..self.grid.n_nodes()).map(|m| crate::fem::prolongate(coarse, fine, self.slice(m))).collect();
        let mut out = SpaceTimeField::zeros(fine_grid, fine.n_dofs());
        for mf in 0..fine_grid.n_nodes() {
            let j = (mf / ratio).min(self.grid.steps() - 1);
            let r = (mf - j * ratio) as f64 / ratio as f64;
            let dst = out.slice_mut(mf);
            for i in 0..dst.len() {
                dst[i] = (1.0 - r) * spatial[j][i] + r * spatial[j + 1][i];
            }
        }
        Ok(out)
    }
}

/// Hat moments `F[m][i] = int_0^T int_Omega f e_m phi_i` of a source term.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeLoad {
    grid: TimeGrid,
    n_dofs: usize,
    data: Vec<f64>,
}

impl TimeLoad {
    pub fn zeros(grid: TimeGrid, n_dofs: usize) -> Self {
        Self { grid, n_dofs, data: vec![0.0; grid.n_nodes() * n_dofs] }
    }

    /// Moments of `f(t, x) = u(t) g(x)` from the time moments of `u` and the
    /// spatial load vector of `g`.
    pub fn separable(grid: TimeGrid, time_moments: &[f64], spatial: &[f64]) -> Self {
        let mut out = Self::zeros(grid, spatial.len());
        out.add_separable(1.0, time_moments, spatial);
        out
    }

    pub fn add_separable(&mut self, alpha: f64, time_moments: &[f64], spatial: &[f64]) {
        assert_eq!(time_moments.len(), self.grid.n_nodes());
        for (m, &w) in time_moments.iter().enumerate() {
            if w != 0.0 {
                axpy(alpha * w, spatial, self.slice_mut(m));
            }
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        &self.data[m * self.n_dofs..(m + 1) * self.n_dofs]
    }

    pub fn slice_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.n_dofs..(m + 1) * self.n_dofs]
    }

    pub fn reversed(&self) -> Self {
        let mut out = Self::zeros(self.grid, self.n_dofs);
        let last = self.grid.steps();
        for m in 0..=last {
            out.slice_mut(m).copy_from_slice(self.slice(last - m));
        }
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn axpy(&mut self, alpha: f64, other: &TimeLoad) {
        assert_eq!(self.data.len(), other.data.len());
        axpy(alpha, &other.data, &mut self.data);
    }

    /// `int int f y` for a field `y` in the discrete space: exact.
    pub fn pair(&self, field: &SpaceTimeField) -> f64 {
        assert_eq!(self.data.len(), field.data.len());
        dot(&self.data, &field.data)
    }
}

/// Initial displacement (already projected onto `S_h`) and the load
/// `(y_1, phi_i)` of the initial velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub y0: Vec<f64>,
    pub y1_load: Vec<f64>,
}

impl InitialData {
    pub fn zero(n_dofs: usize) -> Self {
        Self { y0: vec![0.0; n_dofs], y1_load: vec![0.0; n_dofs] }
    }

    /// Ritz-projects `y0` (given through its gradient) and assembles `(y1, phi)`.
    pub fn from_functions(
        mesh: &TriMesh,
        y0_gradient: impl Fn(Point) -> [f64; 2],
        y1: impl Fn(Point) -> f64,
        rule: &QuadratureRule,
    ) -> Result<Self> {
        Ok(Self { y0: ritz_projection(mesh, y0_gradient, rule)?, y1_load: assemble_load(mesh, y1, rule) })
    }

    pub fn is_zero(&self) -> bool {
        self.y0.iter().chain(&self.y1_load).all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub sigma: f64,
    /// `eps_0` in `(0, 1]` of the stability conditions.
    pub eps0: f64,
    /// Ritz-projection constant `c_2` (only enters the third condition).
    pub c2: f64,
}

impl SchemeParams {
    pub fn new(sigma: f64) -> Self {
        Self { sigma, eps0: 0.1, c2: 1.0 }
    }

    pub fn crank_nicolson() -> Self {
        Self::new(0.25)
    }

    pub fn is_unconditional(&self) -> bool {
        self.sigma >= 0.25
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Outcome of the stability conditions for `sigma < 1/4`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StabilityReport {
    pub sigma: f64,
    pub tau: f64,
    pub h: f64,
    pub lambda_max: f64,
    /// Inverse-inequality constant expressed as `1 / (h^2 lambda_max(K, M))`.
    pub c1: f64,
    pub inequalities: [Inequality; 3],
    pub unconditional: bool,
    pub passed: bool,
}

impl StabilityReport {
    /// Index (1-based) of the first violated condition.
    pub fn first_failure(&self) -> Option<usize> {
        if self.passed {
            return None;
        }
        let skip = if self.unconditional { 2 } else { 0 };
        self.inequalities.iter().enumerate().skip(skip).find(|(_, q)| !q.holds).map(|(i, _)| i + 1)
    }

    pub fn describe(&self) -> String {
        match self.first_failure() {
            None => format!("stable (sigma={}, tau={}, h={})", self.sigma, self.tau, self.h),
            Some(i) => {
                let q = self.inequalities[i - 1];
                format!(
                    "stability inequality {i} violated: {:.6e} < {:.6e} (sigma={}, tau={}, h={}, c1={:.6e})",
                    q.lhs, q.rhs, self.sigma, self.tau, self.h, self.c1
                )
            }
        }
    }
}

/// Evaluates the three step-size conditions with `c_1` measured on the mesh.
///
/// With `lambda = lambda_max(K, M)` and `c1 = 1 / (h^2 lambda)` the conditions read
/// 1. `sigma >= 1/4 - c1 h^2 (1 - eps0^2) / tau^2`
/// 2. `sigma >= (1 + eps0^2)/4 - c1 h^2 / tau^2`
/// 3. `|sigma| tau^2 <= 2 (c2 h^2 + tau^2)`
///
/// For `sigma >= 1/4` the scheme is unconditionally stable and only the third
/// condition decides.
pub fn stability_gate(params: &SchemeParams, grid: &TimeGrid, disc: &Discretization) -> Result<StabilityReport> {
    let lambda_max = max_generalized_eigenvalue(disc.stiffness(), disc.mass(), 5000, 1e-12)?;
    Ok(stability_gate_with(params, grid.tau(), disc.mesh().h(), lambda_max))
}

pub fn stability_gate_with(params: &SchemeParams, tau: f64, h: f64, lambda_max: f64) -> StabilityReport {
    let sigma = params.sigma;
    let eps2 = params.eps0 * params.eps0;
    let c1 = 1.0 / (h * h * lambda_max);
    let ratio = c1 * h * h / (tau * tau);
    let ineq = |lhs: f64, rhs: f64| Inequality { lhs, rhs, holds: lhs >= rhs };
    let inequalities = [
        ineq(sigma, 0.25 - ratio * (1.0 - eps2)),
        ineq(sigma, (1.0 + eps2) / 4.0 - ratio),
        ineq(2.0 * (params.c2 * h * h + tau * tau), sigma.abs() * tau * tau),
    ];
    let unconditional = params.is_unconditional();
    let passed = if unconditional { inequalities[2].holds } else { inequalities.iter().all(|q| q.holds) };
    StabilityReport { sigma, tau, h, lambda_max, c1, inequalities, unconditional, passed }
}

/// Forward and adjoint solver for one `(mesh, tau, sigma)` triple. The
/// factorization of `M + sigma tau^2 K` is computed once and shared.
#[derive(Debug)]
pub struct WaveSolver {
    disc: Arc<Discretization>,
    grid: TimeGrid,
    params: SchemeParams,
    factor: BandCholesky,
    report: Option<StabilityReport>,
}

impl WaveSolver {
    /// Builds the solver; for `sigma < 1/4` the stability gate must pass.
    pub fn new(disc: Arc<Discretization>, grid: TimeGrid, params: SchemeParams) -> Result<Self> {
        let report = if params.is_unconditional() {
            None
        } else {
            let report = stability_gate(&params, &grid, &disc)?;
            if !report.passed {
                return Err(Error::StabilityGate(report.describe()));
            }
            Some(report)
        };
        let tau = grid.tau();
        let system = disc.mass().combine(1.0, disc.stiffness(), params.sigma * tau * tau);
        let factor = BandCholesky::factor(&system)?;
        Ok(Self { disc, grid, params, factor, report })
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn stability_report(&self) -> Option<&StabilityReport> {
        self.report.as_ref()
    }

    /// `y_theta` for source moments `load` and initial data `init`.
    pub fn solve_forward(&self, load: &TimeLoad, init: &InitialData) -> Result<SpaceTimeField> {
        let n = self.disc.n_dofs();
        if load.n_dofs() != n || load.grid() != &self.grid || init.y0.len() != n || init.y1_load.len() != n {
            return Err(Error::Config("load / initial data do not match the discretization".into()));
        }
        let tau = self.grid.tau();
        let k = self.disc.stiffness();
        let mut y = SpaceTimeField::zeros(self.grid, n);
        y.slice_mut(0).copy_from_slice(&init.y0);

        let mut ky = vec![0.0; n];
        let mut rhs = vec![0.0; n];

        // first step
        k.mul_vec(&init.y0, &mut ky);
        for i in 0..n {
            rhs[i] = init.y1_load[i] + load.slice(0)[i] - 0.5 * tau * ky[i];
        }
        self.factor.solve_in_place(&mut rhs);
        for i in 0..n {
            y.data[n + i] = init.y0[i] + tau * rhs[i];
        }

        for step in 1..self.grid.steps() {
            let (past, future) = y.data.split_at_mut((step + 1) * n);
            let prev = &past[(step - 1) * n..step * n];
            let cur = &past[step * n..];
            k.mul_vec(cur, &mut ky);
            let f = load.slice(step);
            for i in 0..n {
                rhs[i] = tau * f[i] - tau * tau * ky[i];
            }
            self.factor.solve_in_place(&mut rhs);
            let next = &mut future[..n];
            for i in 0..n {
                next[i] = 2.0 * cur[i] - prev[i] + rhs[i];
            }
        }
        if !y.is_finite() {
            return Err(Error::Numerical("non-finite values in forward solve".into()));
        }
        Ok(y)
    }

    /// Forward solve with zero initial data (`L_theta`).
    pub fn solve_source(&self, load: &TimeLoad) -> Result<SpaceTimeField> {
        self.solve_forward(load, &InitialData::zero(self.disc.n_dofs()))
    }

    /// Discrete adjoint `L*_theta`: reverse the source in time, solve forward
    /// with zero data, reverse the result. Vanishes at `t = T`.
    pub fn solve_adjoint(&self, load: &TimeLoad) -> Result<SpaceTimeField> {
        Ok(self.solve_source(&load.reversed())?.reversed())
    }
}

/// Maximum number of space-time unknowns accepted by [`galerkin_oracle`].
pub const ORACLE_MAX_UNKNOWNS: usize = 2000;

/// Solves the space-time Galerkin system by direct dense assembly of the
/// bilinear form over `e_m (x) phi_j` against all test functions
/// `e_n (x) phi_i`, `n < M`. Time integrals use two-point Gauss quadrature on
/// each interval (exact for the polynomial integrands involved).
pub fn galerkin_oracle(
    disc: &Discretization,
    grid: &TimeGrid,
    params: &SchemeParams,
    load: &TimeLoad,
    init: &InitialData,
) -> Result<SpaceTimeField> {
    let n = disc.n_dofs();
    let steps = grid.steps();
    if (steps + 1) * n > ORACLE_MAX_UNKNOWNS {
        return Err(Error::SizeGuard(format!(
            "space-time system with {} unknowns exceeds the oracle limit {ORACLE_MAX_UNKNOWNS}",
            (steps + 1) * n
        )));
    }
    let tau = grid.tau();
    let nodes = grid.n_nodes();
    let mut tmass = DMatrix::<f64>::zeros(nodes, nodes);
    let mut tder = DMatrix::<f64>::zeros(nodes, nodes);
    let gp = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    for j in 0..steps {
        for &s in &gp {
            let w = 0.5 * tau;
            let vals = [1.0 - s, s];
            let ders = [-1.0 / tau, 1.0 / tau];
            for a in 0..2 {
                for b in 0..2 {
                    tmass[(j + a, j + b)] += w * vals[a] * vals[b];
                    tder[(j + a, j + b)] += w * ders[a] * ders[b];
                }
            }
        }
    }
    let mass = disc.mass().to_dense();
    let stiff = disc.stiffness().to_dense();
    let stab = (params.sigma - 1.0 / 6.0) * tau * tau;
    // block (test n, trial m)
    let block = |nn: usize, m: usize| -> DMatrix<f64> {
        &mass * (-tder[(nn, m)]) + &stiff * (-stab * tder[(nn, m)] + tmass[(nn, m)])
    };
    let size = steps * n;
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    let y0 = DVector::from_column_slice(&init.y0);
    for nn in 0..steps {
        for m in 0..=steps {
            if tmass[(nn, m)] == 0.0 && tder[(nn, m)] == 0.0 {
                continue;
            }
            let b = block(nn, m);
            if m == 0 {
                let shift = &b * &y0;
                for i in 0..n {
                    rhs[nn * n + i] -= shift[i];
                }
            } else {
                a.view_mut((nn * n, (m - 1) * n), (n, n)).copy_from(&b);
            }
        }
        for i in 0..n {
            rhs[nn * n + i] += load.slice(nn)[i];
            if nn == 0 {
                rhs[i] += init.y1_load[i];
            }
        }
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("space-time Galerkin system is singular".into()))?;
    let mut out = SpaceTimeField::zeros(*grid, n);
    out.slice_mut(0).copy_from_slice(&init.y0);
    for m in 1..=steps {
        out.slice_mut(m).copy_from_slice(&sol.as_slice()[(m - 1) * n..m * n]);
    }
    Ok(out)
}

/// Norms entering the a priori bound `max ||y|| <= c (||y0||_{H^1} + ||y1|| + ||f||_{L^1(L^2)})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataNorms {
    pub y0_h1: f64,
    pub y1_l2: f64,
    pub f_l1_l2: f64,
}

impl DataNorms {
    pub fn total(&self) -> f64 {
        self.y0_h1 + self.y1_l2 + self.f_l1_l2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StabilityMonitor {
    pub max_l2: f64,
    pub data_norm: f64,
    /// `None` when both numerator and data vanish.
    pub ratio: Option<f64>,
}

pub fn stability_norm_check(field: &SpaceTimeField, mass: &SparseSymmetricMatrix, data: DataNorms) -> StabilityMonitor {
    let max_l2 = field.max_l2_in_time(mass);
    let data_norm = data.total();
    let ratio = if data_norm == 0.0 {
        if max_l2 == 0.0 {
            None
        } else {
            Some(f64::INFINITY)
        }
    } else {
        Some(max_l2 / data_norm)
    };
    StabilityMonitor { max_l2, data_norm, ratio }
}


#[cfg(test)]
mod equivalence_tests {
    use super::*;
    use crate::mesh::build_uniform_mesh;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(k: u32, steps: usize, seed: u64) -> (Arc<Discretization>, TimeGrid, TimeLoad, InitialData) {
        let d = Arc::new(Discretization::new(build_uniform_mesh(k).unwrap()));
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = d.n_dofs();
        let mut load = TimeLoad::zeros(grid, n);
        load.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let init = InitialData {
            y0: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            y1_load: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        (d, grid, load, init)
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn recurrence_matches_direct_galerkin_assembly() {
        for sigma in [0.0, 1.0 / 6.0, 0.25, 1.0 / 3.0] {
            let (d, grid, load, init) = random_problem(2, 10, 3);
            let params = SchemeParams::new(sigma);
            let solver = WaveSolver::new(d.clone(), grid, params).unwrap();
            let y = solver.solve_forward(&load, &init).unwrap();
            let oracle = galerkin_oracle(&d, &grid, &params, &load, &init).unwrap();
            let scale = oracle.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_abs_diff(y.data(), oracle.data()) <= 1e-12 * scale, "sigma={sigma}");
        }
    }

    #[test]
    fn adjoint_identity_holds_to_roundoff() {
        let (d, grid, f, _) = random_problem(3, 16, 11);
        let (_, _, g, _) = random_problem(3, 16, 12);
        let solver = WaveSolver::new(d, grid, SchemeParams::crank_nicolson()).unwrap();
        let lhs = g.pair(&solver.solve_source(&f).unwrap());
        let rhs = f.pair(&solver.solve_adjoint(&g).unwrap());
        assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
    }

    /// Crank-Nicolson for the first-order system `y' = v, M v' = -K y + f`
    /// with `f` constant on each interval and `M v_0 = (y_1, phi)`.
    #[test]
    fn sigma_quarter_is_crank_nicolson() {
        let d = Discretization::new(build_uniform_mesh(2).unwrap());
        let grid = TimeGrid::new(1.5, 9).unwrap();
        let n = d.n_dofs();
        let tau = grid.tau();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f_half: Vec<Vec<f64>> =
            (0..grid.steps()).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut load = TimeLoad::zeros(grid, n);
        for m in 0..grid.n_nodes() {
            for i in 0..n {
                let left = if m > 0 { f_half[m - 1][i] } else { 0.0 };
                let right = if m < grid.steps() { f_half[m][i] } else { 0.0 };
                load.slice_mut(m)[i] = 0.5 * tau * (left + right);
            }
        }
        let disc = Arc::new(d);
        let solver = WaveSolver::new(disc.clone(), grid, SchemeParams::crank_nicolson()).unwrap();
        let y = solver.solve_forward(&load, &InitialData { y0: y0.clone(), y1_load: b1.clone() }).unwrap();

        let mm = disc.mass().to_dense();
        let kk = disc.stiffness().to_dense();
        let lhs = (&mm * (2.0 / (tau * tau)) + &kk * 0.5).lu();
        let rhs_y = &mm * (2.0 / (tau * tau)) - &kk * 0.5;
        let mut yc = DVector::from_vec(y0);
        let mut vc = mm.clone().lu().solve(&DVector::from_vec(b1)).unwrap();
        for step in 0..grid.steps() {
            let f = DVector::from_column_slice(&f_half[step]);
            let rhs = &rhs_y * &yc + &mm * &vc * (2.0 / tau) + f;
            let next = lhs.solve(&rhs).unwrap();
            vc = (&next - &yc) * (2.0 / tau) - vc;
            yc = next;
            let diff = max_abs_diff(yc.as_slice(), y.slice(step + 1));
            assert!(diff < 1e-11 * yc.amax().max(1.0), "step {step}: {diff}");
        }
    }

    /// Staggered leap-frog with velocities at half steps.
    #[test]
    fn sigma_zero_is_leap_frog() {
        let (d, grid, load, init) = random_problem(2, 12, 8);
        let solver = WaveSolver::new(d.clone(), grid, SchemeParams::new(0.0)).unwrap();
        let y = solver.solve_forward(&load, &init).unwrap();
        let tau = grid.tau();
        let minv = d.mass().to_dense().try_inverse().unwrap();
        let kk = d.stiffness().to_dense();
        let col = |s: &[f64]| DVector::from_column_slice(s);
        let mut yc = col(&init.y0);
        let v0 = &minv * col(&init.y1_load);
        let mut v = v0 + &minv * (-(&kk * &yc) + col(load.slice(0)) * (2.0 / tau)) * (tau / 2.0);
        for step in 0..grid.steps() {
            if step > 0 {
                v += &minv * (-(&kk * &yc) + col(load.slice(step)) / tau) * tau;
            }
            yc += &v * tau;
            let diff = max_abs_diff(yc.as_slice(), y.slice(step + 1));
            assert!(diff < 1e-10 * yc.amax().max(1.0), "step {step}: {diff}");
        }
    }
}
