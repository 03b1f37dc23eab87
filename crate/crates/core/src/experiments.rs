//! Manufactured reference problem with a known piecewise-constant optimal
//! control, error metrics and the simultaneous-refinement convergence study.
//!
//! The data are built so that the optimal adjoint is `p = psi(t) g(x)`:
//! `y_d = S(u) - (d_tt - Laplace)(psi g)`, which yields
//! `p_1(t) = -int_t^T psi = alpha sin^3(3 pi t / 2)` for the corrected profile.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::control::{apply_b, Atom, MeasureControl};
use crate::error::{Error, Result};
use crate::fem::assemble_load;
use crate::mesh::{build_uniform_mesh, Point, TriMesh};
use crate::pdap::{run_pdap, ControlProblem, PdapConfig, PdapResult};
use crate::quadrature::QuadratureRule;
use crate::time::{gauss_legendre_6, StepFunction, TimeGrid};
use crate::wave::{Discretization, SchemeParams, SpaceTimeField, TimeLoad, WaveSolver};

pub const HORIZON: f64 = 2.0;
pub const ALPHA: f64 = 6e-3;
/// Half the minimal separation of the reference jumps.
pub const MATCH_RADIUS: f64 = 1.0 / 6.0;

pub fn g(x: Point) -> f64 {
    (PI * x[0] / 2.0).cos() * (PI * x[1] / 2.0).cos()
}

/// Temporal profile of the adjoint `psi(t) = A sin(a t) sin(b t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PhiVariant {
    /// `(9 pi alpha / 4) sin(3 pi t) sin(3 pi t / 2)`, consistent with the jumps at 1/3, 1, 5/3
    Corrected,
    /// `(3 pi alpha / 2) sin(2 pi t) sin(pi t)`, whose `p_1` peaks at 1/2 and 3/2 instead
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psi {
    amp: f64,
    a: f64,
    b: f64,
}

impl Psi {
    pub fn new(variant: PhiVariant, alpha: f64) -> Self {
        match variant {
            PhiVariant::Corrected => Self { amp: 9.0 * PI * alpha / 4.0, a: 3.0 * PI, b: 1.5 * PI },
            PhiVariant::Printed => Self { amp: 1.5 * PI * alpha, a: 2.0 * PI, b: PI },
        }
    }

    // sin(at) sin(bt) = (cos(c1 t) - cos(c2 t)) / 2
    fn freqs(&self) -> (f64, f64) {
        (self.a - self.b, self.a + self.b)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.amp * (self.a * t).sin() * (self.b * t).sin()
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let (c1, c2) = self.freqs();
        0.5 * self.amp * (-c1 * c1 * (c1 * t).cos() + c2 * c2 * (c2 * t).cos())
    }

    /// `chi = psi'' + (pi^2 / 2) psi`, so that `(d_tt - Laplace)(psi g) = chi g`.
    pub fn chi(&self, t: f64) -> f64 {
        self.second_derivative(t) + 0.5 * PI * PI * self.value(t)
    }

    fn antiderivative(&self, t: f64) -> f64 {
        let (c1, c2) = self.freqs();
        0.5 * self.amp * ((c1 * t).sin() / c1 - (c2 * t).sin() / c2)
    }

    /// `p_1(t) = -int_t^T psi(s) ds` (using `int g^2 = 1`).
    pub fn p1(&self, t: f64, horizon: f64) -> f64 {
        self.antiderivative(t) - self.antiderivative(horizon)
    }
}

/// Data of the manufactured problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    pub horizon: f64,
    pub alpha: f64,
    pub psi: Psi,
    pub variant: PhiVariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub control: MeasureControl,
    pub u: StepFunction,
}

impl ReferenceSolution {
    pub fn jumps(&self) -> &[Atom] {
        self.control.atoms(0)
    }
}

pub fn reference_control() -> MeasureControl {
    let atoms = vec![
        Atom { time: 1.0 / 3.0, weight: 1.0 },
        Atom { time: 1.0, weight: -1.0 },
        Atom { time: 5.0 / 3.0, weight: 1.0 },
    ];
    MeasureControl::new(HORIZON, vec![atoms], vec![0.0]).expect("valid reference control")
}

pub fn build_reference_scenario(variant: PhiVariant) -> (ProblemData, ReferenceSolution) {
    let control = reference_control();
    let u = apply_b(&control).remove(0);
    let data = ProblemData { horizon: HORIZON, alpha: ALPHA, psi: Psi::new(variant, ALPHA), variant };
    (data, ReferenceSolution { control, u })
}

/// `S(u)` on a fine level with 7-point quadrature for the spatial data.
#[derive(Debug, Clone)]
pub struct ReferenceState {
    pub disc: Arc<Discretization>,
    pub grid: TimeGrid,
    pub field: SpaceTimeField,
    /// `int g phi_i` with the 7-point rule on the reference mesh
    pub g_load: Vec<f64>,
}

impl ReferenceState {
    pub fn mesh(&self) -> &TriMesh {
        self.disc.mesh()
    }
}

pub fn compute_reference_state(
    data: &ProblemData,
    reference: &ReferenceSolution,
    k_ref: u32,
    params: SchemeParams,
) -> Result<ReferenceState> {
    let disc = Arc::new(Discretization::new(build_uniform_mesh(k_ref)?));
    let grid = TimeGrid::with_level(data.horizon, k_ref)?;
    let g_load = assemble_load(disc.mesh(), g, &QuadratureRule::three_point());
    let solver = WaveSolver::new(disc.clone(), grid, params)?;
    let load = TimeLoad::separable(grid, &reference.u.hat_moments(&grid), &g_load);
    let field = solver.solve_source(&load)?;
    Ok(ReferenceState { disc, grid, field, g_load })
}

/// Spatial restriction weights: coarse dof contributions of every fine dof.
fn restriction_map(coarse: &TriMesh, fine: &TriMesh) -> Vec<[(usize, f64); 3]> {
    (0..fine.n_dofs())
        .map(|d| {
            let loc = coarse.locate(fine.nodes()[fine.node_of(d)]);
            loc.map(|(node, w)| match coarse.dof_of(node) {
                Some(dof) => (dof, w),
                None => (0, 0.0),
            })
        })
        .collect()
}

/// Transfers hat moments from a fine nested space-time grid to a coarse one
/// (exact: coarse basis functions are combinations of fine ones).
pub fn restrict_moments(
    fine: &TimeLoad,
    fine_mesh: &TriMesh,
    coarse_mesh: &TriMesh,
    coarse_grid: TimeGrid,
) -> Result<TimeLoad> {
    let fine_grid = *fine.grid();
    if !coarse_grid.nests_in(&fine_grid) || coarse_mesh.level() > fine_mesh.level() {
        return Err(Error::NonNested("cannot restrict moments to a non-nested grid".into()));
    }
    let ratio = fine_grid.steps() / coarse_grid.steps();
    let map = restriction_map(coarse_mesh, fine_mesh);
    let mut spatial = vec![vec![0.0; coarse_mesh.n_dofs()]; fine_grid.n_nodes()];
    for (n, out) in spatial.iter_mut().enumerate() {
        for (d, &v) in fine.slice(n).iter().enumerate() {
            for &(c, w) in &map[d] {
                out[c] += w * v;
            }
        }
    }
    let mut coarse = TimeLoad::zeros(coarse_grid, coarse_mesh.n_dofs());
    for (n, s) in spatial.iter().enumerate() {
        let j = (n / ratio).min(coarse_grid.steps() - 1);
        let r = (n - j * ratio) as f64 / ratio as f64;
        crate::linalg::axpy(1.0 - r, s, coarse.slice_mut(j));
        crate::linalg::axpy(r, s, coarse.slice_mut(j + 1));
    }
    Ok(coarse)
}

/// `sum_m w_m (g, y_m)`: pairing of separable moments with a field.
fn separable_pair(time_moments: &[f64], g_load: &[f64], field: &SpaceTimeField) -> f64 {
    time_moments.iter().enumerate().map(|(m, w)| w * crate::linalg::dot(g_load, field.slice(m))).sum()
}

/// `int_0^T chi^2` by Gauss-Legendre on a uniform grid.
fn chi_norm_sq(psi: &Psi, grid: &TimeGrid) -> f64 {
    let (gx, gw) = gauss_legendre_6();
    let tau = grid.tau();
    let mut acc = 0.0;
    for j in 0..grid.steps() {
        for (x, w) in gx.iter().zip(gw.iter()) {
            let t = grid.node(j) + 0.5 * (x + 1.0) * tau;
            acc += 0.5 * tau * w * psi.chi(t).powi(2);
        }
    }
    acc
}

/// Quantities on the reference level shared by all study levels.
#[derive(Debug, Clone)]
pub struct ReferenceContext {
    pub data: ProblemData,
    pub solution: ReferenceSolution,
    pub state: ReferenceState,
    /// Hat moments of `y_ref` on the reference grid.
    pub state_moments: TimeLoad,
    /// Time moments of `chi` on the reference grid; `chi g` has moments
    /// `chi_time (x) g_load` (7-point rule).
    pub chi_time: Vec<f64>,
    /// `||y_d||^2` with `y_d = y_ref - chi g`
    pub target_norm_sq: f64,
    /// Estimated error of the reference state itself.
    pub richardson_error: Option<f64>,
}

impl ReferenceContext {
    pub fn build(variant: PhiVariant, k_ref: u32, params: SchemeParams, richardson: bool) -> Result<Self> {
        let (data, solution) = build_reference_scenario(variant);
        let state = compute_reference_state(&data, &solution, k_ref, params)?;
        let mass = state.disc.mass();
        let state_moments = state.field.moments(mass);
        let chi_time = state.grid.smooth_moments(|t| data.psi.chi(t));
        let y_sq = state_moments.pair(&state.field);
        let cross = separable_pair(&chi_time, &state.g_load, &state.field);
        let target_norm_sq = y_sq - 2.0 * cross + chi_norm_sq(&data.psi, &state.grid);
        let richardson_error = if richardson && k_ref > crate::mesh::MIN_LEVEL {
            let coarse = compute_reference_state(&data, &solution, k_ref - 1, params)?;
            let fine = coarse.field.prolongate(coarse.mesh(), state.mesh(), state.grid)?;
            let mut diff = fine;
            diff.axpy(-1.0, &state.field);
            // second-order convergence: ||y_{k-1} - y_k|| is about 3 ||y_k - y||
            Some(diff.l2_norm(mass) / 3.0)
        } else {
            None
        };
        Ok(Self { data, solution, state, state_moments, chi_time, target_norm_sq, richardson_error })
    }

    pub fn level(&self) -> u32 {
        self.state.mesh().level()
    }

    /// Discrete control problem on level `k` (3-point rule for `g`).
    pub fn problem(&self, k: u32, params: SchemeParams) -> Result<ControlProblem> {
        if k > self.level() {
            return Err(Error::Config(format!("level {k} above reference level {}", self.level())));
        }
        let disc = Arc::new(Discretization::new(build_uniform_mesh(k)?));
        let grid = TimeGrid::with_level(self.data.horizon, k)?;
        let solver = Arc::new(WaveSolver::new(disc.clone(), grid, params)?);
        let g_load = assemble_load(disc.mesh(), g, &QuadratureRule::three_point());
        let mut target = restrict_moments(&self.state_moments, self.state.mesh(), disc.mesh(), grid)?;
        let chi_t = grid.smooth_moments(|t| self.data.psi.chi(t));
        target.add_separable(-1.0, &chi_t, &g_load);
        Ok(ControlProblem {
            solver,
            g_loads: vec![g_load],
            alpha: vec![self.data.alpha],
            target,
            target_norm_sq: self.target_norm_sq,
        })
    }

    /// `||a - y_ref||_{L^2(Omega_T)}` for a field on a coarser nested level.
    pub fn state_error(&self, field: &SpaceTimeField, mesh: &TriMesh) -> Result<f64> {
        let diff = self.state_difference(field, mesh)?;
        Ok(diff.l2_norm(self.state.disc.mass()))
    }

    fn state_difference(&self, field: &SpaceTimeField, mesh: &TriMesh) -> Result<SpaceTimeField> {
        let mut diff = field.prolongate(mesh, self.state.mesh(), self.state.grid)?;
        diff.axpy(-1.0, &self.state.field);
        Ok(diff)
    }

    /// `|J(v,c) - J_theta(v_theta, c_theta)|` from the error `e = S_theta - y_ref`:
    /// `1/2 ||e||^2 + (e, chi g) + alpha (TV_theta - TV)`.
    pub fn cost_error(&self, field: &SpaceTimeField, mesh: &TriMesh, control: &MeasureControl) -> Result<f64> {
        let e = self.state_difference(field, mesh)?;
        let half_sq = 0.5 * e.inner(&e, self.state.disc.mass());
        let cross = separable_pair(&self.chi_time, &self.state.g_load, &e);
        let tv = control.total_variation(0) - self.solution.control.total_variation(0);
        Ok((half_sq + cross + self.data.alpha * tv).abs())
    }
}

/// Space-time `L^2` distance of two fields; `b` may live on a coarser nested level.
pub fn state_l2_error(
    a: &SpaceTimeField,
    a_mesh: &TriMesh,
    b: &SpaceTimeField,
    b_mesh: &TriMesh,
    mass: &crate::linalg::SparseSymmetricMatrix,
) -> Result<f64> {
    let mut diff = b.prolongate(b_mesh, a_mesh, *a.grid())?;
    diff.axpy(-1.0, a);
    Ok(diff.l2_norm(mass))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ControlErrors {
    pub l1: f64,
    pub jump_positions: Vec<f64>,
    pub jump_amplitudes: Vec<f64>,
    pub offset: f64,
    pub tv: f64,
    /// Every reference jump matched by exactly one atom and no atom left over.
    pub count_ok: bool,
}

impl ControlErrors {
    pub fn position_max(&self) -> f64 {
        self.jump_positions.iter().copied().fold(0.0, f64::max)
    }

    pub fn amplitude_max(&self) -> f64 {
        self.jump_amplitudes.iter().copied().fold(0.0, f64::max)
    }
}

/// Matches recovered atoms to reference jumps by nearest time within `radius`.
pub fn control_errors(reference: &MeasureControl, got: &MeasureControl, radius: f64) -> ControlErrors {
    let truth = reference.atoms(0);
    let atoms = got.atoms(0);
    let nearest = |t: f64| {
        (0..truth.len())
            .min_by(|&a, &b| (truth[a].time - t).abs().total_cmp(&(truth[b].time - t).abs()))
            .expect("reference has jumps")
    };
    let mut matched: Vec<Option<usize>> = vec![None; truth.len()];
    let mut leftover = vec![0.0; truth.len()];
    let mut count_ok = atoms.len() == truth.len();
    for (a, atom) in atoms.iter().enumerate() {
        let j = nearest(atom.time);
        let better = match matched[j] {
            None => true,
            Some(prev) => (atom.time - truth[j].time).abs() < (atoms[prev].time - truth[j].time).abs(),
        };
        if (atom.time - truth[j].time).abs() > radius {
            count_ok = false;
            leftover[j] += atom.weight.abs();
            continue;
        }
        if better {
            if let Some(prev) = matched[j] {
                leftover[j] += atoms[prev].weight.abs();
                count_ok = false;
            }
            matched[j] = Some(a);
        } else {
            leftover[j] += atom.weight.abs();
            count_ok = false;
        }
    }
    let mut jump_positions = Vec::with_capacity(truth.len());
    let mut jump_amplitudes = Vec::with_capacity(truth.len());
    for (j, jump) in truth.iter().enumerate() {
        match matched[j] {
            Some(a) => {
                jump_positions.push((atoms[a].time - jump.time).abs());
                jump_amplitudes.push((atoms[a].weight - jump.weight).abs() + leftover[j]);
            }
            None => {
                count_ok = false;
                jump_positions.push(f64::INFINITY);
                jump_amplitudes.push(jump.weight.abs() + leftover[j]);
            }
        }
    }
    let l1 = apply_b(reference)[0].l1_distance(&apply_b(got)[0]);
    ControlErrors {
        l1,
        jump_positions,
        jump_amplitudes,
        offset: (reference.offsets()[0] - got.offsets()[0]).abs(),
        tv: (reference.total_variation(0) - got.total_variation(0)).abs(),
        count_ok,
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LevelRow {
    pub k: u32,
    pub tau: f64,
    pub h: f64,
    pub state_l2: f64,
    pub control_l1: f64,
    pub jump_pos_max: f64,
    pub jump_amp_max: f64,
    pub offset_err: f64,
    pub cost_err: f64,
    pub tv_err: f64,
    pub pdap_iters: usize,
    pub converged: bool,
    pub n_atoms: usize,
    pub count_ok: bool,
}

impl LevelRow {
    pub const CSV_HEADER: &'static str =
        "k,tau,h,state_l2,control_l1,jump_pos_max,jump_amp_max,offset_err,cost_err,tv_err,pdap_iters,converged";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.k,
            self.tau,
            self.h,
            self.state_l2,
            self.control_l1,
            self.jump_pos_max,
            self.jump_amp_max,
            self.offset_err,
            self.cost_err,
            self.tv_err,
            self.pdap_iters,
            self.converged
        )
    }

    /// The error columns that enter the rate table, in CSV order.
    pub fn errors(&self) -> [(&'static str, f64); 7] {
        [
            ("state_l2", self.state_l2),
            ("control_l1", self.control_l1),
            ("jump_pos_max", self.jump_pos_max),
            ("jump_amp_max", self.jump_amp_max),
            ("offset_err", self.offset_err),
            ("cost_err", self.cost_err),
            ("tv_err", self.tv_err),
        ]
    }
}

/// One solved level of the study, kept for inspection.
#[derive(Debug, Clone)]
pub struct LevelRun {
    pub row: LevelRow,
    pub result: PdapResult,
}

pub fn run_level(reference: &ReferenceContext, k: u32, params: SchemeParams, config: &PdapConfig) -> Result<LevelRun> {
    let problem = reference.problem(k, params)?;
    let result = run_pdap(&problem, config)?;
    let mesh = problem.solver.discretization().mesh();
    let errors = control_errors(&reference.solution.control, &result.control, MATCH_RADIUS);
    let row = LevelRow {
        k,
        tau: problem.solver.grid().tau(),
        h: mesh.h(),
        state_l2: reference.state_error(&result.state, mesh)?,
        control_l1: errors.l1,
        jump_pos_max: errors.position_max(),
        jump_amp_max: errors.amplitude_max(),
        offset_err: errors.offset,
        cost_err: reference.cost_error(&result.state, mesh, &result.control)?,
        tv_err: errors.tv,
        pdap_iters: result.iterations(),
        converged: result.converged,
        n_atoms: result.control.n_atoms(),
        count_ok: errors.count_ok,
    };
    Ok(LevelRun { row, result })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RateTable {
    pub rows: Vec<LevelRow>,
    pub reference_level: u32,
    pub richardson_error: Option<f64>,
}

impl RateTable {
    /// `log2(e_k / e_{k+1})` between consecutive rows, NaN when undefined.
    pub fn pair_rates(&self, column: usize) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].errors()[column].1, w[1].errors()[column].1);
                if !w[0].converged || !w[1].converged || w[1].k <= w[0].k || a <= 0.0 || b <= 0.0 {
                    f64::NAN
                } else {
                    (a / b).log2() / f64::from(w[1].k - w[0].k)
                }
            })
            .collect()
    }

    /// Least-squares slope of `-log2 e_k` against `k` over converged rows.
    pub fn fitted_rate(&self, column: usize) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.converged)
            .map(|r| (f64::from(r.k), r.errors()[column].1))
            .filter(|(_, e)| *e > 0.0 && e.is_finite())
            .map(|(k, e)| (k, -e.log2()))
            .collect();
        let n = pts.len() as f64;
        let distinct = pts.iter().any(|p| p.0 != pts[0].0);
        if pts.len() < 2 || !distinct {
            return f64::NAN;
        }
        let mk = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let me = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let cov: f64 = pts.iter().map(|p| (p.0 - mk) * (p.1 - me)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mk).powi(2)).sum();
        cov / var
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(LevelRow::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    /// Gnuplot script with inline data for a log-log plot of all errors.
    pub fn gnuplot_script(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "set logscale xy 2\nset xlabel 'tau'\nset ylabel 'error'\nset key left top");
        let names = self.rows.first().map(|r| r.errors().map(|e| e.0)).unwrap_or_default();
        let plots: Vec<String> =
            names.iter().enumerate().map(|(i, n)| format!("$data using 1:{} with linespoints title '{n}'", i + 2)).collect();
        let _ = writeln!(out, "$data << EOD");
        for row in &self.rows {
            let cols: Vec<String> = row.errors().iter().map(|e| e.1.to_string()).collect();
            let _ = writeln!(out, "{} {}", row.tau, cols.join(" "));
        }
        let _ = writeln!(out, "EOD");
        let _ = writeln!(out, "plot {}, $data using 1:($1**2) with lines dt 2 title 'tau^2'", plots.join(", "));
        out
    }
}

#[derive(Debug)]
pub struct StudyOutput {
    pub table: RateTable,
    pub runs: Vec<Result<LevelRun>>,
}

/// Solves every level independently against one reference.
pub fn convergence_study(
    levels: &[u32],
    k_ref: u32,
    variant: PhiVariant,
    params: SchemeParams,
    config: &PdapConfig,
) -> Result<StudyOutput> {
    if levels.is_empty() {
        return Err(Error::Config("no levels requested".into()));
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("levels must be ascending".into()));
    }
    if levels.iter().any(|&k| k >= k_ref) {
        return Err(Error::Config(format!("reference level {k_ref} must exceed every study level")));
    }
    let reference = ReferenceContext::build(variant, k_ref, params, true)?;
    let runs: Vec<Result<LevelRun>> = levels.par_iter().map(|&k| run_level(&reference, k, params, config)).collect();
    let rows = runs.iter().filter_map(|r| r.as_ref().ok().map(|run| run.row.clone())).collect();
    let table = RateTable { rows, reference_level: k_ref, richardson_error: reference.richardson_error };
    Ok(StudyOutput { table, runs })
}

/// Exact reference `p_1` sampled on a fine grid: maximum of `|p_1|` and its location.
pub fn reference_p1_maximum(psi: &Psi, horizon: f64, samples: usize) -> (f64, f64) {
    (0..=samples)
        .map(|s| {
            let t = horizon * s as f64 / samples as f64;
            (t, psi.p1(t, horizon).abs())
        })
        .fold((0.0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}
