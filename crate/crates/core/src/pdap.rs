//! Primal-dual active point iteration for BV controls.
//!
//! Each iteration computes `p_1` from the current residual, inserts the
//! maximizer of `|p_1,i|` as a new jump candidate of component `i`, and
//! re-optimizes all magnitudes and offsets. Atoms whose magnitude becomes
//! zero are dropped.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::control::{atom_basis, compute_p1, Atom, MaxAbs, MeasureControl, PiecewiseQuadratic};
use crate::error::{Error, Result};
use crate::subproblem::{solve_magnitude_subproblem, SubproblemConfig, SubproblemModel};
use crate::time::StepFunction;
use crate::wave::{SpaceTimeField, TimeLoad, WaveSolver};

/// Discrete optimal control problem for a fixed discretization.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub solver: Arc<WaveSolver>,
    /// Spatial load vectors of `g_i`, one per control component.
    pub g_loads: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    /// Hat moments of `b = y_d - Q(y0, y1)`.
    pub target: TimeLoad,
    /// `||b||^2_{L^2(Omega_T)}`
    pub target_norm_sq: f64,
}

impl ControlProblem {
    pub fn horizon(&self) -> f64 {
        self.solver.grid().horizon()
    }

    pub fn n_components(&self) -> usize {
        self.g_loads.len()
    }

    fn validate(&self) -> Result<()> {
        if self.g_loads.is_empty() || self.g_loads.len() != self.alpha.len() {
            return Err(Error::Config("need one alpha per control component".into()));
        }
        if self.alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        let n = self.solver.discretization().n_dofs();
        if self.g_loads.iter().any(|g| g.len() != n) || self.target.n_dofs() != n {
            return Err(Error::Config("problem data does not match the discretization".into()));
        }
        if self.target.grid() != self.solver.grid() {
            return Err(Error::Config("target moments live on a different time grid".into()));
        }
        Ok(())
    }

    /// Discrete state `S(v, c)` for an arbitrary control.
    pub fn state(&self, control: &MeasureControl) -> Result<SpaceTimeField> {
        let grid = *self.solver.grid();
        let mut load = TimeLoad::zeros(grid, self.solver.discretization().n_dofs());
        for (i, u) in crate::control::apply_b(control).iter().enumerate() {
            load.add_separable(1.0, &u.hat_moments(&grid), &self.g_loads[i]);
        }
        self.solver.solve_source(&load)
    }

    /// `J = 1/2 ||S(v,c) - b||^2 + sum alpha_i ||v_i||_M`
    pub fn cost(&self, control: &MeasureControl) -> Result<f64> {
        let y = self.state(control)?;
        let mass = self.solver.discretization().mass();
        let tv: f64 = (0..control.n_components()).map(|i| self.alpha[i] * control.total_variation(i)).sum();
        let track = y.inner(&y, mass) - 2.0 * self.target.pair(&y) + self.target_norm_sq;
        Ok(0.5 * track.max(0.0) + tv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdapConfig {
    pub max_iter: usize,
    /// Absolute gap tolerance; `None` means `1e-9 * J(0)`.
    pub gap_tol: Option<f64>,
    /// Total-variation bound `R` in the gap; `None` means `10 J(0) / min alpha`.
    pub tv_bound: Option<f64>,
    /// Relative merge radius for insertion times.
    pub merge_tol: f64,
    pub tol_kkt: f64,
    pub subproblem: SubproblemConfig,
}

impl Default for PdapConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gap_tol: None,
            tv_bound: None,
            merge_tol: 1e-12,
            tol_kkt: 1e-2,
            subproblem: SubproblemConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PdapRecord {
    pub iter: usize,
    pub cost: f64,
    /// `max_i (||p_1,i||_inf / alpha_i - 1)`
    pub kkt_violation: f64,
    pub active: Vec<usize>,
    pub gap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct PdapHistory {
    pub records: Vec<PdapRecord>,
}

impl PdapHistory {
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.records.windows(2).all(|w| w[1].cost <= w[0].cost + slack)
    }
}

/// Computable optimality certificate per component.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct KktCertificate {
    /// `||p_1,i||_inf / alpha_i`
    pub max_ratio: Vec<f64>,
    /// `|p_1,i(0)| / alpha_i`
    pub origin_ratio: Vec<f64>,
    pub signs_aligned: bool,
}

impl KktCertificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_ratio.iter().all(|r| *r <= 1.0 + tol)
            && self.origin_ratio.iter().all(|r| *r <= tol)
            && self.signs_aligned
    }
}

#[derive(Debug, Clone)]
pub struct PdapResult {
    pub control: MeasureControl,
    pub history: PdapHistory,
    pub converged: bool,
    pub cost: f64,
    pub gap: f64,
    pub p1: Vec<PiecewiseQuadratic>,
    pub state: SpaceTimeField,
    pub certificate: KktCertificate,
}

impl PdapResult {
    pub fn iterations(&self) -> usize {
        self.history.records.len().saturating_sub(1)
    }

    pub fn controls(&self) -> Vec<StepFunction> {
        crate::control::apply_b(&self.control)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum ColumnKey {
    Atom(usize, u64),
    Offset(usize),
}

struct Column {
    field: SpaceTimeField,
    dual: TimeLoad,
}

struct ColumnCache<'a> {
    problem: &'a ControlProblem,
    columns: HashMap<ColumnKey, Column>,
}

impl<'a> ColumnCache<'a> {
    fn get(&mut self, key: ColumnKey) -> Result<&Column> {
        if !self.columns.contains_key(&key) {
            let column = column_field(self.problem, key)?;
            let dual = column.moments(self.problem.solver.discretization().mass());
            self.columns.insert(key, Column { field: column, dual });
        }
        Ok(&self.columns[&key])
    }
}

fn column_field(problem: &ControlProblem, key: ColumnKey) -> Result<SpaceTimeField> {
    let grid = *problem.solver.grid();
    let (time_moments, i) = match key {
        ColumnKey::Atom(i, bits) => (atom_basis(grid.horizon(), f64::from_bits(bits)).hat_moments(&grid), i),
        ColumnKey::Offset(i) => (StepFunction::constant(grid.horizon(), 1.0).hat_moments(&grid), i),
    };
    problem.solver.solve_source(&TimeLoad::separable(grid, &time_moments, &problem.g_loads[i]))
}

/// `L_theta((1_{(t,T]} - (T-t)/T) g_i)` for an atom of component `i` at `t`.
pub fn atom_column(problem: &ControlProblem, i: usize, t: f64) -> Result<SpaceTimeField> {
    if !(t > 0.0 && t < problem.horizon()) {
        return Err(Error::InvalidControl(format!("atom time {t} outside (0, T)")));
    }
    column_field(problem, ColumnKey::Atom(i, t.to_bits()))
}

/// `L_theta(g_j)`
pub fn offset_column(problem: &ControlProblem, j: usize) -> Result<SpaceTimeField> {
    column_field(problem, ColumnKey::Offset(j))
}

struct Iterate {
    /// (component, time) of every atom, in unknown order
    atoms: Vec<(usize, f64)>,
    q: DVector<f64>,
}

impl Iterate {
    fn keys(&self, m: usize) -> Vec<ColumnKey> {
        self.atoms
            .iter()
            .map(|&(i, t)| ColumnKey::Atom(i, t.to_bits()))
            .chain((0..m).map(ColumnKey::Offset))
            .collect()
    }

    fn control(&self, horizon: f64, m: usize) -> Result<MeasureControl> {
        let mut atoms = vec![Vec::new(); m];
        for (k, &(i, t)) in self.atoms.iter().enumerate() {
            atoms[i].push(Atom { time: t, weight: self.q[k] });
        }
        let offsets = (0..m).map(|j| self.q[self.atoms.len() + j]).collect();
        MeasureControl::new(horizon, atoms, offsets)
    }
}

struct Dual {
    p1: Vec<PiecewiseQuadratic>,
    maxima: Vec<MaxAbs>,
    state: SpaceTimeField,
    cost: f64,
}

fn evaluate(problem: &ControlProblem, cache: &mut ColumnCache, it: &Iterate) -> Result<Dual> {
    let solver = &problem.solver;
    let grid = *solver.grid();
    let n = solver.discretization().n_dofs();
    let m = problem.n_components();
    let mut state = SpaceTimeField::zeros(grid, n);
    // moments of S q - b
    let mut residual = problem.target.clone();
    residual.scale(-1.0);
    let mut penalty = 0.0;
    for (k, key) in it.keys(m).into_iter().enumerate() {
        let w = it.q[k];
        if let ColumnKey::Atom(i, _) = key {
            penalty += problem.alpha[i] * w.abs();
        }
        if w == 0.0 {
            continue;
        }
        let col = cache.get(key)?;
        state.axpy(w, &col.field);
        residual.axpy(w, &col.dual);
    }
    let tracking = state.inner(&state, solver.discretization().mass()) - 2.0 * problem.target.pair(&state)
        + problem.target_norm_sq;
    let cost = 0.5 * tracking.max(0.0) + penalty;
    let p = solver.solve_adjoint(&residual)?;
    let p1: Vec<PiecewiseQuadratic> = problem.g_loads.iter().map(|g| compute_p1(&p, g)).collect();
    let maxima = p1.iter().map(PiecewiseQuadratic::global_max_abs).collect();
    Ok(Dual { p1, maxima, state, cost })
}

fn surrogate_gap(problem: &ControlProblem, it: &Iterate, dual: &Dual, tv_bound: f64) -> f64 {
    let mut gap = 0.0;
    for i in 0..problem.n_components() {
        let alpha = problem.alpha[i];
        gap += tv_bound * (dual.maxima[i].abs() - alpha).max(0.0);
        gap += tv_bound * dual.p1[i].eval(0.0).abs();
        for (k, &(c, t)) in it.atoms.iter().enumerate() {
            if c == i {
                let w = it.q[k];
                gap += alpha * w.abs() - w * dual.p1[i].eval(t);
            }
        }
    }
    gap.max(0.0)
}

fn certificate(problem: &ControlProblem, it: &Iterate, dual: &Dual, tol: f64) -> KktCertificate {
    let m = problem.n_components();
    let max_ratio = (0..m).map(|i| dual.maxima[i].abs() / problem.alpha[i]).collect();
    let origin_ratio = (0..m).map(|i| dual.p1[i].eval(0.0).abs() / problem.alpha[i]).collect();
    let signs_aligned = it.atoms.iter().enumerate().all(|(k, &(i, t))| {
        let ratio = dual.p1[i].eval(t) / problem.alpha[i];
        (ratio - it.q[k].signum()).abs() <= tol
    });
    KktCertificate { max_ratio, origin_ratio, signs_aligned }
}

/// Runs the iteration from `v = 0, c = 0`.
pub fn run_pdap(problem: &ControlProblem, config: &PdapConfig) -> Result<PdapResult> {
    problem.validate()?;
    let m = problem.n_components();
    let horizon = problem.horizon();
    let mut cache = ColumnCache { problem, columns: HashMap::new() };
    let mut it = Iterate { atoms: Vec::new(), q: DVector::zeros(m) };

    let j0 = 0.5 * problem.target_norm_sq;
    let min_alpha = problem.alpha.iter().copied().fold(f64::INFINITY, f64::min);
    let tv_bound = config.tv_bound.unwrap_or(10.0 * j0 / min_alpha);
    let gap_tol = config.gap_tol.unwrap_or(1e-9 * j0);

    let mut history = PdapHistory::default();
    let mut converged = false;
    let mut solved_once = false;
    let mut dual;
    let mut gap;
    let mut k = 0;
    loop {
        dual = evaluate(problem, &mut cache, &it)?;
        gap = surrogate_gap(problem, &it, &dual, tv_bound);
        let kkt_violation = (0..m).map(|i| dual.maxima[i].abs() / problem.alpha[i] - 1.0).fold(f64::MIN, f64::max);
        let active = (0..m).map(|i| it.atoms.iter().filter(|a| a.0 == i).count()).collect();
        history.records.push(PdapRecord { iter: k, cost: dual.cost, kkt_violation, active, gap });
        if gap <= gap_tol {
            converged = true;
            break;
        }
        if k == config.max_iter {
            break;
        }

        let mut inserted = false;
        for i in 0..m {
            let t = dual.maxima[i].time;
            let interior = t > 0.0 && t < horizon;
            let duplicate = it.atoms.iter().any(|&(c, s)| c == i && (s - t).abs() <= config.merge_tol * horizon);
            if interior && !duplicate && dual.maxima[i].abs() > 0.0 {
                it.atoms.push((i, t));
                it.q = it.q.clone().insert_row(it.atoms.len() - 1, 0.0);
                inserted = true;
            }
        }
        if !inserted && solved_once {
            // no admissible new candidate: the restricted problem is already optimal
            break;
        }

        let keys = it.keys(m);
        for key in &keys {
            cache.get(*key)?;
        }
        let cols: Vec<&Column> = keys.iter().map(|key| &cache.columns[key]).collect();
        let dim = cols.len();
        let mut gram = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            for b in a..dim {
                gram[(a, b)] = cols[a].dual.pair(&cols[b].field);
                gram[(b, a)] = gram[(a, b)];
            }
        }
        let rhs = DVector::from_fn(dim, |a, _| problem.target.pair(&cols[a].field));
        let weights = keys
            .iter()
            .map(|key| match key {
                ColumnKey::Atom(i, _) => problem.alpha[*i],
                ColumnKey::Offset(_) => 0.0,
            })
            .collect();
        check_offset_block(&gram, it.atoms.len())?;
        let model = SubproblemModel { gram, rhs, weights };
        let sol = solve_magnitude_subproblem(&model, &config.subproblem, Some(&it.q))?;
        it.q = sol.q;
        solved_once = true;

        // prune zero magnitudes
        let keep: Vec<usize> = (0..it.atoms.len()).filter(|&a| it.q[a] != 0.0).collect();
        if keep.len() < it.atoms.len() {
            let atoms = keep.iter().map(|&a| it.atoms[a]).collect();
            let mut q: Vec<f64> = keep.iter().map(|&a| it.q[a]).collect();
            q.extend((0..m).map(|j| it.q[it.atoms.len() + j]));
            it.atoms = atoms;
            it.q = DVector::from_vec(q);
            cache.columns.retain(|key, _| match key {
                ColumnKey::Offset(_) => true,
                ColumnKey::Atom(..) => it.keys(m).contains(key),
            });
        }
        k += 1;
    }

    let certificate = certificate(problem, &it, &dual, config.tol_kkt);
    Ok(PdapResult {
        control: it.control(horizon, m)?,
        history,
        converged,
        cost: dual.cost,
        gap,
        p1: dual.p1,
        state: dual.state,
        certificate,
    })
}

/// The offset block `<L g_i, L g_j>` must be positive definite.
fn check_offset_block(gram: &DMatrix<f64>, n_atoms: usize) -> Result<()> {
    let m = gram.nrows() - n_atoms;
    let block = gram.view((n_atoms, n_atoms), (m, m)).into_owned();
    if block.cholesky().is_none() {
        return Err(Error::Numerical("offset Gram block is not positive definite".into()));
    }
    Ok(())
}
