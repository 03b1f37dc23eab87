//! Measure-valued controls, the map `B` to BV functions, its predual and the
//! adjoint functional `p_1` with exact maximization.

use crate::error::{Error, Result};
use crate::time::{StepFunction, TimeGrid};
use crate::wave::SpaceTimeField;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Atom {
    pub time: f64,
    pub weight: f64,
}

/// Finite sum of Dirac atoms per component plus the offsets `c`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeasureControl {
    horizon: f64,
    atoms: Vec<Vec<Atom>>,
    offsets: Vec<f64>,
}

impl MeasureControl {
    pub fn new(horizon: f64, mut atoms: Vec<Vec<Atom>>, offsets: Vec<f64>) -> Result<Self> {
        if atoms.len() != offsets.len() {
            return Err(Error::InvalidControl("one atom list per offset required".into()));
        }
        for list in &mut atoms {
            list.sort_by(|a, b| a.time.total_cmp(&b.time));
            for a in list.iter() {
                if !(a.time > 0.0 && a.time < horizon) {
                    return Err(Error::InvalidControl(format!("atom at t={} outside (0, {horizon})", a.time)));
                }
                if !a.weight.is_finite() {
                    return Err(Error::InvalidControl("non-finite atom weight".into()));
                }
            }
            if list.windows(2).any(|w| w[0].time == w[1].time) {
                return Err(Error::InvalidControl("duplicate atom times".into()));
            }
        }
        if offsets.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidControl("non-finite offset".into()));
        }
        Ok(Self { horizon, atoms, offsets })
    }

    pub fn zero(horizon: f64, components: usize) -> Self {
        Self { horizon, atoms: vec![Vec::new(); components], offsets: vec![0.0; components] }
    }

    /// Recovers `(v, c)` from a step function: atoms at the jumps, offset the mean.
    pub fn from_step_function(u: &StepFunction) -> Self {
        let atoms = u.jumps().into_iter().map(|(time, weight)| Atom { time, weight }).collect();
        Self { horizon: u.horizon(), atoms: vec![atoms], offsets: vec![u.mean()] }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_components(&self) -> usize {
        self.offsets.len()
    }

    pub fn atoms(&self, i: usize) -> &[Atom] {
        &self.atoms[i]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.iter().map(Vec::len).sum()
    }

    /// `||v_i||_M`
    pub fn total_variation(&self, i: usize) -> f64 {
        self.atoms[i].iter().map(|a| a.weight.abs()).sum()
    }
}

/// `1_{(t,T]} - (T - t)/T`, the zero-mean image of `delta_t` under `B`.
pub fn atom_basis(horizon: f64, t: f64) -> StepFunction {
    let shift = (horizon - t) / horizon;
    StepFunction::new(vec![0.0, t, horizon], vec![-shift, 1.0 - shift]).expect("atom inside (0, T)")
}

/// `u_i = sum_l c_l (1_{(t_l,T]} - (T - t_l)/T) + c_i` for every component.
/// The spatial factor `g_i` is implied.
pub fn apply_b(control: &MeasureControl) -> Vec<StepFunction> {
    let horizon = control.horizon;
    (0..control.n_components())
        .map(|i| {
            let atoms = &control.atoms[i];
            let mut breaks = vec![0.0];
            breaks.extend(atoms.iter().map(|a| a.time));
            breaks.push(horizon);
            let base: f64 = control.offsets[i] - atoms.iter().map(|a| a.weight * (horizon - a.time) / horizon).sum::<f64>();
            let mut values = Vec::with_capacity(atoms.len() + 1);
            let mut acc = base;
            values.push(acc);
            for a in atoms {
                acc += a.weight;
                values.push(acc);
            }
            StepFunction::new(breaks, values).expect("validated control")
        })
        .collect()
}

/// Continuous piecewise-linear function on a time grid (nodal values).
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n_nodes());
        Self { grid, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let j = self.grid.interval_of(t);
        let r = (t - self.grid.node(j)) / self.grid.tau();
        (1.0 - r) * self.values[j] + r * self.values[j + 1]
    }

    /// `int_0^T`
    pub fn integral(&self) -> f64 {
        let tau = self.grid.tau();
        self.values.windows(2).map(|w| 0.5 * tau * (w[0] + w[1])).sum()
    }

    /// Interior zeros where the sign changes strictly inside an interval.
    pub fn roots(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (j, w) in self.values.windows(2).enumerate() {
            if w[0] * w[1] < 0.0 {
                out.push(self.grid.node(j) + self.grid.tau() * w[0] / (w[0] - w[1]));
            } else if w[1] == 0.0 && j + 1 < self.grid.steps() {
                out.push(self.grid.node(j + 1));
            }
        }
        out
    }
}

/// Per-interval quadratics `a + b s + c s^2`, `s = t - t_{m-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseQuadratic {
    grid: TimeGrid,
    coeffs: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MaxAbs {
    pub time: f64,
    /// Signed value at the maximizer.
    pub value: f64,
}

impl MaxAbs {
    pub fn abs(&self) -> f64 {
        self.value.abs()
    }
}

impl PiecewiseQuadratic {
    pub fn new(grid: TimeGrid, coeffs: Vec<[f64; 3]>) -> Self {
        assert_eq!(coeffs.len(), grid.steps());
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[[f64; 3]] {
        &self.coeffs
    }

    fn local(&self, t: f64) -> (usize, f64) {
        let j = self.grid.interval_of(t);
        (j, t - self.grid.node(j))
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (j, s) = self.local(t);
        let [a, b, c] = self.coeffs[j];
        a + s * (b + s * c)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (j, s) = self.local(t);
        let [_, b, c] = self.coeffs[j];
        b + 2.0 * c * s
    }

    /// Largest jump between the right end of one piece and the left end of the next.
    pub fn continuity_mismatch(&self) -> f64 {
        let tau = self.grid.tau();
        self.coeffs
            .windows(2)
            .map(|w| {
                let [a, b, c] = w[0];
                (a + tau * (b + tau * c) - w[1][0]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Exact global maximizer of `|p|` over `[0, T]`: every node plus the
    /// interior vertex of each piece. Ties go to the smallest `t`.
    pub fn global_max_abs(&self) -> MaxAbs {
        let tau = self.grid.tau();
        let mut best = MaxAbs { time: 0.0, value: self.coeffs[0][0] };
        let mut consider = |time: f64, value: f64| {
            if value.abs() > best.value.abs() {
                best = MaxAbs { time, value };
            }
        };
        for (j, &[a, b, c]) in self.coeffs.iter().enumerate() {
            let t0 = self.grid.node(j);
            consider(t0, a);
            if c != 0.0 {
                let s = -b / (2.0 * c);
                if s > 0.0 && s < tau {
                    consider(t0 + s, a + s * (b + s * c));
                }
            }
            if j + 1 == self.coeffs.len() {
                consider(self.grid.horizon(), a + tau * (b + tau * c));
            }
        }
        best
    }

    /// Values at all time nodes.
    pub fn node_values(&self) -> Vec<f64> {
        let tau = self.grid.tau();
        let mut out: Vec<f64> = self.coeffs.iter().map(|c| c[0]).collect();
        let [a, b, c] = *self.coeffs.last().unwrap();
        out.push(a + tau * (b + tau * c));
        out
    }
}

/// Nodal values `P_m = int_Omega q(t_m) g` using the load vector of `g`.
pub fn spatial_pairing(q: &SpaceTimeField, g_load: &[f64]) -> Vec<f64> {
    (0..q.grid().n_nodes()).map(|m| crate::linalg::dot(q.slice(m), g_load)).collect()
}

/// Piecewise quadratic `t -> int_t^T P(s) ds` of a nodal piecewise-linear `P`.
fn tail_integral(grid: TimeGrid, p: &[f64]) -> PiecewiseQuadratic {
    let tau = grid.tau();
    let steps = grid.steps();
    let mut tail = vec![0.0; steps + 1];
    for m in (0..steps).rev() {
        tail[m] = tail[m + 1] + 0.5 * tau * (p[m] + p[m + 1]);
    }
    let coeffs = (0..steps).map(|m| [tail[m], -p[m], -(p[m + 1] - p[m]) / (2.0 * tau)]).collect();
    PiecewiseQuadratic::new(grid, coeffs)
}

/// `p_1(t) = -int_t^T int_Omega p g`, with `p_1(T) = 0`.
pub fn compute_p1(p: &SpaceTimeField, g_load: &[f64]) -> PiecewiseQuadratic {
    let mut out = tail_integral(*p.grid(), &spatial_pairing(p, g_load));
    for c in &mut out.coeffs {
        c.iter_mut().for_each(|v| *v = -*v);
    }
    out
}

/// `z = d/dt p_1`.
pub fn compute_z(p1: &PiecewiseQuadratic) -> PiecewiseLinear {
    let tau = p1.grid.tau();
    let mut values: Vec<f64> = p1.coeffs.iter().map(|c| c[1]).collect();
    let [_, b, c] = *p1.coeffs.last().unwrap();
    values.push(b + 2.0 * c * tau);
    PiecewiseLinear::new(p1.grid, values)
}

/// Image of `q` under the predual of `B`, one entry per component.
#[derive(Debug, Clone, PartialEq)]
pub struct PredualImage {
    /// `w'_j(t) = int_t^T P_j + (t - T)/T int_0^T P_j`
    pub w_prime: Vec<PiecewiseQuadratic>,
    /// `int_0^T int_Omega q g_j`
    pub totals: Vec<f64>,
}

impl PredualImage {
    /// `sum_j int w'_j dv_j + sum_j c_j * totals_j`
    pub fn pair(&self, control: &MeasureControl) -> f64 {
        (0..control.n_components())
            .map(|j| {
                let atoms: f64 = control.atoms(j).iter().map(|a| a.weight * self.w_prime[j].eval(a.time)).sum();
                atoms + control.offsets()[j] * self.totals[j]
            })
            .sum()
    }
}

pub fn apply_b_star(q: &SpaceTimeField, g_loads: &[Vec<f64>]) -> PredualImage {
    let grid = *q.grid();
    let horizon = grid.horizon();
    let mut w_prime = Vec::with_capacity(g_loads.len());
    let mut totals = Vec::with_capacity(g_loads.len());
    for g in g_loads {
        let mut w = tail_integral(grid, &spatial_pairing(q, g));
        let total = w.coeffs[0][0];
        for (m, c) in w.coeffs.iter_mut().enumerate() {
            c[0] += (grid.node(m) - horizon) / horizon * total;
            c[1] += total / horizon;
        }
        w_prime.push(w);
        totals.push(total);
    }
    PredualImage { w_prime, totals }
}
