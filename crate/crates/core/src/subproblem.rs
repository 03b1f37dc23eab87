//! The finite-dimensional magnitude problem
//!
//! ```text
//! min_q  1/2 q^T G q - r^T q + sum_i w_i |q_i|
//! ```
//!
//! with `w_i = alpha` on atom magnitudes and `w_i = 0` on offsets. Solved by a
//! primal-dual active set (semismooth Newton) iteration on the problem with an
//! added `gamma/2 |lambda|^2`, with `gamma` driven geometrically to `gamma_min`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SubproblemModel {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// L1 weight per unknown, zero for unpenalized ones.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemConfig {
    /// `gamma_min = gamma_min_factor * gamma_0`
    pub gamma_min_factor: f64,
    pub gamma_decrease: f64,
    pub kkt_tol: f64,
    pub max_newton: usize,
    pub max_prox: usize,
}

impl Default for SubproblemConfig {
    fn default() -> Self {
        Self { gamma_min_factor: 1e-12, gamma_decrease: 10.0, kkt_tol: 1e-10, max_newton: 100, max_prox: 200_000 }
    }
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub q: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub gamma: f64,
    pub used_fallback: bool,
}

impl SubproblemModel {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// `1/2 q^T G q - r^T q + sum w |q|` (without the `gamma` term).
    pub fn objective(&self, q: &DVector<f64>) -> f64 {
        let quad = 0.5 * q.dot(&(&self.gram * q)) - self.rhs.dot(q);
        quad + q.iter().zip(&self.weights).map(|(v, w)| w * v.abs()).sum::<f64>()
    }

    fn regularized(&self, gamma: f64) -> DMatrix<f64> {
        let mut h = self.gram.clone();
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                h[(i, i)] += gamma;
            }
        }
        h
    }

    /// Scaled natural residual `|q - prox(q - grad)|_inf / (1 + |r|_inf)`.
    pub fn kkt_residual(&self, q: &DVector<f64>, gamma: f64) -> f64 {
        let grad = &self.regularized(gamma) * q - &self.rhs;
        let res = (0..self.dim())
            .map(|i| (q[i] - soft_threshold(q[i] - grad[i], self.weights[i])).abs())
            .fold(0.0, f64::max);
        res / (1.0 + self.rhs.amax())
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.gram.nrows() != n || self.gram.ncols() != n || self.weights.len() != n {
            return Err(Error::Config("subproblem dimensions disagree".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || self.gram.iter().chain(self.rhs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("subproblem data is not finite / weights negative".into()));
        }
        Ok(())
    }
}

pub fn soft_threshold(x: f64, w: f64) -> f64 {
    x.signum() * (x.abs() - w).max(0.0)
}

/// Solves the model with continuation in `gamma`; returns the `gamma_min` solution.
pub fn solve_magnitude_subproblem(
    model: &SubproblemModel,
    config: &SubproblemConfig,
    warm_start: Option<&DVector<f64>>,
) -> Result<SubproblemSolution> {
    model.validate()?;
    let n = model.dim();
    if n == 0 {
        return Ok(SubproblemSolution {
            q: DVector::zeros(0),
            objective: 0.0,
            kkt_residual: 0.0,
            gamma: 0.0,
            used_fallback: false,
        });
    }
    let gamma0 = (model.gram.trace() / n as f64).max(f64::MIN_POSITIVE);
    let gamma_min = config.gamma_min_factor * gamma0;
    let mut q = warm_start.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut gamma = gamma0;
    let mut used_fallback = false;
    loop {
        let h = model.regularized(gamma);
        q = match pdas(model, &h, &q, config.max_newton) {
            Some(sol) => sol,
            None => {
                used_fallback = true;
                let approx = proximal_gradient(model, &h, &q, config.max_prox);
                polish(model, &h, &approx).unwrap_or(approx)
            }
        };
        if gamma <= gamma_min {
            break;
        }
        gamma = (gamma / config.gamma_decrease).max(gamma_min);
    }
    let kkt_residual = model.kkt_residual(&q, gamma);
    if !(kkt_residual <= config.kkt_tol) {
        return Err(Error::Numerical(format!("subproblem KKT residual {kkt_residual:.3e} above tolerance")));
    }
    Ok(SubproblemSolution { objective: model.objective(&q), q, kkt_residual, gamma, used_fallback })
}

/// Sign pattern predicted from the fixed-point map with diagonal scaling.
fn predict_signs(model: &SubproblemModel, h: &DMatrix<f64>, q: &DVector<f64>) -> Vec<i8> {
    let grad = h * q - &model.rhs;
    (0..model.dim())
        .map(|i| {
            let w = model.weights[i];
            if w == 0.0 {
                return 2; // unpenalized, always free
            }
            let mu = h[(i, i)].max(f64::MIN_POSITIVE);
            let z = mu * q[i] - grad[i];
            if z > w {
                1
            } else if z < -w {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Solves the reduced system for a given sign pattern.
fn solve_pattern(model: &SubproblemModel, h: &DMatrix<f64>, signs: &[i8]) -> Option<DVector<f64>> {
    let free: Vec<usize> = (0..signs.len()).filter(|&i| signs[i] != 0).collect();
    let mut q = DVector::zeros(signs.len());
    if free.is_empty() {
        return Some(q);
    }
    let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
    let rf = DVector::from_fn(free.len(), |a, _| {
        let i = free[a];
        let s = if signs[i] == 2 { 0.0 } else { f64::from(signs[i]) };
        model.rhs[i] - model.weights[i] * s
    });
    let sol = match hf.clone().cholesky() {
        Some(ch) => ch.solve(&rf),
        None => hf.lu().solve(&rf)?,
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for (a, &i) in free.iter().enumerate() {
        q[i] = sol[a];
    }
    Some(q)
}

fn pdas(model: &SubproblemModel, h: &DMatrix<f64>, start: &DVector<f64>, max_iter: usize) -> Option<DVector<f64>> {
    let mut q = start.clone();
    let mut signs = predict_signs(model, h, &q);
    for _ in 0..max_iter {
        q = solve_pattern(model, h, &signs)?;
        let next = predict_signs(model, h, &q);
        if next == signs {
            return Some(q);
        }
        signs = next;
    }
    None
}

/// Accelerated proximal gradient (FISTA) with step `1 / ||H||`.
fn proximal_gradient(model: &SubproblemModel, h: &DMatrix<f64>, start: &DVector<f64>, max_iter: usize) -> DVector<f64> {
    let lip = h.iter().map(|v| v.abs()).fold(0.0, f64::max) * model.dim() as f64;
    let step = 1.0 / lip.max(f64::MIN_POSITIVE);
    let mut x = start.clone();
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        let grad = h * &y - &model.rhs;
        let mut next = &y - grad * step;
        for i in 0..model.dim() {
            next[i] = soft_threshold(next[i], step * model.weights[i]);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        let done = (&next - &x).amax() <= 1e-15 * (1.0 + next.amax());
        x = next;
        t = t_next;
        if done {
            break;
        }
    }
    x
}

/// Re-solves on the support / sign pattern of an approximate solution.
fn polish(model: &SubproblemModel, h: &DMatrix<f64>, approx: &DVector<f64>) -> Option<DVector<f64>> {
    let signs: Vec<i8> = (0..model.dim())
        .map(|i| if model.weights[i] == 0.0 { 2 } else { approx[i].signum() as i8 * i8::from(approx[i] != 0.0) })
        .collect();
    let q = solve_pattern(model, h, &signs)?;
    let consistent = (0..model.dim()).all(|i| signs[i] == 2 || signs[i] == 0 || q[i] * f64::from(signs[i]) >= 0.0);
    consistent.then_some(q)
}
