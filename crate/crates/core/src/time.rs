//! Uniform time grids, hat-function moments and piecewise-constant functions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::Config(format!("invalid time grid T={horizon}, M={steps}")));
        }
        Ok(Self { horizon, steps })
    }

    /// Grid with `tau = 2^{-k}` on `[0, T]`; `T * 2^k` must be an integer.
    pub fn with_level(horizon: f64, k: u32) -> Result<Self> {
        let steps = horizon * (1u64 << k) as f64;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("T={horizon} is not a multiple of 2^-{k}")));
        }
        Self::new(horizon, steps.round() as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of intervals `M`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, m: usize) -> f64 {
        if m == self.steps {
            self.horizon
        } else {
            m as f64 * self.tau()
        }
    }

    /// Interval index containing `t` (closed on the right for the last one).
    pub fn interval_of(&self, t: f64) -> usize {
        ((t / self.tau()).floor().max(0.0) as usize).min(self.steps - 1)
    }

    /// Whether every node of `self` is a node of `finer`.
    pub fn nests_in(&self, finer: &TimeGrid) -> bool {
        finer.steps.is_multiple_of(self.steps) && (finer.horizon - self.horizon).abs() <= 1e-14 * self.horizon
    }

    /// Nonzero entries of the tridiagonal time mass matrix `int e_m e_n`:
    /// returns `(diagonal, off_diagonal)`.
    pub fn mass_entries(&self) -> (Vec<f64>, f64) {
        let tau = self.tau();
        let mut diag = vec![2.0 * tau / 3.0; self.n_nodes()];
        diag[0] = tau / 3.0;
        diag[self.steps] = tau / 3.0;
        (diag, tau / 6.0)
    }

    /// `int_0^T chi(t) e_m(t) dt` for all hats by Gauss-Legendre per interval.
    pub fn smooth_moments(&self, chi: impl Fn(f64) -> f64) -> Vec<f64> {
        let (gx, gw) = gauss_legendre_6();
        let tau = self.tau();
        let mut out = vec![0.0; self.n_nodes()];
        for j in 0..self.steps {
            let t0 = self.node(j);
            for (x, w) in gx.iter().zip(gw.iter()) {
                let s = 0.5 * (x + 1.0);
                let val = chi(t0 + s * tau) * w * 0.5 * tau;
                out[j] += val * (1.0 - s);
                out[j + 1] += val * s;
            }
        }
        out
    }
}

/// Six-point Gauss-Legendre rule on `[-1, 1]`.
pub(crate) fn gauss_legendre_6() -> ([f64; 6], [f64; 6]) {
    let x = [
        -0.932_469_514_203_152,
        -0.661_209_386_466_264_5,
        -0.238_619_186_083_196_9,
        0.238_619_186_083_196_9,
        0.661_209_386_466_264_5,
        0.932_469_514_203_152,
    ];
    let w = [
        0.171_324_492_379_170_3,
        0.360_761_573_048_138_6,
        0.467_913_934_572_691,
        0.467_913_934_572_691,
        0.360_761_573_048_138_6,
        0.171_324_492_379_170_3,
    ];
    (x, w)
}

/// Piecewise-constant function on `[0, T]` with arbitrary breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::InvalidControl("breakpoint/value count mismatch".into()));
        }
        if breaks[0] != 0.0 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidControl("breakpoints must start at 0 and increase".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidControl("non-finite step value".into()));
        }
        Ok(Self { breaks, values })
    }

    pub fn constant(horizon: f64, value: f64) -> Self {
        Self { breaks: vec![0.0, horizon], values: vec![value] }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breaks.windows(2).zip(&self.values).map(|(w, &v)| (w[0], w[1], v))
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.breaks[1..self.breaks.len() - 1].partition_point(|&b| b <= t);
        self.values[k]
    }

    pub fn integral(&self) -> f64 {
        self.pieces().map(|(a, b, v)| v * (b - a)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.horizon()
    }

    /// `(position, height)` of every nonzero jump.
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        self.values
            .windows(2)
            .zip(&self.breaks[1..])
            .filter(|(v, _)| v[1] != v[0])
            .map(|(v, &t)| (t, v[1] - v[0]))
            .collect()
    }

    pub fn total_variation(&self) -> f64 {
        self.jumps().iter().map(|(_, h)| h.abs()).sum()
    }

    /// `int_0^T u e_m dt` for every hat of `grid`, exact by splitting at
    /// breakpoints and grid nodes.
    pub fn hat_moments(&self, grid: &TimeGrid) -> Vec<f64> {
        let tau = grid.tau();
        let mut out = vec![0.0; grid.n_nodes()];
        for (a, b, v) in self.pieces() {
            if v == 0.0 {
                continue;
            }
            let first = grid.interval_of(a);
            let last = grid.interval_of(b);
            for j in first..=last {
                let (t0, t1) = (grid.node(j), grid.node(j + 1));
                let lo = a.max(t0);
                let hi = b.min(t1);
                if hi <= lo {
                    continue;
                }
                // rising hat e_{j+1} = (t - t0)/tau, falling e_j = (t1 - t)/tau
                let rising = ((hi - t0).powi(2) - (lo - t0).powi(2)) / (2.0 * tau);
                let falling = ((t1 - lo).powi(2) - (t1 - hi).powi(2)) / (2.0 * tau);
                out[j] += v * falling;
                out[j + 1] += v * rising;
            }
        }
        out
    }

    /// Exact `|| self - other ||_{L^1(0,T)}` over merged breakpoints.
    pub fn l1_distance(&self, other: &StepFunction) -> f64 {
        let tol = 1e-14 * self.horizon();
        let mut merged: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        merged.sort_by(f64::total_cmp);
        merged.dedup_by(|a, b| (*a - *b).abs() <= tol);
        merged
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (self.eval(mid) - other.eval(mid)).abs() * (w[1] - w[0])
            })
            .sum()
    }
}
