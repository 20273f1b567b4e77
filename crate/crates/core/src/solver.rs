//! Budgeted projected fast gradient with function-value restart.
//!
//! One call performs exactly `q` iterations. An iteration is one projected
//! gradient step from the extrapolated point, including its backtracking
//! inner loop. The momentum is reset whenever the new candidate cost exceeds
//! the previous one. The reported trace is best-so-far.

use thiserror::Error;

use crate::dynamics::StateVector;

/// Smooth objective with gradient.
pub trait Objective<const N: usize> {
    fn value(&self, p: &StateVector<N>) -> f64;

    fn value_and_gradient(&self, p: &StateVector<N>) -> (f64, StateVector<N>);
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("iteration budget must be at least 1, got {0}")]
    Budget(usize),
    #[error("box lower bound exceeds upper bound in component {0}")]
    InvalidBox(usize),
    #[error("initial guess is not finite")]
    NonFiniteStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxConstraint<const N: usize> {
    lower: StateVector<N>,
    upper: StateVector<N>,
}

impl<const N: usize> BoxConstraint<N> {
    pub fn new(lower: StateVector<N>, upper: StateVector<N>) -> Result<Self, SolverError> {
        if let Some(i) = (0..N).find(|&i| !(lower[i] <= upper[i])) {
            return Err(SolverError::InvalidBox(i));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &StateVector<N> {
        &self.lower
    }

    pub fn upper(&self) -> &StateVector<N> {
        &self.upper
    }

    pub fn project(&self, p: &StateVector<N>) -> StateVector<N> {
        StateVector::<N>::from_fn(|i, _| p[i].clamp(self.lower[i], self.upper[i]))
    }

    pub fn contains(&self, p: &StateVector<N>) -> bool {
        (0..N).all(|i| self.lower[i] <= p[i] && p[i] <= self.upper[i])
    }
}

/// Component-wise clamp into the box.
pub fn project<const N: usize>(p: &StateVector<N>, bounds: &BoxConstraint<N>) -> StateVector<N> {
    bounds.project(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Step length tried first.
    pub initial_step: f64,
    /// Halvings allowed per iteration before the iteration is declared stalled.
    pub max_backtracks: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            initial_step: 1e-2,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<const N: usize> {
    pub p_best: StateVector<N>,
    /// Best-so-far cost after 0..=q iterations.
    pub cost_trace: Vec<f64>,
    pub iterations_run: usize,
    /// Step length accepted last, doubled; a warm value for the next solve.
    pub next_step: f64,
    pub restarts: usize,
}

impl<const N: usize> SolveReport<N> {
    /// Cost at the initial guess.
    pub fn j_star(&self) -> f64 {
        self.cost_trace[0]
    }

    pub fn j_best(&self) -> f64 {
        self.cost_trace[self.iterations_run]
    }

    /// Best-so-far cost after `q - 1` iterations.
    pub fn j_penultimate(&self) -> f64 {
        self.cost_trace[self.iterations_run - 1]
    }
}

/// Runs exactly `q` accelerated projected gradient iterations from `p0`.
pub fn minimize<F, const N: usize>(
    cost: &F,
    p0: &StateVector<N>,
    bounds: &BoxConstraint<N>,
    q: usize,
    options: &SolverOptions,
) -> Result<SolveReport<N>, SolverError>
where
    F: Objective<N> + ?Sized,
{
    if q < 1 {
        return Err(SolverError::Budget(q));
    }
    if !p0.iter().all(|v| v.is_finite()) {
        return Err(SolverError::NonFiniteStart);
    }

    let mut x = bounds.project(p0);
    let mut fx = cost.value(&x);
    let mut y = x;
    let mut t = 1.0_f64;
    let mut step = if options.initial_step > 0.0 && options.initial_step.is_finite() {
        options.initial_step
    } else {
        SolverOptions::default().initial_step
    };

    let mut best = x;
    let mut best_cost = fx;
    let mut trace = Vec::with_capacity(q + 1);
    trace.push(best_cost);
    let mut restarts = 0;

    for _ in 0..q {
        let (fy, gy) = cost.value_and_gradient(&y);

        let mut candidate = y;
        let mut f_candidate = fy;
        let mut s = step;
        let mut accepted = false;
        for _ in 0..=options.max_backtracks {
            let c = bounds.project(&(y - gy * s));
            let fc = cost.value(&c);
            let d = c - y;
            if fc <= fy + gy.dot(&d) + d.norm_squared() / (2.0 * s) {
                candidate = c;
                f_candidate = fc;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        step = if accepted { 2.0 * s } else { step };

        let previous = x;
        if f_candidate > fx {
            restarts += 1;
            t = 1.0;
            x = candidate;
            fx = f_candidate;
            y = x;
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            x = candidate;
            fx = f_candidate;
            y = bounds.project(&(x + (x - previous) * ((t - 1.0) / t_next)));
            t = t_next;
        }

        if fx < best_cost {
            best_cost = fx;
            best = x;
        }
        trace.push(best_cost);
    }

    Ok(SolveReport {
        p_best: best,
        cost_trace: trace,
        iterations_run: q,
        next_step: step,
        restarts,
    })
}
