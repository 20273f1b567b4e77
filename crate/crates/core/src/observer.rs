//! Real-time moving-horizon observer driven in simulated time.
//!
//! The decision variable `p` is the presumed state at the start of the
//! window it was solved on. A cycle that starts at sample `s`:
//!
//! 1. warm-starts from the latest solution, propagated from its window start
//!    to `s - N` and projected into the box; the result is both the initial
//!    guess and the arrival-cost anchor;
//! 2. runs `q` iterations on the window `[s - N, s]`;
//! 3. delivers its solution at `s + ell(q)`, which is also when the next
//!    cycle starts.
//!
//! Between deliveries the state estimate at every sample is obtained by
//! propagating the solution delivered strictly before it. The first cycle
//! fires once the log holds `N + 1` samples; before any delivery the
//! estimate is the model prediction from the initial guess.

use std::collections::VecDeque;

use thiserror::Error;

use crate::cost::CostSpec;
use crate::dynamics::{transition, DynamicsError, InputSequence, StateVector, SystemModel};
use crate::measurement::{MeasurementError, MeasurementLog};
use crate::rate_adapter::{adapt, ell, RateError, RateState, RateUpdate, TimingSpec};
use crate::solver::{minimize, BoxConstraint, SolveReport, SolverError, SolverOptions};

#[derive(Debug, Error)]
pub enum ObserverError {
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("sample {sample} precedes the log origin {origin}")]
    BeforeOrigin { sample: usize, origin: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverConfig<const N: usize> {
    pub horizon: usize,
    pub bounds: BoxConstraint<N>,
    pub timing: TimingSpec,
    pub rho: f64,
    pub floor_c: f64,
    pub solver: SolverOptions,
}

/// Propagates `p_prev` by `steps` samples and projects the result.
pub fn warm_start<Md, const N: usize, const M: usize>(
    model: &Md,
    p_prev: &StateVector<N>,
    steps: usize,
    inputs: InputSequence<'_>,
    bounds: &BoxConstraint<N>,
) -> Result<StateVector<N>, DynamicsError>
where
    Md: SystemModel<N, M>,
{
    transition(model, steps, p_prev, inputs).map(|x| bounds.project(&x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Solution<const N: usize> {
    p: StateVector<N>,
    /// Sample index `p` refers to.
    anchor: usize,
    delivered_at: usize,
    cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState<const N: usize> {
    /// Latest solution (window-start state).
    pub p_current: StateVector<N>,
    /// Start of the next cycle, equal to the latest updating instant.
    pub t_index: usize,
    pub rate: RateState,
    pub last_j: Option<f64>,
    pub last_report: Option<SolveReport<N>>,
    pub adaptive: bool,
}

/// Per-cycle log record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    /// Sample at which the computation started (end of the solved window).
    pub started_at: usize,
    /// Updating instant at which the result becomes available.
    pub t_k: usize,
    pub q: usize,
    pub ell: usize,
    pub j_star: f64,
    pub j_best: f64,
    /// Absent on the first cycle, which has no previous cost.
    pub rate: Option<RateUpdate>,
    pub next_q: usize,
    /// The warm-start propagation diverged and the unpropagated solution was used.
    pub warm_start_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOutput<const N: usize> {
    pub index: usize,
    pub estimate: StateVector<N>,
    /// Best cost of the latest delivered solution, or the initial-guess cost
    /// of the first cycle before any delivery.
    pub cost: Option<f64>,
    pub q: usize,
    pub cycle: Option<CycleRecord>,
}

pub struct Observer<Md, const N: usize, const M: usize> {
    cost: CostSpec<Md>,
    config: ObserverConfig<N>,
    state: ObserverState<N>,
    solutions: VecDeque<Solution<N>>,
    first_j_star: Option<f64>,
    step: f64,
}

impl<Md: SystemModel<N, M>, const N: usize, const M: usize> Observer<Md, N, M> {
    /// `origin` is the log index the initial guess `x_hat0` refers to.
    pub fn new(model: Md, config: ObserverConfig<N>, rate: RateState, x_hat0: StateVector<N>, origin: usize) -> Self {
        let initial = Solution {
            p: x_hat0,
            anchor: origin,
            delivered_at: origin,
            cost: None,
        };
        Self {
            cost: CostSpec::new(model, config.rho, config.floor_c, config.horizon),
            state: ObserverState {
                p_current: x_hat0,
                t_index: origin + config.horizon,
                rate,
                last_j: None,
                last_report: None,
                adaptive: rate.delta > 0,
            },
            solutions: VecDeque::from([initial]),
            first_j_star: None,
            step: config.solver.initial_step,
            config,
        }
    }

    pub fn state(&self) -> &ObserverState<N> {
        &self.state
    }

    pub fn config(&self) -> &ObserverConfig<N> {
        &self.config
    }

    pub fn model(&self) -> &Md {
        &self.cost.model
    }

    pub fn q(&self) -> usize {
        self.state.rate.q
    }

    pub fn next_start(&self) -> usize {
        self.state.t_index
    }

    fn newest(&self) -> &Solution<N> {
        self.solutions.back().expect("solution history is never empty")
    }

    /// One full cycle. The log must contain sample `next_start()`.
    pub fn update_cycle(&mut self, log: &MeasurementLog<M>) -> Result<CycleRecord, ObserverError> {
        let n = self.config.horizon;
        let s = self.state.t_index;
        let window = log.extract_window(s, n)?;
        let window_start = s - n;

        let latest = *self.newest();
        let shift = window_start - latest.anchor;
        let inputs = log.input_range(latest.anchor, window_start)?;
        let (p_star, warm_start_fallback) =
            match warm_start(&self.cost.model, &latest.p, shift, inputs, &self.config.bounds) {
                Ok(p) => (p, false),
                Err(DynamicsError::Divergence { .. }) => (self.config.bounds.project(&latest.p), true),
                Err(e) => return Err(e.into()),
            };

        let q = self.state.rate.q;
        let objective = self.cost.bind(window, p_star);
        let options = SolverOptions {
            initial_step: self.step,
            ..self.config.solver
        };
        let report = minimize(&objective, &p_star, &self.config.bounds, q, &options)?;
        self.step = report.next_step;

        let j_star = report.j_star();
        let j_best = report.j_best();
        let rate = match self.state.last_j {
            Some(j_prev) if q >= 2 => {
                let (next, update) = adapt(&self.state.rate, j_star, j_best, report.j_penultimate(), j_prev);
                self.state.rate = next;
                Some(update)
            }
            _ => None,
        };
        if self.first_j_star.is_none() {
            self.first_j_star = Some(j_star);
        }

        let steps = ell(q, &self.config.timing);
        let t_k = s + steps;
        self.solutions.push_back(Solution {
            p: report.p_best,
            anchor: window_start,
            delivered_at: t_k,
            cost: Some(j_best),
        });
        while self.solutions.len() > 3 {
            self.solutions.pop_front();
        }

        self.state.p_current = report.p_best;
        self.state.t_index = t_k;
        self.state.last_j = Some(j_best);
        self.state.last_report = Some(report);

        Ok(CycleRecord {
            started_at: s,
            t_k,
            q,
            ell: steps,
            j_star,
            j_best,
            rate,
            next_q: self.state.rate.q,
            warm_start_fallback,
        })
    }

    /// Solution in force at sample `j`: the newest one delivered before `j`.
    fn solution_for_estimate(&self, j: usize) -> &Solution<N> {
        self.solutions
            .iter()
            .rev()
            .find(|s| s.delivered_at < j)
            .unwrap_or_else(|| self.solutions.front().expect("non-empty"))
    }

    /// State estimate at sample `j`, propagated from the solution delivered
    /// before `j` through the logged inputs.
    pub fn estimate(&self, log: &MeasurementLog<M>, j: usize) -> Result<StateVector<N>, ObserverError> {
        let sol = self.solution_for_estimate(j);
        if j < sol.anchor {
            return Err(ObserverError::BeforeOrigin {
                sample: j,
                origin: sol.anchor,
            });
        }
        let inputs = log.input_range(sol.anchor, j)?;
        Ok(transition(&self.cost.model, j - sol.anchor, &sol.p, inputs)?)
    }

    /// Cost held at sample `j`.
    pub fn cost_at(&self, j: usize) -> Option<f64> {
        self.solutions
            .iter()
            .rev()
            .filter(|s| s.delivered_at <= j)
            .find_map(|s| s.cost)
            .or(self.first_j_star)
    }

    /// Advances to sample `j`: runs the cycle due at `j`, if any, then
    /// reports the estimate and held cost at `j`.
    pub fn step(&mut self, log: &MeasurementLog<M>, j: usize) -> Result<SampleOutput<N>, ObserverError> {
        let cycle = if j == self.state.t_index {
            Some(self.update_cycle(log)?)
        } else {
            None
        };
        Ok(SampleOutput {
            index: j,
            estimate: self.estimate(log, j)?,
            cost: self.cost_at(j),
            q: self.state.rate.q,
            cycle,
        })
    }
}

/// Observer that owns its measurement log and is fed one sample at a time.
pub struct OnlineObserver<Md, const N: usize, const M: usize> {
    observer: Observer<Md, N, M>,
    log: MeasurementLog<M>,
}

impl<Md: SystemModel<N, M>, const N: usize, const M: usize> OnlineObserver<Md, N, M> {
    pub fn new(model: Md, config: ObserverConfig<N>, rate: RateState, x_hat0: StateVector<N>) -> Self {
        let tau = config.timing.tau;
        Self {
            observer: Observer::new(model, config, rate, x_hat0, 0),
            log: MeasurementLog::new(tau),
        }
    }

    pub fn push(&mut self, y: crate::dynamics::OutputVector<M>, u: f64) -> Result<SampleOutput<N>, ObserverError> {
        self.log.push(y, u);
        let j = self.log.last_index().expect("just pushed");
        self.observer.step(&self.log, j)
    }

    pub fn observer(&self) -> &Observer<Md, N, M> {
        &self.observer
    }

    pub fn log(&self) -> &MeasurementLog<M> {
        &self.log
    }
}
