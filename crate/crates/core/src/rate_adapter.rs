//! Feedback law for the measurement inclusion rate `q`.
//!
//! The best costs at two successive updating instants are related by
//! `J(t_k) = K J(t_{k-1})` with `K = E D`:
//!
//! * `E = J_best / J_star`: contraction achieved by the `q` iterations;
//! * `D = J_star / J_prev`: inflation caused by shifting the window, modeled
//!   as `D = 1 + alpha q`.
//!
//! After each solve the sensitivities of `E`, `D` and `K` to `q` are
//! estimated from by-products of the solve, and `q` takes one quantized step
//! of size `delta` against the sign of the gradient of the quantity being
//! minimized: `K` itself while `K >= 1`, the response time `q / |log K|`
//! otherwise. Every quantity below is a handful of scalar operations and one
//! logarithm, independent of the horizon length and of `q`.

use thiserror::Error;

use crate::solver::SolveReport;

/// Below this distance from 1 the gain is treated as `K >= 1`.
pub const EPSILON_K: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("gradient estimation needs at least 2 iterations, got {0}")]
    InsufficientIterations(usize),
    #[error("gain {0} is within EPSILON_K of 1")]
    NearUnityGain(f64),
    #[error("invalid rate bounds: q_min={q_min}, q_max={q_max}, q={q}")]
    InvalidBounds { q_min: usize, q_max: usize, q: usize },
    #[error("invalid timing: tau={tau}, tau_c={tau_c}")]
    InvalidTiming { tau: f64, tau_c: f64 },
}

/// Sampling period and per-iteration computation time, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSpec {
    pub tau: f64,
    pub tau_c: f64,
}

impl TimingSpec {
    pub fn new(tau: f64, tau_c: f64) -> Result<Self, RateError> {
        if !(tau > 0.0 && tau_c > 0.0 && tau.is_finite() && tau_c.is_finite()) {
            return Err(RateError::InvalidTiming { tau, tau_c });
        }
        Ok(Self { tau, tau_c })
    }
}

/// Sampling periods elapsed while `q` iterations run: `int(q tau_c / tau) + 1`.
pub fn ell(q: usize, timing: &TimingSpec) -> usize {
    // Rounding the quotient first keeps exact multiples (e.g. 0.0005/0.002)
    // from truncating one period short.
    let ratio = q as f64 * timing.tau_c / timing.tau;
    let nearest = ratio.round();
    let whole = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        ratio.floor()
    };
    whole as usize + 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionTerms {
    pub e: f64,
    pub d: f64,
    pub k: f64,
}

/// `E = J_best / J_star`, `D = J_star / J_prev`, `K = E D`.
pub fn contraction_terms_from(j_star: f64, j_best: f64, j_prev: f64) -> ContractionTerms {
    let e = j_best / j_star;
    let d = j_star / j_prev;
    ContractionTerms { e, d, k: e * d }
}

pub fn contraction_terms<const N: usize>(report: &SolveReport<N>, j_prev: f64) -> ContractionTerms {
    contraction_terms_from(report.j_star(), report.j_best(), j_prev)
}

/// On-line identification of `alpha` in `D = 1 + alpha q`; also the estimate
/// of `dD/dq`.
pub fn alpha_estimate(j_star: f64, j_prev: f64, q: usize) -> f64 {
    (j_star / j_prev - 1.0) / q as f64
}

/// `dE/dq ~ (J(p^(q)) - J(p^(q-1))) / J_star`.
pub fn efficiency_gradient_from(j_best: f64, j_penultimate: f64, j_star: f64) -> f64 {
    (j_best - j_penultimate) / j_star
}

pub fn efficiency_gradient<const N: usize>(report: &SolveReport<N>) -> Result<f64, RateError> {
    if report.iterations_run < 2 {
        return Err(RateError::InsufficientIterations(report.iterations_run));
    }
    Ok(efficiency_gradient_from(
        report.j_best(),
        report.j_penultimate(),
        report.j_star(),
    ))
}

/// `dK/dq = E dD/dq + D dE/dq`.
pub fn gain_gradient(e: f64, d: f64, de_dq: f64, dd_dq: f64) -> f64 {
    e * dd_dq + d * de_dq
}

/// Gradient of `q / |log K|` for `K < 1`:
/// `(-log K + (q / K) dK/dq) / (log K)^2`.
pub fn response_time_gradient(k: f64, q: usize, dk_dq: f64) -> Result<f64, RateError> {
    if (k - 1.0).abs() < EPSILON_K {
        return Err(RateError::NearUnityGain(k));
    }
    let log_k = k.ln();
    Ok((-log_k + (q as f64 / k) * dk_dq) / (log_k * log_k))
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateState {
    pub q: usize,
    pub q_min: usize,
    pub q_max: usize,
    pub delta: usize,
    pub last_e: f64,
    pub last_d: f64,
    pub last_k: f64,
    pub last_alpha: f64,
    pub last_gamma: f64,
}

impl RateState {
    pub fn new(q: usize, q_min: usize, q_max: usize, delta: usize) -> Result<Self, RateError> {
        if q_min < 2 || q_min > q_max || q < q_min || q > q_max {
            return Err(RateError::InvalidBounds { q_min, q_max, q });
        }
        Ok(Self {
            q,
            q_min,
            q_max,
            delta,
            last_e: 1.0,
            last_d: 1.0,
            last_k: 1.0,
            last_alpha: 0.0,
            last_gamma: 0.0,
        })
    }
}

/// Algorithm step: pick `Gamma` by the branch on `K`, then
/// `q <- clamp(q - delta sign(Gamma), q_min, q_max)`.
pub fn update_q(state: &RateState, k: f64, dk_dq: f64, drt_dq: f64) -> RateState {
    let gamma = if k >= 1.0 || (k - 1.0).abs() < EPSILON_K {
        dk_dq
    } else {
        drt_dq
    };
    let moved = state.q as i64 - state.delta as i64 * sign(gamma);
    let q = moved.clamp(state.q_min as i64, state.q_max as i64) as usize;
    RateState {
        q,
        last_k: k,
        last_gamma: gamma,
        ..*state
    }
}

/// Everything estimated at one updating instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateUpdate {
    pub terms: ContractionTerms,
    pub alpha: f64,
    pub de_dq: f64,
    pub dk_dq: f64,
    pub gamma: f64,
    pub q_before: usize,
    pub q_after: usize,
}

/// Full update from the by-products of one solve of budget `state.q`.
pub fn adapt(state: &RateState, j_star: f64, j_best: f64, j_penultimate: f64, j_prev: f64) -> (RateState, RateUpdate) {
    let q = state.q;
    let terms = contraction_terms_from(j_star, j_best, j_prev);
    let alpha = alpha_estimate(j_star, j_prev, q);
    let de_dq = efficiency_gradient_from(j_best, j_penultimate, j_star);
    let dk_dq = gain_gradient(terms.e, terms.d, de_dq, alpha);
    // The near-unity case takes the K >= 1 branch, so its value is unused.
    let drt_dq = response_time_gradient(terms.k, q, dk_dq).unwrap_or(0.0);
    let mut next = update_q(state, terms.k, dk_dq, drt_dq);
    next.last_e = terms.e;
    next.last_d = terms.d;
    next.last_alpha = alpha;
    let update = RateUpdate {
        terms,
        alpha,
        de_dq,
        dk_dq,
        gamma: next.last_gamma,
        q_before: q,
        q_after: next.q,
    };
    (next, update)
}

/// Exhaustive minimizer over `q_min..=q_max` of `q / |log K(q)|` where
/// `K(q) < 1` and `K(q)` elsewhere; ties go to the smallest `q`.
pub fn ideal_q_oracle(k_model: impl Fn(usize) -> f64, q_min: usize, q_max: usize) -> usize {
    let mut best = (q_min, f64::INFINITY);
    for q in q_min..=q_max {
        let k = k_model(q);
        let objective = if k < 1.0 { q as f64 / k.ln().abs() } else { k };
        if objective < best.1 {
            best = (q, objective);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn ell_examples() {
        let t = TimingSpec::new(0.002, 0.0005).unwrap();
        assert_eq!(ell(20, &t), 6);
        assert_eq!(ell(3, &t), 1);
        assert_eq!(ell(1000, &t), 251);
        assert_eq!(ell(4, &t), 2);
        assert_eq!(ell(100, &t), 26);
        assert_eq!(ell(300, &t), 76);
    }

    #[test]
    fn ell_is_monotone() {
        let t = TimingSpec::new(0.002, 0.0007).unwrap();
        let mut prev = 0;
        for q in 1..2000 {
            let l = ell(q, &t);
            assert!(l >= 1 && l >= prev);
            prev = l;
        }
    }

    #[test]
    fn invalid_timing() {
        assert!(TimingSpec::new(0.0, 1.0).is_err());
        assert!(TimingSpec::new(1.0, -1.0).is_err());
    }

    #[test]
    fn contraction_examples() {
        let c = contraction_terms_from(1.2, 0.6, 1.0);
        assert!(close(c.e, 0.5, 1e-12));
        assert!(close(c.d, 1.2, 1e-12));
        assert!(close(c.k, 0.6, 1e-12));
        assert_eq!(contraction_terms_from(3.0, 3.0, 1.0).e, 1.0);
        assert_eq!(contraction_terms_from(1e-8, 1e-8, 1e-8).d, 1.0);
    }

    #[test]
    fn alpha_examples() {
        assert!(close(alpha_estimate(1.2, 1.0, 20), 0.01, 1e-12));
        assert_eq!(alpha_estimate(2.0, 2.0, 7), 0.0);
        assert!(alpha_estimate(0.5, 1.0, 7) < 0.0);
    }

    #[test]
    fn efficiency_gradient_requires_two_iterations() {
        let report = SolveReport::<3> {
            p_best: Default::default(),
            cost_trace: vec![2.0, 1.0],
            iterations_run: 1,
            next_step: 1.0,
            restarts: 0,
        };
        assert_eq!(efficiency_gradient(&report), Err(RateError::InsufficientIterations(1)));
        let report = SolveReport::<3> {
            cost_trace: vec![1.2, 0.9, 0.60, 0.58],
            iterations_run: 3,
            ..report
        };
        assert!(close(efficiency_gradient(&report).unwrap(), -0.02 / 1.2, 1e-12));
    }

    #[test]
    fn near_unity_gain_is_signalled() {
        assert_eq!(response_time_gradient(1.0, 20, 0.1), Err(RateError::NearUnityGain(1.0)));
        let k = 0.3;
        assert!(close(response_time_gradient(k, 20, 0.0).unwrap(), -1.0 / k.ln(), 1e-12));
    }

    #[test]
    fn update_examples() {
        let s = RateState::new(20, 20, 1000, 10).unwrap();
        assert_eq!(update_q(&s, 0.6, -0.015, 0.041).q, 20);
        let s = RateState::new(500, 20, 1000, 10).unwrap();
        assert_eq!(update_q(&s, 0.6, 0.0, -0.5).q, 510);
        assert_eq!(update_q(&s, 0.6, 1.0, 0.0).q, 500);
        // K >= 1 uses the gain gradient
        assert_eq!(update_q(&s, 1.3, 0.2, -7.0).q, 490);
        assert_eq!(update_q(&s, 1.0 + 1e-12, 0.2, -7.0).q, 490);
    }

    #[test]
    fn invalid_rate_bounds() {
        assert!(RateState::new(5, 1, 10, 1).is_err());
        assert!(RateState::new(5, 6, 10, 1).is_err());
        assert!(RateState::new(5, 3, 2, 1).is_err());
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(ideal_q_oracle(|_| 0.5, 2, 1000), 2);
        assert_eq!(
            ideal_q_oracle(|q| 1.0 + ((q as f64) - 337.0).powi(2) * 1e-4, 2, 1000),
            337
        );
        assert_eq!(ideal_q_oracle(|q| 0.5 * (1.0 + 0.01 * q as f64), 2, 1000), 100);
    }

    #[test]
    fn adapt_stays_in_bounds_and_records_terms() {
        let s = RateState::new(20, 20, 1000, 10).unwrap();
        let (next, up) = adapt(&s, 1.2, 0.6, 0.62, 1.0);
        assert_eq!(up.q_before, 20);
        assert!(close(up.terms.k, 0.6, 1e-12));
        assert_eq!(next.last_k, up.terms.k);
        assert!(next.q >= 20 && next.q <= 1000);
    }
}
