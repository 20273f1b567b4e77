//! Moving-horizon fitting cost over one observation window.
//!
//! `J(p) = c + sum_i |y(start + i | p) - y_m(start + i)|^2 + rho |p - p_hat|^2`
//!
//! The constant `c > 0` keeps every cost ratio used by the rate adapter
//! well defined.

use nalgebra::SMatrix;

use crate::dynamics::{integrate_step_with_sensitivity, predict_outputs, DynamicsError, StateVector, SystemModel};
use crate::measurement::ObservationWindow;
use crate::solver::Objective;

pub const DEFAULT_FLOOR: f64 = 1e-8;

/// Returned in place of the cost when the predicted trajectory diverges.
pub const DIVERGENCE_PENALTY: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec<Md> {
    pub model: Md,
    pub rho: f64,
    pub floor_c: f64,
    pub horizon: usize,
}

impl<Md> CostSpec<Md> {
    pub fn new(model: Md, rho: f64, floor_c: f64, horizon: usize) -> Self {
        assert!(floor_c > 0.0, "cost floor must be positive");
        assert!(rho >= 0.0, "arrival weight must be nonnegative");
        Self {
            model,
            rho,
            floor_c,
            horizon,
        }
    }

    pub fn sentinel(&self) -> f64 {
        DIVERGENCE_PENALTY + self.floor_c
    }
}

impl<Md> CostSpec<Md> {
    pub fn try_evaluate<const N: usize, const M: usize>(
        &self,
        p: &StateVector<N>,
        window: &ObservationWindow<'_, M>,
        p_hat: &StateVector<N>,
    ) -> Result<f64, DynamicsError>
    where
        Md: SystemModel<N, M>,
    {
        let predicted = predict_outputs(&self.model, p, window.inputs(), window.horizon())?;
        let fit: f64 = predicted
            .iter()
            .zip(window.y)
            .map(|(yh, ym)| (yh - ym).norm_squared())
            .sum();
        let j = self.floor_c + fit + self.rho * (p - p_hat).norm_squared();
        if j.is_finite() {
            Ok(j)
        } else {
            Err(DynamicsError::Divergence { step: window.horizon() })
        }
    }

    /// Cost with divergence mapped to [`CostSpec::sentinel`].
    pub fn evaluate<const N: usize, const M: usize>(
        &self,
        p: &StateVector<N>,
        window: &ObservationWindow<'_, M>,
        p_hat: &StateVector<N>,
    ) -> f64
    where
        Md: SystemModel<N, M>,
    {
        self.try_evaluate(p, window, p_hat).unwrap_or_else(|_| self.sentinel())
    }

    /// Cost and exact gradient of the discretized cost, by forward
    /// sensitivity propagation along the RK4 trajectory.
    pub fn try_gradient<const N: usize, const M: usize>(
        &self,
        p: &StateVector<N>,
        window: &ObservationWindow<'_, M>,
        p_hat: &StateVector<N>,
    ) -> Result<(f64, StateVector<N>), DynamicsError>
    where
        Md: SystemModel<N, M>,
    {
        let u = window.u;
        let tau = window.tau;
        let arrival = p - p_hat;
        let mut j = self.floor_c + self.rho * arrival.norm_squared();
        let mut grad = arrival * (2.0 * self.rho);

        let mut x = *p;
        let mut s = SMatrix::<f64, N, N>::identity();
        for i in 0..=window.horizon() {
            if i > 0 {
                let (xn, sn) = integrate_step_with_sensitivity(&self.model, &x, &s, u[i - 1], tau)
                    .map_err(|_| DynamicsError::Divergence { step: i })?;
                x = xn;
                s = sn;
            }
            let r = self.model.output(&x, u[i]) - window.y[i];
            j += r.norm_squared();
            let dy = self.model.output_jacobian(&x, u[i]) * s;
            grad += dy.transpose() * r * 2.0;
        }
        if j.is_finite() && grad.iter().all(|g| g.is_finite()) {
            Ok((j, grad))
        } else {
            Err(DynamicsError::Divergence { step: window.horizon() })
        }
    }

    /// Gradient with divergence mapped to (sentinel, 0).
    pub fn gradient<const N: usize, const M: usize>(
        &self,
        p: &StateVector<N>,
        window: &ObservationWindow<'_, M>,
        p_hat: &StateVector<N>,
    ) -> (f64, StateVector<N>)
    where
        Md: SystemModel<N, M>,
    {
        self.try_gradient(p, window, p_hat)
            .unwrap_or_else(|_| (self.sentinel(), StateVector::<N>::zeros()))
    }

    /// Central finite-difference gradient of [`CostSpec::evaluate`].
    pub fn gradient_fd<const N: usize, const M: usize>(
        &self,
        p: &StateVector<N>,
        window: &ObservationWindow<'_, M>,
        p_hat: &StateVector<N>,
    ) -> StateVector<N>
    where
        Md: SystemModel<N, M>,
    {
        let mut g = StateVector::<N>::zeros();
        for k in 0..N {
            let h = 1e-6 * p[k].abs().max(1.0);
            let mut a = *p;
            a[k] += h;
            let mut b = *p;
            b[k] -= h;
            g[k] = (self.evaluate(&a, window, p_hat) - self.evaluate(&b, window, p_hat)) / (2.0 * h);
        }
        g
    }

    /// Binds a window and arrival anchor into a solver objective.
    pub fn bind<'a, const N: usize, const M: usize>(
        &'a self,
        window: ObservationWindow<'a, M>,
        p_hat: StateVector<N>,
    ) -> WindowCost<'a, Md, N, M> {
        WindowCost {
            spec: self,
            window,
            p_hat,
        }
    }
}

pub struct WindowCost<'a, Md, const N: usize, const M: usize> {
    spec: &'a CostSpec<Md>,
    window: ObservationWindow<'a, M>,
    p_hat: StateVector<N>,
}

impl<Md: SystemModel<N, M>, const N: usize, const M: usize> Objective<N> for WindowCost<'_, Md, N, M> {
    fn value(&self, p: &StateVector<N>) -> f64 {
        self.spec.evaluate(p, &self.window, &self.p_hat)
    }

    fn value_and_gradient(&self, p: &StateVector<N>) -> (f64, StateVector<N>) {
        self.spec.gradient(p, &self.window, &self.p_hat)
    }
}
