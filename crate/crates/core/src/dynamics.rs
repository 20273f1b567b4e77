//! Continuous-time models and the fixed-step discrete transition map.
//!
//! Every model is integrated with classical RK4 at the sampling period, the
//! input being held constant over each step. Sample `i` of an input sequence
//! drives the step from instant `i` to `i + 1`.

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

pub type StateVector<const N: usize> = SVector<f64, N>;
pub type OutputVector<const M: usize> = SVector<f64, M>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("integration diverged at step {step}")]
    Divergence { step: usize },
    #[error("input sequence holds {available} samples, {required} required")]
    WindowUnderflow { required: usize, available: usize },
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
}

/// A continuous-time model `dx/dt = f(x, u)`, `y = h(x, u)` with scalar input.
///
/// Jacobians are needed by the sensitivity propagation used for cost
/// gradients. Models must be deterministic.
pub trait SystemModel<const N: usize, const M: usize>: Send + Sync {
    fn rhs(&self, x: &StateVector<N>, u: f64) -> StateVector<N>;

    fn rhs_jacobian(&self, x: &StateVector<N>, u: f64) -> SMatrix<f64, N, N>;

    fn output(&self, x: &StateVector<N>, u: f64) -> OutputVector<M>;

    fn output_jacobian(&self, x: &StateVector<N>, u: f64) -> SMatrix<f64, M, N>;
}

/// Van der Pol oscillator with an unknown constant damping gain carried as a
/// third state:
///
/// ```text
/// x1' = x2
/// x2' = -a x1 + (1 - u x3 x1^2) x2
/// x3' = 0
/// y   = x1
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanDerPol {
    pub a: f64,
}

impl VanDerPol {
    pub fn new(a: f64) -> Self {
        Self { a }
    }
}

/// Right-hand side of the van der Pol model as a free function.
pub fn vdp_rhs(x: &StateVector<3>, u: f64, a: f64) -> StateVector<3> {
    StateVector::<3>::new(x[1], -a * x[0] + (1.0 - u * x[2] * x[0] * x[0]) * x[1], 0.0)
}

impl SystemModel<3, 1> for VanDerPol {
    fn rhs(&self, x: &StateVector<3>, u: f64) -> StateVector<3> {
        vdp_rhs(x, u, self.a)
    }

    fn rhs_jacobian(&self, x: &StateVector<3>, u: f64) -> SMatrix<f64, 3, 3> {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        SMatrix::<f64, 3, 3>::new(
            0.0,
            1.0,
            0.0,
            -self.a - 2.0 * u * x3 * x1 * x2,
            1.0 - u * x3 * x1 * x1,
            -u * x1 * x1 * x2,
            0.0,
            0.0,
            0.0,
        )
    }

    fn output(&self, x: &StateVector<3>, _u: f64) -> OutputVector<1> {
        OutputVector::<1>::new(x[0])
    }

    fn output_jacobian(&self, _x: &StateVector<3>, _u: f64) -> SMatrix<f64, 1, 3> {
        SMatrix::<f64, 1, 3>::new(1.0, 0.0, 0.0)
    }
}

/// Input samples `u(k-M) .. u(k)` at period `tau`.
#[derive(Debug, Clone, Copy)]
pub struct InputSequence<'a> {
    samples: &'a [f64],
    tau: f64,
}

impl<'a> InputSequence<'a> {
    pub fn new(samples: &'a [f64], tau: f64) -> Self {
        Self { samples, tau }
    }

    pub fn samples(&self) -> &'a [f64] {
        self.samples
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Drops the first `n` samples (saturating).
    pub fn skip(&self, n: usize) -> InputSequence<'a> {
        InputSequence {
            samples: &self.samples[n.min(self.samples.len())..],
            tau: self.tau,
        }
    }
}

fn finite<const N: usize>(x: &StateVector<N>) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// One RK4 step of length `dt` with `u` held constant.
pub fn integrate_step<Md, const N: usize, const M: usize>(
    model: &Md,
    x: &StateVector<N>,
    u: f64,
    dt: f64,
) -> Result<StateVector<N>, DynamicsError>
where
    Md: SystemModel<N, M> + ?Sized,
{
    if !(dt > 0.0) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let next = rk4(model, x, u, dt);
    if finite(&next) {
        Ok(next)
    } else {
        Err(DynamicsError::Divergence { step: 0 })
    }
}

#[inline]
fn rk4<Md, const N: usize, const M: usize>(model: &Md, x: &StateVector<N>, u: f64, dt: f64) -> StateVector<N>
where
    Md: SystemModel<N, M> + ?Sized,
{
    let half = 0.5 * dt;
    let k1 = model.rhs(x, u);
    let k2 = model.rhs(&(x + k1 * half), u);
    let k3 = model.rhs(&(x + k2 * half), u);
    let k4 = model.rhs(&(x + k3 * dt), u);
    x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

/// RK4 step together with the exact derivative of the discrete step map,
/// applied to the incoming sensitivity `s = dx/dp`.
pub fn integrate_step_with_sensitivity<Md, const N: usize, const M: usize>(
    model: &Md,
    x: &StateVector<N>,
    s: &SMatrix<f64, N, N>,
    u: f64,
    dt: f64,
) -> Result<(StateVector<N>, SMatrix<f64, N, N>), DynamicsError>
where
    Md: SystemModel<N, M> + ?Sized,
{
    let half = 0.5 * dt;
    let k1 = model.rhs(x, u);
    let s1 = model.rhs_jacobian(x, u) * s;

    let x_b = x + k1 * half;

    let k2 = model.rhs(&x_b, u);
    let s2 = model.rhs_jacobian(&x_b, u) * (s + s1 * half);

    let x_c = x + k2 * half;
    let k3 = model.rhs(&x_c, u);
    let s3 = model.rhs_jacobian(&x_c, u) * (s + s2 * half);

    let x_d = x + k3 * dt;
    let k4 = model.rhs(&x_d, u);
    let s4 = model.rhs_jacobian(&x_d, u) * (s + s3 * dt);

    let w = dt / 6.0;
    let next = x + (k1 + (k2 + k3) * 2.0 + k4) * w;
    let s_next = s + (s1 + (s2 + s3) * 2.0 + s4) * w;
    if finite(&next) && s_next.iter().all(|v| v.is_finite()) {
        Ok((next, s_next))
    } else {
        Err(DynamicsError::Divergence { step: 0 })
    }
}

/// Multi-step transition `X(M, x0, u)`: `steps` RK4 steps consuming the first
/// `steps` samples of `inputs`.
pub fn transition<Md, const N: usize, const M: usize>(
    model: &Md,
    steps: usize,
    x0: &StateVector<N>,
    inputs: InputSequence<'_>,
) -> Result<StateVector<N>, DynamicsError>
where
    Md: SystemModel<N, M> + ?Sized,
{
    if inputs.len() < steps {
        return Err(DynamicsError::WindowUnderflow {
            required: steps,
            available: inputs.len(),
        });
    }
    if steps > 0 && !(inputs.tau > 0.0) {
        return Err(DynamicsError::InvalidStep(inputs.tau));
    }
    let mut x = *x0;
    for (step, &u) in inputs.samples[..steps].iter().enumerate() {
        x = rk4(model, &x, u, inputs.tau);
        if !finite(&x) {
            return Err(DynamicsError::Divergence { step });
        }
    }
    Ok(x)
}

/// Model outputs `y(i | p)` for `i = 0..=horizon` along the trajectory
/// started at `p`. Output `i` is evaluated with input sample `i`.
pub fn predict_outputs<Md, const N: usize, const M: usize>(
    model: &Md,
    p: &StateVector<N>,
    inputs: InputSequence<'_>,
    horizon: usize,
) -> Result<Vec<OutputVector<M>>, DynamicsError>
where
    Md: SystemModel<N, M> + ?Sized,
{
    if inputs.len() < horizon + 1 {
        return Err(DynamicsError::WindowUnderflow {
            required: horizon + 1,
            available: inputs.len(),
        });
    }
    let u = inputs.samples;
    let mut out = Vec::with_capacity(horizon + 1);
    let mut x = *p;
    out.push(model.output(&x, u[0]));
    for i in 0..horizon {
        x = rk4(model, &x, u[i], inputs.tau);
        if !finite(&x) {
            return Err(DynamicsError::Divergence { step: i });
        }
        out.push(model.output(&x, u[i + 1]));
    }
    Ok(out)
}
