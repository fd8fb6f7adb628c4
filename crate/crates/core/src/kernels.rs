//! Scalar kernels of the discretized filtering problem: the Brownian-bridge
//! barrier survival factor `G`, the observation likelihood `g_k` and their
//! product `g^a_k`.
//!
//! All coefficients are frozen at the left end `(t_k, x_k, y_k)` of a step.

use std::f64::consts::PI;

use crate::model::Diffusion;

/// Step context: the model and the step `[t_k, t_k + Δ_k]`.
#[derive(Debug, Clone, Copy)]
pub struct KernelContext<'a, D: Diffusion + ?Sized> {
    pub spec: &'a D,
    pub t: f64,
    pub dt: f64,
}

impl<'a, D: Diffusion + ?Sized> KernelContext<'a, D> {
    pub fn new(spec: &'a D, t: f64, dt: f64) -> Self {
        Self { spec, t, dt }
    }

    /// Probability that the continuous Euler interpolation between `x_k` and
    /// `x_k1` stays above `barrier`.
    pub fn bridge_survival(&self, x_k: f64, x_k1: f64, barrier: f64) -> f64 {
        let s = self.spec.vol_x(self.t, x_k);
        bridge_factor(x_k, x_k1, barrier, self.dt * s * s)
    }

    /// Observation likelihood `g_k(x_k, y_k; x_{k+1}, y_{k+1})`.
    pub fn obs_likelihood(&self, x_k: f64, y_k: f64, x_k1: f64, y_k1: f64) -> f64 {
        let c = self.coefficients(x_k, y_k);
        c.likelihood(x_k1, y_k1)
    }

    /// `g^a_k = g_k · G`.
    pub fn filter_kernel(&self, x_k: f64, y_k: f64, x_k1: f64, y_k1: f64, barrier: f64) -> f64 {
        let c = self.coefficients(x_k, y_k);
        let bridge = bridge_factor(x_k, x_k1, barrier, self.dt * c.sigma * c.sigma);
        if bridge == 0.0 {
            return 0.0;
        }
        c.likelihood(x_k1, y_k1) * bridge
    }

    pub fn coefficients(&self, x_k: f64, y_k: f64) -> StepCoefficients {
        let (t, dt, spec) = (self.t, self.dt, self.spec);
        StepCoefficients {
            dt,
            sigma: spec.vol_x(t, x_k),
            nu: spec.vol_y_common(t, y_k),
            delta: spec.vol_y_idio(t, y_k),
            m1: x_k + spec.drift_x(t, x_k) * dt,
            m2: y_k + spec.drift_y(t, y_k, x_k) * dt,
        }
    }
}

/// Coefficients of one step frozen at `(t_k, x_k, y_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub dt: f64,
    pub sigma: f64,
    pub nu: f64,
    pub delta: f64,
    /// `m¹_k = x_k + b_k Δ_k`
    pub m1: f64,
    /// `m²_k = y_k + h_k Δ_k`
    pub m2: f64,
}

impl StepCoefficients {
    #[inline]
    pub fn likelihood(&self, x_k1: f64, y_k1: f64) -> f64 {
        let mismatch = (x_k1 - self.m1) / self.sigma - (y_k1 - self.m2) / self.nu;
        likelihood_peak(self.dt, self.delta)
            * (-(self.nu * self.nu) / (2.0 * self.delta * self.delta * self.dt) * mismatch * mismatch).exp()
    }
}

/// Upper bound `(2πΔ)^{-1/2} / δ` of the observation likelihood, attained when
/// the standardized innovations of both coordinates agree.
#[inline]
pub fn likelihood_peak(dt: f64, delta: f64) -> f64 {
    1.0 / ((2.0 * PI * dt).sqrt() * delta)
}

/// `(1 − exp(−2(x_k − a)(x_{k+1} − a) / v)) · 1{x_k ≥ a, x_{k+1} ≥ a}` with
/// `v = Δ_k σ²(t_k, x_k)`. Exponents below the double range evaluate to 0.
#[inline]
pub fn bridge_factor(x_k: f64, x_k1: f64, barrier: f64, variance: f64) -> f64 {
    if x_k < barrier || x_k1 < barrier {
        return 0.0;
    }
    let gap = (x_k - barrier) * (x_k1 - barrier);
    if gap == 0.0 {
        return 0.0;
    }
    if !(variance > 0.0) {
        return 1.0;
    }
    let arg = 2.0 * gap / variance;
    if arg > 745.0 {
        1.0
    } else {
        -(-arg).exp_m1()
    }
}
