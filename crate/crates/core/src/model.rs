//! Signal/observation diffusion pair, its Euler discretization and seedable
//! path simulation.
//!
//! The signal `X` is the (unobserved) firm value, the observation `Y` a noisy
//! proxy sharing the Brownian driver `W` of the signal:
//!
//! ```text
//! dX = b(t, X) dt + σ(t, X) dW
//! dY = h(t, Y, X) dt + ν(t, Y) dW + δ(t, Y) dW̃
//! ```
//!
//! Default happens the first time `X` reaches the barrier `a` from above.

use std::fmt;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::normal;

/// Coefficients of the signal/observation pair together with the starting
/// point and the default barrier.
pub trait Diffusion: Send + Sync + fmt::Debug {
    fn drift_x(&self, t: f64, x: f64) -> f64;
    fn vol_x(&self, t: f64, x: f64) -> f64;
    fn drift_y(&self, t: f64, y: f64, x: f64) -> f64;
    fn vol_y_common(&self, t: f64, y: f64) -> f64;
    fn vol_y_idio(&self, t: f64, y: f64) -> f64;
    fn x0(&self) -> f64;
    fn y0(&self) -> f64;
    fn barrier(&self) -> f64;
}

type Coef2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Coef3 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A diffusion pair given by arbitrary coefficient closures.
#[derive(Clone)]
pub struct DiffusionSpec {
    drift_x: Coef2,
    vol_x: Coef2,
    drift_y: Coef3,
    vol_y_common: Coef2,
    vol_y_idio: Coef2,
    x0: f64,
    y0: f64,
    barrier: f64,
}

impl DiffusionSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        drift_x: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        vol_x: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        drift_y: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        vol_y_common: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        vol_y_idio: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        x0: f64,
        y0: f64,
        barrier: f64,
    ) -> Result<Self> {
        check_start(x0, y0, barrier)?;
        Ok(Self {
            drift_x: Arc::new(drift_x),
            vol_x: Arc::new(vol_x),
            drift_y: Arc::new(drift_y),
            vol_y_common: Arc::new(vol_y_common),
            vol_y_idio: Arc::new(vol_y_idio),
            x0,
            y0,
            barrier,
        })
    }
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("x0", &self.x0)
            .field("y0", &self.y0)
            .field("barrier", &self.barrier)
            .finish_non_exhaustive()
    }
}

impl Diffusion for DiffusionSpec {
    fn drift_x(&self, t: f64, x: f64) -> f64 {
        (self.drift_x)(t, x)
    }
    fn vol_x(&self, t: f64, x: f64) -> f64 {
        (self.vol_x)(t, x)
    }
    fn drift_y(&self, t: f64, y: f64, x: f64) -> f64 {
        (self.drift_y)(t, y, x)
    }
    fn vol_y_common(&self, t: f64, y: f64) -> f64 {
        (self.vol_y_common)(t, y)
    }
    fn vol_y_idio(&self, t: f64, y: f64) -> f64 {
        (self.vol_y_idio)(t, y)
    }
    fn x0(&self) -> f64 {
        self.x0
    }
    fn y0(&self) -> f64 {
        self.y0
    }
    fn barrier(&self) -> f64 {
        self.barrier
    }
}

/// Geometric Brownian signal observed through a geometric Brownian proxy with
/// extra multiplicative noise:
///
/// `dX = X(μ dt + σ dW)`, `dY = Y(μ dt + σ dW + δ dW̃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmSpec {
    pub mu: f64,
    pub sigma: f64,
    pub delta: f64,
    pub x0: f64,
    pub y0: f64,
    pub barrier: f64,
}

impl GbmSpec {
    /// Volatilities may be zero (noise-free limit); the quantizer rejects a
    /// zero signal volatility when it needs a transition density.
    pub fn new(mu: f64, sigma: f64, delta: f64, x0: f64, y0: f64, barrier: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidModel(format!("sigma must be >= 0, got {sigma}")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidModel(format!("delta must be >= 0, got {delta}")));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidModel("mu must be finite".into()));
        }
        if !(x0 > 0.0 && y0 > 0.0) {
            return Err(Error::InvalidModel("x0 and y0 must be positive".into()));
        }
        if barrier <= 0.0 {
            return Err(Error::InvalidModel(format!("barrier must be positive, got {barrier}")));
        }
        check_start(x0, y0, barrier)?;
        Ok(Self {
            mu,
            sigma,
            delta,
            x0,
            y0,
            barrier,
        })
    }

    /// Parameter set of the survival-probability experiments.
    pub fn reference() -> Self {
        Self {
            mu: 0.03,
            sigma: 0.09,
            delta: 0.5,
            x0: 86.3,
            y0: 86.3,
            barrier: 76.0,
        }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        Self { delta, ..self }
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn into_arc(self) -> Arc<dyn Diffusion> {
        Arc::new(self)
    }
}

impl Diffusion for GbmSpec {
    #[inline]
    fn drift_x(&self, _t: f64, x: f64) -> f64 {
        self.mu * x
    }
    #[inline]
    fn vol_x(&self, _t: f64, x: f64) -> f64 {
        self.sigma * x
    }
    #[inline]
    fn drift_y(&self, _t: f64, y: f64, _x: f64) -> f64 {
        self.mu * y
    }
    #[inline]
    fn vol_y_common(&self, _t: f64, y: f64) -> f64 {
        self.sigma * y
    }
    #[inline]
    fn vol_y_idio(&self, _t: f64, y: f64) -> f64 {
        self.delta * y
    }
    fn x0(&self) -> f64 {
        self.x0
    }
    fn y0(&self) -> f64 {
        self.y0
    }
    fn barrier(&self) -> f64 {
        self.barrier
    }
}

fn check_start(x0: f64, y0: f64, barrier: f64) -> Result<()> {
    if !(x0.is_finite() && y0.is_finite() && barrier.is_finite()) {
        return Err(Error::InvalidModel("x0, y0 and barrier must be finite".into()));
    }
    if barrier >= x0 {
        return Err(Error::InvalidModel(format!(
            "barrier {barrier} must lie strictly below x0 {x0}"
        )));
    }
    Ok(())
}

/// Discretization dates `0 = t_0 < … < t_m < … < t_n` where `t_m` is the last
/// observation date.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    obs_index: usize,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, obs_index: usize) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidGrid("no dates".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first date must be 0, got {}", times[0])));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "dates must be strictly increasing (t_{} = {}, t_{} = {})",
                k,
                times[k],
                k + 1,
                times[k + 1]
            )));
        }
        if obs_index >= times.len() {
            return Err(Error::InvalidGrid(format!(
                "observation index {obs_index} beyond last date index {}",
                times.len() - 1
            )));
        }
        Ok(Self { times, obs_index })
    }

    /// `steps` equal steps on `[0, horizon]`, observed up to the horizon.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidGrid("need a positive horizon and at least one step".into()));
        }
        let dt = horizon / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        times[steps] = horizon;
        Self::new(times, steps)
    }

    /// `obs_steps` equal steps on `[0, t_obs]`, continued with steps of the
    /// same length until `t_end` (the last step is shortened if needed).
    pub fn observed_then_extended(t_obs: f64, obs_steps: usize, t_end: f64) -> Result<Self> {
        if obs_steps == 0 || !(t_obs > 0.0) || t_end < t_obs {
            return Err(Error::InvalidGrid(
                "need 0 < t_obs <= t_end and at least one observation step".into(),
            ));
        }
        let dt = t_obs / obs_steps as f64;
        let mut times: Vec<f64> = (0..=obs_steps).map(|k| k as f64 * dt).collect();
        times[obs_steps] = t_obs;
        let extra = ((t_end - t_obs) / dt - 1e-9).ceil().max(0.0) as usize;
        for j in 1..=extra {
            times.push((t_obs + j as f64 * dt).min(t_end));
        }
        if let Some(last) = times.last_mut() {
            if (*last - t_end).abs() < 1e-9 * t_end.max(1.0) {
                *last = t_end;
            }
        }
        Self::new(times, obs_steps)
    }

    /// Merge extra dates into the grid (duplicates within `1e-10` are dropped).
    /// The observation date keeps its time.
    pub fn with_extra_dates(&self, extra: &[f64]) -> Result<Self> {
        let t_obs = self.obs_time();
        let mut all: Vec<f64> = self.times.iter().chain(extra.iter()).copied().collect();
        all.sort_by(f64::total_cmp);
        let mut merged: Vec<f64> = Vec::with_capacity(all.len());
        for t in all {
            match merged.last() {
                Some(&last) if (t - last).abs() <= 1e-10 => {}
                _ => merged.push(t),
            }
        }
        let obs_index = merged
            .iter()
            .position(|&t| (t - t_obs).abs() <= 1e-10)
            .ok_or_else(|| Error::InvalidGrid("observation date lost while merging".into()))?;
        merged[obs_index] = t_obs;
        Self::new(merged, obs_index)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of steps `n`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Index `m` of the last observation date.
    pub fn obs_index(&self) -> usize {
        self.obs_index
    }

    pub fn obs_time(&self) -> f64 {
        self.times[self.obs_index]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    /// Step length `Δ_k = t_{k+1} − t_k`.
    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// Index of the date equal to `t` within `tol`.
    pub fn index_of(&self, t: f64, tol: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s < t - tol);
        (k < self.times.len() && (self.times[k] - t).abs() <= tol).then_some(k)
    }

    /// Same dates with a different observation index.
    pub fn with_obs_index(&self, obs_index: usize) -> Result<Self> {
        Self::new(self.times.clone(), obs_index)
    }
}

/// Signal path over the whole grid and observation path up to `t_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub x_path: Vec<f64>,
    pub y_path: Vec<f64>,
}

/// Counter-based normal generator: ChaCha8 keyed by `seed`, one stream per
/// path, standard normals obtained by inverting `Φ` on 53-bit uniforms.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        normal::inv_cdf(self.uniform())
    }
}

/// One Euler step of the pair. The same `z1` drives both coordinates.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn euler_step<D: Diffusion + ?Sized>(
    spec: &D,
    t: f64,
    x: f64,
    y: f64,
    dt: f64,
    z1: f64,
    z2: f64,
) -> Result<(f64, f64)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("step length must be positive, got {dt}")));
    }
    let sq = dt.sqrt();
    let x1 = x + spec.drift_x(t, x) * dt + spec.vol_x(t, x) * sq * z1;
    let y1 = y
        + spec.drift_y(t, y, x) * dt
        + spec.vol_y_common(t, y) * sq * z1
        + spec.vol_y_idio(t, y) * sq * z2;
    if !x1.is_finite() {
        return Err(Error::NumericalOverflow { step: 0, what: "signal" });
    }
    if !y1.is_finite() {
        return Err(Error::NumericalOverflow { step: 0, what: "observation" });
    }
    Ok((x1, y1))
}

/// Simulate the pair on `grid` using stream 0 of `seed`.
pub fn simulate_pair<D: Diffusion + ?Sized>(spec: &D, grid: &TimeGrid, seed: u64) -> Result<PathPair> {
    simulate_pair_stream(spec, grid, seed, 0)
}

/// Simulate the pair using stream `stream` of `seed`. Every step draws two
/// normals, including steps past the observation date.
pub fn simulate_pair_stream<D: Diffusion + ?Sized>(
    spec: &D,
    grid: &TimeGrid,
    seed: u64,
    stream: u64,
) -> Result<PathPair> {
    simulate_until(spec, grid, grid.steps(), seed, stream)
}

/// Observation path `(ȳ_0, …, ȳ_m)` of stream `stream`; the signal is
/// simulated alongside and discarded.
pub fn simulate_observation<D: Diffusion + ?Sized>(
    spec: &D,
    grid: &TimeGrid,
    seed: u64,
    stream: u64,
) -> Result<Vec<f64>> {
    simulate_until(spec, grid, grid.obs_index(), seed, stream).map(|p| p.y_path)
}

fn simulate_until<D: Diffusion + ?Sized>(
    spec: &D,
    grid: &TimeGrid,
    last: usize,
    seed: u64,
    stream: u64,
) -> Result<PathPair> {
    let m = grid.obs_index();
    let mut rng = NormalStream::new(seed, stream);
    let mut x_path = Vec::with_capacity(last + 1);
    let mut y_path = Vec::with_capacity(m.min(last) + 1);
    let (mut x, mut y) = (spec.x0(), spec.y0());
    x_path.push(x);
    y_path.push(y);
    for k in 0..last {
        let z1 = rng.normal();
        let z2 = rng.normal();
        let (x1, y1) = euler_step(spec, grid.time(k), x, y, grid.dt(k), z1, z2).map_err(|e| match e {
            Error::NumericalOverflow { what, .. } => Error::NumericalOverflow { step: k, what },
            other => other,
        })?;
        x = x1;
        x_path.push(x);
        if k < m {
            y = y1;
            y_path.push(y);
        }
    }
    Ok(PathPair { x_path, y_path })
}

/// Discretely monitored survival: every sampled value lies strictly above the
/// barrier (default is `X ≤ a`).
pub fn first_passage_indicator(x_path: &[f64], barrier: f64) -> bool {
    x_path.iter().all(|&x| x > barrier)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_spec() -> DiffusionSpec {
        DiffusionSpec::new(
            |_, _| 0.0,
            |_, _| 1.0,
            |_, _, _| 0.0,
            |_, _| 1.0,
            |_, _| 1.0,
            5.0,
            5.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_zero_drift_step_is_identity() {
        let (x, y) = euler_step(&unit_spec(), 0.0, 5.0, 5.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!((x, y), (5.0, 5.0));
    }

    #[test]
    fn gbm_drift_only_step() {
        let spec = GbmSpec::new(0.03, 0.09, 0.5, 86.3, 86.3, 76.0).unwrap();
        let (x, _) = euler_step(&spec, 0.0, 86.3, 86.3, 0.02, 0.0, 0.0).unwrap();
        assert!((x - 86.35178).abs() < 1e-12);
    }

    #[test]
    fn common_noise_structure() {
        // σ = ν and zero drift: increments differ only by the idiosyncratic term.
        let spec = unit_spec();
        let dt = 0.25;
        let (x, y) = euler_step(&spec, 0.0, 5.0, 5.0, dt, 1.0, 0.7).unwrap();
        assert!(((y - 5.0) - (x - 5.0) - dt.sqrt() * 0.7).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(euler_step(&unit_spec(), 0.0, 1.0, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(GbmSpec::new(0.0, 0.1, 0.1, 70.0, 70.0, 76.0).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5], 1).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5], 2).is_err());
    }

    #[test]
    fn overflow_reports_step() {
        let spec = DiffusionSpec::new(
            |_, x| x * x * 1e200,
            |_, _| 1.0,
            |_, _, _| 0.0,
            |_, _| 1.0,
            |_, _| 1.0,
            5.0,
            5.0,
            0.0,
        )
        .unwrap();
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        match simulate_pair(&spec, &grid, 1) {
            Err(Error::NumericalOverflow { step, what }) => {
                assert_eq!(what, "signal");
                assert!(step < 10);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn simulation_is_deterministic_and_shaped() {
        let spec = GbmSpec::reference();
        let grid = TimeGrid::observed_then_extended(1.0, 50, 3.0).unwrap();
        let a = simulate_pair(&spec, &grid, 42).unwrap();
        let b = simulate_pair(&spec, &grid, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x_path.len(), grid.steps() + 1);
        assert_eq!(a.y_path.len(), 51);
        assert_eq!(a.x_path[0], 86.3);
        let c = simulate_pair(&spec, &grid, 43).unwrap();
        assert_ne!(a.x_path, c.x_path);
        let obs = simulate_observation(&spec, &grid, 42, 0).unwrap();
        assert_eq!(obs, a.y_path);
    }

    #[test]
    fn noise_free_limit_is_euler_ode() {
        let spec = GbmSpec::new(0.03, 0.0, 0.0, 86.3, 86.3, 76.0).unwrap();
        let grid = TimeGrid::new(vec![0.0, 0.1, 0.25, 0.7, 1.0], 4).unwrap();
        let p = simulate_pair(&spec, &grid, 7).unwrap();
        let mut x = 86.3;
        for k in 0..grid.steps() {
            x *= 1.0 + 0.03 * grid.dt(k);
            assert!((p.x_path[k + 1] - x).abs() <= 1e-13 * x);
        }
    }

    #[test]
    fn sample_mean_matches_gbm_mean() {
        let spec = GbmSpec::reference();
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for p in 0..n {
            let path = simulate_pair_stream(&spec, &grid, 12, p).unwrap();
            let v = *path.x_path.last().unwrap();
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        // Euler mean is x0 (1 + μΔ)^n; the analytic GBM mean differs by O(Δ).
        let exact = 86.3 * (0.03f64).exp();
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean} exact {exact} se {se}");
    }

    #[test]
    fn increment_correlation_matches_loading() {
        // Constant coefficients: corr(ΔX, ΔY) = ν / sqrt(ν² + δ²).
        let (nu, delta) = (0.6, 0.8);
        let spec = DiffusionSpec::new(
            |_, _| 0.1,
            |_, _| 0.6,
            |_, _, _| -0.2,
            move |_, _| nu,
            move |_, _| delta,
            1.0,
            1.0,
            0.0,
        )
        .unwrap();
        let grid = TimeGrid::uniform(0.5, 1).unwrap();
        let n = 50_000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for p in 0..n as u64 {
            let path = simulate_pair_stream(&spec, &grid, 3, p).unwrap();
            xs.push(path.x_path[1] - 1.0);
            ys.push(path.y_path[1] - 1.0);
        }
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        let rho = sxy / (sxx * syy).sqrt();
        let expected = nu / (nu * nu + delta * delta).sqrt();
        let se = (1.0 - expected * expected) / (n as f64).sqrt();
        assert!((rho - expected).abs() < 3.0 * se, "rho {rho} expected {expected}");
    }

    #[test]
    fn discrete_indicator_boundary() {
        assert!(first_passage_indicator(&[86.3, 90.0, 88.0], 76.0));
        assert!(!first_passage_indicator(&[86.3, 76.0, 88.0], 76.0));
    }

    #[test]
    fn grid_construction() {
        let g = TimeGrid::observed_then_extended(1.0, 50, 3.0).unwrap();
        assert_eq!(g.steps(), 150);
        assert_eq!(g.obs_index(), 50);
        assert_eq!(g.obs_time(), 1.0);
        assert_eq!(*g.times().last().unwrap(), 3.0);
        assert_eq!(g.index_of(1.1, 1e-9), Some(55));
        let merged = g.with_extra_dates(&[1.25, 1.5]).unwrap();
        assert_eq!(merged.obs_index(), 50);
        assert!(merged.index_of(1.25, 1e-12).is_some());
    }
}
