//! Independent reference computations for cross-checking the quantized
//! estimators: a bootstrap particle filter, exhaustive summation over the
//! paths of a tiny quantized chain, Monte Carlo first passage, and adaptive
//! quadrature.
//!
//! Nothing here calls into `normal`, `kernels` or the simulation routines of
//! `model`: the densities, the bridge factor and the random number stream are
//! rewritten from scratch so that agreement means something.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::filter::ObservationPath;
use crate::model::{Diffusion, TimeGrid};
use crate::quantizer::QuantizationTree;

fn std_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability that a Brownian bridge from `x0` to `x1` with variance `v`
/// over the step stays above `a`.
fn bridge(x0: f64, x1: f64, a: f64, v: f64) -> f64 {
    if x0 <= a || x1 <= a {
        return 0.0;
    }
    1.0 - (-2.0 * (x0 - a) * (x1 - a) / v).exp()
}

/// Density of the observation increment given the signal increment, written
/// as the ratio of the bivariate Gaussian density of both increments over
/// the density of the signal increment.
fn obs_density<D: Diffusion + ?Sized>(spec: &D, t: f64, dt: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let s = spec.vol_x(t, x0);
    let nu = spec.vol_y_common(t, y0);
    let d = spec.vol_y_idio(t, y0);
    let ex = x1 - x0 - spec.drift_x(t, x0) * dt;
    let ey = y1 - y0 - spec.drift_y(t, y0, x0) * dt;
    let (vxx, vxy, vyy) = (s * s * dt, s * nu * dt, (nu * nu + d * d) * dt);
    let det = vxx * vyy - vxy * vxy;
    let q = (vyy * ex * ex - 2.0 * vxy * ex * ey + vxx * ey * ey) / det;
    let joint = (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
    let marginal = (-0.5 * ex * ex / vxx).exp() / (2.0 * std::f64::consts::PI * vxx).sqrt();
    joint / marginal
}

/// A weighted particle approximation of the filter at one date.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
    pub step: usize,
}

/// One replicate of the bootstrap filter.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Replicate {
    log_evidence: f64,
    /// Weighted mean of the survival factors carried along each genealogy
    /// (1 when the barrier enters the weights instead).
    carried_survival: f64,
    /// `E[f(X_m) | observations, survival]`
    posterior_f: f64,
    posterior_mean: f64,
}

/// With `with_barrier` the bridge factor multiplies the weights; otherwise it
/// is carried by each particle through resampling, so that the final
/// weighted mean of the carried factors estimates the survival probability
/// given the observations.
#[allow(clippy::too_many_arguments)]
fn run_particles<D: Diffusion + ?Sized>(
    spec: &D,
    grid: &TimeGrid,
    obs: &[f64],
    with_barrier: bool,
    uninformative: bool,
    f: &(dyn Fn(f64) -> f64 + Sync),
    particles: usize,
    rng: &mut ChaCha20Rng,
) -> Result<(Replicate, ParticleCloud)> {
    let m = grid.obs_index();
    let a = spec.barrier();
    let mut x = vec![spec.x0(); particles];
    let mut next = vec![0.0; particles];
    let mut carried = vec![1.0; particles];
    let mut w = vec![1.0 / particles as f64; particles];
    let mut log_evidence = 0.0;
    for k in 0..m {
        let (t, dt) = (grid.time(k), grid.dt(k));
        for (xi, ni) in x.iter().zip(next.iter_mut()) {
            let z: f64 = rng.sample(StandardNormal);
            *ni = xi + spec.drift_x(t, *xi) * dt + spec.vol_x(t, *xi) * dt.sqrt() * z;
        }
        for i in 0..particles {
            let s = spec.vol_x(t, x[i]);
            let survive = bridge(x[i], next[i], a, s * s * dt);
            let mut wi = if uninformative {
                1.0
            } else {
                obs_density(spec, t, dt, x[i], obs[k], next[i], obs[k + 1])
            };
            if with_barrier {
                wi *= survive;
            } else {
                carried[i] *= survive;
            }
            w[i] = wi;
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::WeightCollapse {
                step: k + 1,
                suggested_particles: particles.saturating_mul(10),
            });
        }
        log_evidence += (total / particles as f64).ln();
        w.iter_mut().for_each(|v| *v /= total);
        std::mem::swap(&mut x, &mut next);
        if k + 1 < m {
            let idx = systematic_indices(&w, rng);
            x = idx.iter().map(|&i| x[i]).collect();
            carried = idx.iter().map(|&i| carried[i]).collect();
            w.iter_mut().for_each(|v| *v = 1.0 / particles as f64);
        }
    }
    let carried_survival: f64 = w.iter().zip(&carried).map(|(wi, ci)| wi * ci).sum();
    if !(carried_survival > 0.0) {
        return Err(Error::WeightCollapse {
            step: m,
            suggested_particles: particles.saturating_mul(10),
        });
    }
    let post: Vec<f64> = w.iter().zip(&carried).map(|(wi, ci)| wi * ci / carried_survival).collect();
    let posterior_f = x.iter().zip(&post).map(|(xi, wi)| wi * f(*xi)).sum();
    let posterior_mean = x.iter().zip(&post).map(|(xi, wi)| wi * xi).sum();
    Ok((
        Replicate {
            log_evidence: log_evidence + carried_survival.ln(),
            carried_survival,
            posterior_f,
            posterior_mean,
        },
        ParticleCloud {
            positions: x,
            weights: post,
            step: m,
        },
    ))
}

/// Systematic resampling: one uniform, `n` evenly spaced pointers into the
/// cumulative weights.
pub fn systematic_indices(w: &[f64], rng: &mut impl Rng) -> Vec<usize> {
    let n = w.len();
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = w[0];
    let mut i = 0;
    for j in 0..n {
        let u = u0 + j as f64 / n as f64;
        while u > cum && i + 1 < n {
            i += 1;
            cum += w[i];
        }
        out.push(i);
    }
    out
}

pub fn systematic_resample(x: &[f64], w: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    systematic_indices(w, rng).into_iter().map(|i| x[i]).collect()
}

/// Particle estimates with standard errors across independent replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleEstimate {
    /// `E[f(X_m) | observations, survival to t_m]`
    pub p_full: f64,
    pub p_full_se: f64,
    /// Posterior survival probability to `t_m` given the observations.
    pub azema: f64,
    pub azema_se: f64,
    /// `log E[Π g^a]`, the log raw mass of the barrier filter.
    pub log_evidence: f64,
    pub log_evidence_se: f64,
    /// `E[X_m | observations, survival]`
    pub posterior_mean: f64,
    pub posterior_mean_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleOptions {
    pub particles: usize,
    /// Independent filters the particles are split into; the spread of their
    /// estimates gives the standard errors.
    pub replicates: usize,
    pub seed: u64,
    /// Ignore the observations (unit likelihood).
    pub uninformative: bool,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        Self {
            particles: 100_000,
            replicates: 20,
            seed: 0,
            uninformative: false,
        }
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Bootstrap particle filter on the Euler signal, weighted by the
/// observation density and the bridge survival factor, resampled
/// systematically after every step. `f` is integrated against the final
/// filter (e.g. the survival function from the observation date on).
pub fn particle_filter_estimate<D: Diffusion + ?Sized>(
    spec: &D,
    grid: &TimeGrid,
    obs: &ObservationPath,
    f: &(dyn Fn(f64) -> f64 + Sync),
    opts: &ParticleOptions,
) -> Result<ParticleEstimate> {
    obs.check_against(grid)?;
    if opts.replicates < 2 || opts.particles < opts.replicates {
        return Err(Error::InvalidInput("need at least two replicates with one particle each".into()));
    }
    let per = opts.particles / opts.replicates;
    let y = obs.values();
    let reps: Vec<(Replicate, f64)> = (0..opts.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
            rng.set_stream(2 * r);
            let (with, _) = run_particles(spec, grid, y, true, opts.uninformative, f, per, &mut rng)?;
            let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
            rng.set_stream(2 * r + 1);
            let (without, _) = run_particles(spec, grid, y, false, opts.uninformative, f, per, &mut rng)?;
            Ok((with, without.carried_survival))
        })
        .collect::<Result<_>>()?;
    let col = |g: &dyn Fn(&(Replicate, f64)) -> f64| reps.iter().map(g).collect::<Vec<f64>>();
    let (p_full, p_full_se) = mean_se(&col(&|r| r.0.posterior_f));
    let (azema, azema_se) = mean_se(&col(&|r| r.1));
    let (log_evidence, log_evidence_se) = mean_se(&col(&|r| r.0.log_evidence));
    let (posterior_mean, posterior_mean_se) = mean_se(&col(&|r| r.0.posterior_mean));
    Ok(ParticleEstimate {
        p_full,
        p_full_se,
        azema,
        azema_se,
        log_evidence,
        log_evidence_se,
        posterior_mean,
        posterior_mean_se,
    })
}

/// Final particle cloud of a single filter run (for inspection).
pub fn particle_cloud<D: Diffusion + ?Sized>(
    spec: &D,
    grid: &TimeGrid,
    obs: &ObservationPath,
    particles: usize,
    seed: u64,
) -> Result<ParticleCloud> {
    obs.check_against(grid)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    run_particles(spec, grid, obs.values(), true, false, &|_| 1.0, particles, &mut rng).map(|r| r.1)
}

/// Transition probabilities from `x` at `t` to the Voronoi cells of
/// `points` (sorted) after one Euler step of length `dt`.
pub fn reference_transition_row<D: Diffusion + ?Sized>(spec: &D, t: f64, dt: f64, x: f64, points: &[f64]) -> Vec<f64> {
    let mean = x + spec.drift_x(t, x) * dt;
    let sd = spec.vol_x(t, x) * dt.sqrt();
    let n = points.len();
    let edge = |j: usize| -> f64 {
        if j == 0 {
            0.0
        } else if j == n {
            1.0
        } else {
            std_cdf((0.5 * (points[j - 1] + points[j]) - mean) / sd)
        }
    };
    (0..n).map(|j| edge(j + 1) - edge(j)).collect()
}

/// Exact filtered expectation of `f` after a single step from the start
/// point, by quadrature over the Euler transition density.
pub fn single_step_posterior<D: Diffusion + ?Sized>(
    spec: &D,
    dt: f64,
    y1: f64,
    with_barrier: bool,
    f: &dyn Fn(f64) -> f64,
) -> f64 {
    let (x0, y0, a) = (spec.x0(), spec.y0(), spec.barrier());
    let mean = x0 + spec.drift_x(0.0, x0) * dt;
    let sd = spec.vol_x(0.0, x0) * dt.sqrt();
    let weight = |x: f64| {
        let z = (x - mean) / sd;
        let mut w = (-0.5 * z * z).exp() * obs_density(spec, 0.0, dt, x0, y0, x, y1);
        if with_barrier {
            w *= bridge(x0, x, a, sd * sd);
        }
        w
    };
    let (lo, hi) = (mean - 12.0 * sd, mean + 12.0 * sd);
    let num = adaptive_simpson(&|x| weight(x) * f(x), lo, hi, 1e-12);
    let den = adaptive_simpson(&weight, lo, hi, 1e-12);
    num / den
}

pub const BRUTE_FORCE_MAX_STEPS: usize = 5;
pub const BRUTE_FORCE_MAX_POINTS: usize = 4;

/// Raw filter masses on the observation-date grid, by summing the weight of
/// every path of grid indices `i_0, …, i_m` separately.
pub fn brute_force_quantized(tree: &QuantizationTree, obs: &ObservationPath, with_barrier: bool) -> Result<Vec<f64>> {
    let grid = tree.time_grid();
    let m = grid.obs_index();
    if m > BRUTE_FORCE_MAX_STEPS {
        return Err(Error::InstanceTooLarge(format!(
            "{m} observation steps (at most {BRUTE_FORCE_MAX_STEPS})"
        )));
    }
    if let Some(k) = (0..=m).find(|&k| tree.grid(k).len() > BRUTE_FORCE_MAX_POINTS) {
        return Err(Error::InstanceTooLarge(format!(
            "grid {k} has {} points (at most {BRUTE_FORCE_MAX_POINTS})",
            tree.grid(k).len()
        )));
    }
    obs.check_against(grid)?;
    let spec = tree.spec().as_ref();
    let y = obs.values();
    let a = spec.barrier();
    let mut out = vec![0.0; tree.grid(m).len()];
    let mut path = vec![0usize; m + 1];
    loop {
        let mut weight = tree.grid(0).weights()[path[0]];
        for k in 1..=m {
            let (i, j) = (path[k - 1], path[k]);
            let (t, dt) = (grid.time(k - 1), grid.dt(k - 1));
            let (xi, xj) = (tree.grid(k - 1).points()[i], tree.grid(k).points()[j]);
            let mut h = tree.transition(k).get(i, j) * obs_density(spec, t, dt, xi, y[k - 1], xj, y[k]);
            if with_barrier {
                let s = spec.vol_x(t, xi);
                h *= bridge(xi, xj, a, s * s * dt);
            }
            weight *= h;
        }
        out[path[m]] += weight;
        // next path in lexicographic order
        let mut k = m;
        loop {
            path[k] += 1;
            if path[k] < tree.grid(k).len() {
                break;
            }
            path[k] = 0;
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
        }
    }
}

/// Simulation scheme of [`mc_first_passage`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PassageScheme {
    /// Euler steps of the signal; survival of each step by the bridge factor
    /// frozen at the left end, or discrete monitoring.
    Euler,
    /// Exact steps of `ln X` for a geometric Brownian signal with constant
    /// coefficients `mu`, `sigma`; the log-bridge makes the estimate unbiased
    /// for any number of steps.
    ExactGbm { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassageOptions {
    pub steps: usize,
    pub paths: usize,
    pub bridge_corrected: bool,
    pub seed: u64,
    pub scheme: PassageScheme,
}

/// Monte Carlo estimate of the probability that the signal started at `x` at
/// `start` stays above the barrier until `start + horizon`, and its standard
/// error.
pub fn mc_first_passage<D: Diffusion + ?Sized>(
    spec: &D,
    x: f64,
    start: f64,
    horizon: f64,
    opts: &PassageOptions,
) -> Result<(f64, f64)> {
    let times: Vec<f64> = (0..=opts.steps)
        .map(|i| start + horizon * i as f64 / opts.steps as f64)
        .collect();
    mc_first_passage_on(spec, x, &times, opts)
}

/// As [`mc_first_passage`] on explicit dates `times[0] < … < times[n]`.
pub fn mc_first_passage_on<D: Diffusion + ?Sized>(
    spec: &D,
    x: f64,
    times: &[f64],
    opts: &PassageOptions,
) -> Result<(f64, f64)> {
    if opts.paths < 2 || times.len() < 2 {
        return Err(Error::InvalidInput("need two paths and one step at least".into()));
    }
    let a = spec.barrier();
    const CHUNK: u64 = 4096;
    let chunks = (opts.paths as u64).div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
            rng.set_stream(c);
            let count = CHUNK.min(opts.paths as u64 - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let mut v = 1.0;
                let mut xc = x;
                for w in times.windows(2) {
                    let (t, dt) = (w[0], w[1] - w[0]);
                    let z: f64 = rng.sample(StandardNormal);
                    let (x1, var, (lo, hi, la)) = match opts.scheme {
                        PassageScheme::Euler => {
                            let sig = spec.vol_x(t, xc);
                            let x1 = xc + spec.drift_x(t, xc) * dt + sig * dt.sqrt() * z;
                            (x1, sig * sig * dt, (xc, x1, a))
                        }
                        PassageScheme::ExactGbm { mu, sigma } => {
                            let x1 = xc * ((mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * z).exp();
                            (x1, sigma * sigma * dt, (xc.ln(), x1.ln(), a.ln()))
                        }
                    };
                    if x1 <= a {
                        v = 0.0;
                        break;
                    }
                    if opts.bridge_corrected {
                        v *= bridge(lo, hi, la, var);
                    }
                    xc = x1;
                }
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    let n = opts.paths as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Survival table by the forward recursion: for each start point `i` of grid
/// `m`, the unit row `e_i` is pushed through the barrier-weighted kernels up
/// to date `n` and summed.
pub fn survival_table_forward(tree: &QuantizationTree, m: usize, n: usize) -> Result<Vec<f64>> {
    if m > n || n > tree.steps() {
        return Err(Error::InvalidInput(format!("need m <= n <= {}", tree.steps())));
    }
    let spec = tree.spec().as_ref();
    let grid = tree.time_grid();
    let a = spec.barrier();
    let rows = tree.grid(m).len();
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut v = vec![0.0; rows];
        v[i] = 1.0;
        for k in m + 1..=n {
            let (t, dt) = (grid.time(k - 1), grid.dt(k - 1));
            let (from, to) = (tree.grid(k - 1).points(), tree.grid(k).points());
            let p = tree.transition(k);
            let mut next = vec![0.0; to.len()];
            for (r, &vr) in v.iter().enumerate() {
                let s = spec.vol_x(t, from[r]);
                for (c, nc) in next.iter_mut().enumerate() {
                    *nc += vr * p.get(r, c) * bridge(from[r], to[c], a, s * s * dt);
                }
            }
            v = next;
        }
        out.push(v.iter().sum());
    }
    Ok(out)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 24)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::Filter;
    use crate::model::{simulate_observation, GbmSpec};
    use crate::quantizer::{build_tree, uniform_sizes};

    #[test]
    fn quadrature_basics() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
        let g = adaptive_simpson(&|x: f64| (-0.5 * x * x).exp(), -12.0, 12.0, 1e-13);
        assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn independent_cdf_agrees_with_library() {
        for x in [-8.0, -1.3, 0.0, 0.4, 5.0] {
            let (a, b) = (std_cdf(x), crate::normal::cdf(x));
            assert!((a - b).abs() <= 1e-9 * b, "{a} {b}");
        }
    }

    #[test]
    fn remote_barrier_survives() {
        let spec = GbmSpec::new(0.03, 0.09, 0.5, 86.3, 86.3, 1.0).unwrap();
        let opts = PassageOptions {
            steps: 20,
            paths: 2000,
            bridge_corrected: true,
            seed: 3,
            scheme: PassageScheme::Euler,
        };
        let (p, _) = mc_first_passage(&spec, 86.3, 0.0, 1.0, &opts).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn bridge_kills_more_than_discrete_monitoring() {
        let spec = GbmSpec::reference();
        let mut opts = PassageOptions {
            steps: 10,
            paths: 40_000,
            bridge_corrected: false,
            seed: 5,
            scheme: PassageScheme::Euler,
        };
        let (discrete, _) = mc_first_passage(&spec, 80.0, 0.0, 1.0, &opts).unwrap();
        opts.bridge_corrected = true;
        let (bridged, _) = mc_first_passage(&spec, 80.0, 0.0, 1.0, &opts).unwrap();
        // same paths, extra killing factor per step
        assert!(bridged <= discrete);
    }

    #[test]
    fn brute_force_guards_size() {
        let grid = TimeGrid::uniform(0.6, 6).unwrap();
        let tree = build_tree(GbmSpec::reference().into_arc(), grid.clone(), &uniform_sizes(6, 2)).unwrap();
        let obs = ObservationPath::on_grid(&grid, vec![86.3; 7]).unwrap();
        assert!(matches!(brute_force_quantized(&tree, &obs, true), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn brute_force_single_step_is_one_product() {
        let grid = TimeGrid::uniform(0.02, 1).unwrap();
        let tree = build_tree(GbmSpec::reference().into_arc(), grid.clone(), &[1, 4]).unwrap();
        let y = simulate_observation(tree.spec().as_ref(), &grid, 1, 0).unwrap();
        let obs = ObservationPath::on_grid(&grid, y).unwrap();
        let brute = brute_force_quantized(&tree, &obs, true).unwrap();
        let f = Filter::new(&tree).forward(&obs, true).unwrap();
        for (a, b) in brute.iter().zip(f.raw()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn uninformative_particles_recover_prior_mean() {
        let spec = GbmSpec::reference();
        let grid = TimeGrid::uniform(0.2, 10).unwrap();
        let obs = ObservationPath::on_grid(&grid, vec![0.0; 11]).unwrap();
        let est = particle_filter_estimate(
            &spec,
            &grid,
            &obs,
            &|_| 1.0,
            &ParticleOptions {
                particles: 40_000,
                replicates: 20,
                seed: 1,
                uninformative: true,
            },
        )
        .unwrap();
        // survival-conditioned mean is barely moved from the Euler mean here
        let prior = 86.3 * (1.0 + 0.03 * 0.02f64).powi(10);
        assert!((est.posterior_mean - prior).abs() < 4.0 * est.posterior_mean_se + 1e-3);
    }

    #[test]
    fn transition_rows_match_quantizer() {
        let grid = TimeGrid::uniform(0.2, 10).unwrap();
        let tree = build_tree(GbmSpec::reference().into_arc(), grid.clone(), &uniform_sizes(10, 12)).unwrap();
        let spec = tree.spec().clone();
        for k in [1, 5, 10] {
            let from = tree.grid(k - 1).points();
            for (i, &x) in from.iter().enumerate() {
                let row = reference_transition_row(spec.as_ref(), grid.time(k - 1), grid.dt(k - 1), x, tree.grid(k).points());
                for (a, b) in row.iter().zip(tree.transition(k).row(i)) {
                    assert!((a - b).abs() < 1e-9, "step {k} row {i}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn particles_match_single_step_quadrature() {
        let spec = GbmSpec::reference().with_delta(0.05);
        let grid = TimeGrid::uniform(0.05, 1).unwrap();
        let obs = ObservationPath::on_grid(&grid, vec![86.3, 85.0]).unwrap();
        let exact = single_step_posterior(&spec, 0.05, 85.0, true, &|x| x);
        let est = particle_filter_estimate(
            &spec,
            &grid,
            &obs,
            &|_| 1.0,
            &ParticleOptions {
                particles: 200_000,
                replicates: 20,
                seed: 9,
                uninformative: false,
            },
        )
        .unwrap();
        assert!((est.posterior_mean - exact).abs() < 4.0 * est.posterior_mean_se, "{} vs {exact}", est.posterior_mean);
    }

    #[test]
    fn resampling_keeps_heavy_particles() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let out = systematic_resample(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 1.0, 0.0], &mut rng);
        assert_eq!(out, vec![3.0; 4]);
    }
}
