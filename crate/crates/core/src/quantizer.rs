//! Recursive marginal quantization of the Euler scheme of the signal.
//!
//! Given the quantized law of `X̂_{t_k}` on a grid `Γ_k`, the law of the next
//! Euler value `X̃_{t_{k+1}}` is a Gaussian mixture with one component per point
//! of `Γ_k`. The next grid `Γ_{k+1}` is a stationary quadratic quantizer of that
//! mixture, obtained with Lloyd's fixed-point iteration; all cell integrals are
//! closed-form Gaussian expressions, so no sampling is involved. Transition
//! probabilities between consecutive grids follow from the same cell integrals.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Diffusion, TimeGrid};
use crate::normal;

/// Components further than this many standard deviations from a cell carry
/// less than `Φ(−10) ≈ 7.6e-24` mass and are skipped.
const TAIL_CUTOFF: f64 = 10.0;

/// A quantization grid: strictly increasing points and the probability mass of
/// their Voronoi cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidInput(
                "grid needs as many weights as points, and at least one point".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("grid points must be strictly increasing".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidInput("grid weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("grid weights sum to {total}, not 1")));
        }
        Ok(Self { points, weights })
    }

    /// Single point carrying all the mass.
    pub fn point_mass(x: f64) -> Self {
        Self {
            points: vec![x],
            weights: vec![1.0],
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    /// Index of the point nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let k = self.points.partition_point(|&p| p < x);
        if k == 0 {
            0
        } else if k == self.points.len() || x - self.points[k - 1] <= self.points[k] - x {
            k - 1
        } else {
            k
        }
    }
}

/// Row-stochastic matrix `p̂^{ij}` between two consecutive grids.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "transition matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                probs.len()
            )));
        }
        Ok(Self { rows, cols, probs })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Row vector times matrix.
    pub fn push_forward(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += vi * p;
            }
        }
        out
    }
}

/// `(m_k(x), v_k(x)) = (x + Δ b(t_k, x), √Δ σ(t_k, x))`: mean and standard
/// deviation of one Euler step started at `x`.
pub fn conditional_moments<D: Diffusion + ?Sized>(spec: &D, t: f64, x: f64, dt: f64) -> Result<(f64, f64)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("step length must be positive, got {dt}")));
    }
    let mean = x + spec.drift_x(t, x) * dt;
    let stdev = dt.sqrt() * spec.vol_x(t, x);
    if !(stdev > 0.0) || !stdev.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidModel(format!(
            "signal volatility must be positive and finite at (t={t}, x={x}), got conditional stdev {stdev}"
        )));
    }
    Ok((mean, stdev))
}

/// A finite mixture of Gaussians: the law of the Euler step from a quantized
/// marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    stdevs: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stdevs: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != stdevs.len() {
            return Err(Error::InvalidInput("mixture component arrays must share a nonzero length".into()));
        }
        if stdevs.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("mixture stdevs must be positive".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("mixture weights must be nonnegative, means finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("mixture has no mass".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { weights, means, stdevs })
    }

    pub fn single(mean: f64, stdev: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![stdev])
    }

    /// Law of one Euler step taken from each point of `grid` at date `t`.
    pub fn euler_step<D: Diffusion + ?Sized>(spec: &D, t: f64, dt: f64, grid: &Grid) -> Result<Self> {
        let mut means = Vec::with_capacity(grid.len());
        let mut stdevs = Vec::with_capacity(grid.len());
        for &x in grid.points() {
            let (m, s) = conditional_moments(spec, t, x, dt)?;
            means.push(m);
            stdevs.push(s);
        }
        Self::new(grid.weights().to_vec(), means, stdevs)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stdevs(&self) -> &[f64] {
        &self.stdevs
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.stdevs))
            .map(|(w, (m, s))| w * (s * s + (m - mu) * (m - mu)))
            .sum()
    }

    pub fn cdf(&self, u: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.stdevs))
            .map(|(w, (m, s))| w * normal::cdf((u - m) / s))
            .sum()
    }

    pub fn pdf(&self, u: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.stdevs))
            .map(|(w, (m, s))| w * normal::pdf((u - m) / s) / s)
            .sum()
    }

    /// Quantiles at increasing `levels` in `(0, 1)`, by safeguarded Newton
    /// iteration on the mixture cdf.
    pub fn quantiles(&self, levels: &[f64]) -> Vec<f64> {
        let sorted = SortedMixture::new(self);
        let (lo_all, hi_all) = sorted.support();
        let mut out = Vec::with_capacity(levels.len());
        let mut lo = lo_all;
        for &p in levels {
            let (mut a, mut b) = (lo, hi_all);
            let mut x = out.last().copied().unwrap_or_else(|| self.mean()).clamp(a, b);
            for _ in 0..200 {
                let (cdf, pdf) = sorted.cdf_pdf(x);
                let f = cdf - p;
                if f == 0.0 {
                    break;
                }
                if f < 0.0 {
                    a = x;
                } else {
                    b = x;
                }
                let newton = x - f / pdf;
                if pdf > 0.0 && newton >= a && newton <= b {
                    let done = (newton - x).abs() <= 1e-14 * (1.0 + x.abs());
                    x = newton;
                    if done {
                        break;
                    }
                } else {
                    x = 0.5 * (a + b);
                }
                if b - a <= 1e-14 * (1.0 + x.abs()) {
                    break;
                }
            }
            out.push(x);
            lo = x;
        }
        out
    }
}

/// Mixture components ordered by mean, for cdf evaluations that only visit
/// components within the tail cutoff of the evaluation point.
struct SortedMixture {
    means: Vec<f64>,
    stdevs: Vec<f64>,
    weights: Vec<f64>,
    /// `below[i]` = total weight of components `0..i`
    below: Vec<f64>,
    reach: f64,
}

impl SortedMixture {
    fn new(mix: &GaussianMixture) -> Self {
        let mut order: Vec<usize> = (0..mix.len()).collect();
        order.sort_by(|&i, &j| mix.means[i].total_cmp(&mix.means[j]));
        let means: Vec<f64> = order.iter().map(|&i| mix.means[i]).collect();
        let stdevs: Vec<f64> = order.iter().map(|&i| mix.stdevs[i]).collect();
        let weights: Vec<f64> = order.iter().map(|&i| mix.weights[i]).collect();
        let mut below = Vec::with_capacity(weights.len() + 1);
        let mut acc = 0.0;
        below.push(0.0);
        for w in &weights {
            acc += w;
            below.push(acc);
        }
        let reach = TAIL_CUTOFF * stdevs.iter().copied().fold(0.0, f64::max);
        Self {
            means,
            stdevs,
            weights,
            below,
            reach,
        }
    }

    fn support(&self) -> (f64, f64) {
        let n = self.means.len();
        (self.means[0] - 4.0 * self.reach, self.means[n - 1] + 4.0 * self.reach)
    }

    fn cdf_pdf(&self, u: f64) -> (f64, f64) {
        let lo = self.means.partition_point(|&m| m < u - self.reach);
        let hi = self.means.partition_point(|&m| m <= u + self.reach);
        let mut cdf = self.below[lo];
        let mut pdf = 0.0;
        for i in lo..hi {
            let z = (u - self.means[i]) / self.stdevs[i];
            cdf += self.weights[i] * normal::cdf(z);
            pdf += self.weights[i] * normal::pdf(z) / self.stdevs[i];
        }
        (cdf, pdf)
    }
}

/// Per-cell integrals of a mixture over the Voronoi cells of a sorted grid.
#[derive(Debug, Clone)]
struct CellIntegrals {
    /// `∫_{C_j} dμ`
    mass: Vec<f64>,
    /// `∫_{C_j} u dμ(u)`
    first: Vec<f64>,
    /// mixture density at the interior cell boundaries
    boundary_density: Vec<f64>,
    /// `Σ_j ∫_{C_j} (u − c_j)² dμ(u)`
    distortion: f64,
}

/// Midpoints between consecutive sorted points.
fn midpoints(points: &[f64]) -> Vec<f64> {
    points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Standard normal values at one cell boundary.
#[derive(Clone, Copy)]
struct Edge {
    z: f64,
    cdf: f64,
    sf: f64,
    pdf: f64,
}

impl Edge {
    const LOWER: Edge = Edge {
        z: f64::NEG_INFINITY,
        cdf: 0.0,
        sf: 1.0,
        pdf: 0.0,
    };
    const UPPER: Edge = Edge {
        z: f64::INFINITY,
        cdf: 1.0,
        sf: 0.0,
        pdf: 0.0,
    };

    #[inline]
    fn at(z: f64) -> Edge {
        if z <= 0.0 {
            let cdf = normal::cdf(z);
            Edge { z, cdf, sf: 1.0 - cdf, pdf: normal::pdf(z) }
        } else {
            let sf = normal::sf(z);
            Edge { z, cdf: 1.0 - sf, sf, pdf: normal::pdf(z) }
        }
    }

    /// `z φ(z)`, zero at infinity.
    #[inline]
    fn zpdf(&self) -> f64 {
        if self.pdf == 0.0 {
            0.0
        } else {
            self.z * self.pdf
        }
    }
}

/// Mass of the standard normal between two edges, on the accurate tail.
#[inline]
fn edge_mass(a: &Edge, b: &Edge) -> f64 {
    if b.z <= 0.0 {
        b.cdf - a.cdf
    } else if a.z >= 0.0 {
        a.sf - b.sf
    } else {
        1.0 - a.cdf - b.sf
    }
}

/// Range of boundary indices that lie within the tail cutoff of `N(mean, sd²)`.
#[inline]
fn active_range(boundaries: &[f64], mean: f64, sd: f64) -> (usize, usize) {
    let lo = boundaries.partition_point(|&b| b < mean - TAIL_CUTOFF * sd);
    let hi = boundaries.partition_point(|&b| b <= mean + TAIL_CUTOFF * sd);
    (lo, hi)
}

fn cell_integrals(mix: &GaussianMixture, points: &[f64]) -> CellIntegrals {
    let n = points.len();
    let bounds = midpoints(points);
    let mut mass = vec![0.0; n];
    let mut first = vec![0.0; n];
    let mut boundary_density = vec![0.0; bounds.len()];
    let mut distortion = 0.0;
    let mut edges: Vec<Edge> = Vec::with_capacity(n + 1);

    for ((&w, &m), &s) in mix.weights.iter().zip(&mix.means).zip(&mix.stdevs) {
        if w == 0.0 {
            continue;
        }
        let (lo, hi) = active_range(&bounds, m, s);
        // cells lo..=hi see this component; edges[e] is the lower edge of cell lo + e
        edges.clear();
        edges.push(Edge::LOWER);
        for (b, dens) in bounds[lo..hi].iter().zip(&mut boundary_density[lo..hi]) {
            let e = Edge::at((b - m) / s);
            *dens += w * e.pdf / s;
            edges.push(e);
        }
        edges.push(Edge::UPPER);
        for (e, j) in (lo..=hi).enumerate() {
            let (a, b) = (&edges[e], &edges[e + 1]);
            let p = edge_mass(a, b);
            let dphi = a.pdf - b.pdf;
            mass[j] += w * p;
            first[j] += w * (m * p + s * dphi);
            let d = m - points[j];
            distortion += w * (d * d * p + 2.0 * d * s * dphi + s * s * (p + a.zpdf() - b.zpdf()));
        }
    }
    CellIntegrals {
        mass,
        first,
        boundary_density,
        distortion: distortion.max(0.0),
    }
}

/// Quadratic distortion `E[min_j (X − c_j)²]` of a sorted candidate grid under
/// the mixture, evaluated in closed form cell by cell.
pub fn distortion(mix: &GaussianMixture, candidate: &[f64]) -> f64 {
    cell_integrals(mix, candidate).distortion
}

/// How the grid optimizer is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Mixture quantiles at levels `(2j − 1) / 2N`.
    MixtureQuantiles,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydOptions {
    pub max_iterations: usize,
    /// Stop once the relative distortion decrease falls below this.
    pub relative_tolerance: f64,
    /// Cells lighter than this are reseeded.
    pub empty_cell_mass: f64,
    /// Try a Newton step on the distortion gradient before each Lloyd step;
    /// it is kept only when it lowers the distortion. Same fixed point, far
    /// fewer iterations on large grids.
    pub newton: bool,
}

impl Default for LloydOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            relative_tolerance: 1e-10,
            empty_cell_mass: 1e-14,
            newton: true,
        }
    }
}

/// Result of a grid optimization.
#[derive(Debug, Clone)]
pub struct LloydOutcome {
    pub grid: Grid,
    pub distortion: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Distortion at each visited iterate, starting with the initial grid.
    pub history: Vec<f64>,
    /// Number of empty-cell reseeds performed.
    pub reseeds: usize,
}

/// `(2j − 1) / 2N` quantiles of the mixture.
pub fn quantile_init(mix: &GaussianMixture, n: usize) -> Vec<f64> {
    let levels: Vec<f64> = (1..=n).map(|j| (2 * j - 1) as f64 / (2 * n) as f64).collect();
    mix.quantiles(&levels)
}

/// Force a sorted, strictly increasing copy of `points`.
fn strictly_increasing(mut points: Vec<f64>) -> Vec<f64> {
    points.sort_by(f64::total_cmp);
    for j in 1..points.len() {
        if !(points[j] > points[j - 1]) {
            let bump = f64::EPSILON * points[j - 1].abs().max(1.0) * 4.0;
            points[j] = points[j - 1] + bump;
        }
    }
    points
}

/// Lloyd's fixed-point iteration for a stationary `n`-point quadratic
/// quantizer of the mixture. Each iterate moves every point to the mean of
/// its cell, which never increases distortion.
pub fn optimize_grid(
    mix: &GaussianMixture,
    n: usize,
    init: Option<&[f64]>,
    opts: &LloydOptions,
) -> Result<LloydOutcome> {
    if n == 0 {
        return Err(Error::InvalidInput("grid size must be at least 1".into()));
    }
    let mut points = match init {
        Some(p) if p.len() == n => strictly_increasing(p.to_vec()),
        Some(p) => {
            return Err(Error::InvalidInput(format!(
                "initial grid has {} points, expected {n}",
                p.len()
            )))
        }
        None => strictly_increasing(quantile_init(mix, n)),
    };
    let mut reseed_levels: Option<Vec<f64>> = None;
    let mut history = Vec::new();
    let mut converged = false;
    let mut reseeds = 0;
    let mut iterations = 0;
    let mut stats = cell_integrals(mix, &points);
    history.push(stats.distortion);

    while iterations < opts.max_iterations {
        let prev = stats.distortion;
        let reseeded = stats.mass.iter().any(|&p| p < opts.empty_cell_mass);
        if reseeded {
            let levels = reseed_levels.get_or_insert_with(|| quantile_init(mix, n));
            for j in 0..n {
                if stats.mass[j] < opts.empty_cell_mass {
                    points[j] = levels[j];
                }
            }
            points = strictly_increasing(points);
            stats = cell_integrals(mix, &points);
            reseeds += 1;
        } else {
            let step = if opts.newton && n > 1 {
                newton_step(mix, &points, &stats)
            } else {
                None
            };
            match step {
                Some((p, s)) => {
                    points = p;
                    stats = s;
                }
                None => {
                    for ((p, f), m) in points.iter_mut().zip(&stats.first).zip(&stats.mass) {
                        *p = f / m;
                    }
                    points = strictly_increasing(points);
                    stats = cell_integrals(mix, &points);
                }
            }
        }
        iterations += 1;
        history.push(stats.distortion);
        if !reseeded && (prev - stats.distortion).abs() <= opts.relative_tolerance * prev {
            converged = true;
            break;
        }
    }

    let total: f64 = stats.mass.iter().sum();
    let weights = stats.mass.iter().map(|m| m / total).collect();
    Ok(LloydOutcome {
        grid: Grid { points, weights },
        distortion: stats.distortion,
        iterations,
        converged,
        history,
        reseeds,
    })
}

/// Newton step on the distortion gradient with its tridiagonal Hessian,
/// halved a few times until the distortion decreases.
fn newton_step(mix: &GaussianMixture, points: &[f64], stats: &CellIntegrals) -> Option<(Vec<f64>, CellIntegrals)> {
    let n = points.len();
    let grad: Vec<f64> = (0..n).map(|j| 2.0 * (points[j] * stats.mass[j] - stats.first[j])).collect();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for j in 0..n {
        diag[j] = 2.0 * stats.mass[j];
        if j + 1 < n {
            let t = 0.5 * stats.boundary_density[j] * (points[j + 1] - points[j]);
            diag[j] -= t;
            off[j] = -t;
        }
        if j > 0 {
            diag[j] -= 0.5 * stats.boundary_density[j - 1] * (points[j] - points[j - 1]);
        }
    }
    let step = solve_tridiagonal(&off, &diag, &off, &grad.iter().map(|g| -g).collect::<Vec<_>>())?;
    let mut scale = 1.0;
    for _ in 0..4 {
        let cand: Vec<f64> = points.iter().zip(&step).map(|(p, d)| p + scale * d).collect();
        if cand.windows(2).all(|w| w[1] > w[0]) {
            let s = cell_integrals(mix, &cand);
            if s.distortion < stats.distortion {
                return Some((cand, s));
            }
        }
        scale *= 0.5;
    }
    None
}

fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return None;
    }
    if n > 1 {
        c[0] = upper[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        if i + 1 < n {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Fill `row` with the probabilities that `N(mean, sd²)` lands in each cell of
/// the grid whose interior boundaries are `bounds`.
fn fill_row(mean: f64, sd: f64, bounds: &[f64], row: &mut [f64]) {
    row.iter_mut().for_each(|p| *p = 0.0);
    let (lo, hi) = active_range(bounds, mean, sd);
    let mut prev = Edge::LOWER;
    for j in lo..=hi {
        let next = if j < hi { Edge::at((bounds[j] - mean) / sd) } else { Edge::UPPER };
        row[j] = edge_mass(&prev, &next).max(0.0);
        prev = next;
    }
}

/// Transition probabilities from `x_i` (at date `t`) into the Voronoi cells
/// of the sorted `next_points`.
pub fn transition_row<D: Diffusion + ?Sized>(
    spec: &D,
    t: f64,
    x_i: f64,
    next_points: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let (mean, sd) = conditional_moments(spec, t, x_i, dt)?;
    let bounds = midpoints(next_points);
    let mut row = vec![0.0; next_points.len()];
    fill_row(mean, sd, &bounds, &mut row);
    Ok(row)
}

/// Grid-optimization summary for one date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub distortion: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TreeOptions {
    pub lloyd: LloydOptions,
}

/// Quantized marginals of the Euler scheme on every date of a time grid,
/// with the transition matrices between consecutive dates.
#[derive(Debug, Clone)]
pub struct QuantizationTree {
    spec: Arc<dyn Diffusion>,
    time_grid: TimeGrid,
    grids: Vec<Grid>,
    /// `transitions[k - 1]` maps grid `k − 1` to grid `k`.
    transitions: Vec<TransitionMatrix>,
    reports: Vec<StepReport>,
}

impl PartialEq for QuantizationTree {
    fn eq(&self, other: &Self) -> bool {
        self.time_grid == other.time_grid
            && self.grids == other.grids
            && self.transitions == other.transitions
            && self.reports == other.reports
    }
}

/// `N_0 = 1` followed by `n` copies of `size`.
pub fn uniform_sizes(steps: usize, size: usize) -> Vec<usize> {
    let mut sizes = vec![size; steps + 1];
    sizes[0] = 1;
    sizes
}

/// Build the recursive marginal quantization of the Euler scheme of `spec`
/// on `grid`, with `sizes[k]` points at date `k` (`sizes[0]` must be 1).
pub fn build_tree(spec: Arc<dyn Diffusion>, grid: TimeGrid, sizes: &[usize]) -> Result<QuantizationTree> {
    build_tree_with(spec, grid, sizes, &TreeOptions::default())
}

pub fn build_tree_with(
    spec: Arc<dyn Diffusion>,
    grid: TimeGrid,
    sizes: &[usize],
    opts: &TreeOptions,
) -> Result<QuantizationTree> {
    let n = grid.steps();
    if sizes.len() != n + 1 {
        return Err(Error::InvalidInput(format!(
            "need {} grid sizes (one per date), got {}",
            n + 1,
            sizes.len()
        )));
    }
    if sizes[0] != 1 {
        return Err(Error::InvalidInput("the starting value is deterministic: sizes[0] must be 1".into()));
    }
    if let Some(k) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidInput(format!("grid size at date {k} is zero")));
    }

    let mut grids = Vec::with_capacity(n + 1);
    let mut transitions = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n + 1);
    grids.push(Grid::point_mass(spec.x0()));
    reports.push(StepReport {
        distortion: 0.0,
        iterations: 0,
        converged: true,
    });

    for k in 0..n {
        let (t, dt) = (grid.time(k), grid.dt(k));
        let attach = |e: Error| match e {
            Error::InvalidModel(msg) | Error::InvalidInput(msg) => Error::Quantization { step: k + 1, reason: msg },
            other => other,
        };
        let current = &grids[k];
        let mix = GaussianMixture::euler_step(spec.as_ref(), t, dt, current).map_err(attach)?;
        let outcome = optimize_grid(&mix, sizes[k + 1], None, &opts.lloyd).map_err(attach)?;
        let next_points = outcome.grid.points;

        let bounds = midpoints(&next_points);
        let cols = next_points.len();
        let mut probs = vec![0.0; current.len() * cols];
        for (i, row) in probs.chunks_mut(cols).enumerate() {
            fill_row(mix.means[i], mix.stdevs[i], &bounds, row);
        }
        let matrix = TransitionMatrix { rows: current.len(), cols, probs };
        let mut weights = matrix.push_forward(current.weights());
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        grids.push(Grid { points: next_points, weights });
        transitions.push(matrix);
        reports.push(StepReport {
            distortion: outcome.distortion,
            iterations: outcome.iterations,
            converged: outcome.converged,
        });
    }

    Ok(QuantizationTree {
        spec,
        time_grid: grid,
        grids,
        transitions,
        reports,
    })
}

const FORMAT_TAG: &str = "quantcredit-tree";
const FORMAT_VERSION: u32 = 1;

impl QuantizationTree {
    pub fn spec(&self) -> &Arc<dyn Diffusion> {
        &self.spec
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }

    pub fn steps(&self) -> usize {
        self.time_grid.steps()
    }

    pub fn grid(&self, k: usize) -> &Grid {
        &self.grids[k]
    }

    pub fn grids(&self) -> &[Grid] {
        &self.grids
    }

    /// Transition matrix from date `k − 1` to date `k`, for `k ≥ 1`.
    pub fn transition(&self, k: usize) -> &TransitionMatrix {
        &self.transitions[k - 1]
    }

    pub fn reports(&self) -> &[StepReport] {
        &self.reports
    }

    pub fn grid_sizes(&self) -> Vec<usize> {
        self.grids.iter().map(Grid::len).collect()
    }

    /// Same tree with a different observation date; the quantization does
    /// not depend on it.
    pub fn with_obs_index(&self, obs_index: usize) -> Result<Self> {
        Ok(Self {
            time_grid: self.time_grid.with_obs_index(obs_index)?,
            ..self.clone()
        })
    }

    /// Write the tree in the columnar text format (17 significant digits).
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let num = |v: f64| format!("{v:.16e}");
        let join = |vs: &[f64]| vs.iter().map(|&v| num(v)).collect::<Vec<_>>().join(" ");
        writeln!(out, "{FORMAT_TAG} {FORMAT_VERSION}")?;
        writeln!(out, "steps {}", self.steps())?;
        writeln!(out, "obs_index {}", self.time_grid.obs_index())?;
        writeln!(out, "times {}", join(self.time_grid.times()))?;
        for (k, (g, r)) in self.grids.iter().zip(&self.reports).enumerate() {
            writeln!(
                out,
                "grid {k} {} {} {} {}",
                g.len(),
                num(r.distortion),
                r.iterations,
                u8::from(r.converged)
            )?;
            writeln!(out, "points {}", join(&g.points))?;
            writeln!(out, "weights {}", join(&g.weights))?;
            if k > 0 {
                let m = &self.transitions[k - 1];
                writeln!(out, "transition {k} {} {}", m.rows, m.cols)?;
                for i in 0..m.rows {
                    writeln!(out, "{}", join(m.row(i)))?;
                }
            }
        }
        writeln!(out, "end")
    }

    /// Read a tree written by [`write_to`](Self::write_to). The model is not
    /// part of the file and must be supplied.
    pub fn read_from<R: BufRead>(input: R, spec: Arc<dyn Diffusion>) -> Result<Self> {
        let mut lines = input.lines().enumerate().map(|(i, l)| {
            l.map(|s| (i + 1, s))
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))
        })
        .filter(|r| !matches!(r, Ok((_, s)) if s.starts_with('#')));
        let mut next = |what: &str| -> Result<(usize, String)> {
            lines
                .next()
                .unwrap_or_else(|| Err(Error::Parse(format!("unexpected end of file, expected {what}"))))
        };
        let err = |line: usize, msg: String| Error::Parse(format!("line {line}: {msg}"));
        let floats = |line: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| err(line, format!("bad number {t:?}: {e}"))))
                .collect()
        };
        let keyed = |line: usize, s: &str, key: &str| -> Result<String> {
            s.strip_prefix(key)
                .map(|r| r.trim().to_string())
                .ok_or_else(|| err(line, format!("expected {key:?}")))
        };

        let (l, header) = next("header")?;
        if header.trim() != format!("{FORMAT_TAG} {FORMAT_VERSION}") {
            return Err(err(l, format!("unrecognized header {header:?}")));
        }
        let (l, s) = next("steps")?;
        let steps: usize = keyed(l, &s, "steps")?.parse().map_err(|e| err(l, format!("{e}")))?;
        let (l, s) = next("obs_index")?;
        let obs_index: usize = keyed(l, &s, "obs_index")?.parse().map_err(|e| err(l, format!("{e}")))?;
        let (l, s) = next("times")?;
        let times = floats(l, &keyed(l, &s, "times")?)?;
        if times.len() != steps + 1 {
            return Err(err(l, format!("expected {} dates, got {}", steps + 1, times.len())));
        }
        let time_grid = TimeGrid::new(times, obs_index)?;

        let mut grids = Vec::with_capacity(steps + 1);
        let mut transitions = Vec::with_capacity(steps);
        let mut reports = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let (l, s) = next("grid")?;
            let rest = keyed(l, &s, "grid")?;
            let fields: Vec<&str> = rest.split_whitespace().collect();
            if fields.len() != 5 || fields[0].parse::<usize>().ok() != Some(k) {
                return Err(err(l, format!("malformed grid header for date {k}")));
            }
            let size: usize = fields[1].parse().map_err(|e| err(l, format!("{e}")))?;
            let distortion: f64 = fields[2].parse().map_err(|e| err(l, format!("{e}")))?;
            let iterations: usize = fields[3].parse().map_err(|e| err(l, format!("{e}")))?;
            let converged = fields[4] == "1";
            let (l, s) = next("points")?;
            let points = floats(l, &keyed(l, &s, "points")?)?;
            let (l2, s) = next("weights")?;
            let weights = floats(l2, &keyed(l2, &s, "weights")?)?;
            if points.len() != size || weights.len() != size {
                return Err(err(l, format!("date {k}: expected {size} points and weights")));
            }
            grids.push(Grid::new(points, weights).map_err(|e| err(l, e.to_string()))?);
            reports.push(StepReport {
                distortion,
                iterations,
                converged,
            });
            if k > 0 {
                let (l, s) = next("transition")?;
                let fields: Vec<usize> = keyed(l, &s, "transition")?
                    .split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|e| err(l, format!("{e}"))))
                    .collect::<Result<_>>()?;
                let (rows, cols) = match fields.as_slice() {
                    [kk, r, c] if *kk == k => (*r, *c),
                    _ => return Err(err(l, format!("malformed transition header for date {k}"))),
                };
                if rows != grids[k - 1].len() || cols != size {
                    return Err(err(l, format!("transition {k} has shape {rows}x{cols}")));
                }
                let mut probs = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (l, s) = next("transition row")?;
                    let row = floats(l, &s)?;
                    if row.len() != cols {
                        return Err(err(l, format!("expected {cols} transition entries, got {}", row.len())));
                    }
                    probs.extend(row);
                }
                transitions.push(TransitionMatrix { rows, cols, probs });
            }
        }
        let (l, s) = next("end")?;
        if s.trim() != "end" {
            return Err(err(l, "expected \"end\"".into()));
        }
        Ok(Self {
            spec,
            time_grid,
            grids,
            transitions,
            reports,
        })
    }
}
