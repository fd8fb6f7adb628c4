//! Quantized filtering of the signal given one observed path of the proxy,
//! and barrier survival estimates built on the filtered law.
//!
//! The filter carries an unnormalized measure on each grid; it is renormalized
//! after every step and the log of the discarded total is kept, so ratios of
//! raw masses stay exact while nothing underflows.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::kernels::KernelContext;
use crate::model::TimeGrid;
use crate::quantizer::QuantizationTree;

/// Raw step mass below which the filter is declared extinct.
pub const EXTINCTION_FLOOR: f64 = 1e-300;

/// Closed-form `F(t_m, t_n, x)` that may replace the quantized estimate.
pub type AnalyticSurvival<'a> = &'a (dyn Fn(f64, f64, f64) -> f64 + Sync);

/// Observed proxy values `ȳ_0, …, ȳ_m` on the first `m + 1` dates of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ObservationPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "observation path needs matching, nonempty time and value columns ({} vs {})",
                times.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("observation {k} is not finite")));
        }
        Ok(Self { times, values })
    }

    /// Values observed on the dates `0..=m` of `grid`.
    pub fn on_grid(grid: &TimeGrid, values: Vec<f64>) -> Result<Self> {
        let m = grid.obs_index();
        if values.len() != m + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} observations (dates 0..={m}), got {}",
                m + 1,
                values.len()
            )));
        }
        Self::new(grid.times()[..=m].to_vec(), values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Check that the path covers exactly the observation dates of `grid`.
    pub fn check_against(&self, grid: &TimeGrid) -> Result<()> {
        let m = grid.obs_index();
        if self.len() != m + 1 {
            return Err(Error::InvalidInput(format!(
                "observation path has {} values but the grid observes dates 0..={m}",
                self.len()
            )));
        }
        for (k, (&t, &tg)) in self.times.iter().zip(grid.times()).enumerate() {
            if (t - tg).abs() > 1e-9 * tg.abs().max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "observation {k} is dated {t} but grid date {k} is {tg}"
                )));
            }
        }
        Ok(())
    }

    /// Read a `time,value` CSV with a header line.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut header_seen = false;
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                let cols: Vec<String> = line.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
                if cols != ["time", "value"] {
                    return Err(Error::Parse(format!("line {}: expected header \"time,value\"", i + 1)));
                }
                continue;
            }
            let mut cols = line.split(',');
            let mut field = |name: &str| -> Result<f64> {
                let raw = cols
                    .next()
                    .ok_or_else(|| Error::Parse(format!("line {}: missing {name}", i + 1)))?;
                raw.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: bad {name} {raw:?}: {e}", i + 1)))
            };
            times.push(field("time")?);
            values.push(field("value")?);
            if cols.next().is_some() {
                return Err(Error::Parse(format!("line {}: expected two columns", i + 1)));
            }
        }
        Self::new(times, values).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t},{v:.17e}")?;
        }
        Ok(())
    }
}

/// Filtered measure on the grid of date `step`, normalized to total mass one
/// unless extinct. `log_norm` is the log of the discarded raw total.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterVector {
    mass: Vec<f64>,
    log_norm: f64,
    step: usize,
    extinct: bool,
}

impl FilterVector {
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Log of the raw (unnormalized) total mass.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn is_extinct(&self) -> bool {
        self.extinct
    }

    /// Raw mass vector; underflows for long paths, meant for small instances.
    pub fn raw(&self) -> Vec<f64> {
        let scale = self.log_norm.exp();
        self.mass.iter().map(|m| m * scale).collect()
    }
}

/// Barrier-weighted transition kernel `G(x_{k−1}^i, x_k^j) · p̂_k^{ij}`
/// between dates `k − 1` and `k`, row-major.
pub fn barrier_kernel(tree: &QuantizationTree, k: usize) -> Vec<f64> {
    let spec = tree.spec().as_ref();
    let grid = tree.time_grid();
    let ctx = KernelContext::new(spec, grid.time(k - 1), grid.dt(k - 1));
    let a = spec.barrier();
    let (from, to) = (tree.grid(k - 1).points(), tree.grid(k).points());
    let p = tree.transition(k);
    let mut out = Vec::with_capacity(from.len() * to.len());
    for (i, &xi) in from.iter().enumerate() {
        for (&xj, &pij) in to.iter().zip(p.row(i)) {
            out.push(if pij == 0.0 { 0.0 } else { ctx.bridge_survival(xi, xj, a) * pij });
        }
    }
    out
}

/// Forward filter over the observation window of a tree, with the barrier
/// kernels of dates `1..=m` cached so that many paths can share them.
#[derive(Debug, Clone)]
pub struct Filter<'t> {
    tree: &'t QuantizationTree,
    kernels: Vec<Vec<f64>>,
}

/// The with-barrier and barrier-free filters at the observation date.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    pub with_barrier: FilterVector,
    pub without_barrier: FilterVector,
}

impl FilterPair {
    pub fn is_extinct(&self) -> bool {
        self.with_barrier.extinct || self.without_barrier.extinct
    }

    /// Ratio of raw totals, with barrier over without: the filtered
    /// probability that the signal has stayed above the barrier so far.
    pub fn survival_ratio(&self) -> f64 {
        if self.is_extinct() {
            return 0.0;
        }
        (self.with_barrier.log_norm - self.without_barrier.log_norm).exp().min(1.0)
    }
}

impl<'t> Filter<'t> {
    pub fn new(tree: &'t QuantizationTree) -> Self {
        let m = tree.time_grid().obs_index();
        let kernels = (1..=m).map(|k| barrier_kernel(tree, k)).collect();
        Self { tree, kernels }
    }

    pub fn tree(&self) -> &'t QuantizationTree {
        self.tree
    }

    pub fn forward(&self, obs: &ObservationPath, with_barrier: bool) -> Result<FilterVector> {
        let pair = self.run(obs, with_barrier, !with_barrier)?;
        Ok(if with_barrier { pair.0 } else { pair.1 })
    }

    /// Both filters in one pass, sharing the likelihood evaluations.
    pub fn forward_pair(&self, obs: &ObservationPath) -> Result<FilterPair> {
        let (with_barrier, without_barrier) = self.run(obs, true, true)?;
        Ok(FilterPair {
            with_barrier,
            without_barrier,
        })
    }

    fn run(&self, obs: &ObservationPath, barrier: bool, plain: bool) -> Result<(FilterVector, FilterVector)> {
        let tree = self.tree;
        let grid = tree.time_grid();
        obs.check_against(grid)?;
        let y = obs.values();
        let spec = tree.spec().as_ref();
        let start = tree.grid(0).weights().to_vec();
        let mut a = FilterState::new(start.clone(), barrier);
        let mut b = FilterState::new(start, plain);

        for k in 1..=grid.obs_index() {
            let ctx = KernelContext::new(spec, grid.time(k - 1), grid.dt(k - 1));
            let (from, to) = (tree.grid(k - 1).points(), tree.grid(k).points());
            let p = tree.transition(k);
            let kernel = &self.kernels[k - 1];
            let cols = to.len();
            let mut next_a = vec![0.0; cols];
            let mut next_b = vec![0.0; cols];
            let mut lik = vec![0.0; cols];
            for (i, &xi) in from.iter().enumerate() {
                let wa = if a.live() { a.mass[i] } else { 0.0 };
                let wb = if b.live() { b.mass[i] } else { 0.0 };
                if wa == 0.0 && wb == 0.0 {
                    continue;
                }
                let coef = ctx.coefficients(xi, y[k - 1]);
                for (l, &xj) in lik.iter_mut().zip(to) {
                    *l = coef.likelihood(xj, y[k]);
                }
                if !lik.iter().all(|l| l.is_finite()) {
                    return Err(Error::NumericalOverflow { step: k, what: "likelihood" });
                }
                if wa != 0.0 {
                    let row = &kernel[i * cols..(i + 1) * cols];
                    for ((n, &l), &h) in next_a.iter_mut().zip(&lik).zip(row) {
                        *n += wa * l * h;
                    }
                }
                if wb != 0.0 {
                    for ((n, &l), &h) in next_b.iter_mut().zip(&lik).zip(p.row(i)) {
                        *n += wb * l * h;
                    }
                }
            }
            a.advance(next_a, k);
            b.advance(next_b, k);
        }
        Ok((a.finish(), b.finish()))
    }
}

struct FilterState {
    mass: Vec<f64>,
    log_norm: f64,
    step: usize,
    extinct: bool,
    active: bool,
}

impl FilterState {
    fn new(mass: Vec<f64>, active: bool) -> Self {
        Self {
            mass,
            log_norm: 0.0,
            step: 0,
            extinct: false,
            active,
        }
    }

    fn live(&self) -> bool {
        self.active && !self.extinct
    }

    fn advance(&mut self, next: Vec<f64>, k: usize) {
        if !self.live() {
            return;
        }
        self.step = k;
        let total: f64 = next.iter().sum();
        if !(total >= EXTINCTION_FLOOR) || !total.is_finite() {
            self.extinct = true;
            self.mass = vec![0.0; next.len()];
            self.log_norm = f64::NEG_INFINITY;
            return;
        }
        self.log_norm += total.ln();
        self.mass = next.into_iter().map(|v| v / total).collect();
    }

    fn finish(self) -> FilterVector {
        FilterVector {
            mass: self.mass,
            log_norm: self.log_norm,
            step: self.step,
            extinct: self.extinct,
        }
    }
}

/// Run the filter to the observation date of the tree.
pub fn filter_forward(tree: &QuantizationTree, obs: &ObservationPath, with_barrier: bool) -> Result<FilterVector> {
    Filter::new(tree).forward(obs, with_barrier)
}

/// Estimates of `F̄(t_m, t_n, x)` on the grid of date `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTable {
    pub m: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

/// Probability that the quantized chain started at each point of grid `m`
/// stays above the barrier (bridge-corrected) until date `n`, by one
/// backward sweep through the barrier kernels.
pub fn survival_table(tree: &QuantizationTree, m: usize, n: usize) -> Result<SurvivalTable> {
    if m > n || n > tree.steps() {
        return Err(Error::InvalidInput(format!(
            "need m <= n <= {} for a survival table, got m={m}, n={n}",
            tree.steps()
        )));
    }
    let mut v = vec![1.0; tree.grid(n).len()];
    for k in (m + 1..=n).rev() {
        let kernel = barrier_kernel(tree, k);
        let cols = v.len();
        v = kernel
            .chunks(cols)
            .map(|row| row.iter().zip(&v).map(|(h, f)| h * f).sum::<f64>().clamp(0.0, 1.0))
            .collect();
    }
    Ok(SurvivalTable { m, n, values: v })
}

/// `F̂(t_m, t_n, x_m^i)` for every point of grid `m` and every date
/// `n = m..=last`, indexed `[i][n − m]`. One forward pass of the product of
/// barrier kernels.
pub fn survival_surface(tree: &QuantizationTree, m: usize, last: usize) -> Result<Vec<Vec<f64>>> {
    if m > last || last > tree.steps() {
        return Err(Error::InvalidInput(format!(
            "need m <= last <= {} for a survival surface, got m={m}, last={last}",
            tree.steps()
        )));
    }
    let rows = tree.grid(m).len();
    let mut out: Vec<Vec<f64>> = (0..rows).map(|_| vec![1.0]).collect();
    // product[i] = row i of K_{m+1} ⋯ K_n
    let mut product: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            let mut e = vec![0.0; rows];
            e[i] = 1.0;
            e
        })
        .collect();
    for k in m + 1..=last {
        let kernel = barrier_kernel(tree, k);
        let cols = tree.grid(k).len();
        for (row, curve) in product.iter_mut().zip(out.iter_mut()) {
            let mut next = vec![0.0; cols];
            for (krow, &w) in kernel.chunks(cols).zip(row.iter()) {
                if w != 0.0 {
                    for (o, &h) in next.iter_mut().zip(krow) {
                        *o += w * h;
                    }
                }
            }
            let total: f64 = next.iter().sum();
            let prev = *curve.last().unwrap_or(&1.0);
            curve.push(total.clamp(0.0, prev));
            *row = next;
        }
    }
    Ok(out)
}

/// Conditional survival to date `n` given the observations up to date `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalSurvival {
    /// Given the observations and survival so far.
    pub p_full: f64,
    /// Given the observations only.
    pub p_y_only: f64,
    /// Filtered probability of survival up to date `m`.
    pub azema: f64,
    pub extinct: bool,
}

/// Conditional survival at several horizons sharing one filter pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub horizons: Vec<usize>,
    pub p_full: Vec<f64>,
    pub p_y_only: Vec<f64>,
    pub azema: f64,
    pub extinct: bool,
}

impl SurvivalCurve {
    pub fn at(&self, idx: usize) -> ConditionalSurvival {
        ConditionalSurvival {
            p_full: self.p_full[idx],
            p_y_only: self.p_y_only[idx],
            azema: self.azema,
            extinct: self.extinct,
        }
    }
}

/// Survival curve from an already computed filter pair.
pub fn survival_curve_from(
    tree: &QuantizationTree,
    pair: &FilterPair,
    horizons: &[usize],
    analytic: Option<AnalyticSurvival<'_>>,
) -> Result<SurvivalCurve> {
    let grid = tree.time_grid();
    let m = grid.obs_index();
    if let Some(&bad) = horizons.iter().find(|&&n| n < m || n > tree.steps()) {
        return Err(Error::InvalidInput(format!(
            "horizon index {bad} outside {m}..={}",
            tree.steps()
        )));
    }
    if pair.is_extinct() {
        return Ok(SurvivalCurve {
            horizons: horizons.to_vec(),
            p_full: vec![0.0; horizons.len()],
            p_y_only: vec![0.0; horizons.len()],
            azema: 0.0,
            extinct: true,
        });
    }
    let azema = pair.survival_ratio();
    let pi = pair.with_barrier.mass();
    let mut p_full = vec![0.0; horizons.len()];

    match analytic {
        Some(f) => {
            let (tm, xs) = (grid.time(m), tree.grid(m).points());
            for (out, &n) in p_full.iter_mut().zip(horizons) {
                let tn = grid.time(n);
                *out = if n == m {
                    pi.iter().sum()
                } else {
                    pi.iter().zip(xs).map(|(w, &x)| w * f(tm, tn, x).clamp(0.0, 1.0)).sum()
                };
            }
        }
        None => {
            let mut order: Vec<usize> = (0..horizons.len()).collect();
            order.sort_by_key(|&i| horizons[i]);
            let mut row = pi.to_vec();
            let mut at = m;
            for idx in order {
                let n = horizons[idx];
                while at < n {
                    at += 1;
                    let kernel = barrier_kernel(tree, at);
                    let cols = tree.grid(at).len();
                    let mut next = vec![0.0; cols];
                    for (r, &w) in kernel.chunks(cols).zip(&row) {
                        if w != 0.0 {
                            for (o, &h) in next.iter_mut().zip(r) {
                                *o += w * h;
                            }
                        }
                    }
                    row = next;
                }
                p_full[idx] = row.iter().sum();
            }
        }
    }
    for p in &mut p_full {
        *p = p.clamp(0.0, 1.0);
    }
    let p_y_only = p_full.iter().map(|p| (azema * p).clamp(0.0, 1.0)).collect();
    Ok(SurvivalCurve {
        horizons: horizons.to_vec(),
        p_full,
        p_y_only,
        azema,
        extinct: false,
    })
}

/// Conditional survival probabilities at each date index in `horizons`
/// (all between the observation date and the last date of the tree).
pub fn survival_curve(
    tree: &QuantizationTree,
    obs: &ObservationPath,
    horizons: &[usize],
    analytic: Option<AnalyticSurvival<'_>>,
) -> Result<SurvivalCurve> {
    let pair = Filter::new(tree).forward_pair(obs)?;
    survival_curve_from(tree, &pair, horizons, analytic)
}

/// Probability of survival to date `n` given the observations up to the
/// observation date, with and without knowledge of survival so far.
pub fn conditional_survival(
    tree: &QuantizationTree,
    obs: &ObservationPath,
    n: usize,
    analytic: Option<AnalyticSurvival<'_>>,
) -> Result<ConditionalSurvival> {
    Ok(survival_curve(tree, obs, &[n], analytic)?.at(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_observation, DiffusionSpec, GbmSpec};
    use crate::quantizer::{build_tree, uniform_sizes};
    use proptest::prelude::*;

    fn small_tree(n: usize) -> QuantizationTree {
        let grid = TimeGrid::observed_then_extended(0.2, 10, 0.4).unwrap();
        build_tree(GbmSpec::reference().into_arc(), grid.clone(), &uniform_sizes(grid.steps(), n)).unwrap()
    }

    fn obs_for(tree: &QuantizationTree, seed: u64) -> ObservationPath {
        let y = simulate_observation(tree.spec().as_ref(), tree.time_grid(), seed, 0).unwrap();
        ObservationPath::on_grid(tree.time_grid(), y).unwrap()
    }

    #[test]
    fn no_observations_leaves_initial_weights() {
        let tree = small_tree(5).with_obs_index(0).unwrap();
        let obs = ObservationPath::on_grid(tree.time_grid(), vec![86.3]).unwrap();
        let f = filter_forward(&tree, &obs, true).unwrap();
        assert_eq!(f.mass(), tree.grid(0).weights());
        assert_eq!(f.step(), 0);
        assert_eq!(f.log_norm(), 0.0);
    }

    #[test]
    fn flat_likelihood_reproduces_marginals() {
        // Observation noise so large that g is constant to double precision.
        let spec = DiffusionSpec::new(
            |_, x| 0.03 * x,
            |_, x| 0.09 * x,
            |_, _, _| 0.0,
            |_, _| 1e-30,
            |_, _| 1e30,
            86.3,
            0.0,
            76.0,
        )
        .unwrap();
        let grid = TimeGrid::uniform(0.2, 6).unwrap();
        let tree = build_tree(std::sync::Arc::new(spec), grid.clone(), &uniform_sizes(6, 7)).unwrap();
        let obs = ObservationPath::on_grid(&grid, vec![0.0; 7]).unwrap();
        let f = filter_forward(&tree, &obs, false).unwrap();
        for (a, b) in f.mass().iter().zip(tree.grid(6).weights()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn survival_table_edges() {
        let tree = small_tree(6);
        let t = survival_table(&tree, 10, 10).unwrap();
        assert!(t.values.iter().all(|&v| v == 1.0));
        let t = survival_table(&tree, 3, 9).unwrap();
        assert_eq!(t.values.len(), 6);
        assert!(t.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // increasing in the starting point
        assert!(t.values.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        assert!(survival_table(&tree, 9, 3).is_err());
        assert!(survival_table(&tree, 0, 99).is_err());
    }

    #[test]
    fn remote_barrier_gives_certain_survival() {
        let spec = GbmSpec::new(0.03, 0.09, 0.5, 86.3, 86.3, 1e-6).unwrap();
        let grid = TimeGrid::uniform(0.2, 4).unwrap();
        let tree = build_tree(spec.into_arc(), grid, &uniform_sizes(4, 5)).unwrap();
        let t = survival_table(&tree, 2, 3).unwrap();
        for v in t.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn horizon_at_observation_date_is_one() {
        let tree = small_tree(8);
        let obs = obs_for(&tree, 3);
        let c = conditional_survival(&tree, &obs, 10, None).unwrap();
        assert!(!c.extinct);
        assert!((c.p_full - 1.0).abs() < 1e-14);
        let c = conditional_survival(&tree, &obs, 10, Some(&|_, _, _| 0.5)).unwrap();
        assert!((c.p_full - 1.0).abs() < 1e-14);
    }

    #[test]
    fn curve_matches_pointwise_calls() {
        let tree = small_tree(8);
        let obs = obs_for(&tree, 5);
        let hs = [20, 10, 15, 12];
        let curve = survival_curve(&tree, &obs, &hs, None).unwrap();
        for (i, &n) in hs.iter().enumerate() {
            let c = conditional_survival(&tree, &obs, n, None).unwrap();
            assert_eq!(c.p_full, curve.p_full[i]);
            assert_eq!(c.p_y_only, curve.p_y_only[i]);
        }
        let mut sorted = hs.to_vec();
        sorted.sort();
        let c2 = survival_curve(&tree, &obs, &sorted, None).unwrap();
        assert!(c2.p_full.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    }

    #[test]
    fn backward_sweep_matches_forward_curve() {
        let tree = small_tree(6);
        let obs = obs_for(&tree, 9);
        let pair = Filter::new(&tree).forward_pair(&obs).unwrap();
        let table = survival_table(&tree, 10, 17).unwrap();
        let direct: f64 = pair.with_barrier.mass().iter().zip(&table.values).map(|(a, b)| a * b).sum();
        let curve = survival_curve_from(&tree, &pair, &[17], None).unwrap();
        assert!((direct - curve.p_full[0]).abs() < 1e-14);
    }

    #[test]
    fn surface_matches_tables() {
        let tree = small_tree(5);
        let surf = survival_surface(&tree, 4, 14).unwrap();
        for n in [4, 9, 14] {
            let table = survival_table(&tree, 4, n).unwrap();
            for (i, v) in table.values.iter().enumerate() {
                assert!((surf[i][n - 4] - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn extinct_path_reports_zero() {
        let tree = small_tree(6);
        let mut y = vec![86.3; 11];
        // An observed proxy far below the barrier with tiny idiosyncratic
        // noise is incompatible with survival.
        for (k, v) in y.iter_mut().enumerate() {
            *v = 86.3 - 30.0 * k as f64;
        }
        let spec = GbmSpec::new(0.03, 0.09, 1e-4, 86.3, 86.3, 76.0).unwrap();
        let tree2 = build_tree(spec.into_arc(), tree.time_grid().clone(), &tree.grid_sizes()).unwrap();
        let obs = ObservationPath::on_grid(tree2.time_grid(), y).unwrap();
        let c = conditional_survival(&tree2, &obs, 15, None).unwrap();
        assert!(c.extinct);
        assert_eq!((c.p_full, c.p_y_only), (0.0, 0.0));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let tree = small_tree(3);
        let obs = obs_for(&tree, 1);
        let mut buf = Vec::new();
        obs.write_csv(&mut buf).unwrap();
        let back = ObservationPath::read_csv(&buf[..]).unwrap();
        assert_eq!(back.values(), obs.values());
        back.check_against(tree.time_grid()).unwrap();
        assert!(ObservationPath::read_csv("t,v\n0,1\n".as_bytes()).is_err());
        match ObservationPath::read_csv("time,value\n0,1\n0.02,x\n".as_bytes()) {
            Err(Error::Parse(msg)) => assert!(msg.contains("line 3")),
            other => panic!("{other:?}"),
        }
        let short = ObservationPath::new(vec![0.0], vec![86.3]).unwrap();
        assert!(short.check_against(tree.time_grid()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn filtration_inequality_and_bounds(seed in 0u64..10_000, delta in 0.05f64..2.0) {
            let spec = GbmSpec::reference().with_delta(delta);
            let grid = TimeGrid::observed_then_extended(0.2, 10, 0.4).unwrap();
            let tree = build_tree(spec.into_arc(), grid.clone(), &uniform_sizes(grid.steps(), 6)).unwrap();
            let obs = obs_for(&tree, seed);
            let pair = Filter::new(&tree).forward_pair(&obs).unwrap();
            prop_assert!((pair.with_barrier.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(pair.with_barrier.log_norm() <= pair.without_barrier.log_norm() + 1e-12);
            let curve = survival_curve_from(&tree, &pair, &[12, 16, 20], None).unwrap();
            for i in 0..3 {
                prop_assert!(curve.p_y_only[i] <= curve.p_full[i] + 1e-12);
                prop_assert!((0.0..=1.0).contains(&curve.p_full[i]));
                prop_assert!((0.0..=1.0).contains(&curve.p_y_only[i]));
            }
        }

        #[test]
        fn barrier_filter_dominated_entrywise(seed in 0u64..10_000) {
            let tree = small_tree(5);
            let obs = obs_for(&tree, seed);
            let pair = Filter::new(&tree).forward_pair(&obs).unwrap();
            let a = pair.with_barrier.raw();
            let b = pair.without_barrier.raw();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*x <= y * (1.0 + 1e-12));
            }
        }
    }
}
