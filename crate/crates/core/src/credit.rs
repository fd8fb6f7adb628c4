//! Forward-start CDS, par spreads and payer CDS options.
//!
//! Survival curves are known on a set of dates and interpolated linearly, so
//! their derivative is piecewise constant; the legs integrate it against the
//! discount factor and the accrual weight with composite Simpson rules.
//!
//! Option prices use the filtered survival estimates: after one observed
//! path up to the option expiry, the forward CDS value is linear in the
//! survival curve, hence a weighted sum of per-grid-point values computed
//! once per tree.

use rayon::prelude::*;

use crate::analytic::{implied_vol, BlackQuote};
use crate::error::{Error, Result};
use crate::filter::{survival_surface, AnalyticSurvival, Filter, ObservationPath};
use crate::model::{simulate_observation, TimeGrid};
use crate::quantizer::QuantizationTree;

/// Default Simpson subintervals per integration piece.
pub const QUAD_STEPS: usize = 16;

const DATE_TOL: f64 = 1e-9;

/// A CDS with unit notional starting at `ta` and paying `spread` on the
/// payment dates, the last of which is `tb`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdsContract {
    pub ta: f64,
    pub tb: f64,
    pub payment_dates: Vec<f64>,
    pub accruals: Vec<f64>,
    pub spread: f64,
    pub lgd: f64,
    /// Constant short rate.
    pub rate: f64,
}

impl CdsContract {
    pub fn new(
        ta: f64,
        payment_dates: Vec<f64>,
        accruals: Vec<f64>,
        spread: f64,
        lgd: f64,
        rate: f64,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(ta >= 0.0) || !ta.is_finite() {
            return bad(format!("start date must be a nonnegative time, got {ta}"));
        }
        if payment_dates.is_empty() || payment_dates.len() != accruals.len() {
            return bad("need at least one payment date and one accrual per date".into());
        }
        let mut prev = ta;
        for &t in &payment_dates {
            if !(t > prev) || !t.is_finite() {
                return bad(format!("payment dates must increase strictly after the start date (got {t} after {prev})"));
            }
            prev = t;
        }
        if accruals.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return bad("accrual fractions must be positive".into());
        }
        if !(spread >= 0.0) || !spread.is_finite() {
            return bad(format!("spread must be nonnegative, got {spread}"));
        }
        if !(lgd > 0.0 && lgd <= 1.0) {
            return bad(format!("loss given default must lie in (0, 1], got {lgd}"));
        }
        if !rate.is_finite() {
            return bad(format!("rate must be finite, got {rate}"));
        }
        let tb = *payment_dates.last().unwrap_or(&ta);
        Ok(Self {
            ta,
            tb,
            payment_dates,
            accruals,
            spread,
            lgd,
            rate,
        })
    }

    /// Payments every `alpha` years from `ta + alpha` to `tb` (a short last
    /// period if `tb − ta` is not a multiple), accruals equal to the date gaps.
    pub fn standard(ta: f64, tb: f64, spread: f64, lgd: f64, rate: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(tb > ta) {
            return Err(Error::InvalidInput(format!(
                "need ta < tb and a positive payment period, got ta={ta}, tb={tb}, alpha={alpha}"
            )));
        }
        let count = ((tb - ta) / alpha - DATE_TOL).ceil().max(1.0) as usize;
        let mut dates: Vec<f64> = (1..=count).map(|i| (ta + i as f64 * alpha).min(tb)).collect();
        if let Some(last) = dates.last_mut() {
            *last = tb;
        }
        let mut prev = ta;
        let accruals = dates
            .iter()
            .map(|&t| {
                let a = t - prev;
                prev = t;
                a
            })
            .collect();
        Self::new(ta, dates, accruals, spread, lgd, rate)
    }

    pub fn with_spread(&self, spread: f64) -> Self {
        Self { spread, ..self.clone() }
    }

    /// `D_s(u) = exp(−r (u − s))`.
    pub fn discount(&self, s: f64, u: f64) -> f64 {
        (-self.rate * (u - s)).exp()
    }

    fn period_start(&self, i: usize) -> f64 {
        if i == 0 {
            self.ta
        } else {
            self.payment_dates[i - 1]
        }
    }
}

/// Survival curve `P_s(·)` seen at date `s`, known on increasing dates and
/// linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct CreditCurve {
    s: f64,
    times: Vec<f64>,
    probs: Vec<f64>,
    azema: f64,
}

impl CreditCurve {
    pub fn new(s: f64, times: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != probs.len() {
            return Err(Error::InvalidCurve("need at least two dates with one probability each".into()));
        }
        if (times[0] - s).abs() > DATE_TOL {
            return Err(Error::InvalidCurve(format!("curve seen at {s} must start at {s}, starts at {}", times[0])));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidCurve("dates must be strictly increasing".into()));
        }
        if (probs[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidCurve(format!("survival at the evaluation date must be 1, got {}", probs[0])));
        }
        if let Some(k) = probs.iter().position(|p| !(-1e-12..=1.0 + 1e-12).contains(p)) {
            return Err(Error::InvalidCurve(format!("probability {} at date {} is outside [0, 1]", probs[k], times[k])));
        }
        if let Some(k) = probs.windows(2).position(|w| w[1] > w[0] + 1e-12) {
            return Err(Error::InvalidCurve(format!(
                "survival increases between {} and {} ({} -> {})",
                times[k],
                times[k + 1],
                probs[k],
                probs[k + 1]
            )));
        }
        let probs = probs.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
        Ok(Self {
            s,
            times,
            probs,
            azema: 1.0,
        })
    }

    /// Sample `f` on `times` (the first date is the evaluation date).
    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let s = *times
            .first()
            .ok_or_else(|| Error::InvalidCurve("no dates".into()))?;
        let probs = times.iter().map(|&t| f(t)).collect();
        Self::new(s, times, probs)
    }

    /// Attach the filtered survival level at the evaluation date.
    pub fn with_azema(mut self, azema: f64) -> Self {
        self.azema = azema;
        self
    }

    pub fn eval_time(&self) -> f64 {
        self.s
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn azema(&self) -> f64 {
        self.azema
    }

    pub fn last_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Linear interpolation; flat beyond the last date.
    pub fn at(&self, u: f64) -> f64 {
        let k = self.times.partition_point(|&t| t < u);
        if k == 0 {
            return self.probs[0];
        }
        if k == self.times.len() {
            return self.probs[k - 1];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (u - t0) / (t1 - t0);
        self.probs[k - 1] + w * (self.probs[k] - self.probs[k - 1])
    }
}

/// Protection leg and risky duration of a contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Legs {
    /// `−LGD ∫_{T_a}^{T_b} D_s(u) ∂_u P_s(u) du`
    pub protection: f64,
    /// `C_s(a, b)`: premium leg per unit spread, accrual on default included.
    pub duration: f64,
}

impl Legs {
    pub fn value(&self, spread: f64) -> f64 {
        self.protection - spread * self.duration
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, steps: usize) -> f64 {
    let n = steps.max(2) + steps % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for j in 1..n {
        acc += f(a + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Both legs of `contract` on `curve`, with `quad_steps` Simpson
/// subintervals on every piece where the curve is linear.
pub fn legs(curve: &CreditCurve, contract: &CdsContract, quad_steps: usize) -> Result<Legs> {
    let s = curve.eval_time();
    if contract.ta < s - DATE_TOL {
        return Err(Error::InvalidCurve(format!(
            "contract starts at {} before the curve date {s}",
            contract.ta
        )));
    }
    if curve.last_time() < contract.tb - DATE_TOL {
        return Err(Error::InvalidCurve(format!(
            "curve ends at {} before the contract maturity {}",
            curve.last_time(),
            contract.tb
        )));
    }
    let mut premium = 0.0;
    let mut accrual = 0.0;
    let mut protection = 0.0;
    for (i, (&ti, &alpha)) in contract.payment_dates.iter().zip(&contract.accruals).enumerate() {
        let start = contract.period_start(i);
        premium += alpha * contract.discount(s, ti) * curve.at(ti);
        let mut cuts: Vec<f64> = vec![start];
        cuts.extend(curve.times().iter().copied().filter(|&t| t > start + DATE_TOL && t < ti - DATE_TOL));
        cuts.push(ti);
        for w in cuts.windows(2) {
            let (u0, u1) = (w[0], w[1]);
            let slope = (curve.at(u1) - curve.at(u0)) / (u1 - u0);
            if slope == 0.0 {
                continue;
            }
            let d = |u: f64| contract.discount(s, u);
            protection -= contract.lgd * slope * simpson(d, u0, u1, quad_steps);
            let weight = |u: f64| (u - start) / (ti - start) * alpha * d(u);
            accrual -= slope * simpson(weight, u0, u1, quad_steps);
        }
    }
    Ok(Legs {
        protection,
        duration: premium + accrual,
    })
}

pub fn risky_duration(curve: &CreditCurve, contract: &CdsContract, quad_steps: usize) -> Result<f64> {
    legs(curve, contract, quad_steps).map(|l| l.duration)
}

/// Value to the protection buyer, `protection − k · C_s(a, b)`.
pub fn cds_price(curve: &CreditCurve, contract: &CdsContract) -> Result<f64> {
    cds_price_with(curve, contract, QUAD_STEPS)
}

pub fn cds_price_with(curve: &CreditCurve, contract: &CdsContract, quad_steps: usize) -> Result<f64> {
    legs(curve, contract, quad_steps).map(|l| l.value(contract.spread))
}

/// Spread making the contract worth zero. The `spread` field is ignored.
pub fn par_spread(curve: &CreditCurve, contract: &CdsContract) -> Result<f64> {
    let l = legs(curve, contract, QUAD_STEPS)?;
    if !(l.duration > 0.0) {
        return Err(Error::DegenerateContract(format!(
            "risky duration is {} so no spread prices the contract at par",
            l.duration
        )));
    }
    Ok((l.protection / l.duration).max(0.0))
}

/// Time grid for option pricing: `obs_steps` equal steps up to the expiry
/// `ta`, the same step length up to `tb`, and the payment dates merged in.
pub fn pricing_grid(contract: &CdsContract, obs_steps: usize) -> Result<TimeGrid> {
    TimeGrid::observed_then_extended(contract.ta, obs_steps, contract.tb)?.with_extra_dates(&contract.payment_dates)
}

/// Survival curve at time 0 implied by the tree, up to date index `last`.
pub fn time_zero_curve(tree: &QuantizationTree, last: usize) -> Result<CreditCurve> {
    let surface = survival_surface(tree, 0, last)?;
    let times = tree.time_grid().times()[..=last].to_vec();
    CreditCurve::new(0.0, times, surface[0].clone())
}

/// Monte Carlo estimate of a payer option price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoEstimate {
    pub strike: f64,
    pub price: f64,
    pub std_error: f64,
    pub paths: usize,
    pub extinct_paths: usize,
}

/// Payer CDS option pricer on one quantization tree: the filter kernels and
/// the per-grid-point legs at the expiry are computed once and shared by all
/// observation paths and strikes.
#[derive(Debug)]
pub struct PsoEngine<'t> {
    tree: &'t QuantizationTree,
    filter: Filter<'t>,
    contract: CdsContract,
    legs: Vec<Legs>,
}

impl<'t> PsoEngine<'t> {
    /// Engine whose forward survival curves are the quantized estimates
    /// `F̂(T_a, ·, x_i)` on the tree dates up to the maturity.
    pub fn new(tree: &'t QuantizationTree, contract: &CdsContract) -> Result<Self> {
        Self::with_survival(tree, contract, None)
    }

    /// As [`new`](Self::new), but with `analytic(T_a, u, x)` replacing the
    /// quantized curves when supplied.
    pub fn with_survival(
        tree: &'t QuantizationTree,
        contract: &CdsContract,
        analytic: Option<AnalyticSurvival<'_>>,
    ) -> Result<Self> {
        let grid = tree.time_grid();
        if (grid.obs_time() - contract.ta).abs() > DATE_TOL {
            return Err(Error::InvalidInput(format!(
                "the tree observes up to {} but the option expires at {}",
                grid.obs_time(),
                contract.ta
            )));
        }
        let last = grid.index_of(contract.tb, DATE_TOL).ok_or_else(|| {
            Error::InvalidInput(format!("maturity {} is not a date of the tree", contract.tb))
        })?;
        let m = grid.obs_index();
        let times = grid.times()[m..=last].to_vec();
        let surface = match analytic {
            None => survival_surface(tree, m, last)?,
            Some(f) => tree
                .grid(m)
                .points()
                .iter()
                .map(|&x| {
                    let mut prev = 1.0;
                    times
                        .iter()
                        .map(|&u| {
                            let v = if u == contract.ta { 1.0 } else { f(contract.ta, u, x).clamp(0.0, prev) };
                            prev = v;
                            v
                        })
                        .collect()
                })
                .collect(),
        };
        let legs = surface
            .into_iter()
            .map(|probs| {
                let curve = CreditCurve::new(contract.ta, times.clone(), probs)?;
                legs(&curve, contract, QUAD_STEPS)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tree,
            filter: Filter::new(tree),
            contract: contract.clone(),
            legs,
        })
    }

    /// Legs of the forward CDS seen from each point of the expiry grid.
    pub fn grid_legs(&self) -> &[Legs] {
        &self.legs
    }

    /// Discounted payoffs, one per strike, for one observation path.
    pub fn payoffs(&self, obs: &ObservationPath, strikes: &[f64]) -> Result<(Vec<f64>, bool)> {
        let pair = self.filter.forward_pair(obs)?;
        if pair.is_extinct() {
            return Ok((vec![0.0; strikes.len()], true));
        }
        let azema = pair.survival_ratio();
        let (mut prot, mut dur) = (0.0, 0.0);
        for (w, l) in pair.with_barrier.mass().iter().zip(&self.legs) {
            prot += w * l.protection;
            dur += w * l.duration;
        }
        let df = self.contract.discount(0.0, self.contract.ta);
        Ok((
            strikes.iter().map(|k| df * azema * (prot - k * dur).max(0.0)).collect(),
            false,
        ))
    }

    /// Prices for every strike from `paths` simulated observation paths
    /// (streams `0..paths` of `seed`, shared across strikes).
    pub fn price(&self, strikes: &[f64], paths: usize, seed: u64) -> Result<Vec<PsoEstimate>> {
        if paths < 2 {
            return Err(Error::InvalidInput("need at least two paths for an error estimate".into()));
        }
        let spec = self.tree.spec().as_ref();
        let grid = self.tree.time_grid();
        let results: Vec<(Vec<f64>, bool)> = (0..paths as u64)
            .into_par_iter()
            .map(|p| {
                let y = simulate_observation(spec, grid, seed, p)?;
                self.payoffs(&ObservationPath::on_grid(grid, y)?, strikes)
            })
            .collect::<Result<_>>()?;
        let extinct_paths = results.iter().filter(|r| r.1).count();
        let n = paths as f64;
        Ok(strikes
            .iter()
            .enumerate()
            .map(|(j, &strike)| {
                let (mut s, mut s2) = (0.0, 0.0);
                for (v, _) in &results {
                    s += v[j];
                    s2 += v[j] * v[j];
                }
                let mean = s / n;
                let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
                PsoEstimate {
                    strike,
                    price: mean,
                    std_error: (var / n).sqrt(),
                    paths,
                    extinct_paths,
                }
            })
            .collect())
    }
}

/// Payer option price at the contract spread.
pub fn pso_price(tree: &QuantizationTree, contract: &CdsContract, paths: usize, seed: u64) -> Result<PsoEstimate> {
    let engine = PsoEngine::new(tree, contract)?;
    Ok(engine.price(&[contract.spread], paths, seed)?[0])
}

/// Black quote (forward spread and annuity) of the option on `contract`
/// implied by the time-0 curve.
pub fn black_quote(contract: &CdsContract, curve0: &CreditCurve) -> Result<BlackQuote> {
    let l = legs(curve0, contract, QUAD_STEPS)?;
    if !(l.duration > 0.0) {
        return Err(Error::DegenerateContract("zero forward annuity".into()));
    }
    Ok(BlackQuote {
        forward: l.protection / l.duration,
        strike: contract.spread,
        expiry: contract.ta,
        annuity: l.duration,
        vol: 0.0,
    })
}

/// Black volatility of a payer option price struck at the contract spread.
pub fn pso_implied_vol(price: f64, contract: &CdsContract, curve0: &CreditCurve) -> Result<f64> {
    implied_vol(price, &black_quote(contract, curve0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GbmSpec;
    use crate::quantizer::{build_tree, uniform_sizes};

    fn flat(lambda: f64, end: f64) -> CreditCurve {
        let times: Vec<f64> = (0..=400).map(|i| end * i as f64 / 400.0).collect();
        CreditCurve::from_fn(times, |t| (-lambda * t).exp()).unwrap()
    }

    fn quarterly(spread: f64, rate: f64) -> CdsContract {
        CdsContract::standard(0.0, 2.0, spread, 0.6, rate, 0.25).unwrap()
    }

    #[test]
    fn standard_schedule() {
        let c = CdsContract::standard(1.0, 3.0, 0.01, 0.6, 0.0, 0.25).unwrap();
        assert_eq!(c.payment_dates.len(), 8);
        assert_eq!(c.payment_dates[7], 3.0);
        assert!(c.accruals.iter().all(|a| (a - 0.25).abs() < 1e-12));
        let c = CdsContract::standard(0.0, 1.1, 0.01, 0.6, 0.0, 0.25).unwrap();
        assert_eq!(c.payment_dates.len(), 5);
        assert!((c.accruals[4] - 0.1).abs() < 1e-12);
        assert!(CdsContract::standard(0.0, 1.0, 0.01, 1.5, 0.0, 0.25).is_err());
        assert!(CdsContract::new(1.0, vec![0.5], vec![0.25], 0.0, 0.6, 0.0).is_err());
    }

    #[test]
    fn curve_validation() {
        assert!(CreditCurve::new(0.0, vec![0.0, 1.0], vec![0.9, 0.8]).is_err());
        assert!(CreditCurve::new(0.0, vec![0.0, 1.0, 2.0], vec![1.0, 0.8, 0.85]).is_err());
        assert!(matches!(
            CreditCurve::new(0.0, vec![0.0, 1.0], vec![1.0, 1.2]),
            Err(Error::InvalidCurve(_))
        ));
        let c = CreditCurve::new(0.0, vec![0.0, 1.0, 2.0], vec![1.0, 0.8, 0.7]).unwrap();
        assert!((c.at(0.5) - 0.9).abs() < 1e-15);
        assert_eq!(c.at(5.0), 0.7);
    }

    #[test]
    fn riskless_curve() {
        let c = quarterly(0.01, 0.0);
        let sure = CreditCurve::new(0.0, vec![0.0, 2.0], vec![1.0, 1.0]).unwrap();
        let l = legs(&sure, &c, QUAD_STEPS).unwrap();
        assert!((l.duration - 2.0).abs() < 1e-14);
        assert_eq!(l.protection, 0.0);
        assert_eq!(par_spread(&sure, &c).unwrap(), 0.0);
        let c = quarterly(0.01, 0.05);
        let expect: f64 = c.payment_dates.iter().map(|t| 0.25 * (-0.05 * t).exp()).sum();
        assert!((cds_price(&sure, &c).unwrap() + 0.01 * expect).abs() < 1e-15);
    }

    #[test]
    fn par_spread_zeroes_price() {
        for (lambda, r) in [(0.01, 0.0), (0.05, 0.03), (0.3, 0.01)] {
            let curve = flat(lambda, 2.0);
            let c = quarterly(0.0, r);
            let k = par_spread(&curve, &c).unwrap();
            assert!(cds_price(&curve, &c.with_spread(k)).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn credit_triangle() {
        let curve = flat(0.02, 2.0);
        let k = par_spread(&curve, &quarterly(0.0, 0.0)).unwrap();
        assert!((k - 0.6 * 0.02).abs() < 2e-5, "{k}");
    }

    #[test]
    fn duration_decreases_with_hazard() {
        let c = quarterly(0.0, 0.02);
        let d: Vec<f64> = [0.0, 0.05, 0.2, 0.8]
            .iter()
            .map(|&l| risky_duration(&flat(l, 2.0), &c, QUAD_STEPS).unwrap())
            .collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn quadrature_refinement_is_stable() {
        let curve = flat(0.07, 2.0);
        let c = quarterly(0.01, 0.04);
        let a = cds_price_with(&curve, &c, QUAD_STEPS).unwrap();
        let b = cds_price_with(&curve, &c, 2 * QUAD_STEPS).unwrap();
        assert!(((a - b) / a).abs() < 1e-4);
    }

    #[test]
    fn curve_too_short_is_rejected() {
        let curve = flat(0.07, 1.0);
        assert!(matches!(legs(&curve, &quarterly(0.01, 0.0), 8), Err(Error::InvalidCurve(_))));
    }

    #[test]
    fn option_bounds_and_strike_monotonicity() {
        let spec = GbmSpec::new(0.03, 0.05, 0.02, 86.3, 86.3, 76.0).unwrap();
        let contract = CdsContract::standard(1.0, 3.0, 0.0, 0.6, 0.0, 0.25).unwrap();
        let grid = pricing_grid(&contract, 20).unwrap();
        let tree = build_tree(spec.into_arc(), grid.clone(), &uniform_sizes(grid.steps(), 10)).unwrap();
        let engine = PsoEngine::new(&tree, &contract).unwrap();
        let strikes = [0.0, 0.003, 0.006, 0.009, 1.0];
        let est = engine.price(&strikes, 200, 7).unwrap();
        assert!(est.windows(2).all(|w| w[1].price <= w[0].price));
        assert!(est.iter().all(|e| e.price >= 0.0 && e.price <= contract.lgd));
        assert_eq!(est[4].price, 0.0);
        let again = engine.price(&strikes, 200, 7).unwrap();
        assert_eq!(est, again);
        let single = pso_price(&tree, &contract.with_spread(0.006), 200, 7).unwrap();
        assert_eq!(single.price, est[2].price);
    }
}
