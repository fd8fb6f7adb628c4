//! Closed-form references: first-passage survival of a geometric Brownian
//! motion, the Black payer swaption formula and its implied volatility.

use crate::error::{Error, Result};
use crate::normal;

/// Probability that a GBM started at `x` with drift `mu` and volatility
/// `sigma` stays above `barrier` during a period of length `u`:
///
/// `Φ(h₁) − (a/x)^{2(μ − σ²/2)/σ²} Φ(h₂)` with
/// `h₁ = (ln(x/a) + (μ − σ²/2)u) / σ√u` and `h₂ = (ln(a/x) + (μ − σ²/2)u) / σ√u`.
pub fn gbm_survival_f(mu: f64, sigma: f64, barrier: f64, x: f64, u: f64) -> f64 {
    if x <= barrier {
        return 0.0;
    }
    if u <= 0.0 {
        return 1.0;
    }
    let nu = mu - 0.5 * sigma * sigma;
    let sd = sigma * u.sqrt();
    let l = (x / barrier).ln();
    let h1 = (l + nu * u) / sd;
    let h2 = (-l + nu * u) / sd;
    // (a/x)^p Φ(h₂) in log space: p can be large when σ is small.
    let p = 2.0 * nu / (sigma * sigma);
    let phi2 = normal::cdf(h2);
    let reflected = if phi2 == 0.0 { 0.0 } else { (-p * l + phi2.ln()).exp() };
    (normal::cdf(h1) - reflected).clamp(0.0, 1.0)
}

/// Inputs of the Black payer formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlackQuote {
    /// Forward par spread `k*`.
    pub forward: f64,
    pub strike: f64,
    pub expiry: f64,
    /// Forward risky annuity `C₀`.
    pub annuity: f64,
    pub vol: f64,
}

impl BlackQuote {
    fn check(&self, with_vol: bool) -> Result<()> {
        let ok = self.forward > 0.0
            && self.strike > 0.0
            && self.expiry > 0.0
            && self.annuity > 0.0
            && (!with_vol || self.vol > 0.0)
            && [self.forward, self.strike, self.expiry, self.annuity, self.vol]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("Black quote fields must be positive and finite: {self:?}")))
        }
    }

    /// Option value with no time value, `C₀ (k* − k)⁺`.
    pub fn intrinsic(&self) -> f64 {
        self.annuity * (self.forward - self.strike).max(0.0)
    }

    /// Supremum of the payer value over volatilities, `C₀ k*`.
    pub fn upper_bound(&self) -> f64 {
        self.annuity * self.forward
    }
}

/// `C₀ (k* Φ(d₁) − k Φ(d₂))`.
pub fn black_payer(q: &BlackQuote) -> Result<f64> {
    q.check(true)?;
    let s = q.vol * q.expiry.sqrt();
    let d1 = ((q.forward / q.strike).ln() + 0.5 * s * s) / s;
    let d2 = d1 - s;
    Ok((q.annuity * (q.forward * normal::cdf(d1) - q.strike * normal::cdf(d2))).max(0.0))
}

const VOL_BRACKET: (f64, f64) = (1e-6, 10.0);

/// Black volatility reproducing `price`, by bisection on `[1e-6, 10]`. The
/// `vol` field of `quote` is ignored.
pub fn implied_vol(price: f64, quote: &BlackQuote) -> Result<f64> {
    quote.check(false)?;
    let (lower, upper) = (quote.intrinsic(), quote.upper_bound());
    if !(price > lower) {
        return Err(Error::OutOfBand {
            price,
            lower,
            upper,
            bound: "at or below the intrinsic value of",
        });
    }
    if !(price < upper) {
        return Err(Error::OutOfBand {
            price,
            lower,
            upper,
            bound: "at or above the upper bound of",
        });
    }
    let value = |v: f64| black_payer(&BlackQuote { vol: v, ..*quote });
    let (mut lo, mut hi) = VOL_BRACKET;
    if value(lo)? >= price {
        return Ok(lo);
    }
    if value(hi)? <= price {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if value(mid)? < price {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
