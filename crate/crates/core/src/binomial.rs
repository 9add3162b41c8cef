//! Discrete-time `(rho, eps)` binomial model.
//!
//! Each period the price moves as `S(t+1) = rho * S(t) * zeta`, with `zeta`
//! taking the values `(1 - eps)^-1` (up) and `1 - eps` (down). The gross
//! risk-free return per period is `rho`, so the replication value of a
//! European claim is its `rho^-N`-discounted expectation under the
//! probability `q` that makes `E[zeta] = 1`.
//!
//! The perturbed variant multiplies every step by an extra uniform factor
//! on `[1 - eps, (1 - eps)^-1]`, which makes the terminal price continuous.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs::OptionKind;
use crate::calibrate::{check_arbitrage_box, solve_nested, OptionQuote, RateInterval, SolverConfig};
use crate::error::{invalid, Error, Result};
use crate::roots::brent;

/// Largest supported lattice depth.
pub const MAX_PERIODS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialModel {
    /// Gross per-period risk-free return, at least 1.
    pub rho_step: f64,
    /// Range parameter in `(0, 1)`.
    pub eps: f64,
    pub periods: usize,
    pub spot: f64,
}

impl BinomialModel {
    pub fn new(rho_step: f64, eps: f64, periods: usize, spot: f64) -> Result<Self> {
        let m = BinomialModel { rho_step, eps, periods, spot };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_step.is_finite() && self.rho_step >= 1.0) {
            return Err(invalid(format!("rho must be at least 1, got {}", self.rho_step)));
        }
        check_eps(self.eps)?;
        if self.periods == 0 {
            return Err(invalid("the lattice needs at least one period"));
        }
        if self.periods > MAX_PERIODS {
            return Err(Error::TooManyPeriods { periods: self.periods, max: MAX_PERIODS });
        }
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return Err(invalid(format!("spot must be positive, got {}", self.spot)));
        }
        Ok(())
    }

    pub fn up(&self) -> f64 {
        1.0 / (1.0 - self.eps)
    }

    pub fn down(&self) -> f64 {
        1.0 - self.eps
    }

    /// `rho^-N`.
    pub fn discount(&self) -> f64 {
        self.rho_step.powi(-(self.periods as i32))
    }

    /// Terminal price after `ups` up-moves.
    pub fn terminal_price(&self, ups: usize) -> f64 {
        let n = self.periods as i32;
        self.spot * self.rho_step.powi(n) * (1.0 - self.eps).powi(n - 2 * ups as i32)
    }

    /// Terminal nodes as `(price, risk-neutral probability)`, indexed by the
    /// number of up-moves.
    pub fn terminal_distribution(&self) -> Result<Vec<(f64, f64)>> {
        Ok(self.log_nodes()?.into_iter().map(|(ln_s, ln_w)| (ln_s.exp(), ln_w.exp())).collect())
    }

    /// `(ln price, ln probability)` per terminal node.
    fn log_nodes(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        let n = self.periods;
        let q = risk_neutral_prob(self.eps)?;
        let (ln_q, ln_1q) = (q.ln(), (1.0 - q).ln());
        let ln_top = self.spot.ln() + n as f64 * self.rho_step.ln();
        let ln_down = (1.0 - self.eps).ln();
        let mut ln_choose = 0.0f64;
        let mut nodes = Vec::with_capacity(n + 1);
        for j in 0..=n {
            if j > 0 {
                ln_choose += ((n - j + 1) as f64).ln() - (j as f64).ln();
            }
            let ln_w = ln_choose + j as f64 * ln_q + (n - j) as f64 * ln_1q;
            let ln_s = ln_top + (n as f64 - 2.0 * j as f64) * ln_down;
            nodes.push((ln_s, ln_w));
        }
        Ok(nodes)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// Probability of the up-move that makes the discounted price a martingale:
/// `q / (1 - eps) + (1 - q)(1 - eps) = 1`, i.e. `q = (1 - eps) / (2 - eps)`.
pub fn risk_neutral_prob(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok((1.0 - eps) / (2.0 - eps))
}

/// Replication value of a European option on the recombining lattice.
pub fn binomial_price(model: &BinomialModel, kind: OptionKind, strike: f64) -> Result<f64> {
    if !(strike.is_finite() && strike > 0.0) {
        return Err(invalid(format!("strike must be positive, got {strike}")));
    }
    let ln_df = -(model.periods as f64) * model.rho_step.ln();
    let df = ln_df.exp();
    let ln_k = strike.ln();
    // discounted stock leg evaluated in logs so extreme nodes cannot overflow
    let price = model
        .log_nodes()?
        .into_iter()
        .map(|(ln_s, ln_w)| {
            let stock = (ln_w + ln_s + ln_df).exp();
            let cash = ln_w.exp() * strike * df;
            match kind {
                OptionKind::Call if ln_s > ln_k => stock - cash,
                OptionKind::Put if ln_s < ln_k => cash - stock,
                _ => 0.0,
            }
        })
        .sum();
    Ok(price)
}

/// Implied `(rho, eps)` from two lattice prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedLattice {
    pub rho: f64,
    pub eps: f64,
    pub residuals: [f64; 2],
    pub converged: bool,
}

/// Solves `binomial_price(rho, eps, K_i) = P_i` for two calls with the same
/// nested scheme as the Black–Scholes pair: `eps` is solved from the first
/// quote at each candidate `rho`, then `rho` from the second.
///
/// `cfg.sigma_bracket` is the `eps` search range and `cfg.rho_bracket` the
/// per-period return range; see [`SolverConfig::for_binomial`].
pub fn implied_rho_eps(
    p1: f64,
    p2: f64,
    k1: f64,
    k2: f64,
    spot: f64,
    periods: usize,
    cfg: &SolverConfig,
) -> Result<ImpliedLattice> {
    cfg.validate()?;
    if k1 == k2 {
        return Err(Error::IdenticalStrikes);
    }
    for (name, v) in [("p1", p1), ("p2", p2), ("k1", k1), ("k2", k2), ("spot", spot)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let (eps_lo, eps_hi) = cfg.sigma_bracket;
    if !(eps_lo > 0.0 && eps_hi < 1.0) {
        return Err(invalid("eps bracket must lie inside (0, 1)"));
    }
    if !(cfg.rho_bracket.0 >= 1.0) {
        return Err(invalid("rho bracket must start at or above 1"));
    }
    BinomialModel::new(cfg.rho_bracket.0, 0.5, periods, spot)?;

    let price_at = |rho: f64, eps: f64, k: f64| {
        binomial_price(&BinomialModel { rho_step: rho, eps, periods, spot }, OptionKind::Call, k)
    };
    let inner = |rho: f64| -> Result<(f64, usize)> {
        let f_lo = price_at(rho, eps_lo, k1)? - p1;
        let f_hi = price_at(rho, eps_hi, k1)? - p1;
        if f_lo > 0.0 || f_hi < 0.0 {
            return Err(Error::BracketExhausted { lo: eps_lo, hi: eps_hi });
        }
        let root = brent(|e| Ok(price_at(rho, e, k1)? - p1), eps_lo, eps_hi, f_lo, f_hi, cfg.max_iter)?;
        Ok((root.x, root.iterations))
    };
    let outer = |eps: f64, rho: f64| Ok(price_at(rho, eps, k2)? - p2);
    let interval = lattice_box(p1, p2, k1, k2, spot, periods, cfg.rho_bracket).ok_or_else(|| {
        Error::InnerFailure("no return in the bracket keeps both quotes inside their no-arbitrage bounds".into())
    })?;
    let sol = solve_nested(inner, outer, interval, cfg.outer_scan_points, cfg.max_iter)?;

    let residuals = [price_at(sol.rate, sol.inner, k1)? - p1, price_at(sol.rate, sol.inner, k2)? - p2];
    Ok(ImpliedLattice {
        rho: sol.rate,
        eps: sol.inner,
        residuals,
        converged: residuals.iter().all(|r| r.abs() <= cfg.price_tol),
    })
}

/// The lattice discounts by `rho^-N`, so its static call bounds are the
/// Black–Scholes ones with `tau = N` and rate `ln rho`.
fn lattice_box(
    p1: f64,
    p2: f64,
    k1: f64,
    k2: f64,
    spot: f64,
    periods: usize,
    bracket: (f64, f64),
) -> Option<RateInterval> {
    let log_bracket = (bracket.0.ln(), bracket.1.ln());
    let log_box = |k: f64, p: f64| {
        let q = OptionQuote { kind: OptionKind::Call, strike: k / spot, tau: periods as f64, price: p / spot };
        check_arbitrage_box(&q, 1.0, log_bracket)
    };
    let b = log_box(k1, p1)?.intersect(&log_box(k2, p2)?)?;
    Some(RateInterval { lo: b.lo.exp(), hi: b.hi.exp(), ..b })
}

/// Probability law used for the `zeta` draws of the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum SamplingMeasure {
    /// Up-moves with the martingale probability `q`.
    #[default]
    RiskNeutral,
    /// Up-moves with a user-given probability.
    Physical { p_up: f64 },
}

/// Terminal prices of the perturbed model `S(t+1) = rho S(t) zeta xi` with
/// independent per-path draws. Path `i` uses its own ChaCha stream, so the
/// output is reproducible and independent of the thread count.
pub fn perturbed_sample_paths(
    model: &BinomialModel,
    n_paths: usize,
    seed: u64,
    measure: SamplingMeasure,
) -> Result<Vec<f64>> {
    model.validate()?;
    if n_paths == 0 {
        return Err(invalid("need at least one path"));
    }
    let p_up = match measure {
        SamplingMeasure::RiskNeutral => risk_neutral_prob(model.eps)?,
        SamplingMeasure::Physical { p_up } if (0.0..=1.0).contains(&p_up) => p_up,
        SamplingMeasure::Physical { p_up } => return Err(invalid(format!("p_up must lie in [0, 1], got {p_up}"))),
    };
    let (down, up) = (model.down(), model.up());
    let samples = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            let mut s = model.spot;
            for _ in 0..model.periods {
                let zeta = if rng.random::<f64>() < p_up { up } else { down };
                let xi = down + (up - down) * rng.random::<f64>();
                s *= model.rho_step * zeta * xi;
            }
            s
        })
        .collect();
    Ok(samples)
}

/// Discounted Monte Carlo call prices from terminal samples.
pub fn sample_call_prices(samples: &[f64], strikes: &[f64], model: &BinomialModel) -> Vec<f64> {
    let df = model.discount();
    strikes
        .iter()
        .map(|&k| df * samples.iter().map(|&s| (s - k).max(0.0)).sum::<f64>() / samples.len() as f64)
        .collect()
}
