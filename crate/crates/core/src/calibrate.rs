//! Joint calibration of implied volatility and implied average forward rate.
//!
//! Two option prices on the same underlying and expiry determine the pair
//! `(sigma_imp, rho_imp)` as the solution of
//!
//! ```text
//! H(spot, K1, tau, sigma_imp, rho_imp) = P1
//! H(spot, K2, tau, sigma_imp, rho_imp) = P2
//! ```
//!
//! The system is reduced to a scalar problem in the rate: for each candidate
//! `rho` the first quote yields its ordinary (rate-conditional) implied
//! volatility `sigma_1(rho)`, and the outer equation
//! `g(rho) = H(K2, sigma_1(rho), rho) - P2` is solved by scanning the
//! admissible rate interval for sign changes and refining each with Brent's
//! method. Every root found is reported; more than one is an error.
//!
//! Prices and strikes are normalized by the spot before solving, so the
//! spot-free formulation ([`implied_pair_normalized`]) and the spot-based one
//! ([`implied_pair`]) share a single code path.

use serde::{Deserialize, Serialize};

use crate::bs::{bs_price, price_bounds, vega, BsInputs, OptionKind};
use crate::error::{invalid, Error, Result, RootCandidate};
use crate::roots::{brent, newton_increasing};

/// One observed option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub kind: OptionKind,
    pub strike: f64,
    /// Time to expiry in years.
    pub tau: f64,
    pub price: f64,
}

impl OptionQuote {
    pub fn new(kind: OptionKind, strike: f64, tau: f64, price: f64) -> Result<Self> {
        let q = OptionQuote { kind, strike, tau, price };
        q.validate()?;
        Ok(q)
    }

    pub fn call(strike: f64, tau: f64, price: f64) -> Result<Self> {
        Self::new(OptionKind::Call, strike, tau, price)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(invalid(format!("quote strike must be positive, got {}", self.strike)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(invalid(format!("quote expiry must be positive, got {}", self.tau)));
        }
        if !(self.price.is_finite() && self.price > 0.0) {
            return Err(invalid(format!("quote price must be positive, got {}", self.price)));
        }
        Ok(())
    }

    fn scaled(&self, spot: f64) -> OptionQuote {
        OptionQuote { strike: self.strike / spot, price: self.price / spot, ..*self }
    }

    fn model_price(&self, spot: f64, sigma: f64, rate: f64) -> Result<f64> {
        bs_price(self.kind, &BsInputs::new(spot, self.strike, self.tau, sigma, rate)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub sigma_bracket: (f64, f64),
    pub rho_bracket: (f64, f64),
    /// Absolute tolerance on price residuals.
    pub price_tol: f64,
    pub max_iter: usize,
    pub outer_scan_points: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            sigma_bracket: (1e-8, 10.0),
            rho_bracket: (-1.0, 2.0),
            price_tol: 1e-10,
            max_iter: 200,
            outer_scan_points: 64,
        }
    }
}

impl SolverConfig {
    /// Search box for the lattice pair `(rho, eps)`: `sigma_bracket` holds the
    /// range parameter `eps` and `rho_bracket` the gross per-period return.
    pub fn for_binomial() -> Self {
        SolverConfig { sigma_bracket: (1e-6, 0.99), rho_bracket: (1.0, 1.5), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok(self.sigma_bracket) {
            return Err(invalid(format!("empty volatility bracket {:?}", self.sigma_bracket)));
        }
        if !(self.sigma_bracket.0 >= 0.0) {
            return Err(invalid("volatility bracket must be non-negative"));
        }
        if !ok(self.rho_bracket) {
            return Err(invalid(format!("empty rate bracket {:?}", self.rho_bracket)));
        }
        if !(self.price_tol > 0.0) {
            return Err(invalid("price tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be positive"));
        }
        if self.outer_scan_points < 2 {
            return Err(invalid("outer scan needs at least two points"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// The brackets collapsed but a residual is still above `price_tol`.
    ToleranceNotMet,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iterations {
    /// Brent iterations spent refining the accepted outer root.
    pub outer: usize,
    /// Total inner iterations across the scan and the refinement.
    pub inner: usize,
}

/// Outcome of the outer scan over the rate interval.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    /// Admissible rate interval actually scanned.
    pub interval: (f64, f64),
    pub scanned: usize,
    /// Scan points where the inner solve failed and were dropped.
    pub inner_failures: usize,
    /// Refined outer roots.
    pub roots: Vec<f64>,
}

/// Jointly implied `(sigma, rho)` with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedPair {
    pub sigma_imp: f64,
    pub rho_imp: f64,
    /// Model minus market price for each quote, in the quotes' units.
    pub residuals: [f64; 2],
    pub iterations: Iterations,
    pub bracket_report: ScanReport,
    pub status: SolveStatus,
}

impl ImpliedPair {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// A rate interval with open/closed ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl RateInterval {
    pub fn contains(&self, rho: f64) -> bool {
        let above = if self.lo_open { rho > self.lo } else { rho >= self.lo };
        let below = if self.hi_open { rho < self.hi } else { rho <= self.hi };
        above && below
    }

    pub(crate) fn intersect(&self, other: &RateInterval) -> Option<RateInterval> {
        let (lo, lo_open) = match self.lo.partial_cmp(&other.lo)? {
            std::cmp::Ordering::Greater => (self.lo, self.lo_open),
            std::cmp::Ordering::Less => (other.lo, other.lo_open),
            std::cmp::Ordering::Equal => (self.lo, self.lo_open || other.lo_open),
        };
        let (hi, hi_open) = match self.hi.partial_cmp(&other.hi)? {
            std::cmp::Ordering::Less => (self.hi, self.hi_open),
            std::cmp::Ordering::Greater => (other.hi, other.hi_open),
            std::cmp::Ordering::Equal => (self.hi, self.hi_open || other.hi_open),
        };
        RateInterval::build(lo, hi, lo_open, hi_open)
    }

    fn build(lo: f64, hi: f64, lo_open: bool, hi_open: bool) -> Option<RateInterval> {
        let nonempty = if lo_open || hi_open { lo < hi } else { lo <= hi };
        nonempty.then_some(RateInterval { lo, hi, lo_open, hi_open })
    }
}

/// Subset of `rho_bracket` on which `quote` lies strictly inside its static
/// no-arbitrage bounds. `None` means no admissible rate exists.
pub fn check_arbitrage_box(quote: &OptionQuote, spot: f64, rho_bracket: (f64, f64)) -> Option<RateInterval> {
    let bracket = RateInterval::build(rho_bracket.0, rho_bracket.1, false, false)?;
    let (p, k, tau) = (quote.price, quote.strike, quote.tau);
    if !(p > 0.0) {
        return None;
    }
    let admissible = match quote.kind {
        // x - K e^{-rho tau} < P < x
        OptionKind::Call => {
            if p >= spot {
                return None;
            }
            let gap = spot - p;
            let hi = -(gap / k).ln() / tau;
            RateInterval { lo: f64::NEG_INFINITY, hi, lo_open: true, hi_open: true }
        }
        // K e^{-rho tau} - x < P < K e^{-rho tau}
        OptionKind::Put => {
            let lo = -((p + spot) / k).ln() / tau;
            let hi = -(p / k).ln() / tau;
            RateInterval { lo, hi, lo_open: true, hi_open: true }
        }
    };
    bracket.intersect(&admissible)
}

/// Standard implied volatility of `quote` conditional on the average rate `rho`.
pub fn implied_vol_given_rho(quote: &OptionQuote, spot: f64, rho: f64, cfg: &SolverConfig) -> Result<f64> {
    quote.validate()?;
    cfg.validate()?;
    if !(spot.is_finite() && spot > 0.0) {
        return Err(invalid(format!("spot must be positive, got {spot}")));
    }
    let unit = quote.scaled(spot);
    let (sigma, _) = conditional_vol(&unit, rho, cfg)?;
    let residual = quote.model_price(spot, sigma, rho)? - quote.price;
    if residual.abs() > cfg.price_tol {
        return Err(Error::Unconverged { residual, tolerance: cfg.price_tol });
    }
    Ok(sigma)
}

/// Inner solve on a unit-spot quote. Returns `(sigma, iterations)`.
fn conditional_vol(quote: &OptionQuote, rho: f64, cfg: &SolverConfig) -> Result<(f64, usize)> {
    let (lower, upper) = price_bounds(quote.kind, 1.0, quote.strike, quote.tau, rho);
    // within price_tol of a bound the volatility is not identified
    if !(quote.price - lower > cfg.price_tol && upper - quote.price > cfg.price_tol) {
        return Err(Error::PriceOutOfBounds { price: quote.price, lower, upper });
    }
    let (lo, hi) = cfg.sigma_bracket;
    let f_lo = quote.model_price(1.0, lo, rho)? - quote.price;
    let f_hi = quote.model_price(1.0, hi, rho)? - quote.price;
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::BracketExhausted { lo, hi });
    }
    if f_lo == 0.0 {
        return Ok((lo, 0));
    }
    if f_hi == 0.0 {
        return Ok((hi, 0));
    }
    // Starting from the inflection point of the price in sigma makes plain
    // Newton monotone; the bracket handles the rest.
    let log_moneyness = (rho * quote.tau - quote.strike.ln()).abs();
    let mut start = (2.0 * log_moneyness / quote.tau).sqrt();
    if !(start > lo && start < hi) || start < 0.05 {
        start = 0.3f64.clamp(lo, hi);
    }
    let root = newton_increasing(
        |sigma| {
            let inputs = BsInputs::new(1.0, quote.strike, quote.tau, sigma, rho)?;
            let value = bs_price(quote.kind, &inputs)? - quote.price;
            Ok((value, vega(&inputs)?))
        },
        lo,
        hi,
        start,
        cfg.max_iter,
    )?;
    Ok((root.x, root.iterations))
}

/// Result of the generic nested solve: inner parameter, rate and diagnostics.
#[derive(Debug, Clone)]
pub(crate) struct NestedSolution {
    pub inner: f64,
    pub rate: f64,
    pub iterations: Iterations,
    pub report: ScanReport,
}

/// Scan `interval` for sign changes of `g(rho) = outer(inner(rho), rho)` and
/// refine each with Brent's method. Points where `inner` fails are dropped.
pub(crate) fn solve_nested<I, O>(
    inner: I,
    outer: O,
    interval: RateInterval,
    scan_points: usize,
    max_iter: usize,
) -> Result<NestedSolution>
where
    I: Fn(f64) -> Result<(f64, usize)>,
    O: Fn(f64, f64) -> Result<f64>,
{
    let inner_iters = std::cell::Cell::new(0usize);
    let eval = |rho: f64| -> Result<(f64, f64)> {
        let (p, it) = inner(rho)?;
        inner_iters.set(inner_iters.get() + it);
        Ok((p, outer(p, rho)?))
    };

    let width = interval.hi - interval.lo;
    let nudge = 1e-9 * width.max(f64::MIN_POSITIVE);
    let lo = if interval.lo_open { interval.lo + nudge } else { interval.lo };
    let hi = if interval.hi_open { interval.hi - nudge } else { interval.hi };
    let n = scan_points.max(2);
    let grid: Vec<f64> =
        (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect();

    let mut report = ScanReport { interval: (lo, hi), scanned: n, ..ScanReport::default() };
    let mut samples: Vec<(f64, f64, f64)> = Vec::with_capacity(n);
    let mut last_inner_error = None;
    for &rho in &grid {
        match eval(rho) {
            Ok((p, g)) if g.is_finite() => samples.push((rho, p, g)),
            Ok(_) => report.inner_failures += 1,
            Err(e) => {
                report.inner_failures += 1;
                last_inner_error = Some(e);
            }
        }
    }
    if samples.is_empty() {
        let detail = last_inner_error.map_or_else(|| "no admissible rate".to_string(), |e| e.to_string());
        return Err(Error::InnerFailure(format!("inner solve failed at every scanned rate ({detail})")));
    }

    // Near an open end the inner solve can fail on a band whose width is set
    // by the price tolerance. A root in that last grid gap would be missed, so
    // walk from the outermost valid sample toward the failed end.
    let valid_grid = samples.len();
    let first_valid = samples[0].0;
    let last_valid = samples[samples.len() - 1].0;
    if first_valid > grid[0] {
        if let Some(s) = edge_sample(&eval, first_valid, grid[0]) {
            samples.insert(0, s);
        }
    }
    if last_valid < grid[n - 1] {
        if let Some(s) = edge_sample(&eval, last_valid, grid[n - 1]) {
            samples.push(s);
        }
    }

    let mut found: Vec<(f64, f64, usize)> = Vec::new();
    for (i, &(rho, p, g)) in samples.iter().enumerate() {
        if g == 0.0 {
            found.push((rho, p, 0));
            continue;
        }
        if let Some(&(rho_b, _, g_b)) = samples.get(i + 1) {
            if g_b != 0.0 && g.signum() != g_b.signum() {
                let root = brent(|r| eval(r).map(|(_, g)| g), rho, rho_b, g, g_b, max_iter)?;
                let (p_root, _) = eval(root.x)?;
                found.push((root.x, p_root, root.iterations));
            }
        }
    }
    report.roots = found.iter().map(|r| r.0).collect();

    match found.len() {
        0 => Err(Error::NoRoot { scanned: n, valid: valid_grid }),
        1 => {
            let (rate, p, outer_its) = found[0];
            Ok(NestedSolution {
                inner: p,
                rate,
                iterations: Iterations { outer: outer_its, inner: inner_iters.get() },
                report,
            })
        }
        _ => Err(Error::MultipleRoots {
            roots: found.iter().map(|&(rate, inner, _)| RootCandidate { inner, rate }).collect(),
        }),
    }
}

/// Bisects between an admissible rate and an inadmissible one; returns the
/// admissible sample closest to the boundary if it differs from `valid`.
fn edge_sample<E>(eval: &E, valid: f64, invalid: f64) -> Option<(f64, f64, f64)>
where
    E: Fn(f64) -> Result<(f64, f64)>,
{
    let (mut a, mut b) = (valid, invalid);
    let mut best = None;
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        match eval(mid) {
            Ok((p, g)) if g.is_finite() => {
                best = Some((mid, p, g));
                a = mid;
            }
            _ => b = mid,
        }
    }
    best
}

fn check_pair(q1: &OptionQuote, q2: &OptionQuote) -> Result<()> {
    q1.validate()?;
    q2.validate()?;
    if q1.tau != q2.tau {
        return Err(invalid(format!("quotes must share an expiry, got {} and {}", q1.tau, q2.tau)));
    }
    if q1.strike == q2.strike && q1.kind == q2.kind {
        return Err(Error::IdenticalStrikes);
    }
    Ok(())
}

/// Solves on unit-spot quotes.
fn solve_unit(q1: &OptionQuote, q2: &OptionQuote, cfg: &SolverConfig) -> Result<NestedSolution> {
    let box1 = check_arbitrage_box(q1, 1.0, cfg.rho_bracket);
    let box2 = check_arbitrage_box(q2, 1.0, cfg.rho_bracket);
    let interval = match (box1, box2) {
        (Some(a), Some(b)) => a.intersect(&b),
        _ => None,
    };
    let Some(interval) = interval else {
        return Err(Error::InnerFailure(
            "no rate in the bracket keeps both quotes inside their no-arbitrage bounds".into(),
        ));
    };
    solve_nested(
        |rho| conditional_vol(q1, rho, cfg),
        |sigma, rho| Ok(q2.model_price(1.0, sigma, rho)? - q2.price),
        interval,
        cfg.outer_scan_points,
        cfg.max_iter,
    )
}

/// Jointly implied volatility and average forward rate from two quotes with
/// a common expiry.
pub fn implied_pair(q1: &OptionQuote, q2: &OptionQuote, spot: f64, cfg: &SolverConfig) -> Result<ImpliedPair> {
    cfg.validate()?;
    check_pair(q1, q2)?;
    if !(spot.is_finite() && spot > 0.0) {
        return Err(invalid(format!("spot must be positive, got {spot}")));
    }
    let sol = solve_unit(&q1.scaled(spot), &q2.scaled(spot), cfg)?;
    let residuals =
        [q1.model_price(spot, sol.inner, sol.rate)? - q1.price, q2.model_price(spot, sol.inner, sol.rate)? - q2.price];
    let status = if residuals.iter().all(|r| r.abs() <= cfg.price_tol) {
        SolveStatus::Converged
    } else {
        SolveStatus::ToleranceNotMet
    };
    Ok(ImpliedPair {
        sigma_imp: sol.inner,
        rho_imp: sol.rate,
        residuals,
        iterations: sol.iterations,
        bracket_report: sol.report,
        status,
    })
}

/// Spot-free variant: `g_i` are call prices divided by the spot and `kappa_i`
/// the strikes divided by the spot.
pub fn implied_pair_normalized(
    g1: f64,
    g2: f64,
    kappa1: f64,
    kappa2: f64,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<ImpliedPair> {
    let q1 = OptionQuote::call(kappa1, tau, g1)?;
    let q2 = OptionQuote::call(kappa2, tau, g2)?;
    implied_pair(&q1, &q2, 1.0, cfg)
}

/// Calibration of two volatilities and one rate from three quotes, one at a
/// short expiry and two sharing a longer expiry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermStructureFit {
    pub sigma_short: f64,
    pub sigma_long: f64,
    /// Single annualized average rate applied to both horizons.
    pub rho: f64,
    pub residuals: [f64; 3],
    pub long_pair: ImpliedPair,
    pub status: SolveStatus,
}

pub fn term_structure_triple(
    q1: &OptionQuote,
    q2: &OptionQuote,
    q3: &OptionQuote,
    spot: f64,
    cfg: &SolverConfig,
) -> Result<TermStructureFit> {
    q1.validate()?;
    if !(q1.tau < q2.tau) {
        return Err(invalid(format!("short quote must expire first, got {} and {}", q1.tau, q2.tau)));
    }
    let long_pair = implied_pair(q2, q3, spot, cfg)?;
    let rho = long_pair.rho_imp;
    let (sigma_short, _) = conditional_vol(&q1.scaled(spot), rho, cfg)
        .map_err(|e| Error::InnerFailure(format!("short-expiry quote at implied rate {rho}: {e}")))?;
    let residuals =
        [q1.model_price(spot, sigma_short, rho)? - q1.price, long_pair.residuals[0], long_pair.residuals[1]];
    let status = if residuals.iter().all(|r| r.abs() <= cfg.price_tol) {
        SolveStatus::Converged
    } else {
        SolveStatus::ToleranceNotMet
    };
    Ok(TermStructureFit { sigma_short, sigma_long: long_pair.sigma_imp, rho, residuals, long_pair, status })
}
