//! Closed-form Black–Scholes kernel.
//!
//! Prices are written in terms of an *average* rate `rate` over the remaining
//! life of the option rather than a constant short rate, so the same kernel
//! serves both the textbook model and time-varying deterministic rate curves.
//! Puts are derived from calls through put–call parity.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    /// Terminal payoff `F(s, k)`.
    pub fn payoff(self, s: f64, k: f64) -> f64 {
        match self {
            OptionKind::Call => (s - k).max(0.0),
            OptionKind::Put => (k - s).max(0.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        }
    }
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionKind::Call),
            "put" | "p" => Ok(OptionKind::Put),
            other => Err(invalid(format!("unknown option kind '{other}'"))),
        }
    }
}

/// Inputs to the Black–Scholes formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsInputs {
    pub spot: f64,
    pub strike: f64,
    /// Time to expiry `T - t` in years.
    pub tau: f64,
    pub sigma: f64,
    /// Average forward risk-free rate over `[t, T]`.
    pub rate: f64,
}

impl BsInputs {
    pub fn new(spot: f64, strike: f64, tau: f64, sigma: f64, rate: f64) -> Result<Self> {
        let inputs = BsInputs { spot, strike, tau, sigma, rate };
        inputs.validate()?;
        Ok(inputs)
    }

    /// Checks domain constraints. `tau == 0` and `sigma == 0` are allowed and
    /// select the intrinsic-value branches of [`bs_price`].
    pub fn validate(&self) -> Result<()> {
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return Err(invalid(format!("spot must be positive, got {}", self.spot)));
        }
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(invalid(format!("strike must be positive, got {}", self.strike)));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(invalid(format!("tau must be non-negative, got {}", self.tau)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(invalid(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if !self.rate.is_finite() {
            return Err(invalid(format!("rate must be finite, got {}", self.rate)));
        }
        Ok(())
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.tau).exp()
    }

    fn total_vol(&self) -> f64 {
        self.sigma * self.tau.sqrt()
    }
}

/// Standard normal cumulative distribution function.
///
/// Evaluated through the complementary error function so that both tails
/// keep full relative precision. NaN propagates.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Returns `(d_plus, d_minus)`.
pub fn d_pair(inputs: &BsInputs) -> Result<(f64, f64)> {
    inputs.validate()?;
    if inputs.tau == 0.0 {
        return Err(Error::DegenerateInputs("d± undefined at zero time to expiry"));
    }
    if inputs.total_vol() == 0.0 {
        return Err(Error::DegenerateInputs("d± undefined at zero volatility"));
    }
    Ok(d_pair_unchecked(inputs))
}

fn d_pair_unchecked(inputs: &BsInputs) -> (f64, f64) {
    let sd = inputs.total_vol();
    let d_plus = ((inputs.spot / inputs.strike).ln() + inputs.tau * inputs.rate) / sd + 0.5 * sd;
    (d_plus, d_plus - sd)
}

fn call_price(inputs: &BsInputs) -> f64 {
    let x = inputs.spot;
    let k = inputs.strike;
    if inputs.tau == 0.0 {
        return (x - k).max(0.0);
    }
    let df = inputs.discount();
    let lower = (x - k * df).max(0.0);
    if inputs.total_vol() == 0.0 {
        return lower;
    }
    let (d_plus, d_minus) = d_pair_unchecked(inputs);
    let raw = x * norm_cdf(d_plus) - k * df * norm_cdf(d_minus);
    // rounding can push the last bits across the static bounds
    raw.clamp(lower, x)
}

/// Black–Scholes price of a vanilla option.
///
/// `tau == 0` returns the intrinsic value; `sigma == 0` returns the
/// discounted intrinsic value of the deterministic forward.
pub fn bs_price(kind: OptionKind, inputs: &BsInputs) -> Result<f64> {
    inputs.validate()?;
    let call = call_price(inputs);
    Ok(match kind {
        OptionKind::Call => call,
        OptionKind::Put => (call - inputs.spot + inputs.strike * inputs.discount()).max(0.0),
    })
}

/// Black–Scholes price with the volatility required to be strictly positive.
pub fn bs_price_strict(kind: OptionKind, inputs: &BsInputs) -> Result<f64> {
    if inputs.tau > 0.0 && inputs.sigma <= 0.0 {
        return Err(Error::DegenerateInputs("zero volatility with positive time to expiry"));
    }
    bs_price(kind, inputs)
}

/// Sensitivity of the price to `sigma`; identical for calls and puts.
pub fn vega(inputs: &BsInputs) -> Result<f64> {
    let (d_plus, _) = d_pair(inputs)?;
    Ok(inputs.spot * inputs.tau.sqrt() * norm_pdf(d_plus))
}

/// Price of an option on a unit spot with strike `moneyness`, i.e. the option
/// price divided by the current stock price.
pub fn normalized_price(kind: OptionKind, moneyness: f64, tau: f64, sigma: f64, rate: f64) -> Result<f64> {
    bs_price(kind, &BsInputs::new(1.0, moneyness, tau, sigma, rate)?)
}

/// Static no-arbitrage interval `(lower, upper)` for an option price.
pub fn price_bounds(kind: OptionKind, spot: f64, strike: f64, tau: f64, rate: f64) -> (f64, f64) {
    let pv_strike = strike * (-rate * tau).exp();
    match kind {
        OptionKind::Call => ((spot - pv_strike).max(0.0), spot),
        OptionKind::Put => ((pv_strike - spot).max(0.0), pv_strike),
    }
}
