//! Monte Carlo check that deterministic time-varying volatility and rate
//! curves price exactly like constant ones at the averaged parameters
//! `v = (1/tau) ∫ sigma(s)^2 ds` and `rho = (1/tau) ∫ r(s) ds`.
//!
//! Curves are piecewise constant, so the terminal law is sampled exactly:
//! each segment contributes an independent Gaussian log-increment and the
//! discount factor is deterministic. Paths are split into fixed-size chunks,
//! each with its own ChaCha stream, and chunk statistics are merged in index
//! order, so estimates do not depend on the number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs::{bs_price, BsInputs, OptionKind};
use crate::error::{invalid, Error, Result};

const CHUNK: usize = 4096;
pub const MIN_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub dt: f64,
    pub sigma: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PathSpecDoc {
    spot: f64,
    segments: Vec<Segment>,
}

/// Piecewise-constant volatility and rate curves on `[0, tau]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathSpecDoc", into = "PathSpecDoc")]
pub struct PathSpec {
    spot: f64,
    segments: Vec<Segment>,
}

impl TryFrom<PathSpecDoc> for PathSpec {
    type Error = Error;

    fn try_from(doc: PathSpecDoc) -> Result<Self> {
        PathSpec::new(doc.spot, doc.segments)
    }
}

impl From<PathSpec> for PathSpecDoc {
    fn from(p: PathSpec) -> Self {
        PathSpecDoc { spot: p.spot, segments: p.segments }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedParams {
    pub variance: f64,
    pub rate: f64,
}

/// Sum that does not depend on the order of the terms.
fn order_free_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

impl PathSpec {
    /// Zero volatility segments are allowed (deterministic growth).
    pub fn new(spot: f64, segments: Vec<Segment>) -> Result<Self> {
        if !(spot.is_finite() && spot > 0.0) {
            return Err(invalid(format!("spot must be positive, got {spot}")));
        }
        if segments.is_empty() {
            return Err(invalid("path spec needs at least one segment"));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.dt.is_finite() && s.dt > 0.0) {
                return Err(invalid(format!("segment {i}: dt must be positive")));
            }
            if !(s.sigma.is_finite() && s.sigma >= 0.0) {
                return Err(invalid(format!("segment {i}: sigma must be non-negative")));
            }
            if !s.r.is_finite() {
                return Err(invalid(format!("segment {i}: r must be finite")));
            }
        }
        Ok(PathSpec { spot, segments })
    }

    pub fn constant(spot: f64, tau: f64, sigma: f64, r: f64) -> Result<Self> {
        Self::new(spot, vec![Segment { dt: tau, sigma, r }])
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        order_free_sum(self.segments.iter().map(|s| s.dt).collect())
    }

    /// Segment boundaries `0 = t_0 < t_1 < ... < t_n = tau`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut t = 0.0;
        std::iter::once(0.0)
            .chain(self.segments.iter().map(|s| {
                t += s.dt;
                t
            }))
            .collect()
    }

    /// `∫ sigma(s)^2 ds` over the whole horizon.
    pub fn variance_integral(&self) -> f64 {
        order_free_sum(self.segments.iter().map(|s| s.sigma * s.sigma * s.dt).collect())
    }

    /// `∫ r(s) ds` over the whole horizon.
    pub fn rate_integral(&self) -> f64 {
        order_free_sum(self.segments.iter().map(|s| s.r * s.dt).collect())
    }

    pub fn averaged_params(&self) -> AveragedParams {
        let tau = self.horizon();
        AveragedParams { variance: self.variance_integral() / tau, rate: self.rate_integral() / tau }
    }

    /// The same curves with segments reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.segments.len()];
        if order.len() != seen.len() || order.iter().any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true))
        {
            return Err(invalid("order must be a permutation of the segment indices"));
        }
        Self::new(self.spot, order.iter().map(|&i| self.segments[i]).collect())
    }

    /// Black–Scholes price at `(sqrt(v), rho)`.
    pub fn analytic_price(&self, kind: OptionKind, strike: f64) -> Result<f64> {
        let avg = self.averaged_params();
        bs_price(kind, &BsInputs::new(self.spot, strike, self.horizon(), avg.variance.sqrt(), avg.rate)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    /// Pair every draw with its negation; the standard error is computed on
    /// pair averages.
    pub antithetic: bool,
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64),
        }
    }
}

/// Discounted expected payoff under the risk-neutral measure.
pub fn mc_discounted_payoff(
    spec: &PathSpec,
    kind: OptionKind,
    strike: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_discounted_payoff_with(spec, kind, strike, n_paths, seed, McOptions::default())
}

pub fn mc_discounted_payoff_with(
    spec: &PathSpec,
    kind: OptionKind,
    strike: f64,
    n_paths: usize,
    seed: u64,
    options: McOptions,
) -> Result<McEstimate> {
    if n_paths < MIN_PATHS {
        return Err(invalid(format!("need at least {MIN_PATHS} paths, got {n_paths}")));
    }
    if !(strike.is_finite() && strike > 0.0) {
        return Err(invalid(format!("strike must be positive, got {strike}")));
    }
    let rate_integral = spec.rate_integral();
    let discount = (-rate_integral).exp();
    let drift = order_free_sum(spec.segments.iter().map(|s| s.r * s.dt - 0.5 * s.sigma * s.sigma * s.dt).collect());
    let log_spot = spec.spot.ln() + drift;
    let vols: Vec<f64> = spec.segments.iter().map(|s| s.sigma * s.dt.sqrt()).collect();
    let payoff = |shock: f64| discount * kind.payoff((log_spot + shock).exp(), strike);

    let samples = if options.antithetic { n_paths.div_ceil(2) } else { n_paths };
    let chunks = samples.div_ceil(CHUNK);
    let stats = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut m = Moments::default();
            for _ in 0..count {
                let shock: f64 = vols
                    .iter()
                    .map(|v| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        v * z
                    })
                    .sum();
                let x = if options.antithetic { 0.5 * (payoff(shock) + payoff(-shock)) } else { payoff(shock) };
                m.push(x);
            }
            m
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);

    let variance = if stats.n > 1 { stats.m2 / (stats.n - 1) as f64 } else { 0.0 };
    Ok(McEstimate {
        mean: stats.mean,
        std_error: (variance / stats.n as f64).sqrt(),
        n_paths: if options.antithetic { 2 * samples } else { samples },
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingReport {
    pub mc: McEstimate,
    pub analytic: f64,
    pub z_score: f64,
}

/// Compares the simulated price with the Black–Scholes price at the
/// averaged parameters.
pub fn averaging_check(
    spec: &PathSpec,
    kind: OptionKind,
    strike: f64,
    n_paths: usize,
    seed: u64,
) -> Result<AveragingReport> {
    averaging_check_with(spec, kind, strike, n_paths, seed, McOptions::default())
}

pub fn averaging_check_with(
    spec: &PathSpec,
    kind: OptionKind,
    strike: f64,
    n_paths: usize,
    seed: u64,
    options: McOptions,
) -> Result<AveragingReport> {
    let mc = mc_discounted_payoff_with(spec, kind, strike, n_paths, seed, options)?;
    let analytic = spec.analytic_price(kind, strike)?;
    let diff = mc.mean - analytic;
    let z_score = if mc.std_error > 0.0 {
        diff / mc.std_error
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Ok(AveragingReport { mc, analytic, z_score })
}
