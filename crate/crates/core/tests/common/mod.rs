#![allow(dead_code)]

pub mod oracle;

use rand::Rng;

/// A constant-parameter instance with two call strikes at least 10% apart.
#[derive(Debug, Clone, Copy)]
pub struct PairInstance {
    pub sigma: f64,
    pub rho: f64,
    pub tau: f64,
    pub k1: f64,
    pub k2: f64,
}

/// Strikes straddle the forward within one total standard deviation, with a
/// log spread of at least `ln 1.1` and up to 1.5 standard deviations.
pub fn pair_instance(rng: &mut impl Rng, tau_range: (f64, f64)) -> PairInstance {
    let sigma = rng.random_range(0.05..=2.0);
    let rho = rng.random_range(-0.2..=0.5);
    let tau = rng.random_range(tau_range.0..=tau_range.1);
    let (k1, k2) = strike_pair(rng, sigma, rho, tau);
    PairInstance { sigma, rho, tau, k1, k2 }
}

pub fn strike_pair(rng: &mut impl Rng, sigma: f64, rho: f64, tau: f64) -> (f64, f64) {
    let s = sigma * tau.sqrt();
    let centre = rng.random_range(-s..=s);
    let half = (0.5 * 1.1f64.ln()).max(rng.random_range(0.5..=1.0) * 1.5 * s);
    let forward = (rho * tau).exp();
    (forward * (centre - half).exp(), forward * (centre + half).exp())
}
