//! Discrete risk-neutral mixture over constant `(sigma, r)` states.
//!
//! When volatility and rate are random but independent of the driving noise
//! and constant over the option's life, the option price is the
//! probability-weighted average of Black–Scholes prices across states.

use serde::{Deserialize, Serialize};

use crate::bs::{bs_price, BsInputs, OptionKind};
use crate::calibrate::OptionQuote;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    #[serde(rename = "p")]
    pub weight: f64,
    pub sigma: f64,
    #[serde(rename = "r")]
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MixtureModelDoc {
    spot: f64,
    tau: f64,
    states: Vec<MixtureState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureModelDoc", into = "MixtureModelDoc")]
pub struct MixtureModel {
    spot: f64,
    tau: f64,
    states: Vec<MixtureState>,
}

impl TryFrom<MixtureModelDoc> for MixtureModel {
    type Error = Error;

    fn try_from(doc: MixtureModelDoc) -> Result<Self> {
        MixtureModel::new(doc.spot, doc.tau, doc.states)
    }
}

impl From<MixtureModel> for MixtureModelDoc {
    fn from(m: MixtureModel) -> Self {
        MixtureModelDoc { spot: m.spot, tau: m.tau, states: m.states }
    }
}

/// Named parameter sets. `high-rate` and `low-rate` differ only in the
/// first state's rate (0.1 vs 0.01).
pub const PRESET_NAMES: [&str; 2] = ["high-rate", "low-rate"];

impl MixtureModel {
    pub fn new(spot: f64, tau: f64, states: Vec<MixtureState>) -> Result<Self> {
        if !(spot.is_finite() && spot > 0.0) {
            return Err(invalid(format!("spot must be positive, got {spot}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(invalid(format!("tau must be positive, got {tau}")));
        }
        if states.is_empty() {
            return Err(invalid("mixture needs at least one state"));
        }
        for (i, s) in states.iter().enumerate() {
            if !(s.weight.is_finite() && s.weight >= 0.0) {
                return Err(invalid(format!("state {i}: weight must be non-negative")));
            }
            if !(s.sigma.is_finite() && s.sigma > 0.0) {
                return Err(invalid(format!("state {i}: sigma must be positive")));
            }
            if !s.rate.is_finite() {
                return Err(invalid(format!("state {i}: rate must be finite")));
            }
        }
        let total: f64 = states.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("state weights sum to {total}, expected 1")));
        }
        Ok(MixtureModel { spot, tau, states })
    }

    /// Two-state model: `(sigma1, r1)` with probability `p`, `(sigma2, r2)`
    /// otherwise.
    pub fn two_point(p: f64, first: (f64, f64), second: (f64, f64), spot: f64, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("p must lie in [0, 1], got {p}")));
        }
        Self::new(
            spot,
            tau,
            vec![
                MixtureState { weight: p, sigma: first.0, rate: first.1 },
                MixtureState { weight: 1.0 - p, sigma: second.0, rate: second.1 },
            ],
        )
    }

    /// Single-state model, identical to plain Black–Scholes.
    pub fn constant(sigma: f64, rate: f64, spot: f64, tau: f64) -> Result<Self> {
        Self::new(spot, tau, vec![MixtureState { weight: 1.0, sigma, rate }])
    }

    /// `p = 0.5`, `sigma = (0.3, 0.7)`, `r = (0.1, 0.08)`, `S0 = 1`, `tau = 1`.
    pub fn high_rate() -> Self {
        Self::two_point(0.5, (0.3, 0.1), (0.7, 0.08), 1.0, 1.0).expect("valid preset")
    }

    /// Same as [`MixtureModel::high_rate`] with `r1 = 0.01`.
    pub fn low_rate() -> Self {
        Self::two_point(0.5, (0.3, 0.01), (0.7, 0.08), 1.0, 1.0).expect("valid preset")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "high-rate" => Ok(Self::high_rate()),
            "low-rate" => Ok(Self::low_rate()),
            other => Err(invalid(format!("unknown preset '{other}' (expected one of {PRESET_NAMES:?})"))),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn states(&self) -> &[MixtureState] {
        &self.states
    }

    pub fn price(&self, kind: OptionKind, strike: f64) -> Result<f64> {
        mixture_price(self, kind, strike)
    }
}

/// Probability-weighted Black–Scholes price across the mixture states.
pub fn mixture_price(model: &MixtureModel, kind: OptionKind, strike: f64) -> Result<f64> {
    let mut terms = model
        .states
        .iter()
        .map(|s| {
            let inputs = BsInputs::new(model.spot, strike, model.tau, s.sigma, s.rate)?;
            Ok(s.weight * bs_price(kind, &inputs)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    // summing in sorted order makes the result independent of state order
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum())
}

/// Two quotes at distinct strikes priced off the same mixture.
pub fn quote_pair(model: &MixtureModel, kind: OptionKind, k1: f64, k2: f64) -> Result<(OptionQuote, OptionQuote)> {
    if k1 == k2 {
        return Err(Error::IdenticalStrikes);
    }
    let q1 = OptionQuote::new(kind, k1, model.tau, mixture_price(model, kind, k1)?)?;
    let q2 = OptionQuote::new(kind, k2, model.tau, mixture_price(model, kind, k2)?)?;
    Ok((q1, q2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{implied_pair, SolverConfig};
    use proptest::prelude::*;

    fn bs(kind: OptionKind, k: f64, sigma: f64, r: f64) -> f64 {
        bs_price(kind, &BsInputs::new(1.0, k, 1.0, sigma, r).unwrap()).unwrap()
    }

    #[test]
    fn single_state_is_black_scholes() {
        let m = MixtureModel::constant(0.3, 0.05, 1.0, 1.0).unwrap();
        for k in [0.7, 1.0, 1.3] {
            assert_eq!(m.price(OptionKind::Call, k).unwrap(), bs(OptionKind::Call, k, 0.3, 0.05));
            assert_eq!(m.price(OptionKind::Put, k).unwrap(), bs(OptionKind::Put, k, 0.3, 0.05));
        }
    }

    #[test]
    fn identical_states_collapse() {
        let m = MixtureModel::two_point(0.4, (0.3, 0.05), (0.3, 0.05), 1.0, 1.0).unwrap();
        let p = m.price(OptionKind::Call, 1.1).unwrap();
        assert!((p - bs(OptionKind::Call, 1.1, 0.3, 0.05)).abs() < 1e-16);
    }

    #[test]
    fn high_rate_at_the_money() {
        // mpmath lognormal quadrature of each state at 40 digits, averaged
        let p = MixtureModel::high_rate().price(OptionKind::Call, 1.0).unwrap();
        assert!((p - 0.235_285_487_990_296_76).abs() < 1e-14);
        let p = MixtureModel::high_rate().price(OptionKind::Call, 0.8).unwrap();
        assert!((p - 0.341_915_987_539_746).abs() < 1e-14);
    }

    #[test]
    fn presets_and_validation() {
        assert_eq!(MixtureModel::preset("high-rate").unwrap(), MixtureModel::high_rate());
        assert_eq!(MixtureModel::low_rate().states()[0].rate, 0.01);
        assert!(MixtureModel::preset("nope").is_err());
        let bad = vec![
            MixtureState { weight: 0.5, sigma: 0.3, rate: 0.0 },
            MixtureState { weight: 0.6, sigma: 0.3, rate: 0.0 },
        ];
        assert!(MixtureModel::new(1.0, 1.0, bad).is_err());
        assert!(MixtureModel::new(1.0, 1.0, vec![]).is_err());
        assert!(MixtureModel::two_point(1.2, (0.3, 0.0), (0.4, 0.0), 1.0, 1.0).is_err());
        assert!(MixtureModel::constant(-0.3, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn json_schema() {
        let doc = r#"{"spot": 1.0, "tau": 1.0, "states": [
            {"p": 0.5, "sigma": 0.3, "r": 0.1}, {"p": 0.5, "sigma": 0.7, "r": 0.08}]}"#;
        let m = MixtureModel::from_json_str(doc).unwrap();
        assert_eq!(m, MixtureModel::high_rate());
        assert_eq!(MixtureModel::from_json_str(&m.to_json_string()).unwrap(), m);
        let bad = r#"{"spot": 1.0, "tau": 1.0, "states": [{"p": 0.7, "sigma": 0.3, "r": 0.1}]}"#;
        assert!(matches!(MixtureModel::from_json_str(bad), Err(Error::Parse(_))));
    }

    #[test]
    fn quote_pair_examples() {
        let m = MixtureModel::high_rate();
        let (q1, q2) = quote_pair(&m, OptionKind::Call, 0.9, 1.1).unwrap();
        assert_eq!(q1.price, m.price(OptionKind::Call, 0.9).unwrap());
        assert_eq!(q2.price, m.price(OptionKind::Call, 1.1).unwrap());
        assert_eq!(q1.tau, 1.0);
        assert_eq!(quote_pair(&m, OptionKind::Call, 1.0, 1.0).unwrap_err(), Error::IdenticalStrikes);

        let flat = MixtureModel::constant(0.3, 0.05, 1.0, 1.0).unwrap();
        let (q1, q2) = quote_pair(&flat, OptionKind::Call, 0.9, 1.1).unwrap();
        let pair = implied_pair(&q1, &q2, 1.0, &SolverConfig::default()).unwrap();
        assert!((pair.sigma_imp - 0.3).abs() < 1e-9);
        assert!((pair.rho_imp - 0.05).abs() < 1e-9);
    }

    #[test]
    fn weight_limit_continuity() {
        let m = MixtureModel::two_point(1.0 - 1e-9, (0.3, 0.1), (0.7, 0.08), 1.0, 1.0).unwrap();
        let p = m.price(OptionKind::Call, 1.0).unwrap();
        assert!((p - bs(OptionKind::Call, 1.0, 0.3, 0.1)).abs() < 1e-7);
    }

    fn arb_model() -> impl Strategy<Value = MixtureModel> {
        proptest::collection::vec((0.01f64..1.0, 0.05f64..1.5, -0.1f64..0.3), 1..5).prop_map(|raw| {
            let total: f64 = raw.iter().map(|r| r.0).sum();
            let mut states: Vec<MixtureState> =
                raw.iter().map(|&(w, sigma, rate)| MixtureState { weight: w / total, sigma, rate }).collect();
            let rest: f64 = states[1..].iter().map(|s| s.weight).sum();
            states[0].weight = 1.0 - rest;
            MixtureModel::new(1.0, 1.0, states).unwrap()
        })
    }

    proptest! {
        #[test]
        fn convex_combination_bounds(m in arb_model(), k in 0.5f64..1.8) {
            let p = m.price(OptionKind::Call, k).unwrap();
            let each: Vec<f64> = m.states().iter().map(|s| bs(OptionKind::Call, k, s.sigma, s.rate)).collect();
            let lo = each.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = each.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p >= lo - 1e-15 && p <= hi + 1e-15);
        }

        #[test]
        fn permutation_invariant(m in arb_model(), k in 0.5f64..1.8, seed in 0usize..100) {
            let mut states = m.states().to_vec();
            let shift = seed % states.len();
            states.rotate_left(shift);
            states.reverse();
            let permuted = MixtureModel::new(m.spot(), m.tau(), states).unwrap();
            for kind in [OptionKind::Call, OptionKind::Put] {
                prop_assert_eq!(m.price(kind, k).unwrap(), permuted.price(kind, k).unwrap());
            }
        }

        #[test]
        fn call_decreasing_in_strike(m in arb_model(), k in 0.5f64..1.8) {
            prop_assert!(m.price(OptionKind::Call, k + 1e-3).unwrap() < m.price(OptionKind::Call, k).unwrap());
        }
    }
}
