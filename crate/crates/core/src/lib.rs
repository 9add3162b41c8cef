//! Joint calibration of the implied volatility and the implied average
//! forward risk-free rate from pairs of option prices.
//!
//! The ordinary implied volatility depends on an assumed future rate. Two
//! quotes with the same expiry pin down both the volatility and the average
//! rate at once; [`calibrate::implied_pair`] solves that system. The rest of
//! the crate provides the models used to generate and check such quotes:
//!
//! * [`bs`]: Black–Scholes kernel (normal CDF, `d±`, prices, vega).
//! * [`mixture`]: discrete risk-neutral mixtures over `(sigma, r)` states.
//! * [`binomial`]: the `(rho, eps)` lattice, its implied pair and a
//!   perturbed continuous-price sampler.
//! * [`mc`]: Monte Carlo pricing under piecewise-constant curves.
//! * [`surface`]: implied-pair surfaces and smile slices with CSV output.
//!
//! ```
//! use implied_pair::{bs_price, implied_pair, BsInputs, OptionKind, OptionQuote, SolverConfig};
//!
//! let price = |k: f64| bs_price(OptionKind::Call, &BsInputs::new(1.0, k, 1.0, 0.3, 0.05).unwrap()).unwrap();
//! let q1 = OptionQuote::call(0.9, 1.0, price(0.9)).unwrap();
//! let q2 = OptionQuote::call(1.1, 1.0, price(1.1)).unwrap();
//! let pair = implied_pair(&q1, &q2, 1.0, &SolverConfig::default()).unwrap();
//! assert!((pair.sigma_imp - 0.3).abs() < 1e-9);
//! assert!((pair.rho_imp - 0.05).abs() < 1e-9);
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binomial;
pub mod bs;
pub mod calibrate;
pub mod error;
pub mod mc;
pub mod mixture;
mod roots;
pub mod surface;

pub use binomial::{binomial_price, implied_rho_eps, perturbed_sample_paths, risk_neutral_prob, BinomialModel};
pub use bs::{bs_price, d_pair, norm_cdf, normalized_price, vega, BsInputs, OptionKind};
pub use calibrate::{
    check_arbitrage_box, implied_pair, implied_pair_normalized, implied_vol_given_rho, term_structure_triple,
    ImpliedPair, OptionQuote, SolveStatus, SolverConfig,
};
pub use error::{Error, Result};
pub use mc::{averaging_check, mc_discounted_payoff, PathSpec};
pub use mixture::{mixture_price, quote_pair, MixtureModel, MixtureState};
pub use surface::{implied_surface, smile_slice, SurfaceGrid};
