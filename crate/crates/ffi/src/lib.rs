//! C ABI for the `implied-pair` crate.
//!
//! Every fallible function returns an `IpStatus` and writes its result
//! through an out-pointer. On failure the out-pointer is left untouched and
//! `ip_last_error_message` describes the error on the calling thread.
//! Option kinds are passed as plain integers (`IP_CALL`, `IP_PUT`).
//!
//! Handles (`IpMixture`, `IpSurface`) are opaque and must be released
//! with their `_free` function. Strings returned by the library are released
//! with `ip_string_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use implied_pair::binomial::{binomial_price, implied_rho_eps, BinomialModel};
use implied_pair::calibrate::{
    implied_pair, implied_pair_normalized, term_structure_triple, ImpliedPair, OptionQuote, SolveStatus, SolverConfig,
};
use implied_pair::mc::{averaging_check, PathSpec};
use implied_pair::mixture::{MixtureModel, MixtureState};
use implied_pair::surface::{implied_surface, CellStatus, SurfaceGrid};
use implied_pair::{bs_price, norm_cdf, vega, BsInputs, Error, OptionKind};

pub const IP_CALL: i32 = 0;
pub const IP_PUT: i32 = 1;

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpStatus {
    Ok = 0,
    InvalidInput = 1,
    NullPointer = 2,
    Degenerate = 3,
    IdenticalStrikes = 4,
    PriceOutOfBounds = 5,
    BracketExhausted = 6,
    NoRoot = 7,
    MultipleRoots = 8,
    InnerFailure = 9,
    Unconverged = 10,
    TooManyPeriods = 11,
    Io = 12,
    Parse = 13,
    Panic = 14,
}

impl From<&Error> for IpStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => IpStatus::InvalidInput,
            Error::DegenerateInputs(_) => IpStatus::Degenerate,
            Error::IdenticalStrikes => IpStatus::IdenticalStrikes,
            Error::PriceOutOfBounds { .. } => IpStatus::PriceOutOfBounds,
            Error::BracketExhausted { .. } => IpStatus::BracketExhausted,
            Error::NoRoot { .. } => IpStatus::NoRoot,
            Error::MultipleRoots { .. } => IpStatus::MultipleRoots,
            Error::InnerFailure(_) => IpStatus::InnerFailure,
            Error::Unconverged { .. } => IpStatus::Unconverged,
            Error::TooManyPeriods { .. } => IpStatus::TooManyPeriods,
            Error::Io(_) => IpStatus::Io,
            Error::Parse(_) => IpStatus::Parse,
        }
    }
}

/// Solver settings; obtain defaults from `ip_solver_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IpSolverConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub price_tol: f64,
    pub max_iter: u32,
    pub scan_points: u32,
}

impl From<SolverConfig> for IpSolverConfig {
    fn from(c: SolverConfig) -> Self {
        IpSolverConfig {
            sigma_min: c.sigma_bracket.0,
            sigma_max: c.sigma_bracket.1,
            rho_min: c.rho_bracket.0,
            rho_max: c.rho_bracket.1,
            price_tol: c.price_tol,
            max_iter: c.max_iter as u32,
            scan_points: c.outer_scan_points as u32,
        }
    }
}

impl From<&IpSolverConfig> for SolverConfig {
    fn from(c: &IpSolverConfig) -> Self {
        SolverConfig {
            sigma_bracket: (c.sigma_min, c.sigma_max),
            rho_bracket: (c.rho_min, c.rho_max),
            price_tol: c.price_tol,
            max_iter: c.max_iter as usize,
            outer_scan_points: c.scan_points as usize,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IpQuote {
    /// `IP_CALL` or `IP_PUT`.
    pub kind: i32,
    pub strike: f64,
    pub tau: f64,
    pub price: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IpImpliedPair {
    pub sigma_imp: f64,
    pub rho_imp: f64,
    pub residual1: f64,
    pub residual2: f64,
    pub outer_iterations: u32,
    pub inner_iterations: u32,
    /// 1 when both residuals are within the price tolerance.
    pub converged: i32,
}

impl From<&ImpliedPair> for IpImpliedPair {
    fn from(p: &ImpliedPair) -> Self {
        IpImpliedPair {
            sigma_imp: p.sigma_imp,
            rho_imp: p.rho_imp,
            residual1: p.residuals[0],
            residual2: p.residuals[1],
            outer_iterations: p.iterations.outer as u32,
            inner_iterations: p.iterations.inner as u32,
            converged: (p.status == SolveStatus::Converged) as i32,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IpTermStructure {
    pub sigma_short: f64,
    pub sigma_long: f64,
    pub rho: f64,
    pub residuals: [f64; 3],
    pub converged: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IpImpliedLattice {
    pub rho: f64,
    pub eps: f64,
    pub residual1: f64,
    pub residual2: f64,
    pub converged: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IpAveragingReport {
    pub mc_mean: f64,
    pub std_error: f64,
    pub analytic: f64,
    pub z_score: f64,
    pub n_paths: u64,
}

/// One surface cell. `status` uses `IpCellStatus` values; parameters are
/// NaN for cells without a root.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IpSurfaceCell {
    pub k1: f64,
    pub k2: f64,
    pub sigma_imp: f64,
    pub rho_imp: f64,
    pub status: i32,
    pub iterations: u32,
    pub residual1: f64,
    pub residual2: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpCellStatus {
    Converged = 0,
    NoRoot = 1,
    MultipleRoots = 2,
    Degenerate = 3,
    InnerFailure = 4,
    Unconverged = 5,
}

impl From<CellStatus> for IpCellStatus {
    fn from(s: CellStatus) -> Self {
        match s {
            CellStatus::Converged => IpCellStatus::Converged,
            CellStatus::NoRoot => IpCellStatus::NoRoot,
            CellStatus::MultipleRoots => IpCellStatus::MultipleRoots,
            CellStatus::Degenerate => IpCellStatus::Degenerate,
            CellStatus::InnerFailure => IpCellStatus::InnerFailure,
            CellStatus::Unconverged => IpCellStatus::Unconverged,
        }
    }
}

/// Opaque mixture model.
pub struct IpMixture(MixtureModel);

/// Opaque calibrated surface.
pub struct IpSurface(SurfaceGrid);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    // interior NULs would truncate the message anyway
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            IpStatus::Ok
        }
        Ok(Err(Fail::Lib(e))) => {
            let status = IpStatus::from(&e);
            let msg = match &e {
                Error::MultipleRoots { roots } => {
                    let list: Vec<String> = roots.iter().map(|r| format!("({}, {})", r.inner, r.rate)).collect();
                    format!("{e}: {}", list.join(", "))
                }
                _ => e.to_string(),
            };
            set_last_error(msg);
            status
        }
        Ok(Err(Fail::Null(name))) => {
            set_last_error(format!("null pointer: {name}"));
            IpStatus::NullPointer
        }
        Err(_) => {
            set_last_error("internal panic".into());
            IpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(name))
}

fn kind_of(kind: i32) -> Result<OptionKind, Error> {
    match kind {
        IP_CALL => Ok(OptionKind::Call),
        IP_PUT => Ok(OptionKind::Put),
        other => Err(Error::InvalidInput(format!("unknown option kind {other}"))),
    }
}

unsafe fn config_or_default(cfg: *const IpSolverConfig, fallback: SolverConfig) -> SolverConfig {
    cfg.as_ref().map_or(fallback, SolverConfig::from)
}

unsafe fn c_str<'a>(s: *const c_char, name: &'static str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Fail::Lib(Error::InvalidInput(format!("{name} is not UTF-8"))))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, name: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn quote(q: &IpQuote) -> Result<OptionQuote, Error> {
    OptionQuote::new(kind_of(q.kind)?, q.strike, q.tau, q.price)
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn ip_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ip_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn ip_norm_cdf(z: f64) -> f64 {
    norm_cdf(z)
}

#[no_mangle]
pub extern "C" fn ip_solver_config_default() -> IpSolverConfig {
    SolverConfig::default().into()
}

/// Default search box for `ip_binomial_implied`: `sigma_*` bounds `eps`.
#[no_mangle]
pub extern "C" fn ip_solver_config_binomial() -> IpSolverConfig {
    SolverConfig::for_binomial().into()
}

#[no_mangle]
pub unsafe extern "C" fn ip_bs_price(
    kind: i32,
    spot: f64,
    strike: f64,
    tau: f64,
    sigma: f64,
    rate: f64,
    out_price: *mut f64,
) -> IpStatus {
    guard(|| {
        let dst = out(out_price, "out_price")?;
        *dst = bs_price(kind_of(kind)?, &BsInputs::new(spot, strike, tau, sigma, rate)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ip_vega(
    spot: f64,
    strike: f64,
    tau: f64,
    sigma: f64,
    rate: f64,
    out_vega: *mut f64,
) -> IpStatus {
    guard(|| {
        let dst = out(out_vega, "out_vega")?;
        *dst = vega(&BsInputs::new(spot, strike, tau, sigma, rate)?)?;
        Ok(())
    })
}

/// Jointly implied volatility and average rate. `cfg` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ip_implied_pair(
    q1: *const IpQuote,
    q2: *const IpQuote,
    spot: f64,
    cfg: *const IpSolverConfig,
    out_pair: *mut IpImpliedPair,
) -> IpStatus {
    guard(|| {
        let (q1, q2) = (quote(deref(q1, "q1")?)?, quote(deref(q2, "q2")?)?);
        let dst = out(out_pair, "out_pair")?;
        let pair = implied_pair(&q1, &q2, spot, &config_or_default(cfg, SolverConfig::default()))?;
        *dst = (&pair).into();
        Ok(())
    })
}

/// Spot-free variant on call prices and strikes divided by the spot.
#[no_mangle]
pub unsafe extern "C" fn ip_implied_pair_normalized(
    g1: f64,
    g2: f64,
    kappa1: f64,
    kappa2: f64,
    tau: f64,
    cfg: *const IpSolverConfig,
    out_pair: *mut IpImpliedPair,
) -> IpStatus {
    guard(|| {
        let dst = out(out_pair, "out_pair")?;
        let cfg = config_or_default(cfg, SolverConfig::default());
        *dst = (&implied_pair_normalized(g1, g2, kappa1, kappa2, tau, &cfg)?).into();
        Ok(())
    })
}

/// Short-expiry quote `q1` plus two quotes `q2`, `q3` sharing a later expiry.
#[no_mangle]
pub unsafe extern "C" fn ip_term_structure_triple(
    q1: *const IpQuote,
    q2: *const IpQuote,
    q3: *const IpQuote,
    spot: f64,
    cfg: *const IpSolverConfig,
    out_fit: *mut IpTermStructure,
) -> IpStatus {
    guard(|| {
        let q1 = quote(deref(q1, "q1")?)?;
        let q2 = quote(deref(q2, "q2")?)?;
        let q3 = quote(deref(q3, "q3")?)?;
        let dst = out(out_fit, "out_fit")?;
        let fit = term_structure_triple(&q1, &q2, &q3, spot, &config_or_default(cfg, SolverConfig::default()))?;
        *dst = IpTermStructure {
            sigma_short: fit.sigma_short,
            sigma_long: fit.sigma_long,
            rho: fit.rho,
            residuals: fit.residuals,
            converged: (fit.status == SolveStatus::Converged) as i32,
        };
        Ok(())
    })
}

/// Builds a mixture from `n` states given as parallel arrays.
#[no_mangle]
pub unsafe extern "C" fn ip_mixture_new(
    spot: f64,
    tau: f64,
    weights: *const f64,
    sigmas: *const f64,
    rates: *const f64,
    n: usize,
    out_model: *mut *mut IpMixture,
) -> IpStatus {
    guard(|| {
        let w = slice(weights, n, "weights")?;
        let s = slice(sigmas, n, "sigmas")?;
        let r = slice(rates, n, "rates")?;
        let dst = out(out_model, "out_model")?;
        let states = (0..n).map(|i| MixtureState { weight: w[i], sigma: s[i], rate: r[i] }).collect();
        *dst = Box::into_raw(Box::new(IpMixture(MixtureModel::new(spot, tau, states)?)));
        Ok(())
    })
}

/// Parses `{"spot", "tau", "states": [{"p", "sigma", "r"}]}`.
#[no_mangle]
pub unsafe extern "C" fn ip_mixture_from_json(json: *const c_char, out_model: *mut *mut IpMixture) -> IpStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let dst = out(out_model, "out_model")?;
        *dst = Box::into_raw(Box::new(IpMixture(MixtureModel::from_json_str(text)?)));
        Ok(())
    })
}

/// `"high-rate"` or `"low-rate"`.
#[no_mangle]
pub unsafe extern "C" fn ip_mixture_preset(name: *const c_char, out_model: *mut *mut IpMixture) -> IpStatus {
    guard(|| {
        let name = c_str(name, "name")?;
        let dst = out(out_model, "out_model")?;
        *dst = Box::into_raw(Box::new(IpMixture(MixtureModel::preset(name)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ip_mixture_price(
    model: *const IpMixture,
    kind: i32,
    strike: f64,
    out_price: *mut f64,
) -> IpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let dst = out(out_price, "out_price")?;
        *dst = m.0.price(kind_of(kind)?, strike)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ip_mixture_free(model: *mut IpMixture) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ip_binomial_price(
    rho: f64,
    eps: f64,
    periods: u32,
    spot: f64,
    kind: i32,
    strike: f64,
    out_price: *mut f64,
) -> IpStatus {
    guard(|| {
        let dst = out(out_price, "out_price")?;
        let model = BinomialModel::new(rho, eps, periods as usize, spot)?;
        *dst = binomial_price(&model, kind_of(kind)?, strike)?;
        Ok(())
    })
}

/// Implied `(rho, eps)` from two lattice call prices. `cfg` may be NULL for
/// `ip_solver_config_binomial`.
#[no_mangle]
pub unsafe extern "C" fn ip_binomial_implied(
    p1: f64,
    p2: f64,
    k1: f64,
    k2: f64,
    spot: f64,
    periods: u32,
    cfg: *const IpSolverConfig,
    out_fit: *mut IpImpliedLattice,
) -> IpStatus {
    guard(|| {
        let dst = out(out_fit, "out_fit")?;
        let cfg = config_or_default(cfg, SolverConfig::for_binomial());
        let fit = implied_rho_eps(p1, p2, k1, k2, spot, periods as usize, &cfg)?;
        *dst = IpImpliedLattice {
            rho: fit.rho,
            eps: fit.eps,
            residual1: fit.residuals[0],
            residual2: fit.residuals[1],
            converged: fit.converged as i32,
        };
        Ok(())
    })
}

/// Monte Carlo price under a piecewise-constant curve against Black–Scholes
/// at the averaged parameters. `spec_json` is `{"spot", "segments": [{"dt", "sigma", "r"}]}`.
#[no_mangle]
pub unsafe extern "C" fn ip_averaging_check(
    spec_json: *const c_char,
    kind: i32,
    strike: f64,
    n_paths: u64,
    seed: u64,
    out_report: *mut IpAveragingReport,
) -> IpStatus {
    guard(|| {
        let spec = PathSpec::from_json_str(c_str(spec_json, "spec_json")?)?;
        let dst = out(out_report, "out_report")?;
        let r = averaging_check(&spec, kind_of(kind)?, strike, n_paths as usize, seed)?;
        *dst = IpAveragingReport {
            mc_mean: r.mc.mean,
            std_error: r.mc.std_error,
            analytic: r.analytic,
            z_score: r.z_score,
            n_paths: r.mc.n_paths as u64,
        };
        Ok(())
    })
}

/// Calibrates every `(k1_axis[i], k2_axis[j])` pair on call quotes from `model`.
#[no_mangle]
pub unsafe extern "C" fn ip_surface_compute(
    model: *const IpMixture,
    k1_axis: *const f64,
    n1: usize,
    k2_axis: *const f64,
    n2: usize,
    cfg: *const IpSolverConfig,
    out_surface: *mut *mut IpSurface,
) -> IpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let k1 = slice(k1_axis, n1, "k1_axis")?;
        let k2 = slice(k2_axis, n2, "k2_axis")?;
        let dst = out(out_surface, "out_surface")?;
        let grid = implied_surface(&m.0, k1, k2, &config_or_default(cfg, SolverConfig::default()))?;
        *dst = Box::into_raw(Box::new(IpSurface(grid)));
        Ok(())
    })
}

/// Number of cells, `n1 * n2`. Zero for NULL.
#[no_mangle]
pub unsafe extern "C" fn ip_surface_cell_count(surface: *const IpSurface) -> usize {
    surface.as_ref().map_or(0, |s| s.0.cells.len())
}

/// Cell `index` in row-major order (k1 outer, k2 inner).
#[no_mangle]
pub unsafe extern "C" fn ip_surface_cell(
    surface: *const IpSurface,
    index: usize,
    out_cell: *mut IpSurfaceCell,
) -> IpStatus {
    guard(|| {
        let s = deref(surface, "surface")?;
        let dst = out(out_cell, "out_cell")?;
        let c = s.0.cells.get(index).ok_or_else(|| {
            Error::InvalidInput(format!("cell index {index} out of range for {} cells", s.0.cells.len()))
        })?;
        *dst = IpSurfaceCell {
            k1: c.k1,
            k2: c.k2,
            sigma_imp: c.sigma_imp,
            rho_imp: c.rho_imp,
            status: IpCellStatus::from(c.status) as i32,
            iterations: c.iterations as u32,
            residual1: c.residuals[0],
            residual2: c.residuals[1],
        };
        Ok(())
    })
}

/// Long-form CSV of the surface; free with `ip_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ip_surface_to_csv(surface: *const IpSurface, out_csv: *mut *mut c_char) -> IpStatus {
    guard(|| {
        let s = deref(surface, "surface")?;
        let dst = out(out_csv, "out_csv")?;
        let mut buf = Vec::new();
        s.0.write_csv(&mut buf)?;
        // CSV text never contains NUL
        *dst = CString::new(buf).map_or(ptr::null_mut(), CString::into_raw);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ip_surface_free(surface: *mut IpSurface) {
    if !surface.is_null() {
        drop(Box::from_raw(surface));
    }
}
