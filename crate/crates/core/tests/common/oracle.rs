//! Reference computations for tests. Nothing here calls the crate's pricing
//! or solving code, including its normal CDF.

use std::f64::consts::{PI, SQRT_2};

/// `erfc` from the positive-term series `erf(x) = 2/sqrt(pi) e^{-x^2}
/// sum 2^n x^{2n+1} / (2n+1)!!` below 3 and a Lentz continued fraction above.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 3.0 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term > 1e-18 * sum {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        return 1.0 - 2.0 / PI.sqrt() * (-x * x).exp() * sum;
    }
    // erfc(x) = e^{-x^2}/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for i in 1..500 {
        let a = 0.5 * i as f64;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / PI.sqrt() / f
}

pub fn ncdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Closed-form Black–Scholes on an independent CDF; puts are priced
/// directly, not through parity.
pub fn bs_closed(call: bool, x: f64, k: f64, tau: f64, sigma: f64, r: f64) -> f64 {
    let df = (-r * tau).exp();
    let sd = sigma * tau.sqrt();
    let dp = ((x / k).ln() + r * tau) / sd + 0.5 * sd;
    let dm = dp - sd;
    if call {
        x * ncdf(dp) - k * df * ncdf(dm)
    } else {
        k * df * ncdf(-dm) - x * ncdf(-dp)
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson on unit-width pieces of `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let pieces = ((b - a).ceil() as usize).max(1);
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = if i + 1 == pieces { b } else { lo + h };
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            adapt(&f, lo, hi, fa, fm, fb, simpson(lo, hi, fa, fm, fb), tol / pieces as f64, 50)
        })
        .sum()
}

/// Discounted expected payoff under a lognormal terminal law, integrated
/// over the standard normal shock and split at the payoff kink.
pub fn bs_integral(call: bool, x: f64, k: f64, tau: f64, sigma: f64, r: f64) -> f64 {
    let s = sigma * tau.sqrt();
    let m = x.ln() + r * tau - 0.5 * s * s;
    let kink = (k.ln() - m) / s;
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    let terminal = |z: f64| (m + s * z).exp();
    // the call integrand peaks near z = s; 40 further units leave < e^-800
    let value = if call {
        let lo = kink.max(-40.0);
        integrate(|z| (terminal(z) - k) * density(z), lo, lo.max(s) + 40.0, 1e-14)
    } else {
        let hi = kink.min(40.0);
        integrate(|z| (k - terminal(z)) * density(z), -40.0, hi, 1e-14)
    };
    (-r * tau).exp() * value.max(0.0)
}

/// A two-state (or n-state) mixture priced with the oracle kernel.
pub fn mixture_closed(states: &[(f64, f64, f64)], x: f64, k: f64, tau: f64) -> f64 {
    states.iter().map(|&(p, sigma, r)| p * bs_closed(true, x, k, tau, sigma, r)).sum()
}

pub const HIGH_RATE: [(f64, f64, f64); 2] = [(0.5, 0.3, 0.1), (0.5, 0.7, 0.08)];
pub const LOW_RATE: [(f64, f64, f64); 2] = [(0.5, 0.3, 0.01), (0.5, 0.7, 0.08)];

#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub sigma: f64,
    pub rho: f64,
    /// Bisection steps spent on the rate.
    pub steps: usize,
    pub residuals: [f64; 2],
}

/// Volatility matching a unit-spot call price at a fixed rate, by plain
/// bisection on `sigma_box`; `None` when the price is outside the range.
fn vol_at(k: f64, p: f64, tau: f64, rho: f64, sigma_box: (f64, f64)) -> Option<f64> {
    let c = |sigma: f64| bs_closed(true, 1.0, k, tau, sigma, rho) - p;
    let (mut a, mut b) = sigma_box;
    if !(c(a) < 0.0 && c(b) > 0.0) {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if c(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Solves `C(k_i; sigma, rho) = p_i` (unit spot, calls). The rate box is
/// sampled on a dense grid, the first quote fixes `sigma` by bisection, and
/// every sign change of the second residual is bisected to machine
/// precision. Edges of the admissible rate set are located by bisection too.
pub fn scan_bisect_pair(quotes: [(f64, f64); 2], tau: f64, sigma_box: (f64, f64), rho_box: (f64, f64)) -> Vec<Root> {
    let sample = |rho: f64| {
        vol_at(quotes[0].0, quotes[0].1, tau, rho, sigma_box)
            .map(|sigma| (rho, bs_closed(true, 1.0, quotes[1].0, tau, sigma, rho) - quotes[1].1))
    };
    let grid_n = 4000;
    let grid: Vec<f64> = (0..=grid_n).map(|i| rho_box.0 + (rho_box.1 - rho_box.0) * i as f64 / grid_n as f64).collect();
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for w in grid.windows(2) {
        let (a, b) = (sample(w[0]), sample(w[1]));
        if let Some(s) = a {
            if samples.last() != Some(&s) {
                samples.push(s);
            }
        }
        // one end admissible and the other not: walk to the boundary
        if a.is_some() != b.is_some() {
            let (mut good, mut bad) = if a.is_some() { (w[0], w[1]) } else { (w[1], w[0]) };
            let mut edge = None;
            for _ in 0..200 {
                let m = 0.5 * (good + bad);
                if m == good || m == bad {
                    break;
                }
                match sample(m) {
                    Some(s) => {
                        edge = Some(s);
                        good = m;
                    }
                    None => bad = m,
                }
            }
            if let Some(s) = edge {
                samples.push(s);
            }
        }
    }
    if let Some(s) = sample(rho_box.1) {
        samples.push(s);
    }
    samples.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut roots: Vec<Root> = Vec::new();
    for w in samples.windows(2) {
        let ((mut a, ga), (mut b, gb)) = (w[0], w[1]);
        if ga == 0.0 || ga.signum() == gb.signum() {
            continue;
        }
        let mut steps = 0;
        while steps < 200 {
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            steps += 1;
            match sample(m) {
                Some((_, g)) if g.signum() == ga.signum() => a = m,
                Some(_) => b = m,
                None => break,
            }
        }
        let rho = 0.5 * (a + b);
        let Some(sigma) = vol_at(quotes[0].0, quotes[0].1, tau, rho, sigma_box) else { continue };
        let residuals = [
            bs_closed(true, 1.0, quotes[0].0, tau, sigma, rho) - quotes[0].1,
            bs_closed(true, 1.0, quotes[1].0, tau, sigma, rho) - quotes[1].1,
        ];
        if residuals.iter().all(|r| r.abs() < 1e-12) {
            roots.push(Root { sigma, rho, steps, residuals });
        }
    }
    roots
}

/// Brute-force lattice price: sums over all `2^n` up/down sequences.
pub fn lattice_enumerate(call: bool, rho: f64, eps: f64, n: u32, spot: f64, k: f64) -> f64 {
    let q = (1.0 - eps) / (2.0 - eps);
    let (up, down) = (1.0 / (1.0 - eps), 1.0 - eps);
    let mut total = 0.0;
    for path in 0u32..(1 << n) {
        let mut s = spot;
        let mut prob = 1.0;
        for step in 0..n {
            if path >> step & 1 == 1 {
                s *= rho * up;
                prob *= q;
            } else {
                s *= rho * down;
                prob *= 1.0 - q;
            }
        }
        let payoff = if call { (s - k).max(0.0) } else { (k - s).max(0.0) };
        total += prob * payoff;
    }
    total / rho.powi(n as i32)
}
