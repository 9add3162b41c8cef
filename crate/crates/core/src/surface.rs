//! Implied-pair surfaces over strike grids and smile slices at a fixed
//! second strike.
//!
//! Each cell prices two calls off a mixture model and calibrates them; cell
//! failures are recorded as statuses and never abort a sweep. Cells are
//! independent and evaluated in parallel, with rows always emitted in
//! `(k1, k2)` order.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs::OptionKind;
use crate::calibrate::{implied_pair, SolveStatus, SolverConfig};
use crate::error::{invalid, Error, Result};
use crate::mixture::{quote_pair, MixtureModel};

pub const CSV_HEADER: &str = "k1,k2,sigma_imp,rho_imp,status,iterations,residual1,residual2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Converged,
    NoRoot,
    MultipleRoots,
    /// Strikes too close for the two equations to be independent.
    Degenerate,
    InnerFailure,
    /// A root was found but a residual exceeds the price tolerance.
    Unconverged,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Converged => "converged",
            CellStatus::NoRoot => "no_root",
            CellStatus::MultipleRoots => "multiple_roots",
            CellStatus::Degenerate => "degenerate",
            CellStatus::InnerFailure => "inner_failure",
            CellStatus::Unconverged => "unconverged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            CellStatus::Converged,
            CellStatus::NoRoot,
            CellStatus::MultipleRoots,
            CellStatus::Degenerate,
            CellStatus::InnerFailure,
            CellStatus::Unconverged,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }

    fn from_error(e: &Error) -> Self {
        match e {
            Error::NoRoot { .. } => CellStatus::NoRoot,
            Error::MultipleRoots { .. } => CellStatus::MultipleRoots,
            Error::IdenticalStrikes | Error::DegenerateInputs(_) => CellStatus::Degenerate,
            Error::Unconverged { .. } => CellStatus::Unconverged,
            _ => CellStatus::InnerFailure,
        }
    }
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One calibrated `(k1, k2)` cell. Parameters are NaN unless a root was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub k1: f64,
    pub k2: f64,
    pub sigma_imp: f64,
    pub rho_imp: f64,
    pub status: CellStatus,
    pub iterations: usize,
    pub residuals: [f64; 2],
}

impl SurfaceCell {
    fn failed(k1: f64, k2: f64, status: CellStatus) -> Self {
        SurfaceCell { k1, k2, sigma_imp: f64::NAN, rho_imp: f64::NAN, status, iterations: 0, residuals: [f64::NAN; 2] }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.k1,
            self.k2,
            self.sigma_imp,
            self.rho_imp,
            self.status,
            self.iterations,
            self.residuals[0],
            self.residuals[1]
        )
    }
}

fn is_degenerate(k1: f64, k2: f64) -> bool {
    (k1 - k2).abs() < 1e-6 * k2
}

/// Calibrates a single `(k1, k2)` cell from call quotes on `model`.
pub fn calibrate_cell(model: &MixtureModel, k1: f64, k2: f64, cfg: &SolverConfig) -> SurfaceCell {
    if is_degenerate(k1, k2) {
        return SurfaceCell::failed(k1, k2, CellStatus::Degenerate);
    }
    let solved =
        quote_pair(model, OptionKind::Call, k1, k2).and_then(|(q1, q2)| implied_pair(&q1, &q2, model.spot(), cfg));
    match solved {
        Ok(pair) => SurfaceCell {
            k1,
            k2,
            sigma_imp: pair.sigma_imp,
            rho_imp: pair.rho_imp,
            status: match pair.status {
                SolveStatus::Converged => CellStatus::Converged,
                SolveStatus::ToleranceNotMet => CellStatus::Unconverged,
            },
            iterations: pair.iterations.outer,
            residuals: pair.residuals,
        },
        Err(e) => SurfaceCell::failed(k1, k2, CellStatus::from_error(&e)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub k1_axis: Vec<f64>,
    pub k2_axis: Vec<f64>,
    /// Row-major: index `i * k2_axis.len() + j` holds `(k1_axis[i], k2_axis[j])`.
    pub cells: Vec<SurfaceCell>,
}

impl SurfaceGrid {
    pub fn cell(&self, i: usize, j: usize) -> &SurfaceCell {
        &self.cells[i * self.k2_axis.len() + j]
    }

    fn matrix(&self, f: impl Fn(&SurfaceCell) -> f64) -> Vec<Vec<f64>> {
        self.cells.chunks(self.k2_axis.len()).map(|row| row.iter().map(&f).collect()).collect()
    }

    pub fn sigma_surface(&self) -> Vec<Vec<f64>> {
        self.matrix(|c| c.sigma_imp)
    }

    pub fn rho_surface(&self) -> Vec<Vec<f64>> {
        self.matrix(|c| c.rho_imp)
    }

    pub fn status_surface(&self) -> Vec<Vec<CellStatus>> {
        self.cells.chunks(self.k2_axis.len()).map(|row| row.iter().map(|c| c.status).collect()).collect()
    }

    /// Cells other than the skipped degenerate ones.
    pub fn computed_count(&self) -> usize {
        self.cells.iter().filter(|c| c.status != CellStatus::Degenerate).count()
    }

    pub fn converged_count(&self) -> usize {
        count_converged(&self.cells)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(&self.cells, out)
    }
}

fn count_converged(cells: &[SurfaceCell]) -> usize {
    cells.iter().filter(|c| c.status == CellStatus::Converged).count()
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(invalid(format!("{name} is empty")));
    }
    if axis.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(invalid(format!("{name} must contain positive strikes")));
    }
    if axis.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

/// Implied `(sigma, rho)` for every `(k1, k2)` pair of the two axes.
pub fn implied_surface(
    model: &MixtureModel,
    k1_axis: &[f64],
    k2_axis: &[f64],
    cfg: &SolverConfig,
) -> Result<SurfaceGrid> {
    check_axis("k1 axis", k1_axis)?;
    check_axis("k2 axis", k2_axis)?;
    cfg.validate()?;
    let n2 = k2_axis.len();
    let cells = (0..k1_axis.len() * n2)
        .into_par_iter()
        .map(|idx| calibrate_cell(model, k1_axis[idx / n2], k2_axis[idx % n2], cfg))
        .collect();
    Ok(SurfaceGrid { k1_axis: k1_axis.to_vec(), k2_axis: k2_axis.to_vec(), cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmileSlice {
    pub k2: f64,
    pub points: Vec<SurfaceCell>,
}

impl SmileSlice {
    pub fn converged_count(&self) -> usize {
        count_converged(&self.points)
    }

    /// Range of `sigma_imp` over converged points.
    pub fn sigma_range(&self) -> Option<(f64, f64)> {
        let mut it = self.points.iter().filter(|c| c.status == CellStatus::Converged).map(|c| c.sigma_imp);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), s| (lo.min(s), hi.max(s))))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(&self.points, out)
    }
}

/// `sigma_imp(k1)` at fixed `k2`.
pub fn smile_slice(model: &MixtureModel, k1_axis: &[f64], k2: f64, cfg: &SolverConfig) -> Result<SmileSlice> {
    check_axis("k1 axis", k1_axis)?;
    if !(k2.is_finite() && k2 > 0.0) {
        return Err(invalid(format!("k2 must be positive, got {k2}")));
    }
    cfg.validate()?;
    let points = k1_axis.par_iter().map(|&k1| calibrate_cell(model, k1, k2, cfg)).collect();
    Ok(SmileSlice { k2, points })
}

/// Writes cells in long form under [`CSV_HEADER`].
pub fn write_csv<W: Write>(cells: &[SurfaceCell], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for c in cells {
        writeln!(out, "{}", c.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a file written by [`write_csv`].
pub fn read_csv(text: &str) -> Result<Vec<SurfaceCell>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Parse(format!("expected 8 fields in '{line}'")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
            Ok(SurfaceCell {
                k1: num(f[0])?,
                k2: num(f[1])?,
                sigma_imp: num(f[2])?,
                rho_imp: num(f[3])?,
                status: CellStatus::parse(f[4]).ok_or_else(|| Error::Parse(format!("unknown status '{}'", f[4])))?,
                iterations: f[5].parse().map_err(|e| Error::Parse(format!("'{}': {e}", f[5])))?,
                residuals: [num(f[6])?, num(f[7])?],
            })
        })
        .collect()
}

/// `start:stop:step` inclusive of `stop` (up to rounding), with values
/// rounded to 12 decimals.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(invalid(format!("range '{spec}' must look like start:stop:step")));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad number '{s}' in range '{spec}'")));
    let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        return Err(invalid(format!("range '{spec}' needs step > 0 and stop >= start")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}
