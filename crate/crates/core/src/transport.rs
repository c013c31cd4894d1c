//! Band-level current bounds near a threshold: inversion of `E_n` below
//! `b_+ Λ_n`, the inf/sup of `E_n'` over the preimage of an energy window,
//! and the `δ`-scaling of the group velocity.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fiber::FiberSolver;
use crate::field::{landau_level, thresholds};
use crate::fit::fit_line;
use crate::format::number;

pub const CSV_HEADER: &str = "delta,k_delta,slope,model_regressor";
/// Target for `|E_n(k) - λ|` in [`k_of_energy`].
pub const ENERGY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWindow {
    pub n: usize,
    pub delta_1: f64,
    pub delta_2: f64,
    threshold: f64,
}

impl EnergyWindow {
    /// `I = (b_+Λ_n - δ₂, b_+Λ_n - δ₁)`, required to sit strictly inside
    /// `(b_-Λ_n, b_+Λ_n)` with no other threshold in it.
    pub fn new(solver: &FiberSolver<'_>, n: usize, delta_1: f64, delta_2: f64) -> Result<Self> {
        let p = solver.profile();
        let lambda = landau_level(n)?;
        if !(delta_1 > 0.0 && delta_1 < delta_2) {
            return Err(Error::InvalidArgument(format!(
                "energy window needs 0 < δ₁ < δ₂, got δ₁={delta_1}, δ₂={delta_2}"
            )));
        }
        let threshold = p.b_plus() * lambda;
        let (lo, hi) = (threshold - delta_2, threshold - delta_1);
        if lo <= p.b_minus() * lambda {
            return Err(Error::Domain {
                value: delta_2,
                reason: format!(
                    "window leaves the band range ({}, {threshold})",
                    p.b_minus() * lambda
                ),
            });
        }
        if let Some(t) = thresholds(p, n + 1).into_iter().find(|&t| t > lo && t < hi) {
            return Err(Error::Domain {
                value: delta_2,
                reason: format!("window contains the threshold {t}"),
            });
        }
        Ok(Self {
            n,
            delta_1,
            delta_2,
            threshold,
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.threshold - self.delta_2, self.threshold - self.delta_1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentBounds {
    pub window: EnergyWindow,
    pub inf_slope: f64,
    pub sup_slope: f64,
    pub k_low: f64,
    pub k_high: f64,
    /// Number of slope samples in the final refinement level.
    pub samples: usize,
}

fn band_energy(solver: &FiberSolver<'_>, k: f64, n: usize) -> Result<f64> {
    Ok(solver.band_value(k, n)?.energy)
}

/// Unique `k` with `E_n(k) = λ`, for `λ` inside the band range.
pub fn k_of_energy(solver: &FiberSolver<'_>, n: usize, energy: f64) -> Result<f64> {
    let p = solver.profile();
    let lambda = landau_level(n)?;
    let (lo_e, hi_e) = (p.b_minus() * lambda, p.b_plus() * lambda);
    if !(energy > lo_e && energy < hi_e) {
        return Err(Error::Domain {
            value: energy,
            reason: format!("band {n} only takes values in ({lo_e}, {hi_e})"),
        });
    }
    let f = |k: f64| band_energy(solver, k, n).map(|e| e - energy);
    // Bracket by stepping outward from the contact frequency (or 0).
    let centre = p.flux_at_contact().unwrap_or(0.0);
    let (mut lo, mut hi) = (centre - 1.0, centre + 1.0);
    let (mut f_lo, mut f_hi) = (f(lo)?, f(hi)?);
    let mut step = 2.0;
    while f_lo > 0.0 {
        hi = lo;
        f_hi = f_lo;
        lo -= step;
        step *= 2.0;
        f_lo = f(lo)?;
        check_bracket(lo, energy)?;
    }
    step = 2.0;
    while f_hi < 0.0 {
        lo = hi;
        f_lo = f_hi;
        hi += step;
        step *= 2.0;
        f_hi = f(hi)?;
        check_bracket(hi, energy)?;
    }
    // Illinois regula falsi with a bisection fallback.
    let mut side = 0;
    for _ in 0..200 {
        let mut k = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(k > lo && k < hi) {
            k = 0.5 * (lo + hi);
        }
        let fk = f(k)?;
        if fk.abs() <= ENERGY_TOLERANCE || hi - lo <= 4.0 * f64::EPSILON * k.abs().max(1.0) {
            return Ok(k);
        }
        if fk < 0.0 {
            lo = k;
            f_lo = fk;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = k;
            f_hi = fk;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::Accuracy(format!(
        "k(λ) did not converge for λ={energy} in band {n}"
    )))
}

fn check_bracket(k: f64, energy: f64) -> Result<()> {
    if k.abs() > 1e7 {
        Err(Error::Accuracy(format!(
            "could not bracket E_n(k) = {energy} for |k| ≤ 1e7"
        )))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KDeltaPoint {
    pub delta: f64,
    pub k_delta: f64,
    /// `(k(δ) - a_∞) / √(b_+ |log δ|)`.
    pub ratio: f64,
}

pub fn k_delta_asymptotic_check(
    solver: &FiberSolver<'_>,
    n: usize,
    deltas: &[f64],
) -> Result<Vec<KDeltaPoint>> {
    let p = solver.profile();
    let a_inf = p.flux_at_contact().ok_or(Error::Unsupported {
        operation: "k_delta_asymptotic_check",
        kind: p.kind_name(),
    })?;
    let threshold = p.b_plus() * landau_level(n)?;
    deltas
        .par_iter()
        .map(|&delta| {
            let k_delta = k_of_energy(solver, n, threshold - delta)?;
            Ok(KDeltaPoint {
                delta,
                k_delta,
                ratio: (k_delta - a_inf) / (p.b_plus() * delta.ln().abs()).sqrt(),
            })
        })
        .collect()
}

fn sample_slopes(solver: &FiberSolver<'_>, n: usize, ks: &[f64]) -> Result<Vec<f64>> {
    ks.par_iter()
        .map(|&k| Ok(solver.band_value(k, n)?.slope))
        .collect()
}

/// Refinement levels for the slope sampling over `[k_low, k_high]`.
const SAMPLE_LEVELS: [usize; 5] = [5, 9, 17, 33, 65];

pub fn current_bounds(solver: &FiberSolver<'_>, window: &EnergyWindow) -> Result<CurrentBounds> {
    let (e_lo, e_hi) = window.interval();
    let k_low = k_of_energy(solver, window.n, e_lo)?;
    let k_high = k_of_energy(solver, window.n, e_hi)?;
    let mut prev: Option<(f64, f64)> = None;
    let mut samples = 0;
    let mut result = (f64::INFINITY, f64::NEG_INFINITY);
    for &m in &SAMPLE_LEVELS {
        let ks: Vec<f64> = (0..m)
            .map(|j| k_low + (k_high - k_low) * j as f64 / (m - 1) as f64)
            .collect();
        let slopes = sample_slopes(solver, window.n, &ks)?;
        let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        result = (lo, hi);
        samples = m;
        if let Some((plo, phi)) = prev {
            if (lo - plo).abs() <= 0.01 * lo.abs() && (hi - phi).abs() <= 0.01 * hi.abs() {
                break;
            }
        }
        prev = Some((lo, hi));
    }
    Ok(CurrentBounds {
        window: *window,
        inf_slope: result.0,
        sup_slope: result.1,
        k_low,
        k_high,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingModel {
    /// Regress on `log(δ √|log δ|)`.
    Flat,
    /// Regress on `log δ`.
    Power,
}

impl ScalingModel {
    pub fn regressor(self, delta: f64) -> f64 {
        match self {
            ScalingModel::Flat => delta * delta.ln().abs().sqrt(),
            ScalingModel::Power => delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub delta: f64,
    pub k_delta: f64,
    pub slope: f64,
    pub regressor: f64,
}

impl ScalingPoint {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{}",
            number(self.delta),
            number(self.k_delta),
            number(self.slope),
            number(self.regressor)
        )
    }
}

pub fn write_scaling_csv<W: Write>(points: &[ScalingPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for p in points {
        writeln!(out, "{}", p.csv_line())?;
    }
    Ok(())
}

/// `E_n'(k(δ))` for each `δ`.
pub fn scaling_points(
    solver: &FiberSolver<'_>,
    n: usize,
    deltas: &[f64],
    model: ScalingModel,
) -> Result<Vec<ScalingPoint>> {
    let threshold = solver.profile().b_plus() * landau_level(n)?;
    deltas
        .par_iter()
        .map(|&delta| {
            if !(delta > 0.0) {
                return Err(Error::InvalidArgument(format!("δ must be positive, got {delta}")));
            }
            let k_delta = k_of_energy(solver, n, threshold - delta)?;
            Ok(ScalingPoint {
                delta,
                k_delta,
                slope: solver.band_value(k_delta, n)?.slope,
                regressor: model.regressor(delta),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    pub residual_norm: f64,
}

/// Least-squares exponent of `slope` against the model regressor.
pub fn scaling_fit(points: &[(f64, f64)], model: ScalingModel) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "scaling fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(d, s)| !(d > 0.0 && d < 1.0) || !(s > 0.0)) {
        return Err(Error::InvalidArgument(
            "scaling fit needs 0 < δ < 1 and positive slopes".into(),
        ));
    }
    let (dmin, dmax) = points
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(a, b), &(d, _)| (a.min(d), b.max(d)));
    if (dmax / dmin).log10() < 3.0 - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "δ values must span at least three decades, got [{dmin}, {dmax}]"
        )));
    }
    let x: Vec<f64> = points.iter().map(|&(d, _)| model.regressor(d).ln()).collect();
    let y: Vec<f64> = points.iter().map(|&(_, s)| s.ln()).collect();
    let f = fit_line(&x, &y)?;
    Ok(ScalingFit {
        exponent: f.slope,
        intercept: f.intercept,
        residual_norm: f.residual_norm,
    })
}
