//! Magnetic field families `b(x)`, the flux potential `a(x) = ∫_0^x b`, its
//! inverse, and the rescaled fiber potential around the guiding centre.
//!
//! Every profile is increasing with finite limits `0 < b_- ≤ b_+`. Left tails
//! are clamped to the constant `b_-`, so each family has a finite set of
//! breakpoints where `b` is only continuous; these are cached at construction
//! and handed to the quadrature routines.

use std::fmt;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre5, integrate, Tolerance};

/// Absolute tolerance for flux quadratures.
pub const FLUX_TOLERANCE: f64 = 1e-12;
/// Tolerance for the perturbation integrals entering `d_k`.
pub const EXCESS_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Constant {
        b0: f64,
    },
    /// `b = b_+ - c <x>^{-M}` on the right, clamped to `b_-` on the left.
    PowerTail {
        exponent: f64,
        amplitude: f64,
        tail_start: f64,
    },
    /// `b = b_+` for `x ≥ x_∞`, `max(b_-, b_+ - c (x_∞ - x)^p)` below.
    FlatContact {
        order: u32,
        amplitude: f64,
        contact: f64,
    },
    /// `b = b_+ - c exp(1/(x - x_∞))` below `x_∞`, clamped to `[b_-, b_+]`.
    InfiniteContact {
        amplitude: f64,
        contact: f64,
    },
    PiecewiseConstant {
        jump: f64,
    },
    /// Linear interpolation between sorted samples, constant outside.
    Tabulated {
        xs: Vec<f64>,
        bs: Vec<f64>,
    },
}

impl FieldKind {
    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::Constant { .. } => "constant",
            FieldKind::PowerTail { .. } => "power_tail",
            FieldKind::FlatContact { .. } => "flat_contact",
            FieldKind::InfiniteContact { .. } => "infinite_contact",
            FieldKind::PiecewiseConstant { .. } => "piecewise_constant",
            FieldKind::Tabulated { .. } => "tabulated",
        }
    }
}

/// An immutable magnetic field profile with its cached flux data.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProfile {
    kind: FieldKind,
    b_minus: f64,
    b_plus: f64,
    /// Points where `b` is not smooth, sorted.
    breakpoints: Vec<f64>,
    /// Left end of the region where `b > b_-` (the clamp point), if any.
    clamp: Option<f64>,
    /// Deficit `D(x) = ∫_x^{x_∞} (b_+ - b)` at the clamp point, flat kinds only.
    deficit_at_clamp: f64,
    /// `a(x_∞)` for flat kinds.
    flux_at_contact: Option<f64>,
    /// `a` at the clamp point for the power tail, and at the nodes of a table.
    flux_anchors: Vec<f64>,
    /// `D` at the nodes of a table.
    node_deficits: Vec<f64>,
}

fn check_limits(b_minus: f64, b_plus: f64) -> Result<()> {
    if !(b_minus.is_finite() && b_plus.is_finite()) || b_minus <= 0.0 {
        return Err(Error::InvalidProfile(format!(
            "field limits must be finite with b_minus > 0 (got b_minus={b_minus}, b_plus={b_plus})"
        )));
    }
    if b_minus >= b_plus {
        return Err(Error::InvalidProfile(format!(
            "b_minus must be smaller than b_plus (got {b_minus} ≥ {b_plus})"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidProfile(format!("{name} must be positive, got {v}")))
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidProfile(format!("{name} must be finite, got {v}")))
    }
}

fn japanese(x: f64) -> f64 {
    x.hypot(1.0)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

impl FieldProfile {
    fn bare(kind: FieldKind, b_minus: f64, b_plus: f64) -> Self {
        Self {
            kind,
            b_minus,
            b_plus,
            breakpoints: Vec::new(),
            clamp: None,
            deficit_at_clamp: 0.0,
            flux_at_contact: None,
            flux_anchors: Vec::new(),
            node_deficits: Vec::new(),
        }
    }

    pub fn constant(b0: f64) -> Result<Self> {
        check_positive("b0", b0)?;
        Ok(Self::bare(FieldKind::Constant { b0 }, b0, b0))
    }

    pub fn power_tail(
        b_minus: f64,
        b_plus: f64,
        exponent: f64,
        amplitude: f64,
        tail_start: f64,
    ) -> Result<Self> {
        check_limits(b_minus, b_plus)?;
        check_positive("M", exponent)?;
        check_positive("c", amplitude)?;
        check_finite("x0", tail_start)?;
        if tail_start < 0.0 {
            return Err(Error::InvalidProfile(format!(
                "x0 must be non-negative so that the tail is increasing, got {tail_start}"
            )));
        }
        if b_plus - amplitude * japanese(tail_start).powf(-exponent) > b_minus {
            return Err(Error::InvalidProfile(format!(
                "power tail starts above b_minus at x0={tail_start}; \
                 increase c or x0 so that b_plus - c<x0>^-M ≤ b_minus"
            )));
        }
        // b_+ - c<x>^{-M} = b_- at <x> = (c/(b_+ - b_-))^{1/M} ≥ <x0>.
        let bracket = (amplitude / (b_plus - b_minus)).powf(1.0 / exponent);
        let clamp = (bracket * bracket - 1.0).max(0.0).sqrt();
        let mut p = Self::bare(
            FieldKind::PowerTail {
                exponent,
                amplitude,
                tail_start,
            },
            b_minus,
            b_plus,
        );
        p.breakpoints = vec![clamp];
        p.clamp = Some(clamp);
        // a(clamp) = b_- * clamp since b ≡ b_- on [0, clamp].
        p.flux_anchors = vec![b_minus * clamp];
        Ok(p)
    }

    pub fn flat_contact(
        b_minus: f64,
        b_plus: f64,
        order: u32,
        amplitude: f64,
        contact: f64,
    ) -> Result<Self> {
        check_limits(b_minus, b_plus)?;
        if order < 1 {
            return Err(Error::InvalidProfile(
                "contact order p must be at least 1".into(),
            ));
        }
        check_positive("c", amplitude)?;
        check_finite("x_inf", contact)?;
        let width = ((b_plus - b_minus) / amplitude).powf(1.0 / f64::from(order));
        let clamp = contact - width;
        let deficit_at_clamp = amplitude * width.powi(order as i32 + 1) / f64::from(order + 1);
        let mut p = Self::bare(
            FieldKind::FlatContact {
                order,
                amplitude,
                contact,
            },
            b_minus,
            b_plus,
        );
        p.breakpoints = vec![clamp, contact];
        p.clamp = Some(clamp);
        p.deficit_at_clamp = deficit_at_clamp;
        p.init_flux_at_contact(contact)?;
        Ok(p)
    }

    pub fn infinite_contact(b_minus: f64, b_plus: f64, amplitude: f64, contact: f64) -> Result<Self> {
        check_limits(b_minus, b_plus)?;
        check_positive("c", amplitude)?;
        check_finite("x_inf", contact)?;
        if amplitude <= b_plus - b_minus {
            return Err(Error::InvalidProfile(format!(
                "infinite contact needs c > b_plus - b_minus so that the left limit is b_minus (got c={amplitude})"
            )));
        }
        // c exp(1/(x - x_∞)) = b_+ - b_- at the clamp point.
        let clamp = contact + 1.0 / ((b_plus - b_minus) / amplitude).ln();
        let mut p = Self::bare(
            FieldKind::InfiniteContact { amplitude, contact },
            b_minus,
            b_plus,
        );
        p.breakpoints = vec![clamp, contact];
        p.clamp = Some(clamp);
        p.deficit_at_clamp = p.smooth_deficit(clamp)?;
        p.init_flux_at_contact(contact)?;
        Ok(p)
    }

    pub fn piecewise_constant(b_minus: f64, b_plus: f64, jump: f64) -> Result<Self> {
        check_limits(b_minus, b_plus)?;
        check_finite("x_jump", jump)?;
        let mut p = Self::bare(FieldKind::PiecewiseConstant { jump }, b_minus, b_plus);
        p.breakpoints = vec![jump];
        p.clamp = Some(jump);
        p.init_flux_at_contact(jump)?;
        Ok(p)
    }

    /// Piecewise-linear field through `(x, b)` samples, extended by constants.
    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidProfile(
                "a tabulated field needs at least two samples".into(),
            ));
        }
        let (xs, bs): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
        for (i, (&x, &b)) in xs.iter().zip(&bs).enumerate() {
            check_finite("x", x)?;
            check_positive("b", b)?;
            if i > 0 && x <= xs[i - 1] {
                return Err(Error::InvalidProfile(format!(
                    "table abscissae must be strictly increasing (row {})",
                    i + 1
                )));
            }
            if i > 0 && b < bs[i - 1] {
                return Err(Error::InvalidProfile(format!(
                    "tabulated field must be non-decreasing (row {})",
                    i + 1
                )));
            }
        }
        let (b_minus, b_plus) = (bs[0], bs[bs.len() - 1]);
        check_limits(b_minus, b_plus)?;
        // Cumulative flux from the first node, shifted so that a(0) = 0.
        let mut cumulative = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cumulative[i] = cumulative[i - 1] + 0.5 * (bs[i] + bs[i - 1]) * (xs[i] - xs[i - 1]);
        }
        // Deficit D(x) = ∫_x^{x_last} (b_+ - b), accumulated from the right.
        let mut deficits = vec![0.0; xs.len()];
        for i in (0..xs.len() - 1).rev() {
            deficits[i] =
                deficits[i + 1] + (b_plus - 0.5 * (bs[i] + bs[i + 1])) * (xs[i + 1] - xs[i]);
        }
        let last = xs[xs.len() - 1];
        let mut p = Self::bare(
            FieldKind::Tabulated {
                xs: xs.clone(),
                bs,
            },
            b_minus,
            b_plus,
        );
        p.breakpoints = xs;
        p.flux_anchors = cumulative;
        p.node_deficits = deficits;
        let shift = p.tabulated_flux(0.0);
        for a in &mut p.flux_anchors {
            *a -= shift;
        }
        p.flux_at_contact = Some(p.tabulated_flux(last));
        Ok(p)
    }

    fn init_flux_at_contact(&mut self, contact: f64) -> Result<()> {
        // a(x) = a_∞ + b_+ (x - x_∞) + D(x) and a(0) = 0.
        let d0 = self.deficit(0.0)?;
        self.flux_at_contact = Some(self.b_plus * contact - d0);
        Ok(())
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn b_minus(&self) -> f64 {
        self.b_minus
    }

    pub fn b_plus(&self) -> f64 {
        self.b_plus
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `x_∞` for profiles that are exactly `b_+` on a right half-line.
    pub fn contact_point(&self) -> Option<f64> {
        match self.kind {
            FieldKind::FlatContact { contact, .. } | FieldKind::InfiniteContact { contact, .. } => {
                Some(contact)
            }
            FieldKind::PiecewiseConstant { jump } => Some(jump),
            FieldKind::Tabulated { ref xs, .. } => xs.last().copied(),
            _ => None,
        }
    }

    /// `a_∞ = a(x_∞)` for flat-type profiles.
    pub fn flux_at_contact(&self) -> Option<f64> {
        self.flux_at_contact
    }

    pub fn is_flat_type(&self) -> bool {
        self.flux_at_contact.is_some()
    }

    fn unsupported(&self, operation: &'static str) -> Error {
        Error::Unsupported {
            operation,
            kind: self.kind_name(),
        }
    }

    pub fn eval_b(&self, x: f64) -> f64 {
        let (bm, bp) = (self.b_minus, self.b_plus);
        match &self.kind {
            FieldKind::Constant { b0 } => *b0,
            FieldKind::PowerTail {
                exponent,
                amplitude,
                ..
            } => {
                if x <= self.clamp.unwrap_or(0.0) {
                    bm
                } else {
                    (bp - amplitude * japanese(x).powf(-exponent)).max(bm)
                }
            }
            FieldKind::FlatContact {
                order,
                amplitude,
                contact,
            } => {
                if x >= *contact {
                    bp
                } else {
                    (bp - amplitude * (contact - x).powi(*order as i32)).max(bm)
                }
            }
            FieldKind::InfiniteContact { amplitude, contact } => {
                if x >= *contact {
                    bp
                } else {
                    (bp - amplitude * (1.0 / (x - contact)).exp()).clamp(bm, bp)
                }
            }
            FieldKind::PiecewiseConstant { jump } => {
                if x >= *jump {
                    bp
                } else {
                    bm
                }
            }
            FieldKind::Tabulated { xs, bs } => {
                let i = xs.partition_point(|&node| node <= x);
                if i == 0 {
                    bs[0]
                } else if i == xs.len() {
                    bs[bs.len() - 1]
                } else {
                    let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                    bs[i - 1] + w * (bs[i] - bs[i - 1])
                }
            }
        }
    }

    /// `∫_x^{x_∞} e^{1/(s - x_∞)} c ds` for the infinite-contact family.
    fn smooth_deficit(&self, x: f64) -> Result<f64> {
        let FieldKind::InfiniteContact { amplitude, contact } = self.kind else {
            unreachable!("smooth deficit is only defined for infinite contact");
        };
        if x >= contact {
            return Ok(0.0);
        }
        // Substitute v = x_∞ - s; the integrand e^{-1/v} is flat at v = 0.
        let r = integrate(
            |v: f64| if v <= 0.0 { 0.0 } else { (-1.0 / v).exp() },
            0.0,
            contact - x,
            &[],
            Tolerance::new(1e-300, EXCESS_TOLERANCE),
        )?;
        Ok(amplitude * r.value)
    }

    /// Field deficit `D(x) = ∫_x^{x_∞} (b_+ - b)` for flat-type profiles
    /// (zero to the right of `x_∞`).
    fn deficit(&self, x: f64) -> Result<f64> {
        let gap = self.b_plus - self.b_minus;
        match &self.kind {
            FieldKind::FlatContact {
                order,
                amplitude,
                contact,
            } => {
                let clamp = self.clamp.expect("flat contact has a clamp point");
                Ok(if x >= *contact {
                    0.0
                } else if x >= clamp {
                    amplitude * (contact - x).powi(*order as i32 + 1) / f64::from(order + 1)
                } else {
                    self.deficit_at_clamp + gap * (clamp - x)
                })
            }
            FieldKind::InfiniteContact { contact, .. } => {
                let clamp = self.clamp.expect("infinite contact has a clamp point");
                if x >= *contact {
                    Ok(0.0)
                } else if x >= clamp {
                    self.smooth_deficit(x)
                } else {
                    Ok(self.deficit_at_clamp + gap * (clamp - x))
                }
            }
            FieldKind::PiecewiseConstant { jump } => Ok(gap * (jump - x).max(0.0)),
            FieldKind::Tabulated { xs, bs } => {
                let i = xs.partition_point(|&node| node <= x);
                Ok(if i == xs.len() {
                    0.0
                } else if i == 0 {
                    self.node_deficits[0] + (self.b_plus - bs[0]) * (xs[0] - x)
                } else {
                    let b = self.eval_b(x);
                    self.node_deficits[i] + (self.b_plus - 0.5 * (b + bs[i])) * (xs[i] - x)
                })
            }
            _ => Err(self.unsupported("deficit")),
        }
    }

    fn tabulated_flux(&self, x: f64) -> f64 {
        let FieldKind::Tabulated { xs, bs } = &self.kind else {
            unreachable!("tabulated flux on a non-tabulated profile");
        };
        let cum = &self.flux_anchors;
        let i = xs.partition_point(|&node| node <= x);
        if i == 0 {
            cum[0] + bs[0] * (x - xs[0])
        } else if i == xs.len() {
            cum[i - 1] + bs[i - 1] * (x - xs[i - 1])
        } else {
            let dx = x - xs[i - 1];
            let slope = (bs[i] - bs[i - 1]) / (xs[i] - xs[i - 1]);
            cum[i - 1] + bs[i - 1] * dx + 0.5 * slope * dx * dx
        }
    }

    fn power_tail_flux(&self, x: f64) -> Result<f64> {
        let FieldKind::PowerTail {
            exponent,
            amplitude,
            ..
        } = self.kind
        else {
            unreachable!("power-tail flux on another profile");
        };
        let clamp = self.clamp.expect("power tail has a clamp point");
        let a_clamp = self.flux_anchors[0];
        if x <= clamp {
            return Ok(a_clamp + self.b_minus * (x - clamp));
        }
        let tail = integrate(
            |s: f64| japanese(s).powf(-exponent),
            clamp,
            x,
            &[],
            Tolerance::absolute(FLUX_TOLERANCE / amplitude),
        )?;
        Ok(a_clamp + self.b_plus * (x - clamp) - amplitude * tail.value)
    }

    /// Flux potential `a(x) = ∫_0^x b(t) dt`.
    pub fn eval_a(&self, x: f64) -> Result<f64> {
        match &self.kind {
            FieldKind::Constant { b0 } => Ok(b0 * x),
            FieldKind::FlatContact { contact, .. }
            | FieldKind::InfiniteContact { contact, .. }
            | FieldKind::PiecewiseConstant { jump: contact } => {
                let a_inf = self.flux_at_contact.expect("flat kinds cache a_inf");
                Ok(a_inf + self.b_plus * (x - contact) + self.deficit(x)?)
            }
            FieldKind::PowerTail { .. } => self.power_tail_flux(x),
            FieldKind::Tabulated { .. } => Ok(self.tabulated_flux(x)),
        }
    }

    /// `∫_lo^hi (b - b_+) ds`, with the orientation of the bounds.
    pub fn excess_flux(&self, lo: f64, hi: f64) -> Result<f64> {
        match &self.kind {
            FieldKind::Constant { .. } => Ok(0.0),
            FieldKind::FlatContact { .. }
            | FieldKind::InfiniteContact { .. }
            | FieldKind::PiecewiseConstant { .. }
            | FieldKind::Tabulated { .. } => Ok(self.deficit(hi)? - self.deficit(lo)?),
            FieldKind::PowerTail { .. } => {
                let bp = self.b_plus;
                let r = integrate(
                    |s| self.eval_b(s) - bp,
                    lo,
                    hi,
                    &self.breakpoints,
                    Tolerance::new(1e-300, EXCESS_TOLERANCE),
                )?;
                Ok(r.value)
            }
        }
    }

    /// Guiding centre `x_k = a^{-1}(k)`.
    pub fn inverse_a(&self, k: f64) -> Result<f64> {
        if !k.is_finite() {
            return Err(Error::InvalidArgument(format!("frequency must be finite, got {k}")));
        }
        match &self.kind {
            FieldKind::Constant { b0 } => return Ok(k / b0),
            FieldKind::PiecewiseConstant { jump } => {
                let a_inf = self.flux_at_contact.expect("cached");
                let slope = if k >= a_inf { self.b_plus } else { self.b_minus };
                return Ok(jump + (k - a_inf) / slope);
            }
            FieldKind::FlatContact { contact, .. } | FieldKind::InfiniteContact { contact, .. } => {
                let a_inf = self.flux_at_contact.expect("cached");
                if k >= a_inf {
                    return Ok(contact + (k - a_inf) / self.b_plus);
                }
                let clamp = self.clamp.expect("cached");
                let a_clamp = self.eval_a(clamp)?;
                if k <= a_clamp {
                    return Ok(clamp + (k - a_clamp) / self.b_minus);
                }
            }
            _ => {}
        }
        // a is increasing with slope in [b_-, b_+], so x_k is bracketed.
        let (mut lo, mut hi) = if k >= 0.0 {
            (k / self.b_plus, k / self.b_minus)
        } else {
            (k / self.b_minus, k / self.b_plus)
        };
        let target = 1e-11 * k.abs().max(1.0);
        let floor = 2.0 * f64::EPSILON * k.abs().max(1.0);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let r = self.eval_a(x)? - k;
            if r.abs() <= floor {
                return Ok(x);
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - r / self.eval_b(x);
            let next = if newton >= lo && newton <= hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(1.0) {
                x = next;
                break;
            }
            x = next;
        }
        if (self.eval_a(x)? - k).abs() <= target {
            return Ok(x);
        }
        Err(Error::Accuracy(format!(
            "failed to invert the flux potential at k={k}"
        )))
    }

    /// Values `a(x_i) - k` on the uniform nodes `x_i = start + i h`.
    ///
    /// Closed-form families are evaluated node by node; quadrature families
    /// accumulate cell integrals from the first node with compensated
    /// summation so that the offset stays accurate when `a` and `k` are large.
    pub fn flux_offsets(&self, start: f64, spacing: f64, count: usize, k: f64) -> Result<Vec<f64>> {
        let node = |i: usize| start + i as f64 * spacing;
        match &self.kind {
            FieldKind::PowerTail { .. } | FieldKind::InfiniteContact { .. } => {
                let mut out = Vec::with_capacity(count);
                let mut sum = self.eval_a(start)? - k;
                let mut compensation = 0.0;
                out.push(sum);
                for i in 1..count {
                    let (lo, hi) = (node(i - 1), node(i));
                    let cell = self.cell_flux(lo, hi);
                    // Neumaier summation.
                    let t = sum + cell;
                    if sum.abs() >= cell.abs() {
                        compensation += (sum - t) + cell;
                    } else {
                        compensation += (cell - t) + sum;
                    }
                    sum = t;
                    out.push(sum + compensation);
                }
                Ok(out)
            }
            _ => (0..count).map(|i| Ok(self.eval_a(node(i))? - k)).collect(),
        }
    }

    fn cell_flux(&self, lo: f64, hi: f64) -> f64 {
        let inner = self.breakpoints.iter().filter(|&&b| b > lo && b < hi);
        let mut left = lo;
        let mut total = 0.0;
        for &b in inner.chain(std::iter::once(&hi)) {
            total += gauss_legendre5(|s| self.eval_b(s), left, b);
            left = b;
        }
        total
    }

    /// `t_k = (a_∞ - k)/√b_+`, the rescaled distance from `x_k` back to `x_∞`.
    pub fn t_of_k(&self, k: f64) -> Result<f64> {
        let a_inf = self
            .flux_at_contact
            .ok_or_else(|| self.unsupported("t_of_k"))?;
        Ok((a_inf - k) / self.b_plus.sqrt())
    }

    /// Rescaled frame at frequency `k`, with `x_k` solved once.
    pub fn rescaled(&self, k: f64) -> Result<RescaledFrame<'_>> {
        Ok(RescaledFrame {
            profile: self,
            k,
            x_k: self.inverse_a(k)?,
            sqrt_b_plus: self.b_plus.sqrt(),
        })
    }

    /// Perturbation `d_k(t) = W(t,k) - t^2` of the rescaled fiber potential.
    pub fn d_k(&self, k: f64, t: f64) -> Result<f64> {
        self.rescaled(k)?.d(t)
    }

    /// `b^{(p)}(x_∞^-)` for the finite-contact family, `(-1)^{p+1} c p!`.
    pub fn field_deriv_at_contact(&self) -> Result<f64> {
        match self.kind {
            FieldKind::FlatContact {
                order, amplitude, ..
            } => {
                let sign = if order % 2 == 1 { 1.0 } else { -1.0 };
                Ok(sign * amplitude * factorial(order))
            }
            _ => Err(self.unsupported("field_deriv_at_contact")),
        }
    }

    /// Contact order `p` of the finite-contact family.
    pub fn contact_order(&self) -> Option<u32> {
        match self.kind {
            FieldKind::FlatContact { order, .. } => Some(order),
            _ => None,
        }
    }

    /// Key/value description in the profile text format.
    pub fn describe(&self) -> String {
        let mut s = format!("kind = {}\n", self.kind_name());
        let mut kv = |k: &str, v: f64| s.push_str(&format!("{k} = {v}\n"));
        match &self.kind {
            FieldKind::Constant { b0 } => kv("b0", *b0),
            FieldKind::PowerTail {
                exponent,
                amplitude,
                tail_start,
            } => {
                kv("b_minus", self.b_minus);
                kv("b_plus", self.b_plus);
                kv("M", *exponent);
                kv("c", *amplitude);
                kv("x0", *tail_start);
            }
            FieldKind::FlatContact {
                order,
                amplitude,
                contact,
            } => {
                kv("b_minus", self.b_minus);
                kv("b_plus", self.b_plus);
                kv("p", f64::from(*order));
                kv("c", *amplitude);
                kv("x_inf", *contact);
            }
            FieldKind::InfiniteContact { amplitude, contact } => {
                kv("b_minus", self.b_minus);
                kv("b_plus", self.b_plus);
                kv("c", *amplitude);
                kv("x_inf", *contact);
            }
            FieldKind::PiecewiseConstant { jump } => {
                kv("b_minus", self.b_minus);
                kv("b_plus", self.b_plus);
                kv("x_jump", *jump);
            }
            FieldKind::Tabulated { xs, .. } => {
                kv("b_minus", self.b_minus);
                kv("b_plus", self.b_plus);
                kv("samples", xs.len() as f64);
            }
        }
        s
    }
}

impl fmt::Display for FieldProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe().trim_end().replace('\n', ", "))
    }
}

/// The fiber potential seen from the guiding centre: `x = x_k + t/√b_+`.
#[derive(Debug, Clone, Copy)]
pub struct RescaledFrame<'a> {
    profile: &'a FieldProfile,
    k: f64,
    x_k: f64,
    sqrt_b_plus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledPotentialPoint {
    pub t: f64,
    pub k: f64,
    /// `W(t,k) = (a(x) - k)^2 / b_+`.
    pub w: f64,
    pub d_k: f64,
}

impl RescaledFrame<'_> {
    pub fn x_k(&self) -> f64 {
        self.x_k
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn position(&self, t: f64) -> f64 {
        self.x_k + t / self.sqrt_b_plus
    }

    /// Breakpoints of the field mapped to the rescaled coordinate.
    pub fn t_breakpoints(&self) -> Vec<f64> {
        self.profile
            .breakpoints
            .iter()
            .map(|&x| (x - self.x_k) * self.sqrt_b_plus)
            .collect()
    }

    /// `d_k(t) = b_+^{-1} ∫_s^{x_k} (b + b_+) · ∫_s^{x_k} (b - b_+)` with
    /// `s = x_k + t/√b_+`.
    pub fn d(&self, t: f64) -> Result<f64> {
        let p = self.profile;
        let s = self.position(t);
        let excess = p.excess_flux(s, self.x_k)?;
        if excess == 0.0 {
            return Ok(0.0);
        }
        // ∫_s^{x_k} (b + b_+) = (k - a(s)) + b_+ (x_k - s)
        let total = (self.k - p.eval_a(s)?) + p.b_plus * (self.x_k - s);
        Ok(total * excess / p.b_plus)
    }

    pub fn point(&self, t: f64) -> Result<RescaledPotentialPoint> {
        let offset = self.profile.eval_a(self.position(t))? - self.k;
        Ok(RescaledPotentialPoint {
            t,
            k: self.k,
            w: offset * offset / self.profile.b_plus,
            d_k: self.d(t)?,
        })
    }
}

/// Landau level multiplier `Λ_n = 2n - 1`.
pub fn landau_level(n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidArgument("band index starts at 1".into()));
    }
    Ok((2 * n - 1) as f64)
}

/// Sorted, deduplicated thresholds `{b_± Λ_n : n ≤ n_max}`.
pub fn thresholds(profile: &FieldProfile, n_max: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (1..=n_max)
        .flat_map(|n| {
            let lambda = (2 * n - 1) as f64;
            [profile.b_minus * lambda, profile.b_plus * lambda]
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}
