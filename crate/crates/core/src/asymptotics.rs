//! Threshold asymptotics: the Hermite perturbation integrals `μ_n(k)`, the
//! closed-form finite-contact prediction, the power-law prediction and the
//! infinite-contact diagnostics.
//!
//! Near the threshold the gaps are of size `e^{-t_k²}`, so the perturbation
//! integrals are evaluated with that factor removed (`scaled` values) and
//! predictions carry their natural logarithm alongside the value.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fiber::{extrapolated_levels, lattice_grid, BandEstimate, PotentialSampler, SolverOptions};
use crate::field::{landau_level, FieldKind, FieldProfile};
use crate::hermite::{polynomial_squared, HermiteBasisElement};
use crate::quadrature::{integrate, Tolerance};

/// Integrand magnitude below which the lower tail of `μ_n` is dropped.
pub const TAIL_CUTOFF: f64 = 1e-18;
const MU_RELATIVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AsymptoticModel {
    FlatContact { order: u32 },
    InfiniteContact,
    PowerTail { exponent: f64 },
    /// `b_+ μ_n(k)` for the other flat-type profiles.
    Perturbative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticPrediction {
    pub n: usize,
    pub k: f64,
    pub model: AsymptoticModel,
    /// Signed prediction for `E_n(k) - b_+ Λ_n`.
    pub predicted_gap: f64,
    /// `ln |predicted_gap|`, finite even when the value underflows.
    pub log_magnitude: f64,
    pub leading_constant: f64,
}

/// A perturbation integral with the factor `e^{-t_k²}` split off:
/// `value = scaled · e^{-log_scale}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledIntegral {
    pub scaled: f64,
    pub log_scale: f64,
}

impl ScaledIntegral {
    pub fn value(&self) -> f64 {
        self.scaled * (-self.log_scale).exp()
    }

    pub fn log_magnitude(&self) -> f64 {
        self.scaled.abs().ln() - self.log_scale
    }
}

fn require_flat(profile: &FieldProfile, operation: &'static str) -> Result<f64> {
    profile.flux_at_contact().ok_or(Error::Unsupported {
        operation,
        kind: profile.kind_name(),
    })
}

/// `∫_{t_low}^{t_k} weight(t) e^{t_k² - t²} d_k(t) dt`.
fn scaled_perturbation<W: Fn(f64) -> f64>(
    profile: &FieldProfile,
    k: f64,
    weight: W,
    operation: &'static str,
) -> Result<ScaledIntegral> {
    if matches!(profile.kind(), FieldKind::Constant { .. }) {
        return Ok(ScaledIntegral {
            scaled: 0.0,
            log_scale: 0.0,
        });
    }
    let a_inf = require_flat(profile, operation)?;
    let t_k = profile.t_of_k(k)?;
    let log_scale = t_k * t_k;
    if k <= a_inf {
        return Err(Error::Domain {
            value: k,
            reason: format!("perturbation integrals need k > a_inf = {a_inf}"),
        });
    }
    let frame = profile.rescaled(k)?;
    let ratio = profile.b_plus() / profile.b_minus();
    let bound = 4.0 * ratio * ratio;
    let envelope = |t: f64| weight(t) * (log_scale - t * t).exp() * bound * t * t;
    let mut t_low = t_k;
    while envelope(t_low) > TAIL_CUTOFF || t_low > t_k - 1.0 {
        t_low -= 0.25;
    }
    let breakpoints = frame.t_breakpoints();
    // Error inside the quadrature callback is stashed and re-raised.
    let failure = std::cell::RefCell::new(None);
    let integral = integrate(
        |t| match frame.d(t) {
            Ok(d) => weight(t) * (log_scale - t * t).exp() * d,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        t_low,
        t_k,
        &breakpoints,
        Tolerance::new(1e-300, MU_RELATIVE_TOLERANCE),
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(ScaledIntegral {
        scaled: integral.value,
        log_scale,
    })
}

/// `μ_n(k) = ∫ Ψ_n(t)² d_k(t) dt`, scaled by `e^{t_k²}`.
pub fn mu_n_scaled(profile: &FieldProfile, k: f64, n: usize) -> Result<ScaledIntegral> {
    HermiteBasisElement::get(n)?;
    scaled_perturbation(
        profile,
        k,
        |t| polynomial_squared(n, t).expect("index checked"),
        "mu_n",
    )
}

pub fn mu_n(profile: &FieldProfile, k: f64, n: usize) -> Result<f64> {
    Ok(mu_n_scaled(profile, k, n)?.value())
}

/// Leading-monomial version `γ_n² ∫ t^{2n-2} e^{-t²} d_k(t) dt`, scaled.
pub fn mu_n_leading_scaled(profile: &FieldProfile, k: f64, n: usize) -> Result<ScaledIntegral> {
    let gamma = HermiteBasisElement::get(n)?.gamma;
    scaled_perturbation(
        profile,
        k,
        |t| gamma * gamma * t.powi(2 * n as i32 - 2),
        "mu_n_leading",
    )
}

pub fn mu_n_leading(profile: &FieldProfile, k: f64, n: usize) -> Result<f64> {
    Ok(mu_n_leading_scaled(profile, k, n)?.value())
}

/// `d_k^{(p+1)}(t_k) = -2(k - a_∞) b_+^{-(p+3)/2} b^{(p)}(x_∞⁻)`.
pub fn dk_p1_at_tk(profile: &FieldProfile, k: f64) -> Result<f64> {
    let derivative = profile.field_deriv_at_contact()?;
    let order = profile.contact_order().expect("finite contact");
    let a_inf = require_flat(profile, "dk_p1_at_tk")?;
    Ok(-2.0 * (k - a_inf) * profile.b_plus().powf(-(f64::from(order) + 3.0) / 2.0) * derivative)
}

/// `C(n, p, b_+) = (-1)^p 2^{n-p-2} / (√π (n-1)! b_+^{n-3/2})`.
pub fn contact_constant(n: usize, p: u32, b_plus: f64) -> Result<f64> {
    if n < 1 || p < 1 {
        return Err(Error::InvalidArgument(format!(
            "contact constant needs n ≥ 1 and p ≥ 1, got n={n}, p={p}"
        )));
    }
    let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
    let factorial: f64 = (1..n).map(|j| j as f64).product();
    Ok(sign * 2f64.powi(n as i32 - p as i32 - 2)
        / (PI.sqrt() * factorial * b_plus.powf(n as f64 - 1.5)))
}

/// `C(n,p,b_+) b^{(p)}(x_∞⁻) (k - a_∞)^{2n-p-3} e^{-t_k²}`.
pub fn predicted_gap_flat(profile: &FieldProfile, k: f64, n: usize) -> Result<AsymptoticPrediction> {
    let derivative = profile.field_deriv_at_contact()?;
    let order = profile.contact_order().expect("finite contact");
    let a_inf = require_flat(profile, "predicted_gap_flat")?;
    if k <= a_inf {
        return Err(Error::Domain {
            value: k,
            reason: format!("the finite-contact prediction needs k > a_inf = {a_inf}"),
        });
    }
    landau_level(n)?;
    let constant = contact_constant(n, order, profile.b_plus())? * derivative;
    let t_k = profile.t_of_k(k)?;
    let power = 2 * n as i32 - order as i32 - 3;
    let log_magnitude = constant.abs().ln() + f64::from(power) * (k - a_inf).ln() - t_k * t_k;
    Ok(AsymptoticPrediction {
        n,
        k,
        model: AsymptoticModel::FlatContact { order },
        predicted_gap: constant.signum() * log_magnitude.exp(),
        log_magnitude,
        leading_constant: constant,
    })
}

/// `-c Λ_n b_+^M / k^M`.
pub fn predicted_gap_power(n: usize, k: f64, exponent: f64, b_plus: f64, amplitude: f64) -> Result<f64> {
    let lambda = landau_level(n)?;
    if !(k > 0.0) || !(exponent > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power-law prediction needs k > 0 and M > 0, got k={k}, M={exponent}"
        )));
    }
    Ok(-amplitude * lambda * (b_plus / k).powf(exponent))
}

/// Diagnostics for the infinite-contact family at one `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfiniteContactCheck {
    /// `e^{t_k²} · gap · k^q`.
    pub weighted_scaled_gap: f64,
    /// `b_+ μ_n(k)`, the refined gap prediction.
    pub refined_prediction: f64,
}

pub fn predicted_gap_infinite(
    profile: &FieldProfile,
    k: f64,
    n: usize,
    gap: f64,
    q: f64,
) -> Result<InfiniteContactCheck> {
    if matches!(profile.kind(), FieldKind::Constant { .. }) {
        return Ok(InfiniteContactCheck {
            weighted_scaled_gap: 0.0,
            refined_prediction: 0.0,
        });
    }
    if !matches!(profile.kind(), FieldKind::InfiniteContact { .. }) {
        return Err(Error::Unsupported {
            operation: "predicted_gap_infinite",
            kind: profile.kind_name(),
        });
    }
    let t_k = profile.t_of_k(k)?;
    Ok(InfiniteContactCheck {
        weighted_scaled_gap: (t_k * t_k).exp() * gap * k.powf(q),
        refined_prediction: profile.b_plus() * mu_n(profile, k, n)?,
    })
}

/// Local Landau level `Λ_n (b(x_k) - b_+)`.
pub fn heuristic_gap(profile: &FieldProfile, k: f64, n: usize) -> Result<f64> {
    let lambda = landau_level(n)?;
    Ok(lambda * (profile.eval_b(profile.inverse_a(k)?) - profile.b_plus()))
}

/// The prediction a band table attaches to `(n, k)`, when the profile has one.
pub fn predict(profile: &FieldProfile, k: f64, n: usize) -> Result<Option<AsymptoticPrediction>> {
    match *profile.kind() {
        FieldKind::Constant { .. } => Ok(None),
        FieldKind::PowerTail {
            exponent,
            amplitude,
            ..
        } => {
            if k <= 0.0 {
                return Ok(None);
            }
            let gap = predicted_gap_power(n, k, exponent, profile.b_plus(), amplitude)?;
            Ok(Some(AsymptoticPrediction {
                n,
                k,
                model: AsymptoticModel::PowerTail { exponent },
                predicted_gap: gap,
                log_magnitude: gap.abs().ln(),
                leading_constant: -amplitude * landau_level(n)? * profile.b_plus().powf(exponent),
            }))
        }
        FieldKind::FlatContact { .. } => {
            let a_inf = profile.flux_at_contact().expect("flat kind");
            if k <= a_inf {
                return Ok(None);
            }
            predicted_gap_flat(profile, k, n).map(Some)
        }
        FieldKind::InfiniteContact { .. }
        | FieldKind::PiecewiseConstant { .. }
        | FieldKind::Tabulated { .. } => {
            let a_inf = profile.flux_at_contact().expect("flat kind");
            if k <= a_inf {
                return Ok(None);
            }
            let mu = mu_n_scaled(profile, k, n)?;
            let model = if matches!(profile.kind(), FieldKind::InfiniteContact { .. }) {
                AsymptoticModel::InfiniteContact
            } else {
                AsymptoticModel::Perturbative
            };
            Ok(Some(AsymptoticPrediction {
                n,
                k,
                model,
                predicted_gap: profile.b_plus() * mu.value(),
                log_magnitude: profile.b_plus().ln() + mu.log_magnitude(),
                leading_constant: profile.b_plus(),
            }))
        }
    }
}

struct RescaledPotential<'a> {
    profile: &'a FieldProfile,
    k: f64,
    x_k: f64,
    sqrt_b_plus: f64,
}

impl PotentialSampler for RescaledPotential<'_> {
    fn sample(&self, start: f64, spacing: f64, count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self.sqrt_b_plus;
        let offsets = self
            .profile
            .flux_offsets(self.x_k + start / s, spacing / s, count, self.k)?;
        let b = self.profile.b_plus();
        let v = offsets.iter().map(|o| o * o / b).collect();
        let dv = offsets.iter().map(|o| -2.0 * o / b).collect();
        Ok((v, dv))
    }
}

/// Eigenvalues `Ẽ_n(k)` of the rescaled operator `-∂_t² + W(t, k)`, solved
/// directly in the `t` variable.
pub fn rescaled_band_values(
    profile: &FieldProfile,
    k: f64,
    n_max: usize,
    options: &SolverOptions,
) -> Result<Vec<BandEstimate>> {
    let x_k = profile.inverse_a(k)?;
    let sampler = RescaledPotential {
        profile,
        k,
        x_k,
        sqrt_b_plus: profile.b_plus().sqrt(),
    };
    let reach = ((2 * n_max - 1) as f64 + options.margin).sqrt();
    // W ≥ (b_-/b_+)² t² bounds the window in t.
    let half = reach * profile.b_plus() / profile.b_minus();
    let spacing = options.spacing.unwrap_or(2f64.powi(-8));
    let grid = lattice_grid(-half, half, spacing)?;
    extrapolated_levels(&sampler, &grid, n_max, k, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::FiberSolver;

    fn flat(p: u32) -> FieldProfile {
        FieldProfile::flat_contact(0.5, 1.0, p, 1.0, 0.0).unwrap()
    }

    #[test]
    fn constant_examples() {
        let s = PI.sqrt();
        assert!((contact_constant(1, 1, 1.0).unwrap() + 1.0 / (4.0 * s)).abs() < 1e-15);
        assert!((contact_constant(1, 1, 1.0).unwrap() + 0.141_047_395_886_939).abs() < 1e-12);
        assert!((contact_constant(1, 2, 1.0).unwrap() - 1.0 / (8.0 * s)).abs() < 1e-15);
        assert!((contact_constant(2, 1, 1.0).unwrap() + 1.0 / (2.0 * s)).abs() < 1e-15);
        assert!(contact_constant(0, 1, 1.0).is_err());
    }

    #[test]
    fn flat_prediction_examples() {
        let p = flat(1);
        let g3 = predicted_gap_flat(&p, 3.0, 1).unwrap();
        let expected = -(1.0 / (4.0 * PI.sqrt())) / 9.0 * (-9.0f64).exp();
        assert!((g3.predicted_gap - expected).abs() < 1e-12 * expected.abs());
        assert!((g3.predicted_gap / -1.933e-6 - 1.0).abs() < 1e-3);
        let g4 = predicted_gap_flat(&p, 4.0, 1).unwrap();
        assert!((g4.predicted_gap / -9.9e-10 - 1.0).abs() < 1e-2);
        let tiny = predicted_gap_flat(&p, 1e-6, 1).unwrap();
        assert!(tiny.predicted_gap.is_finite());
        let far = predicted_gap_flat(&p, 40.0, 1).unwrap();
        assert_eq!(far.predicted_gap, -0.0);
        assert!((far.log_magnitude - (-(4.0 * PI.sqrt()).ln() - 2.0 * 40f64.ln() - 1600.0)).abs() < 1e-9);
        assert!(predicted_gap_flat(&FieldProfile::constant(1.0).unwrap(), 3.0, 1).is_err());
    }

    #[test]
    fn flat_prediction_sign() {
        for p in [1, 2, 3] {
            for n in [1, 2, 3] {
                let prof = flat(p);
                assert!(predicted_gap_flat(&prof, 3.0, n).unwrap().predicted_gap < 0.0);
            }
        }
    }

    #[test]
    fn power_examples() {
        assert!((predicted_gap_power(1, 10.0, 2.0, 1.0, 1.0).unwrap() + 0.01).abs() < 1e-15);
        assert!((predicted_gap_power(2, 10.0, 2.0, 1.0, 1.0).unwrap() + 0.03).abs() < 1e-15);
        assert_eq!(predicted_gap_power(1, 10.0, 2.0, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn dk_derivative_examples() {
        let p = flat(1);
        assert!((dk_p1_at_tk(&p, 3.0).unwrap() + 6.0).abs() < 1e-14);
        assert_eq!(dk_p1_at_tk(&p, 0.0).unwrap(), 0.0);
        // One-sided (p+1)-th difference of d_k at t_k⁻ (d_k vanishes to order p+1).
        for (order, k) in [(1u32, 3.0), (2, 3.0), (1, 5.0)] {
            let prof = flat(order);
            let t_k = prof.t_of_k(k).unwrap();
            let expected = dk_p1_at_tk(&prof, k).unwrap();
            let h = 1e-3;
            let m = order as usize + 1;
            // Backward difference of order m with a second-order correction
            // from Richardson in h.
            let diff = |h: f64| {
                let mut s = 0.0;
                let mut binom = 1.0;
                for j in 0..=m {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    s += sign * binom * prof.d_k(k, t_k - j as f64 * h).unwrap();
                    binom = binom * (m - j) as f64 / (j + 1) as f64;
                }
                s / h.powi(m as i32)
            };
            let fd = 2.0 * diff(h / 2.0) - diff(h);
            assert!((fd - expected).abs() < 1e-4 * expected.abs(), "p={order} k={k}: {fd} vs {expected}");
        }
    }

    #[test]
    fn mu_examples() {
        let c = FieldProfile::constant(1.0).unwrap();
        assert_eq!(mu_n(&c, 3.0, 1).unwrap(), 0.0);
        assert_eq!(mu_n_leading(&c, 3.0, 2).unwrap(), 0.0);
        let p = flat(1);
        let mu = mu_n(&p, 3.0, 1).unwrap();
        assert!(mu < 0.0 && mu.abs() > 1e-7 && mu.abs() < 1e-4, "{mu}");
        // Brute force: midpoint rule on a fine grid over [t_k - 12, t_k].
        let t_k = p.t_of_k(3.0).unwrap();
        let m = 240_000;
        let h = 12.0 / m as f64;
        let mut s = 0.0;
        for j in 0..m {
            let t = t_k - 12.0 + (j as f64 + 0.5) * h;
            let psi = crate::hermite::hermite_function(1, t).unwrap();
            s += psi * psi * p.d_k(3.0, t).unwrap() * h;
        }
        assert!((mu - s).abs() < 1e-6 * s.abs(), "{mu} vs {s}");
        assert_eq!(mu_n_leading(&p, 3.0, 1).unwrap(), mu);
        for k in [4.0, 6.0, 9.0] {
            assert!(mu_n(&flat(2), k, 2).unwrap() < 0.0);
        }
    }

    #[test]
    fn leading_ratio_tends_to_one() {
        // P_2 is a monomial, so the two integrals coincide for n = 2.
        let p = flat(1);
        let a = mu_n_leading_scaled(&p, 4.0, 2).unwrap().scaled;
        let b = mu_n_scaled(&p, 4.0, 2).unwrap().scaled;
        assert!((a / b - 1.0).abs() < 1e-12);
        for n in [3, 4] {
            let dev: Vec<f64> = [3.0, 6.0, 12.0]
                .iter()
                .map(|&k| {
                    let a = mu_n_leading_scaled(&p, k, n).unwrap().scaled;
                    let b = mu_n_scaled(&p, k, n).unwrap().scaled;
                    (a / b - 1.0).abs()
                })
                .collect();
            assert!(dev[0] > dev[1] && dev[1] > dev[2] && dev[2] < 0.1, "{dev:?}");
        }
    }

    #[test]
    fn closed_form_tracks_mu_integral() {
        // predicted_gap_flat / (b_+ μ_n) → 1.
        for (order, n) in [(1, 1), (2, 1), (1, 2)] {
            let p = flat(order);
            let dev: Vec<f64> = [4.0, 8.0, 16.0]
                .iter()
                .map(|&k| {
                    let pred = predicted_gap_flat(&p, k, n).unwrap();
                    let mu = mu_n_scaled(&p, k, n).unwrap();
                    ((pred.log_magnitude - mu.log_magnitude()).exp() - 1.0).abs()
                })
                .collect();
            assert!(dev[0] > dev[1] && dev[1] > dev[2], "p={order} n={n}: {dev:?}");
        }
    }

    #[test]
    fn heuristic_examples() {
        let c = FieldProfile::constant(1.0).unwrap();
        assert_eq!(heuristic_gap(&c, 5.0, 1).unwrap(), 0.0);
        assert_eq!(heuristic_gap(&flat(1), 3.0, 2).unwrap(), 0.0);
        let pt = FieldProfile::power_tail(0.5, 1.0, 2.0, 1.0, 0.0).unwrap();
        let h = heuristic_gap(&pt, 200.0, 1).unwrap();
        assert!((h / -(1.0 / 200f64.powi(2)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn infinite_contact_diagnostics() {
        let c = FieldProfile::constant(1.0).unwrap();
        assert_eq!(predicted_gap_infinite(&c, 2.0, 1, 0.0, 2.0).unwrap().refined_prediction, 0.0);
        let p = FieldProfile::infinite_contact(0.5, 1.0, 1.0, 0.0).unwrap();
        let t_k = p.t_of_k(2.0).unwrap();
        let chk = predicted_gap_infinite(&p, 2.0, 1, -1e-3, 0.0).unwrap();
        assert!((chk.weighted_scaled_gap - (t_k * t_k).exp() * -1e-3).abs() < 1e-15);
        assert!(chk.refined_prediction < 0.0);
        assert!(predicted_gap_infinite(&flat(1), 2.0, 1, 0.0, 0.0).is_err());
    }

    #[test]
    fn b_plus_scaling_identity() {
        for (b_plus, k) in [(1.0, 1.5), (2.0, 2.0), (4.0, 3.0)] {
            let p = FieldProfile::flat_contact(0.5 * b_plus, b_plus, 1, 1.0, 0.0).unwrap();
            let direct = FiberSolver::new(&p).band_values(k, 2).unwrap();
            let rescaled = rescaled_band_values(&p, k, 2, &SolverOptions::default()).unwrap();
            for (d, r) in direct.iter().zip(&rescaled) {
                assert!(
                    (d.energy - b_plus * r.energy).abs() < 1e-8,
                    "b+={b_plus}: {} vs {}",
                    d.energy,
                    b_plus * r.energy
                );
            }
        }
    }

    #[test]
    fn contact_constant_normalization_for_other_b_plus() {
        // E_n - b_+Λ_n against the printed C(n,p,b_+) at equal t_k.
        for b_plus in [2.0, 4.0] {
            let p = FieldProfile::flat_contact(0.5 * b_plus, b_plus, 1, 1.0, 0.0).unwrap();
            let k = 3.6 * b_plus.sqrt();
            let s = FiberSolver::new(&p);
            for n in [1, 2] {
                let gap = s.band_value(k, n).unwrap().energy - b_plus * landau_level(n).unwrap();
                let pred = predicted_gap_flat(&p, k, n).unwrap().predicted_gap;
                assert!((gap / pred - 1.0).abs() < 0.25, "b+={b_plus} n={n}: {}", gap / pred);
            }
        }
    }
}
