//! Ordinary least-squares line fits.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
}

/// Fit `y ≈ slope·x + intercept`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "fit needs matching lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "a line fit needs at least two points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("fit data must be finite".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "all abscissae coincide; slope is undefined".into(),
        ));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_norm = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(LineFit {
        slope,
        intercept,
        residual_norm,
    })
}

/// Fit `log|y| ≈ slope·log x + log C`; returns the fit with `C = e^{intercept}`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<(LineFit, f64)> {
    if x.iter().any(|&v| v <= 0.0) || y.contains(&0.0) {
        return Err(Error::InvalidArgument(
            "power-law fit needs positive abscissae and non-zero ordinates".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let f = fit_line(&lx, &ly)?;
    Ok((f, f.intercept.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let f = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert!(f.residual_norm < 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_line(&[1.0], &[1.0]).is_err());
        assert!(fit_line(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(fit_line(&[1.0, 2.0], &[1.0]).is_err());
        assert!(fit_power_law(&[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn power_law_recovers_prefactor() {
        let x = [20.0, 50.0, 100.0, 200.0];
        let y: Vec<f64> = x.iter().map(|k: &f64| -3.0 / (k * k)).collect();
        let (f, c) = fit_power_law(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12 && (c - 3.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn recovers_slope(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let x: Vec<f64> = (0..7).map(|i| i as f64 * 0.5).collect();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let f = fit_line(&x, &y).unwrap();
            prop_assert!((f.slope - a).abs() < 1e-10 && (f.intercept - b).abs() < 1e-10);
        }
    }
}
