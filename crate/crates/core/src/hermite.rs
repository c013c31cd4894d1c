//! Normalized Hermite functions `Ψ_n(t) = P_n(t) e^{-t²/2}`, indexed from 1.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const MAX_INDEX: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct HermiteBasisElement {
    pub n: usize,
    /// Coefficients of `P_n` in increasing powers of `t`; degree `n - 1`.
    pub coefficients: Vec<f64>,
    /// Leading coefficient `γ_n`.
    pub gamma: f64,
}

fn check_index(n: usize) -> Result<()> {
    if (1..=MAX_INDEX).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "Hermite index must lie in 1..={MAX_INDEX}, got {n}"
        )))
    }
}

fn table() -> &'static [HermiteBasisElement] {
    static TABLE: OnceLock<Vec<HermiteBasisElement>> = OnceLock::new();
    TABLE.get_or_init(|| {
        // P_{j+1} = √(2/j) t P_j - √((j-1)/j) P_{j-1}, P_1 = π^{-1/4}.
        let mut polys: Vec<Vec<f64>> = vec![vec![PI.powf(-0.25)]];
        for j in 1..MAX_INDEX {
            let jf = j as f64;
            let mut next = vec![0.0; j + 1];
            for (d, c) in polys[j - 1].iter().enumerate() {
                next[d + 1] += (2.0 / jf).sqrt() * c;
            }
            if j >= 2 {
                for (d, c) in polys[j - 2].iter().enumerate() {
                    next[d] -= ((jf - 1.0) / jf).sqrt() * c;
                }
            }
            polys.push(next);
        }
        polys
            .into_iter()
            .enumerate()
            .map(|(i, coefficients)| HermiteBasisElement {
                n: i + 1,
                gamma: *coefficients.last().expect("non-empty"),
                coefficients,
            })
            .collect()
    })
}

impl HermiteBasisElement {
    pub fn get(n: usize) -> Result<&'static HermiteBasisElement> {
        check_index(n)?;
        Ok(&table()[n - 1])
    }

    /// `P_n(t)` by Horner's rule.
    pub fn polynomial(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

/// `γ_n = (2^{n-1} / ((n-1)! √π))^{1/2}` in closed form.
pub fn gamma_closed_form(n: usize) -> f64 {
    let factorial: f64 = (1..n).map(|j| j as f64).product();
    (2f64.powi(n as i32 - 1) / (factorial * PI.sqrt())).sqrt()
}

/// `Ψ_n(t)` via the three-term recurrence on the functions themselves,
/// which avoids cancellation in the monomial form for large `|t|`.
pub fn hermite_function(n: usize, t: f64) -> Result<f64> {
    check_index(n)?;
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * t * t).exp();
    for j in 1..n {
        let jf = j as f64;
        let next = (2.0 / jf).sqrt() * t * cur - ((jf - 1.0) / jf).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `P_n(t)²`, the weight of `e^{-t²}` in `Ψ_n(t)²`.
pub fn polynomial_squared(n: usize, t: f64) -> Result<f64> {
    let p = HermiteBasisElement::get(n)?.polynomial(t);
    Ok(p * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_hermite;

    #[test]
    fn spot_values() {
        assert!((hermite_function(1, 0.0).unwrap() - 0.751_125_544_464_942_5).abs() < 1e-15);
        assert_eq!(hermite_function(2, 0.0).unwrap(), 0.0);
        assert!(hermite_function(0, 0.0).is_err());
        assert!(hermite_function(13, 0.0).is_err());
    }

    #[test]
    fn gamma_matches_closed_form() {
        for n in 1..=MAX_INDEX {
            let e = HermiteBasisElement::get(n).unwrap();
            assert_eq!(e.coefficients.len(), n);
            assert!((e.gamma - gamma_closed_form(n)).abs() < 1e-14 * e.gamma);
        }
    }

    #[test]
    fn orthonormal_under_gauss_hermite() {
        // Ψ_i Ψ_j = P_i P_j e^{-t²}; 30 nodes integrate degree ≤ 59 exactly.
        let (t, w) = gauss_hermite(30);
        for i in 1..=MAX_INDEX {
            for j in 1..=MAX_INDEX {
                let pi = HermiteBasisElement::get(i).unwrap();
                let pj = HermiteBasisElement::get(j).unwrap();
                let s: f64 = t
                    .iter()
                    .zip(&w)
                    .map(|(&t, &w)| w * pi.polynomial(t) * pj.polynomial(t))
                    .sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((s - expected).abs() < 1e-12, "({i},{j}): {s}");
            }
        }
    }

    #[test]
    fn polynomial_eigen_relation() {
        // -Ψ'' + t²Ψ = (2n-1)Ψ  ⇔  -P'' + 2tP' = 2(n-1)P.
        for n in 1..=MAX_INDEX {
            let c = &HermiteBasisElement::get(n).unwrap().coefficients;
            let deg = c.len();
            let mut lhs = vec![0.0; deg];
            for d in 0..deg {
                if d + 2 < deg {
                    lhs[d] -= (d + 2) as f64 * (d + 1) as f64 * c[d + 2];
                }
                lhs[d] += 2.0 * d as f64 * c[d];
            }
            for d in 0..deg {
                let rhs = 2.0 * (n - 1) as f64 * c[d];
                assert!((lhs[d] - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn pointwise_eigen_relation() {
        // Ψ'' = (P'' - 2tP' + (t² - 1)P) e^{-t²/2}, with derivatives taken on
        // the coefficient table.
        for n in 1..=MAX_INDEX {
            let c = &HermiteBasisElement::get(n).unwrap().coefficients;
            let lambda = (2 * n - 1) as f64;
            let eval = |coef: &[f64], t: f64| coef.iter().rev().fold(0.0, |a, c| a * t + c);
            let d1: Vec<f64> = (1..c.len()).map(|d| d as f64 * c[d]).collect();
            let d2: Vec<f64> = (1..d1.len()).map(|d| d as f64 * d1[d]).collect();
            for i in 0..=240 {
                let t = -6.0 + 0.05 * i as f64;
                let (p, p1, p2) = (eval(c, t), eval(&d1, t), eval(&d2, t));
                let g = (-0.5 * t * t).exp();
                let psi2 = (p2 - 2.0 * t * p1 + (t * t - 1.0) * p) * g;
                let psi = hermite_function(n, t).unwrap();
                let r = -psi2 + t * t * psi - lambda * psi;
                assert!(r.abs() < 1e-9, "n={n} t={t}: {r}");
            }
        }
    }

    #[test]
    fn recurrence_agrees_with_polynomial_form() {
        for n in 1..=MAX_INDEX {
            let e = HermiteBasisElement::get(n).unwrap();
            for i in 0..=40 {
                let t = -5.0 + 0.25 * i as f64;
                let a = hermite_function(n, t).unwrap();
                let b = e.polynomial(t) * (-0.5 * t * t).exp();
                assert!((a - b).abs() < 1e-12, "n={n} t={t}");
            }
        }
    }
}
