//! Oracle suite behind `iwatsuka selftest`.

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fiber::{FiberSolver, SolverOptions};
use crate::field::FieldProfile;
use crate::hermite::{hermite_function, HermiteBasisElement, MAX_INDEX};
use crate::quadrature::gauss_hermite;
use crate::tridiag::{SymTridiagonal, DEFAULT_RELATIVE_TOLERANCE};

const SEED: u64 = 0x1a75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestOptions {
    /// Relative bisection tolerance handed to every eigensolve.
    pub eigen_tolerance: f64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self {
            eigen_tolerance: DEFAULT_RELATIVE_TOLERANCE,
        }
    }
}

impl SelftestOptions {
    /// A deliberately loosened solver, used to confirm that the suite notices.
    pub fn with_injected_fault() -> Self {
        Self {
            eigen_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} max_err={:.3e} tol={:.0e} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_error,
            self.tolerance,
            self.detail
        )
    }
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
    pub seconds: f64,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(
            f,
            "{} of {} checks passed in {:.1}s",
            self.checks.len() - failed,
            self.checks.len(),
            self.seconds
        )
    }
}

fn finish(name: &'static str, tolerance: f64, outcome: Result<(f64, String)>) -> CheckResult {
    match outcome {
        Ok((max_error, detail)) => CheckResult {
            name,
            passed: max_error <= tolerance,
            max_error,
            tolerance,
            detail,
        },
        Err(e) => CheckResult {
            name,
            passed: false,
            max_error: f64::NAN,
            tolerance,
            detail: format!("error: {e}"),
        },
    }
}

/// Full spectrum by bisection against a dense symmetric eigensolver on
/// seeded random matrices.
pub fn dense_vs_tridiagonal(instances: usize, max_order: usize, options: &SelftestOptions) -> CheckResult {
    let run = || -> Result<(f64, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let n = rng.random_range(2..=max_order);
            let diag: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let off: Vec<f64> = (1..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let dense = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    diag[i]
                } else if i + 1 == j {
                    off[i]
                } else if j + 1 == i {
                    off[j]
                } else {
                    0.0
                }
            });
            let mut reference: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            let t = SymTridiagonal::new(diag, off)?;
            for (i, r) in reference.iter().enumerate() {
                worst = worst.max((t.eigenvalue(i, options.eigen_tolerance)? - r).abs());
            }
        }
        Ok((worst, format!("{instances} instances, N ≤ {max_order}")))
    };
    finish("dense_vs_tridiagonal", 1e-10, run())
}

/// Orthonormality of the Hermite functions under a 30-node Gauss–Hermite rule.
pub fn hermite_orthonormality() -> CheckResult {
    let run = || -> Result<(f64, String)> {
        let (t, w) = gauss_hermite(30);
        let mut worst: f64 = 0.0;
        for i in 1..=MAX_INDEX {
            let pi = HermiteBasisElement::get(i)?;
            for j in i..=MAX_INDEX {
                let pj = HermiteBasisElement::get(j)?;
                let s: f64 = t
                    .iter()
                    .zip(&w)
                    .map(|(&t, &w)| w * pi.polynomial(t) * pj.polynomial(t))
                    .sum();
                worst = worst.max((s - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        Ok((worst, format!("n ≤ {MAX_INDEX}")))
    };
    finish("hermite_orthonormality", 1e-12, run())
}

/// `-Ψ'' + t²Ψ = (2n-1)Ψ` pointwise on `|t| ≤ 6`, with `Ψ''` from the
/// coefficient table.
pub fn hermite_eigen_relation() -> CheckResult {
    let run = || -> Result<(f64, String)> {
        let eval = |coef: &[f64], t: f64| coef.iter().rev().fold(0.0, |a, c| a * t + c);
        let mut worst: f64 = 0.0;
        for n in 1..=MAX_INDEX {
            let c = &HermiteBasisElement::get(n)?.coefficients;
            let d1: Vec<f64> = (1..c.len()).map(|d| d as f64 * c[d]).collect();
            let d2: Vec<f64> = (1..d1.len()).map(|d| d as f64 * d1[d]).collect();
            for i in 0..=120 {
                let t = -6.0 + 0.1 * i as f64;
                let (p, p1, p2) = (eval(c, t), eval(&d1, t), eval(&d2, t));
                let psi2 = (p2 - 2.0 * t * p1 + (t * t - 1.0) * p) * (-0.5 * t * t).exp();
                let psi = hermite_function(n, t)?;
                worst = worst.max((-psi2 + (t * t - (2 * n - 1) as f64) * psi).abs());
            }
        }
        Ok((worst, format!("n ≤ {MAX_INDEX}, |t| ≤ 6")))
    };
    finish("hermite_eigen_relation", 1e-9, run())
}

/// Constant field: `E_n(k) = b_0(2n-1)` and `E_n'(k) = 0`.
pub fn constant_field_exactness(options: &SelftestOptions) -> CheckResult {
    let run = || -> Result<(f64, String)> {
        let solver_options = SolverOptions {
            relative_tolerance: options.eigen_tolerance,
            ..SolverOptions::default()
        };
        let mut worst: f64 = 0.0;
        for b0 in [0.5, 2.0] {
            let p = FieldProfile::constant(b0)?;
            let s = FiberSolver::with_options(&p, solver_options);
            for k in [-6.0, 0.0, 7.5] {
                for e in s.band_values(k, 3)? {
                    let exact = b0 * (2 * e.n - 1) as f64;
                    worst = worst.max((e.energy - exact).abs()).max(e.slope.abs());
                }
            }
        }
        Ok((worst, "b0 ∈ {0.5, 2}, n ≤ 3".into()))
    };
    finish("constant_field_exactness", 1e-8, run())
}

/// Feynman–Hellmann slope against a centred difference of `E_n`.
pub fn feynman_hellmann(options: &SelftestOptions) -> CheckResult {
    let run = || -> Result<(f64, String)> {
        let solver_options = SolverOptions {
            relative_tolerance: options.eigen_tolerance,
            ..SolverOptions::default()
        };
        let p = FieldProfile::flat_contact(0.5, 1.0, 1, 1.0, 0.0)?;
        let s = FiberSolver::with_options(&p, solver_options);
        let d = 1e-4;
        let mut worst: f64 = 0.0;
        for (n, k) in [(1, 0.0), (2, 1.0), (1, 1.5)] {
            let fd = (s.band_value(k + d, n)?.energy - s.band_value(k - d, n)?.energy) / (2.0 * d);
            let fh = s.band_value(k, n)?.slope;
            worst = worst.max((fh - fd).abs() / fh.abs());
        }
        Ok((worst, "flat p=1, 3 samples (relative)".into()))
    };
    finish("feynman_hellmann", 1e-6, run())
}

pub fn run_selftest(options: &SelftestOptions) -> SelftestReport {
    let start = Instant::now();
    let checks = vec![
        dense_vs_tridiagonal(20, 200, options),
        hermite_orthonormality(),
        hermite_eigen_relation(),
        constant_field_exactness(options),
        feynman_hellmann(options),
    ];
    SelftestReport {
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}
