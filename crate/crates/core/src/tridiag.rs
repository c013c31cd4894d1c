//! Symmetric tridiagonal eigenproblems: Sturm-count bisection for the lowest
//! eigenvalues and inverse iteration for their eigenvectors.
//!
//! Matrices of the form `β·tridiag(-1, 2, -1) + diag(V)` (the Dirichlet
//! finite-difference Laplacian plus a potential) are stored with the stencil
//! kept separate. Their pivots are tracked as `q_i = β(1 + s_i)`, which keeps
//! the roundoff in the count at the scale of `V` instead of `β = 1/h²`.

use crate::error::{Error, Result};

/// Default relative bisection tolerance, a few ulps.
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
enum Structure {
    General,
    /// `diag = 2β + V`, `off = -β`.
    Laplacian { beta: f64, potential: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    structure: Structure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    /// Unit Euclidean norm.
    pub vector: Vec<f64>,
    pub residual: f64,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidArgument(format!(
                "tridiagonal shape mismatch: {} diagonal and {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self {
            diag,
            off,
            structure: Structure::General,
        })
    }

    /// `-u'' + V u` on interior nodes with spacing `h` and Dirichlet ends.
    pub fn laplacian(potential: Vec<f64>, spacing: f64) -> Result<Self> {
        if potential.is_empty() || !(spacing > 0.0) {
            return Err(Error::InvalidArgument(
                "laplacian needs a non-empty potential and a positive spacing".into(),
            ));
        }
        let beta = 1.0 / (spacing * spacing);
        let diag = potential.iter().map(|v| 2.0 * beta + v).collect();
        let off = vec![-beta; potential.len() - 1];
        Ok(Self {
            diag,
            off,
            structure: Structure::Laplacian { beta, potential },
        })
    }

    pub fn order(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.order();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    pub fn norm_estimate(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues strictly below `lambda`.
    pub fn sturm_count(&self, lambda: f64) -> usize {
        match &self.structure {
            Structure::Laplacian { beta, potential } => {
                let mut count = 0;
                // p = 1 + s is the scaled pivot q/β.
                let mut s = 1.0 + (potential[0] - lambda) / beta;
                let mut p = 1.0 + s;
                if p < 0.0 {
                    count += 1;
                }
                for v in &potential[1..] {
                    if p == 0.0 {
                        p = f64::EPSILON * f64::EPSILON;
                    }
                    s = (v - lambda) / beta + s / p;
                    p = 1.0 + s;
                    if p < 0.0 {
                        count += 1;
                    }
                }
                count
            }
            Structure::General => {
                let mut count = 0;
                let mut q = self.diag[0] - lambda;
                if q < 0.0 {
                    count += 1;
                }
                let tiny = f64::MIN_POSITIVE.sqrt();
                for i in 1..self.order() {
                    if q == 0.0 {
                        q = tiny;
                    }
                    let e = self.off[i - 1];
                    q = self.diag[i] - lambda - e * e / q;
                    if q < 0.0 {
                        count += 1;
                    }
                }
                count
            }
        }
    }

    /// Lower bound of the spectrum used to start bisection.
    fn lower_bound(&self) -> f64 {
        match &self.structure {
            // The Dirichlet Laplacian is positive definite.
            Structure::Laplacian { potential, .. } => {
                potential.iter().copied().fold(f64::INFINITY, f64::min)
            }
            Structure::General => self.gershgorin().0,
        }
    }

    /// The `index`-th smallest eigenvalue (0-based), by bisection.
    pub fn eigenvalue(&self, index: usize, rel_tol: f64) -> Result<f64> {
        if index >= self.order() {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue index {index} out of range for order {}",
                self.order()
            )));
        }
        let mut lo = self.lower_bound();
        let mut step = 1.0_f64.max(lo.abs());
        let mut hi = lo + step;
        while self.sturm_count(hi) <= index {
            lo = hi;
            step *= 2.0;
            hi += step;
            if !hi.is_finite() {
                return Err(Error::Accuracy("eigenvalue bracket diverged".into()));
            }
        }
        Ok(self.bisect(index, lo, hi, rel_tol))
    }

    fn bisect(&self, index: usize, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= rel_tol * lo.abs().max(hi.abs()) {
                return mid;
            }
            if self.sturm_count(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    /// Solve `(T - σ) x = b` with the same pivots as the Sturm count.
    fn shifted_solve(&self, sigma: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.order();
        let guard = f64::EPSILON * self.norm_estimate().max(1.0);
        let mut pivots = vec![0.0; n];
        let mut y = rhs.to_vec();
        match &self.structure {
            Structure::Laplacian { beta, potential } => {
                // Scaled pivots p_i = q_i / β, multipliers l_i = -1/p_{i-1}.
                let scaled_guard = guard / beta;
                let mut s = 1.0 + (potential[0] - sigma) / beta;
                pivots[0] = 1.0 + s;
                for i in 1..n {
                    if pivots[i - 1].abs() < scaled_guard {
                        pivots[i - 1] = scaled_guard;
                        s = pivots[i - 1] - 1.0;
                    }
                    s = (potential[i] - sigma) / beta + s / pivots[i - 1];
                    pivots[i] = 1.0 + s;
                    y[i] += y[i - 1] / pivots[i - 1];
                }
                if pivots[n - 1].abs() < scaled_guard {
                    pivots[n - 1] = scaled_guard;
                }
                let mut x = vec![0.0; n];
                x[n - 1] = y[n - 1] / beta / pivots[n - 1];
                for i in (0..n - 1).rev() {
                    x[i] = (y[i] / beta + x[i + 1]) / pivots[i];
                }
                x
            }
            Structure::General => {
                pivots[0] = self.diag[0] - sigma;
                for i in 1..n {
                    if pivots[i - 1].abs() < guard {
                        pivots[i - 1] = guard;
                    }
                    let l = self.off[i - 1] / pivots[i - 1];
                    pivots[i] = self.diag[i] - sigma - l * self.off[i - 1];
                    y[i] -= l * y[i - 1];
                }
                if pivots[n - 1].abs() < guard {
                    pivots[n - 1] = guard;
                }
                let mut x = vec![0.0; n];
                x[n - 1] = y[n - 1] / pivots[n - 1];
                for i in (0..n - 1).rev() {
                    x[i] = (y[i] - self.off[i] * x[i + 1]) / pivots[i];
                }
                x
            }
        }
    }

    /// `‖T v - λ v‖₂`.
    pub fn residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let n = self.order();
        let mut sum = 0.0;
        for i in 0..n {
            let mut tv = match &self.structure {
                Structure::Laplacian { beta, potential } => {
                    let left = if i > 0 { v[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { v[i + 1] } else { 0.0 };
                    beta * ((v[i] - left) + (v[i] - right)) + potential[i] * v[i]
                }
                Structure::General => {
                    let mut t = self.diag[i] * v[i];
                    if i > 0 {
                        t += self.off[i - 1] * v[i - 1];
                    }
                    if i + 1 < n {
                        t += self.off[i] * v[i + 1];
                    }
                    t
                }
            };
            tv -= lambda * v[i];
            sum += tv * tv;
        }
        sum.sqrt()
    }

    /// Residual target for a unit vector: `max(1e-10, 64 ε ‖T‖)`.
    pub fn residual_target(&self) -> f64 {
        1e-10_f64.max(64.0 * f64::EPSILON * self.norm_estimate())
    }

    /// The `m` smallest eigenpairs, in increasing order.
    pub fn lowest_eigenpairs(&self, m: usize, rel_tol: f64) -> Result<Vec<Eigenpair>> {
        if m == 0 || m > self.order() {
            return Err(Error::InvalidArgument(format!(
                "requested {m} eigenpairs from a matrix of order {}",
                self.order()
            )));
        }
        let values = (0..m)
            .map(|j| self.eigenvalue(j, rel_tol))
            .collect::<Result<Vec<_>>>()?;
        let target = self.residual_target();
        let mut pairs: Vec<Eigenpair> = Vec::with_capacity(m);
        for &value in &values {
            let (vector, residual) = self.inverse_iteration(value, &pairs, target)?;
            pairs.push(Eigenpair {
                value,
                vector,
                residual,
            });
        }
        Ok(pairs)
    }

    fn inverse_iteration(
        &self,
        value: f64,
        previous: &[Eigenpair],
        target: f64,
    ) -> Result<(Vec<f64>, f64)> {
        let n = self.order();
        // Deterministic start vector with no special symmetry.
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_749_895).fract())
            .collect();
        let mut best = (Vec::new(), f64::INFINITY);
        for _ in 0..6 {
            x = self.shifted_solve(value, &x);
            for p in previous {
                let dot: f64 = x.iter().zip(&p.vector).map(|(a, b)| a * b).sum();
                for (xi, pi) in x.iter_mut().zip(&p.vector) {
                    *xi -= dot * pi;
                }
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                break;
            }
            for xi in &mut x {
                *xi /= norm;
            }
            let residual = self.residual(value, &x);
            if residual < best.1 {
                best = (x.clone(), residual);
            }
            if residual <= target {
                return Ok(best);
            }
        }
        Err(Error::Stagnation {
            eigenvalue: value,
            residual: best.1,
        })
    }
}
