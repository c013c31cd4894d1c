//! Finite-difference discretization of the fiber operator
//! `h(k) = -∂x² + (a(x) - k)²` with Dirichlet truncation, and band values
//! extrapolated over three nested grids.
//!
//! Windows are snapped outward to a fixed lattice so that the nodes of every
//! grid are `x = j·h` for integer `j`, independent of `k`. The discrete
//! eigenvalue is then a smooth function of `k`, which is what lets finite
//! differences of band values agree with the Feynman–Hellmann slope.

use crate::error::{Error, Result};
use crate::field::FieldProfile;
use crate::quadrature::simpson_uniform;
use crate::tridiag::{SymTridiagonal, DEFAULT_RELATIVE_TOLERANCE};

pub const MIN_NODES: usize = 64;
/// Highest supported band index.
pub const MAX_BAND: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    /// Node count including both Dirichlet endpoints.
    pub nodes: usize,
    pub spacing: f64,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, nodes: usize) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid needs finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if nodes < MIN_NODES {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {MIN_NODES} nodes, got {nodes}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            nodes,
            spacing: (x_max - x_min) / (nodes - 1) as f64,
        })
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing
    }

    /// Same interval with twice as many cells.
    pub fn refined(&self) -> Self {
        Self {
            nodes: 2 * self.nodes - 1,
            spacing: 0.5 * self.spacing,
            ..*self
        }
    }

    /// Same interval with half as many cells (requires an even cell count).
    pub fn coarsened(&self) -> Option<Self> {
        let cells = self.nodes - 1;
        (cells % 2 == 0 && cells / 2 + 1 >= MIN_NODES).then(|| Self {
            nodes: cells / 2 + 1,
            spacing: 2.0 * self.spacing,
            ..*self
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberEigenpair {
    pub n: usize,
    pub k: f64,
    pub energy: f64,
    /// Samples at every grid node (zero at both ends), with trapezoid norm 1.
    pub psi: Vec<f64>,
    pub grid: Grid,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Middle grid spacing; `None` selects it from `b_+`.
    pub spacing: Option<f64>,
    /// Potential excess over the energy estimate at the window edges.
    pub margin: f64,
    pub relative_tolerance: f64,
    /// Error estimates above `warn_level·max(1, |E|)` raise the warning flag.
    pub warn_level: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            spacing: None,
            margin: 60.0,
            relative_tolerance: DEFAULT_RELATIVE_TOLERANCE,
            warn_level: 1e-8,
        }
    }
}

/// Extrapolated band value and slope at one `(n, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandEstimate {
    pub n: usize,
    pub k: f64,
    pub energy: f64,
    pub error_estimate: f64,
    /// `E_n'(k)` from the Feynman–Hellmann identity.
    pub slope: f64,
    pub acc_warn: bool,
}

/// Spacing `2^-8`, halved until `h√b_+ ≤ 2^-8`.
pub fn default_spacing(b_plus: f64) -> f64 {
    let base = 2f64.powi(-8);
    if b_plus <= 1.0 {
        base
    } else {
        base / 2f64.powi(b_plus.sqrt().log2().ceil() as i32)
    }
}

/// Sampled potential `V` and its `k`-derivative on uniform nodes.
pub(crate) trait PotentialSampler: Sync {
    fn sample(&self, start: f64, spacing: f64, count: usize) -> Result<(Vec<f64>, Vec<f64>)>;
}

struct FiberPotential<'a> {
    profile: &'a FieldProfile,
    k: f64,
}

impl PotentialSampler for FiberPotential<'_> {
    fn sample(&self, start: f64, spacing: f64, count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let offsets = self.profile.flux_offsets(start, spacing, count, self.k)?;
        let v = offsets.iter().map(|o| o * o).collect();
        let dv = offsets.iter().map(|o| -2.0 * o).collect();
        Ok((v, dv))
    }
}

/// Eigenpairs of `-∂² + V` on one grid.
pub(crate) fn grid_eigenpairs(
    sampler: &dyn PotentialSampler,
    grid: &Grid,
    m: usize,
    rel_tol: f64,
) -> Result<Vec<(f64, Vec<f64>, f64)>> {
    let h = grid.spacing;
    let (v, _) = sampler.sample(grid.node(1), h, grid.nodes - 2)?;
    let matrix = SymTridiagonal::laplacian(v, h)?;
    let pairs = matrix.lowest_eigenpairs(m, rel_tol)?;
    Ok(pairs
        .into_iter()
        .map(|p| {
            let mut psi = Vec::with_capacity(grid.nodes);
            psi.push(0.0);
            let scale = 1.0 / h.sqrt();
            psi.extend(p.vector.iter().map(|x| x * scale));
            psi.push(0.0);
            fix_sign(&mut psi);
            (p.value, psi, p.residual)
        })
        .collect())
}

/// Make the first component that is not negligible positive.
fn fix_sign(psi: &mut [f64]) {
    let peak = psi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(first) = psi.iter().find(|v| v.abs() > 1e-8 * peak) {
        if *first < 0.0 {
            psi.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

fn fh_integral(dv: &[f64], psi: &[f64], spacing: f64) -> f64 {
    let values: Vec<f64> = dv.iter().zip(psi).map(|(d, p)| d * p * p).collect();
    simpson_uniform(&values, spacing)
}

/// Richardson-extrapolated levels over the grids `2h, h, h/2` sharing `grid`'s
/// endpoints (`grid` is the middle one).
pub(crate) fn extrapolated_levels(
    sampler: &dyn PotentialSampler,
    grid: &Grid,
    m: usize,
    k: f64,
    options: &SolverOptions,
) -> Result<Vec<BandEstimate>> {
    let coarse = grid.coarsened().ok_or_else(|| {
        Error::InvalidArgument("middle grid must have an even cell count".into())
    })?;
    let fine = grid.refined();
    let tol = options.relative_tolerance;
    let e_coarse = grid_eigenpairs(sampler, &coarse, m, tol)?;
    let e_mid = grid_eigenpairs(sampler, grid, m, tol)?;
    let e_fine = grid_eigenpairs(sampler, &fine, m, tol)?;
    let (_, dv_mid) = sampler.sample(grid.x_min, grid.spacing, grid.nodes)?;
    let (_, dv_fine) = sampler.sample(fine.x_min, fine.spacing, fine.nodes)?;

    Ok((0..m)
        .map(|j| {
            let (e0, e1, e2) = (e_coarse[j].0, e_mid[j].0, e_fine[j].0);
            let r_coarse = (4.0 * e1 - e0) / 3.0;
            let energy = (4.0 * e2 - e1) / 3.0;
            let error_estimate =
                (energy - r_coarse).abs() / 15.0 + 1e-12 * energy.abs().max(1.0);
            let s1 = fh_integral(&dv_mid, &e_mid[j].1, grid.spacing);
            let s2 = fh_integral(&dv_fine, &e_fine[j].1, fine.spacing);
            BandEstimate {
                n: j + 1,
                k,
                energy,
                error_estimate,
                slope: (4.0 * s2 - s1) / 3.0,
                acc_warn: error_estimate > options.warn_level * energy.abs().max(1.0),
            }
        })
        .collect())
}

/// Outward snapping unit: the smallest multiple of `2h` that is at least 1.
fn snap_unit(spacing: f64) -> f64 {
    2.0 * spacing * (1.0 / (2.0 * spacing)).ceil().max(1.0)
}

/// Snap `[lo, hi]` outward to the lattice and build a grid of spacing `h`
/// with an even number of cells and at least `MIN_NODES` nodes at `2h`.
pub(crate) fn lattice_grid(lo: f64, hi: f64, spacing: f64) -> Result<Grid> {
    let unit = snap_unit(spacing);
    let mut x_min = (lo / unit).floor() * unit;
    let mut x_max = (hi / unit).ceil() * unit;
    while ((x_max - x_min) / (2.0 * spacing)).round() as usize + 1 < MIN_NODES {
        x_min -= unit;
        x_max += unit;
    }
    let cells = ((x_max - x_min) / spacing).round() as usize;
    Grid::new(x_min, x_max, cells + 1)
}

pub struct FiberSolver<'a> {
    profile: &'a FieldProfile,
    options: SolverOptions,
}

impl<'a> FiberSolver<'a> {
    pub fn new(profile: &'a FieldProfile) -> Self {
        Self::with_options(profile, SolverOptions::default())
    }

    pub fn with_options(profile: &'a FieldProfile, options: SolverOptions) -> Self {
        Self { profile, options }
    }

    pub fn profile(&self) -> &'a FieldProfile {
        self.profile
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn spacing(&self) -> f64 {
        self.options
            .spacing
            .unwrap_or_else(|| default_spacing(self.profile.b_plus()))
    }

    /// Window where `(a(x) - k)² ≤ b_+(2 n_max - 1) + margin·max(1, b_+)`,
    /// snapped outward. The Agmon exponent at the edge is about
    /// `(a - k)²/(2b)`, hence the margin grows with the field.
    pub fn choose_window(&self, k: f64, n_max: usize) -> Result<Grid> {
        check_band(n_max)?;
        let b_plus = self.profile.b_plus();
        let energy = b_plus * (2 * n_max - 1) as f64;
        let reach = (energy + self.options.margin * b_plus.max(1.0)).sqrt();
        let lo = self.profile.inverse_a(k - reach)?;
        let hi = self.profile.inverse_a(k + reach)?;
        lattice_grid(lo, hi, self.spacing())
    }

    /// Dirichlet finite-difference matrix on the interior nodes.
    pub fn assemble(&self, k: f64, grid: &Grid) -> Result<SymTridiagonal> {
        let (v, _) = FiberPotential {
            profile: self.profile,
            k,
        }
        .sample(grid.node(1), grid.spacing, grid.nodes - 2)?;
        SymTridiagonal::laplacian(v, grid.spacing)
    }

    /// The `m` lowest eigenpairs on a single grid.
    pub fn eigenpairs(&self, k: f64, grid: &Grid, m: usize) -> Result<Vec<FiberEigenpair>> {
        check_band(m)?;
        let sampler = FiberPotential {
            profile: self.profile,
            k,
        };
        Ok(
            grid_eigenpairs(&sampler, grid, m, self.options.relative_tolerance)?
                .into_iter()
                .enumerate()
                .map(|(j, (energy, psi, residual))| FiberEigenpair {
                    n: j + 1,
                    k,
                    energy,
                    psi,
                    grid: *grid,
                    residual,
                })
                .collect(),
        )
    }

    /// Bands `1..=n_max` at `k`, extrapolated.
    pub fn band_values(&self, k: f64, n_max: usize) -> Result<Vec<BandEstimate>> {
        let grid = self.choose_window(k, n_max)?;
        let sampler = FiberPotential {
            profile: self.profile,
            k,
        };
        extrapolated_levels(&sampler, &grid, n_max, k, &self.options)
    }

    pub fn band_value(&self, k: f64, n: usize) -> Result<BandEstimate> {
        Ok(self.band_values(k, n)?[n - 1])
    }
}

fn check_band(n: usize) -> Result<()> {
    if (1..=MAX_BAND).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "band index must lie in 1..={MAX_BAND}, got {n}"
        )))
    }
}

/// `E_n'(k) = -2 ∫ (a - k) ψ²` on the eigenpair's own grid (Simpson).
pub fn band_derivative_fh(profile: &FieldProfile, k: f64, pair: &FiberEigenpair) -> Result<f64> {
    let g = pair.grid;
    let (_, dv) = FiberPotential { profile, k }.sample(g.x_min, g.spacing, g.nodes)?;
    Ok(fh_integral(&dv, &pair.psi, g.spacing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat() -> FieldProfile {
        FieldProfile::flat_contact(0.5, 1.0, 1, 1.0, 0.0).unwrap()
    }

    #[test]
    fn window_examples() {
        let c = FieldProfile::constant(1.0).unwrap();
        let s = FiberSolver::new(&c);
        let g = s.choose_window(0.0, 1).unwrap();
        assert!(g.x_min <= -8.0 && g.x_max >= 8.0);
        assert!(g.spacing <= 0.02);
        let g = s.choose_window(10.0, 1).unwrap();
        assert!(((g.x_min + g.x_max) / 2.0 - 10.0).abs() < 1.0);
        for p in [flat(), FieldProfile::power_tail(0.5, 1.0, 2.0, 1.0, 0.0).unwrap()] {
            for k in [-3.0, 0.0, 2.5, 40.0] {
                let g = FiberSolver::new(&p).choose_window(k, 3).unwrap();
                let x_k = p.inverse_a(k).unwrap();
                assert!(g.x_min < x_k && x_k < g.x_max);
                // nodes sit on the global lattice
                assert_eq!((g.x_min / g.spacing).fract(), 0.0);
            }
        }
        let strong = FieldProfile::constant(9.0).unwrap();
        let h = FiberSolver::new(&strong).spacing();
        assert!(h <= 0.1 / 3.0 && h <= 0.02);
    }

    #[test]
    fn assemble_examples() {
        let c = FieldProfile::constant(1.0).unwrap();
        let s = FiberSolver::new(&c);
        let g = Grid::new(-4.0, 4.0, 81).unwrap();
        let t = s.assemble(0.0, &g).unwrap();
        assert_eq!(t.order(), 79);
        for i in 0..79 {
            let x = g.node(i + 1);
            assert!((t.diag()[i] - (2.0 / 0.01 + x * x)).abs() < 1e-10);
        }
        assert!(t.off().iter().all(|&e| (e + 100.0).abs() < 1e-10));
    }

    #[test]
    fn constant_field_examples() {
        let c = FieldProfile::constant(1.0).unwrap();
        let e = FiberSolver::new(&c).band_value(3.0, 1).unwrap();
        assert!((e.energy - 1.0).abs() < 1e-9, "{}", e.energy);
        assert!(e.slope.abs() < 1e-8);
        let c2 = FieldProfile::constant(2.0).unwrap();
        let e = FiberSolver::new(&c2).band_value(0.0, 2).unwrap();
        assert!((e.energy - 6.0).abs() < 1e-8, "{}", e.energy);
        assert!(!e.acc_warn);
    }

    #[test]
    fn flat_contact_gap_example() {
        let p = flat();
        let e = FiberSolver::new(&p).band_value(3.0, 1).unwrap();
        let gap = e.energy - 1.0;
        assert!(gap < 0.0 && gap.abs() > 1e-6 && gap.abs() < 3e-6, "{gap}");
    }

    #[test]
    fn eigenpair_normalization_and_order() {
        let p = flat();
        let s = FiberSolver::new(&p);
        let g = s.choose_window(1.0, 4).unwrap();
        let pairs = s.eigenpairs(1.0, &g, 4).unwrap();
        for w in pairs.windows(2) {
            assert!(w[1].energy - w[0].energy > 1e-6);
        }
        for pr in &pairs {
            assert!(pr.energy > 0.0);
            let norm: f64 = pr.psi.iter().map(|v| v * v).sum::<f64>() * g.spacing;
            assert!((norm - 1.0).abs() < 1e-10);
            let first = pr.psi.iter().find(|v| v.abs() > 1e-8).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn h_convergence_is_second_order() {
        let c = FieldProfile::constant(1.0).unwrap();
        let mut errs = Vec::new();
        let hs = [0.08, 0.04, 0.02];
        for h in hs {
            let s = FiberSolver::with_options(
                &c,
                SolverOptions {
                    spacing: Some(h),
                    ..Default::default()
                },
            );
            let g = s.choose_window(0.0, 1).unwrap();
            errs.push((s.eigenpairs(0.0, &g, 1).unwrap()[0].energy - 1.0).abs());
        }
        let slope = (errs[0].ln() - errs[2].ln()) / (hs[0].ln() - hs[2].ln());
        assert!((slope - 2.0).abs() < 0.1, "{slope}");
    }

    #[test]
    fn window_doubling_is_below_error_estimate() {
        let p = flat();
        for k in [0.5, 2.0] {
            let base = FiberSolver::new(&p).band_value(k, 2).unwrap();
            let wide = FiberSolver::with_options(
                &p,
                SolverOptions {
                    margin: 4.0 * 60.0 + 3.0 * 3.0,
                    ..Default::default()
                },
            )
            .band_value(k, 2)
            .unwrap();
            assert!(
                (base.energy - wide.energy).abs() <= base.error_estimate.max(wide.error_estimate),
                "k={k}: {} vs {}",
                base.energy,
                wide.energy
            );
        }
    }

    #[test]
    fn fh_matches_finite_difference() {
        let p = flat();
        let s = FiberSolver::new(&p);
        for (n, k) in [(1, 0.0), (2, 1.0), (1, 1.5)] {
            let d = 1e-4;
            let fd = (s.band_value(k + d, n).unwrap().energy - s.band_value(k - d, n).unwrap().energy)
                / (2.0 * d);
            let fh = s.band_value(k, n).unwrap().slope;
            assert!(fh > 0.0);
            assert!((fh - fd).abs() < 1e-6 * fh.abs(), "n={n} k={k}: {fh} vs {fd}");
        }
    }

    #[test]
    fn single_grid_fh_is_positive_and_decays() {
        let p = flat();
        let s = FiberSolver::new(&p);
        let mut last = f64::INFINITY;
        for k in [1.0, 2.0, 3.0, 4.0] {
            let g = s.choose_window(k, 1).unwrap();
            let pair = &s.eigenpairs(k, &g, 1).unwrap()[0];
            let d = band_derivative_fh(&p, k, pair).unwrap();
            assert!(d > 0.0 && d < last, "k={k}: {d}");
            last = d;
        }
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(0.0, 1.0, 10).is_err());
        assert!(Grid::new(1.0, 0.0, 100).is_err());
        assert!(FiberSolver::new(&flat()).band_value(0.0, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn bands_simple_and_within_limits(k in -4.0f64..6.0) {
            let p = flat();
            let bands = FiberSolver::new(&p).band_values(k, 4).unwrap();
            for w in bands.windows(2) {
                prop_assert!(w[1].energy - w[0].energy >= 1e-6);
            }
            for b in &bands {
                let lambda = (2 * b.n - 1) as f64;
                prop_assert!(b.energy > 0.5 * lambda - 1e-9 && b.energy < lambda + 1e-9);
                prop_assert!(b.slope > -1e-9);
            }
        }
    }
}
