//! Band tables over `k`-grids, their structural checks, and CSV output.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::asymptotics::predict;
use crate::error::{Error, Result};
use crate::fiber::{FiberSolver, SolverOptions};
use crate::field::{landau_level, FieldKind, FieldProfile};
use crate::format::{number, optional};

pub const CSV_HEADER: &str = "n,k,E,E_prime,gap,predicted_gap,ratio,err_est,flags";
/// Gaps below this are not compared against predictions.
pub const UNRESOLVED_GAP: f64 = 1e-10;
pub const MAX_SWEEP_BAND: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowFlag {
    Unresolved,
    AccWarn,
}

impl RowFlag {
    pub fn token(self) -> &'static str {
        match self {
            RowFlag::Unresolved => "unresolved",
            RowFlag::AccWarn => "acc_warn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub n: usize,
    pub k: f64,
    /// `None` when the solve failed; the row then carries `acc_warn`.
    pub energy: Option<f64>,
    pub slope: Option<f64>,
    pub gap: Option<f64>,
    pub predicted_gap: Option<f64>,
    pub ratio: Option<f64>,
    pub error_estimate: Option<f64>,
    pub flags: Vec<RowFlag>,
}

impl BandRow {
    pub fn has(&self, flag: RowFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn csv_line(&self) -> String {
        let flags: Vec<&str> = self.flags.iter().map(|f| f.token()).collect();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            number(self.k),
            optional(self.energy),
            optional(self.slope),
            optional(self.gap),
            optional(self.predicted_gap),
            optional(self.ratio),
            optional(self.error_estimate),
            flags.join(";")
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableMetadata {
    pub profile: String,
    pub grid_policy: String,
    /// Seconds since the Unix epoch when the sweep finished.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandTable {
    pub rows: Vec<BandRow>,
    pub b_minus: f64,
    pub b_plus: f64,
    pub metadata: TableMetadata,
}

impl BandTable {
    pub fn band(&self, n: usize) -> impl Iterator<Item = &BandRow> {
        self.rows.iter().filter(move |r| r.n == n)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(out, "{}", row.csv_line())?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ASCII output")
    }
}

/// `k`-grid mini-language: `linear:start:stop:count` or
/// `geometric_offset:start:stop:count` (offsets from `a_∞`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KGrid {
    Linear { start: f64, stop: f64, count: usize },
    GeometricOffset { start: f64, stop: f64, count: usize },
}

impl FromStr for KGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidArgument(format!("bad k-grid `{s}`: {why}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 4 {
            return Err(bad("expected kind:start:stop:count"));
        }
        let start: f64 = parts[1].parse().map_err(|_| bad("start is not a number"))?;
        let stop: f64 = parts[2].parse().map_err(|_| bad("stop is not a number"))?;
        let count: usize = parts[3].parse().map_err(|_| bad("count is not an integer"))?;
        if !(start.is_finite() && stop.is_finite()) || count == 0 {
            return Err(bad("bounds must be finite and count positive"));
        }
        if count > 1 && !(start < stop) {
            return Err(bad("start must be below stop"));
        }
        match parts[0] {
            "linear" => Ok(KGrid::Linear { start, stop, count }),
            "geometric_offset" => {
                if start <= 0.0 {
                    return Err(bad("geometric offsets must be positive"));
                }
                Ok(KGrid::GeometricOffset { start, stop, count })
            }
            other => Err(bad(&format!("unknown kind `{other}`"))),
        }
    }
}

impl fmt::Display for KGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KGrid::Linear { start, stop, count } => write!(f, "linear:{start}:{stop}:{count}"),
            KGrid::GeometricOffset { start, stop, count } => {
                write!(f, "geometric_offset:{start}:{stop}:{count}")
            }
        }
    }
}

impl KGrid {
    /// Default grid: geometric offsets for flat profiles, linear otherwise.
    pub fn default_for(profile: &FieldProfile) -> Self {
        match profile.kind() {
            FieldKind::PowerTail { .. } => KGrid::Linear {
                start: 20.0,
                stop: 200.0,
                count: 10,
            },
            _ if profile.is_flat_type() => KGrid::GeometricOffset {
                start: 2.0,
                stop: 4.5,
                count: 11,
            },
            _ => KGrid::Linear {
                start: -5.0,
                stop: 5.0,
                count: 11,
            },
        }
    }

    pub fn values(&self, profile: &FieldProfile) -> Vec<f64> {
        let ramp = |start: f64, stop: f64, count: usize, j: usize| {
            if count == 1 {
                start
            } else {
                start + (stop - start) * j as f64 / (count - 1) as f64
            }
        };
        match *self {
            KGrid::Linear { start, stop, count } => {
                (0..count).map(|j| ramp(start, stop, count, j)).collect()
            }
            KGrid::GeometricOffset { start, stop, count } => {
                let base = profile.flux_at_contact().unwrap_or(0.0);
                let (l0, l1) = (start.ln(), stop.ln());
                (0..count)
                    .map(|j| base + ramp(l0, l1, count, j).exp())
                    .collect()
            }
        }
    }
}

fn validate_sweep(k_values: &[f64], n_max: usize) -> Result<()> {
    if !(1..=MAX_SWEEP_BAND).contains(&n_max) {
        return Err(Error::InvalidArgument(format!(
            "n_max must lie in 1..={MAX_SWEEP_BAND}, got {n_max}"
        )));
    }
    if k_values.iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidArgument("k values must be finite".into()));
    }
    if k_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("k values must be sorted".into()));
    }
    Ok(())
}

fn rows_at(solver: &FiberSolver<'_>, k: f64, n_max: usize) -> Vec<BandRow> {
    let profile = solver.profile();
    let failed = |n: usize| BandRow {
        n,
        k,
        energy: None,
        slope: None,
        gap: None,
        predicted_gap: None,
        ratio: None,
        error_estimate: None,
        flags: vec![RowFlag::AccWarn],
    };
    let Ok(bands) = solver.band_values(k, n_max) else {
        return (1..=n_max).map(failed).collect();
    };
    bands
        .into_iter()
        .map(|b| {
            let threshold = profile.b_plus() * landau_level(b.n).expect("n ≥ 1");
            let gap = b.energy - threshold;
            let mut flags = Vec::new();
            if gap.abs() < UNRESOLVED_GAP {
                flags.push(RowFlag::Unresolved);
            }
            if b.acc_warn {
                flags.push(RowFlag::AccWarn);
            }
            let predicted_gap = match predict(profile, k, b.n) {
                Ok(p) => p.map(|p| p.predicted_gap),
                Err(_) => {
                    if !flags.contains(&RowFlag::AccWarn) {
                        flags.push(RowFlag::AccWarn);
                    }
                    None
                }
            };
            let ratio = predicted_gap.filter(|p| p.abs() > 0.0).map(|p| gap / p);
            BandRow {
                n: b.n,
                k,
                energy: Some(b.energy),
                slope: Some(b.slope),
                gap: Some(gap),
                predicted_gap,
                ratio,
                error_estimate: Some(b.error_estimate),
                flags,
            }
        })
        .collect()
}

/// One fiber solve per `k`; rows sorted by `(n, k)`. Solver failures become
/// flagged rows rather than errors.
pub fn sweep(
    profile: &FieldProfile,
    k_values: &[f64],
    n_max: usize,
    options: &SolverOptions,
) -> Result<BandTable> {
    validate_sweep(k_values, n_max)?;
    let solver = FiberSolver::with_options(profile, *options);
    let per_k: Vec<Vec<BandRow>> = k_values
        .par_iter()
        .map(|&k| rows_at(&solver, k, n_max))
        .collect();
    let mut rows: Vec<BandRow> = Vec::with_capacity(k_values.len() * n_max);
    for n in 1..=n_max {
        rows.extend(per_k.iter().map(|r| r[n - 1].clone()));
    }
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(BandTable {
        rows,
        b_minus: profile.b_minus(),
        b_plus: profile.b_plus(),
        metadata: TableMetadata {
            profile: profile.to_string(),
            grid_policy: format!(
                "three grids 2h, h, h/2 with h = {}, margin {}",
                solver.spacing(),
                options.margin
            ),
            timestamp,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneViolation {
    pub n: usize,
    pub k_left: f64,
    pub k_right: f64,
    /// `E(k_left) - E(k_right)`, positive.
    pub drop: f64,
}

/// Adjacent rows where `E_n` falls by more than twice the combined error
/// estimate.
pub fn check_monotone(table: &BandTable) -> Vec<MonotoneViolation> {
    let mut out = Vec::new();
    for pair in table.rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.n != b.n {
            continue;
        }
        let (Some(ea), Some(eb)) = (a.energy, b.energy) else {
            continue;
        };
        let allowance = 2.0 * (a.error_estimate.unwrap_or(0.0) + b.error_estimate.unwrap_or(0.0));
        if ea - eb > allowance {
            out.push(MonotoneViolation {
                n: a.n,
                k_left: a.k,
                k_right: b.k,
                drop: ea - eb,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitSide {
    /// Smallest `k`, compared with `b_- Λ_n`.
    Lower,
    /// Largest `k`, compared with `b_+ Λ_n`.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitEntry {
    pub n: usize,
    pub k: f64,
    pub side: LimitSide,
    pub target: f64,
    pub deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitsReport {
    pub tolerance: f64,
    pub entries: Vec<LimitEntry>,
}

impl LimitsReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LimitEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }
}

/// Compare the extreme rows of each band with the limits `b_± Λ_n`, relative
/// to the limit.
pub fn limits_check(table: &BandTable, tol: f64) -> LimitsReport {
    let mut entries = Vec::new();
    let max_n = table.rows.iter().map(|r| r.n).max().unwrap_or(0);
    for n in 1..=max_n {
        let rows: Vec<&BandRow> = table.band(n).filter(|r| r.energy.is_some()).collect();
        let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
            continue;
        };
        let lambda = (2 * n - 1) as f64;
        for (row, side, target) in [
            (first, LimitSide::Lower, table.b_minus * lambda),
            (last, LimitSide::Upper, table.b_plus * lambda),
        ] {
            let deviation = row.energy.expect("filtered") - target;
            entries.push(LimitEntry {
                n,
                k: row.k,
                side,
                target,
                deviation,
                pass: deviation.abs() <= tol * target.abs(),
            });
        }
    }
    LimitsReport {
        tolerance: tol,
        entries,
    }
}
