use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use iwatsuka::asymptotics::{heuristic_gap, mu_n_scaled};
use iwatsuka::config::{load_config, parse_list, Config};
use iwatsuka::field::{thresholds, FieldKind};
use iwatsuka::fit::fit_power_law;
use iwatsuka::format::{number, optional};
use iwatsuka::selftest::{run_selftest, SelftestOptions};
use iwatsuka::sweep::{check_monotone, limits_check, sweep, BandRow, BandTable, KGrid, RowFlag};
use iwatsuka::transport::{scaling_fit, scaling_points, write_scaling_csv, ScalingModel};
use iwatsuka::{FiberSolver, FieldProfile, SolverOptions};

/// Band functions of Iwatsuka magnetic Hamiltonians.
#[derive(Debug, Parser)]
#[command(name = "iwatsuka", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (profile plus run keys)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV destination; stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Highest band index
    #[arg(long, global = true)]
    n_max: Option<usize>,
    /// k-grid, `linear:start:stop:count` or `geometric_offset:start:stop:count`
    #[arg(long, global = true)]
    k_grid: Option<KGrid>,
    /// Suppress summaries on stderr
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep E_n(k) over the k-grid and write the band table
    Bands,
    /// Band table joined with μ_n, b_+μ_n and the predicted and heuristic gaps
    Asym,
    /// Group velocity E_n'(k(δ)) near the threshold b_+Λ_n and its δ-scaling
    Current {
        /// Band index
        #[arg(long)]
        band: Option<usize>,
        /// Comma-separated energy offsets below the threshold
        #[arg(long)]
        deltas: Option<String>,
    },
    /// Describe the field profile and list thresholds
    Fields,
    /// Run the oracle suite
    Selftest {
        /// Loosen the eigensolver tolerance to check that the suite notices
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

/// Input problems, reported with exit status 2; everything else is 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<iwatsuka::Error>() {
        Some(e) if e.is_usage() => 2,
        _ => 1,
    }
}

struct Run {
    config: Config,
    n_max: usize,
    out: Option<PathBuf>,
    quiet: bool,
}

impl Run {
    fn load(global: &Global) -> Result<Self> {
        let path = global
            .config
            .as_deref()
            .ok_or_else(|| usage("this command needs --config <path>"))?;
        let config = load_config(path).with_context(|| format!("loading {}", path.display()))?;
        let n_max = global.n_max.or(config.run.n_max).unwrap_or(1);
        if n_max == 0 {
            return Err(usage("--n-max must be at least 1"));
        }
        let out = global.out.clone().or_else(|| config.run.out.clone());
        Ok(Self {
            config,
            n_max,
            out,
            quiet: global.quiet,
        })
    }

    fn profile(&self) -> &FieldProfile {
        &self.config.profile
    }

    fn k_values(&self, global: &Global) -> Vec<f64> {
        global
            .k_grid
            .or(self.config.run.k_grid)
            .unwrap_or_else(|| KGrid::default_for(self.profile()))
            .values(self.profile())
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", line.as_ref());
        }
    }

    fn emit(&self, csv: &str) -> Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, csv)
                .with_context(|| format!("writing {}", path.display())),
            None => {
                print!("{csv}");
                Ok(())
            }
        }
    }
}

fn threshold_line(profile: &FieldProfile, n_max: usize) -> String {
    let t: Vec<String> = thresholds(profile, n_max).into_iter().map(number).collect();
    format!("thresholds: {}", t.join(", "))
}

/// Per-band summary; returns whether the table is numerically sound.
fn summarize(run: &Run, table: &BandTable, limit_tol: Option<f64>) -> bool {
    let mut sound = true;
    for n in 1..=run.n_max {
        let rows: Vec<&BandRow> = table.band(n).collect();
        let failed = rows.iter().filter(|r| r.energy.is_none()).count();
        let warned = rows.iter().filter(|r| r.has(RowFlag::AccWarn)).count();
        let unresolved = rows.iter().filter(|r| r.has(RowFlag::Unresolved)).count();
        let (lo, hi) = rows
            .iter()
            .filter_map(|r| r.energy)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| (a.min(e), b.max(e)));
        run.say(format!(
            "band {n}: E in [{}, {}], {} rows, {unresolved} unresolved, {warned} acc_warn, {failed} failed",
            number(lo),
            number(hi),
            rows.len()
        ));
        sound &= failed == 0;
    }
    let violations = check_monotone(table);
    for v in &violations {
        run.say(format!(
            "monotonicity violation in band {} between k={} and k={} (drop {})",
            v.n,
            number(v.k_left),
            number(v.k_right),
            number(v.drop)
        ));
    }
    sound &= violations.is_empty();
    if let Some(tol) = limit_tol {
        let report = limits_check(table, tol);
        for e in report.failures() {
            run.say(format!(
                "band {} misses its {:?} limit {} at k={} (relative deviation {})",
                e.n,
                e.side,
                number(e.target),
                number(e.k),
                number(e.deviation)
            ));
        }
        sound &= report.passed();
    }
    sound
}

fn cmd_bands(global: &Global) -> Result<()> {
    let run = Run::load(global)?;
    let ks = run.k_values(global);
    run.say(format!("profile: {}", run.profile()));
    run.say(threshold_line(run.profile(), run.n_max));
    let table = sweep(run.profile(), &ks, run.n_max, &SolverOptions::default())?;
    run.emit(&table.to_csv())?;
    if !summarize(&run, &table, run.config.run.limit_tol) {
        return Err(anyhow!("band table failed its numerical checks"));
    }
    Ok(())
}

const ASYM_HEADER: &str = "n,k,E,gap,mu,b_plus_mu,predicted_gap,heuristic_gap,ratio,flags";
const INFINITE_Q: [f64; 4] = [0.0, 2.0, 4.0, 6.0];

struct AsymRow {
    line: String,
    k: f64,
    gap: Option<f64>,
    resolved: bool,
    weighted: Vec<f64>,
}

fn asym_row(profile: &FieldProfile, row: &BandRow, infinite: bool) -> AsymRow {
    let mu = mu_n_scaled(profile, row.k, row.n).ok();
    let b_mu = mu.map(|m| profile.b_plus() * m.value());
    let heuristic = heuristic_gap(profile, row.k, row.n).ok();
    let flags: Vec<&str> = row.flags.iter().map(|f| f.token()).collect();
    let mut line = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        row.n,
        number(row.k),
        optional(row.energy),
        optional(row.gap),
        optional(mu.map(|m| m.value())),
        optional(b_mu),
        optional(row.predicted_gap),
        optional(heuristic),
        optional(row.ratio),
        flags.join(";")
    );
    let resolved = row.gap.is_some() && !row.has(RowFlag::Unresolved);
    let mut weighted = Vec::new();
    if infinite {
        let scale = profile.t_of_k(row.k).ok().map(|t| (t * t).exp());
        for q in INFINITE_Q {
            let w = match (scale, row.gap) {
                (Some(s), Some(g)) if resolved && row.k > 0.0 => Some(s * g.abs() * row.k.powf(q)),
                _ => None,
            };
            line.push(',');
            line.push_str(&optional(w));
            weighted.push(w.unwrap_or(f64::NAN));
        }
    }
    AsymRow {
        line,
        k: row.k,
        gap: row.gap,
        resolved,
        weighted,
    }
}

fn cmd_asym(global: &Global) -> Result<()> {
    let run = Run::load(global)?;
    let profile = run.profile();
    let ks = run.k_values(global);
    run.say(format!("profile: {profile}"));
    run.say(threshold_line(profile, run.n_max));
    let table = sweep(profile, &ks, run.n_max, &SolverOptions::default())?;
    let infinite = matches!(profile.kind(), FieldKind::InfiniteContact { .. });
    let rows: Vec<AsymRow> = table
        .rows
        .par_iter()
        .map(|r| asym_row(profile, r, infinite))
        .collect();
    let mut csv = String::from(ASYM_HEADER);
    if infinite {
        for q in INFINITE_Q {
            csv.push_str(&format!(",weighted_q{q}"));
        }
    }
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.line);
        csv.push('\n');
    }
    run.emit(&csv)?;
    for n in 1..=run.n_max {
        let band: Vec<&AsymRow> = rows
            .iter()
            .zip(&table.rows)
            .filter(|(_, t)| t.n == n)
            .map(|(r, _)| r)
            .collect();
        let resolved = band.iter().filter(|r| r.resolved).count();
        match profile.kind() {
            FieldKind::PowerTail { exponent, .. } => {
                let (x, y): (Vec<f64>, Vec<f64>) = band
                    .iter()
                    .filter(|r| r.resolved && r.k > 0.0)
                    .filter_map(|r| r.gap.map(|g| (r.k, g)))
                    .unzip();
                match fit_power_law(&x, &y) {
                    Ok((fit, c)) if x.len() >= 2 => run.say(format!(
                        "band {n}: log-log slope {} (model -{}), prefactor {}",
                        number(fit.slope),
                        number(*exponent),
                        number(c)
                    )),
                    _ => run.say(format!("band {n}: too few resolved rows for a log-log fit")),
                }
            }
            _ if infinite => {
                for (j, q) in INFINITE_Q.iter().enumerate() {
                    let w: Vec<f64> = band
                        .iter()
                        .filter(|r| r.resolved)
                        .map(|r| r.weighted[j])
                        .filter(|v| v.is_finite())
                        .collect();
                    let up = w.windows(2).filter(|p| p[1] >= p[0]).count();
                    run.say(format!(
                        "band {n}: e^(t_k^2)|gap|k^{q} over {} resolved rows: {}",
                        w.len(),
                        if up == 0 { "decreasing".to_string() } else { format!("{up} increases") }
                    ));
                }
            }
            _ => {
                let ratios: Vec<String> = table
                    .band(n)
                    .filter(|r| !r.has(RowFlag::Unresolved))
                    .filter_map(|r| r.ratio)
                    .map(|r| format!("{r:.3}"))
                    .collect();
                run.say(format!(
                    "band {n}: {resolved} resolved rows, ratios {}",
                    if ratios.is_empty() { "-".into() } else { ratios.join(" ") }
                ));
            }
        }
    }
    if !summarize(&run, &table, run.config.run.limit_tol) {
        return Err(anyhow!("band table failed its numerical checks"));
    }
    Ok(())
}

fn cmd_current(global: &Global, band: Option<usize>, deltas: Option<&str>) -> Result<()> {
    let run = Run::load(global)?;
    let profile = run.profile();
    let n = band.or(run.config.run.band).unwrap_or(1);
    let deltas = match deltas {
        Some(text) => parse_list(text).map_err(|e| usage(format!("--deltas: {e}")))?,
        None => run
            .config
            .run
            .deltas
            .clone()
            .ok_or_else(|| usage("current needs --deltas or a `deltas` key"))?,
    };
    let (model, target) = match profile.kind() {
        FieldKind::PowerTail { exponent, .. } => (ScalingModel::Power, 1.0 + 1.0 / exponent),
        _ if profile.is_flat_type() => (ScalingModel::Flat, 1.0),
        _ => {
            return Err(usage(format!(
                "current scaling is defined for flat-type and power_tail profiles, not {}",
                profile.kind_name()
            )))
        }
    };
    let pairs_check: Vec<(f64, f64)> = deltas.iter().map(|&d| (d, 1.0)).collect();
    // Validate the δ list before solving anything.
    scaling_fit(&pairs_check, model)?;
    run.say(format!("profile: {profile}"));
    let solver = FiberSolver::new(profile);
    let points = scaling_points(&solver, n, &deltas, model)?;
    let mut buf = Vec::new();
    write_scaling_csv(&points, &mut buf)?;
    run.emit(&String::from_utf8(buf)?)?;
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.delta, p.slope)).collect();
    // The δ list was validated above, so a failure here is numerical.
    let fit = scaling_fit(&pairs, model).map_err(|e| anyhow!("{e}"))?;
    run.say(format!(
        "band {n}: fitted exponent {} against {} (model {})",
        number(fit.exponent),
        match model {
            ScalingModel::Flat => "δ√|log δ|",
            ScalingModel::Power => "δ",
        },
        number(target)
    ));
    Ok(())
}

fn cmd_fields(global: &Global) -> Result<()> {
    let run = Run::load(global)?;
    let profile = run.profile();
    run.say(profile.describe().trim_end());
    if let Some(a_inf) = profile.flux_at_contact() {
        run.say(format!("a_inf = {}", number(a_inf)));
    }
    run.say(threshold_line(profile, run.n_max));
    // b and a on [-10, 10].
    let mut csv = String::from("x,b,a\n");
    for j in 0..=200 {
        let x = -10.0 + 0.1 * f64::from(j);
        let a = profile.eval_a(x)?;
        csv.push_str(&format!("{},{},{}\n", number(x), number(profile.eval_b(x)), number(a)));
    }
    run.emit(&csv)
}

fn cmd_selftest(global: &Global, inject_fault: bool) -> Result<()> {
    let options = if inject_fault {
        SelftestOptions::with_injected_fault()
    } else {
        SelftestOptions::default()
    };
    let report = run_selftest(&options);
    if !global.quiet || !report.passed() {
        println!("{report}");
    }
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name).collect();
        Err(anyhow!("failed checks: {}", names.join(", ")))
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("IWATSUKA_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| usage(format!("IWATSUKA_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the worker pool")
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let g = &cli.global;
    match &cli.command {
        Command::Bands => cmd_bands(g),
        Command::Asym => cmd_asym(g),
        Command::Current { band, deltas } => cmd_current(g, *band, deltas.as_deref()),
        Command::Fields => cmd_fields(g),
        Command::Selftest { inject_fault } => cmd_selftest(g, *inject_fault),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
