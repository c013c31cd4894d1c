//! Run configuration files: one `key = value` per line, `#` comments.
//!
//! ```text
//! kind = flat_contact
//! b_minus = 0.5
//! b_plus = 1
//! p = 1
//! n_max = 2
//! k_grid = geometric_offset:2:4.5:11
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::FieldProfile;
use crate::sweep::KGrid;

const PROFILE_KEYS: [&str; 11] = [
    "kind", "b_minus", "b_plus", "b0", "c", "M", "p", "x0", "x_inf", "x_jump", "table_path",
];
const RUN_KEYS: [&str; 6] = ["n_max", "k_grid", "deltas", "band", "out", "limit_tol"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub n_max: Option<usize>,
    pub k_grid: Option<KGrid>,
    pub deltas: Option<Vec<f64>>,
    pub band: Option<usize>,
    pub out: Option<PathBuf>,
    pub limit_tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub profile: FieldProfile,
    pub run: RunSettings,
}

#[derive(Debug)]
struct Entries {
    values: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !PROFILE_KEYS.contains(&key) && !RUN_KEYS.contains(&key) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if value.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: format!("key `{key}` has no value"),
                });
            }
            if let Some((first, _)) = values.insert(key.to_string(), (line, value.to_string())) {
                return Err(Error::Parse {
                    line,
                    message: format!("key `{key}` already set on line {first}"),
                });
            }
        }
        Ok(Self { values })
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.values.get(key)
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: *line,
                        message: format!("`{key}` must be a finite number, got `{v}`"),
                    })
            })
            .transpose()
    }

    fn integer(&self, key: &str) -> Result<Option<usize>> {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<usize>().map_err(|_| Error::Parse {
                    line: *line,
                    message: format!("`{key}` must be a non-negative integer, got `{v}`"),
                })
            })
            .transpose()
    }

    fn required(&self, key: &str, kind: &str) -> Result<f64> {
        self.number(key)?.ok_or_else(|| {
            Error::InvalidProfile(format!("missing required key `{key}` for kind {kind}"))
        })
    }

    /// Rejects profile keys that mean nothing for `kind`.
    fn only(&self, kind: &str, allowed: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.values {
            if PROFILE_KEYS.contains(&key.as_str()) && key != "kind" && !allowed.contains(&key.as_str()) {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("key `{key}` does not apply to kind {kind}"),
                });
            }
        }
        Ok(())
    }
}

/// Parses a configuration text; relative `table_path`s resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<Config> {
    let e = Entries::parse(text)?;
    let profile = build_profile(&e, base)?;
    Ok(Config {
        profile,
        run: run_settings(&e)?,
    })
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

fn build_profile(e: &Entries, base: &Path) -> Result<FieldProfile> {
    let kind = e
        .raw("kind")
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::InvalidProfile("missing required key `kind`".into()))?;
    let kind = kind.to_ascii_lowercase().replace('-', "_");
    let limits = |e: &Entries, k: &str| Ok::<_, Error>((e.required("b_minus", k)?, e.required("b_plus", k)?));
    match kind.as_str() {
        "constant" => {
            e.only("constant", &["b0"])?;
            FieldProfile::constant(e.required("b0", "constant")?)
        }
        "power_tail" | "power" => {
            e.only("power_tail", &["b_minus", "b_plus", "M", "c", "x0"])?;
            let (bm, bp) = limits(e, "power_tail")?;
            FieldProfile::power_tail(
                bm,
                bp,
                e.required("M", "power_tail")?,
                e.number("c")?.unwrap_or(1.0),
                e.number("x0")?.unwrap_or(0.0),
            )
        }
        "flat_contact" | "flat" => {
            e.only("flat_contact", &["b_minus", "b_plus", "p", "c", "x_inf"])?;
            let (bm, bp) = limits(e, "flat_contact")?;
            let order = e.integer("p")?.ok_or_else(|| {
                Error::InvalidProfile("missing required key `p` for kind flat_contact".into())
            })?;
            let order = u32::try_from(order)
                .map_err(|_| Error::InvalidProfile(format!("contact order p={order} is too large")))?;
            FieldProfile::flat_contact(
                bm,
                bp,
                order,
                e.number("c")?.unwrap_or(1.0),
                e.number("x_inf")?.unwrap_or(0.0),
            )
        }
        "infinite_contact" | "infinite" => {
            e.only("infinite_contact", &["b_minus", "b_plus", "c", "x_inf"])?;
            let (bm, bp) = limits(e, "infinite_contact")?;
            FieldProfile::infinite_contact(
                bm,
                bp,
                e.number("c")?.unwrap_or(1.0),
                e.number("x_inf")?.unwrap_or(0.0),
            )
        }
        "piecewise_constant" | "piecewise" => {
            e.only("piecewise_constant", &["b_minus", "b_plus", "x_jump"])?;
            let (bm, bp) = limits(e, "piecewise_constant")?;
            FieldProfile::piecewise_constant(bm, bp, e.number("x_jump")?.unwrap_or(0.0))
        }
        "tabulated" => {
            e.only("tabulated", &["b_minus", "b_plus", "table_path"])?;
            let (_, rel) = e.raw("table_path").ok_or_else(|| {
                Error::InvalidProfile("missing required key `table_path` for kind tabulated".into())
            })?;
            let path = base.join(rel);
            let profile = FieldProfile::tabulated(&read_table(&path)?)?;
            // Optional limits must agree with the table ends.
            for (key, value) in [("b_minus", profile.b_minus()), ("b_plus", profile.b_plus())] {
                if let Some(given) = e.number(key)? {
                    if (given - value).abs() > 1e-12 * value.abs().max(1.0) {
                        return Err(Error::InvalidProfile(format!(
                            "`{key}` = {given} disagrees with the table end value {value}"
                        )));
                    }
                }
            }
            Ok(profile)
        }
        other => Err(Error::InvalidProfile(format!(
            "unknown kind `{other}` (expected constant, power_tail, flat_contact, \
             infinite_contact, piecewise_constant or tabulated)"
        ))),
    }
}

/// Reads an `x,b` table.
pub fn read_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let display = path.display().to_string();
    let csv_err = |source| Error::Csv {
        path: display.clone(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.len() != 2 || &header[0] != "x" || &header[1] != "b" {
        return Err(Error::Parse {
            line: 1,
            message: format!("{display}: expected header `x,b`"),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = i + 2;
        let field = |j: usize| {
            record[j].parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("{display}: `{}` is not a number", &record[j]),
            })
        };
        rows.push((field(0)?, field(1)?));
    }
    Ok(rows)
}

fn run_settings(e: &Entries) -> Result<RunSettings> {
    let k_grid = e
        .raw("k_grid")
        .map(|(line, v)| {
            v.parse::<KGrid>().map_err(|err| Error::Parse {
                line: *line,
                message: err.to_string(),
            })
        })
        .transpose()?;
    let deltas = e
        .raw("deltas")
        .map(|(line, v)| parse_list(v).map_err(|message| Error::Parse { line: *line, message }))
        .transpose()?;
    let n_max = e.integer("n_max")?;
    if let (Some(0), Some((line, _))) = (n_max, e.raw("n_max")) {
        return Err(Error::Parse {
            line: *line,
            message: "`n_max` must be at least 1".into(),
        });
    }
    let limit_tol = e.number("limit_tol")?;
    if let (Some(t), Some((line, _))) = (limit_tol, e.raw("limit_tol")) {
        if t <= 0.0 {
            return Err(Error::Parse {
                line: *line,
                message: format!("`limit_tol` must be positive, got {t}"),
            });
        }
    }
    Ok(RunSettings {
        n_max,
        k_grid,
        deltas,
        band: e.integer("band")?,
        out: e.raw("out").map(|(_, v)| PathBuf::from(v)),
        limit_tol,
    })
}

/// Comma-separated numbers, e.g. `1e-8, 1e-6, 1e-4`.
pub fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("`{s}` is not a finite number"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldKind;

    fn parse(text: &str) -> Result<Config> {
        parse_config(text, Path::new("."))
    }

    #[test]
    fn flat_config() {
        let c = parse("# flat\nkind = flat_contact\nb_minus = 0.5\nb_plus = 1\np = 2\nn_max = 3\nk_grid = linear:0:1:5\n")
            .unwrap();
        assert!(matches!(
            c.profile.kind(),
            FieldKind::FlatContact { order: 2, amplitude, contact } if *amplitude == 1.0 && *contact == 0.0
        ));
        assert_eq!(c.run.n_max, Some(3));
        assert_eq!(c.run.k_grid, Some("linear:0:1:5".parse().unwrap()));
    }

    #[test]
    fn missing_key_is_named() {
        let err = parse("kind = power_tail\nb_minus = 0.5\nM = 2\n").unwrap_err();
        assert!(err.to_string().contains("b_plus"), "{err}");
        assert!(err.is_usage());
    }

    #[test]
    fn rejections() {
        let cases = [
            ("kind = constant\nb0 = 1\nfoo = 2\n", "foo"),
            ("kind = constant\nb0 = 1\nb0 = 2\n", "already"),
            ("kind = constant\nb0 = 1\np = 2\n", "does not apply"),
            ("kind = constant\nb0 = one\n", "finite number"),
            ("kind = constant\nb0 = 1\nn_max = 0\n", "at least 1"),
            ("kind = constant\nb0 = 1\ndeltas = 1e-4, x\n", "`x`"),
            ("kind = spiral\n", "unknown kind"),
            ("b0 = 1\n", "kind"),
            ("kind = constant\nb0\n", "key = value"),
        ];
        for (text, needle) in cases {
            let err = parse(text).unwrap_err();
            assert!(err.to_string().contains(needle), "{text:?}: {err}");
            assert!(err.is_usage());
        }
        let err = parse("kind = constant\n\nb0 = 1\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn deltas_and_tolerance() {
        let c = parse("kind = constant\nb0 = 2\ndeltas = 1e-8, 1e-6,1e-4\nlimit_tol = 1e-6\nout = run.csv\n").unwrap();
        assert_eq!(c.run.deltas, Some(vec![1e-8, 1e-6, 1e-4]));
        assert_eq!(c.run.limit_tol, Some(1e-6));
        assert_eq!(c.run.out, Some(PathBuf::from("run.csv")));
    }

    #[test]
    fn tabulated_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.csv"), "x,b\n-1,0.5\n0,0.75\n1,1\n").unwrap();
        let text = "kind = tabulated\ntable_path = b.csv\nb_plus = 1\n";
        let c = parse_config(text, dir.path()).unwrap();
        assert_eq!((c.profile.b_minus(), c.profile.b_plus()), (0.5, 1.0));
        assert!(parse_config("kind = tabulated\ntable_path = b.csv\nb_plus = 2\n", dir.path()).is_err());
        assert!(matches!(
            parse_config("kind = tabulated\ntable_path = nope.csv\n", dir.path()),
            Err(Error::Csv { .. })
        ));
        std::fs::write(dir.path().join("bad.csv"), "x,y\n0,1\n1,2\n").unwrap();
        assert!(parse_config("kind = tabulated\ntable_path = bad.csv\n", dir.path()).is_err());
    }
}
