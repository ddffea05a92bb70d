//! Flat `key = value` scenario configuration with `[section]` headers.
//! The schema is documented in the repository README.

use crate::calculus::MeasureSpec;
use crate::error::{Error, Result};
use crate::mesh::{lshape_vertices, rectangle_vertices, DomainSpec};
use crate::solver::SolverOptions;
use std::collections::BTreeMap;

/// Parsed configuration text: `section → key → value`.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::from("global");
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(Error::Config(format!(
                        "line {}: malformed section header `{line}`",
                        lineno + 1
                    )));
                }
                current = line[1..line.len() - 1].trim().to_lowercase();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            sections
                .entry(current.clone())
                .or_default()
                .insert(key.trim().to_lowercase(), value.trim().to_string());
        }
        Ok(RawConfig { sections })
    }

    pub fn load(path: &std::path::Path) -> Result<RawConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RawConfig::parse(&text)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|s| s.as_str())
    }

    pub fn f64_opt(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("[{section}] {key}: not a number: `{v}`"))),
        }
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(section, key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, section: &str, key: &str) -> Result<f64> {
        self.f64_opt(section, key)?
            .ok_or_else(|| Error::Config(format!("[{section}] {key}: missing required field")))
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("[{section}] {key}: not a count: `{v}`"))),
        }
    }

    pub fn string_or(&self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key).unwrap_or(default).to_string()
    }

    /// Comma-separated float list; an empty value is an empty list.
    pub fn f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) if v.trim().is_empty() => Ok(Some(Vec::new())),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("[{section}] {key}: bad number `{s}`")))
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }
}

/// Which operation a scenario drives.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemKind {
    MeasureData,
    Potential,
    Trace,
    WeakTrace,
    Capacity,
    Wolff,
    Singular,
    Hardy,
    Verify,
}

impl ProblemKind {
    pub fn parse(s: &str) -> Result<ProblemKind> {
        Ok(match s {
            "measure_data" => ProblemKind::MeasureData,
            "potential" => ProblemKind::Potential,
            "trace" => ProblemKind::Trace,
            "weak_trace" => ProblemKind::WeakTrace,
            "capacity" => ProblemKind::Capacity,
            "wolff" => ProblemKind::Wolff,
            "singular" => ProblemKind::Singular,
            "hardy" => ProblemKind::Hardy,
            "verify" => ProblemKind::Verify,
            other => {
                return Err(Error::Config(format!(
                    "[problem] kind: unknown kind `{other}`"
                )))
            }
        })
    }
}

/// Golden-value expectation checked after a run; violations fail the run.
#[derive(Clone, Debug)]
pub struct Expectation {
    pub name: String,
    pub target: f64,
    pub tol: f64,
}

/// A fully validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub domain: DomainSpec,
    pub weight_t: f64,
    pub measure: MeasureSpec,
    pub p: f64,
    pub anisotropy: Vec<f64>,
    pub problem: ProblemKind,
    pub q: f64,
    pub gamma: f64,
    pub sublinear: bool,
    pub condenser: (Vec<f64>, Vec<f64>),
    pub wolff_radius: f64,
    pub wolff_points: Vec<Vec<f64>>,
    pub theorems: Vec<String>,
    pub restarts: usize,
    pub solver: SolverOptions,
    pub exhaustion_r0: Option<f64>,
    pub exhaustion_ratio: f64,
    pub exhaustion_k_max: usize,
    pub singular_k_max: usize,
    pub mass_cap: Option<(f64, f64)>,
    pub prefix: String,
    pub expectations: Vec<Expectation>,
    pub expected_verdict: Option<String>,
}

impl Scenario {
    pub fn from_config(cfg: &RawConfig) -> Result<Scenario> {
        let domain = parse_domain(cfg)?;
        let dim = match &domain {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Polygon { .. } => 2,
        };

        let p = cfg.f64_or("operator", "p", 2.0)?;
        if !(p > 1.0) {
            return Err(Error::Config(format!("[operator] p: must satisfy p > 1, got {p}")));
        }
        let anisotropy = cfg
            .f64_list("operator", "anisotropy")?
            .unwrap_or_else(|| vec![1.0; dim]);
        if anisotropy.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Config("[operator] anisotropy: entries must be positive".into()));
        }

        let weight_t = cfg.f64_or("weight", "t", 0.0)?;
        if !(-1.0 < weight_t && weight_t < p - 1.0) {
            return Err(Error::Config(format!(
                "[weight] t: must satisfy -1 < t < p - 1 = {}, got {weight_t}",
                p - 1.0
            )));
        }

        let measure = parse_measure(cfg, dim)?;

        let problem = ProblemKind::parse(&cfg.string_or("problem", "kind", "measure_data"))?;
        let q = cfg.f64_or("problem", "q", 1.0)?;
        match problem {
            ProblemKind::Trace | ProblemKind::WeakTrace | ProblemKind::Verify => {
                if !(0.0 < q && q < p) {
                    return Err(Error::Config(format!(
                        "[problem] q: must satisfy 0 < q < p = {p}, got {q}"
                    )));
                }
            }
            _ => {}
        }
        let gamma = cfg.f64_or("problem", "gamma", 1.0)?;
        if problem == ProblemKind::Singular && !(gamma > 0.0) {
            return Err(Error::Config(format!("[problem] gamma: must satisfy γ > 0, got {gamma}")));
        }
        let sublinear = match cfg.string_or("problem", "nonlinearity", "power_decreasing").as_str() {
            "power_decreasing" => false,
            "power_sublinear" => true,
            other => {
                return Err(Error::Config(format!(
                    "[problem] nonlinearity: unknown kind `{other}`"
                )))
            }
        };

        let condenser = (
            cfg.f64_list("problem", "k_lo")?.unwrap_or_else(|| vec![0.25; dim]),
            cfg.f64_list("problem", "k_hi")?.unwrap_or_else(|| vec![0.75; dim]),
        );
        let wolff_radius = cfg.f64_or("problem", "radius", 0.1)?;
        let wolff_points = match cfg.get("problem", "points") {
            None => vec![],
            Some(text) => parse_points(text, dim)?,
        };
        let theorems: Vec<String> = cfg
            .string_or("problem", "theorems", "thm11")
            .split(',')
            .map(|s| s.trim().to_lowercase())
            .filter(|s| !s.is_empty())
            .collect();
        let restarts = cfg.usize_or("problem", "restarts", 5)?;

        let solver = SolverOptions {
            tol: cfg.f64_or("solver", "tol", 1e-9)?,
            max_iter: cfg.usize_or("solver", "max_iter", 200)?,
            eps_initial: cfg.f64_or("solver", "eps_initial", 1e-2)?,
            eps_min: cfg.f64_or("solver", "eps_min", 1e-10)?,
            blow_up_threshold: cfg.f64_or("solver", "blow_up_threshold", 1e8)?,
        };
        let mass_cap = match cfg.f64_opt("solver", "cap_m0")? {
            Some(m0) => Some((m0, cfg.f64_or("solver", "cap_growth", 2.0)?)),
            None => None,
        };

        let mut expectations = Vec::new();
        for (name, tol_key, default_tol) in [
            ("u_value", "u_tol", 1e-6),
            ("c1", "c1_tol", 0.02),
            ("value", "value_tol", 1e-6),
        ] {
            if let Some(target) = cfg.f64_opt("expect", name)? {
                expectations.push(Expectation {
                    name: name.to_string(),
                    target,
                    tol: cfg.f64_or("expect", tol_key, default_tol)?,
                });
            }
        }
        let expected_verdict = cfg.get("expect", "verdict").map(|s| s.to_lowercase());

        Ok(Scenario {
            domain,
            weight_t,
            measure,
            p,
            anisotropy,
            problem,
            q,
            gamma,
            sublinear,
            condenser,
            wolff_radius,
            wolff_points,
            theorems,
            restarts,
            solver,
            exhaustion_r0: cfg.f64_opt("solver", "r0")?,
            exhaustion_ratio: cfg.f64_or("solver", "ratio", 2.0)?,
            exhaustion_k_max: cfg.usize_or("solver", "k_max", 12)?,
            singular_k_max: cfg.usize_or("solver", "singular_k_max", 26)?,
            mass_cap,
            prefix: cfg.string_or("output", "prefix", "run"),
            expectations,
            expected_verdict,
        })
    }

    /// The point where `[expect] u_value` is checked.
    pub fn probe_point(&self, cfg: &RawConfig) -> Result<Vec<f64>> {
        match cfg.get("expect", "u_at") {
            Some(text) => {
                let dim = match &self.domain {
                    DomainSpec::Interval { .. } => 1,
                    DomainSpec::Polygon { .. } => 2,
                };
                let pts = parse_points(text, dim)?;
                Ok(pts.into_iter().next().unwrap_or_else(|| vec![0.5]))
            }
            None => Ok(match &self.domain {
                DomainSpec::Interval { a, b, .. } => vec![(a + b) / 2.0],
                DomainSpec::Polygon { .. } => vec![0.5, 0.5],
            }),
        }
    }
}

fn parse_domain(cfg: &RawConfig) -> Result<DomainSpec> {
    match cfg.string_or("domain", "kind", "interval").as_str() {
        "interval" => {
            let a = cfg.f64_or("domain", "a", 0.0)?;
            let b = cfg.f64_or("domain", "b", 1.0)?;
            let n_cells = cfg.usize_or("domain", "n_cells", 256)?;
            if !(a < b) {
                return Err(Error::Config(format!("[domain] requires a < b, got {a} ≥ {b}")));
            }
            if n_cells < 2 {
                return Err(Error::Config("[domain] n_cells: need at least 2 cells".into()));
            }
            Ok(DomainSpec::Interval { a, b, n_cells })
        }
        "rectangle" => {
            let x0 = cfg.f64_or("domain", "x0", 0.0)?;
            let y0 = cfg.f64_or("domain", "y0", 0.0)?;
            let x1 = cfg.f64_or("domain", "x1", 1.0)?;
            let y1 = cfg.f64_or("domain", "y1", 1.0)?;
            let h = cfg.require_f64("domain", "h")?;
            Ok(DomainSpec::Polygon {
                vertices: rectangle_vertices(x0, y0, x1, y1),
                h,
            })
        }
        "lshape" => {
            let h = cfg.require_f64("domain", "h")?;
            Ok(DomainSpec::Polygon {
                vertices: lshape_vertices(),
                h,
            })
        }
        other => Err(Error::Config(format!("[domain] kind: unknown kind `{other}`"))),
    }
}

fn parse_measure(cfg: &RawConfig, dim: usize) -> Result<MeasureSpec> {
    let base = match cfg.string_or("measure", "kind", "lebesgue").as_str() {
        "zero" => MeasureSpec::Zero,
        "lebesgue" => MeasureSpec::Lebesgue,
        "power_density" => {
            let s = cfg.require_f64("measure", "s")?;
            if !(s >= 1.0) {
                return Err(Error::Config(format!(
                    "[measure] s: power densities use s ≥ 1, got {s}"
                )));
            }
            MeasureSpec::PowerDensity { s }
        }
        "atoms" => {
            let text = cfg
                .get("measure", "atoms")
                .ok_or_else(|| Error::Config("[measure] atoms: missing atom list".into()))?;
            MeasureSpec::Atoms(parse_atoms(text, dim)?)
        }
        other => return Err(Error::Config(format!("[measure] kind: unknown kind `{other}`"))),
    };
    let scale = cfg.f64_or("measure", "scale", 1.0)?;
    if scale < 0.0 {
        return Err(Error::Config("[measure] scale: must be nonnegative".into()));
    }
    Ok(if scale == 1.0 {
        base
    } else {
        MeasureSpec::Scaled(Box::new(base), scale)
    })
}

/// `x[,y]:mass; x[,y]:mass; ...`
fn parse_atoms(text: &str, dim: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut atoms = Vec::new();
    for chunk in text.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let (pos_text, mass_text) = chunk
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("[measure] atoms: expected `pos:mass`, got `{chunk}`")))?;
        let pos = parse_point(pos_text, dim)?;
        let mass: f64 = mass_text
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("[measure] atoms: bad mass `{mass_text}`")))?;
        if mass < 0.0 {
            return Err(Error::Config("[measure] atoms: masses must be nonnegative".into()));
        }
        atoms.push((pos, mass));
    }
    Ok(atoms)
}

fn parse_points(text: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| parse_point(s, dim))
        .collect()
}

fn parse_point(text: &str, dim: usize) -> Result<Vec<f64>> {
    let coords: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad coordinate `{s}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if coords.len() != dim {
        return Err(Error::Config(format!(
            "point `{text}` has {} coordinates, domain needs {dim}",
            coords.len()
        )));
    }
    Ok(coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "
[domain]
kind = interval
a = 0.0
b = 1.0
n_cells = 64

[weight]
t = 0.0

[measure]
kind = lebesgue

[operator]
p = 2.0

[problem]
kind = measure_data
";

    #[test]
    fn parses_minimal_config() {
        let cfg = RawConfig::parse(BASE).unwrap();
        let sc = Scenario::from_config(&cfg).unwrap();
        assert_eq!(sc.problem, ProblemKind::MeasureData);
        assert_eq!(sc.p, 2.0);
        assert_eq!(sc.measure, MeasureSpec::Lebesgue);
        assert!(matches!(sc.domain, DomainSpec::Interval { n_cells: 64, .. }));
    }

    #[test]
    fn rejects_q_equal_p() {
        let text = format!("{BASE}\n[problem]\nkind = trace\nq = 2.0\n");
        let cfg = RawConfig::parse(&text).unwrap();
        let err = Scenario::from_config(&cfg).unwrap_err().to_string();
        assert!(err.contains("0 < q < p"), "{err}");
    }

    #[test]
    fn rejects_bad_weight_exponent() {
        let text = format!("{BASE}\n[weight]\nt = 1.5\n");
        let cfg = RawConfig::parse(&text).unwrap();
        let err = Scenario::from_config(&cfg).unwrap_err().to_string();
        assert!(err.contains("-1 < t < p - 1"), "{err}");
    }

    #[test]
    fn rejects_subcritical_power_density() {
        let text = format!("{BASE}\n[measure]\nkind = power_density\ns = 0.5\n");
        let cfg = RawConfig::parse(&text).unwrap();
        let err = Scenario::from_config(&cfg).unwrap_err().to_string();
        assert!(err.contains("s ≥ 1"), "{err}");
    }

    #[test]
    fn parses_atoms_and_expectations() {
        let text = format!(
            "{BASE}\n[measure]\nkind = atoms\natoms = 0.5:1.0; 0.25:2.0\n[expect]\nu_value = 0.125\nu_tol = 1e-4\nu_at = 0.5\n"
        );
        let cfg = RawConfig::parse(&text).unwrap();
        let sc = Scenario::from_config(&cfg).unwrap();
        match &sc.measure {
            MeasureSpec::Atoms(list) => assert_eq!(list.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(sc.expectations.len(), 1);
        assert_eq!(sc.probe_point(&cfg).unwrap(), vec![0.5]);
    }

    #[test]
    fn parse_errors_name_the_field() {
        let bad = "[domain]\nkind = interval\na = zero\n";
        let cfg = RawConfig::parse(bad).unwrap();
        let err = Scenario::from_config(&cfg).unwrap_err().to_string();
        assert!(err.contains("[domain] a"), "{err}");
        assert!(RawConfig::parse("for while").is_err());
    }
}
