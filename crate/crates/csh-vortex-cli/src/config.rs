//! Run configuration: flat `key = value` text grouped in `[section]`s.
//!
//! ```text
//! [geometry]
//! kind = periodic          # or planar
//! l1 = 6.283185307179586   # periodic cell sides
//! l2 = 6.283185307179586
//! grid = 64x64
//!
//! [params]
//! n = 2
//! kappa = 3
//! lambda_over_bound = 4    # or lambda = 5.09
//!
//! [vortices]
//! vortex1 = 1.0 2.0 1
//! vortex2 = 4.0 3.5 1
//! ```
//!
//! Planar runs use `half_width` and optionally `mu` instead of `l1`, `l2`.
//! Optional sections: `[solver]` (`tolerance`, `max_iterations`),
//! `[sweep]` (`lambdas` or `lambda_factors`), `[mountain_pass]`
//! (`nodes`, `xi0`, `max_sweeps`).

use std::collections::HashMap;
use std::fmt::Write as _;

use csh_vortex::background::{VortexPoint, VortexSet, DEFAULT_MU};
use csh_vortex::coupling::{bradlow_lambda_min, CouplingParams};
use csh_vortex::lattice::TorusDomain;
use csh_vortex::mountain_pass::PassSettings;
use csh_vortex::periodic::PeriodicProblem;
use csh_vortex::planar::PlanarProblem;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("config: {0}")]
    General(String),
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Second,
    Sweep,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Planar { half_width: f64, mu: f64 },
    Periodic { l1: f64, l2: f64, core_width: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Value(f64),
    /// Multiple of the Bradlow bound (periodic only).
    OverBound(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub geometry: Geometry,
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub kappa: f64,
    pub lambda: LambdaSpec,
    pub vortices: VortexSet,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub sweep: Option<Vec<LambdaSpec>>,
    pub pass: PassSettings,
    /// Keys of a `[dump]` section, present in field-dump headers.
    pub dump: HashMap<String, String>,
    lines: HashMap<&'static str, usize>,
}

struct Entry {
    value: String,
    line: usize,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("geometry", &["kind", "l1", "l2", "half_width", "mu", "core_width", "grid"]),
    ("params", &["n", "kappa", "lambda", "lambda_over_bound"]),
    ("vortices", &["vortex1", "vortex2"]),
    ("solver", &["tolerance", "max_iterations"]),
    ("sweep", &["lambdas", "lambda_factors"]),
    ("mountain_pass", &["nodes", "xi0", "max_sweeps"]),
    ("dump", &["method", "status", "columns"]),
];

type Sections = HashMap<String, (usize, HashMap<String, Entry>, Vec<(usize, String, String)>)>;

fn tokenize(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = HashMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| at(line, "unterminated section header"))?
                .trim()
                .to_string();
            if !KNOWN.iter().any(|(s, _)| *s == name) {
                return Err(at(line, format!("unknown section [{name}]")));
            }
            if sections.contains_key(&name) {
                return Err(at(line, format!("section [{name}] appears twice")));
            }
            sections.insert(name.clone(), (line, HashMap::new(), Vec::new()));
            current = Some(name);
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| at(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        let section = current.as_ref().ok_or_else(|| at(line, "entry before any [section] header"))?;
        let allowed = KNOWN.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key.as_str()) {
            return Err(at(line, format!("unknown key `{key}` in [{section}]")));
        }
        let entry = sections.get_mut(section).expect("section registered");
        if section == "vortices" {
            entry.2.push((line, key, value));
        } else if entry.1.insert(key.clone(), Entry { value, line }).is_some() {
            return Err(at(line, format!("duplicate key `{key}`")));
        }
    }
    Ok(sections)
}

fn parse_num<T: std::str::FromStr>(e: &Entry, what: &str) -> Result<T, ConfigError> {
    e.value.parse().map_err(|_| at(e.line, format!("`{}` is not a valid {what}", e.value)))
}

fn positive(e: &Entry, what: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_num(e, "number")?;
    if !(v.is_finite() && v > 0.0) {
        return Err(at(e.line, format!("{what} must be positive, got {v}")));
    }
    Ok(v)
}

pub fn parse_grid(text: &str) -> Option<(usize, usize)> {
    let (a, b) = text.split_once(['x', 'X'])?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_list(e: &Entry) -> Result<Vec<f64>, ConfigError> {
    let values: Vec<f64> = e
        .value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| at(e.line, format!("`{s}` is not a number"))))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(at(e.line, "empty list"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(at(e.line, "list entries must be positive"));
    }
    Ok(values)
}

impl RunConfig {
    pub fn parse(text: &str, mode: Mode) -> Result<Self, ConfigError> {
        let mut sections = tokenize(text)?;
        let mut lines = HashMap::new();
        let empty = || (0usize, HashMap::new(), Vec::new());
        let (geo_line, geo, _) = sections.remove("geometry").ok_or_else(|| ConfigError::General("missing [geometry] section".into()))?;
        let (par_line, par, _) = sections.remove("params").ok_or_else(|| ConfigError::General("missing [params] section".into()))?;
        let (_, _, vortex_entries) = sections.remove("vortices").unwrap_or_else(empty);
        let (_, solver, _) = sections.remove("solver").unwrap_or_else(empty);
        let (_, sweep, _) = sections.remove("sweep").unwrap_or_else(empty);
        let (_, pass, _) = sections.remove("mountain_pass").unwrap_or_else(empty);
        let (_, dump, _) = sections.remove("dump").unwrap_or_else(empty);

        let need = |map: &HashMap<String, Entry>, key: &str, section: &str, line: usize| -> Result<(), ConfigError> {
            if map.contains_key(key) {
                Ok(())
            } else {
                Err(at(line, format!("[{section}] is missing `{key}`")))
            }
        };
        need(&geo, "kind", "geometry", geo_line)?;
        let kind = &geo["kind"];
        let geometry = match kind.value.as_str() {
            "periodic" => {
                need(&geo, "l1", "geometry", geo_line)?;
                need(&geo, "l2", "geometry", geo_line)?;
                for key in ["half_width", "mu"] {
                    if let Some(e) = geo.get(key) {
                        return Err(at(e.line, format!("`{key}` applies to planar geometry only")));
                    }
                }
                let core_width = geo.get("core_width").map(|e| parse_num::<f64>(e, "number")).transpose()?;
                if let (Some(w), Some(e)) = (core_width, geo.get("core_width")) {
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(at(e.line, "core_width must be non-negative"));
                    }
                }
                Geometry::Periodic { l1: positive(&geo["l1"], "l1")?, l2: positive(&geo["l2"], "l2")?, core_width }
            }
            "planar" => {
                need(&geo, "half_width", "geometry", geo_line)?;
                for key in ["l1", "l2", "core_width"] {
                    if let Some(e) = geo.get(key) {
                        return Err(at(e.line, format!("`{key}` applies to periodic geometry only")));
                    }
                }
                let mu = geo.get("mu").map(|e| positive(e, "mu")).transpose()?.unwrap_or(DEFAULT_MU);
                Geometry::Planar { half_width: positive(&geo["half_width"], "half_width")?, mu }
            }
            other => return Err(at(kind.line, format!("geometry kind must be `planar` or `periodic`, got `{other}`"))),
        };
        lines.insert("kind", kind.line);
        need(&geo, "grid", "geometry", geo_line)?;
        let g = &geo["grid"];
        let (m1, m2) = parse_grid(&g.value).ok_or_else(|| at(g.line, format!("grid must look like 64x64, got `{}`", g.value)))?;
        lines.insert("grid", g.line);

        need(&par, "n", "params", par_line)?;
        need(&par, "kappa", "params", par_line)?;
        let n: usize = parse_num(&par["n"], "integer")?;
        lines.insert("n", par["n"].line);
        let kappa = positive(&par["kappa"], "kappa")?;
        lines.insert("kappa", par["kappa"].line);
        let lambda = match (par.get("lambda"), par.get("lambda_over_bound")) {
            (Some(e), None) => {
                lines.insert("lambda", e.line);
                LambdaSpec::Value(positive(e, "lambda")?)
            }
            (None, Some(e)) => {
                lines.insert("lambda", e.line);
                LambdaSpec::OverBound(positive(e, "lambda_over_bound")?)
            }
            (Some(_), Some(e)) => return Err(at(e.line, "give either `lambda` or `lambda_over_bound`, not both")),
            (None, None) => return Err(at(par_line, "[params] is missing `lambda` (or `lambda_over_bound`)")),
        };

        let mut points = [Vec::new(), Vec::new()];
        for (line, key, value) in &vortex_entries {
            let parts: Vec<&str> = value.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(at(*line, format!("`{key}` needs `x y multiplicity`, got `{value}`")));
            }
            let x: f64 = parts[0].parse().map_err(|_| at(*line, format!("bad x coordinate `{}`", parts[0])))?;
            let y: f64 = parts[1].parse().map_err(|_| at(*line, format!("bad y coordinate `{}`", parts[1])))?;
            let m: u32 = parts[2].parse().map_err(|_| at(*line, format!("bad multiplicity `{}`", parts[2])))?;
            if m == 0 || !x.is_finite() || !y.is_finite() {
                return Err(at(*line, "vortex needs finite coordinates and multiplicity ≥ 1"));
            }
            let inside = match geometry {
                Geometry::Periodic { l1, l2, .. } => (0.0..l1).contains(&x) && (0.0..l2).contains(&y),
                Geometry::Planar { half_width, .. } => x.abs() <= half_width && y.abs() <= half_width,
            };
            if !inside {
                return Err(at(*line, format!("vortex ({x}, {y}) lies outside the domain")));
            }
            points[if key == "vortex1" { 0 } else { 1 }].push(VortexPoint::new(x, y, m));
        }
        let [p1, p2] = points;

        let tolerance = solver.get("tolerance").map(|e| positive(e, "tolerance")).transpose()?.unwrap_or(1e-8);
        let max_iterations = solver
            .get("max_iterations")
            .map(|e| parse_num::<usize>(e, "integer"))
            .transpose()?
            .unwrap_or(10_000);

        let sweep = match (sweep.get("lambdas"), sweep.get("lambda_factors")) {
            (Some(e), None) => Some(parse_list(e)?.into_iter().map(LambdaSpec::Value).collect()),
            (None, Some(e)) => Some(parse_list(e)?.into_iter().map(LambdaSpec::OverBound).collect()),
            (Some(_), Some(e)) => return Err(at(e.line, "give either `lambdas` or `lambda_factors`, not both")),
            (None, None) => None,
        };

        let mut settings = PassSettings::default();
        if let Some(e) = pass.get("nodes") {
            settings.nodes = parse_num(e, "integer")?;
            if settings.nodes < 3 {
                return Err(at(e.line, "the path needs at least 3 nodes"));
            }
        }
        if let Some(e) = pass.get("xi0") {
            settings.xi0 = parse_num(e, "number")?;
            if !(settings.xi0 > 1.0) {
                return Err(at(e.line, "xi0 must exceed 1"));
            }
        }
        if let Some(e) = pass.get("max_sweeps") {
            settings.max_sweeps = parse_num(e, "integer")?;
        }

        let config = Self {
            mode,
            geometry,
            m1,
            m2,
            n,
            kappa,
            lambda,
            vortices: VortexSet::new(p1, p2),
            tolerance,
            max_iterations,
            sweep,
            pass: settings,
            dump: dump.into_iter().map(|(k, e)| (k, e.value)).collect(),
            lines,
        };
        config.validate()?;
        Ok(config)
    }

    fn line(&self, key: &str) -> usize {
        self.lines.get(key).copied().unwrap_or(0)
    }

    fn err(&self, key: &str, message: String) -> ConfigError {
        match self.line(key) {
            0 => ConfigError::General(message),
            line => ConfigError::Line { line, message },
        }
    }

    /// Checks the combination of mode, geometry and parameters.
    pub fn validate(&self) -> Result<(), ConfigError> {
        CouplingParams::new(self.n, self.kappa, 1.0).map_err(|e| self.err("n", e.to_string()))?;
        let periodic = matches!(self.geometry, Geometry::Periodic { .. });
        if periodic && self.kappa <= 1.0 {
            return Err(self.err("kappa", format!("periodic runs need kappa > 1, got {}", self.kappa)));
        }
        if !periodic {
            if matches!(self.mode, Mode::Second | Mode::Sweep) {
                return Err(self.err("kind", "the second-solution and sweep modes need periodic geometry".into()));
            }
            if matches!(self.lambda, LambdaSpec::OverBound(_)) {
                return Err(self.err("lambda", "`lambda_over_bound` applies to periodic geometry only".into()));
            }
        }
        if self.mode == Mode::Sweep && self.sweep.is_none() {
            return Err(ConfigError::General("sweep mode needs a [sweep] section with `lambdas` or `lambda_factors`".into()));
        }
        if self.m1 < 8 || self.m2 < 8 || self.m1 % 2 == 1 || self.m2 % 2 == 1 {
            return Err(self.err("grid", format!("grid sizes must be even and at least 8, got {}x{}", self.m1, self.m2)));
        }
        Ok(())
    }

    pub fn with_grid(mut self, m1: usize, m2: usize) -> Result<Self, ConfigError> {
        self.m1 = m1;
        self.m2 = m2;
        self.lines.remove("grid");
        self.validate()?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self, ConfigError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(ConfigError::General(format!("lambda must be positive, got {lambda}")));
        }
        self.lambda = LambdaSpec::Value(lambda);
        self.lines.remove("lambda");
        Ok(self)
    }

    pub fn area(&self) -> f64 {
        match self.geometry {
            Geometry::Periodic { l1, l2, .. } => l1 * l2,
            Geometry::Planar { half_width, .. } => 4.0 * half_width * half_width,
        }
    }

    pub fn bradlow_bound(&self) -> Option<f64> {
        match self.geometry {
            Geometry::Periodic { .. } => {
                let p = CouplingParams::new(self.n, self.kappa, 1.0).ok()?;
                Some(bradlow_lambda_min(&p, self.vortices.n1(), self.vortices.n2(), self.area()))
            }
            Geometry::Planar { .. } => None,
        }
    }

    pub fn resolve(&self, spec: LambdaSpec) -> f64 {
        match spec {
            LambdaSpec::Value(v) => v,
            LambdaSpec::OverBound(f) => f * self.bradlow_bound().unwrap_or(f64::NAN),
        }
    }

    pub fn lambda_value(&self) -> f64 {
        self.resolve(self.lambda)
    }

    pub fn params(&self) -> Result<CouplingParams, ConfigError> {
        CouplingParams::new(self.n, self.kappa, self.lambda_value()).map_err(|e| self.err("lambda", e.to_string()))
    }

    pub fn planar_problem(&self) -> Result<PlanarProblem, ConfigError> {
        let Geometry::Planar { half_width, mu } = self.geometry else {
            return Err(self.err("kind", "not a planar configuration".into()));
        };
        let mut p = PlanarProblem::new(self.params()?, self.vortices.clone(), half_width, self.m1, self.m2)
            .map_err(|e| self.err("kind", e.to_string()))?
            .with_mu(mu)
            .with_tolerance(self.tolerance);
        p.max_iterations = self.max_iterations;
        p.validate().map_err(|e| self.err("kind", e.to_string()))?;
        Ok(p)
    }

    pub fn periodic_problem(&self) -> Result<PeriodicProblem, ConfigError> {
        let Geometry::Periodic { l1, l2, core_width } = self.geometry else {
            return Err(self.err("kind", "not a periodic configuration".into()));
        };
        let domain = TorusDomain::new(l1, l2).map_err(|e| self.err("kind", e.to_string()))?;
        let mut p = PeriodicProblem::new(self.params()?, self.vortices.clone(), domain, self.m1, self.m2)
            .map_err(|e| self.err("kind", e.to_string()))?
            .with_tolerance(self.tolerance);
        p.max_iterations = self.max_iterations;
        if let Some(w) = core_width {
            p.core_width = w;
        }
        Ok(p)
    }

    /// Config text with λ and the core width resolved, parseable by [`RunConfig::parse`].
    pub fn render(&self, core_width: Option<f64>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[geometry]");
        match self.geometry {
            Geometry::Periodic { l1, l2, core_width: cw } => {
                let _ = writeln!(s, "kind = periodic\nl1 = {l1}\nl2 = {l2}");
                if let Some(w) = core_width.or(cw) {
                    let _ = writeln!(s, "core_width = {w}");
                }
            }
            Geometry::Planar { half_width, mu } => {
                let _ = writeln!(s, "kind = planar\nhalf_width = {half_width}\nmu = {mu}");
            }
        }
        let _ = writeln!(s, "grid = {}x{}", self.m1, self.m2);
        let _ = writeln!(s, "\n[params]\nn = {}\nkappa = {}\nlambda = {}", self.n, self.kappa, self.lambda_value());
        let _ = writeln!(s, "\n[vortices]");
        for (i, key) in ["vortex1", "vortex2"].iter().enumerate() {
            for p in self.vortices.component(i) {
                let _ = writeln!(s, "{key} = {} {} {}", p.x, p.y, p.multiplicity);
            }
        }
        let _ = writeln!(s, "\n[solver]\ntolerance = {:e}\nmax_iterations = {}", self.tolerance, self.max_iterations);
        s
    }
}
