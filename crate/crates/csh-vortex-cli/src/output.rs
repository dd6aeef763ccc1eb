//! Field dumps (CSV and binary) and `key = value` summaries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use csh_vortex::background::{periodic_background_with_core, planar_background};
use csh_vortex::lattice::{GridSpec, PlanarBox, ScalarField, TorusDomain};
use csh_vortex::solution::{SolveMethod, SolveResult};

use crate::config::{Geometry, Mode, RunConfig};

pub const MAGIC: &[u8; 8] = b"CSHVTX01";

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e9).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

pub fn status_word(result: &SolveResult) -> &'static str {
    if result.converged {
        "converged"
    } else {
        "unconverged"
    }
}

/// Geometry and parameter lines shared by both dump formats.
fn header_text(config: &RunConfig, result: &SolveResult) -> String {
    let core_width = match result.background.kind {
        csh_vortex::background::BackgroundKind::Periodic { core_width } => Some(core_width),
        csh_vortex::background::BackgroundKind::Planar { .. } => None,
    };
    let mut cfg = config.clone();
    cfg.tolerance = result.tolerance;
    format!(
        "{}\n[dump]\nmethod = {}\nstatus = {}\ncolumns = v1 v2 u1 u2\n",
        cfg.render(core_width),
        result.method.name(),
        status_word(result)
    )
}

/// Writes `x, y, u1, u2, v1, v2` per node after `#` comment lines.
pub fn write_fields_csv(path: &Path, config: &RunConfig, result: &SolveResult) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for line in header_text(config, result).lines().filter(|l| !l.trim().is_empty()) {
        writeln!(out, "# {line}")?;
    }
    let grid = result.grid();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "u1", "u2", "v1", "v2"])?;
    for idx in 0..grid.len() {
        let (x, y) = grid.point(idx);
        let row = [x, y, result.u1.values()[idx], result.u2.values()[idx], result.v1.values()[idx], result.v2.values()[idx]];
        w.write_record(row.iter().map(|&v| num(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Magic, `u64` header length, UTF-8 header, `u64` node count, then
/// `v1, v2, u1, u2` as little-endian `f64`.
pub fn write_fields_bin(path: &Path, config: &RunConfig, result: &SolveResult) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    let header = header_text(config, result);
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(header.as_bytes())?;
    out.write_all(&(result.grid().len() as u64).to_le_bytes())?;
    for field in [&result.v1, &result.v2, &result.u1, &result.u2] {
        for v in field.values() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// A field dump read back from disk.
#[derive(Debug, Clone)]
pub struct Dump {
    pub config: RunConfig,
    pub method: SolveMethod,
    pub status: String,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).context("truncated dump")?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_fields_bin(path: &Path) -> Result<Dump> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).context("truncated dump")?;
    ensure!(&magic == MAGIC, "{} is not a field dump", path.display());
    let len = read_u64(&mut r)?;
    ensure!(len < 1 << 20, "implausible header length {len}");
    let mut header = vec![0u8; len as usize];
    r.read_exact(&mut header).context("truncated dump header")?;
    let header = String::from_utf8(header).context("dump header is not UTF-8")?;
    let config = RunConfig::parse(&header, Mode::Verify).map_err(|e| anyhow::anyhow!("dump header: {e}"))?;
    let method = config
        .dump
        .get("method")
        .and_then(|m| SolveMethod::from_name(m))
        .context("dump header lacks a valid method")?;
    let status = config.dump.get("status").cloned().unwrap_or_default();
    let n = read_u64(&mut r)? as usize;
    ensure!(n == config.m1 * config.m2, "node count {n} does not match the {}x{} grid", config.m1, config.m2);
    let mut fields: [Vec<f64>; 4] = Default::default();
    let mut b = [0u8; 8];
    for f in fields.iter_mut() {
        f.reserve_exact(n);
        for _ in 0..n {
            r.read_exact(&mut b).context("truncated field data")?;
            f.push(f64::from_le_bytes(b));
        }
    }
    if r.read(&mut b)? != 0 {
        bail!("trailing bytes after field data");
    }
    let [v1, v2, u1, u2] = fields;
    Ok(Dump { config, method, status, v1, v2, u1, u2 })
}

impl Dump {
    /// Recomputes the background and rebuilds the result from the stored fluctuations.
    pub fn to_result(&self) -> Result<SolveResult> {
        let c = &self.config;
        let params = c.params()?;
        let (grid, background) = match c.geometry {
            Geometry::Periodic { l1, l2, core_width } => {
                let grid = GridSpec::torus(TorusDomain::new(l1, l2)?, c.m1, c.m2)?;
                let width = core_width.context("periodic dump lacks core_width")?;
                (grid, periodic_background_with_core(&c.vortices, &grid, width)?)
            }
            Geometry::Planar { half_width, mu } => {
                let grid = GridSpec::planar(PlanarBox::new(half_width)?, c.m1, c.m2)?;
                (grid, planar_background(&c.vortices, mu, &grid)?)
            }
        };
        let v1 = ScalarField::new(grid, self.v1.clone())?;
        let v2 = ScalarField::new(grid, self.v2.clone())?;
        let result = SolveResult::from_fields(v1, v2, params, c.vortices.clone(), background, self.method, c.tolerance)?;
        Ok(result)
    }
}

/// Ordered `key = value` lines.
#[derive(Debug, Default, Clone)]
pub struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        for (k, v) in &self.lines {
            writeln!(out, "{k} = {v}")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use csh_vortex::periodic::solve_periodic;

    const CONFIG: &str = "\
[geometry]
kind = periodic
l1 = 6.283185307179586
l2 = 6.283185307179586
grid = 16x16
[params]
n = 2
kappa = 3
lambda_over_bound = 4
[vortices]
vortex1 = 1.0 2.0 1
vortex2 = 4.0 3.5 1
";

    #[test]
    fn binary_dump_round_trips_exactly() {
        let config = RunConfig::parse(CONFIG, Mode::Solve).unwrap();
        let result = solve_periodic(&config.periodic_problem().unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fields.bin");
        write_fields_bin(&path, &config, &result).unwrap();
        let dump = read_fields_bin(&path).unwrap();
        assert_eq!(dump.v1, result.v1.values());
        assert_eq!(dump.u2, result.u2.values());
        assert_eq!(dump.method, result.method);
        let back = dump.to_result().unwrap();
        assert_eq!(back.u1.values(), result.u1.values());
        assert_eq!(back.background, result.background);
        assert_eq!(back.el_residual, result.el_residual);
    }

    #[test]
    fn corrupt_dumps_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOTADUMP").unwrap();
        assert!(read_fields_bin(&path).is_err());
        std::fs::write(&path, b"CSHVTX01\x05").unwrap();
        assert!(read_fields_bin(&path).is_err());
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.5, -3.2e-12, 9.769962616701378e-15, 4e12, f64::NAN] {
            let back: f64 = num(v).parse().unwrap();
            assert!(back == v || (v.is_nan() && back.is_nan()), "{v}");
        }
        assert_eq!(num(9.769962616701378e-15), "9.769962616701378e-15");
    }

    #[test]
    fn summary_lines_keep_order() {
        let mut s = Summary::default();
        s.push("status", "converged");
        s.push("lambda", 1.5);
        assert_eq!(s.get("lambda"), Some("1.5"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.txt");
        s.write(&path).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "status = converged\nlambda = 1.5\n");
    }
}
