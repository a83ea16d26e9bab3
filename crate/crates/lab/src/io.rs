//! File formats: profile JSON, field CSV, soliton JSON and tabular exports.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dmsol_core::lattice::MAX_DIM;
use dmsol_core::propagator::Segment;
use dmsol_core::{Complex64, DiffractionProfile, GridFunction, Shape, Site, SolitonResult};
use serde::{Deserialize, Serialize};

use crate::json::{self, Meta};

/// Environment variable naming the output directory when `--out` is absent.
pub const OUT_DIR_VAR: &str = "DMSOL_OUT_DIR";

/// `--out`, then `$DMSOL_OUT_DIR`, then `./dmsol-out`.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| {
            std::env::var_os(OUT_DIR_VAR)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from("dmsol-out"))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &json::to_string(value)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub segments: Vec<Segment>,
}

pub fn read_profile(path: &Path) -> Result<DiffractionProfile> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read profile {}", path.display()))?;
    let file: ProfileFile = serde_json::from_str(&text)
        .with_context(|| format!("malformed profile {}", path.display()))?;
    DiffractionProfile::new(file.segments)
        .with_context(|| format!("invalid profile {}", path.display()))
}

pub fn write_profile(path: &Path, profile: &DiffractionProfile) -> Result<()> {
    write_json(
        path,
        &ProfileFile {
            segments: profile.segments().to_vec(),
        },
    )
}

/// 17 significant digits; `−0` prints as `0`.
fn sci(v: f64) -> String {
    format!("{:.16e}", v + 0.0)
}

/// One row per lattice site in storage order: `x_1..x_d, re, im`.
pub fn field_csv(f: &GridFunction) -> String {
    let dim = f.shape().dim();
    let mut out = String::new();
    for k in 1..=dim {
        out.push_str(&format!("x_{k},"));
    }
    out.push_str("re,im\n");
    for (site, v) in f.iter() {
        for k in 0..dim {
            out.push_str(&format!("{},", site.0[k]));
        }
        out.push_str(&format!("{},{}\n", sci(v.re), sci(v.im)));
    }
    out
}

pub fn write_field(path: &Path, f: &GridFunction) -> Result<()> {
    write_text(path, &field_csv(f))
}

/// Reads a field CSV. The box radius is the largest coordinate present;
/// sites absent from the file are zero.
pub fn read_field(path: &Path) -> Result<GridFunction> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read field {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let dim = headers.len().saturating_sub(2);
    let expected: Vec<String> = (1..=dim)
        .map(|k| format!("x_{k}"))
        .chain(["re".into(), "im".into()])
        .collect();
    if dim == 0 || dim > MAX_DIM || headers.iter().ne(expected.iter().map(String::as_str)) {
        bail!("{}: header must be x_1..x_d,re,im", path.display());
    }
    let mut values = HashMap::new();
    let mut radius = 0u64;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse_err = || format!("{}: bad row {}", path.display(), line + 2);
        let coords: Vec<i64> = (0..dim)
            .map(|k| record[k].trim().parse::<i64>())
            .collect::<Result<_, _>>()
            .with_context(parse_err)?;
        let re: f64 = record[dim].trim().parse().with_context(parse_err)?;
        let im: f64 = record[dim + 1].trim().parse().with_context(parse_err)?;
        let site = Site::new(&coords);
        radius = radius.max(site.linf());
        values.insert(site, Complex64::new(re, im));
    }
    let shape = Shape::new(dim, radius.max(1) as usize)
        .with_context(|| format!("{}: unsupported lattice", path.display()))?;
    let f = GridFunction::from_fn(shape, |x| values.get(&x).copied().unwrap_or_default());
    if !f.is_finite() {
        bail!("{}: non-finite field value", path.display());
    }
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonFile {
    #[serde(flatten)]
    pub meta: Meta,
    pub lambda: f64,
    pub p_lambda: f64,
    pub omega: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub dim: usize,
    pub radius: usize,
    pub objective_trace: Vec<f64>,
    /// Field CSV path relative to this file.
    pub field: String,
}

impl SolitonFile {
    pub fn new(meta: Meta, res: &SolitonResult, field: &str) -> SolitonFile {
        SolitonFile {
            meta,
            lambda: res.lambda,
            p_lambda: res.p_lambda,
            omega: res.omega,
            residual: res.residual,
            iterations: res.iterations,
            converged: res.converged,
            dim: res.f.shape().dim(),
            radius: res.f.shape().radius(),
            objective_trace: res.objective_trace.clone(),
            field: field.to_string(),
        }
    }
}

/// Writes `soliton.json`, `field.csv` and `objective-trace.csv` into `dir`.
pub fn write_soliton(dir: &Path, meta: Meta, res: &SolitonResult) -> Result<()> {
    ensure_dir(dir)?;
    write_field(&dir.join("field.csv"), &res.f)?;
    let mut trace = String::from("iteration,objective\n");
    for (i, v) in res.objective_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{}\n", sci(*v)));
    }
    write_text(&dir.join("objective-trace.csv"), &trace)?;
    write_json(
        &dir.join("soliton.json"),
        &SolitonFile::new(meta, res, "field.csv"),
    )
}

pub fn read_soliton(path: &Path) -> Result<(SolitonFile, GridFunction)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read soliton {}", path.display()))?;
    let file: SolitonFile = serde_json::from_str(&text)
        .with_context(|| format!("malformed soliton {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let field = read_field(&base.join(&file.field))?;
    Ok((file, field))
}

/// Initial data from either a soliton JSON (with its `ω`) or a bare field CSV.
pub fn read_initial(path: &Path) -> Result<(GridFunction, Option<f64>)> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        let (file, f) = read_soliton(path)?;
        Ok((f, Some(file.omega)))
    } else {
        Ok((read_field(path)?, None))
    }
}

/// Numeric CSV with a header; every value in 17-digit scientific form.
pub fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(sci).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_is_exact() {
        let shape = Shape::new(2, 3).unwrap();
        let f = GridFunction::from_fn(shape, |x| {
            Complex64::new(
                0.1 * x.0[0] as f64 + 1.0 / 3.0,
                (x.0[1] as f64).exp().recip(),
            )
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_field(&path, &f).unwrap();
        let g = read_field(&path).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        fs::write(&path, "x,re,im\n0,1,0\n").unwrap();
        assert!(read_field(&path).is_err());
    }

    #[test]
    fn profile_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let p = DiffractionProfile::two_step(1.0);
        write_profile(&path, &p).unwrap();
        assert_eq!(read_profile(&path).unwrap().tau(), 0.5);
        fs::write(&path, r#"{"segments":[{"length":1.0,"value":1.0}]}"#).unwrap();
        assert!(read_profile(&path).is_err());
    }
}
