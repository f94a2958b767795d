//! JSON run configuration.
//!
//! Raw documents are deserialized with serde and then resolved against the
//! catalog and expression parser. Every rejection names the offending field.

use std::path::{Path, PathBuf};

use amech_core::algebroid::lattice;
use amech_core::catalog::lookup;
use amech_core::expr::{parse, Expression};
use amech_core::jacobi::{DEFAULT_TOL_DET, DEFAULT_TOL_SV};
use amech_core::variation::DEFAULT_NULL_TOL;
use amech_core::{Lagrangian, SkewAlgebroid};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), message: message.into() }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    algebroid: RawAlgebroid,
    #[serde(default)]
    lagrangian: Option<RawLagrangian>,
    run: RawRun,
    #[serde(default)]
    task: RawTask,
    #[serde(default)]
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawAlgebroid {
    Named(String),
    Inline(RawInline),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInline {
    #[serde(default)]
    label: Option<String>,
    n: usize,
    k: usize,
    #[serde(default)]
    rho: Vec<Vec<String>>,
    c: Vec<Vec<Vec<String>>>,
    #[serde(default)]
    domain: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawLagrangian {
    Source(String),
    Kinetic { kinetic: Vec<Vec<String>> },
    Mechanical { mechanical: RawMechanical },
    Expr { expr: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMechanical {
    metric: Vec<Vec<String>>,
    potential: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default)]
    t0: f64,
    t1: f64,
    h: f64,
    #[serde(default)]
    x0: Option<Vec<f64>>,
    #[serde(default)]
    y0: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    xi0: Option<Vec<f64>>,
    xidot0: Option<Vec<f64>>,
    tol_det: Option<f64>,
    tol_sv: Option<f64>,
    null_tol: Option<f64>,
    ds: Option<f64>,
    tol: Option<f64>,
    #[serde(rename = "box")]
    bounds: Option<Vec<(f64, f64)>>,
    lattice: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TaskParams {
    pub xi0: Vec<f64>,
    pub xidot0: Vec<f64>,
    pub tol_det: f64,
    pub tol_sv: f64,
    pub null_tol: f64,
    pub ds: f64,
    pub tol: f64,
    pub samples: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub algebroid: SkewAlgebroid,
    pub lagrangian: Lagrangian,
    pub t0: f64,
    pub t1: f64,
    pub h: f64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub task: TaskParams,
    pub output_dir: Option<PathBuf>,
    /// SHA-256 of the raw config bytes, hex encoded.
    pub sha256: String,
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let bytes = std::fs::read(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&bytes)
}

pub fn parse_config(bytes: &[u8]) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_slice(bytes)
        .map_err(|e| ConfigError::Json { line: e.line(), column: e.column(), message: e.to_string() })?;
    let sha256 = format!("{:x}", Sha256::digest(bytes));
    resolve(raw, sha256)
}

fn expr(src: &str, names: &[String], field: &str) -> Result<Expression, ConfigError> {
    parse(src, names).map_err(|e| field_err(field, e.to_string()))
}

fn shape(field: &str, expected: usize, got: usize, what: &str) -> Result<(), ConfigError> {
    if expected == got {
        Ok(())
    } else {
        Err(field_err(field, format!("expected {expected} {what}, got {got}")))
    }
}

fn base_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn inline_algebroid(raw: RawInline) -> Result<(SkewAlgebroid, Vec<(f64, f64)>), ConfigError> {
    let (n, k) = (raw.n, raw.k);
    if k == 0 {
        return Err(field_err("algebroid.k", "fiber rank must be at least 1"));
    }
    let names = base_names(n);
    shape("algebroid.rho", n, raw.rho.len(), "rows (one per base coordinate)")?;
    let mut rho = Vec::with_capacity(n * k);
    for (a, row) in raw.rho.iter().enumerate() {
        shape(&format!("algebroid.rho[{a}]"), k, row.len(), "columns (one per fiber coordinate)")?;
        for (i, s) in row.iter().enumerate() {
            rho.push(expr(s, &names, &format!("algebroid.rho[{a}][{i}]"))?);
        }
    }
    shape("algebroid.c", k, raw.c.len(), "outer entries")?;
    let mut c = Vec::with_capacity(k * k * k);
    for (i, plane) in raw.c.iter().enumerate() {
        shape(&format!("algebroid.c[{i}]"), k, plane.len(), "rows")?;
        for (j, row) in plane.iter().enumerate() {
            shape(&format!("algebroid.c[{i}][{j}]"), k, row.len(), "entries")?;
            for (l, s) in row.iter().enumerate() {
                c.push(expr(s, &names, &format!("algebroid.c[{i}][{j}][{l}]"))?);
            }
        }
    }
    let domain = raw.domain.unwrap_or_else(|| vec![(-1.0, 1.0); n]);
    shape("algebroid.domain", n, domain.len(), "intervals")?;
    // the full table is accepted only if it is antisymmetric on the domain
    for x in lattice(&domain, 3) {
        for i in 0..k {
            for j in 0..k {
                for l in j..k {
                    let eval = |p: usize| c[p].eval(&x).map_err(|e| field_err(format!("algebroid.c[{i}][{j}][{l}]"), e.to_string()));
                    let (u, v) = (eval((i * k + j) * k + l)?, eval((i * k + l) * k + j)?);
                    if (u + v).abs() > 1e-12 * (1.0 + u.abs()) {
                        return Err(field_err(format!("algebroid.c[{i}][{j}][{l}]"), format!("not antisymmetric in the lower indices at x = {x:?}")));
                    }
                }
            }
        }
    }
    let label = raw.label.unwrap_or_else(|| "inline".into());
    let a = SkewAlgebroid::new(label, n, k, rho, c).map_err(|e| field_err("algebroid", e.to_string()))?;
    Ok((a, domain))
}

fn metric(rows: &[Vec<String>], a: &SkewAlgebroid, field: &str) -> Result<Vec<Expression>, ConfigError> {
    let k = a.k();
    shape(field, k, rows.len(), "rows")?;
    let mut out = Vec::with_capacity(k * k);
    for (i, row) in rows.iter().enumerate() {
        shape(&format!("{field}[{i}]"), k, row.len(), "columns")?;
        for (j, s) in row.iter().enumerate() {
            out.push(expr(s, a.base_names(), &format!("{field}[{i}][{j}]"))?);
        }
    }
    Ok(out)
}

fn lagrangian(raw: Option<RawLagrangian>, a: &SkewAlgebroid, default: Option<Lagrangian>) -> Result<Lagrangian, ConfigError> {
    let bad = |field: &str, e: amech_core::AmechError| field_err(field, e.to_string());
    match raw {
        None => default.ok_or_else(|| field_err("lagrangian", "required for inline algebroids")),
        Some(RawLagrangian::Source(s)) => match s.trim() {
            "default" => default.ok_or_else(|| field_err("lagrangian", "inline algebroids have no default Lagrangian")),
            "kinetic" => Ok(Lagrangian::euclidean(a)),
            src => Lagrangian::parse(a, src).map_err(|e| bad("lagrangian", e)),
        },
        Some(RawLagrangian::Expr { expr }) => Lagrangian::parse(a, &expr).map_err(|e| bad("lagrangian.expr", e)),
        Some(RawLagrangian::Kinetic { kinetic }) => {
            let g = metric(&kinetic, a, "lagrangian.kinetic")?;
            Lagrangian::kinetic(a, &g).map_err(|e| bad("lagrangian.kinetic", e))
        }
        Some(RawLagrangian::Mechanical { mechanical }) => {
            let g = metric(&mechanical.metric, a, "lagrangian.mechanical.metric")?;
            let v = expr(&mechanical.potential, a.base_names(), "lagrangian.mechanical.potential")?;
            Lagrangian::mechanical(a, &g, &v).map_err(|e| bad("lagrangian.mechanical", e))
        }
    }
}

fn vector(field: &str, v: Vec<f64>, len: usize) -> Result<Vec<f64>, ConfigError> {
    shape(field, len, v.len(), "components")?;
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(field_err(format!("{field}[{i}]"), "not finite"));
    }
    Ok(v)
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(field_err(field, format!("must be positive, got {v}")))
    }
}

fn unit(k: usize) -> Vec<f64> {
    (0..k).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect()
}

fn resolve(raw: RawConfig, sha256: String) -> Result<RunConfig, ConfigError> {
    let (alg, domain, default_l, x0d, y0d) = match raw.algebroid {
        RawAlgebroid::Named(name) => {
            let e = lookup(&name).map_err(|e| field_err("algebroid", e.to_string()))?;
            (e.algebroid, e.domain, Some(e.lagrangian), Some(e.x0), Some(e.y0))
        }
        RawAlgebroid::Inline(inline) => {
            let (a, dom) = inline_algebroid(inline)?;
            let x0 = vec![0.0; a.n()];
            (a, dom, None, Some(x0), None)
        }
    };
    let (n, k) = (alg.n(), alg.k());
    let l = lagrangian(raw.lagrangian, &alg, default_l)?;

    let run = raw.run;
    if !run.t0.is_finite() {
        return Err(field_err("run.t0", "not finite"));
    }
    if !(run.t1.is_finite() && run.t1 > run.t0) {
        return Err(field_err("run.t1", format!("must exceed t0 = {}", run.t0)));
    }
    let h = positive("run.h", run.h)?;
    let x0 = match run.x0.or(x0d) {
        Some(v) => vector("run.x0", v, n)?,
        None => return Err(field_err("run.x0", "required")),
    };
    let y0 = match run.y0.or(y0d) {
        Some(v) => vector("run.y0", v, k)?,
        None => return Err(field_err("run.y0", "required for inline algebroids")),
    };

    let t = raw.task;
    let bounds = match t.bounds {
        Some(b) => {
            shape("task.box", n, b.len(), "intervals")?;
            b
        }
        None => domain,
    };
    let per_axis = t.lattice.unwrap_or(5);
    if per_axis == 0 {
        return Err(field_err("task.lattice", "must be at least 1"));
    }
    let task = TaskParams {
        xi0: vector("task.xi0", t.xi0.unwrap_or_else(|| vec![0.0; k]), k)?,
        xidot0: vector("task.xidot0", t.xidot0.unwrap_or_else(|| unit(k)), k)?,
        tol_det: positive("task.tol_det", t.tol_det.unwrap_or(DEFAULT_TOL_DET))?,
        tol_sv: positive("task.tol_sv", t.tol_sv.unwrap_or(DEFAULT_TOL_SV))?,
        null_tol: positive("task.null_tol", t.null_tol.unwrap_or(DEFAULT_NULL_TOL))?,
        ds: positive("task.ds", t.ds.unwrap_or(1e-4))?,
        tol: positive("task.tol", t.tol.unwrap_or(1e-9))?,
        samples: lattice(&bounds, per_axis),
    };
    Ok(RunConfig {
        algebroid: alg,
        lagrangian: l,
        t0: run.t0,
        t1: run.t1,
        h,
        x0,
        y0,
        task,
        output_dir: raw.output.and_then(|o| o.dir),
        sha256,
    })
}
