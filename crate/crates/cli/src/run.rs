//! Subcommand dispatch and artifact emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use amech_core::dynamics::integrate_el;
use amech_core::jacobi::{conjugate_scan, fd_prolongation_oracle, integrate_jacobi, jacobi_residual_along};
use amech_core::lift::jacobi_lift_crosscheck;
use amech_core::variation::{kappa_variation, null_space, second_variation_matrix, GeneratorCurve};
use amech_core::{AmechError, Trajectory};
use serde::Serialize;
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Integrate,
    Jacobi,
    Conjugate,
    Secondvar,
    Crosscheck,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Numerical(#[from] AmechError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot encode {0}: {1}")]
    Encode(&'static str, serde_json::Error),
}

#[derive(Debug, Default, Serialize)]
struct ResidualSummary {
    max_el_residual: f64,
    max_admissibility_residual: f64,
    energy_drift: f64,
    /// `‖B − Bᵀ‖∞ / ‖B‖∞` of the assembled second variation, when built.
    symmetry_defect: Option<f64>,
    jacobi_residual: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: Command,
    config_sha256: &'a str,
    algebroid: &'a str,
    n: usize,
    k: usize,
    cells: usize,
    step: f64,
    artifacts: &'a [String],
    residual_summary: &'a ResidualSummary,
}

struct Sink {
    dir: PathBuf,
    written: Vec<String>,
}

impl Sink {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
        Ok(Sink { dir: dir.to_path_buf(), written: vec![] })
    }

    /// Write through a temporary file in the same directory, then rename.
    fn put(&mut self, name: &str, body: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.{}.tmp", std::process::id()));
        let io = |source| RunError::Io { path: path.clone(), source };
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(body).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &'static str, value: &T) -> Result<(), RunError> {
        let mut body = serde_json::to_vec_pretty(value).map_err(|e| RunError::Encode(name, e))?;
        body.push(b'\n');
        self.put(name, &body)
    }
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    algebroid: &'a str,
    n: usize,
    k: usize,
    samples: usize,
    almost_lie: &'a amech_core::algebroid::CheckReport,
    lie: &'a amech_core::algebroid::LieReport,
}

#[derive(Serialize)]
struct CrosscheckOutput<'a> {
    #[serde(flatten)]
    report: &'a amech_core::lift::CrosscheckReport,
    /// Sup distance between the variation of the integrated field and the
    /// finite-difference family with step `ds`.
    oracle_gap: f64,
    ds: f64,
}

fn host(cfg: &RunConfig) -> Result<Trajectory, RunError> {
    Ok(integrate_el(&cfg.algebroid, &cfg.lagrangian, &cfg.x0, &cfg.y0, cfg.t0, cfg.t1, cfg.h)?)
}

fn summary_of(tr: &Trajectory) -> ResidualSummary {
    ResidualSummary {
        max_el_residual: tr.meta.max_el_residual,
        max_admissibility_residual: tr.meta.max_admissibility_residual,
        energy_drift: tr.meta.energy_drift,
        ..Default::default()
    }
}

fn trajectory_csv(cfg: &RunConfig, tr: &Trajectory) -> String {
    tr.to_csv(cfg.algebroid.base_names(), cfg.algebroid.fiber_names())
}

/// Run one subcommand, writing artifacts into `out`.
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<(), RunError> {
    let mut sink = Sink::new(out)?;
    let (a, l, t) = (&cfg.algebroid, &cfg.lagrangian, &cfg.task);
    if cmd == Command::Validate {
        let lie = a.check_lie(&t.samples, t.tol)?;
        sink.json(
            "validate.json",
            &ValidateReport { algebroid: a.label(), n: a.n(), k: a.k(), samples: t.samples.len(), almost_lie: &lie.almost_lie, lie: &lie },
        )?;
    }
    let tr = host(cfg)?;
    let mut summary = summary_of(&tr);
    sink.put("trajectory.csv", trajectory_csv(cfg, &tr).as_bytes())?;
    match cmd {
        Command::Validate | Command::Integrate => {}
        Command::Jacobi => {
            let f = integrate_jacobi(a, l, &tr, &t.xi0, &t.xidot0)?;
            let (first, dynamic) = jacobi_residual_along(a, l, &tr, &f)?;
            summary.jacobi_residual = Some(first.max(dynamic));
            sink.put("jacobi.csv", f.to_csv().as_bytes())?;
        }
        Command::Conjugate => {
            let rep = conjugate_scan(a, l, &tr, t.tol_det, t.tol_sv)?;
            sink.json("conjugate.json", &rep)?;
        }
        Command::Secondvar => {
            let bm = second_variation_matrix(a, l, &tr)?;
            let ns = null_space(&bm, t.null_tol);
            summary.symmetry_defect = Some(bm.symmetry_defect_norm());
            sink.put("secondvar_matrix.csv", bm.to_csv().as_bytes())?;
            #[derive(Serialize)]
            struct Meta {
                #[serde(flatten)]
                meta: amech_core::variation::SecondVariationMeta,
                null_tol: f64,
                singular_values: Vec<f64>,
            }
            sink.json("secondvar_meta.json", &Meta { meta: bm.meta(t.null_tol), null_tol: t.null_tol, singular_values: ns.singular_values })?;
        }
        Command::Crosscheck => {
            let f = integrate_jacobi(a, l, &tr, &t.xi0, &t.xidot0)?;
            let rep = jacobi_lift_crosscheck(a, l, &tr, &f)?;
            summary.jacobi_residual = Some(rep.jacobi_residual);
            let var = kappa_variation(a, &tr, &GeneratorCurve::from_jacobi(&f))?;
            let fd = fd_prolongation_oracle(a, l, &cfg.x0, &cfg.y0, &t.xi0, &t.xidot0, t.ds, cfg.t0, cfg.t1, cfg.h)?;
            let gap = (0..tr.len())
                .map(|m| (&var.dx[m] - &fd.dx[m]).amax().max((&var.dy[m] - &fd.dy[m]).amax()))
                .fold(0.0, f64::max);
            sink.json("crosscheck.json", &CrosscheckOutput { report: &rep, oracle_gap: gap, ds: t.ds })?;
        }
    }
    let mut artifacts = sink.written.clone();
    artifacts.push("manifest.json".into());
    sink.json(
        "manifest.json",
        &Manifest {
            tool: "amech",
            version: env!("CARGO_PKG_VERSION"),
            command: cmd,
            config_sha256: &cfg.sha256,
            algebroid: a.label(),
            n: a.n(),
            k: a.k(),
            cells: tr.cells(),
            step: tr.h,
            artifacts: &artifacts,
            residual_summary: &summary,
        },
    )
}
