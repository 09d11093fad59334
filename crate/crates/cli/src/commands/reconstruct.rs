use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cstk_core::io::{load_container, save_container, Tensor};
use cstk_core::sensing::HadamardSensing;
use cstk_core::solvers::{
    admm_lasso_dense, admm_lasso_fast, admm_lasso_split, admm_tv_video, write_trace_csv, InnerSolve,
};
use cstk_core::{BlockDiagonalSensor, GradientOperator, LinearOperatorHandle, SolveOutcome, SolverConfig, WaveletPlan};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::sense::SelectorFile;
use crate::config::{load_config, read_json, require_out, sibling, Overrides, Provenance};
use crate::error::{CliError, CliResult, Context};
use crate::Global;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    LassoDense,
    LassoFast,
    LassoSplit,
    Tv,
    TvVideo,
}

/// Sparsifying transform for the LASSO solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    Identity,
    Haar,
    /// Periodic first difference (split solver only).
    Difference,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Measurement vector container.
    pub measurements: PathBuf,
    /// Selector JSON (defaults to `<measurements>.selector.json`).
    #[arg(long, value_name = "PATH")]
    pub selector: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    #[arg(long, value_enum)]
    pub basis: Option<Basis>,
    /// β for LASSO, α for TV.
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Frame width for the TV solvers (default: square frames).
    #[arg(long)]
    pub nx: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    pub selector: Option<PathBuf>,
    pub solver: SolverKind,
    pub basis: Basis,
    /// Haar levels; `None` is the maximum.
    pub levels: Option<usize>,
    pub nx: Option<usize>,
    pub admm: SolverConfig,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            selector: None,
            solver: SolverKind::LassoFast,
            basis: Basis::Identity,
            levels: None,
            nx: None,
            admm: SolverConfig::default(),
        }
    }
}

fn transform(basis: Basis, n: usize, levels: Option<usize>) -> CliResult<LinearOperatorHandle> {
    let h = match basis {
        Basis::Identity => LinearOperatorHandle::identity(n),
        Basis::Haar => {
            let levels = levels.unwrap_or_else(|| WaveletPlan::max_levels(&[n]));
            WaveletPlan::new_1d(n, levels).and_then(LinearOperatorHandle::haar)
        }
        Basis::Difference => LinearOperatorHandle::periodic_difference(n),
    };
    h.context("sparsifying transform")
}

fn single_frame(sensor: &BlockDiagonalSensor, solver: SolverKind) -> CliResult<&cstk_core::PermutedSelector> {
    match sensor.frames() {
        [one] => Ok(one),
        many => Err(CliError::Data(format!(
            "{solver:?} takes one frame, the selector has {}",
            many.len()
        ))),
    }
}

/// Frame geometry `(nx, ny)` for the TV solvers.
fn frame_shape(n: usize, nx: Option<usize>) -> CliResult<(usize, usize)> {
    let nx = match nx {
        Some(nx) => nx,
        None => {
            let s = (n as f64).sqrt().round() as usize;
            if s * s != n {
                return Err(CliError::Data(format!("frame length {n} is not square; pass --nx")));
            }
            s
        }
    };
    if nx == 0 || !n.is_multiple_of(nx) {
        return Err(CliError::Data(format!("width {nx} does not divide frame length {n}")));
    }
    Ok((nx, n / nx))
}

fn solve(cfg: &ReconstructConfig, sensor: &BlockDiagonalSensor, y: &[f64]) -> CliResult<(SolveOutcome, Vec<usize>)> {
    let n = sensor.n();
    let admm = &cfg.admm;
    let lasso_dims = vec![n];
    let outcome = match cfg.solver {
        SolverKind::LassoDense => {
            let sel = single_frame(sensor, cfg.solver)?;
            let rows = (0..sel.m()).map(|i| sel.pattern(i)).collect::<Result<Vec<_>, _>>()?;
            let a = DMatrix::from_fn(sel.m(), n, |i, j| rows[i][j]);
            admm_lasso_dense(&a, y, &transform(cfg.basis, n, cfg.levels)?, admm)
        }
        SolverKind::LassoFast => {
            let sel = single_frame(sensor, cfg.solver)?;
            admm_lasso_fast(sel, y, &transform(cfg.basis, n, cfg.levels)?, admm)
        }
        SolverKind::LassoSplit => {
            let sel = single_frame(sensor, cfg.solver)?;
            let psi = transform(cfg.basis, n, cfg.levels)?;
            let inner = match cfg.basis {
                Basis::Identity | Basis::Haar => InnerSolve::Scaled(1.0),
                Basis::Difference => {
                    let mut e0 = vec![0.0; n];
                    e0[0] = 1.0;
                    let col = psi.apply_adjoint(&psi.apply(&e0)?)?;
                    InnerSolve::Circulant {
                        first_column: col,
                        shape: vec![n],
                    }
                }
            };
            admm_lasso_split(sel, y, &psi, &inner, admm)
        }
        SolverKind::Tv | SolverKind::TvVideo => {
            let nf = sensor.frame_count();
            if cfg.solver == SolverKind::Tv && nf != 1 {
                return Err(CliError::Data(format!("tv takes one frame, the selector has {nf}; use tv-video")));
            }
            let (nx, ny) = frame_shape(n, cfg.nx)?;
            let g = GradientOperator::with_weights(nx, ny, nf, admm.gradient_weights)?;
            let dims = if nf == 1 { vec![ny, nx] } else { vec![nf, ny, nx] };
            return Ok((admm_tv_video(sensor, y, &g, admm)?, dims));
        }
    };
    Ok((outcome?, lasso_dims))
}

pub fn run(g: &Global, a: &ReconstructArgs) -> CliResult<()> {
    let out = require_out(g.out.as_deref())?;
    let mut o = Overrides::default();
    o.set(&["selector"], a.selector.clone())
        .set(&["solver"], a.solver)
        .set(&["basis"], a.basis)
        .set(&["nx"], a.nx)
        .set(&["admm", "weight"], a.weight)
        .set(&["admm", "max_iters"], a.max_iters)
        .set(&["admm", "tol"], a.tol)
        .set(&["admm", "trace"], g.trace.as_ref().map(|_| true));
    let cfg: ReconstructConfig = load_config(g.config.as_deref(), &o)?;

    let y = load_container(&a.measurements)
        .context(format!("reading {}", a.measurements.display()))?
        .data;
    let sel_path = cfg.selector.clone().unwrap_or_else(|| sibling(&a.measurements, "selector.json"));
    let sensor = read_json::<SelectorFile>(&sel_path)?.into_sensor()?;
    let expected = sensor.m() * sensor.frame_count();
    if expected != y.len() {
        return Err(CliError::Data(format!(
            "selector expects {expected} measurements, {} has {}",
            a.measurements.display(),
            y.len()
        )));
    }

    let (outcome, dims) = solve(&cfg, &sensor, &y)?;
    let x = Tensor::new(dims, outcome.x.clone()).context("solution")?;
    save_container(out, &x).context(format!("writing {}", out.display()))?;
    if let Some(t) = &g.trace {
        write_trace(t, &outcome)?;
    }
    Provenance::new("reconstruct", &cfg, g.seed()).write_sidecar(out)?;
    println!(
        "{:?}: {} iterations, objective {:.6e}, converged {}",
        cfg.solver, outcome.iterations, outcome.objective, outcome.converged
    );
    if !outcome.converged {
        return Err(CliError::Numerical(format!(
            "not converged after {} iterations (best iterate written)",
            outcome.iterations
        )));
    }
    Ok(())
}

fn write_trace(path: &Path, outcome: &SolveOutcome) -> CliResult<()> {
    let f = File::create(path).context(format!("creating {}", path.display()))?;
    write_trace_csv(&outcome.trace, BufWriter::new(f)).context(format!("writing {}", path.display()))
}
