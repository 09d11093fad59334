//! ADMM reconstruction solvers and conjugate-gradient least squares.
//!
//! All solvers are deterministic and single-threaded. Penalties self-tune
//! by residual balancing every `tune_interval` iterations: a penalty doubles
//! when its primal residual exceeds ten times the dual residual and halves in
//! the opposite case. Multipliers are kept unscaled, so they carry over
//! unchanged when a penalty moves.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::dot;
use crate::rng;
use crate::transforms::WaveletPlan;

mod cg;
mod lasso;
mod tv;

pub use cg::{cg_least_squares, CgOutcome};
pub use lasso::{admm_lasso_dense, admm_lasso_fast, admm_lasso_split, InnerSolve};
pub use tv::admm_tv_video;

/// `S_t(x) = sgn(x)·max(|x| − t, 0)`, elementwise.
pub fn soft_threshold(x: &[f64], t: f64) -> Vec<f64> {
    x.iter().map(|&v| soft(v, t)).collect()
}

#[inline]
pub(crate) fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Complex shrinkage: magnitude reduced by `t`, phase kept.
pub fn soft_threshold_complex(x: &[Complex64], t: f64) -> Vec<Complex64> {
    x.iter()
        .map(|&v| {
            let r = v.norm();
            if r <= t {
                Complex64::default()
            } else {
                v * ((r - t) / r)
            }
        })
        .collect()
}

type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A linear map with its adjoint, validated on random probes when built.
#[derive(Clone)]
pub struct LinearOperatorHandle {
    rows: usize,
    cols: usize,
    forward: MapFn,
    adjoint: MapFn,
    gram_constant: Option<f64>,
}

impl std::fmt::Debug for LinearOperatorHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearOperatorHandle")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("gram_constant", &self.gram_constant)
            .finish()
    }
}

impl LinearOperatorHandle {
    /// Wraps `forward: R^cols → R^rows` and its adjoint. Fails with a value
    /// error unless `⟨Fx, y⟩ = ⟨x, Fᵀy⟩` to 1e-8 on seeded probes.
    pub fn new<F, G>(rows: usize, cols: usize, forward: F, adjoint: G) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if rows == 0 || cols == 0 {
            return Err(Error::param("operator dimensions must be positive"));
        }
        let op = Self {
            rows,
            cols,
            forward: Arc::new(forward),
            adjoint: Arc::new(adjoint),
            gram_constant: None,
        };
        op.probe()?;
        Ok(op)
    }

    fn probe(&self) -> Result<()> {
        let mut r = rng::seeded(0x5eed_ad70);
        for _ in 0..3 {
            let x: Vec<f64> = (0..self.cols).map(|_| r.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..self.rows).map(|_| r.random_range(-1.0..1.0)).collect();
            let fx = self.apply(&x)?;
            let fty = self.apply_adjoint(&y)?;
            let (lhs, rhs) = (dot(&fx, &y), dot(&x, &fty));
            let scale = crate::linalg::norm2(&fx) * crate::linalg::norm2(&y)
                + crate::linalg::norm2(&x) * crate::linalg::norm2(&fty);
            if (lhs - rhs).abs() > 1e-8 * scale.max(1.0) {
                return Err(Error::value(format!(
                    "adjoint check failed: <Fx,y> = {lhs}, <x,F'y> = {rhs}"
                )));
            }
        }
        Ok(())
    }

    /// Declares `FᵀF = c·I`.
    pub fn with_gram_constant(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param("Gram constant must be positive"));
        }
        self.gram_constant = Some(c);
        Ok(self)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(n, n, |x| x.to_vec(), |y| y.to_vec())?.with_gram_constant(1.0)
    }

    pub fn from_matrix(a: nalgebra::DMatrix<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        let a = Arc::new(a);
        let at = a.clone();
        Self::new(
            m,
            n,
            move |x| (a.as_ref() * nalgebra::DVector::from_column_slice(x)).data.into(),
            move |y| (at.tr_mul(&nalgebra::DVector::from_column_slice(y))).data.into(),
        )
    }

    /// Orthonormal Haar analysis (`ΨᵀΨ = I`).
    pub fn haar(plan: WaveletPlan) -> Result<Self> {
        let n = plan.len();
        let p = Arc::new(plan);
        let q = p.clone();
        Self::new(
            n,
            n,
            move |x| p.forward(x).expect("length checked by handle"),
            move |c| q.inverse(c).expect("length checked by handle"),
        )?
        .with_gram_constant(1.0)
    }

    /// 1D periodic first difference `x_i − x_{i+1}`.
    pub fn periodic_difference(n: usize) -> Result<Self> {
        Self::new(
            n,
            n,
            move |x| (0..n).map(|i| x[i] - x[(i + 1) % n]).collect(),
            move |y| (0..n).map(|i| y[i] - y[(i + n - 1) % n]).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn gram_constant(&self) -> Option<f64> {
        self.gram_constant
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("operator input", self.cols, x.len())?;
        let y = (self.forward)(x);
        check_len("operator output", self.rows, y.len())?;
        Ok(y)
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("operator adjoint input", self.rows, y.len())?;
        let x = (self.adjoint)(y);
        check_len("operator adjoint output", self.cols, x.len())?;
        Ok(x)
    }
}

/// Solver settings shared by the ADMM family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// β for LASSO, α for TV.
    pub weight: f64,
    pub max_iters: usize,
    pub tune_interval: usize,
    /// Relative stopping tolerance on primal and dual residuals.
    pub tol: f64,
    /// Absolute floor added to each stopping threshold, per √length.
    pub abs_tol: f64,
    /// TV weights `[ω_x, ω_y, ω_t]`.
    pub gradient_weights: [f64; 3],
    /// Record a per-iteration trace.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            weight: 1e-3,
            max_iters: 2000,
            tune_interval: 10,
            tol: 1e-6,
            abs_tol: 1e-12,
            gradient_weights: [1.0, 1.0, 1.0],
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn with_weight(weight: f64) -> Self {
        Self {
            weight,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::param("sparsity weight must be finite and non-negative"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be at least 1"));
        }
        if self.tune_interval == 0 {
            return Err(Error::param("tune_interval must be at least 1"));
        }
        if !(self.tol > 0.0) || !(self.abs_tol >= 0.0) {
            return Err(Error::param("tolerances must be positive"));
        }
        if self.gradient_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::param("gradient weights must be non-negative"));
        }
        Ok(())
    }
}

/// One row of a convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

/// Final iterates and penalties.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Option<Vec<f64>>,
    pub lambda1: Vec<f64>,
    pub lambda2: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    /// Solution; the lowest-objective iterate when unconverged.
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub trace: Vec<TraceRow>,
    pub state: SolverState,
}

impl SolveOutcome {
    fn zero(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            converged: true,
            iterations: 0,
            objective: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            trace: Vec::new(),
            state: SolverState {
                x: vec![0.0; n],
                ..SolverState::default()
            },
        }
    }
}

const TRACE_HEADER: &str = "iteration,objective,primal_residual,dual_residual,rho,beta,gamma";

/// Writes a trace as CSV; absent penalties are empty fields.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], mut w: W) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for t in trace {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{},{},{}",
            t.iteration,
            t.objective,
            t.primal_residual,
            t.dual_residual,
            opt(t.rho),
            opt(t.beta),
            opt(t.gamma)
        )?;
    }
    Ok(())
}

/// Residual balancing: returns the new penalty.
pub(crate) fn balance(penalty: f64, primal: f64, dual: f64) -> f64 {
    if primal > 10.0 * dual {
        penalty * 2.0
    } else if dual > 10.0 * primal {
        penalty / 2.0
    } else {
        penalty
    }
}

/// `w/mean|v|`, falling back to 1 when that is not a positive number.
pub(crate) fn initial_penalty(w: f64, v: &[f64]) -> f64 {
    let p = w / crate::linalg::mean_abs(v);
    if p.is_finite() && p > 0.0 {
        p
    } else {
        1.0
    }
}

/// Relative-plus-absolute stopping threshold.
pub(crate) fn threshold(cfg: &SolverConfig, scale: f64, len: usize) -> f64 {
    cfg.tol * scale + cfg.abs_tol * (len as f64).sqrt()
}
