//! ADMM for anisotropic TV video reconstruction,
//! `½‖Ax − b‖² + α‖∇x‖₁` with `A` block diagonal over frames.

use super::{
    balance, initial_penalty, soft_threshold, threshold, SolveOutcome, SolverConfig, SolverState,
    TraceRow,
};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dist2, norm1, norm2};
use crate::sensing::{BlockDiagonalSensor, HadamardSensing};
use crate::transforms::{circulant_eigenvalues, circulant_solve, GradientOperator};

/// Per-frame `H·P_c` and its adjoint over a concatenated video.
fn mix_frames(sensor: &BlockDiagonalSensor, x: &[f64], adjoint: bool) -> Result<Vec<f64>> {
    let n = sensor.n();
    let mut out = Vec::with_capacity(x.len());
    for (f, sel) in sensor.frames().iter().enumerate() {
        let part = &x[f * n..(f + 1) * n];
        out.extend(if adjoint { sel.mix_adjoint(part)? } else { sel.mix(part)? });
    }
    Ok(out)
}

/// Solves `(βn·I + γ∇ᵀ∇) x = rhs` by FFT diagonalization.
fn x_update(lap_eigs: &[f64], n: f64, beta: f64, gamma: f64, rhs: &[f64], shape: &[usize]) -> Result<Vec<f64>> {
    let eigs: Vec<f64> = lap_eigs.iter().map(|e| beta * n + gamma * e).collect();
    circulant_solve(&eigs, rhs, shape)
}

/// Reconstructs `n_F` frames from per-frame Hadamard measurements `b`
/// (concatenated frame by frame).
///
/// Update order per iteration: `z`, `u`, `x`, then both multipliers.
/// With a single frame the temporal difference is dropped.
pub fn admm_tv_video(
    sensor: &BlockDiagonalSensor,
    b: &[f64],
    g: &GradientOperator,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let (nf, ny, nx) = g.shape();
    let n = sensor.n();
    if nf != sensor.frame_count() || ny * nx != n {
        return Err(Error::param(format!(
            "gradient shape {nf}x{ny}x{nx} does not match {} frames of {n} pixels",
            sensor.frame_count()
        )));
    }
    check_len("video measurements", sensor.m() * nf, b.len())?;
    let total = n * nf;
    if b.iter().all(|v| *v == 0.0) {
        return Ok(SolveOutcome::zero(total));
    }
    let g = if nf == 1 { g.without_temporal() } else { *g };
    let shape = [nf, ny, nx];
    let lap_eigs = circulant_eigenvalues(&g.laplacian_first_column(), &shape)?;
    let alpha = cfg.weight;

    let m = sensor.m();
    let mut ptb = Vec::with_capacity(total);
    let mut counts = Vec::with_capacity(total);
    for (f, sel) in sensor.frames().iter().enumerate() {
        ptb.extend(sel.scatter(&b[f * m..(f + 1) * m]));
        counts.extend(sel.row_counts());
    }

    let mut x = sensor.apply_adjoint(b)?;
    let gx0 = g.apply(&x)?;
    let mut beta = 0.1;
    let mut gamma = initial_penalty(alpha, &gx0);
    let mut u = mix_frames(sensor, &x, false)?;
    let mut z = gx0;
    let mut lam1 = vec![0.0; total];
    let mut lam2 = vec![0.0; 3 * total];

    let mut trace = Vec::new();
    let mut best = (f64::INFINITY, x.clone());
    let mut gx = g.apply(&x)?;
    let mut fx = u.clone();
    for k in 1..=cfg.max_iters {
        let shifted: Vec<f64> = gx.iter().zip(&lam2).map(|(v, l)| v + l / gamma).collect();
        let z_old = std::mem::replace(&mut z, soft_threshold(&shifted, alpha / gamma));
        let u_new: Vec<f64> = (0..total)
            .map(|i| (ptb[i] + beta * fx[i] + lam1[i]) / (counts[i] + beta))
            .collect();
        let u_old = std::mem::replace(&mut u, u_new);

        let t1: Vec<f64> = u.iter().zip(&lam1).map(|(ui, li)| beta * ui - li).collect();
        let t2: Vec<f64> = z.iter().zip(&lam2).map(|(zi, li)| gamma * zi - li).collect();
        let mut rhs = mix_frames(sensor, &t1, true)?;
        rhs.iter_mut().zip(g.adjoint(&t2)?).for_each(|(a, c)| *a += c);
        x = x_update(&lap_eigs, n as f64, beta, gamma, &rhs, &shape).map_err(|e| Error::Solver {
            iteration: k,
            message: e.to_string(),
        })?;
        fx = mix_frames(sensor, &x, false)?;
        gx = g.apply(&x)?;
        for i in 0..total {
            lam1[i] += beta * (fx[i] - u[i]);
        }
        for i in 0..3 * total {
            lam2[i] += gamma * (gx[i] - z[i]);
        }

        let r1 = dist2(&fx, &u);
        let s1 = beta * dist2(&u, &u_old);
        let r2 = dist2(&gx, &z);
        let s2 = gamma * dist2(&z, &z_old);
        let r = r1.hypot(r2);
        let s = s1.hypot(s2);
        let mut misfit = 0.0;
        for (f, sel) in sensor.frames().iter().enumerate() {
            let y = sel.gather(&fx[f * n..(f + 1) * n]);
            misfit += dist2(&y, &b[f * m..(f + 1) * m]).powi(2);
        }
        let obj = 0.5 * misfit + alpha * norm1(&gx);
        if obj < best.0 {
            best = (obj, x.clone());
        }
        if cfg.trace {
            trace.push(TraceRow {
                iteration: k,
                objective: obj,
                primal_residual: r,
                dual_residual: s,
                rho: None,
                beta: Some(beta),
                gamma: Some(gamma),
            });
        }
        let done = r1 <= threshold(cfg, norm2(&fx).max(norm2(&u)), total)
            && r2 <= threshold(cfg, norm2(&gx).max(norm2(&z)), 3 * total)
            && s1 <= threshold(cfg, norm2(&lam1), total)
            && s2 <= threshold(cfg, norm2(&lam2), 3 * total);
        let state = |x: Vec<f64>, z: Vec<f64>, u: Vec<f64>, l1: Vec<f64>, l2: Vec<f64>, it, beta, gamma| SolverState {
            x,
            z,
            u: Some(u),
            lambda1: l1,
            lambda2: Some(l2),
            rho: None,
            beta: Some(beta),
            gamma: Some(gamma),
            iteration: it,
        };
        if done {
            return Ok(SolveOutcome {
                x: x.clone(),
                converged: true,
                iterations: k,
                objective: obj,
                primal_residual: r,
                dual_residual: s,
                trace,
                state: state(x, z, u, lam1, lam2, k, beta, gamma),
            });
        }
        if k % cfg.tune_interval == 0 {
            beta = balance(beta, r1, s1);
            gamma = balance(gamma, r2, s2);
        }
        if k == cfg.max_iters {
            log::warn!("ADMM-TV stopped at max_iters = {k} (r = {r:e}, s = {s:e})");
            return Ok(SolveOutcome {
                x: best.1,
                converged: false,
                iterations: k,
                objective: best.0.min(obj),
                primal_residual: r,
                dual_residual: s,
                trace,
                state: state(x, z, u, lam1, lam2, k, beta, gamma),
            });
        }
    }
    unreachable!("max_iters ≥ 1 is validated")
}
