//! ADMM for `½‖Ax − b‖² + β‖Ψx‖₁`.

use nalgebra::{DMatrix, DVector, LU};

use super::{
    balance, cg::cg_spd, initial_penalty, soft_threshold, threshold, LinearOperatorHandle,
    SolveOutcome, SolverConfig, SolverState, TraceRow,
};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dist2, norm1, norm2};
use crate::sensing::HadamardSensing;
use crate::transforms::{circulant_eigenvalues, circulant_solve};

/// The x-update `(AᵀA + ρI)⁻¹ w` for a unitary `Ψ`.
trait LassoSystem {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>>;
    fn set_rho(&mut self, rho: f64) -> Result<()>;
    fn solve(&self, w: &[f64]) -> Result<Vec<f64>>;
}

/// Matrix-inversion lemma on the `m × m` system `I + AAᵀ/ρ`, LU-factored
/// once per penalty value.
struct DenseSystem<'a> {
    a: &'a DMatrix<f64>,
    aat: DMatrix<f64>,
    lu: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    rho: f64,
}

impl LassoSystem for DenseSystem<'_> {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.a * DVector::from_column_slice(x)).data.into())
    }

    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.a.tr_mul(&DVector::from_column_slice(y)).data.into())
    }

    fn set_rho(&mut self, rho: f64) -> Result<()> {
        let m = self.aat.nrows();
        let sys = DMatrix::identity(m, m) + &self.aat / rho;
        self.lu = Some(sys.lu());
        self.rho = rho;
        Ok(())
    }

    fn solve(&self, w: &[f64]) -> Result<Vec<f64>> {
        let lu = self.lu.as_ref().expect("penalty set before solve");
        let v = self.a * DVector::from_column_slice(w);
        let mu = lu.solve(&v).ok_or_else(|| Error::Solver {
            iteration: 0,
            message: "singular I + AAᵀ/ρ".into(),
        })?;
        let atmu = self.a.tr_mul(&mu);
        let r = self.rho;
        Ok(w.iter().zip(atmu.iter()).map(|(wi, ai)| (wi - ai / r) / r).collect())
    }
}

/// Fast-transform form with `FᵀF = nI`. Writing `A = P_r·F·P_c`,
/// `AᵀA + ρI = (F·P_c)ᵀ (D + ρ/n) (F·P_c)/n` with `D = P_rᵀP_r` diagonal
/// (row multiplicities), so the x-update is a diagonal scaling between two
/// transforms. This equals `(1/ρ)[I − (ρ+n)⁻¹AᵀA]w` for distinct rows and
/// avoids its cancellation when `ρ ≪ n`.
struct FastSystem<'a> {
    sel: &'a dyn HadamardSensing,
    counts: Vec<f64>,
    c: f64,
    rho: f64,
}

impl LassoSystem for FastSystem<'_> {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.sel.forward(x)
    }

    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.sel.adjoint(y)
    }

    fn set_rho(&mut self, rho: f64) -> Result<()> {
        self.rho = rho;
        Ok(())
    }

    fn solve(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut v = self.sel.mix(w)?;
        let c = self.c;
        for (vi, k) in v.iter_mut().zip(&self.counts) {
            *vi /= c * (c * k + self.rho);
        }
        self.sel.mix_adjoint(&v)
    }
}

fn require_unitary(psi: &LinearOperatorHandle, n: usize) -> Result<()> {
    if psi.cols() != n || psi.rows() != n {
        return Err(Error::Dimension {
            context: "sparsifying transform",
            expected: n,
            got: psi.cols(),
        });
    }
    match psi.gram_constant() {
        Some(c) if (c - 1.0).abs() < 1e-12 => Ok(()),
        _ => Err(Error::param("this solver needs a unitary sparsifying transform (ΨᵀΨ = I)")),
    }
}

fn run_lasso<S: LassoSystem>(
    sys: &mut S,
    n: usize,
    b: &[f64],
    psi: &LinearOperatorHandle,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    if b.iter().all(|v| *v == 0.0) {
        return Ok(SolveOutcome::zero(n));
    }
    let beta = cfg.weight;
    let atb = sys.adjoint(b)?;
    let mut x = atb.clone();
    let v0 = psi.apply(&x)?;
    let mut rho = initial_penalty(beta, &v0);
    sys.set_rho(rho)?;
    let mut z = soft_threshold(&v0, beta / rho);
    let mut lam: Vec<f64> = v0.iter().zip(&z).map(|(a, c)| rho * (a - c)).collect();

    let mut trace = Vec::new();
    let mut best = (f64::INFINITY, x.clone());
    let (mut r, mut s, mut obj) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for k in 1..=cfg.max_iters {
        let t: Vec<f64> = z.iter().zip(&lam).map(|(zi, li)| rho * zi - li).collect();
        let mut w = psi.apply_adjoint(&t)?;
        w.iter_mut().zip(&atb).for_each(|(wi, ai)| *wi += ai);
        x = sys.solve(&w).map_err(|e| with_iteration(e, k))?;
        let v = psi.apply(&x)?;
        let shifted: Vec<f64> = v.iter().zip(&lam).map(|(vi, li)| vi + li / rho).collect();
        let z_old = std::mem::replace(&mut z, soft_threshold(&shifted, beta / rho));
        for ((li, vi), zi) in lam.iter_mut().zip(&v).zip(&z) {
            *li += rho * (vi - zi);
        }
        r = dist2(&v, &z);
        s = rho * dist2(&z, &z_old);
        let ax = sys.forward(&x)?;
        obj = 0.5 * dist2(&ax, b).powi(2) + beta * norm1(&v);
        if obj < best.0 {
            best = (obj, x.clone());
        }
        if cfg.trace {
            trace.push(TraceRow {
                iteration: k,
                objective: obj,
                primal_residual: r,
                dual_residual: s,
                rho: Some(rho),
                beta: None,
                gamma: None,
            });
        }
        let state = |x: Vec<f64>, z: &[f64], lam: &[f64], rho: f64| SolverState {
            x,
            z: z.to_vec(),
            lambda1: lam.to_vec(),
            rho: Some(rho),
            iteration: k,
            ..SolverState::default()
        };
        if r <= threshold(cfg, norm2(&v).max(norm2(&z)), v.len())
            && s <= threshold(cfg, norm2(&lam), lam.len())
        {
            return Ok(SolveOutcome {
                x: x.clone(),
                converged: true,
                iterations: k,
                objective: obj,
                primal_residual: r,
                dual_residual: s,
                trace,
                state: state(x, &z, &lam, rho),
            });
        }
        if k % cfg.tune_interval == 0 {
            let next = balance(rho, r, s);
            if next != rho {
                rho = next;
                sys.set_rho(rho)?;
            }
        }
    }
    log::warn!("ADMM-LASSO stopped at max_iters = {} (r = {r:e}, s = {s:e})", cfg.max_iters);
    Ok(SolveOutcome {
        x: best.1,
        converged: false,
        iterations: cfg.max_iters,
        objective: best.0.min(obj),
        primal_residual: r,
        dual_residual: s,
        trace,
        state: SolverState {
            x,
            z,
            lambda1: lam,
            rho: Some(rho),
            iteration: cfg.max_iters,
            ..SolverState::default()
        },
    })
}

fn with_iteration(e: Error, k: usize) -> Error {
    match e {
        Error::Solver { message, .. } => Error::Solver { iteration: k, message },
        other => other,
    }
}

/// ADMM-LASSO for a general dense `A` and unitary `Ψ`.
pub fn admm_lasso_dense(
    a: &DMatrix<f64>,
    b: &[f64],
    psi: &LinearOperatorHandle,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let (m, n) = a.shape();
    check_len("measurements", m, b.len())?;
    require_unitary(psi, n)?;
    let mut sys = DenseSystem {
        a,
        aat: a * a.transpose(),
        lu: None,
        rho: 1.0,
    };
    run_lasso(&mut sys, n, b, psi, cfg)
}

/// ADMM-LASSO with `A = P_r·H·P_c`; each iteration costs `O(n log n)`.
pub fn admm_lasso_fast(
    sel: &dyn HadamardSensing,
    b: &[f64],
    psi: &LinearOperatorHandle,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let n = sel.n();
    check_len("measurements", sel.m(), b.len())?;
    require_unitary(psi, n)?;
    let mut sys = FastSystem {
        sel,
        counts: sel.row_counts(),
        c: n as f64,
        rho: 1.0,
    };
    run_lasso(&mut sys, n, b, psi, cfg)
}

/// Solver for `(cβ·I + γΨᵀΨ) x = rhs` inside [`admm_lasso_split`].
#[derive(Debug, Clone, PartialEq)]
pub enum InnerSolve {
    /// `ΨᵀΨ = s·I`.
    Scaled(f64),
    /// `ΨᵀΨ` is (block-)circulant with this first column over `shape`.
    Circulant { first_column: Vec<f64>, shape: Vec<usize> },
    /// Conjugate gradient on the normal operator.
    ConjugateGradient { tol: f64, max_iters: usize },
}

enum PreparedInner<'a> {
    Scaled(f64),
    Circulant { eigs: Vec<f64>, shape: &'a [usize] },
    Cg { tol: f64, max_iters: usize },
}

impl InnerSolve {
    fn prepare(&self, n: usize) -> Result<PreparedInner<'_>> {
        Ok(match self {
            InnerSolve::Scaled(s) => PreparedInner::Scaled(*s),
            InnerSolve::Circulant { first_column, shape } => {
                check_len("circulant first column", n, first_column.len())?;
                PreparedInner::Circulant {
                    eigs: circulant_eigenvalues(first_column, shape)?,
                    shape,
                }
            }
            InnerSolve::ConjugateGradient { tol, max_iters } => PreparedInner::Cg {
                tol: *tol,
                max_iters: *max_iters,
            },
        })
    }
}

/// ADMM for a possibly non-unitary `Ψ` via the split `u = H·P_c·x`,
/// `z = Ψx`, with multipliers `λ₁`, `λ₂` and penalties `β`, `γ`.
pub fn admm_lasso_split(
    sel: &dyn HadamardSensing,
    b: &[f64],
    psi: &LinearOperatorHandle,
    inner: &InnerSolve,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let n = sel.n();
    check_len("measurements", sel.m(), b.len())?;
    if psi.cols() != n {
        return Err(Error::Dimension {
            context: "sparsifying transform columns",
            expected: n,
            got: psi.cols(),
        });
    }
    if b.iter().all(|v| *v == 0.0) {
        return Ok(SolveOutcome::zero(n));
    }
    let alpha = cfg.weight;
    let c = n as f64;
    let prepared = inner.prepare(n)?;
    let solve_x = |rhs: &[f64], beta: f64, gamma: f64, x0: &[f64], k: usize| -> Result<Vec<f64>> {
        let d = c * beta;
        match &prepared {
            PreparedInner::Scaled(s) => Ok(rhs.iter().map(|v| v / (d + gamma * s)).collect()),
            PreparedInner::Circulant { eigs, shape } => {
                let e: Vec<f64> = eigs.iter().map(|v| d + gamma * v).collect();
                circulant_solve(&e, rhs, shape)
            }
            PreparedInner::Cg { tol, max_iters } => {
                let (x, ok) = cg_spd(
                    |v| {
                        let g = psi.apply_adjoint(&psi.apply(v)?)?;
                        Ok(v.iter().zip(&g).map(|(a, b)| d * a + gamma * b).collect())
                    },
                    rhs,
                    x0,
                    *tol,
                    *max_iters,
                )?;
                if ok {
                    Ok(x)
                } else {
                    Err(Error::Solver {
                        iteration: k,
                        message: format!("inner CG did not converge in {max_iters} iterations"),
                    })
                }
            }
        }
    };

    let ptb = sel.scatter(b);
    let counts = sel.row_counts();
    let mut x = sel.adjoint(b)?;
    let mut u = sel.mix(&x)?;
    let pv0 = psi.apply(&x)?;
    let mut beta = 0.1;
    let mut gamma = initial_penalty(alpha, &pv0);
    let mut z = soft_threshold(&pv0, alpha / gamma);
    let mut lam1 = vec![0.0; n];
    let mut lam2 = vec![0.0; z.len()];

    let mut trace = Vec::new();
    let mut best = (f64::INFINITY, x.clone());
    let (mut r, mut s, mut obj) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for k in 1..=cfg.max_iters {
        let t1: Vec<f64> = u.iter().zip(&lam1).map(|(ui, li)| beta * ui - li).collect();
        let t2: Vec<f64> = z.iter().zip(&lam2).map(|(zi, li)| gamma * zi - li).collect();
        let mut rhs = sel.mix_adjoint(&t1)?;
        rhs.iter_mut()
            .zip(psi.apply_adjoint(&t2)?)
            .for_each(|(a, b)| *a += b);
        x = solve_x(&rhs, beta, gamma, &x, k)?;
        let fx = sel.mix(&x)?;
        let pv = psi.apply(&x)?;
        let u_new: Vec<f64> = (0..n)
            .map(|i| (ptb[i] + beta * fx[i] + lam1[i]) / (counts[i] + beta))
            .collect();
        let u_old = std::mem::replace(&mut u, u_new);
        let shifted: Vec<f64> = pv.iter().zip(&lam2).map(|(v, l)| v + l / gamma).collect();
        let z_old = std::mem::replace(&mut z, soft_threshold(&shifted, alpha / gamma));
        for i in 0..n {
            lam1[i] += beta * (fx[i] - u[i]);
        }
        for i in 0..z.len() {
            lam2[i] += gamma * (pv[i] - z[i]);
        }
        let r1 = dist2(&fx, &u);
        let s1 = beta * dist2(&u, &u_old);
        let r2 = dist2(&pv, &z);
        let s2 = gamma * dist2(&z, &z_old);
        r = r1.hypot(r2);
        s = s1.hypot(s2);
        obj = 0.5 * dist2(&sel.gather(&fx), b).powi(2) + alpha * norm1(&pv);
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
        let done = r1 <= threshold(cfg, norm2(&fx).max(norm2(&u)), n)
            && r2 <= threshold(cfg, norm2(&pv).max(norm2(&z)), z.len())
            && s1 <= threshold(cfg, norm2(&lam1), n)
            && s2 <= threshold(cfg, norm2(&lam2), z.len());
        if done {
            return Ok(SolveOutcome {
                x: x.clone(),
                converged: true,
                iterations: k,
                objective: obj,
                primal_residual: r,
                dual_residual: s,
                trace,
                state: SolverState {
                    x,
                    z,
                    u: Some(u),
                    lambda1: lam1,
                    lambda2: Some(lam2),
                    beta: Some(beta),
                    gamma: Some(gamma),
                    iteration: k,
                    ..SolverState::default()
                },
            });
        }
        if k % cfg.tune_interval == 0 {
            beta = balance(beta, r1, s1);
            gamma = balance(gamma, r2, s2);
        }
    }
    log::warn!("ADMM split stopped at max_iters = {} (r = {r:e}, s = {s:e})", cfg.max_iters);
    Ok(SolveOutcome {
        x: best.1,
        converged: false,
        iterations: cfg.max_iters,
        objective: best.0.min(obj),
        primal_residual: r,
        dual_residual: s,
        trace,
        state: SolverState {
            x,
            z,
            u: Some(u),
            lambda1: lam1,
            lambda2: Some(lam2),
            beta: Some(beta),
            gamma: Some(gamma),
            iteration: cfg.max_iters,
            ..SolverState::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_error;
    use crate::rng;
    use crate::sensing::PermutedSelector;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn sparse_signal(n: usize, k: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut r);
        let mut x = vec![0.0; n];
        for &i in &idx[..k] {
            x[i] = r.random_range(1.0..2.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        }
        x
    }

    fn tight(weight: f64) -> SolverConfig {
        SolverConfig {
            weight,
            max_iters: 20000,
            tol: 1e-9,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn matrix_inversion_lemma() {
        let mut r = rng::seeded(3);
        let a = DMatrix::from_fn(8, 16, |_, _| r.random_range(-1.0..1.0));
        for rho in [0.1, 1.0, 10.0] {
            let lhs = (a.transpose() * &a + DMatrix::identity(16, 16) * rho)
                .try_inverse()
                .unwrap();
            let inner = (DMatrix::identity(8, 8) + &a * a.transpose() / rho).try_inverse().unwrap();
            let rhs = (DMatrix::identity(16, 16) - a.transpose() * inner * &a / rho) / rho;
            assert!((lhs - rhs).abs().max() < 1e-10);
        }
    }

    #[test]
    fn fast_update_matches_dense_with_duplicates() {
        let sel = PermutedSelector::from_parts(8, &[2, 5, 2, 7, 2, 5], &[3, 1, 8, 2, 7, 4, 6, 5]).unwrap();
        let a = sel.dense().unwrap();
        let w: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        for rho in [0.3, 2.0, 40.0] {
            let mut d = DenseSystem {
                a: &a,
                aat: &a * a.transpose(),
                lu: None,
                rho: 1.0,
            };
            d.set_rho(rho).unwrap();
            let mut f = FastSystem {
                sel: &sel,
                counts: sel.row_counts(),
                c: 8.0,
                rho: 1.0,
            };
            f.set_rho(rho).unwrap();
            let (xd, xf) = (d.solve(&w).unwrap(), f.solve(&w).unwrap());
            assert!(dist2(&xd, &xf) < 1e-10);
        }
    }

    #[test]
    fn identity_operator_gives_soft_threshold() {
        let b = vec![3.0, -0.2, 0.7, -2.5, 0.0, 1.1];
        let a = DMatrix::identity(6, 6);
        let psi = LinearOperatorHandle::identity(6).unwrap();
        let out = admm_lasso_dense(&a, &b, &psi, &tight(0.5)).unwrap();
        assert!(out.converged);
        let want = soft_threshold(&b, 0.5);
        assert!(dist2(&out.x, &want) < 1e-6);
    }

    #[test]
    fn zero_measurements_return_zero() {
        let a = DMatrix::identity(4, 4);
        let psi = LinearOperatorHandle::identity(4).unwrap();
        let out = admm_lasso_dense(&a, &[0.0; 4], &psi, &SolverConfig::default()).unwrap();
        assert_eq!(out.x, vec![0.0; 4]);
        assert!(out.converged);
    }

    #[test]
    fn huge_weight_gives_zero() {
        let mut r = rng::seeded(9);
        let a = DMatrix::from_fn(10, 20, |_, _| r.random_range(-1.0..1.0));
        let b: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
        let psi = LinearOperatorHandle::identity(20).unwrap();
        let out = admm_lasso_dense(&a, &b, &psi, &tight(1e6)).unwrap();
        assert!(norm2(&out.x) < 1e-8);
    }

    #[test]
    fn dense_recovers_sparse_signal() {
        let (n, m, k) = (64, 32, 3);
        let mut r = rng::seeded(21);
        let s = 1.0 / (m as f64).sqrt();
        let a = DMatrix::from_fn(m, n, |_, _| if r.random_bool(0.5) { s } else { -s });
        let x = sparse_signal(n, k, 22);
        let b: Vec<f64> = (&a * DVector::from_vec(x.clone())).data.into();
        let psi = LinearOperatorHandle::identity(n).unwrap();
        let out = admm_lasso_dense(&a, &b, &psi, &tight(1e-5)).unwrap();
        assert!(rel_error(&out.x, &x) < 1e-3, "{}", rel_error(&out.x, &x));
    }

    #[test]
    fn optimality_certificate() {
        let (n, m) = (40, 20);
        let mut r = rng::seeded(5);
        let a = DMatrix::from_fn(m, n, |_, _| r.random_range(-1.0..1.0));
        let b: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let beta = 0.3;
        let psi = LinearOperatorHandle::identity(n).unwrap();
        let out = admm_lasso_dense(&a, &b, &psi, &tight(beta)).unwrap();
        assert!(out.converged);
        let res = &a * DVector::from_vec(out.x.clone()) - DVector::from_vec(b);
        let g = a.tr_mul(&res);
        let tol = 1e-5;
        for i in 0..n {
            if out.x[i].abs() < 1e-9 {
                assert!(g[i].abs() <= beta + tol, "{i}: {}", g[i]);
            } else {
                assert!((g[i] + beta * out.x[i].signum()).abs() <= tol, "{i}: {}", g[i]);
            }
        }
    }

    #[test]
    fn fast_and_dense_agree() {
        let n = 64;
        for seed in 0..3 {
            let sel = PermutedSelector::random(n, 32, seed, false).unwrap();
            let x = sparse_signal(n, 4, 100 + seed);
            let b = sel.apply(&x).unwrap();
            let a = sel.dense().unwrap();
            let psi = LinearOperatorHandle::identity(n).unwrap();
            let cfg = tight(0.05);
            let d = admm_lasso_dense(&a, &b, &psi, &cfg).unwrap();
            let f = admm_lasso_fast(&sel, &b, &psi, &cfg).unwrap();
            assert!((d.objective - f.objective).abs() < 1e-6, "{} vs {}", d.objective, f.objective);
        }
    }

    #[test]
    fn fast_full_sampling_is_exact() {
        let n = 128;
        let sel = PermutedSelector::full(n, 4).unwrap();
        let mut r = rng::seeded(8);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let b = sel.apply(&x).unwrap();
        let psi = LinearOperatorHandle::identity(n).unwrap();
        let out = admm_lasso_fast(&sel, &b, &psi, &tight(1e-8)).unwrap();
        assert!(dist2(&out.x, &x) < 1e-6);
    }

    #[test]
    fn fast_rejects_non_unitary() {
        let sel = PermutedSelector::random(16, 8, 1, false).unwrap();
        let psi = LinearOperatorHandle::periodic_difference(16).unwrap();
        let r = admm_lasso_fast(&sel, &[1.0; 8], &psi, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn split_with_identity_matches_fast() {
        let n = 64;
        let sel = PermutedSelector::random(n, 32, 12, false).unwrap();
        let x = sparse_signal(n, 4, 13);
        let b = sel.apply(&x).unwrap();
        let psi = LinearOperatorHandle::identity(n).unwrap();
        let cfg = tight(0.05);
        let f = admm_lasso_fast(&sel, &b, &psi, &cfg).unwrap();
        for inner in [
            InnerSolve::Scaled(1.0),
            InnerSolve::ConjugateGradient {
                tol: 1e-12,
                max_iters: 500,
            },
        ] {
            let s = admm_lasso_split(&sel, &b, &psi, &inner, &cfg).unwrap();
            assert!((s.objective - f.objective).abs() < 1e-5, "{} vs {}", s.objective, f.objective);
        }
    }

    #[test]
    fn split_total_variation_recovers_piecewise_constant() {
        let n = 256;
        let x: Vec<f64> = (0..n)
            .map(|i| match i {
                0..=39 => 1.0,
                40..=119 => -0.5,
                120..=199 => 2.0,
                _ => 0.0,
            })
            .collect();
        let sel = PermutedSelector::random(n, n / 2, 31, false).unwrap().with_dc_row();
        let b = sel.apply(&x).unwrap();
        let psi = LinearOperatorHandle::periodic_difference(n).unwrap();
        let mut col = vec![0.0; n];
        col[0] = 2.0;
        col[1] = -1.0;
        col[n - 1] = -1.0;
        let inner = InnerSolve::Circulant {
            first_column: col,
            shape: vec![n],
        };
        let cfg = SolverConfig {
            weight: 0.5,
            max_iters: 5000,
            tol: 1e-7,
            trace: true,
            ..SolverConfig::default()
        };
        let out = admm_lasso_split(&sel, &b, &psi, &inner, &cfg).unwrap();
        assert!(rel_error(&out.x, &x) < 1e-2, "{}", rel_error(&out.x, &x));
        let t = &out.trace;
        let first = t[0].primal_residual;
        let tail = t[t.len().saturating_sub(10)..]
            .iter()
            .map(|r| r.primal_residual)
            .fold(0.0, f64::max);
        assert!(tail < first);
    }

    #[test]
    fn inner_cg_failure_is_reported() {
        let n = 32;
        let sel = PermutedSelector::random(n, 16, 2, false).unwrap();
        let b = sel.apply(&sparse_signal(n, 2, 3)).unwrap();
        let psi = LinearOperatorHandle::periodic_difference(n).unwrap();
        let inner = InnerSolve::ConjugateGradient {
            tol: 1e-30,
            max_iters: 1,
        };
        let r = admm_lasso_split(&sel, &b, &psi, &inner, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Solver { iteration: 1, .. })));
    }

    #[test]
    fn unconverged_is_flagged_and_deterministic() {
        let sel = PermutedSelector::random(64, 20, 7, false).unwrap();
        let b = sel.apply(&sparse_signal(64, 5, 8)).unwrap();
        let psi = LinearOperatorHandle::identity(64).unwrap();
        let cfg = SolverConfig {
            weight: 0.01,
            max_iters: 3,
            ..SolverConfig::default()
        };
        let a = admm_lasso_fast(&sel, &b, &psi, &cfg).unwrap();
        assert!(!a.converged);
        assert_eq!(a, admm_lasso_fast(&sel, &b, &psi, &cfg).unwrap());
    }

    #[test]
    fn tuning_moves_ratio_toward_band() {
        let sel = PermutedSelector::random(128, 40, 17, false).unwrap();
        let b = sel.apply(&sparse_signal(128, 5, 18)).unwrap();
        let psi = LinearOperatorHandle::identity(128).unwrap();
        let cfg = SolverConfig {
            weight: 0.01,
            tune_interval: 1,
            max_iters: 300,
            trace: true,
            ..SolverConfig::default()
        };
        let out = admm_lasso_fast(&sel, &b, &psi, &cfg).unwrap();
        for w in out.trace.windows(2) {
            let (a, c) = (&w[0], &w[1]);
            let ratio = a.primal_residual / a.dual_residual;
            let (ra, rc) = (a.rho.unwrap(), c.rho.unwrap());
            if ratio > 10.0 {
                assert_eq!(rc, 2.0 * ra);
            } else if ratio < 0.1 {
                assert_eq!(rc, ra / 2.0);
            } else {
                assert_eq!(rc, ra);
            }
        }
    }
}
