use super::LinearOperatorHandle;
use crate::error::{check_len, Result};
use crate::linalg::{dot, norm2};

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    /// Final iterate (lowest normal-equation residual seen if unconverged).
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖Aᵀ(Ax − b)‖ / ‖Aᵀb‖` at `x`.
    pub relative_residual: f64,
}

/// Least squares `min ‖Ax − b‖` by conjugate gradient on `AᵀAx = Aᵀb`
/// (CGLS form). Starting from zero it converges to the minimum-norm
/// solution when `A` is rank deficient.
pub fn cg_least_squares(
    op: &LinearOperatorHandle,
    b: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<CgOutcome> {
    check_len("least-squares right-hand side", op.rows(), b.len())?;
    let n = op.cols();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut s = op.apply_adjoint(&r)?;
    let atb = norm2(&s);
    if atb == 0.0 {
        return Ok(CgOutcome {
            x,
            converged: true,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut p = s.clone();
    let mut g = dot(&s, &s);
    let mut best = (1.0, x.clone());
    for k in 1..=max_iters {
        let q = op.apply(&p)?;
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let a = g / qq;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += a * pi);
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= a * qi);
        s = op.apply_adjoint(&r)?;
        let g_new = dot(&s, &s);
        let rel = g_new.sqrt() / atb;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= tol {
            return Ok(CgOutcome {
                x,
                converged: true,
                iterations: k,
                relative_residual: rel,
            });
        }
        let ratio = g_new / g;
        p.iter_mut().zip(&s).for_each(|(pi, si)| *pi = si + ratio * *pi);
        g = g_new;
    }
    log::warn!("CG least squares stopped at {max_iters} iterations");
    Ok(CgOutcome {
        x: best.1,
        converged: false,
        iterations: max_iters,
        relative_residual: best.0,
    })
}

/// Plain CG for a symmetric positive-definite operator, warm-started at
/// `x0`. Returns the iterate and whether `‖rhs − Mx‖ ≤ tol·‖rhs‖`.
pub(crate) fn cg_spd<F>(apply: F, rhs: &[f64], x0: &[f64], tol: f64, max_iters: usize) -> Result<(Vec<f64>, bool)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let target = tol * norm2(rhs);
    let mut x = x0.to_vec();
    let mx = apply(&x)?;
    let mut r: Vec<f64> = rhs.iter().zip(&mx).map(|(a, b)| a - b).collect();
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return Ok((x, true));
    }
    let mut p = r.clone();
    for _ in 0..max_iters {
        let mp = apply(&p)?;
        let a = rr / dot(&p, &mp);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += a * pi);
        r.iter_mut().zip(&mp).for_each(|(ri, mi)| *ri -= a * mi);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return Ok((x, true));
        }
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
    Ok((x, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    #[test]
    fn identity_returns_b() {
        let op = LinearOperatorHandle::identity(5).unwrap();
        let b = [1.0, -2.0, 3.0, 0.5, 0.0];
        let out = cg_least_squares(&op, &b, 1e-12, 10).unwrap();
        assert!(out.converged);
        assert!(out.x.iter().zip(&b).all(|(a, c)| (a - c).abs() < 1e-12));
    }

    #[test]
    fn overdetermined_matches_normal_equations() {
        let mut r = rng::seeded(40);
        let a = DMatrix::from_fn(40, 10, |_, _| r.random_range(-1.0..1.0));
        let b = DVector::from_fn(40, |_, _| r.random_range(-1.0..1.0));
        let want = (a.transpose() * &a).lu().solve(&(a.transpose() * &b)).unwrap();
        let op = LinearOperatorHandle::from_matrix(a).unwrap();
        let out = cg_least_squares(&op, b.as_slice(), 1e-13, 200).unwrap();
        assert!(out.converged);
        for (u, v) in out.x.iter().zip(want.iter()) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn rank_deficient_gives_minimum_norm() {
        let mut r = rng::seeded(41);
        let u = DMatrix::from_fn(12, 3, |_, _| r.random_range(-1.0..1.0));
        let v = DMatrix::from_fn(3, 8, |_, _| r.random_range(-1.0..1.0));
        let a = u * v;
        let b = DVector::from_fn(12, |_, _| r.random_range(-1.0..1.0));
        let pinv = a.clone().pseudo_inverse(1e-10).unwrap();
        let want = pinv * &b;
        let op = LinearOperatorHandle::from_matrix(a).unwrap();
        let out = cg_least_squares(&op, b.as_slice(), 1e-12, 200).unwrap();
        assert!(out.converged && out.relative_residual <= 1e-12);
        for (p, q) in out.x.iter().zip(want.iter()) {
            assert!((p - q).abs() < 1e-7);
        }
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let mut r = rng::seeded(42);
        let a = DMatrix::from_fn(30, 20, |_, _| r.random_range(-1.0..1.0));
        let op = LinearOperatorHandle::from_matrix(a).unwrap();
        let out = cg_least_squares(&op, &[1.0; 30], 1e-14, 2).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
