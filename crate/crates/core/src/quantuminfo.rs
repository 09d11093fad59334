//! Information measures for joint distributions and small quantum states,
//! plus quantum-data-locking key-rate and Reed-Solomon budget arithmetic.

use std::f64::consts::{E, LN_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-9;
const STATE_TOL: f64 = 1e-10;

fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::value("empty distribution"));
    }
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::value(format!("invalid probability {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::value(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

fn entropy_unchecked(p: &[f64], base: f64) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>() / base.ln()
}

/// `H = −Σ p log_b p` with `0·log 0 = 0`.
pub fn shannon_entropy(p: &[f64], base: f64) -> Result<f64> {
    if !(base > 0.0 && base != 1.0) {
        return Err(Error::param("entropy base must be positive and not 1"));
    }
    validate_probabilities(p)?;
    Ok(entropy_unchecked(p, base))
}

/// Joint distribution `p(a, b)` stored row-major (`a` slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    rows: usize,
    cols: usize,
    joint: Vec<f64>,
}

impl Distribution {
    pub fn new(rows: usize, cols: usize, joint: Vec<f64>) -> Result<Self> {
        if rows * cols != joint.len() {
            return Err(Error::Dimension {
                context: "joint distribution",
                expected: rows * cols,
                got: joint.len(),
            });
        }
        validate_probabilities(&joint)?;
        Ok(Self { rows, cols, joint })
    }

    /// Normalizes non-negative counts.
    pub fn from_counts(rows: usize, cols: usize, counts: &[f64]) -> Result<Self> {
        if counts.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::value("counts must be non-negative"));
        }
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::value("counts sum to zero"));
        }
        Self::new(rows, cols, counts.iter().map(|v| v / total).collect())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn marginal_a(&self) -> Vec<f64> {
        self.joint.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_b(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in self.joint.chunks(self.cols) {
            m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        m
    }

    /// `H(A) + H(B) − H(A,B)` in bits.
    pub fn mutual_information(&self) -> f64 {
        let ha = entropy_unchecked(&self.marginal_a(), 2.0);
        let hb = entropy_unchecked(&self.marginal_b(), 2.0);
        let hab = entropy_unchecked(&self.joint, 2.0);
        (ha + hb - hab).max(0.0)
    }
}

pub fn mutual_information(d: &Distribution) -> f64 {
    d.mutual_information()
}

/// `2·log₂(nΔxΔk/(πe))`.
pub fn steering_bound(n: f64, dx: f64, dk: f64) -> Result<f64> {
    if !(n > 0.0 && dx > 0.0 && dk > 0.0) {
        return Err(Error::param("steering inputs must be positive"));
    }
    Ok(2.0 * (n * dx * dk / (PI * E)).log2())
}

pub fn steering_violated(i_x: f64, i_k: f64, bound: f64) -> bool {
    i_x + i_k > bound
}

/// Position mutual information of a Gaussian-pump SPDC source,
/// `log₂((9πσ² + Lλ)/(2σ√(9πLλ)))`, doubled for two transverse dimensions.
pub fn spdc_position_mi(sigma_p: f64, l_z: f64, lambda_p: f64, two_dimensional: bool) -> Result<f64> {
    if !(sigma_p > 0.0 && l_z > 0.0 && lambda_p > 0.0) {
        return Err(Error::param("SPDC parameters must be positive"));
    }
    let ll = l_z * lambda_p;
    let one = ((9.0 * PI * sigma_p * sigma_p + ll) / (2.0 * sigma_p * (9.0 * PI * ll).sqrt())).log2();
    Ok(if two_dimensional { 2.0 * one } else { one })
}

/// Validated Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: DMatrix<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

impl DensityMatrix {
    pub fn new(rho: DMatrix<Complex64>) -> Result<Self> {
        let (r, c) = rho.shape();
        if r != c || r == 0 {
            return Err(Error::value("density matrix must be square"));
        }
        let herm = (&rho - rho.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if herm > STATE_TOL {
            return Err(Error::value(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::value(format!("trace {tr} is not 1")));
        }
        let d = Self { rho };
        if d.eigenvalues().iter().any(|e| *e < -STATE_TOL) {
            return Err(Error::value("density matrix has a negative eigenvalue"));
        }
        Ok(d)
    }

    /// `|ψ⟩⟨ψ|` for a unit vector `ψ`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::value(format!("state vector norm {norm} is not 1")));
        }
        let n = psi.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj()))
    }

    /// Real diagonal mixture.
    pub fn diagonal(p: &[f64]) -> Result<Self> {
        let n = p.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(p[i], 0.0)
            } else {
                Complex64::default()
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    /// Real eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.rho.clone().symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Traces out one factor of a `d_a ⊗ d_b` state, keeping `keep`.
    pub fn partial_trace(&self, d_a: usize, d_b: usize, keep: Subsystem) -> Result<Self> {
        if d_a * d_b != self.dim() || d_a == 0 || d_b == 0 {
            return Err(Error::Dimension {
                context: "partial trace factor dimensions",
                expected: self.dim(),
                got: d_a * d_b,
            });
        }
        let r = &self.rho;
        let out = match keep {
            Subsystem::A => DMatrix::from_fn(d_a, d_a, |i, j| {
                (0..d_b).map(|k| r[(i * d_b + k, j * d_b + k)]).sum()
            }),
            Subsystem::B => DMatrix::from_fn(d_b, d_b, |i, j| {
                (0..d_a).map(|k| r[(k * d_b + i, k * d_b + j)]).sum()
            }),
        };
        Self::new(out)
    }
}

/// `S(ρ) = −Σ λ log₂ λ` over eigenvalues, clamping tiny negatives to 0.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    -rho.eigenvalues()
        .into_iter()
        .map(|l| if l >= -STATE_TOL { l.max(0.0) } else { l })
        .filter(|l| *l > 0.0)
        .map(|l| l * l.log2())
        .sum::<f64>()
}

pub fn partial_trace(rho: &DensityMatrix, d_a: usize, d_b: usize, keep: Subsystem) -> Result<DensityMatrix> {
    rho.partial_trace(d_a, d_b, keep)
}

fn hermitian_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0)));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Two-qubit concurrence `max(0, λ₁ − λ₂ − λ₃ − λ₄)` where `λᵢ` are the
/// decreasing square roots of the eigenvalues of `ρρ̃`,
/// `ρ̃ = (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::Dimension {
            context: "concurrence (two qubits)",
            expected: 4,
            got: rho.dim(),
        });
    }
    let (o, i) = (Complex64::default(), Complex64::new(0.0, 1.0));
    let sy = DMatrix::from_row_slice(2, 2, &[o, -i, i, o]);
    let yy = sy.kronecker(&sy);
    let r = rho.matrix();
    let tilde = &yy * r.map(|v| v.conj()) * &yy;
    let s = hermitian_sqrt(r);
    let m = &s * tilde * &s;
    let herm = (&m + m.adjoint()).map(|v| v * 0.5);
    let mut l: Vec<f64> = herm
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    l.sort_by(|a, b| b.total_cmp(a));
    Ok((l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0))
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Entanglement of formation from concurrence, `h((1 + √(1 − C²))/2)`.
pub fn eof_bound(c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::value(format!("concurrence {c} outside [0, 1]")));
    }
    Ok(binary_entropy((1.0 + (1.0 - c * c).sqrt()) / 2.0))
}

/// Quantum data locking parameters. `M` is carried as `log₂M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockingParams {
    pub d: u32,
    pub n: u32,
    pub log2_m: f64,
    /// `ε = 2^(−n^α)`.
    pub alpha: f64,
}

impl LockingParams {
    /// `M = d^n`, `α = ½`.
    pub fn full_message(d: u32, n: u32) -> Self {
        Self {
            d,
            n,
            log2_m: n as f64 * (d as f64).log2(),
            alpha: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 || self.n < 1 {
            return Err(Error::param("need d ≥ 2 and n ≥ 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("α must lie in (0, 1)"));
        }
        let cap = self.n as f64 * (self.d as f64).log2();
        if !(self.log2_m >= 0.0) || self.log2_m > cap + 1e-9 {
            return Err(Error::param(format!("log₂M must lie in [0, {cap}]")));
        }
        Ok(())
    }

    /// `ln ε`.
    pub fn ln_epsilon(&self) -> f64 {
        -(self.n as f64).powf(self.alpha) * LN_2
    }
}

/// Natural logs of the two lower bounds on the key size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyBranches {
    pub ln_k1: f64,
    pub ln_k2: f64,
}

fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Branch logs:
/// `K₁ = 2(2d/(d+1))^n (ln M/ε² + (2/ε³) ln(5/ε))` and
/// `K₂ = (d^n/M)·4 ln2·ln(d^n)/ε²`, all in natural-log space.
pub fn qdl_key_branches(p: &LockingParams) -> Result<KeyBranches> {
    p.validate()?;
    let (d, n) = (p.d as f64, p.n as f64);
    let le = p.ln_epsilon();
    let ln_m = p.log2_m * LN_2;
    let ln_dn = n * d.ln();
    let t1 = if ln_m > 0.0 { ln_m.ln() - 2.0 * le } else { f64::NEG_INFINITY };
    let t2 = 2f64.ln() - 3.0 * le + (5f64.ln() - le).ln();
    let ln_k1 = 2f64.ln() + n * (2.0 * d / (d + 1.0)).ln() + ln_add(t1, t2);
    let ln_k2 = ln_dn - ln_m + (4.0 * LN_2 * ln_dn).ln() - 2.0 * le;
    Ok(KeyBranches { ln_k1, ln_k2 })
}

/// Secret-key cost in bits per channel use, `log₂(max(K₁, K₂))/n`.
pub fn qdl_key_rate(p: &LockingParams) -> Result<f64> {
    let b = qdl_key_branches(p)?;
    Ok(b.ln_k1.max(b.ln_k2) / LN_2 / p.n as f64)
}

/// Accessible-information leak scale `ε·log₂(d^n)` in bits.
pub fn accessible_info_bound(p: &LockingParams) -> Result<f64> {
    p.validate()?;
    Ok(p.ln_epsilon().exp() * p.n as f64 * (p.d as f64).log2())
}

pub const RS_LENGTH: u32 = 63;
pub const BITS_PER_SYMBOL: f64 = 6.0;

/// Per-photon budget of an RS(63, x) protected locking link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FecAllocation {
    pub x: u32,
    pub base_rate: f64,
    pub redundancy: f64,
    pub key: f64,
    /// Negative when infeasible.
    pub message: f64,
    pub feasible: bool,
}

/// `redundancy = 6(63−x)/63`, `key = base·(1 + (63−x)/x)`,
/// `message = 6 − redundancy − key`.
pub fn fec_allocate(x: u32, base_rate: f64) -> Result<FecAllocation> {
    if !(1..=RS_LENGTH).contains(&x) {
        return Err(Error::param(format!("x = {x} outside 1..=63")));
    }
    if !(base_rate > 0.0 && base_rate.is_finite()) {
        return Err(Error::param("base key rate must be positive"));
    }
    let spare = (RS_LENGTH - x) as f64;
    let redundancy = BITS_PER_SYMBOL * spare / RS_LENGTH as f64;
    let key = base_rate * (1.0 + spare / x as f64);
    let message = BITS_PER_SYMBOL - redundancy - key;
    Ok(FecAllocation {
        x,
        base_rate,
        redundancy,
        key,
        message,
        feasible: message >= 0.0,
    })
}
