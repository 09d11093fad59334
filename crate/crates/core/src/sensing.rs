//! Implicit randomized Hadamard sensing operators.
//!
//! A selector realizes `A = H_n[r, p]` (rows `r`, column permutation `p`)
//! without ever forming `H_n`: `A·x` inverse-permutes `x` through
//! `q = p⁻¹`, transforms, and gathers the rows `r`; `Aᵀ·y` scatters `y`
//! into zeros at `r`, transforms, and permutes back. Both cost
//! `O(n log n)`.
//!
//! Indices are 1-based at the public boundary (`rows()`, `perm()`, the JSON
//! documents) and 0-based in storage.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::hadamard::{fwht_in_place, hadamard_row, HadamardOrder, DENSE_LIMIT};
use crate::rng;

/// Operations shared by every Hadamard-based sensing operator. The solvers
/// are written against this trait so single-space, joint-space and
/// hand-built selectors are interchangeable.
pub trait HadamardSensing: Send + Sync {
    /// Signal length (columns).
    fn n(&self) -> usize;
    /// Measurement count (rows).
    fn m(&self) -> usize;
    /// 0-based selected rows of `H_n`.
    fn row_indices(&self) -> &[usize];
    /// 0-based column permutation `p`.
    fn perm_indices(&self) -> &[usize];
    /// 0-based inverse permutation `q`.
    fn inv_indices(&self) -> &[usize];

    /// `H·P_c·x`: inverse-permute then transform (length `n`).
    fn mix(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("sensing input", self.n(), x.len())?;
        let q = self.inv_indices();
        let mut v: Vec<f64> = q.iter().map(|&j| x[j]).collect();
        fwht_in_place(&mut v)?;
        Ok(v)
    }

    /// `P_cᵀ·Hᵀ·v`: transform then permute (length `n`).
    fn mix_adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("sensing transform-domain input", self.n(), v.len())?;
        let mut w = v.to_vec();
        fwht_in_place(&mut w)?;
        Ok(self.perm_indices().iter().map(|&pj| w[pj]).collect())
    }

    /// `P_r·v`: pick the selected rows.
    fn gather(&self, v: &[f64]) -> Vec<f64> {
        self.row_indices().iter().map(|&r| v[r]).collect()
    }

    /// `P_rᵀ·y`: scatter into zeros, accumulating repeated rows.
    fn scatter(&self, y: &[f64]) -> Vec<f64> {
        let mut beta = vec![0.0; self.n()];
        for (&r, &yi) in self.row_indices().iter().zip(y) {
            beta[r] += yi;
        }
        beta
    }

    /// `A·x`.
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.gather(&self.mix(x)?))
    }

    /// `Aᵀ·y`, unnormalized.
    fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("sensing adjoint input", self.m(), y.len())?;
        self.mix_adjoint(&self.scatter(y))
    }

    /// Diagonal of `P_rᵀ·P_r`: how often each row of `H_n` is selected.
    fn row_counts(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n()];
        for &r in self.row_indices() {
            c[r] += 1.0;
        }
        c
    }

    /// Explicit `A` for testing (requires `n ≤ 4096`).
    fn dense(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        if n > DENSE_LIMIT {
            return Err(Error::Capacity(format!("dense operator with n = {n}")));
        }
        let p = self.perm_indices();
        let mut a = DMatrix::zeros(self.m(), n);
        for (i, &r) in self.row_indices().iter().enumerate() {
            let h = hadamard_row(n, r + 1)?;
            for c in 0..n {
                a[(i, c)] = h[p[c]];
            }
        }
        Ok(a)
    }
}

fn validate_permutation(p: &[usize], n: usize) -> Result<Vec<usize>> {
    check_len("column permutation", n, p.len())?;
    let mut q = vec![usize::MAX; n];
    for (i, &pi) in p.iter().enumerate() {
        if pi >= n || q[pi] != usize::MAX {
            return Err(Error::value("column permutation is not a bijection"));
        }
        q[pi] = i;
    }
    Ok(q)
}

fn to_zero_based(v: &[usize], max: usize) -> Result<Vec<usize>> {
    v.iter()
        .map(|&i| {
            if i == 0 || i > max {
                Err(Error::Index { index: i, max })
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

/// `A = H_n[r, p]` over a single space.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutedSelector {
    n: usize,
    rows: Vec<usize>,
    perm: Vec<usize>,
    inv: Vec<usize>,
    seed: Option<u64>,
    allow_dc: bool,
}

impl PermutedSelector {
    /// Draws `m` rows uniformly with replacement from `[2, n]` (or `[1, n]`
    /// when `allow_dc`) and a uniform column permutation, deterministically
    /// from `seed`.
    pub fn random(n: usize, m: usize, seed: u64, allow_dc: bool) -> Result<Self> {
        HadamardOrder::from_len(n).map_err(|_| Error::param(format!("n = {n} is not a power of two")))?;
        if m == 0 {
            return Err(Error::param("m must be at least 1"));
        }
        let lo = if allow_dc { 0 } else { 1 };
        if lo >= n {
            return Err(Error::param("n = 1 leaves no non-DC rows to sample"));
        }
        let mut r = rng::stream(seed, 0);
        let rows: Vec<usize> = (0..m).map(|_| r.random_range(lo..n)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng::stream(seed, 1));
        let inv = validate_permutation(&perm, n)?;
        Ok(Self {
            n,
            rows,
            perm,
            inv,
            seed: Some(seed),
            allow_dc,
        })
    }

    /// Builds a selector from explicit 1-based rows and permutation.
    pub fn from_parts(n: usize, rows: &[usize], perm: &[usize]) -> Result<Self> {
        HadamardOrder::from_len(n).map_err(|_| Error::param(format!("n = {n} is not a power of two")))?;
        if rows.is_empty() {
            return Err(Error::param("m must be at least 1"));
        }
        let rows = to_zero_based(rows, n)?;
        let perm = to_zero_based(perm, n)?;
        let inv = validate_permutation(&perm, n)?;
        let allow_dc = rows.contains(&0);
        Ok(Self {
            n,
            rows,
            perm,
            inv,
            seed: None,
            allow_dc,
        })
    }

    /// Every row of `H_n` exactly once, with a seeded column permutation.
    pub fn full(n: usize, seed: u64) -> Result<Self> {
        let mut s = Self::random(n, 1, seed, true)?;
        s.rows = (0..n).collect();
        Ok(s)
    }

    /// Forces the all-ones row into slot 0 unless it is already selected.
    /// TV-type regularizers cannot recover the mean without it.
    pub fn with_dc_row(mut self) -> Self {
        if !self.rows.contains(&0) {
            self.rows[0] = 0;
        }
        self.allow_dc = true;
        self
    }

    /// The first `m` rows of this selector (same permutation).
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.rows.len() {
            return Err(Error::param(format!(
                "cannot truncate {} rows to {m}",
                self.rows.len()
            )));
        }
        let mut s = self.clone();
        s.rows.truncate(m);
        Ok(s)
    }

    /// 1-based row indices `r`.
    pub fn rows(&self) -> Vec<usize> {
        one_based(&self.rows)
    }

    /// 1-based column permutation `p`.
    pub fn perm(&self) -> Vec<usize> {
        one_based(&self.perm)
    }

    /// 1-based inverse permutation `q` with `q[p[i]] = i`.
    pub fn inverse(&self) -> Vec<usize> {
        one_based(&self.inv)
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn allow_dc(&self) -> bool {
        self.allow_dc
    }

    /// Row `i` (0-based) of `A` as a ±1 pattern.
    pub fn pattern(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.rows.len() {
            return Err(Error::Index {
                index: i + 1,
                max: self.rows.len(),
            });
        }
        let h = hadamard_row(self.n, self.rows[i] + 1)?;
        Ok(self.perm.iter().map(|&pc| h[pc]).collect())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x)
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.adjoint(y)
    }

    pub fn to_doc(&self) -> SelectorDoc {
        SelectorDoc {
            n: self.n,
            m: self.rows.len(),
            r: self.rows(),
            p: self.perm(),
            seed: self.seed,
            allow_dc: self.allow_dc,
        }
    }

    pub fn from_doc(doc: &SelectorDoc) -> Result<Self> {
        check_len("selector document rows", doc.m, doc.r.len())?;
        let mut s = Self::from_parts(doc.n, &doc.r, &doc.p)?;
        s.seed = doc.seed;
        s.allow_dc = doc.allow_dc;
        if !s.allow_dc && s.rows.contains(&0) {
            return Err(Error::value("selector document has DC row with allow_dc = false"));
        }
        Ok(s)
    }
}

impl HadamardSensing for PermutedSelector {
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.rows.len()
    }
    fn row_indices(&self) -> &[usize] {
        &self.rows
    }
    fn perm_indices(&self) -> &[usize] {
        &self.perm
    }
    fn inv_indices(&self) -> &[usize] {
        &self.inv
    }
}

/// JSON form of a [`PermutedSelector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorDoc {
    pub n: usize,
    pub m: usize,
    pub r: Vec<usize>,
    pub p: Vec<usize>,
    pub seed: Option<u64>,
    pub allow_dc: bool,
}

/// `A = H_{N²}[r_SI, p_SI]` over the joint (signal ⊗ idler) space.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSelector {
    sub_n: usize,
    rows: Vec<usize>,
    perm: Vec<usize>,
    inv: Vec<usize>,
    /// Surviving 0-based (r_S, r_I) pairs, aligned with `rows`.
    sources: Vec<(usize, usize)>,
    perm_s: Vec<usize>,
    perm_i: Vec<usize>,
    seeds: [Option<u64>; 2],
    allow_dc: bool,
}

impl JointSelector {
    /// Combines two subspace selectors with
    /// `r_SI[i] = N(r_S[i]−1) + r_I[i]` and
    /// `p_SI[N(i−1)+j] = N(p_S[i]−1) + p_I[j]`, dropping repeated `r_SI`
    /// entries together with their source pair (first occurrence kept).
    pub fn new(signal: &PermutedSelector, idler: &PermutedSelector) -> Result<Self> {
        if signal.n != idler.n {
            return Err(Error::param(format!(
                "subspace dimensions differ: {} vs {}",
                signal.n, idler.n
            )));
        }
        if signal.rows.len() != idler.rows.len() {
            return Err(Error::param(format!(
                "subspace row counts differ: {} vs {}",
                signal.rows.len(),
                idler.rows.len()
            )));
        }
        let pairs: Vec<(usize, usize)> = signal
            .rows
            .iter()
            .copied()
            .zip(idler.rows.iter().copied())
            .collect();
        Self::assemble(
            signal.n,
            &pairs,
            &signal.perm,
            &idler.perm,
            [signal.seed, idler.seed],
            signal.allow_dc || idler.allow_dc,
        )
    }

    fn assemble(
        sub_n: usize,
        pairs: &[(usize, usize)],
        perm_s: &[usize],
        perm_i: &[usize],
        seeds: [Option<u64>; 2],
        allow_dc: bool,
    ) -> Result<Self> {
        let big = sub_n
            .checked_mul(sub_n)
            .ok_or_else(|| Error::Capacity(format!("joint space of N = {sub_n}")))?;
        let mut seen = vec![false; big];
        let mut rows = Vec::with_capacity(pairs.len());
        let mut sources = Vec::with_capacity(pairs.len());
        for &(rs, ri) in pairs {
            let r = sub_n * rs + ri;
            if !seen[r] {
                seen[r] = true;
                rows.push(r);
                sources.push((rs, ri));
            }
        }
        let mut perm = vec![0; big];
        for (i, &ps) in perm_s.iter().enumerate() {
            for (j, &pi) in perm_i.iter().enumerate() {
                perm[sub_n * i + j] = sub_n * ps + pi;
            }
        }
        let inv = validate_permutation(&perm, big)?;
        Ok(Self {
            sub_n,
            rows,
            perm,
            inv,
            sources,
            perm_s: perm_s.to_vec(),
            perm_i: perm_i.to_vec(),
            seeds,
            allow_dc,
        })
    }

    pub fn subspace_dim(&self) -> usize {
        self.sub_n
    }

    /// 1-based `r_SI`.
    pub fn rows(&self) -> Vec<usize> {
        one_based(&self.rows)
    }

    /// 1-based `p_SI`.
    pub fn perm(&self) -> Vec<usize> {
        one_based(&self.perm)
    }

    /// 1-based `q_SI`.
    pub fn inverse(&self) -> Vec<usize> {
        one_based(&self.inv)
    }

    /// Surviving 1-based `(r_S[i], r_I[i])` pairs.
    pub fn source_pairs(&self) -> Vec<(usize, usize)> {
        self.sources.iter().map(|&(a, b)| (a + 1, b + 1)).collect()
    }

    /// Subspace patterns `(P_S[i,:], P_I[i,:])` behind joint row `i`.
    pub fn subspace_patterns(&self, i: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let &(rs, ri) = self.sources.get(i).ok_or(Error::Index {
            index: i + 1,
            max: self.sources.len(),
        })?;
        let hs = hadamard_row(self.sub_n, rs + 1)?;
        let hi = hadamard_row(self.sub_n, ri + 1)?;
        Ok((
            self.perm_s.iter().map(|&c| hs[c]).collect(),
            self.perm_i.iter().map(|&c| hi[c]).collect(),
        ))
    }

    pub fn apply_joint(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x)
    }

    pub fn apply_joint_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.adjoint(y)
    }

    pub fn to_doc(&self) -> JointSelectorDoc {
        JointSelectorDoc {
            n: self.sub_n,
            pairs: self.source_pairs().into_iter().map(|(a, b)| [a, b]).collect(),
            p_s: one_based(&self.perm_s),
            p_i: one_based(&self.perm_i),
            seeds: self.seeds,
            allow_dc: self.allow_dc,
        }
    }

    pub fn from_doc(doc: &JointSelectorDoc) -> Result<Self> {
        HadamardOrder::from_len(doc.n)?;
        let pairs: Vec<(usize, usize)> = doc
            .pairs
            .iter()
            .map(|&[a, b]| {
                let a = to_zero_based(&[a], doc.n)?[0];
                let b = to_zero_based(&[b], doc.n)?[0];
                Ok((a, b))
            })
            .collect::<Result<_>>()?;
        if pairs.is_empty() {
            return Err(Error::param("joint selector without rows"));
        }
        let perm_s = to_zero_based(&doc.p_s, doc.n)?;
        let perm_i = to_zero_based(&doc.p_i, doc.n)?;
        validate_permutation(&perm_s, doc.n)?;
        validate_permutation(&perm_i, doc.n)?;
        Self::assemble(doc.n, &pairs, &perm_s, &perm_i, doc.seeds, doc.allow_dc)
    }

    /// Simulates binary-modulator coincidence counting for every joint row.
    ///
    /// Each row needs the four sub-measurements `(+,+)`, `(−,−)`, `(+,−)`,
    /// `(−,+)` of the 0/1 pattern pairs against the joint distribution
    /// `joint` (row-major, signal index slowest). Each sub-measurement gets
    /// independent Gaussian noise of standard deviation `noise_sigma`. The
    /// recombined value is `c₊₊ + c₋₋ − c₊₋ − c₋₊`.
    pub fn simulate_coincidences(
        &self,
        joint: &[f64],
        noise_sigma: f64,
        seed: u64,
    ) -> Result<CoincidenceMeasurement> {
        check_len("joint distribution", self.sub_n * self.sub_n, joint.len())?;
        if !(noise_sigma >= 0.0) {
            return Err(Error::param("noise sigma must be non-negative"));
        }
        let n = self.sub_n;
        let normal = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::param(e.to_string()))?;
        let mut counts = Vec::with_capacity(self.rows.len());
        let mut y = Vec::with_capacity(self.rows.len());
        for i in 0..self.rows.len() {
            let (ps, pi) = self.subspace_patterns(i)?;
            let (sp, sm) = decompose_pm(&ps)?;
            let (ip, im) = decompose_pm(&pi)?;
            let mut r = rng::stream(seed, i as u64);
            let mut coincidence = |a: &[f64], b: &[f64]| {
                let mut c = 0.0;
                for (s, &wa) in a.iter().enumerate() {
                    if wa == 0.0 {
                        continue;
                    }
                    let row = &joint[s * n..(s + 1) * n];
                    c += row.iter().zip(b).map(|(v, wb)| v * wb).sum::<f64>();
                }
                if noise_sigma > 0.0 {
                    c += normal.sample(&mut r);
                }
                c
            };
            let c = [
                coincidence(&sp, &ip),
                coincidence(&sm, &im),
                coincidence(&sp, &im),
                coincidence(&sm, &ip),
            ];
            y.push(c[0] + c[1] - c[2] - c[3]);
            counts.push(c);
        }
        Ok(CoincidenceMeasurement { counts, y })
    }
}

impl HadamardSensing for JointSelector {
    fn n(&self) -> usize {
        self.sub_n * self.sub_n
    }
    fn m(&self) -> usize {
        self.rows.len()
    }
    fn row_indices(&self) -> &[usize] {
        &self.rows
    }
    fn perm_indices(&self) -> &[usize] {
        &self.perm
    }
    fn inv_indices(&self) -> &[usize] {
        &self.inv
    }
}

/// JSON form of a [`JointSelector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSelectorDoc {
    #[serde(rename = "N")]
    pub n: usize,
    /// Surviving 1-based `(r_S, r_I)` pairs.
    pub pairs: Vec<[usize; 2]>,
    pub p_s: Vec<usize>,
    pub p_i: Vec<usize>,
    pub seeds: [Option<u64>; 2],
    pub allow_dc: bool,
}

/// Output of [`JointSelector::simulate_coincidences`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceMeasurement {
    /// `[c₊₊, c₋₋, c₊₋, c₋₊]` per joint row.
    pub counts: Vec<[f64; 4]>,
    pub y: Vec<f64>,
}

/// Splits a ±1 row into 0/1 parts with `row = plus − minus`.
pub fn decompose_pm(row: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut plus = Vec::with_capacity(row.len());
    let mut minus = Vec::with_capacity(row.len());
    for &v in row {
        if v == 1.0 {
            plus.push(1.0);
            minus.push(0.0);
        } else if v == -1.0 {
            plus.push(0.0);
            minus.push(1.0);
        } else {
            return Err(Error::value(format!("pattern entry {v} is not ±1")));
        }
    }
    Ok((plus, minus))
}

/// One [`PermutedSelector`] per frame, applied block-diagonally to a
/// concatenated video vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonalSensor {
    frames: Vec<PermutedSelector>,
}

impl BlockDiagonalSensor {
    pub fn new(frames: Vec<PermutedSelector>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::param("sensor needs at least one frame"))?;
        let (n, m) = (first.n(), first.m());
        for f in &frames {
            if f.n() != n || f.m() != m {
                return Err(Error::param("all frames must share (n, m)"));
            }
        }
        Ok(Self { frames })
    }

    /// Independent random selectors per frame, seeds derived from `seed`.
    pub fn random(frames: usize, n: usize, m: usize, seed: u64, allow_dc: bool) -> Result<Self> {
        let sel = (0..frames)
            .map(|f| PermutedSelector::random(n, m, rng::child_seed(seed, f as u64), allow_dc))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sel)
    }

    /// Applies [`PermutedSelector::with_dc_row`] to every frame.
    pub fn with_dc_rows(self) -> Self {
        Self {
            frames: self.frames.into_iter().map(PermutedSelector::with_dc_row).collect(),
        }
    }

    pub fn frames(&self) -> &[PermutedSelector] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Pixels per frame.
    pub fn n(&self) -> usize {
        self.frames[0].n()
    }

    /// Measurements per frame.
    pub fn m(&self) -> usize {
        self.frames[0].m()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (n, m) = (self.n(), self.m());
        check_len("video input", n * self.frames.len(), x.len())?;
        let mut y = Vec::with_capacity(m * self.frames.len());
        for (f, sel) in self.frames.iter().enumerate() {
            y.extend(sel.forward(&x[f * n..(f + 1) * n])?);
        }
        Ok(y)
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (n, m) = (self.n(), self.m());
        check_len("video measurements", m * self.frames.len(), y.len())?;
        let mut x = Vec::with_capacity(n * self.frames.len());
        for (f, sel) in self.frames.iter().enumerate() {
            x.extend(sel.adjoint(&y[f * m..(f + 1) * m])?);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::dense_hadamard;
    use crate::linalg::dot;
    use nalgebra::DVector;

    fn random_vec(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn deterministic_given_seed() {
        let a = PermutedSelector::random(64, 20, 5, false).unwrap();
        let b = PermutedSelector::random(64, 20, 5, false).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, PermutedSelector::random(64, 20, 6, false).unwrap());
    }

    #[test]
    fn no_dc_rows_unless_allowed() {
        let s = PermutedSelector::random(16, 500, 1, false).unwrap();
        assert!(s.rows().iter().all(|&r| (2..=16).contains(&r)));
        let s = PermutedSelector::random(16, 500, 1, true).unwrap();
        assert!(s.rows().contains(&1));
    }

    #[test]
    fn oversampling_allowed() {
        let s = PermutedSelector::random(8, 20, 3, false).unwrap();
        assert_eq!(s.rows().len(), 20);
        let mut r = s.rows();
        r.sort();
        r.dedup();
        assert!(r.len() < 20);
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(PermutedSelector::random(8, 0, 1, false), Err(Error::Parameter(_))));
        assert!(matches!(PermutedSelector::random(12, 3, 1, false), Err(Error::Parameter(_))));
        assert!(PermutedSelector::from_parts(4, &[5], &[1, 2, 3, 4]).is_err());
        assert!(PermutedSelector::from_parts(4, &[2], &[1, 1, 3, 4]).is_err());
    }

    #[test]
    fn permutation_inverse() {
        let s = PermutedSelector::random(32, 4, 9, false).unwrap();
        let (p, q) = (s.perm(), s.inverse());
        for i in 0..32 {
            assert_eq!(q[p[i] - 1], i + 1);
            assert_eq!(p[q[i] - 1], i + 1);
        }
    }

    #[test]
    fn apply_matches_dense_construction() {
        for (t, k) in (0..50).zip((1..=6).cycle()) {
            let n = 1usize << k;
            let s = PermutedSelector::random(n, 1 + t % (2 * n), t as u64, t % 2 == 0).unwrap();
            // dense oracle from H_n indexed by (r, p) directly
            let h = dense_hadamard(n).unwrap();
            let (r, p) = (s.rows(), s.perm());
            let a = DMatrix::from_fn(r.len(), n, |i, c| h[(r[i] - 1, p[c] - 1)]);
            let x = random_vec(100 + t as u64, n);
            let y = s.apply(&x).unwrap();
            let yd = &a * DVector::from_vec(x.clone());
            for (u, v) in y.iter().zip(yd.iter()) {
                assert!((u - v).abs() < 1e-10);
            }
            let w = random_vec(200 + t as u64, r.len());
            let xa = s.apply_adjoint(&w).unwrap();
            let xd = a.transpose() * DVector::from_vec(w);
            for (u, v) in xa.iter().zip(xd.iter()) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn basis_vector_picks_hadamard_entries() {
        let s = PermutedSelector::random(16, 10, 4, false).unwrap();
        let h = dense_hadamard(16).unwrap();
        let (r, q) = (s.rows(), s.inverse());
        for c in 1..=16 {
            let mut e = vec![0.0; 16];
            e[q[c - 1] - 1] = 1.0;
            let y = s.apply(&e).unwrap();
            for i in 0..10 {
                assert_eq!(y[i], h[(r[i] - 1, c - 1)]);
            }
        }
    }

    #[test]
    fn constant_input_without_dc_gives_zero() {
        let s = PermutedSelector::random(64, 30, 2, false).unwrap();
        assert!(s.apply(&[3.5; 64]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dc_row_forced_once() {
        let s = PermutedSelector::random(32, 5, 3, false).unwrap().with_dc_row();
        assert_eq!(s.rows()[0], 1);
        assert!(s.allow_dc());
        let again = s.clone().with_dc_row();
        assert_eq!(again, s);
    }

    #[test]
    fn duplicate_rows_accumulate() {
        let perm = [3, 1, 4, 2];
        let a = PermutedSelector::from_parts(4, &[3, 3], &perm).unwrap();
        let b = PermutedSelector::from_parts(4, &[3], &perm).unwrap();
        assert_eq!(a.apply_adjoint(&[1.0, 1.0]).unwrap(), b.apply_adjoint(&[2.0]).unwrap());
    }

    #[test]
    fn adjoint_identity() {
        let s = PermutedSelector::random(256, 100, 8, false).unwrap();
        let x = random_vec(1, 256);
        let y = random_vec(2, 100);
        let lhs = dot(&s.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &s.apply_adjoint(&y).unwrap());
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn length_mismatch_errors() {
        let s = PermutedSelector::random(8, 3, 1, false).unwrap();
        assert!(matches!(s.apply(&[0.0; 4]), Err(Error::Dimension { .. })));
        assert!(matches!(s.apply_adjoint(&[0.0; 4]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn joint_row_formula() {
        let s = PermutedSelector::from_parts(4, &[2], &[1, 2, 3, 4]).unwrap();
        let i = PermutedSelector::from_parts(4, &[3], &[1, 2, 3, 4]).unwrap();
        let j = JointSelector::new(&s, &i).unwrap();
        assert_eq!(j.rows(), vec![7]);
    }

    #[test]
    fn joint_dedup() {
        let p = [1, 2, 3, 4];
        let s = PermutedSelector::from_parts(4, &[2, 2], &p).unwrap();
        let i = PermutedSelector::from_parts(4, &[3, 3], &p).unwrap();
        let j = JointSelector::new(&s, &i).unwrap();
        assert_eq!(j.m(), 1);
        assert_eq!(j.source_pairs(), vec![(2, 3)]);
    }

    #[test]
    fn joint_mismatch_errors() {
        let a = PermutedSelector::random(4, 3, 1, false).unwrap();
        let b = PermutedSelector::random(8, 3, 1, false).unwrap();
        assert!(matches!(JointSelector::new(&a, &b), Err(Error::Parameter(_))));
        let c = PermutedSelector::random(4, 2, 1, false).unwrap();
        assert!(matches!(JointSelector::new(&a, &c), Err(Error::Parameter(_))));
    }

    #[test]
    fn joint_rows_are_kronecker_products() {
        for big_n in [2usize, 4, 8] {
            let s = PermutedSelector::random(big_n, 3 * big_n, 10 + big_n as u64, true).unwrap();
            let i = PermutedSelector::random(big_n, 3 * big_n, 20 + big_n as u64, true).unwrap();
            let j = JointSelector::new(&s, &i).unwrap();
            let a = j.dense().unwrap();
            let (rs, ri) = (s.rows(), i.rows());
            let mut kept = 0;
            let mut seen = std::collections::HashSet::new();
            for t in 0..rs.len() {
                let r = big_n * (rs[t] - 1) + ri[t];
                if !seen.insert(r) {
                    continue;
                }
                let ps = s.pattern(t).unwrap();
                let pi = i.pattern(t).unwrap();
                for a_ in 0..big_n {
                    for b_ in 0..big_n {
                        assert_eq!(a[(kept, big_n * a_ + b_)], ps[a_] * pi[b_]);
                    }
                }
                kept += 1;
            }
            assert_eq!(kept, j.m());
        }
    }

    #[test]
    fn joint_separable_input_factorizes() {
        let big_n = 8;
        let s = PermutedSelector::random(big_n, 12, 31, false).unwrap();
        let i = PermutedSelector::random(big_n, 12, 32, false).unwrap();
        let j = JointSelector::new(&s, &i).unwrap();
        let xs = random_vec(3, big_n);
        let xi = random_vec(4, big_n);
        let x: Vec<f64> = xs.iter().flat_map(|a| xi.iter().map(move |b| a * b)).collect();
        let y = j.apply_joint(&x).unwrap();
        let (ys, yi) = (s.apply(&xs).unwrap(), i.apply(&xi).unwrap());
        let mut seen = std::collections::HashSet::new();
        let mut k = 0;
        for t in 0..12 {
            if seen.insert((s.rows()[t], i.rows()[t])) {
                assert!((y[k] - ys[t] * yi[t]).abs() < 1e-10);
                k += 1;
            }
        }
    }

    #[test]
    fn decompose_examples() {
        assert_eq!(decompose_pm(&[1.0, -1.0]).unwrap(), (vec![1.0, 0.0], vec![0.0, 1.0]));
        assert!(matches!(decompose_pm(&[1.0, 0.5]), Err(Error::Value(_))));
    }

    #[test]
    fn coincidences_recombine_to_joint_measurement() {
        let big_n = 8;
        let s = PermutedSelector::random(big_n, 10, 41, false).unwrap();
        let i = PermutedSelector::random(big_n, 10, 42, false).unwrap();
        let j = JointSelector::new(&s, &i).unwrap();
        let x = random_vec(5, big_n * big_n);
        let c = j.simulate_coincidences(&x, 0.0, 1).unwrap();
        let y = j.apply_joint(&x).unwrap();
        for (a, b) in c.y.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
        let noisy = j.simulate_coincidences(&x, 0.1, 1).unwrap();
        assert_eq!(noisy, j.simulate_coincidences(&x, 0.1, 1).unwrap());
        assert_ne!(noisy.y, c.y);
    }

    #[test]
    fn documents_round_trip() {
        let s = PermutedSelector::random(32, 7, 77, false).unwrap();
        let doc: SelectorDoc = serde_json::from_str(&serde_json::to_string(&s.to_doc()).unwrap()).unwrap();
        assert_eq!(PermutedSelector::from_doc(&doc).unwrap(), s);
        let i = PermutedSelector::random(32, 7, 78, false).unwrap();
        let j = JointSelector::new(&s, &i).unwrap();
        let text = serde_json::to_string(&j.to_doc()).unwrap();
        assert!(text.contains("\"N\":32"));
        let back = JointSelector::from_doc(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, j);
    }

    #[test]
    fn block_diagonal_adjoint() {
        let b = BlockDiagonalSensor::random(3, 16, 6, 12, false).unwrap();
        let x = random_vec(6, 48);
        let y = random_vec(7, 18);
        let lhs = dot(&b.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &b.apply_adjoint(&y).unwrap());
        assert!((lhs - rhs).abs() < 1e-9);
        let odd = PermutedSelector::random(16, 5, 1, false).unwrap();
        assert!(BlockDiagonalSensor::new(vec![b.frames()[0].clone(), odd]).is_err());
    }
}
