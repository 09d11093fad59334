//! Sensing-matrix quality metrics: coherence, spark, restricted isometry
//! and null-space property estimates, and measurement-count bounds.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-10;
/// Largest subset size `spark` will enumerate.
pub const SPARK_BUDGET_LIMIT: usize = 20;
/// Largest support count for exhaustive RIP.
pub const RIP_EXHAUSTIVE_LIMIT: u128 = 100_000;
/// Constant of the measurement-count theorem.
pub const THEOREM_C: f64 = 0.28;

fn column_norms(a: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter().map(|c| c.norm()).collect()
}

/// Largest `|cos|` between two distinct columns.
pub fn coherence(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.ncols();
    if n < 2 {
        return Err(Error::param("coherence needs at least two columns"));
    }
    let norms = column_norms(a);
    if let Some(j) = norms.iter().position(|v| *v == 0.0) {
        return Err(Error::value(format!("column {} is zero", j + 1)));
    }
    let mut mu: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let c = a.column(i).dot(&a.column(j)).abs() / (norms[i] * norms[j]);
            mu = mu.max(c);
        }
    }
    Ok(mu.min(1.0))
}

/// Lower end of the coherence range, `sqrt((n−m)/(m(n−1)))`, for `n > m`.
pub fn welch_bound(m: usize, n: usize) -> f64 {
    if n <= m || n < 2 {
        return 0.0;
    }
    (((n - m) as f64) / ((m * (n - 1)) as f64)).sqrt()
}

fn rank(a: &DMatrix<f64>) -> usize {
    if a.ncols() == 0 || a.nrows() == 0 {
        return 0;
    }
    let sv = a.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * max).count()
}

fn submatrix(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    a.select_columns(cols)
}

/// Calls `f` on each `k`-subset of `0..n` in lexicographic order until it
/// returns `true`. Returns whether it stopped early.
fn any_combination(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    if k > n {
        return false;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if f(&idx) {
            return true;
        }
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return false;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    c
}

/// Result of [`spark`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SparkResult {
    /// Smallest dependent column count. `degenerate` marks a zero column.
    Exact { spark: usize, degenerate: bool },
    /// No dependent subset up to `budget` columns.
    ExceedsBudget { budget: usize },
}

/// Smallest number of linearly dependent columns, by exhaustive rank tests
/// over subsets of size `1..=budget`. Full column rank reports `n + 1` when
/// the budget allows it.
pub fn spark(a: &DMatrix<f64>, budget: usize) -> Result<SparkResult> {
    if budget > SPARK_BUDGET_LIMIT {
        return Err(Error::param(format!(
            "spark budget {budget} exceeds {SPARK_BUDGET_LIMIT}"
        )));
    }
    let n = a.ncols();
    if n == 0 {
        return Err(Error::param("matrix has no columns"));
    }
    if column_norms(a).contains(&0.0) {
        return Ok(SparkResult::Exact {
            spark: 1,
            degenerate: true,
        });
    }
    for k in 2..=budget.min(n) {
        if k > a.nrows() {
            // any k > m columns are dependent
            return Ok(SparkResult::Exact {
                spark: k,
                degenerate: false,
            });
        }
        if any_combination(n, k, |cols| rank(&submatrix(a, cols)) < k) {
            return Ok(SparkResult::Exact {
                spark: k,
                degenerate: false,
            });
        }
    }
    if budget > n {
        Ok(SparkResult::Exact {
            spark: n + 1,
            degenerate: false,
        })
    } else {
        Ok(SparkResult::ExceedsBudget { budget })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum RipMode {
    Exhaustive,
    /// Random supports; yields a lower bound only.
    Sampled { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub delta: f64,
    /// `true` when supports were sampled, so `delta` only bounds `δ_K`
    /// from below.
    pub lower_bound: bool,
    pub supports_checked: usize,
}

fn rip_support(a: &DMatrix<f64>, cols: &[usize]) -> f64 {
    let mut s = submatrix(a, cols);
    for mut c in s.column_iter_mut() {
        let nrm = c.norm();
        c /= nrm;
    }
    let k = cols.len();
    let sv = s.singular_values();
    let smax = sv.max();
    let smin = if k > s.nrows() { 0.0 } else { sv.min() };
    (1.0 - smin * smin).max(smax * smax - 1.0)
}

/// Restricted isometry constant `δ_K` of the column-normalized matrix.
pub fn rip_delta(a: &DMatrix<f64>, k: usize, mode: RipMode) -> Result<RipEstimate> {
    let n = a.ncols();
    if k == 0 || k > n {
        return Err(Error::param(format!("RIP order {k} outside 1..={n}")));
    }
    if column_norms(a).contains(&0.0) {
        return Err(Error::value("zero column cannot be normalized"));
    }
    match mode {
        RipMode::Exhaustive => {
            let count = binomial(n, k);
            if count > RIP_EXHAUSTIVE_LIMIT {
                return Err(Error::param(format!(
                    "C({n}, {k}) = {count} supports exceeds the exhaustive limit {RIP_EXHAUSTIVE_LIMIT}"
                )));
            }
            let mut delta: f64 = 0.0;
            let mut checked = 0;
            any_combination(n, k, |cols| {
                delta = delta.max(rip_support(a, cols));
                checked += 1;
                false
            });
            Ok(RipEstimate {
                delta,
                lower_bound: false,
                supports_checked: checked,
            })
        }
        RipMode::Sampled { samples, seed } => {
            let mut r = rng::seeded(seed);
            let mut delta: f64 = 0.0;
            for _ in 0..samples {
                let mut cols = rand::seq::index::sample(&mut r, n, k).into_vec();
                cols.sort_unstable();
                delta = delta.max(rip_support(a, &cols));
            }
            Ok(RipEstimate {
                delta,
                lower_bound: true,
                supports_checked: samples,
            })
        }
    }
}

/// Outcome of [`nsp_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NspResult {
    /// The null space is trivial.
    Vacuous,
    /// A `K`-sparse nonzero vector lies in the null space.
    Violation,
    /// Empirical `max √K‖h_Λ‖₂/‖h_Λᶜ‖₁` over the vectors examined.
    Constant { c: f64, vectors: usize },
}

/// Orthonormal basis of the null space, one vector per column.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let mut sq = DMatrix::zeros(m.max(n), n);
    sq.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| smax == 0.0 || **s <= RANK_TOL * smax)
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn nsp_ratio(h: &[f64], k: usize, exhaustive: bool) -> Option<f64> {
    let n = h.len();
    let total: f64 = h.iter().map(|v| v.abs()).sum();
    let eval = |inside: &[usize]| -> Option<f64> {
        let l2 = inside.iter().map(|&i| h[i] * h[i]).sum::<f64>().sqrt();
        let l1_in: f64 = inside.iter().map(|&i| h[i].abs()).sum();
        let rest = total - l1_in;
        if rest <= 1e-12 * total {
            None
        } else {
            Some((k as f64).sqrt() * l2 / rest)
        }
    };
    if exhaustive {
        let mut best: Option<f64> = Some(0.0);
        for size in 1..=k.min(n) {
            any_combination(n, size, |cols| match (eval(cols), best) {
                (Some(v), Some(b)) => {
                    best = Some(b.max(v));
                    false
                }
                _ => {
                    best = None;
                    true
                }
            });
            best?;
        }
        best
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| h[b].abs().total_cmp(&h[a].abs()));
        eval(&idx[..k.min(n)])
    }
}

/// Empirical null-space-property constant of order `K` over a basis of the
/// null space plus `samples` seeded random null-space combinations.
/// Supports are enumerated exhaustively for `n ≤ 16`; otherwise the `K`
/// largest entries are used, which attains the maximum for each vector.
pub fn nsp_check(a: &DMatrix<f64>, k: usize, samples: usize, seed: u64) -> Result<NspResult> {
    let n = a.ncols();
    if k == 0 || k > n {
        return Err(Error::param(format!("NSP order {k} outside 1..={n}")));
    }
    let basis = null_space(a);
    if basis.ncols() == 0 {
        return Ok(NspResult::Vacuous);
    }
    let mut vectors: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    let mut r = rng::seeded(seed);
    for _ in 0..samples {
        let w = DVector::from_fn(basis.ncols(), |_, _| r.sample::<f64, _>(StandardNormal));
        vectors.push(&basis * w);
    }
    let exhaustive = n <= 16;
    let mut c: f64 = 0.0;
    for h in &vectors {
        match nsp_ratio(h.as_slice(), k, exhaustive) {
            Some(v) => c = c.max(v),
            None => return Ok(NspResult::Violation),
        }
    }
    Ok(NspResult::Constant {
        c,
        vectors: vectors.len(),
    })
}

/// Measurement-count estimates for `K`-sparse signals of length `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBound {
    pub n: usize,
    pub k: usize,
    pub c: f64,
    /// `ceil(c·K·ln(n/K))`.
    pub theorem: usize,
    /// `max(2K, theorem)`.
    pub m_min: usize,
    /// `ceil(K·log₂(n/K))`.
    pub practitioner: usize,
    /// `K·ln(n/K)` scaled by the engineering multipliers 1 and 10.
    pub engineering_range: (usize, usize),
}

/// Natural log throughout; `c` defaults to [`THEOREM_C`].
pub fn sample_bound(n: usize, k: usize, c: f64) -> Result<SampleBound> {
    if k == 0 || k >= n {
        return Err(Error::param(format!("need 1 ≤ K < n, got K = {k}, n = {n}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("constant c must be positive"));
    }
    let ratio = n as f64 / k as f64;
    let base = k as f64 * ratio.ln();
    let theorem = (c * base).ceil() as usize;
    Ok(SampleBound {
        n,
        k,
        c,
        theorem,
        m_min: theorem.max(2 * k),
        practitioner: (k as f64 * ratio.log2()).ceil() as usize,
        engineering_range: (base.ceil() as usize, (10.0 * base).ceil() as usize),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseOptions {
    pub spark_budget: usize,
    pub rip_orders: Vec<usize>,
    pub rip_samples: usize,
    /// Sparsity for the NSP check and sample bound.
    pub sparsity: Option<usize>,
    pub nsp_samples: usize,
    pub seed: u64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            spark_budget: 8,
            rip_orders: vec![1, 2, 3],
            rip_samples: 2000,
            sparsity: None,
            nsp_samples: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub rows: usize,
    pub cols: usize,
    pub coherence: f64,
    pub coherence_lower_bound: f64,
    pub spark: SparkResult,
    pub rip: BTreeMap<usize, RipEstimate>,
    pub nsp: Option<NspResult>,
    pub sample_bound: Option<SampleBound>,
    pub notes: Vec<String>,
}

/// Full report. RIP orders run exhaustively where the support count allows
/// and fall back to sampled lower bounds otherwise.
pub fn diagnose(a: &DMatrix<f64>, opts: &DiagnoseOptions) -> Result<DiagnosticsReport> {
    let (m, n) = a.shape();
    let mu = coherence(a)?;
    let lower = welch_bound(m, n);
    let mut notes = vec!["sample bounds use the natural logarithm".to_string()];
    if mu + 1e-12 < lower {
        return Err(Error::Degenerate(format!(
            "coherence {mu} below the lower bound {lower}"
        )));
    }
    let sp = spark(a, opts.spark_budget.min(SPARK_BUDGET_LIMIT))?;
    if let SparkResult::Exact { spark, .. } = sp {
        if spark <= m && (spark as f64) < 1.0 + 1.0 / mu - 1e-9 {
            notes.push(format!("spark {spark} below 1 + 1/μ; check rank tolerance"));
        }
    }
    let mut rip = BTreeMap::new();
    for &k in opts.rip_orders.iter().filter(|&&k| k >= 1 && k <= n) {
        let est = if binomial(n, k) <= RIP_EXHAUSTIVE_LIMIT {
            rip_delta(a, k, RipMode::Exhaustive)?
        } else {
            notes.push(format!("δ_{k} is a sampled lower bound"));
            rip_delta(
                a,
                k,
                RipMode::Sampled {
                    samples: opts.rip_samples,
                    seed: rng::child_seed(opts.seed, k as u64),
                },
            )?
        };
        rip.insert(k, est);
    }
    let (nsp, bound) = match opts.sparsity {
        Some(k) if k >= 1 && k < n => (
            Some(nsp_check(a, k, opts.nsp_samples, opts.seed)?),
            Some(sample_bound(n, k, THEOREM_C)?),
        ),
        _ => (None, None),
    };
    Ok(DiagnosticsReport {
        rows: m,
        cols: n,
        coherence: mu,
        coherence_lower_bound: lower,
        spark: sp,
        rip,
        nsp,
        sample_bound: bound,
        notes,
    })
}

impl DiagnosticsReport {
    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, k: &str, v: String| s.push_str(&format!("{k:<24}{v}\n"));
        row(&mut s, "shape", format!("{} x {}", self.rows, self.cols));
        row(
            &mut s,
            "coherence",
            format!("{:.6} (lower bound {:.6})", self.coherence, self.coherence_lower_bound),
        );
        row(
            &mut s,
            "spark",
            match self.spark {
                SparkResult::Exact { spark, degenerate } => {
                    format!("{spark}{}", if degenerate { " (zero column)" } else { "" })
                }
                SparkResult::ExceedsBudget { budget } => format!("> {budget} (budget exhausted)"),
            },
        );
        for (k, e) in &self.rip {
            let tag = if e.lower_bound { " (lower bound)" } else { "" };
            row(&mut s, &format!("delta_{k}"), format!("{:.6}{tag}", e.delta));
        }
        if let Some(n) = self.nsp {
            row(
                &mut s,
                "nsp",
                match n {
                    NspResult::Vacuous => "vacuous (trivial null space)".into(),
                    NspResult::Violation => "violated (sparse null vector)".into(),
                    NspResult::Constant { c, vectors } => format!("C = {c:.6} over {vectors} vectors"),
                },
            );
        }
        if let Some(b) = self.sample_bound {
            row(
                &mut s,
                "sample bound",
                format!(
                    "m_min {} (theorem {}), practitioner {}, engineering {}..{}",
                    b.m_min, b.theorem, b.practitioner, b.engineering_range.0, b.engineering_range.1
                ),
            );
        }
        for n in &self.notes {
            row(&mut s, "note", n.clone());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::dense_hadamard;

    fn spark_example() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 4, &[1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 0.0, -2.0])
    }

    #[test]
    fn coherence_examples() {
        assert_eq!(coherence(&DMatrix::identity(5, 5)).unwrap(), 0.0);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 1.0, 3.0, 0.5, 3.0]);
        assert!((coherence(&a).unwrap() - 1.0).abs() < 1e-15);
        let mu = coherence(&spark_example()).unwrap();
        assert!((mu - 3.0 / 10f64.sqrt()).abs() < 1e-12);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert!(matches!(coherence(&z), Err(Error::Value(_))));
    }

    #[test]
    fn spark_examples() {
        assert_eq!(
            spark(&spark_example(), 4).unwrap(),
            SparkResult::Exact {
                spark: 3,
                degenerate: false
            }
        );
        let i = DMatrix::<f64>::identity(4, 4);
        assert_eq!(
            spark(&i, 5).unwrap(),
            SparkResult::Exact {
                spark: 5,
                degenerate: false
            }
        );
        assert_eq!(spark(&i, 3).unwrap(), SparkResult::ExceedsBudget { budget: 3 });
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0]);
        assert_eq!(
            spark(&z, 3).unwrap(),
            SparkResult::Exact {
                spark: 1,
                degenerate: true
            }
        );
        assert!(matches!(spark(&i, 21), Err(Error::Parameter(_))));
    }

    #[test]
    fn combinations_are_complete() {
        for (n, k) in [(5, 2), (6, 3), (4, 4), (7, 1)] {
            let mut count = 0;
            any_combination(n, k, |_| {
                count += 1;
                false
            });
            assert_eq!(count as u128, binomial(n, k));
        }
        assert_eq!(binomial(64, 3), 41664);
    }

    #[test]
    fn rip_examples() {
        let q = DMatrix::<f64>::identity(6, 6);
        for k in 1..=6 {
            assert!(rip_delta(&q, k, RipMode::Exhaustive).unwrap().delta < 1e-12);
        }
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(rip_delta(&d, 2, RipMode::Exhaustive).unwrap().delta >= 1.0 - 1e-12);
        let h = dense_hadamard(16).unwrap() / 4.0;
        for k in 1..=4 {
            assert!(rip_delta(&h, k, RipMode::Exhaustive).unwrap().delta < 1e-12);
        }
        let big = DMatrix::<f64>::identity(64, 64);
        assert!(matches!(rip_delta(&big, 5, RipMode::Exhaustive), Err(Error::Parameter(_))));
        let s = rip_delta(&big, 5, RipMode::Sampled { samples: 10, seed: 1 }).unwrap();
        assert!(s.lower_bound);
    }

    #[test]
    fn sampled_rip_is_below_exhaustive() {
        let mut r = rng::seeded(3);
        let a = DMatrix::from_fn(6, 12, |_, _| r.sample::<f64, _>(StandardNormal));
        let ex = rip_delta(&a, 3, RipMode::Exhaustive).unwrap();
        let sm = rip_delta(&a, 3, RipMode::Sampled { samples: 50, seed: 4 }).unwrap();
        assert!(sm.delta <= ex.delta + 1e-12);
    }

    #[test]
    fn nsp_examples() {
        assert_eq!(nsp_check(&DMatrix::identity(3, 3), 1, 5, 0).unwrap(), NspResult::Vacuous);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        match nsp_check(&a, 1, 10, 0).unwrap() {
            NspResult::Constant { c, .. } => assert!((c - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let e1 = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(nsp_check(&e1, 1, 0, 0).unwrap(), NspResult::Violation);
    }

    #[test]
    fn nsp_top_k_matches_exhaustive() {
        let mut r = rng::seeded(8);
        for _ in 0..20 {
            let h: Vec<f64> = (0..10).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            for k in 1..4 {
                let a = nsp_ratio(&h, k, true).unwrap();
                let b = nsp_ratio(&h, k, false).unwrap();
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn null_space_is_orthonormal_and_annihilated() {
        let mut r = rng::seeded(6);
        let a = DMatrix::from_fn(3, 7, |_, _| r.sample::<f64, _>(StandardNormal));
        let z = null_space(&a);
        assert_eq!(z.ncols(), 4);
        assert!((&a * &z).abs().max() < 1e-10);
        assert!((z.transpose() * &z - DMatrix::identity(4, 4)).abs().max() < 1e-10);
    }

    #[test]
    fn sample_bound_examples() {
        let b = sample_bound(1024, 10, THEOREM_C).unwrap();
        assert_eq!(b.theorem, 13);
        assert_eq!(b.m_min, 20);
        let big = sample_bound(4096 * 4096, 4096, THEOREM_C).unwrap();
        assert!((10_000..100_000).contains(&big.practitioner));
        assert_eq!(big.practitioner, 49152);
        let near = sample_bound(100, 99, THEOREM_C).unwrap();
        assert_eq!(near.theorem, 1);
        assert_eq!(near.m_min, 198);
        assert!(matches!(sample_bound(10, 10, THEOREM_C), Err(Error::Parameter(_))));
        assert!(b.engineering_range.0 < b.engineering_range.1);
    }

    #[test]
    fn spark_coherence_lemma_on_random_matrices() {
        let mut r = rng::seeded(200);
        for t in 0..200 {
            let m = 2 + t % 3;
            let n = m + 1 + t % 4;
            let a = DMatrix::from_fn(m, n, |_, _| r.random_range(-2i32..=2) as f64);
            if column_norms(&a).contains(&0.0) {
                continue;
            }
            let mu = coherence(&a).unwrap();
            assert!(mu + 1e-12 >= welch_bound(m, n));
            if let SparkResult::Exact { spark: s, .. } = spark(&a, n + 1).unwrap() {
                assert!(s as f64 >= 1.0 + 1.0 / mu - 1e-9, "trial {t}: spark {s}, mu {mu}");
            }
        }
    }

    #[test]
    fn uniqueness_threshold_consistency() {
        let mut r = rng::seeded(201);
        for _ in 0..50 {
            let a = DMatrix::from_fn(5, 8, |_, _| r.sample::<f64, _>(StandardNormal));
            let mu = coherence(&a).unwrap();
            let mut k = 1;
            while (k as f64) < 0.5 * (1.0 + 1.0 / mu) && k <= 8 {
                let d = rip_delta(&a, k, RipMode::Exhaustive).unwrap();
                assert!(d.delta < 1.0);
                k += 1;
            }
        }
    }

    #[test]
    fn report_serializes() {
        let opts = DiagnoseOptions {
            sparsity: Some(1),
            ..DiagnoseOptions::default()
        };
        let rep = diagnose(&spark_example(), &opts).unwrap();
        let js = serde_json::to_string(&rep).unwrap();
        let back: DiagnosticsReport = serde_json::from_str(&js).unwrap();
        assert_eq!(back, rep);
        assert!(rep.to_table().contains("spark"));
        assert!(js.contains("\"kind\":\"exact\""));
    }
}
