//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p cstk-core --test acceptance`.

// `ensure!(x < tol)` must fail on NaN, which the negated form guarantees.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cstk_core::diagnostics::{coherence, spark, SparkResult};
use cstk_core::lidar::{
    acquire, beat_frequency, reconstruct_depth, summarize, sweep_mse, ChirpConfig, NoiseParams,
    ReconstructionConfig, Scene, SweepConfig, SweepRow,
};
use cstk_core::linalg::rel_error;
use cstk_core::quantuminfo::{
    concurrence, eof_bound, fec_allocate, qdl_key_rate, spdc_position_mi, DensityMatrix, Distribution,
    LockingParams,
};
use cstk_core::rng;
use cstk_core::sensing::{decompose_pm, HadamardSensing};
use cstk_core::solvers::{admm_lasso_dense, admm_lasso_fast, soft_threshold, LinearOperatorHandle, SolverConfig};
use cstk_core::transforms::{circulant_eigenvalues, circulant_solve, GradientOperator};
use cstk_core::{dense_hadamard, fwht, JointSelector, PermutedSelector};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> std::result::Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!("runtime {:.1} s exceeds {:.0} s", t.as_secs_f64(), limit.as_secs_f64()))
    } else {
        Ok(())
    }
}

fn rand_vec(r: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn fwht_oracle() -> Check {
    let start = Instant::now();
    let mut r = rng::seeded(1);
    let mut worst: f64 = 0.0;
    for k in 0..=8 {
        let n = 1usize << k;
        let h = dense_hadamard(n).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let x = rand_vec(&mut r, n);
            let want = &h * DVector::from_vec(x.clone());
            let got = fwht(&x).map_err(|e| e.to_string())?;
            for i in 0..n {
                worst = worst.max((got[i] - want[i]).abs());
            }
            let ints: Vec<f64> = (0..n).map(|_| r.random_range(-10_000i64..=10_000) as f64).collect();
            let twice = fwht(&fwht(&ints).unwrap()).unwrap();
            ensure!(
                twice.iter().zip(&ints).all(|(a, b)| *a == n as f64 * b),
                "fwht∘fwht ≠ n·id on integers at n = {n}"
            );
        }
    }
    ensure!(worst <= 1e-10, "max abs error {worst:e}");
    within(Duration::from_secs(5), start)?;
    Ok(format!("max abs error {worst:.1e}, involution exact"))
}

fn kron_row(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

fn joint_construction() -> Check {
    let start = Instant::now();
    let mut checked = 0;
    for &n in &[2usize, 4, 8] {
        for seed in 0..20u64 {
            let m = n * n;
            let s = PermutedSelector::random(n, m, seed, true).unwrap();
            let i = PermutedSelector::random(n, m, seed + 100, true).unwrap();
            let joint = JointSelector::new(&s, &i).map_err(|e| e.to_string())?;
            let rows = joint.rows();
            let mut uniq = rows.clone();
            uniq.sort_unstable();
            uniq.dedup();
            ensure!(uniq.len() == rows.len(), "repeated joint rows at N = {n}");
            // columns of the implicit operator, via basis vectors
            let nn = n * n;
            let mut cols = Vec::with_capacity(nn);
            for c in 0..nn {
                let mut e = vec![0.0; nn];
                e[c] = 1.0;
                cols.push(joint.apply_joint(&e).unwrap());
            }
            for row in 0..joint.m() {
                let (ps, pi) = joint.subspace_patterns(row).unwrap();
                let want = kron_row(&ps, &pi);
                for (c, col) in cols.iter().enumerate() {
                    ensure!(col[row] == want[c], "N = {n}, row {row}, column {c} differs");
                }
                checked += 1;
            }
        }
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("{checked} joint rows factor exactly, no repeats"))
}

fn pm_identity() -> Check {
    let h4 = dense_hadamard(4).unwrap();
    let mut p = DMatrix::zeros(4, 4);
    let mut m = DMatrix::zeros(4, 4);
    for i in 0..4 {
        let row: Vec<f64> = h4.row(i).iter().copied().collect();
        let (plus, minus) = decompose_pm(&row).unwrap();
        for j in 0..4 {
            p[(i, j)] = plus[j];
            m[(i, j)] = minus[j];
        }
    }
    let rebuilt = p.kronecker(&p) + m.kronecker(&m) - p.kronecker(&m) - m.kronecker(&p);
    let h16 = dense_hadamard(16).unwrap();
    ensure!(rebuilt == h16, "H₁₆ differs from the four Kronecker sub-products");
    ensure!(h4.kronecker(&h4) == h16, "H₄ ⊗ H₄ ≠ H₁₆");

    // the coincidence recombination reproduces the joint measurement exactly
    let mut r = rng::seeded(3);
    let joint_p: Vec<f64> = (0..256).map(|_| r.random_range(0..100) as f64).collect();
    let s = PermutedSelector::full(4, 5).unwrap();
    let i = PermutedSelector::full(4, 6).unwrap();
    let sel = JointSelector::new(&s, &i).unwrap();
    let meas = sel.simulate_coincidences(&joint_p[..16], 0.0, 0).unwrap();
    let direct = sel.apply_joint(&joint_p[..16]).unwrap();
    ensure!(meas.y == direct, "c₊₊ + c₋₋ − c₊₋ − c₋₊ differs from A·x");
    Ok("H₁₆ = P⊗P + M⊗M − P⊗M − M⊗P entrywise; coincidences match".into())
}

fn spark_checks() -> Check {
    let a = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 0.0, -2.0]);
    let s = spark(&a, 4).map_err(|e| e.to_string())?;
    ensure!(
        s == SparkResult::Exact { spark: 3, degenerate: false },
        "example matrix spark {s:?}"
    );
    let mut r = rng::seeded(4);
    for t in 0..200 {
        let b = DMatrix::from_fn(4, 8, |_, _| r.random_range(-1.0..1.0));
        let mu = coherence(&b).unwrap();
        match spark(&b, 8).unwrap() {
            SparkResult::Exact { spark, .. } => {
                ensure!(spark as f64 >= 1.0 + 1.0 / mu - 1e-9, "trial {t}: spark {spark} < 1 + 1/μ = {}", 1.0 + 1.0 / mu)
            }
            other => return Err(format!("trial {t}: {other:?}")),
        }
    }
    Ok("example spark 3; spark ≥ 1 + 1/μ on 200 random 4×8".into())
}

fn sparse_signal(r: &mut rng::Rng, n: usize, k: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(r);
    let mut x = vec![0.0; n];
    for &i in &idx[..k] {
        x[i] = r.random_range(1.0..2.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    x
}

fn lasso_checks() -> Check {
    // (a) identity A
    let b = vec![3.0, -0.2, 0.7, -2.5, 0.0, 1.1, -0.45];
    let psi = LinearOperatorHandle::identity(b.len()).unwrap();
    let tight = |w: f64| SolverConfig { weight: w, max_iters: 20_000, tol: 1e-10, ..SolverConfig::default() };
    let out = admm_lasso_dense(&DMatrix::identity(b.len(), b.len()), &b, &psi, &tight(0.5)).map_err(|e| e.to_string())?;
    let want = soft_threshold(&b, 0.5);
    let err_a = out.x.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(err_a <= 1e-6, "(a) identity closed form off by {err_a:e}");

    // (b) sparse recovery
    let (n, k) = (1024usize, 10usize);
    let m = (4.0 * k as f64 * (n as f64 / k as f64).log2()).ceil() as usize;
    let mut r = rng::seeded(5);
    let x = sparse_signal(&mut r, n, k);
    let sel = PermutedSelector::random(n, m, 6, false).unwrap();
    let y = sel.apply(&x).unwrap();
    let psi = LinearOperatorHandle::identity(n).unwrap();
    let start = Instant::now();
    let out = admm_lasso_fast(&sel, &y, &psi, &tight(1e-3)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let err_b = rel_error(&out.x, &x);
    ensure!(err_b < 1e-3, "(b) relative error {err_b:e} at m = {m}");
    ensure!(secs < 10.0, "(b) took {secs:.1} s");

    // (c) dense vs fast
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let sel = PermutedSelector::random(64, 32, seed, false).unwrap();
        let x = sparse_signal(&mut r, 64, 4);
        let y = sel.apply(&x).unwrap();
        let psi = LinearOperatorHandle::identity(64).unwrap();
        let d = admm_lasso_dense(&sel.dense().unwrap(), &y, &psi, &tight(0.05)).unwrap();
        let f = admm_lasso_fast(&sel, &y, &psi, &tight(0.05)).unwrap();
        worst = worst.max((d.objective - f.objective).abs());
    }
    ensure!(worst <= 1e-6, "(c) objectives differ by {worst:e}");
    Ok(format!(
        "(a) {err_a:.1e}; (b) m = {m}, rel err {err_b:.1e} in {secs:.2} s; (c) Δobjective {worst:.1e}"
    ))
}

fn dense_gradient(g: &GradientOperator) -> DMatrix<f64> {
    let n = g.len();
    let mut d = DMatrix::zeros(3 * n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        for (i, v) in g.apply(&e).unwrap().into_iter().enumerate() {
            d[(i, c)] = v;
        }
    }
    d
}

fn tv_video_exactness() -> Check {
    // (n_F, n_y, n_x) = (2, 4, 4)
    let g = GradientOperator::new(4, 4, 2).unwrap();
    let d = dense_gradient(&g);
    let shape = [2, 4, 4];
    let (beta, gamma, scale) = (0.7, 1.3, 32.0);
    let mut r = rng::seeded(6);
    let rhs = rand_vec(&mut r, 32);
    let m = DMatrix::identity(32, 32) * (beta * scale) + d.transpose() * &d * gamma;
    let want = m.lu().solve(&DVector::from_vec(rhs.clone())).ok_or("dense solve failed")?;
    let lap = circulant_eigenvalues(&g.laplacian_first_column(), &shape).unwrap();
    let eigs: Vec<f64> = lap.iter().map(|e| beta * scale + gamma * e).collect();
    let got = circulant_solve(&eigs, &rhs, &shape).unwrap();
    let err = got.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(err <= 1e-8, "FFT solve differs by {err:e}");

    let mut shapes = 0;
    for nf in 1..=8usize {
        for ny in 1..=16usize {
            for nx in 1..=16usize {
                if nf * ny * nx > 512 {
                    continue;
                }
                let g = GradientOperator::new(nx, ny, nf).unwrap();
                let d = dense_gradient(&g);
                let col0 = d.tr_mul(&d.column(0));
                let lap = g.laplacian_first_column();
                for (i, v) in lap.iter().enumerate() {
                    ensure!((v - col0[i]).abs() <= 1e-12, "shape ({nf},{ny},{nx}) entry {i}");
                }
                shapes += 1;
            }
        }
    }
    Ok(format!("x-update error {err:.1e}; Laplacian column matches on {shapes} shapes"))
}

fn phantom(n: usize) -> Vec<f64> {
    (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64, (i % n) as f64);
            let mut v = 0.2;
            if (10.0..30.0).contains(&y) && (8.0..40.0).contains(&x) {
                v = 1.0;
            }
            if (36.0..56.0).contains(&y) && (20.0..52.0).contains(&x) {
                v = 0.6;
            }
            if (y - 20.0).powi(2) + (x - 48.0).powi(2) < 64.0 {
                v = 0.8;
            }
            v
        })
        .collect()
}

fn tv_phantom() -> Check {
    let side = 64;
    let n = side * side;
    let x = phantom(side);
    let m = (0.3 * n as f64).round() as usize;
    let sensor = cstk_core::BlockDiagonalSensor::random(1, n, m, 7, false).unwrap().with_dc_rows();
    let b = sensor.apply(&x).unwrap();
    let g = GradientOperator::new(side, side, 1).unwrap();
    let cfg = SolverConfig { weight: 1.0, max_iters: 3000, tol: 1e-6, ..SolverConfig::default() };
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let out = pool
        .install(|| cstk_core::solvers::admm_tv_video(&sensor, &b, &g, &cfg))
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let err = rel_error(&out.x, &x);
    ensure!(err < 0.05, "relative error {err:.4}");
    within(Duration::from_secs(60), start)?;
    Ok(format!("m = {m}, relative error {err:.4} in {secs:.1} s ({} iterations)", out.iterations))
}

fn lidar_formulas() -> Check {
    let far = ChirpConfig {
        max_depth: 30.0,
        sample_rate: 40e6,
        ..ChirpConfig::default()
    };
    let nu = beat_frequency(&far, 25.0).map_err(|e| e.to_string())?;
    let sig4 = |v: f64| {
        let p = 10f64.powi(3 - v.abs().log10().floor() as i32);
        (v * p).round() / p
    };
    ensure!(sig4(nu) == 16.67e6, "25 m beat note {nu} Hz");
    let res = ChirpConfig::default().depth_resolution();
    ensure!((res - 1.5e-3).abs() < 1e-12, "depth resolution {res}");
    Ok(format!("25 m → {:.4} MHz; bin depth {:.4} mm", nu / 1e6, res * 1e3))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn psnr_label(p: Option<f64>) -> String {
    p.map_or("inf".into(), |v| format!("{v}"))
}

fn lidar_end_to_end() -> Check {
    let start = Instant::now();
    let cfg = ChirpConfig::default();
    let side = 64;
    let n = side * side;
    let mut notes = Vec::new();
    for name in ["desk", "two-planes"] {
        let scene = Scene::builtin(name, side, side, &cfg).map_err(|e| e.to_string())?;
        let sel = PermutedSelector::random(n, n / 2, 11, false).unwrap().with_dc_row();
        let meas = acquire(&scene, &cfg, &sel, &NoiseParams::default(), 12).map_err(|e| e.to_string())?;
        let map = reconstruct_depth(&meas, &cfg, &ReconstructionConfig::default()).map_err(|e| e.to_string())?;
        let frac = map.fraction_within(&scene, cfg.depth_resolution()).unwrap();
        ensure!(frac >= 0.95, "{name}: only {:.1}% of object pixels within one bin", 100.0 * frac);
        notes.push(format!("{name} {:.1}%", 100.0 * frac));
    }

    let scene = Scene::two_planes(side, side, &cfg).unwrap();
    let sweep = SweepConfig::default();
    let rows: Vec<SweepRow> = sweep_mse(&scene, &cfg, &sweep, 2024).map_err(|e| e.to_string())?;
    let summary = summarize(&rows);
    for s in &summary {
        println!(
            "    psnr {:>3} ratio {:.1}: mse {:.3e} ± {:.1e}",
            psnr_label(s.psnr),
            s.ratio,
            s.mean,
            s.stderr
        );
    }
    let by_ratio: Vec<f64> = sweep
        .ratios
        .iter()
        .map(|r| mean(&rows.iter().filter(|x| x.ratio == *r).map(|x| x.mse).collect::<Vec<_>>()))
        .collect();
    for w in by_ratio.windows(2) {
        ensure!(w[1] <= w[0], "(a) averaged MSE rises with ratio: {by_ratio:?}");
    }
    let cell = |psnr: Option<f64>, ratio: f64| {
        summary
            .iter()
            .find(|s| s.psnr == psnr && s.ratio == ratio)
            .map(|s| s.mean)
            .ok_or(format!("missing cell psnr {psnr:?} ratio {ratio}"))
    };
    let (m02, m10) = (cell(Some(10.0), 0.2)?, cell(Some(10.0), 1.0)?);
    ensure!(m02 <= 2.0 * m10, "(b) MSE(0.2) = {m02:.3e} > 2 × MSE(1.0) = {:.3e}", 2.0 * m10);
    within(Duration::from_secs(15 * 60), start)?;
    Ok(format!(
        "noiseless within one bin: {}; (a) averaged MSE by ratio {}; (b) {:.2e} ≤ 2 × {:.2e}; {:.0} s",
        notes.join(", "),
        by_ratio.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" ≥ "),
        m02,
        m10,
        start.elapsed().as_secs_f64()
    ))
}

fn information_metrics() -> Check {
    let mut joint = vec![0.0; 64 * 64];
    for i in 0..64 {
        joint[i * 64 + i] = 1.0 / 64.0;
    }
    let mi = Distribution::new(64, 64, joint).map_err(|e| e.to_string())?.mutual_information();
    ensure!((mi - 6.0).abs() <= 1e-9, "diagonal MI {mi}");
    let spdc = spdc_position_mi(3e-4, 1e-3, 325e-9, true).unwrap();
    ensure!((spdc - 10.9).abs() <= 0.1, "SPDC MI {spdc}");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |v: f64| Complex64::new(v, 0.0);
    let singlet = DensityMatrix::pure(&[c(0.0), c(s), c(-s), c(0.0)]).unwrap();
    let cs = concurrence(&singlet).unwrap();
    let es = eof_bound(cs).unwrap();
    ensure!((cs - 1.0).abs() < 1e-9 && (es - 1.0).abs() < 1e-9, "singlet C = {cs}, E_f = {es}");
    let ex = DensityMatrix::diagonal(&[0.5, 0.0, 0.0, 0.5]).unwrap();
    let ce = concurrence(&ex).unwrap();
    let ee = eof_bound(ce).unwrap();
    ensure!(ce.abs() < 1e-9 && ee.abs() < 1e-9, "ρ_ex C = {ce}, E_f = {ee}");
    Ok(format!("I = {mi:.9} bits; SPDC {spdc:.2} bits; singlet C = E_f = 1; ρ_ex → 0"))
}

fn key_rate() -> Check {
    let rate = qdl_key_rate(&LockingParams::full_message(64, 63)).map_err(|e| e.to_string())?;
    ensure!((rate - 1.5).abs() <= 0.15, "key rate {rate}");
    let a = fec_allocate(35, 1.29).map_err(|e| e.to_string())?;
    ensure!(
        (a.message - 1.0).abs() <= 0.1 && (a.key - 2.3).abs() <= 0.1 && (a.redundancy - 2.7).abs() <= 0.1,
        "allocation {a:?}"
    );
    Ok(format!(
        "rate {rate:.3} bits/photon; message {:.2}, key {:.2}, redundancy {:.2}",
        a.message, a.key, a.redundancy
    ))
}

/// Every proptest block in the workspace must fix its RNG seed, and a seeded
/// runner must replay the same cases.
fn seeded_properties() -> Check {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("..");
    let mut stack = vec![root];
    let (mut blocks, mut files) = (0, 0);
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "rs") {
                let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
                let uses = text.matches("proptest! {").count();
                if uses == 0 {
                    continue;
                }
                files += 1;
                blocks += uses;
                let seeded = text.matches("#![proptest_config(").count();
                let fixed = text.matches("RngSeed::Fixed").count();
                ensure!(
                    seeded == uses && fixed >= 1,
                    "{}: {uses} proptest blocks, {seeded} configured, {fixed} fixed seeds",
                    path.display()
                );
            }
        }
    }
    ensure!(blocks > 0, "no property suites found");

    use proptest::strategy::{Strategy, ValueTree};
    use proptest::test_runner::{Config, RngSeed, TestRunner};
    let draw = || {
        let mut runner = TestRunner::new(Config {
            rng_seed: RngSeed::Fixed(12),
            ..Config::default()
        });
        (0..32)
            .map(|_| proptest::collection::vec(-1e3f64..1e3, 1..64).new_tree(&mut runner).unwrap().current())
            .collect::<Vec<_>>()
    };
    ensure!(draw() == draw(), "seeded runner is not reproducible");
    Ok(format!("{blocks} property blocks in {files} files, all seeded; replay identical"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("FWHT oracle equivalence", fwht_oracle),
        ("joint-space construction", joint_construction),
        ("± decomposition identity", pm_identity),
        ("spark example and lemma", spark_checks),
        ("LASSO correctness", lasso_checks),
        ("TV-video x-update exactness", tv_video_exactness),
        ("TV phantom recovery", tv_phantom),
        ("LiDAR formulas", lidar_formulas),
        ("LiDAR end-to-end", lidar_end_to_end),
        ("information metrics", information_metrics),
        ("QDL key rate and FEC", key_rate),
        ("seeded property suites", seeded_properties),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.2} s]"),
            Err(why) => {
                failures += 1;
                println!("FAIL {id:>2} {name}: {why} [{secs:.2} s]");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
