use std::path::{Path, PathBuf};

use clap::Args;
use cstk_core::io::{load_container, save_container, Tensor};
use cstk_core::sensing::SelectorDoc;
use cstk_core::{rng, BlockDiagonalSensor, PermutedSelector};
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{load_config, require_out, sibling, write_json, Overrides, Provenance};
use crate::error::{CliError, CliResult, Context};
use crate::Global;

#[derive(Debug, Args)]
pub struct SenseArgs {
    /// Signal container; omitted means a synthetic sparse signal.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Per-frame length of the synthetic signal.
    #[arg(long)]
    pub n: Option<usize>,
    /// Measurements per frame.
    #[arg(long)]
    pub m: Option<usize>,
    /// Measurements per frame as a fraction of n (used when m is absent).
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Nonzeros per frame of the synthetic signal.
    #[arg(long)]
    pub sparsity: Option<usize>,
    /// Standard deviation of additive Gaussian measurement noise.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Put the all-ones row first in every frame.
    #[arg(long)]
    pub dc_row: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SenseConfig {
    pub input: Option<PathBuf>,
    pub n: usize,
    pub m: Option<usize>,
    pub ratio: Option<f64>,
    pub frames: usize,
    pub sparsity: usize,
    pub noise_sigma: f64,
    /// Let random draws pick the all-ones row.
    pub allow_dc: bool,
    pub dc_row: bool,
}

impl Default for SenseConfig {
    fn default() -> Self {
        Self {
            input: None,
            n: 1024,
            m: None,
            ratio: None,
            frames: 1,
            sparsity: 10,
            noise_sigma: 0.0,
            allow_dc: false,
            dc_row: false,
        }
    }
}

/// Selector file contents: one selector, or one per frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SelectorFile {
    Single(SelectorDoc),
    Frames(Vec<SelectorDoc>),
}

impl SelectorFile {
    pub fn from_sensor(s: &BlockDiagonalSensor) -> Self {
        match s.frames() {
            [one] => SelectorFile::Single(one.to_doc()),
            many => SelectorFile::Frames(many.iter().map(PermutedSelector::to_doc).collect()),
        }
    }

    pub fn into_sensor(self) -> CliResult<BlockDiagonalSensor> {
        let docs = match self {
            SelectorFile::Single(d) => vec![d],
            SelectorFile::Frames(d) => d,
        };
        let frames = docs
            .iter()
            .map(PermutedSelector::from_doc)
            .collect::<Result<Vec<_>, _>>()
            .context("selector")?;
        BlockDiagonalSensor::new(frames).context("selector")
    }
}

/// Sparse test signal: `k` standard normal entries per frame.
fn synthetic(n: usize, frames: usize, k: usize, seed: u64) -> CliResult<Vec<f64>> {
    if k == 0 || k > n {
        return Err(CliError::Data(format!("sparsity {k} must lie in 1..={n}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = vec![0.0; n * frames];
    for f in 0..frames {
        let mut r = rng::stream(seed, 1 + f as u64);
        for i in sample(&mut r, n, k) {
            x[f * n + i] = normal.sample(&mut r);
        }
    }
    Ok(x)
}

fn measurement_count(cfg: &SenseConfig, n: usize) -> CliResult<usize> {
    let m = match (cfg.m, cfg.ratio) {
        (Some(m), _) => m,
        (None, Some(r)) if r > 0.0 && r <= 1.0 => ((r * n as f64).round() as usize).max(1),
        (None, Some(r)) => return Err(CliError::Data(format!("ratio {r} outside (0, 1]"))),
        // 4·K·ln(n/K), a comfortable margin over the sample bounds
        (None, None) => {
            let k = cfg.sparsity.clamp(1, n) as f64;
            ((4.0 * k * (n as f64 / k).ln()).ceil() as usize).clamp(1, n)
        }
    };
    if m == 0 {
        return Err(CliError::Data("measurement count must be positive".into()));
    }
    Ok(m)
}

pub fn run(g: &Global, a: &SenseArgs) -> CliResult<()> {
    let out = require_out(g.out.as_deref())?;
    let mut o = Overrides::default();
    o.set(&["input"], a.input.clone())
        .set(&["n"], a.n)
        .set(&["m"], a.m)
        .set(&["ratio"], a.ratio)
        .set(&["frames"], a.frames)
        .set(&["sparsity"], a.sparsity)
        .set(&["noise_sigma"], a.noise_sigma)
        .set(&["dc_row"], a.dc_row.then_some(true));
    let cfg: SenseConfig = load_config(g.config.as_deref(), &o)?;
    let seed = g.seed();
    if cfg.frames == 0 {
        return Err(CliError::Data("frames must be at least 1".into()));
    }

    let (x, n) = match &cfg.input {
        Some(p) => {
            let x = load_container(p).context(format!("reading {}", p.display()))?.data;
            if x.len() % cfg.frames != 0 {
                return Err(CliError::Data(format!(
                    "signal length {} is not a multiple of {} frames",
                    x.len(),
                    cfg.frames
                )));
            }
            let n = x.len() / cfg.frames;
            (x, n)
        }
        None => (synthetic(cfg.n, cfg.frames, cfg.sparsity, seed)?, cfg.n),
    };
    let m = measurement_count(&cfg, n)?;
    let mut sensor =
        BlockDiagonalSensor::random(cfg.frames, n, m, rng::child_seed(seed, 0), cfg.allow_dc).context("selector")?;
    if cfg.dc_row {
        sensor = sensor.with_dc_rows();
    }
    let mut y = sensor.apply(&x).context("sensing")?;
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).map_err(|e| CliError::Data(e.to_string()))?;
        let mut r = rng::stream(seed, 0);
        y.iter_mut().for_each(|v| *v += normal.sample(&mut r));
    } else if cfg.noise_sigma < 0.0 {
        return Err(CliError::Data("noise_sigma must be non-negative".into()));
    }

    save_container(out, &Tensor::vector(y)).context(format!("writing {}", out.display()))?;
    write_json(&sibling(out, "selector.json"), &SelectorFile::from_sensor(&sensor))?;
    if cfg.input.is_none() {
        save_truth(out, x)?;
    }
    log::info!("sensed n = {n}, m = {m}, frames = {}", cfg.frames);
    println!("n = {n}, m = {m} per frame, {} frame(s)", cfg.frames);
    Provenance::new("sense", &cfg, seed).write_sidecar(out)
}

fn save_truth(out: &Path, x: Vec<f64>) -> CliResult<()> {
    let p = sibling(out, "truth.cstk");
    save_container(&p, &Tensor::vector(x)).context(format!("writing {}", p.display()))
}
