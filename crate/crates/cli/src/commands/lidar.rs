use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use cstk_core::io::{load_scene, save_depth_map, save_pgm16, save_scene};
use cstk_core::lidar::{
    acquire, reconstruct_depth, summarize, sweep_mse, write_sweep_csv, LidarMeasurementDoc,
};
use cstk_core::{rng, ChirpConfig, LidarMeasurement, NoiseParams, PermutedSelector, ReconstructionConfig, Scene, SweepConfig};
use serde::{Deserialize, Serialize};

use crate::config::{load_config, read_json, require_out, sibling, write_json, Overrides, Provenance};
use crate::error::{CliError, CliResult, Context};
use crate::Global;

#[derive(Debug, Subcommand)]
pub enum LidarCommand {
    /// Acquire compressive bucket measurements of a scene.
    Simulate(SimulateArgs),
    /// Depth map from a measurement file.
    Reconstruct(ReconstructArgs),
    /// Depth MSE over PSNR, sampling ratio and trials.
    Sweep(SweepArgs),
}

/// Scene choice shared by simulate and sweep.
#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Built-in scene (desk, two-planes, plane) or a scene plane file.
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Measurements as a fraction of the pixel count.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Brightest-pixel SNR.
    #[arg(long, conflicts_with = "noiseless")]
    pub psnr: Option<f64>,
    /// No detector noise.
    #[arg(long)]
    pub noiseless: bool,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Measurement JSON written by `lidar simulate`.
    pub measurement: PathBuf,
    /// Ground-truth scene plane file for error statistics.
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
    /// 4×4 mean filter over valid depths.
    #[arg(long)]
    pub smooth: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub scene: String,
    pub nx: usize,
    pub ny: usize,
    pub chirp: ChirpConfig,
    pub noise: NoiseParams,
    pub ratio: f64,
    /// Put the all-ones pattern first.
    pub dc_row: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scene: "desk".into(),
            nx: 64,
            ny: 64,
            chirp: ChirpConfig::default(),
            noise: NoiseParams::default(),
            ratio: 0.5,
            dc_row: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthConfig {
    pub chirp: ChirpConfig,
    pub reconstruction: ReconstructionConfig,
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepFileConfig {
    pub scene: String,
    pub nx: usize,
    pub ny: usize,
    pub chirp: ChirpConfig,
    pub sweep: SweepConfig,
}

impl Default for SweepFileConfig {
    fn default() -> Self {
        Self {
            scene: "two-planes".into(),
            nx: 64,
            ny: 64,
            chirp: ChirpConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn scene_overrides(o: &mut Overrides, a: &SceneArgs) {
    o.set(&["scene"], a.scene.clone()).set(&["nx"], a.nx).set(&["ny"], a.ny);
}

/// A path to an existing file wins over a built-in name.
fn resolve_scene(name: &str, nx: usize, ny: usize, cfg: &ChirpConfig) -> CliResult<Scene> {
    let p = Path::new(name);
    if p.is_file() {
        return load_scene(p).context(format!("reading scene {name}"));
    }
    Scene::builtin(name, nx, ny, cfg).context("scene")
}

pub fn run(g: &Global, c: &LidarCommand) -> CliResult<()> {
    match c {
        LidarCommand::Simulate(a) => simulate(g, a),
        LidarCommand::Reconstruct(a) => depth(g, a),
        LidarCommand::Sweep(a) => sweep(g, a),
    }
}

fn simulate(g: &Global, a: &SimulateArgs) -> CliResult<()> {
    let out = require_out(g.out.as_deref())?;
    let mut o = Overrides::default();
    scene_overrides(&mut o, &a.scene);
    o.set(&["ratio"], a.ratio)
        .set(&["noise", "psnr"], a.psnr)
        .set_null(&["noise", "psnr"], a.noiseless);
    let cfg: SimulateConfig = load_config(g.config.as_deref(), &o)?;
    let seed = g.seed();

    let scene = resolve_scene(&cfg.scene, cfg.nx, cfg.ny, &cfg.chirp)?;
    let n = scene.len();
    if !(cfg.ratio > 0.0 && cfg.ratio <= 1.0) {
        return Err(CliError::Data(format!("ratio {} outside (0, 1]", cfg.ratio)));
    }
    let m = ((cfg.ratio * n as f64).round() as usize).max(1);
    let mut sel = PermutedSelector::random(n, m, rng::child_seed(seed, 0), false).context("selector")?;
    if cfg.dc_row {
        sel = sel.with_dc_row();
    }
    let meas = acquire(&scene, &cfg.chirp, &sel, &cfg.noise, rng::child_seed(seed, 1)).context("acquisition")?;

    write_json(out, &meas.to_doc())?;
    let truth = sibling(out, "scene");
    save_scene(&truth, &scene).context(format!("writing {}", truth.display()))?;
    println!("{}x{} scene, {m} patterns of {n} pixels", scene.nx, scene.ny);
    Provenance::new("lidar simulate", &cfg, seed).write_sidecar(out)
}

fn depth(g: &Global, a: &ReconstructArgs) -> CliResult<()> {
    let out = require_out(g.out.as_deref())?;
    let mut o = Overrides::default();
    o.set(&["truth"], a.truth.clone())
        .set(&["reconstruction", "smooth"], a.smooth.then_some(true));
    let cfg: DepthConfig = load_config(g.config.as_deref(), &o)?;

    let doc: LidarMeasurementDoc = read_json(&a.measurement)?;
    let meas = LidarMeasurement::from_doc(&doc).context(format!("measurement {}", a.measurement.display()))?;
    if meas.bins != cfg.chirp.bins() {
        return Err(CliError::Data(format!(
            "measurement has {} bins, chirp config gives {}",
            meas.bins,
            cfg.chirp.bins()
        )));
    }
    let map = reconstruct_depth(&meas, &cfg.chirp, &cfg.reconstruction).context("reconstruction")?;

    save_depth_map(out, &map).context(format!("writing {}", out.display()))?;
    let pgm = sibling(out, "pgm");
    save_pgm16(&pgm, &map).context(format!("writing {}", pgm.display()))?;
    let valid = map.valid.iter().filter(|v| **v).count();
    println!("{valid} of {} pixels valid", map.valid.len());
    if let Some(t) = &cfg.truth {
        let truth = load_scene(t).context(format!("reading scene {}", t.display()))?;
        let within = map.fraction_within(&truth, cfg.chirp.depth_resolution())?;
        println!("mse {:.6e} m², {:.2}% of objects within one bin", map.mse(&truth)?, 100.0 * within);
    }
    Provenance::new("lidar reconstruct", &cfg, g.seed()).write_sidecar(out)
}

fn sweep(g: &Global, a: &SweepArgs) -> CliResult<()> {
    let mut o = Overrides::default();
    scene_overrides(&mut o, &a.scene);
    o.set(&["sweep", "trials"], a.trials);
    let cfg: SweepFileConfig = load_config(g.config.as_deref(), &o)?;
    let seed = g.seed();
    let scene = resolve_scene(&cfg.scene, cfg.nx, cfg.ny, &cfg.chirp)?;
    let rows = sweep_mse(&scene, &cfg.chirp, &cfg.sweep, seed).context("sweep")?;

    match g.out.as_deref() {
        Some(out) => {
            let f = File::create(out).context(format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(f);
            write_sweep_csv(&rows, &mut w).context(format!("writing {}", out.display()))?;
            w.flush()?;
            Provenance::new("lidar sweep", &cfg, seed).write_sidecar(out)?;
            for s in summarize(&rows) {
                let psnr = s.psnr.map_or("inf".to_string(), |p| p.to_string());
                println!("psnr {psnr:>4} ratio {:.2}: mse {:.3e} ± {:.1e}", s.ratio, s.mean, s.stderr);
            }
        }
        None => write_sweep_csv(&rows, std::io::stdout().lock()).context("writing sweep")?,
    }
    Ok(())
}
