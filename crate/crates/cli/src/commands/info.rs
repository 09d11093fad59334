use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use cstk_core::io::load_distribution;
use cstk_core::quantuminfo::{
    accessible_info_bound, concurrence, eof_bound, fec_allocate, qdl_key_branches, qdl_key_rate,
    shannon_entropy, spdc_position_mi, steering_bound, steering_violated, von_neumann_entropy, Subsystem,
};
use cstk_core::{DensityMatrix, Distribution, LockingParams};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{load_config, read_json, write_json, Overrides, Provenance};
use crate::error::{CliError, CliResult, Context};
use crate::Global;

#[derive(Debug, Subcommand)]
pub enum InfoCommand {
    /// Mutual information of a joint distribution or an SPDC source.
    Mi(MiArgs),
    /// EPR steering bound.
    Steering(SteeringArgs),
    /// Entanglement measures of a two-qubit state.
    Entangle(EntangleArgs),
    /// Quantum data locking key-consumption rate.
    QdlRate(QdlArgs),
    /// Reed-Solomon (63, x) bit allocation.
    Fec(FecArgs),
}

#[derive(Debug, Args)]
pub struct MiArgs {
    /// Joint counts or probabilities (rank-2 container or CSV).
    pub input: Option<PathBuf>,
    /// Uniform diagonal d×d distribution instead of a file.
    #[arg(long)]
    pub diagonal: Option<usize>,
    /// SPDC pump waist (m); selects the SPDC formula with --l-z and --lambda-p.
    #[arg(long)]
    pub sigma_p: Option<f64>,
    /// Crystal length (m).
    #[arg(long)]
    pub l_z: Option<f64>,
    /// Pump wavelength (m).
    #[arg(long)]
    pub lambda_p: Option<f64>,
    /// One transverse dimension only.
    #[arg(long)]
    pub one_d: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiConfig {
    pub input: Option<PathBuf>,
    pub diagonal: Option<usize>,
    pub spdc: Option<SpdcConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdcConfig {
    pub sigma_p: f64,
    pub l_z: f64,
    pub lambda_p: f64,
    #[serde(default = "yes")]
    pub two_dimensional: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Args)]
pub struct SteeringArgs {
    /// Magnification-like count `n` in the bound.
    #[arg(long)]
    pub n: Option<f64>,
    /// Position pixel pitch.
    #[arg(long)]
    pub dx: Option<f64>,
    /// Momentum pixel pitch.
    #[arg(long)]
    pub dk: Option<f64>,
    /// Measured position mutual information (bits).
    #[arg(long)]
    pub i_x: Option<f64>,
    /// Measured momentum mutual information (bits).
    #[arg(long)]
    pub i_k: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteeringConfig {
    pub n: Option<f64>,
    pub dx: Option<f64>,
    pub dk: Option<f64>,
    pub i_x: Option<f64>,
    pub i_k: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EntangleArgs {
    /// singlet, phi-plus, classical, or a JSON file with `re` (and
    /// optionally `im`) 4×4 arrays.
    #[arg(long)]
    pub state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntangleConfig {
    pub state: String,
}

impl Default for EntangleConfig {
    fn default() -> Self {
        Self { state: "singlet".into() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    re: Vec<Vec<f64>>,
    #[serde(default)]
    im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Args)]
pub struct QdlArgs {
    /// Modes per photon.
    #[arg(long)]
    pub d: Option<u32>,
    /// Photons per block.
    #[arg(long)]
    pub n: Option<u32>,
    /// log₂ of the message count (default n·log₂d).
    #[arg(long)]
    pub log2_m: Option<f64>,
    /// Security exponent, ε = 2^(−n^α).
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QdlConfig {
    pub d: u32,
    pub n: u32,
    pub log2_m: Option<f64>,
    pub alpha: f64,
}

impl Default for QdlConfig {
    fn default() -> Self {
        let p = LockingParams::full_message(64, 63);
        Self {
            d: p.d,
            n: p.n,
            log2_m: None,
            alpha: p.alpha,
        }
    }
}

#[derive(Debug, Args)]
pub struct FecArgs {
    /// Information symbols per 63-symbol packet.
    #[arg(long)]
    pub x: Option<u32>,
    /// Key-consumption rate (bits per photon).
    #[arg(long)]
    pub base_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FecConfig {
    pub x: u32,
    pub base_rate: f64,
}

impl Default for FecConfig {
    fn default() -> Self {
        Self { x: 35, base_rate: 1.29 }
    }
}

pub fn run(g: &Global, c: &InfoCommand) -> CliResult<()> {
    let (name, hash_cfg, report) = match c {
        InfoCommand::Mi(a) => {
            let mut o = Overrides::default();
            o.set(&["input"], a.input.clone()).set(&["diagonal"], a.diagonal);
            if a.sigma_p.is_some() || a.l_z.is_some() || a.lambda_p.is_some() || a.one_d {
                o.set(&["spdc", "sigma_p"], a.sigma_p)
                    .set(&["spdc", "l_z"], a.l_z)
                    .set(&["spdc", "lambda_p"], a.lambda_p)
                    .set(&["spdc", "two_dimensional"], a.one_d.then_some(false));
            }
            let cfg: MiConfig = load_config(g.config.as_deref(), &o)?;
            ("info mi", serde_json::to_value(&cfg)?, mi(&cfg)?)
        }
        InfoCommand::Steering(a) => {
            let mut o = Overrides::default();
            o.set(&["n"], a.n)
                .set(&["dx"], a.dx)
                .set(&["dk"], a.dk)
                .set(&["i_x"], a.i_x)
                .set(&["i_k"], a.i_k);
            let cfg: SteeringConfig = load_config(g.config.as_deref(), &o)?;
            ("info steering", serde_json::to_value(&cfg)?, steering(&cfg)?)
        }
        InfoCommand::Entangle(a) => {
            let mut o = Overrides::default();
            o.set(&["state"], a.state.clone());
            let cfg: EntangleConfig = load_config(g.config.as_deref(), &o)?;
            ("info entangle", serde_json::to_value(&cfg)?, entangle(&cfg)?)
        }
        InfoCommand::QdlRate(a) => {
            let mut o = Overrides::default();
            o.set(&["d"], a.d)
                .set(&["n"], a.n)
                .set(&["log2_m"], a.log2_m)
                .set(&["alpha"], a.alpha);
            let cfg: QdlConfig = load_config(g.config.as_deref(), &o)?;
            ("info qdl-rate", serde_json::to_value(&cfg)?, qdl(&cfg)?)
        }
        InfoCommand::Fec(a) => {
            let mut o = Overrides::default();
            o.set(&["x"], a.x).set(&["base_rate"], a.base_rate);
            let cfg: FecConfig = load_config(g.config.as_deref(), &o)?;
            let alloc = fec_allocate(cfg.x, cfg.base_rate).context("allocation")?;
            ("info fec", serde_json::to_value(&cfg)?, serde_json::to_value(alloc)?)
        }
    };
    let doc = Provenance::new(name, &hash_cfg, g.seed()).wrap(&report)?;
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if let Some(out) = &g.out {
        write_json(out, &doc)?;
    }
    Ok(())
}

fn mi(cfg: &MiConfig) -> CliResult<Value> {
    let dist = match (&cfg.input, cfg.diagonal, &cfg.spdc) {
        (None, None, Some(s)) => {
            let bits = spdc_position_mi(s.sigma_p, s.l_z, s.lambda_p, s.two_dimensional).context("SPDC")?;
            return Ok(json!({ "source": "spdc", "mutual_information_bits": bits }));
        }
        (Some(p), None, None) => load_distribution(p).context(format!("reading {}", p.display()))?,
        (None, Some(d), None) => {
            let mut counts = vec![0.0; d * d];
            (0..d).for_each(|i| counts[i * d + i] = 1.0);
            Distribution::from_counts(d, d, &counts).context("distribution")?
        }
        (None, None, None) => {
            return Err(CliError::Usage("give a distribution file, --diagonal or SPDC parameters".into()))
        }
        _ => return Err(CliError::Usage("choose one of a file, --diagonal or SPDC parameters".into())),
    };
    let (rows, cols) = dist.shape();
    Ok(json!({
        "source": "distribution",
        "shape": [rows, cols],
        "entropy_a_bits": shannon_entropy(&dist.marginal_a(), 2.0)?,
        "entropy_b_bits": shannon_entropy(&dist.marginal_b(), 2.0)?,
        "joint_entropy_bits": shannon_entropy(dist.joint(), 2.0)?,
        "mutual_information_bits": dist.mutual_information(),
    }))
}

fn steering(cfg: &SteeringConfig) -> CliResult<Value> {
    let (Some(n), Some(dx), Some(dk)) = (cfg.n, cfg.dx, cfg.dk) else {
        return Err(CliError::Usage("steering needs --n, --dx and --dk".into()));
    };
    let bound = steering_bound(n, dx, dk).context("steering bound")?;
    let mut v = json!({ "bound_bits": bound });
    if let (Some(ix), Some(ik)) = (cfg.i_x, cfg.i_k) {
        v["measured_bits"] = json!(ix + ik);
        v["violated"] = json!(steering_violated(ix, ik, bound));
    }
    Ok(v)
}

fn preset(name: &str) -> Option<DensityMatrix> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = |v: f64| Complex64::new(v, 0.0);
    match name {
        "singlet" => DensityMatrix::pure(&[c(0.0), c(h), c(-h), c(0.0)]).ok(),
        "phi-plus" => DensityMatrix::pure(&[c(h), c(0.0), c(0.0), c(h)]).ok(),
        "classical" => DensityMatrix::diagonal(&[0.5, 0.0, 0.0, 0.5]).ok(),
        _ => None,
    }
}

fn load_state(spec: &str) -> CliResult<DensityMatrix> {
    if let Some(rho) = preset(spec) {
        return Ok(rho);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "unknown state '{spec}' (expected singlet, phi-plus, classical or a JSON file)"
        )));
    }
    let f: MatrixFile = read_json(path)?;
    let d = f.re.len();
    let im = f.im.unwrap_or_else(|| vec![vec![0.0; d]; d]);
    if f.re.iter().chain(&im).any(|r| r.len() != d) || im.len() != d {
        return Err(CliError::Data(format!("{spec}: re and im must both be {d}×{d}")));
    }
    let m = DMatrix::from_fn(d, d, |i, j| Complex64::new(f.re[i][j], im[i][j]));
    DensityMatrix::new(m).context(spec)
}

fn entangle(cfg: &EntangleConfig) -> CliResult<Value> {
    let rho = load_state(&cfg.state)?;
    if rho.dim() != 4 {
        return Err(CliError::Data(format!("two-qubit state needed, got dimension {}", rho.dim())));
    }
    let c = concurrence(&rho).context("concurrence")?;
    let reduced = rho.partial_trace(2, 2, Subsystem::A).context("partial trace")?;
    Ok(json!({
        "entropy_bits": von_neumann_entropy(&rho),
        "reduced_entropy_bits": von_neumann_entropy(&reduced),
        "concurrence": c,
        "eof_bound_ebits": eof_bound(c)?,
    }))
}

fn qdl(cfg: &QdlConfig) -> CliResult<Value> {
    let mut p = LockingParams::full_message(cfg.d, cfg.n);
    p.alpha = cfg.alpha;
    if let Some(l) = cfg.log2_m {
        p.log2_m = l;
    }
    let b = qdl_key_branches(&p).context("key rate")?;
    Ok(json!({
        "rate_bits_per_photon": qdl_key_rate(&p)?,
        "ln_k1": b.ln_k1,
        "ln_k2": b.ln_k2,
        "accessible_info_bound_bits": accessible_info_bound(&p)?,
    }))
}
