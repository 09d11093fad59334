use std::path::PathBuf;

use clap::Args;
use cstk_core::io::{load_container, save_container, Tensor};
use serde::Serialize;

use crate::config::{require_out, Provenance};
use crate::error::{CliResult, Context};
use crate::Global;

#[derive(Debug, Args)]
pub struct FwhtArgs {
    /// Vector container (power-of-two length).
    pub input: PathBuf,
    /// Divide by the length, undoing a forward transform.
    #[arg(long)]
    pub inverse: bool,
}

#[derive(Serialize)]
struct FwhtConfig<'a> {
    input: &'a str,
    inverse: bool,
}

pub fn run(g: &Global, a: &FwhtArgs) -> CliResult<()> {
    let out = require_out(g.out.as_deref())?;
    let x = load_container(&a.input)
        .and_then(Tensor::into_vector)
        .context(format!("reading {}", a.input.display()))?;
    let mut y = cstk_core::fwht(&x).context("transform")?;
    if a.inverse {
        let n = y.len() as f64;
        y.iter_mut().for_each(|v| *v /= n);
    }
    save_container(out, &Tensor::vector(y)).context(format!("writing {}", out.display()))?;
    let cfg = FwhtConfig {
        input: &a.input.to_string_lossy(),
        inverse: a.inverse,
    };
    Provenance::new("fwht", &cfg, g.seed()).write_sidecar(out)
}
