use std::path::PathBuf;

use clap::Args;
use cstk_core::diagnostics::{diagnose, DiagnoseOptions};
use cstk_core::io::load_matrix;

use crate::config::{load_config, write_json, Overrides, Provenance};
use crate::error::{CliResult, Context};
use crate::Global;

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Matrix as a rank-2 container or CSV.
    pub matrix: PathBuf,
    /// Sparsity for the null-space check and sample bound.
    #[arg(long)]
    pub sparsity: Option<usize>,
    /// Largest column subset tried for the spark.
    #[arg(long)]
    pub spark_budget: Option<usize>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

pub fn run(g: &Global, a: &DiagnoseArgs) -> CliResult<()> {
    let mut o = Overrides::default();
    o.set(&["sparsity"], a.sparsity)
        .set(&["spark_budget"], a.spark_budget)
        .set(&["seed"], g.seed);
    let opts: DiagnoseOptions = load_config(g.config.as_deref(), &o)?;
    let m = load_matrix(&a.matrix).context(format!("reading {}", a.matrix.display()))?;
    let report = diagnose(&m, &opts).context("diagnostics")?;
    let prov = Provenance::new("diagnose", &opts, opts.seed);
    let doc = prov.wrap(&report)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        print!("{}", report.to_table());
    }
    if let Some(out) = &g.out {
        write_json(out, &doc)?;
    }
    Ok(())
}
