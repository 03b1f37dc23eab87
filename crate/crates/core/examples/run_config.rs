//! Driving the batch interface from code: load the annotated configuration,
//! override a few fields and run it exactly as the binary would.
//!
//! cargo run --release --example run_config -- [config.toml]

use std::path::PathBuf;

use bvwave::cli::{run, Command, RunConfig, Scenario};

fn main() -> bvwave::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("config/reference.toml"));
    let mut cfg = RunConfig::load(&path)?;
    cfg.command = Command::Pdap;
    cfg.scenario = Scenario::Custom;
    cfg.discretization.level = 4;
    cfg.output = std::env::temp_dir().join("bvwave-run-config");
    println!("effective configuration:\n{}", cfg.to_toml()?);
    let code = run(&cfg);
    println!("exit status {code}; files in {}", cfg.output.display());
    Ok(())
}
