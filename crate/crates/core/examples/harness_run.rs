//! Writes a demo workspace and runs the full report over it.
//!
//! `cargo run --example harness_run -- [dir]`

use std::path::PathBuf;

use plauskit::harness::{load_config, run, Command};
use plauskit::synth::write_demo_workspace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("plauskit-demo"));
    let ws = write_demo_workspace(&dir, 7)?;
    println!("workspace: {}", ws.root.display());
    let cfg = load_config(&ws.config, &[], None, None)?;
    println!("{}", run(Command::Validate, cfg.clone())?);
    println!("{}", run(Command::Report, cfg.clone())?);
    let results = std::fs::read_to_string(cfg.config.out.join("results.tsv"))?;
    for line in results.lines().filter(|l| l.starts_with("accuracy:")) {
        println!("{line}");
    }
    Ok(())
}
