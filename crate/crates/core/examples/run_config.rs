//! Loads a run configuration, propagates its pulse train and writes σ(t) as
//! a CSV table with provenance header to stdout.
//!
//! `cargo run --release --example run_config -- [config.toml] [grid]`

use std::path::Path;

use valleyswitch::config::RunConfig;
use valleyswitch::io::{write_trace, Provenance};
use valleyswitch::sbe::Simulation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = match args.first() {
        Some(p) => RunConfig::load(Path::new(p))?,
        None => RunConfig::hbn(),
    };
    if let Some(n) = args.get(1) {
        let n = n.parse()?;
        cfg.set_grid(n, n);
    } else {
        cfg.set_grid(36, 36);
    }
    let model = cfg.build_model()?;
    let grid = cfg.kgrid(model.as_dyn())?;
    let sim = Simulation::new(model.as_dyn(), &grid)?;
    let r = sim.propagate(&cfg.train()?, &cfg.propagation())?;
    print!("{}", write_trace(&Provenance::for_config(&cfg, "time in fs, sigma in arbitrary units"), &r.trace));
    Ok(())
}
