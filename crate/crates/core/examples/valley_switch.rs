//! Four-pulse valley on/off/switch sequence on hBN for several dephasing
//! times.
//!
//! `cargo run --release --example valley_switch -- [grid]`

use valleyswitch::grid::KGrid;
use valleyswitch::lattice::TwoBandModel;
use valleyswitch::sbe::{PropagationConfig, Simulation};
use valleyswitch::scan::{switch_t2_sweep, SwitchSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(60), |s| s.parse())?;
    let model = TwoBandModel::hbn();
    let grid = KGrid::new(&model.lattice, n, n)?;
    let sim = Simulation::new(&model, &grid)?;
    let results = switch_t2_sweep(&sim, &SwitchSpec::hbn(), &PropagationConfig::default(), &[f64::INFINITY, 100.0, 20.0, 7.0])?;
    println!("# T2_fs  sigma after pulses 1..4  (A_v)");
    for r in &results {
        let cells: Vec<String> = r
            .stage_sigma
            .iter()
            .zip(&r.stage_asymmetry)
            .map(|(s, a)| format!("{s:+.3e} ({a:+.3})"))
            .collect();
        println!("{:>6}  {}", r.t2_fs, cells.join("  "));
    }
    Ok(())
}
