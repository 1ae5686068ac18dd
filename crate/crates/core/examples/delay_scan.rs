//! Perpendicular pulse pair: full-propagation σ(τ) next to the LOPT
//! reference.
//!
//! `cargo run --release --example delay_scan -- [grid] [t2_fs|inf] [field] [tau_max]`

use std::time::Instant;

use valleyswitch::grid::KGrid;
use valleyswitch::lattice::TwoBandModel;
use valleyswitch::lopt::sigma_ref;
use valleyswitch::sbe::{PropagationConfig, Simulation};
use valleyswitch::scan::{delay_grid, scan_delay, PulsePair};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let n: usize = arg(0, "120").parse()?;
    let t2: f64 = arg(1, "inf").parse()?;
    let field: f64 = arg(2, "0.1").parse()?;
    let tau_max: f64 = arg(3, "12").parse()?;

    let model = TwoBandModel::hbn();
    let grid = KGrid::new(&model.lattice, n, n)?;
    let sim = Simulation::new(&model, &grid)?;
    let pair = PulsePair::hbn_perpendicular().with_peak_field(field);
    let taus = delay_grid(2.0, tau_max, 0.08);

    let start = Instant::now();
    let cfg = PropagationConfig::default().with_t2(t2);
    let full = scan_delay(&sim, &pair, &taus, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let reference = sigma_ref(&model, &grid, &sim.berry, &pair, &taus, 1, &[1])?;

    let (a, b) = (full.normalized(), reference.normalized());
    println!("# {} delays in {elapsed:.1} s", taus.len());
    println!("# tau_fs sigma sigma_norm sigma_ref_norm A_v");
    for i in 0..taus.len() {
        println!(
            "{:.2} {:+.6e} {:+.4} {:+.4} {:+.4}",
            taus[i], full.sigma[i], a[i], b[i], full.valley_asymmetry[i]
        );
    }
    Ok(())
}
