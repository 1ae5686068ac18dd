//! Dephasing-time retrieval: delay scan with a finite T2 fitted against the
//! perturbative reference.
//!
//! `cargo run --release --example t2_retrieval -- [grid] [t2_fs]`

use valleyswitch::grid::KGrid;
use valleyswitch::lattice::TwoBandModel;
use valleyswitch::lopt::sigma_ref;
use valleyswitch::sbe::{PropagationConfig, Simulation};
use valleyswitch::scan::{delay_grid, fit_t2, scan_delay, FitOptions, PulsePair};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(Ok(48), |s| s.parse())?;
    let t2: f64 = args.get(1).map_or(Ok(10.0), |s| s.parse())?;
    let model = TwoBandModel::hbn();
    let grid = KGrid::new(&model.lattice, n, n)?;
    let sim = Simulation::new(&model, &grid)?;
    let pair = PulsePair::hbn_perpendicular();
    let taus = delay_grid(2.0, 22.0, 0.16);
    let measured = scan_delay(&sim, &pair, &taus, &PropagationConfig::default().with_t2(t2))?;
    let reference = sigma_ref(&model, &grid, &sim.berry, &pair, &taus, 1, &[1])?;
    let fit = fit_t2(&measured, &reference, &FitOptions::default())?;
    println!(
        "true T2 = {t2} fs, fitted T2 = {:.3} fs over [{:.2}, {:.2}] fs, residual {:.2e}",
        fit.t2_fs, fit.window_fs.0, fit.window_fs.1, fit.residual_rms
    );
    Ok(())
}
