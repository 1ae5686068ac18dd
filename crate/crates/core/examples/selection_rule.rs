//! Single circular and linear pulses on hBN: valley selection rule.
//!
//! `cargo run --release --example selection_rule -- [grid]`

use std::time::Instant;

use valleyswitch::field::{Polarization, PulseSpec, PulseTrain};
use valleyswitch::grid::KGrid;
use valleyswitch::lattice::TwoBandModel;
use valleyswitch::observables::valley_asymmetry;
use valleyswitch::sbe::{PropagationConfig, Simulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(120), |s| s.parse())?;
    let model = TwoBandModel::hbn();
    let grid = KGrid::new(&model.lattice, n, n)?;
    let sim = Simulation::new(&model, &grid)?;
    let cfg = PropagationConfig::default();
    for (name, pol) in [
        ("sigma-", Polarization::SigmaMinus),
        ("sigma+", Polarization::SigmaPlus),
        ("linear y", Polarization::y()),
    ] {
        let start = Instant::now();
        let train = PulseTrain::new(vec![PulseSpec::hbn(pol, 0.0)]);
        let r = sim.propagate(&train, &cfg)?;
        let a = valley_asymmetry(&r.final_populations, &grid, &[1])?;
        println!(
            "{name:9} sigma = {:+.4e}  A_v = {:+.4}  n_cond = {:.4e}  ({:.1} s)",
            r.sigma_final,
            a.asymmetry,
            a.n_k + a.n_kprime,
            start.elapsed().as_secs_f64()
        );
        let d = r.diagnostics;
        println!(
            "          hermiticity {:.1e}  trace drift {:.1e}  eigenvalues [{:.2e}, {:.6}]",
            d.max_hermiticity_defect, d.max_trace_drift, d.min_eigenvalue, d.max_eigenvalue
        );
    }
    Ok(())
}
