//! First-order perturbative populations: the reference σ_ref(τ) for the
//! perpendicular pulse pair and the valley selection of a single circular
//! pulse.
//!
//! `cargo run --release --example lopt_reference -- [grid]`

use valleyswitch::field::{Polarization, PulseSpec, PulseTrain};
use valleyswitch::grid::KGrid;
use valleyswitch::lattice::TwoBandModel;
use valleyswitch::lopt::{lopt_population_map, sigma_ref};
use valleyswitch::observables::{berry_curvature, valley_asymmetry};
use valleyswitch::scan::{delay_grid, PulsePair};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(96), |s| s.parse())?;
    let model = TwoBandModel::hbn();
    let grid = KGrid::new(&model.lattice, n, n)?;
    let berry = berry_curvature(&model, &grid)?;
    let circ = PulseTrain::new(vec![PulseSpec::hbn(Polarization::SigmaMinus, 0.0)]);
    let map = lopt_population_map(&model, &grid, &circ, 1)?;
    println!("sigma- pulse: A_v = {:+.4}", valley_asymmetry(&map, &grid, &[1])?.asymmetry);
    let taus = delay_grid(2.0, 6.0, 0.08);
    let r = sigma_ref(&model, &grid, &berry, &PulsePair::hbn_perpendicular(), &taus, 1, &[1])?;
    println!("# tau_fs sigma_ref A_v");
    for i in 0..taus.len() {
        println!("{:.2} {:+.5e} {:+.4}", taus[i], r.sigma[i], r.valley_asymmetry[i]);
    }
    Ok(())
}
