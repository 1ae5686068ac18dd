//! Plaquette Berry curvature and Chern numbers: trivial hBN and a
//! topological Haldane model.
//!
//! `cargo run --release --example berry_topology -- [grid]`

use valleyswitch::fixtures::haldane;
use valleyswitch::grid::KGrid;
use valleyswitch::lattice::{BandModel, TwoBandModel};
use valleyswitch::observables::berry_curvature;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(48), |s| s.parse())?;
    let hbn = TwoBandModel::hbn();
    let grid = KGrid::new(&hbn.lattice, n, n)?;
    let b = berry_curvature(&hbn, &grid)?;
    let (kmax, omax) = (0..grid.len())
        .map(|k| (k, b.curvature.get(k, 1)))
        .fold((0, 0.0f64), |a, x| if x.1.abs() > a.1.abs() { x } else { a });
    println!("hBN Chern numbers {:?}", b.chern);
    println!(
        "hBN conduction curvature peaks at ({:.3}, {:.3}) with {omax:+.4} angstrom^2",
        grid.points[kmax][0], grid.points[kmax][1]
    );
    let h = haldane(1.0, 0.2, std::f64::consts::FRAC_PI_2, 0.1);
    let hg = KGrid::new(h.lattice(), n, n)?;
    println!("Haldane Chern numbers {:?}", berry_curvature(&h, &hg)?.chern);
    Ok(())
}
