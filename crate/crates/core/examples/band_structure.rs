//! hBN bands along Γ–K–M–Γ with the direct gap and circular dichroism at
//! the valleys.
//!
//! `cargo run --release --example band_structure`

use valleyswitch::lattice::{band_path, circular_dominance, TwoBandModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = TwoBandModel::hbn();
    let pts = model.lattice.high_symmetry_points();
    let path = band_path(&model, &[pts[0].1, pts[1].1, pts[2].1, pts[0].1], 40);
    println!("# distance_inv_angstrom e_v_ev e_c_ev");
    for p in path.iter().step_by(4) {
        println!("{:.4} {:+.4} {:+.4}", p.distance, p.energies[0], p.energies[1]);
    }
    let (gap, at) = path
        .iter()
        .map(|p| (p.energies[1] - p.energies[0], p.k))
        .fold((f64::INFINITY, [0.0; 2]), |a, b| if b.0 < a.0 { b } else { a });
    println!("minimum gap {gap:.6} eV at ({:.4}, {:.4}) 1/angstrom", at[0], at[1]);
    for (name, k) in [("K", model.lattice.k_valley), ("K'", model.lattice.k_prime)] {
        println!("circular dominance at {name}: {:.3e}", circular_dominance(&model, k, 0, 1)?);
    }
    Ok(())
}
