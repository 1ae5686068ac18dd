//! Unit conversions between the external eV/Å/fs/(V/Å) interface and the
//! Hartree atomic units used inside the propagator.

/// Reduced Planck constant in eV·fs.
pub const HBAR_EV_FS: f64 = 0.6582119569;
/// One atomic unit of electric field in V/Å.
pub const FIELD_AU_V_PER_ANGSTROM: f64 = 51.4220674;
/// One atomic unit of time in fs.
pub const TIME_AU_FS: f64 = 0.02418884;
/// One Hartree in eV, derived so that ħ = 1 holds exactly in atomic units.
pub const HARTREE_EV: f64 = HBAR_EV_FS / TIME_AU_FS;
/// One bohr in Å, derived from the Hartree and the field unit.
pub const BOHR_ANGSTROM: f64 = HARTREE_EV / FIELD_AU_V_PER_ANGSTROM;

pub fn ev_to_hartree(e: f64) -> f64 {
    e / HARTREE_EV
}

pub fn fs_to_au(t: f64) -> f64 {
    t / TIME_AU_FS
}

pub fn au_to_fs(t: f64) -> f64 {
    t * TIME_AU_FS
}

pub fn field_to_au(f: f64) -> f64 {
    f / FIELD_AU_V_PER_ANGSTROM
}

pub fn angstrom_to_bohr(x: f64) -> f64 {
    x / BOHR_ANGSTROM
}

/// Converts a vector potential in V·fs/Å into a crystal-momentum shift in Å⁻¹.
pub fn vector_potential_to_momentum(a: f64) -> f64 {
    a / HBAR_EV_FS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_constants_are_consistent() {
        assert!((HARTREE_EV - 27.2114).abs() < 1e-3);
        assert!((BOHR_ANGSTROM - 0.529177).abs() < 1e-5);
        // ħ = 1 in atomic units
        assert!((ev_to_hartree(HBAR_EV_FS) * fs_to_au(1.0) - 1.0).abs() < 1e-12);
    }
}
