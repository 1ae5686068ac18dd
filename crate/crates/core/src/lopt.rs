//! Lowest-order perturbation theory: first-order transition amplitudes
//! `a_cv(k) = −(i/ħ) d_cv(k)·Ẽ(ε_c − ε_v)` at fixed crystal momentum, and the
//! resulting reference σ(τ) curve for a delayed pulse pair.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::field::{PulseSpec, PulseTrain};
use crate::grid::KGrid;
use crate::lattice::{band_frame_at, BandModel, DipoleError, Vec2};
use crate::observables::{vhc, BerryMap, ObservableError, PopulationMap};
use crate::scan::{DelayScan, PulsePair};
use crate::units::HBAR_EV_FS;

/// Amplitudes `a[c][v]` for every empty band `c ≥ filled` and filled band
/// `v < filled`.
pub fn lopt_amplitude(
    model: &dyn BandModel,
    k: Vec2,
    train: &PulseTrain,
    filled: usize,
) -> Result<Vec<Vec<Complex64>>, DipoleError> {
    let f = band_frame_at(model, k)?;
    let nb = f.energies.len();
    Ok((filled..nb)
        .map(|c| {
            (0..filled)
                .map(|v| {
                    let e = train.spectrum_at(f.energies[c] - f.energies[v]);
                    let dv = f.dipoles.x[(c, v)] * e[0] + f.dipoles.y[(c, v)] * e[1];
                    Complex64::new(0.0, -1.0 / HBAR_EV_FS) * dv
                })
                .collect()
        })
        .collect())
}

/// Populations of every band to second order in the field: empty bands gain
/// `Σ_v |a_cv|²`, filled bands lose `Σ_c |a_cv|²`.
pub fn lopt_populations(
    model: &dyn BandModel,
    k: Vec2,
    train: &PulseTrain,
    filled: usize,
) -> Result<Vec<f64>, DipoleError> {
    let a = lopt_amplitude(model, k, train, filled)?;
    let nb = model.num_bands();
    let mut p = vec![0.0; nb];
    for v in 0..filled {
        p[v] = 1.0;
    }
    for (ci, row) in a.iter().enumerate() {
        for (v, amp) in row.iter().enumerate() {
            let n = amp.norm_sqr();
            p[filled + ci] += n;
            p[v] -= n;
        }
    }
    Ok(p)
}

/// Per-k population map for a whole grid.
pub fn lopt_population_map(
    model: &dyn BandModel,
    kgrid: &KGrid,
    train: &PulseTrain,
    filled: usize,
) -> Result<PopulationMap, DipoleError> {
    let rows: Vec<Result<Vec<f64>, DipoleError>> = kgrid
        .points
        .par_iter()
        .map(|&k| lopt_populations(model, k, train, filled))
        .collect();
    let nb = model.num_bands();
    let mut values = Vec::with_capacity(kgrid.len() * nb);
    for r in rows {
        values.extend(r?);
    }
    Ok(PopulationMap { nbands: nb, values })
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LoptError {
    #[error(transparent)]
    Dipole(#[from] DipoleError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
}

/// Reference curve σ_ref(τ) from LOPT populations of a delayed pulse pair.
/// No dephasing enters anywhere.
pub fn sigma_ref(
    model: &dyn BandModel,
    kgrid: &KGrid,
    berry: &BerryMap,
    pair: &PulsePair,
    taus_fs: &[f64],
    filled: usize,
    conduction: &[usize],
) -> Result<DelayScan, LoptError> {
    let nb = model.num_bands();
    // Dipoles and transition energies are τ-independent.
    let frames: Vec<_> = kgrid
        .points
        .par_iter()
        .map(|&k| band_frame_at(model, k))
        .collect::<Result<_, _>>()?;
    let mut sigma = Vec::with_capacity(taus_fs.len());
    let mut asym = Vec::with_capacity(taus_fs.len());
    for &tau in taus_fs {
        let train = pair.train(tau);
        let values: Vec<f64> = frames
            .par_iter()
            .flat_map_iter(|f| {
                let mut p = vec![0.0; nb];
                for v in 0..filled {
                    p[v] = 1.0;
                }
                for c in filled..nb {
                    for v in 0..filled {
                        let e = train.spectrum_at(f.energies[c] - f.energies[v]);
                        let dv = f.dipoles.x[(c, v)] * e[0] + f.dipoles.y[(c, v)] * e[1];
                        let n = (dv / HBAR_EV_FS).norm_sqr();
                        p[c] += n;
                        p[v] -= n;
                    }
                }
                p
            })
            .collect();
        let map = PopulationMap { nbands: nb, values };
        sigma.push(vhc(&map, berry, kgrid, conduction)?);
        asym.push(crate::observables::valley_asymmetry(&map, kgrid, conduction)?.asymmetry);
    }
    Ok(DelayScan {
        taus_fs: taus_fs.to_vec(),
        sigma,
        valley_asymmetry: asym,
        t2_fs: f64::INFINITY,
    })
}

/// Single-pulse convenience used by the examples.
pub fn single_pulse_population(model: &dyn BandModel, k: Vec2, pulse: &PulseSpec) -> Result<Vec<f64>, DipoleError> {
    lopt_populations(model, k, &PulseTrain::new(vec![pulse.clone()]), 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Polarization;
    use crate::lattice::TwoBandModel;

    #[test]
    fn zero_field_gives_zero_amplitude() {
        let m = TwoBandModel::hbn();
        let p = PulseSpec::hbn(Polarization::x(), 0.0).with_peak_field(0.0);
        let a = lopt_amplitude(&m, [0.3, 0.1], &PulseTrain::new(vec![p]), 1).unwrap();
        assert_eq!(a[0][0].norm(), 0.0);
    }

    #[test]
    fn populations_scale_quadratically() {
        let m = TwoBandModel::hbn();
        let k = [m.lattice.k_valley[0] + 0.05, m.lattice.k_valley[1] - 0.02];
        let p = PulseSpec::hbn(Polarization::x(), 0.0);
        let a = single_pulse_population(&m, k, &p).unwrap()[1];
        let b = single_pulse_population(&m, k, &p.clone().with_peak_field(0.3)).unwrap()[1];
        assert!((b / a - 9.0).abs() < 1e-9);
    }
}
