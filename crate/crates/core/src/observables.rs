//! Berry curvature, populations, valley asymmetry and the valley Hall
//! conductivity `σ ∝ Σₙ ∫ fₙ(k) Ωₙ(k) dk`.
//!
//! All reductions over the k-grid go through [`pairwise_sum`], whose
//! summation tree is mirror-symmetric: reversing the input reverses the tree,
//! so a population mirrored through `k → −k` (which reverses the flat grid
//! index) yields exactly `−σ` when the curvature is exactly odd.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{KGrid, Valley};
use crate::lattice::{eigensystem_at, BandModel, CMatrix};

/// Smallest admissible link-overlap magnitude in the plaquette construction.
pub const LINK_OVERLAP_MIN: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("link overlap {overlap:.3e} below threshold for band {band} in cell ({i}, {j}); a band crossing passes through the cell")]
    PlaquetteSingular { band: usize, i: usize, j: usize, overlap: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Sum with a fixed, mirror-symmetric pairwise tree.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    match x.len() {
        0 => 0.0,
        1 => x[0],
        2 => x[0] + x[1],
        n if n % 2 == 0 => pairwise_sum(&x[..n / 2]) + pairwise_sum(&x[n / 2..]),
        n => (pairwise_sum(&x[..n / 2]) + pairwise_sum(&x[n / 2 + 1..])) + x[n / 2],
    }
}

/// Per-k, per-band scalar field stored flat as `values[k·nbands + band]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMap {
    pub nbands: usize,
    pub values: Vec<f64>,
}

impl PopulationMap {
    pub fn zeros(nk: usize, nbands: usize) -> Self {
        PopulationMap {
            nbands,
            values: vec![0.0; nk * nbands],
        }
    }

    pub fn nk(&self) -> usize {
        if self.nbands == 0 {
            0
        } else {
            self.values.len() / self.nbands
        }
    }

    pub fn get(&self, k: usize, band: usize) -> f64 {
        self.values[k * self.nbands + band]
    }

    pub fn set(&mut self, k: usize, band: usize, v: f64) {
        self.values[k * self.nbands + band] = v;
    }

    /// Population at `−k` in place of `k`.
    pub fn mirrored(&self) -> Self {
        let nk = self.nk();
        let mut out = self.clone();
        for k in 0..nk {
            for b in 0..self.nbands {
                out.set(k, b, self.get(nk - 1 - k, b));
            }
        }
        out
    }
}

/// Berry curvature per k-point and band (Å²) plus per-band Chern numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct BerryMap {
    pub curvature: PopulationMap,
    pub chern: Vec<f64>,
}

/// Gauge-invariant plaquette (link-variable) Berry curvature.
///
/// The Berry flux through each grid cell is the phase of the product of the
/// four normalized link overlaps around it. The curvature at a grid point is
/// the mean flux of the four cells sharing that point divided by the cell
/// area, which keeps the map centred on the grid points.
pub fn berry_curvature(model: &dyn BandModel, kgrid: &KGrid) -> Result<BerryMap, ObservableError> {
    let nb = model.num_bands();
    let states: Vec<CMatrix> = kgrid
        .points
        .par_iter()
        .map(|&k| eigensystem_at(model, k).states)
        .collect();
    let (n1, n2) = (kgrid.n1, kgrid.n2);
    let (d1, d2) = kgrid.steps();
    let orientation = (d1[0] * d2[1] - d1[1] * d2[0]).signum();

    // Bloch phases of the orbital centres, e^{−iΔk·τ}, for the four link
    // directions +Δk₁, +Δk₂, −Δk₁, −Δk₂.
    let centers = model.orbital_centers().unwrap_or_else(|| vec![[0.0, 0.0]; nb]);
    let phases: Vec<Vec<Complex64>> = [d1, d2, [-d1[0], -d1[1]], [-d2[0], -d2[1]]]
        .iter()
        .map(|dk| {
            centers
                .iter()
                .map(|t| Complex64::from_polar(1.0, -(dk[0] * t[0] + dk[1] * t[1])))
                .collect()
        })
        .collect();
    let link = |a: usize, b: usize, dir: usize, band: usize| -> Complex64 {
        let (ua, ub) = (states[a].column(band), states[b].column(band));
        (0..nb).map(|s| ua[s].conj() * ub[s] * phases[dir][s]).sum()
    };
    // flux[cell·nb + band]
    let flux: Vec<Result<Vec<f64>, ObservableError>> = (0..n1 * n2)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / n2, cell % n2);
            let c = [
                kgrid.index(i, j),
                kgrid.index(i + 1, j),
                kgrid.index(i + 1, j + 1),
                kgrid.index(i, j + 1),
            ];
            (0..nb)
                .map(|band| {
                    let mut prod = Complex64::new(1.0, 0.0);
                    for e in 0..4 {
                        let u = link(c[e], c[(e + 1) % 4], e, band);
                        let m = u.norm();
                        if m < LINK_OVERLAP_MIN {
                            return Err(ObservableError::PlaquetteSingular { band, i, j, overlap: m });
                        }
                        prod *= u / m;
                    }
                    Ok(orientation * prod.arg())
                })
                .collect()
        })
        .collect();
    let flux: Vec<Vec<f64>> = flux.into_iter().collect::<Result<_, _>>()?;

    let chern = (0..nb)
        .map(|b| {
            let per_cell: Vec<f64> = flux.iter().map(|f| f[b]).collect();
            pairwise_sum(&per_cell) / (2.0 * PI)
        })
        .collect();

    let mut curvature = PopulationMap::zeros(kgrid.len(), nb);
    let area = kgrid.weight;
    for i in 0..n1 {
        for j in 0..n2 {
            let cells = [
                kgrid.index(i, j),
                kgrid.index(i + n1 - 1, j),
                kgrid.index(i + n1 - 1, j + n2 - 1),
                kgrid.index(i, j + n2 - 1),
            ];
            for b in 0..nb {
                let s = (flux[cells[0]][b] + flux[cells[2]][b]) + (flux[cells[1]][b] + flux[cells[3]][b]);
                curvature.set(kgrid.index(i, j), b, 0.25 * s / area);
            }
        }
    }
    Ok(BerryMap { curvature, chern })
}

/// Valley Hall conductivity (arbitrary units, proportionality constant 1):
/// `Σ_{n∈bands} Σ_k fₙ(k) Ωₙ(k) w_k`.
pub fn vhc(
    populations: &PopulationMap,
    berry: &BerryMap,
    kgrid: &KGrid,
    bands: &[usize],
) -> Result<f64, ObservableError> {
    check_shape(populations, kgrid)?;
    check_shape(&berry.curvature, kgrid)?;
    if let Some(&b) = bands
        .iter()
        .find(|&&b| b >= populations.nbands || b >= berry.curvature.nbands)
    {
        return Err(ObservableError::ShapeMismatch(format!("band {b} not present")));
    }
    let terms: Vec<f64> = (0..kgrid.len())
        .map(|k| {
            bands
                .iter()
                .map(|&b| populations.get(k, b) * berry.curvature.get(k, b))
                .sum::<f64>()
                * kgrid.weight
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

fn check_shape(map: &PopulationMap, kgrid: &KGrid) -> Result<(), ObservableError> {
    if map.nk() != kgrid.len() || map.values.len() != map.nk() * map.nbands {
        return Err(ObservableError::ShapeMismatch(format!(
            "map holds {} values for {} bands; grid has {} points",
            map.values.len(),
            map.nbands,
            kgrid.len()
        )));
    }
    Ok(())
}

/// Integrated populations of the two valley halves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValleyAsymmetry {
    pub n_k: f64,
    pub n_kprime: f64,
    /// `(n_K − n_K′)/(n_K + n_K′)`, zero when there is no population.
    pub asymmetry: f64,
    /// Set when the total population vanishes.
    pub degenerate: bool,
}

pub fn valley_asymmetry(
    populations: &PopulationMap,
    kgrid: &KGrid,
    bands: &[usize],
) -> Result<ValleyAsymmetry, ObservableError> {
    check_shape(populations, kgrid)?;
    let mut halves = (Vec::new(), Vec::new());
    for k in 0..kgrid.len() {
        let f: f64 = bands.iter().map(|&b| populations.get(k, b)).sum::<f64>() * kgrid.weight;
        match kgrid.valleys[k] {
            Valley::K => halves.0.push(f),
            Valley::KPrime => halves.1.push(f),
        }
    }
    let (n_k, n_kprime) = (pairwise_sum(&halves.0), pairwise_sum(&halves.1));
    let total = n_k + n_kprime;
    let degenerate = total.abs() <= f64::MIN_POSITIVE;
    Ok(ValleyAsymmetry {
        n_k,
        n_kprime,
        asymmetry: if degenerate { 0.0 } else { (n_k - n_kprime) / total },
        degenerate,
    })
}

/// σ(t) series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VhcTrace {
    pub times_fs: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Occupations as propagated.
    Raw,
    /// Divided by the largest exported value.
    GlobalMax,
    /// Divided at each k by the summed occupation of all bands there.
    PerPoint,
}

/// Applies a normalization; `PerPoint` expects a map holding every band.
pub fn normalize(map: &PopulationMap, mode: Normalization) -> PopulationMap {
    let mut out = map.clone();
    match mode {
        Normalization::Raw => {}
        Normalization::GlobalMax => {
            let m = map.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if m > 0.0 {
                out.values.iter_mut().for_each(|v| *v /= m);
            }
        }
        Normalization::PerPoint => {
            for k in 0..map.nk() {
                let s: f64 = (0..map.nbands).map(|b| map.get(k, b)).sum();
                if s.abs() > 0.0 {
                    for b in 0..map.nbands {
                        out.set(k, b, map.get(k, b) / s);
                    }
                }
            }
        }
    }
    out
}

/// Keeps only the listed bands, in the given order.
pub fn select_bands(map: &PopulationMap, bands: &[usize]) -> PopulationMap {
    let nk = map.nk();
    let mut out = PopulationMap::zeros(nk, bands.len());
    for k in 0..nk {
        for (i, &b) in bands.iter().enumerate() {
            out.set(k, i, map.get(k, b));
        }
    }
    out
}
