//! Density-matrix (semiconductor Bloch) equations in the moving band basis.
//!
//! Each k-point evolves independently under
//! `dρ/dt = −(i/ħ)[diag ε(κ) + E(t)·d(κ), ρ] − ρ_offdiag/T₂` with
//! `κ(t) = k + A(t)/ħ`. Inside pulse windows the equations are integrated
//! with fixed-step RK4; between windows the field vanishes and the free
//! evolution is applied in closed form. The Berry curvature used for the
//! on-the-fly σ(t) trace is evaluated at the unshifted grid point.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::field::PulseTrain;
use crate::grid::{KGrid, Valley};
use crate::lattice::{band_frame_at, band_frame_from_parts, eigensystem_at, BandModel, CMatrix, DipoleError, TwoBandModel, Vec2};
use crate::wannier::WannierModel;
use crate::observables::{vhc, BerryMap, ObservableError, PopulationMap, VhcTrace};
use crate::units::{angstrom_to_bohr, au_to_fs, ev_to_hartree, field_to_au, fs_to_au, vector_potential_to_momentum, HARTREE_EV};

/// Default RK4 step in atomic time units (≈4.35 as).
pub const DEFAULT_DT_AU: f64 = 0.18;
/// Largest admissible phase advance `dt·max(Δε)/ħ` per step (rad).
pub const RESOLUTION_LIMIT_RAD: f64 = 0.1;
/// Any `|ρ_nm|` above this aborts the run.
pub const BLOWUP_THRESHOLD: f64 = 10.0;
/// k-points per work unit. Fixed so that reductions do not depend on the
/// number of workers.
const CHUNK: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("filling of {filled} bands intersects a band: highest filled level {max_filled:.6} eV ≥ lowest empty level {min_empty:.6} eV")]
    FermiLevel { filled: usize, max_filled: f64, min_empty: f64 },
    #[error("|ρ| = {magnitude:.3e} at k-point {k_index} (k = [{kx:.6}, {ky:.6}]), t = {t_fs:.4} fs; reduce dt")]
    StepBlowup { k_index: usize, kx: f64, ky: f64, t_fs: f64, magnitude: f64 },
    #[error("dt = {dt_au} a.u. advances the fastest phase by {phase:.4} rad per step (limit {limit}); use dt ≤ {max_dt_au:.4} a.u.")]
    UnderResolved { dt_au: f64, phase: f64, limit: f64, max_dt_au: f64 },
    #[error("invalid propagation config: {0}")]
    Config(String),
    #[error(transparent)]
    Dipole(#[from] DipoleError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig {
    /// RK4 step (atomic time units).
    pub dt_au: f64,
    /// Dephasing time (fs); `f64::INFINITY` disables dephasing.
    pub t2_fs: f64,
    /// Start time (fs); defaults to the start of the first pulse window.
    pub t_start_fs: Option<f64>,
    /// End time (fs); defaults to the end of the last pulse window.
    pub t_end_fs: Option<f64>,
    /// Observables are recorded every `record_stride` steps and at the end.
    pub record_stride: usize,
    /// Number of filled (valence) bands.
    pub filled_bands: usize,
    /// Bands whose electron populations enter σ; defaults to all empty bands.
    pub conduction_bands: Option<Vec<usize>>,
    /// Adds valence-hole terms `(f_v − 1)Ω_v` to σ.
    pub include_holes: bool,
    /// Times (fs) at which per-k populations are stored.
    pub snapshot_times_fs: Vec<f64>,
    /// Keep the full final density matrix of every k-point.
    pub keep_final_state: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            dt_au: DEFAULT_DT_AU,
            t2_fs: f64::INFINITY,
            t_start_fs: None,
            t_end_fs: None,
            record_stride: 10,
            filled_bands: 1,
            conduction_bands: None,
            include_holes: false,
            snapshot_times_fs: Vec::new(),
            keep_final_state: false,
        }
    }
}

impl PropagationConfig {
    pub fn with_t2(mut self, t2_fs: f64) -> Self {
        self.t2_fs = t2_fs;
        self
    }

    pub fn with_dt(mut self, dt_au: f64) -> Self {
        self.dt_au = dt_au;
        self
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        let bad = |m: &str| Err(PropagationError::Config(m.to_string()));
        if !(self.dt_au > 0.0 && self.dt_au.is_finite()) {
            return bad("dt_au must be positive and finite");
        }
        if !(self.t2_fs > 0.0) {
            return bad("t2_fs must be positive (use inf for no dephasing)");
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1");
        }
        if let (Some(a), Some(b)) = (self.t_start_fs, self.t_end_fs) {
            if !(b >= a) {
                return bad("t_end_fs must not precede t_start_fs");
            }
        }
        Ok(())
    }

    fn gamma_au(&self) -> f64 {
        if self.t2_fs.is_finite() {
            1.0 / fs_to_au(self.t2_fs)
        } else {
            0.0
        }
    }

    pub fn conduction(&self, nbands: usize) -> Vec<usize> {
        self.conduction_bands
            .clone()
            .unwrap_or_else(|| (self.filled_bands..nbands).collect())
    }
}

/// Density matrices of all k-points in the moving band basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrixGrid {
    pub t_fs: f64,
    pub rho: Vec<CMatrix>,
}

impl DensityMatrixGrid {
    pub fn populations(&self) -> PopulationMap {
        let nb = self.rho.first().map_or(0, |r| r.nrows());
        let mut out = PopulationMap::zeros(self.rho.len(), nb);
        for (k, r) in self.rho.iter().enumerate() {
            for b in 0..nb {
                out.set(k, b, r[(b, b)].re);
            }
        }
        out
    }
}

/// Band-edge summary used for the Fermi-level and resolution checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandExtent {
    pub max_filled_ev: f64,
    pub min_empty_ev: f64,
    /// Largest `ε_max − ε_min` over the grid (eV).
    pub max_spread_ev: f64,
}

pub fn band_extent(model: &dyn BandModel, kgrid: &KGrid, filled: usize) -> BandExtent {
    let nb = model.num_bands();
    let e: Vec<Vec<f64>> = kgrid
        .points
        .par_iter()
        .map(|&k| eigensystem_at(model, k).energies)
        .collect();
    let mut out = BandExtent {
        max_filled_ev: f64::NEG_INFINITY,
        min_empty_ev: f64::INFINITY,
        max_spread_ev: 0.0,
    };
    for en in &e {
        if filled > 0 {
            out.max_filled_ev = out.max_filled_ev.max(en[filled - 1]);
        }
        if filled < nb {
            out.min_empty_ev = out.min_empty_ev.min(en[filled]);
        }
        out.max_spread_ev = out.max_spread_ev.max(en[nb - 1] - en[0]);
    }
    out
}

/// Ground state: `ρ = diag(1,…,1,0,…,0)` with `filled` ones at every k.
pub fn initialize_ground_state(
    model: &dyn BandModel,
    kgrid: &KGrid,
    filled: usize,
) -> Result<DensityMatrixGrid, PropagationError> {
    let nb = model.num_bands();
    if filled > nb {
        return Err(PropagationError::Config(format!("{filled} filled bands requested, model has {nb}")));
    }
    let ext = band_extent(model, kgrid, filled);
    if filled > 0 && filled < nb && ext.max_filled_ev >= ext.min_empty_ev {
        return Err(PropagationError::FermiLevel {
            filled,
            max_filled: ext.max_filled_ev,
            min_empty: ext.min_empty_ev,
        });
    }
    let mut g = CMatrix::zeros(nb, nb);
    for b in 0..filled {
        g[(b, b)] = Complex64::new(1.0, 0.0);
    }
    Ok(DensityMatrixGrid {
        t_fs: 0.0,
        rho: vec![g; kgrid.len()],
    })
}

fn check_resolution(dt_au: f64, max_spread_ev: f64) -> Result<(), PropagationError> {
    let phase = dt_au * ev_to_hartree(max_spread_ev);
    if phase >= RESOLUTION_LIMIT_RAD {
        return Err(PropagationError::UnderResolved {
            dt_au,
            phase,
            limit: RESOLUTION_LIMIT_RAD,
            max_dt_au: RESOLUTION_LIMIT_RAD / ev_to_hartree(max_spread_ev),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// per-k kernels

trait Kernel: Sync {
    type State: Clone + Send + Sync;
    type Frame: Clone;
    /// Per-k data independent of time.
    type KData;
    /// Per-time-sample data shared by all k-points.
    type TData: Send + Sync;

    fn nbands(&self) -> usize;
    fn kdata(&self, k: Vec2) -> Self::KData;
    /// `shift` is the momentum shift `A/ħ` (Å⁻¹).
    fn tdata(&self, shift: Vec2) -> Self::TData;
    /// Band frame at `κ = k + shift`.
    fn frame(&self, k: &Self::KData, t: &Self::TData) -> Result<Self::Frame, PropagationError>;
    fn rhs(&self, f: &Self::Frame, e: [f64; 2], gamma: f64, rho: &Self::State) -> Self::State;
    /// `y + a·x`
    fn axpy(&self, y: &Self::State, a: f64, x: &Self::State) -> Self::State;
    /// Exact field-free evolution over `dt` (a.u.).
    fn free(&self, f: &Self::Frame, gamma: f64, dt: f64, rho: &mut Self::State);
    /// Re-symmetrizes and returns the pre-symmetrization defect.
    fn hermitize(&self, rho: &mut Self::State) -> f64;
    fn max_abs(&self, rho: &Self::State) -> f64;
    fn populations(&self, rho: &Self::State, out: &mut [f64]);
    fn eig_bounds(&self, rho: &Self::State) -> (f64, f64);
    fn to_matrix(&self, rho: &Self::State) -> CMatrix;
    fn from_matrix(&self, m: &CMatrix) -> Self::State;
}

/// Closed-form two-band kernel. State is `[ρ_vv, ρ_cc, Re ρ_cv, Im ρ_cv]`.
struct TwoBandKernel {
    hop: f64,
    half_gap: f64,
    r: [Vec2; 2],
    /// position of the second sublattice (Å)
    tau: Vec2,
}

impl TwoBandKernel {
    fn new(m: &TwoBandModel) -> Self {
        let d0 = m.bonds[0];
        let disp = |i: usize| [m.bonds[i][0] - d0[0], m.bonds[i][1] - d0[1]];
        TwoBandKernel {
            hop: m.hopping_ev,
            half_gap: 0.5 * m.gap_ev,
            r: [disp(1), disp(2)],
            tau: d0,
        }
    }
}

#[derive(Clone, Copy)]
struct TwoFrame {
    /// `ε_c − ε_v` (Hartree)
    gap: f64,
    /// `d_cv` (bohr)
    d: [Complex64; 2],
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

impl Kernel for TwoBandKernel {
    type State = [f64; 4];
    type Frame = TwoFrame;
    /// Bloch phases `e^{ik·r}` of the two bond displacements; the shifted
    /// phases are products of per-k and per-time factors.
    type KData = [Complex64; 2];
    type TData = [Complex64; 2];

    fn nbands(&self) -> usize {
        2
    }

    fn kdata(&self, k: Vec2) -> [Complex64; 2] {
        self.r.map(|r| Complex64::from_polar(1.0, k[0] * r[0] + k[1] * r[1]))
    }

    fn tdata(&self, s: Vec2) -> [Complex64; 2] {
        self.kdata(s)
    }

    #[inline]
    fn frame(&self, kd: &[Complex64; 2], td: &[Complex64; 2]) -> Result<TwoFrame, PropagationError> {
        let q1 = kd[0] * td[0];
        let q2 = kd[1] * td[1];
        let t = self.hop;
        let f = (Complex64::new(1.0, 0.0) + q1 + q2) * t;
        let p1 = I * q1 * t;
        let p2 = I * q2 * t;
        let grad = [p1 * self.r[0][0] + p2 * self.r[1][0], p1 * self.r[0][1] + p2 * self.r[1][1]];
        let h = self.half_gap;
        let e = (h * h + f.norm_sqr()).sqrt();
        let eh = e + h;
        // |f|² + (e + h)² = 2e(e + h)
        let inv_e = 1.0 / e;
        let bohr = angstrom_to_bohr(1.0);
        let scale = -0.25 * bohr * inv_e * inv_e / eh;
        let site = f * (0.5 * bohr * inv_e);
        let f2 = f * f;
        let d = [0, 1].map(|i| {
            let g = grad[i];
            I * (g * (eh * eh) - f2 * g.conj()) * scale + site * self.tau[i]
        });
        Ok(TwoFrame {
            gap: 2.0 * e * (1.0 / HARTREE_EV),
            d,
        })
    }

    #[inline]
    fn rhs(&self, f: &TwoFrame, e: [f64; 2], gamma: f64, r: &[f64; 4]) -> [f64; 4] {
        let [a, d, pr, pi] = *r;
        // H = [[−g/2, w*], [w, g/2]] with w = E·d_cv, ρ_cv = p
        let wr = f.d[0].re * e[0] + f.d[1].re * e[1];
        let wi = f.d[0].im * e[0] + f.d[1].im * e[1];
        let g = f.gap;
        // 2 Im(w p*)
        let flow = 2.0 * (wi * pr - wr * pi);
        let n = a - d;
        // ṗ = −i(g p + w (a − d)) − γ p
        [
            -flow,
            flow,
            g * pi + wi * n - gamma * pr,
            -g * pr - wr * n - gamma * pi,
        ]
    }

    #[inline]
    fn axpy(&self, y: &[f64; 4], a: f64, x: &[f64; 4]) -> [f64; 4] {
        [y[0] + x[0] * a, y[1] + x[1] * a, y[2] + x[2] * a, y[3] + x[3] * a]
    }

    fn free(&self, f: &TwoFrame, gamma: f64, dt: f64, r: &mut [f64; 4]) {
        let decay = (-gamma * dt).exp();
        let p = Complex64::new(r[2], r[3]) * Complex64::from_polar(decay, -f.gap * dt);
        r[2] = p.re;
        r[3] = p.im;
    }

    /// The real parametrization is Hermitian by construction.
    #[inline]
    fn hermitize(&self, _: &mut [f64; 4]) -> f64 {
        0.0
    }

    #[inline]
    fn max_abs(&self, r: &[f64; 4]) -> f64 {
        r[0].abs().max(r[1].abs()).max((r[2] * r[2] + r[3] * r[3]).sqrt())
    }

    fn populations(&self, r: &[f64; 4], out: &mut [f64]) {
        out[0] = r[0];
        out[1] = r[1];
    }

    fn eig_bounds(&self, r: &[f64; 4]) -> (f64, f64) {
        let mean = 0.5 * (r[0] + r[1]);
        let half = 0.5 * (r[0] - r[1]);
        let rad = (half * half + r[2] * r[2] + r[3] * r[3]).sqrt();
        (mean - rad, mean + rad)
    }

    fn to_matrix(&self, r: &[f64; 4]) -> CMatrix {
        let p = Complex64::new(r[2], r[3]);
        CMatrix::from_row_slice(2, 2, &[Complex64::new(r[0], 0.0), p.conj(), p, Complex64::new(r[1], 0.0)])
    }

    fn from_matrix(&self, m: &CMatrix) -> [f64; 4] {
        let p = 0.5 * (m[(1, 0)] + m[(0, 1)].conj());
        [m[(0, 0)].re, m[(1, 1)].re, p.re, p.im]
    }
}

/// Dense kernel for arbitrary band counts.
struct GeneralKernel<'a> {
    model: &'a dyn BandModel,
    /// Real-space blocks and their lattice vectors, when available.
    wannier: Option<(&'a WannierModel, Vec<Vec2>)>,
}

impl<'a> GeneralKernel<'a> {
    fn new(model: &'a dyn BandModel) -> Self {
        GeneralKernel {
            model,
            wannier: model.as_wannier().map(|w| (w, w.r_vectors())),
        }
    }
}

/// Crystal momentum plus per-R phase factors `e^{ik·R}` (empty without
/// real-space blocks).
struct Phased {
    k: Vec2,
    phases: Vec<Complex64>,
}

#[derive(Clone)]
struct GeneralFrame {
    /// Hartree
    energies: Vec<f64>,
    /// bohr
    dx: CMatrix,
    dy: CMatrix,
}

impl Kernel for GeneralKernel<'_> {
    type State = CMatrix;
    type Frame = GeneralFrame;
    type KData = Phased;
    type TData = Phased;

    fn nbands(&self) -> usize {
        self.model.num_bands()
    }

    fn kdata(&self, k: Vec2) -> Phased {
        let phases = match &self.wannier {
            Some((w, rvec)) => rvec
                .iter()
                .zip(&w.degeneracies)
                .map(|(r, &d)| Complex64::from_polar(1.0 / d as f64, k[0] * r[0] + k[1] * r[1]))
                .collect(),
            None => Vec::new(),
        };
        Phased { k, phases }
    }

    fn tdata(&self, shift: Vec2) -> Phased {
        let phases = match &self.wannier {
            Some((_, rvec)) => rvec
                .iter()
                .map(|r| Complex64::from_polar(1.0, shift[0] * r[0] + shift[1] * r[1]))
                .collect(),
            None => Vec::new(),
        };
        Phased { k: shift, phases }
    }

    fn frame(&self, k: &Phased, s: &Phased) -> Result<GeneralFrame, PropagationError> {
        let kappa = [k.k[0] + s.k[0], k.k[1] + s.k[1]];
        let bf = match &self.wannier {
            Some((w, rvec)) => {
                let phases: Vec<Complex64> = k.phases.iter().zip(&s.phases).map(|(a, b)| a * b).collect();
                let (h, grad, pos) = w.blocks_from_phases(&phases, rvec);
                band_frame_from_parts(kappa, &h, &grad, pos.as_ref())?
            }
            None => band_frame_at(self.model, kappa)?,
        };
        let s = Complex64::new(angstrom_to_bohr(1.0), 0.0);
        Ok(GeneralFrame {
            energies: bf.energies.iter().map(|&e| ev_to_hartree(e)).collect(),
            dx: bf.dipoles.x * s,
            dy: bf.dipoles.y * s,
        })
    }

    fn rhs(&self, f: &GeneralFrame, e: [f64; 2], gamma: f64, rho: &CMatrix) -> CMatrix {
        let n = rho.nrows();
        let mut h = &f.dx * Complex64::new(e[0], 0.0) + &f.dy * Complex64::new(e[1], 0.0);
        for i in 0..n {
            h[(i, i)] += f.energies[i];
        }
        let c = &h * rho - rho * &h;
        let mut out = c * (-I);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    out[(i, j)] -= rho[(i, j)] * gamma;
                }
            }
        }
        out
    }

    fn axpy(&self, y: &CMatrix, a: f64, x: &CMatrix) -> CMatrix {
        y + x * Complex64::new(a, 0.0)
    }

    fn free(&self, f: &GeneralFrame, gamma: f64, dt: f64, rho: &mut CMatrix) {
        let n = rho.nrows();
        let decay = (-gamma * dt).exp();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    rho[(i, j)] *= Complex64::from_polar(decay, -(f.energies[i] - f.energies[j]) * dt);
                }
            }
        }
    }

    fn hermitize(&self, rho: &mut CMatrix) -> f64 {
        let adj = rho.adjoint();
        let defect = (&*rho - &adj).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        *rho = (&*rho + adj) * Complex64::new(0.5, 0.0);
        defect
    }

    fn max_abs(&self, rho: &CMatrix) -> f64 {
        rho.iter().fold(0.0f64, |a, z| a.max(z.norm()))
    }

    fn populations(&self, rho: &CMatrix, out: &mut [f64]) {
        for (b, o) in out.iter_mut().enumerate() {
            *o = rho[(b, b)].re;
        }
    }

    fn eig_bounds(&self, rho: &CMatrix) -> (f64, f64) {
        let ev = SymmetricEigen::new(rho.clone()).eigenvalues;
        ev.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    fn to_matrix(&self, rho: &CMatrix) -> CMatrix {
        rho.clone()
    }

    fn from_matrix(&self, m: &CMatrix) -> CMatrix {
        m.clone()
    }
}

#[inline]
fn rk4<K: Kernel>(
    kern: &K,
    f0: &K::Frame,
    fm: &K::Frame,
    f1: &K::Frame,
    e: [[f64; 2]; 3],
    gamma: f64,
    h: f64,
    rho: &K::State,
) -> K::State {
    let k1 = kern.rhs(f0, e[0], gamma, rho);
    let k2 = kern.rhs(fm, e[1], gamma, &kern.axpy(rho, 0.5 * h, &k1));
    let k3 = kern.rhs(fm, e[1], gamma, &kern.axpy(rho, 0.5 * h, &k2));
    let k4 = kern.rhs(f1, e[2], gamma, &kern.axpy(rho, h, &k3));
    let s = kern.axpy(&kern.axpy(&k1, 2.0, &k2), 2.0, &k3);
    kern.axpy(rho, h / 6.0, &kern.axpy(&s, 1.0, &k4))
}

/// One RK4 step of a single k-point from `t_fs` to `t_fs + dt`, followed by
/// re-symmetrization. `rho` is in the band basis at `κ(t) = k + A(t)/ħ`.
/// When the field vanishes over the whole step the free evolution is applied
/// in closed form instead.
pub fn step(
    model: &dyn BandModel,
    k: Vec2,
    rho: &CMatrix,
    train: &PulseTrain,
    t_fs: f64,
    dt_au: f64,
    t2_fs: f64,
) -> Result<CMatrix, PropagationError> {
    let kern = GeneralKernel::new(model);
    let dt_fs = au_to_fs(dt_au);
    let at = |t: f64| {
        let s = train.sample(t);
        (s.a.map(vector_potential_to_momentum), s.e.map(field_to_au))
    };
    let (k0, e0) = at(t_fs);
    let (km, em) = at(t_fs + 0.5 * dt_fs);
    let (k1, e1) = at(t_fs + dt_fs);
    let gamma = PropagationConfig::default().with_t2(t2_fs).gamma_au();
    let kd = kern.kdata(k);
    let f0 = kern.frame(&kd, &kern.tdata(k0))?;
    let field_free = [e0, em, e1].iter().all(|e| e[0] == 0.0 && e[1] == 0.0) && k0 == km && km == k1;
    let mut out = if field_free {
        let mut r = rho.clone();
        kern.free(&f0, gamma, dt_au, &mut r);
        r
    } else {
        rk4(&kern, &f0, &kern.frame(&kd, &kern.tdata(km))?, &kern.frame(&kd, &kern.tdata(k1))?, [e0, em, e1], gamma, dt_au, rho)
    };
    kern.hermitize(&mut out);
    let m = kern.max_abs(&out);
    if m > BLOWUP_THRESHOLD {
        return Err(PropagationError::StepBlowup {
            k_index: 0,
            kx: k[0],
            ky: k[1],
            t_fs: t_fs + dt_fs,
            magnitude: m,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// time plan

/// Field samples in atomic units on a half-step grid.
struct AuSample {
    e: [f64; 2],
    /// momentum shift `A/ħ` (Å⁻¹)
    shift: Vec2,
}

enum Segment {
    Active { n0: usize, n1: usize, samples: Vec<AuSample> },
    Free { n0: usize, n1: usize },
}

struct Plan {
    t0_fs: f64,
    dt_au: f64,
    n_total: usize,
    segments: Vec<Segment>,
    record_steps: Vec<usize>,
    snapshot_steps: Vec<usize>,
}

impl Plan {
    fn new(train: &PulseTrain, cfg: &PropagationConfig, t0: f64, t1: f64) -> Plan {
        let dt_fs = au_to_fs(cfg.dt_au);
        let n_total = ((t1 - t0) / dt_fs - 1e-9).ceil().max(0.0) as usize;
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for (lo, hi) in train.active_windows() {
            let a = ((lo - t0) / dt_fs).floor().clamp(0.0, n_total as f64) as usize;
            let b = ((hi - t0) / dt_fs).ceil().clamp(0.0, n_total as f64) as usize;
            if b <= a {
                continue;
            }
            match spans.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => spans.push((a, b)),
            }
        }
        let mut segments = Vec::new();
        let mut n = 0;
        for (a, b) in spans {
            if a > n {
                segments.push(Segment::Free { n0: n, n1: a });
            }
            let samples = train
                .sample_grid(t0 + a as f64 * dt_fs, 0.5 * dt_fs, 2 * (b - a) + 1)
                .into_iter()
                .map(|s| AuSample {
                    e: s.e.map(field_to_au),
                    shift: s.a.map(vector_potential_to_momentum),
                })
                .collect();
            segments.push(Segment::Active { n0: a, n1: b, samples });
            n = b;
        }
        if n < n_total {
            segments.push(Segment::Free { n0: n, n1: n_total });
        }
        let stride = cfg.record_stride;
        let mut record_steps: Vec<usize> = (0..=n_total).step_by(stride).collect();
        if record_steps.last() != Some(&n_total) {
            record_steps.push(n_total);
        }
        let mut snapshot_steps: Vec<usize> = cfg
            .snapshot_times_fs
            .iter()
            .map(|&s| ((s - t0) / dt_fs).round().clamp(0.0, n_total as f64) as usize)
            .collect();
        snapshot_steps.sort_unstable();
        Plan {
            t0_fs: t0,
            dt_au: cfg.dt_au,
            n_total,
            segments,
            record_steps,
            snapshot_steps,
        }
    }

    fn time_fs(&self, n: usize) -> f64 {
        self.t0_fs + n as f64 * au_to_fs(self.dt_au)
    }
}

// ---------------------------------------------------------------------------
// driver

/// Conservation diagnostics accumulated over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// Largest `|ρ − ρ†|` element seen before any re-symmetrization.
    pub max_hermiticity_defect: f64,
    /// Largest `|tr ρ − N_filled|` at recorded steps.
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl Diagnostics {
    fn new() -> Self {
        Diagnostics {
            max_hermiticity_defect: 0.0,
            max_trace_drift: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_eigenvalue: f64::NEG_INFINITY,
        }
    }

    fn merge(&mut self, o: &Diagnostics) {
        self.max_hermiticity_defect = self.max_hermiticity_defect.max(o.max_hermiticity_defect);
        self.max_trace_drift = self.max_trace_drift.max(o.max_trace_drift);
        self.min_eigenvalue = self.min_eigenvalue.min(o.min_eigenvalue);
        self.max_eigenvalue = self.max_eigenvalue.max(o.max_eigenvalue);
    }

    /// Whether the run satisfied the conservation tolerances.
    pub fn conserved(&self) -> bool {
        self.max_hermiticity_defect < 1e-10
            && self.max_trace_drift < 1e-8
            && self.min_eigenvalue >= -1e-6
            && self.max_eigenvalue <= 1.0 + 1e-6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    /// σ(t) at the recorded steps.
    pub trace: VhcTrace,
    /// Weighted conduction populations `(n_K, n_K′)` at the recorded steps.
    pub valley_trace: Vec<(f64, f64)>,
    /// Final per-k, per-band populations.
    pub final_populations: PopulationMap,
    /// σ from the final populations with the mirror-symmetric reduction.
    pub sigma_final: f64,
    /// Stored populations at the snapshot times (same order as configured).
    pub snapshots: Vec<PopulationMap>,
    pub snapshot_times_fs: Vec<f64>,
    pub final_state: Option<DensityMatrixGrid>,
    pub diagnostics: Diagnostics,
    pub t_end_fs: f64,
}

/// Model, grid and curvature bundled for repeated propagations.
pub struct Simulation<'a> {
    pub model: &'a dyn BandModel,
    pub kgrid: &'a KGrid,
    pub berry: BerryMap,
}

impl<'a> Simulation<'a> {
    pub fn new(model: &'a dyn BandModel, kgrid: &'a KGrid) -> Result<Self, PropagationError> {
        let berry = crate::observables::berry_curvature(model, kgrid)?;
        Ok(Simulation { model, kgrid, berry })
    }

    pub fn with_berry(model: &'a dyn BandModel, kgrid: &'a KGrid, berry: BerryMap) -> Self {
        Simulation { model, kgrid, berry }
    }

    /// Propagates from the ground state.
    pub fn propagate(&self, train: &PulseTrain, cfg: &PropagationConfig) -> Result<PropagationResult, PropagationError> {
        self.propagate_from(None, train, cfg)
    }

    /// Propagates from `initial` (taken at `initial.t_fs`, which overrides
    /// `t_start_fs`) or from the ground state.
    pub fn propagate_from(
        &self,
        initial: Option<&DensityMatrixGrid>,
        train: &PulseTrain,
        cfg: &PropagationConfig,
    ) -> Result<PropagationResult, PropagationError> {
        cfg.validate()?;
        let nb = self.model.num_bands();
        if let Some(init) = initial {
            if init.rho.len() != self.kgrid.len() || init.rho.iter().any(|r| r.nrows() != nb || r.ncols() != nb) {
                return Err(PropagationError::Config("initial state does not match grid or band count".into()));
            }
        }
        if cfg.filled_bands > nb {
            return Err(PropagationError::Config(format!("{} filled bands requested, model has {nb}", cfg.filled_bands)));
        }
        let conduction = cfg.conduction(nb);
        if conduction.iter().any(|&b| b >= nb) {
            return Err(PropagationError::Config("conduction band index out of range".into()));
        }
        let ext = band_extent(self.model, self.kgrid, cfg.filled_bands);
        if initial.is_none() && cfg.filled_bands > 0 && cfg.filled_bands < nb && ext.max_filled_ev >= ext.min_empty_ev {
            return Err(PropagationError::FermiLevel {
                filled: cfg.filled_bands,
                max_filled: ext.max_filled_ev,
                min_empty: ext.min_empty_ev,
            });
        }
        check_resolution(cfg.dt_au, ext.max_spread_ev)?;

        let windows = train.active_windows();
        let t0 = match initial {
            Some(s) => s.t_fs,
            None => cfg.t_start_fs.or(windows.first().map(|w| w.0)).unwrap_or(0.0),
        };
        let t1 = cfg.t_end_fs.or(windows.last().map(|w| w.1)).unwrap_or(t0).max(t0);
        let plan = Plan::new(train, cfg, t0, t1);

        match self.model.as_two_band() {
            Some(m) => self.run(&TwoBandKernel::new(m), &plan, initial, cfg, &conduction),
            None => self.run(&GeneralKernel::new(self.model), &plan, initial, cfg, &conduction),
        }
    }

    fn run<K: Kernel>(
        &self,
        kern: &K,
        plan: &Plan,
        initial: Option<&DensityMatrixGrid>,
        cfg: &PropagationConfig,
        conduction: &[usize],
    ) -> Result<PropagationResult, PropagationError> {
        let nk = self.kgrid.len();
        let nb = kern.nbands();
        let gamma = cfg.gamma_au();
        let nrec = plan.record_steps.len();
        let nsnap = plan.snapshot_steps.len();
        let filled = initial.map_or(cfg.filled_bands as f64, |s| s.rho[0].trace().re);
        let ground = {
            let mut g = CMatrix::zeros(nb, nb);
            for b in 0..cfg.filled_bands {
                g[(b, b)] = Complex64::new(1.0, 0.0);
            }
            kern.from_matrix(&g)
        };
        let holes: Vec<usize> = if cfg.include_holes { (0..cfg.filled_bands).collect() } else { Vec::new() };

        struct ChunkOut<S> {
            /// `[σ, n_K, n_K′]` per record
            acc: Vec<[f64; 3]>,
            pops: Vec<f64>,
            snaps: Vec<Vec<f64>>,
            states: Vec<S>,
            diag: Diagnostics,
        }

        let zero_shift = kern.tdata([0.0, 0.0]);
        let tdata: Vec<Vec<K::TData>> = plan
            .segments
            .iter()
            .map(|seg| match seg {
                Segment::Active { samples, .. } => samples.iter().map(|s| kern.tdata(s.shift)).collect(),
                Segment::Free { .. } => Vec::new(),
            })
            .collect();
        let nchunks = nk.div_ceil(CHUNK);
        let chunks: Vec<Result<ChunkOut<K::State>, PropagationError>> = (0..nchunks)
            .into_par_iter()
            .map(|c| {
                let range = c * CHUNK..((c + 1) * CHUNK).min(nk);
                let mut out = ChunkOut {
                    acc: vec![[0.0; 3]; nrec],
                    pops: Vec::with_capacity(range.len() * nb),
                    snaps: vec![Vec::with_capacity(range.len() * nb); nsnap],
                    states: Vec::new(),
                    diag: Diagnostics::new(),
                };
                let mut p = vec![0.0; nb];
                for ki in range {
                    let k = self.kgrid.points[ki];
                    let omega: Vec<f64> = (0..nb).map(|b| self.berry.curvature.get(ki, b)).collect();
                    let valley = self.kgrid.valleys[ki];
                    let w = self.kgrid.weight;
                    let mut observe = |rho: &K::State, rec: Option<usize>, snap: Option<usize>, out: &mut ChunkOut<K::State>| {
                        kern.populations(rho, &mut p);
                        if let Some(r) = rec {
                            let cond: f64 = conduction.iter().map(|&b| p[b]).sum();
                            let mut s: f64 = conduction.iter().map(|&b| p[b] * omega[b]).sum();
                            s += holes.iter().map(|&b| (p[b] - 1.0) * omega[b]).sum::<f64>();
                            let a = &mut out.acc[r];
                            a[0] += s * w;
                            match valley {
                                Valley::K => a[1] += cond * w,
                                Valley::KPrime => a[2] += cond * w,
                            }
                            let tr: f64 = p.iter().sum();
                            out.diag.max_trace_drift = out.diag.max_trace_drift.max((tr - filled).abs());
                            let (lo, hi) = kern.eig_bounds(rho);
                            out.diag.min_eigenvalue = out.diag.min_eigenvalue.min(lo);
                            out.diag.max_eigenvalue = out.diag.max_eigenvalue.max(hi);
                        }
                        if let Some(s) = snap {
                            out.snaps[s].extend_from_slice(&p);
                        }
                    };
                    let kd = kern.kdata(k);
                    let mut rho = initial.map_or_else(|| ground.clone(), |s| kern.from_matrix(&s.rho[ki]));
                    let (mut ri, mut si) = (0usize, 0usize);
                    // observations due at step n
                    macro_rules! due {
                        ($n:expr, $rho:expr) => {
                            while ri < nrec && plan.record_steps[ri] <= $n {
                                observe($rho, Some(ri), None, &mut out);
                                ri += 1;
                            }
                            while si < nsnap && plan.snapshot_steps[si] <= $n {
                                observe($rho, None, Some(si), &mut out);
                                si += 1;
                            }
                        };
                    }
                    due!(0, &rho);
                    for (seg_i, seg) in plan.segments.iter().enumerate() {
                        match seg {
                            Segment::Free { n0, n1 } => {
                                let f = kern.frame(&kd, &zero_shift)?;
                                kern.free(&f, gamma, (n1 - n0) as f64 * plan.dt_au, &mut rho);
                                due!(*n1, &rho);
                            }
                            Segment::Active { n0, n1, samples } => {
                                let td = &tdata[seg_i];
                                let at = |j: usize| kern.frame(&kd, &td[j]);
                                let mut f0 = at(0)?;
                                for s in 0..(n1 - n0) {
                                    let fm = at(2 * s + 1)?;
                                    let f1 = at(2 * s + 2)?;
                                    let e = [samples[2 * s].e, samples[2 * s + 1].e, samples[2 * s + 2].e];
                                    rho = rk4(kern, &f0, &fm, &f1, e, gamma, plan.dt_au, &rho);
                                    let defect = kern.hermitize(&mut rho);
                                    out.diag.max_hermiticity_defect = out.diag.max_hermiticity_defect.max(defect);
                                    let m = kern.max_abs(&rho);
                                    let n = n0 + s + 1;
                                    if !(m <= BLOWUP_THRESHOLD) {
                                        return Err(PropagationError::StepBlowup {
                                            k_index: ki,
                                            kx: k[0],
                                            ky: k[1],
                                            t_fs: plan.time_fs(n),
                                            magnitude: m,
                                        });
                                    }
                                    due!(n, &rho);
                                    f0 = f1;
                                }
                            }
                        }
                    }
                    kern.populations(&rho, &mut p);
                    out.pops.extend_from_slice(&p);
                    if cfg.keep_final_state {
                        out.states.push(rho);
                    }
                }
                Ok(out)
            })
            .collect();

        let mut acc = vec![[0.0; 3]; nrec];
        let mut pops = Vec::with_capacity(nk * nb);
        let mut snaps = vec![Vec::with_capacity(nk * nb); nsnap];
        let mut states = Vec::new();
        let mut diag = Diagnostics::new();
        for c in chunks {
            let c = c?;
            for (a, b) in acc.iter_mut().zip(&c.acc) {
                for i in 0..3 {
                    a[i] += b[i];
                }
            }
            pops.extend(c.pops);
            for (s, cs) in snaps.iter_mut().zip(c.snaps) {
                s.extend(cs);
            }
            states.extend(c.states);
            diag.merge(&c.diag);
        }
        let final_populations = PopulationMap { nbands: nb, values: pops };
        let mut sigma_final = vhc(&final_populations, &self.berry, self.kgrid, conduction)?;
        if cfg.include_holes {
            let mut holes_map = final_populations.clone();
            holes_map.values.iter_mut().for_each(|v| *v -= 1.0);
            let hb: Vec<usize> = (0..cfg.filled_bands).collect();
            sigma_final += vhc(&holes_map, &self.berry, self.kgrid, &hb)?;
        }
        let t_end = plan.time_fs(plan.n_total);
        Ok(PropagationResult {
            trace: VhcTrace {
                times_fs: plan.record_steps.iter().map(|&n| plan.time_fs(n)).collect(),
                sigma: acc.iter().map(|a| a[0]).collect(),
            },
            valley_trace: acc.iter().map(|a| (a[1], a[2])).collect(),
            final_populations,
            sigma_final,
            snapshots: snaps
                .into_iter()
                .map(|values| PopulationMap { nbands: nb, values })
                .collect(),
            snapshot_times_fs: plan.snapshot_steps.iter().map(|&n| plan.time_fs(n)).collect(),
            final_state: cfg.keep_final_state.then(|| DensityMatrixGrid {
                t_fs: t_end,
                rho: states.iter().map(|s| kern.to_matrix(s)).collect(),
            }),
            diagnostics: diag,
            t_end_fs: t_end,
        })
    }
}

/// Phase advanced per step by the fastest oscillation for a given band spread.
pub fn phase_per_step(dt_au: f64, spread_ev: f64) -> f64 {
    dt_au * spread_ev / HARTREE_EV
}

/// Steps per period of a transition at `energy_ev`.
pub fn steps_per_period(dt_au: f64, energy_ev: f64) -> f64 {
    2.0 * PI / phase_per_step(dt_au, energy_ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Polarization, PulseSpec};
    use crate::fixtures;

    fn hbn_sim(n: usize) -> (TwoBandModel, KGrid) {
        let m = TwoBandModel::hbn();
        let g = KGrid::new(&m.lattice, n, n).unwrap();
        (m, g)
    }

    #[test]
    fn ground_state_is_diagonal() {
        let (m, g) = hbn_sim(8);
        let s = initialize_ground_state(&m, &g, 1).unwrap();
        for r in &s.rho {
            assert_eq!(r[(0, 0)].re, 1.0);
            assert_eq!(r[(1, 1)].re, 0.0);
            assert_eq!(r.trace().re, 1.0);
        }
    }

    #[test]
    fn filling_through_a_band_is_rejected() {
        // strong next-nearest hopping: valence maximum above conduction minimum
        let m = fixtures::haldane(0.1, 1.0, 0.0, 0.0);
        let g = KGrid::new(m.lattice(), 6, 6).unwrap();
        assert!(matches!(
            initialize_ground_state(&m, &g, 1),
            Err(PropagationError::FermiLevel { .. })
        ));
    }

    #[test]
    fn free_step_rotates_coherence() {
        let m = TwoBandModel::hbn();
        let k = [0.3, -0.2];
        let mut rho = CMatrix::zeros(2, 2);
        rho[(0, 0)] = Complex64::new(0.8, 0.0);
        rho[(1, 1)] = Complex64::new(0.2, 0.0);
        rho[(1, 0)] = Complex64::new(0.3, 0.1);
        rho[(0, 1)] = rho[(1, 0)].conj();
        let gap = eigensystem_at(&m, k).energies;
        let de = ev_to_hartree(gap[1] - gap[0]);
        let dt = 0.18;
        let out = step(&m, k, &rho, &PulseTrain::default(), 0.0, dt, f64::INFINITY).unwrap();
        let expect = rho[(1, 0)] * Complex64::from_polar(1.0, -de * dt);
        assert!((out[(1, 0)] - expect).norm() < 1e-12);
        assert!((out[(1, 0)].norm() - rho[(1, 0)].norm()).abs() < 1e-12);
    }

    #[test]
    fn dephasing_decays_coherence() {
        let (m, g) = hbn_sim(2);
        let sim = Simulation::new(&m, &g).unwrap();
        let mut init = initialize_ground_state(&m, &g, 1).unwrap();
        for r in init.rho.iter_mut() {
            r[(0, 1)] = Complex64::new(0.3, 0.2);
            r[(1, 0)] = Complex64::new(0.3, -0.2);
        }
        let cfg = PropagationConfig {
            t2_fs: 10.0,
            t_end_fs: Some(20.0),
            keep_final_state: true,
            ..Default::default()
        };
        let r = sim.propagate_from(Some(&init), &PulseTrain::default(), &cfg).unwrap();
        let fin = r.final_state.unwrap();
        let expect = 0.3f64.hypot(0.2) * (-r.t_end_fs / 10.0).exp();
        for rho in &fin.rho {
            assert!((rho[(1, 0)].norm() - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn kernels_agree() {
        let m = TwoBandModel::hbn();
        let w = fixtures::hbn_wannier();
        let g = KGrid::new(&m.lattice, 6, 6).unwrap();
        let train = PulseTrain::new(vec![PulseSpec::hbn(Polarization::SigmaMinus, 0.0)]);
        let cfg = PropagationConfig {
            keep_final_state: true,
            ..Default::default()
        };
        let a = Simulation::new(&m, &g).unwrap().propagate(&train, &cfg).unwrap();
        let b = Simulation::new(&w, &g).unwrap().propagate(&train, &cfg).unwrap();
        for (x, y) in a.final_populations.values.iter().zip(&b.final_populations.values) {
            assert!((x - y).abs() < 1e-10, "{x} {y}");
        }
    }

    #[test]
    fn coarse_dt_is_rejected() {
        let (m, g) = hbn_sim(4);
        let sim = Simulation::new(&m, &g).unwrap();
        let train = PulseTrain::new(vec![PulseSpec::hbn(Polarization::x(), 0.0)]);
        let err = sim.propagate(&train, &PropagationConfig::default().with_dt(0.5));
        assert!(matches!(err, Err(PropagationError::UnderResolved { .. })));
    }
}
