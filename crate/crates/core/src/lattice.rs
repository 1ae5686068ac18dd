//! Tight-binding models of hexagonal monolayers.
//!
//! Every model exposes its reciprocal-space Hamiltonian `H(k)` in eV with `k`
//! in Å⁻¹. Eigenvectors carry a deterministic gauge: the largest-magnitude
//! component of each column is made real and positive, so that dipoles and
//! propagated coherences are reproducible from run to run.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub type Vec2 = [f64; 2];
pub type CMatrix = DMatrix<Complex64>;

/// Energy separation below which two eigenvalues are reported as degenerate.
pub const DEGENERACY_FLAG_EV: f64 = 1e-9;
/// Energy separation below which an interband dipole cannot be formed.
pub const DIPOLE_DEGENERACY_EV: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DipoleError {
    #[error("bands {n} and {m} are degenerate at k = ({kx:.6}, {ky:.6}) Å⁻¹ (|Δε| = {gap:.3e} eV)")]
    Degeneracy {
        n: usize,
        m: usize,
        kx: f64,
        ky: f64,
        gap: f64,
    },
}

pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Real and reciprocal lattice of a 2D crystal together with its valley momenta.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalLattice {
    pub a1: Vec2,
    pub a2: Vec2,
    pub b1: Vec2,
    pub b2: Vec2,
    /// Valley momentum K (a corner of the hexagonal Brillouin zone).
    pub k_valley: Vec2,
    /// Valley momentum K′ = −K.
    pub k_prime: Vec2,
}

impl CrystalLattice {
    /// Builds the reciprocal lattice from two real-space vectors (Å).
    pub fn from_vectors(a1: Vec2, a2: Vec2) -> Self {
        let area = cross(a1, a2);
        let b1 = [2.0 * PI * a2[1] / area, -2.0 * PI * a2[0] / area];
        let b2 = [-2.0 * PI * a1[1] / area, 2.0 * PI * a1[0] / area];
        // BZ corner: (2b1 + b2)/3 when the reciprocal vectors enclose 120°,
        // (b1 + b2)/3 when they enclose 60°.
        let k_valley = if dot(b1, b2) < 0.0 {
            [(2.0 * b1[0] + b2[0]) / 3.0, (2.0 * b1[1] + b2[1]) / 3.0]
        } else {
            [(b1[0] + b2[0]) / 3.0, (b1[1] + b2[1]) / 3.0]
        };
        CrystalLattice {
            a1,
            a2,
            b1,
            b2,
            k_valley,
            k_prime: [-k_valley[0], -k_valley[1]],
        }
    }

    /// Hexagonal lattice with `a1 = a x̂`, `a2 = a (1/2, √3/2)`.
    pub fn hexagonal(a: f64) -> Self {
        Self::from_vectors([a, 0.0], [0.5 * a, 0.5 * 3f64.sqrt() * a])
    }

    /// Area of the first Brillouin zone in Å⁻².
    pub fn bz_area(&self) -> f64 {
        cross(self.b1, self.b2).abs()
    }

    /// Cartesian momentum from fractional reciprocal coordinates.
    pub fn frac_to_cart(&self, u1: f64, u2: f64) -> Vec2 {
        [
            u1 * self.b1[0] + u2 * self.b2[0],
            u1 * self.b1[1] + u2 * self.b2[1],
        ]
    }

    /// Fractional reciprocal coordinates of a Cartesian momentum.
    pub fn cart_to_frac(&self, k: Vec2) -> Vec2 {
        let twopi = 2.0 * PI;
        [dot(k, self.a1) / twopi, dot(k, self.a2) / twopi]
    }

    /// Smallest distance from `k` to any reciprocal-lattice image of `target`.
    pub fn periodic_distance(&self, k: Vec2, target: Vec2) -> f64 {
        let d = [k[0] - target[0], k[1] - target[1]];
        let f = self.cart_to_frac(d);
        let (f1, f2) = (f[0] - f[0].round(), f[1] - f[1].round());
        let mut best = f64::INFINITY;
        for m in -1..=1 {
            for n in -1..=1 {
                let v = self.frac_to_cart(f1 + m as f64, f2 + n as f64);
                best = best.min(dot(v, v).sqrt());
            }
        }
        best
    }

    /// Γ, K, M and K′ in Cartesian coordinates.
    pub fn high_symmetry_points(&self) -> [(&'static str, Vec2); 4] {
        [
            ("G", [0.0, 0.0]),
            ("K", self.k_valley),
            ("M", [0.5 * self.b1[0], 0.5 * self.b1[1]]),
            ("K'", self.k_prime),
        ]
    }
}

/// Any source of a reciprocal-space Hamiltonian.
pub trait BandModel: Send + Sync {
    fn num_bands(&self) -> usize;

    fn lattice(&self) -> &CrystalLattice;

    /// Hermitian `H(k)` in eV.
    fn hamiltonian_at(&self, k: Vec2) -> CMatrix;

    /// `(∂H/∂kx, ∂H/∂ky)` in eV·Å.
    fn hamiltonian_gradient_at(&self, k: Vec2) -> [CMatrix; 2];

    /// Position-operator matrices `(x, y)` in the orbital basis (Å), when the
    /// model carries them.
    fn position_matrices_at(&self, _k: Vec2) -> Option<[CMatrix; 2]> {
        None
    }

    /// In-plane orbital centres (Å). They enter the interband dipoles and the
    /// link phases of the Berry curvature; `None` places every orbital at
    /// the cell origin.
    fn orbital_centers(&self) -> Option<Vec<Vec2>> {
        None
    }

    /// Fast path for the analytic two-band model.
    fn as_two_band(&self) -> Option<&TwoBandModel> {
        None
    }

    /// Fast path for real-space tight-binding blocks.
    fn as_wannier(&self) -> Option<&crate::wannier::WannierModel> {
        None
    }
}

/// Gapped honeycomb model with one orbital per sublattice.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBandModel {
    pub lattice: CrystalLattice,
    /// Onsite asymmetry Δ (eV); the direct gap at K.
    pub gap_ev: f64,
    /// Nearest-neighbour hopping (eV).
    pub hopping_ev: f64,
    /// Nearest-neighbour bond vectors δ₁..δ₃ (Å). The first sublattice sits
    /// at the origin and the second at δ₁.
    pub bonds: [Vec2; 3],
}

impl TwoBandModel {
    pub fn new(lattice_constant: f64, gap_ev: f64, hopping_ev: f64) -> Self {
        let a = lattice_constant;
        let bond = a / 3f64.sqrt();
        TwoBandModel {
            lattice: CrystalLattice::hexagonal(a),
            gap_ev,
            hopping_ev,
            bonds: [
                [0.0, bond],
                [0.5 * a, -0.5 * bond],
                [-0.5 * a, -0.5 * bond],
            ],
        }
    }

    /// Monolayer hBN π bands: a = 2.50 Å, Δ = 6.0 eV, t = 2.3 eV.
    pub fn hbn() -> Self {
        Self::new(2.50, 6.0, 2.3)
    }

    /// Bloch-sum displacements `δᵢ − δ₁`. These are lattice vectors, so the
    /// structure factor built from them is periodic in the reciprocal lattice.
    fn displacements(&self) -> [Vec2; 3] {
        let d0 = self.bonds[0];
        self.bonds.map(|d| [d[0] - d0[0], d[1] - d0[1]])
    }

    /// Structure factor `f(k)` and its gradient.
    pub fn structure_factor(&self, k: Vec2) -> (Complex64, [Complex64; 2]) {
        let mut f = Complex64::new(0.0, 0.0);
        let mut grad = [Complex64::new(0.0, 0.0); 2];
        for r in self.displacements() {
            let phase = Complex64::from_polar(self.hopping_ev, dot(k, r));
            f += phase;
            grad[0] += Complex64::new(0.0, r[0]) * phase;
            grad[1] += Complex64::new(0.0, r[1]) * phase;
        }
        (f, grad)
    }

    /// Closed-form band data: half gap `E(k)` (eV) so that `ε = ∓E`, and the
    /// conduction-valence dipole `d_cv = (x, y)` in Å.
    pub fn frame(&self, k: Vec2) -> (f64, [Complex64; 2]) {
        let (f, grad) = self.structure_factor(k);
        let h = 0.5 * self.gap_ev;
        let e = (h * h + f.norm_sqr()).sqrt();
        let eh = e + h;
        let norm2 = eh * eh + f.norm_sqr();
        let f2 = f * f;
        // ⟨c|τ̂|v⟩ with only the second site off the origin
        let site = f * eh / norm2;
        let tau = self.bonds[0];
        let mut axis = 0;
        let d = grad.map(|g| {
            let m = (g * (eh * eh) - f2 * g.conj()) / norm2;
            // d_cv = i⟨c|∇H|v⟩ / (ε_v − ε_c) + ⟨c|τ̂|v⟩
            let v = Complex64::new(0.0, 1.0) * m / (-2.0 * e) + site * tau[axis];
            axis += 1;
            v
        });
        (e, d)
    }
}

impl BandModel for TwoBandModel {
    fn num_bands(&self) -> usize {
        2
    }

    fn lattice(&self) -> &CrystalLattice {
        &self.lattice
    }

    fn hamiltonian_at(&self, k: Vec2) -> CMatrix {
        let (f, _) = self.structure_factor(k);
        let h = Complex64::new(0.5 * self.gap_ev, 0.0);
        CMatrix::from_row_slice(2, 2, &[h, f, f.conj(), -h])
    }

    fn hamiltonian_gradient_at(&self, k: Vec2) -> [CMatrix; 2] {
        let (_, grad) = self.structure_factor(k);
        let zero = Complex64::new(0.0, 0.0);
        grad.map(|g| CMatrix::from_row_slice(2, 2, &[zero, g, g.conj(), zero]))
    }

    fn position_matrices_at(&self, _k: Vec2) -> Option<[CMatrix; 2]> {
        let tau = self.bonds[0];
        let zero = Complex64::new(0.0, 0.0);
        Some([0, 1].map(|i| CMatrix::from_row_slice(2, 2, &[zero, zero, zero, Complex64::new(tau[i], 0.0)])))
    }

    fn orbital_centers(&self) -> Option<Vec<Vec2>> {
        Some(vec![[0.0, 0.0], self.bonds[0]])
    }

    fn as_two_band(&self) -> Option<&TwoBandModel> {
        Some(self)
    }
}

/// Eigenvalues (ascending) and gauge-fixed eigenvectors of `H(k)`.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub k: Vec2,
    pub energies: Vec<f64>,
    /// Columns are the Bloch eigenvectors in the orbital basis.
    pub states: CMatrix,
    /// Set when two eigenvalues lie closer than [`DEGENERACY_FLAG_EV`].
    pub degenerate: bool,
}

/// Diagonalizes a Hermitian matrix; eigenvalues ascending, columns gauge fixed.
pub fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut states = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        fix_gauge(v.as_mut_slice());
        states.set_column(col, &v);
    }
    (energies, states)
}

/// Rotates a vector so its largest-magnitude component is real and positive.
/// Ties go to the lowest index.
pub fn fix_gauge(v: &mut [Complex64]) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, c) in v.iter().enumerate() {
        let m = c.norm();
        if m > best_mag * (1.0 + 1e-12) {
            best = i;
            best_mag = m;
        }
    }
    if best_mag > 0.0 {
        let phase = v[best].conj() / best_mag;
        for c in v.iter_mut() {
            *c *= phase;
        }
        v[best] = Complex64::new(v[best].re, 0.0);
    }
}

pub fn eigensystem_at(model: &dyn BandModel, k: Vec2) -> Eigensystem {
    let (energies, states) = hermitian_eigen(&model.hamiltonian_at(k));
    let degenerate = energies
        .windows(2)
        .any(|w| (w[1] - w[0]).abs() < DEGENERACY_FLAG_EV);
    Eigensystem {
        k,
        energies,
        states,
        degenerate,
    }
}

/// Interband dipole matrices in the band basis (e·Å).
#[derive(Debug, Clone)]
pub struct DipoleMatrices {
    pub x: CMatrix,
    pub y: CMatrix,
}

impl DipoleMatrices {
    /// Projection onto a complex polarization vector, `d·ê`.
    pub fn project(&self, n: usize, m: usize, e: [Complex64; 2]) -> Complex64 {
        self.x[(n, m)] * e[0] + self.y[(n, m)] * e[1]
    }
}

/// Energies and interband dipoles at one crystal momentum.
#[derive(Debug, Clone)]
pub struct BandFrame {
    pub energies: Vec<f64>,
    pub dipoles: DipoleMatrices,
}

/// Band energies and dipoles at `k`.
///
/// Off-diagonal dipoles follow `d_nm = i⟨n|∇H|m⟩ / (ε_m − ε_n)`, the
/// interband Berry connection. When the model carries position matrices the
/// Wannier-interpolation route adds the rotated position term `U†·r(k)·U`.
/// Diagonal (intraband) elements are set to zero.
pub fn band_frame_at(model: &dyn BandModel, k: Vec2) -> Result<BandFrame, DipoleError> {
    band_frame_from_parts(
        k,
        &model.hamiltonian_at(k),
        &model.hamiltonian_gradient_at(k),
        model.position_matrices_at(k).as_ref(),
    )
}

/// [`band_frame_at`] from an already assembled `H(k)`, `∇H(k)` and optional
/// position matrices.
pub fn band_frame_from_parts(
    k: Vec2,
    h: &CMatrix,
    grad: &[CMatrix; 2],
    positions: Option<&[CMatrix; 2]>,
) -> Result<BandFrame, DipoleError> {
    let (energies, states) = hermitian_eigen(h);
    let n = energies.len();
    for a in 0..n {
        for b in (a + 1)..n {
            let gap = (energies[b] - energies[a]).abs();
            if gap < DIPOLE_DEGENERACY_EV {
                return Err(DipoleError::Degeneracy {
                    n: a,
                    m: b,
                    kx: k[0],
                    ky: k[1],
                    gap,
                });
            }
        }
    }
    let u = &states;
    let ud = u.adjoint();
    let mut comps = Vec::with_capacity(2);
    for axis in 0..2 {
        let gh = &ud * &grad[axis] * u;
        let rot = positions.map(|p| &ud * &p[axis] * u);
        let mut d = CMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let denom = energies[b] - energies[a];
                let mut v = Complex64::new(0.0, 1.0) * gh[(a, b)] / denom;
                if let Some(r) = &rot {
                    v += r[(a, b)];
                }
                d[(a, b)] = v;
            }
        }
        // enforce d = d† exactly
        let dh = (&d + d.adjoint()) * Complex64::new(0.5, 0.0);
        comps.push(dh);
    }
    let y = comps.pop().expect("two components");
    let x = comps.pop().expect("two components");
    Ok(BandFrame {
        energies,
        dipoles: DipoleMatrices { x, y },
    })
}

pub fn dipole_matrix_at(model: &dyn BandModel, k: Vec2) -> Result<DipoleMatrices, DipoleError> {
    band_frame_at(model, k).map(|f| f.dipoles)
}

/// One sample along a band path.
#[derive(Debug, Clone)]
pub struct BandPathPoint {
    pub k: Vec2,
    /// Cumulative path length (Å⁻¹).
    pub distance: f64,
    pub energies: Vec<f64>,
}

/// Samples the bands along a piecewise-linear path. Each segment gets
/// `samples_per_segment` points including both endpoints; shared endpoints of
/// consecutive segments appear once.
pub fn band_path(
    model: &dyn BandModel,
    waypoints: &[Vec2],
    samples_per_segment: usize,
) -> Vec<BandPathPoint> {
    assert!(waypoints.len() >= 2, "a band path needs at least two waypoints");
    let samples = samples_per_segment.max(2);
    let mut out = Vec::new();
    let mut distance = 0.0;
    let mut prev: Option<Vec2> = None;
    for (seg, pair) in waypoints.windows(2).enumerate() {
        let (start, end) = (pair[0], pair[1]);
        for s in 0..samples {
            if seg > 0 && s == 0 {
                continue;
            }
            let x = s as f64 / (samples - 1) as f64;
            let k = [
                start[0] + x * (end[0] - start[0]),
                start[1] + x * (end[1] - start[1]),
            ];
            if let Some(p) = prev {
                distance += ((k[0] - p[0]).powi(2) + (k[1] - p[1]).powi(2)).sqrt();
            }
            prev = Some(k);
            out.push(BandPathPoint {
                k,
                distance,
                energies: eigensystem_at(model, k).energies,
            });
        }
    }
    out
}

/// Ratio `|d_cv·ê₊| / |d_cv·ê₋|` for the lowest interband pair at `k`.
pub fn circular_dominance(model: &dyn BandModel, k: Vec2, valence: usize, conduction: usize) -> Result<f64, DipoleError> {
    let d = dipole_matrix_at(model, k)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = [Complex64::new(s, 0.0), Complex64::new(0.0, s)];
    let minus = [Complex64::new(s, 0.0), Complex64::new(0.0, -s)];
    Ok(d.project(conduction, valence, plus).norm() / d.project(conduction, valence, minus).norm())
}
