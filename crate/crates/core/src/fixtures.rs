//! Small synthetic Wannier models used by the tests, the examples and the
//! multi-band presets.

use num_complex::Complex64;

use crate::lattice::CMatrix;
use crate::wannier::WannierModel;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn hexagonal_cell(a: f64) -> [[f64; 3]; 3] {
    [[a, 0.0, 0.0], [0.5 * a, 0.5 * 3f64.sqrt() * a, 0.0], [0.0, 0.0, 20.0]]
}

/// Collects `(R, m, n, value)` hoppings into blocks, adding Hermitian partners.
struct Builder {
    nb: usize,
    rpoints: Vec<[i32; 3]>,
    blocks: Vec<CMatrix>,
}

impl Builder {
    fn new(nb: usize) -> Self {
        let mut b = Builder {
            nb,
            rpoints: Vec::new(),
            blocks: Vec::new(),
        };
        b.block([0, 0, 0]);
        b
    }

    fn block(&mut self, r: [i32; 3]) -> usize {
        if let Some(i) = self.rpoints.iter().position(|&x| x == r) {
            return i;
        }
        self.rpoints.push(r);
        self.blocks.push(CMatrix::zeros(self.nb, self.nb));
        self.rpoints.len() - 1
    }

    fn onsite(&mut self, m: usize, e: f64) {
        self.blocks[0][(m, m)] += c(e, 0.0);
    }

    /// `⟨m,0|H|n,R⟩ = v` together with `⟨n,0|H|m,−R⟩ = v*`.
    fn hop(&mut self, r: [i32; 3], m: usize, n: usize, v: Complex64) {
        let i = self.block(r);
        self.blocks[i][(m, n)] += v;
        let j = self.block([-r[0], -r[1], -r[2]]);
        self.blocks[j][(n, m)] += v.conj();
    }

    fn finish(self, a: f64, positions: Option<Vec<[f64; 2]>>) -> WannierModel {
        let nr = self.rpoints.len();
        let r_r = positions.map(|centers| {
            (0..nr)
                .map(|i| {
                    let mut p = [
                        CMatrix::zeros(self.nb, self.nb),
                        CMatrix::zeros(self.nb, self.nb),
                        CMatrix::zeros(self.nb, self.nb),
                    ];
                    if i == 0 {
                        for (n, ctr) in centers.iter().enumerate() {
                            p[0][(n, n)] = c(ctr[0], 0.0);
                            p[1][(n, n)] = c(ctr[1], 0.0);
                        }
                    }
                    p
                })
                .collect()
        });
        WannierModel::new(hexagonal_cell(a), self.rpoints, vec![1; nr], self.blocks, r_r)
            .expect("synthetic fixture is valid")
    }
}

/// Lattice vectors `R` such that `δᵢ − δ₁ = R` for the three honeycomb bonds.
const BOND_CELLS: [[i32; 3]; 3] = [[0, 0, 0], [1, -1, 0], [0, -1, 0]];

/// Three-band honeycomb model: one valence orbital on sublattice A and two
/// split conduction orbitals on sublattice B, mimicking a spin-split
/// conduction pair. The weakly coupled orbital sits below the strongly
/// coupled one, so the two upper bands stay at least `split` apart across
/// the zone. Carries Wannier centres so it round-trips through the
/// `_tb.dat` format.
pub fn three_band_split_conduction() -> WannierModel {
    let a = 2.50;
    let (gap, split) = (6.0, 0.25);
    let (t_weak, t_strong) = (0.65, 2.2);
    let mut b = Builder::new(3);
    b.onsite(0, -0.5 * gap);
    b.onsite(1, 0.5 * gap - split);
    b.onsite(2, 0.5 * gap);
    for r in BOND_CELLS {
        b.hop(r, 0, 1, c(t_weak, 0.0));
        b.hop(r, 0, 2, c(t_strong, 0.0));
    }
    let bond = a / 3f64.sqrt();
    b.finish(a, Some(vec![[0.0, 0.0], [0.0, bond], [0.0, bond]]))
        .with_comment("synthetic three-band honeycomb, split conduction pair")
}

/// Haldane model with nearest-neighbour hopping `t1`, complex next-nearest
/// hopping `t2·e^{±iφ}` and sublattice mass `mass`.
pub fn haldane(t1: f64, t2: f64, phi: f64, mass: f64) -> WannierModel {
    let mut b = Builder::new(2);
    b.onsite(0, mass);
    b.onsite(1, -mass);
    for r in BOND_CELLS {
        b.hop(r, 0, 1, c(t1, 0.0));
    }
    for r in [[1, 0, 0], [-1, 1, 0], [0, -1, 0]] {
        b.hop(r, 0, 0, Complex64::from_polar(t2, phi));
        b.hop(r, 1, 1, Complex64::from_polar(t2, -phi));
    }
    b.finish(2.50, None).with_comment("Haldane model")
}

/// Two-band honeycomb with the same parameters as the analytic hBN model,
/// expressed as Wannier blocks.
pub fn hbn_wannier() -> WannierModel {
    let mut b = Builder::new(2);
    b.onsite(0, 3.0);
    b.onsite(1, -3.0);
    for r in BOND_CELLS {
        b.hop(r, 0, 1, c(2.3, 0.0));
    }
    let bond = 2.50 / 3f64.sqrt();
    b.finish(2.50, Some(vec![[0.0, 0.0], [0.0, bond]]))
        .with_comment("two-band hBN")
}

/// A single flat band.
pub fn flat_band(energy: f64) -> WannierModel {
    let mut b = Builder::new(1);
    b.onsite(0, energy);
    b.finish(2.50, None).with_comment("flat band")
}
