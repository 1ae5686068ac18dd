//! Uniform Monkhorst-Pack sampling of the Brillouin zone with valley labels.

use thiserror::Error;

use crate::lattice::{dot, CrystalLattice, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be even and positive (got {0}×{1}); odd grids contain Γ, which has no valley partner")]
    BadDimensions(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Valley {
    K,
    KPrime,
}

impl Valley {
    pub fn opposite(self) -> Self {
        match self {
            Valley::K => Valley::KPrime,
            Valley::KPrime => Valley::K,
        }
    }
}

/// `n1 × n2` Monkhorst-Pack grid. Point `(i, j)` sits at fractional
/// coordinates `((2i+1−n1)/2n1, (2j+1−n2)/2n2)` and has flat index
/// `i·n2 + j`, so the point `−k` has flat index `N − 1 − index(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    pub lattice: CrystalLattice,
    pub n1: usize,
    pub n2: usize,
    pub points: Vec<Vec2>,
    /// Area element per point (Å⁻²).
    pub weight: f64,
    pub valleys: Vec<Valley>,
}

impl KGrid {
    pub fn new(lattice: &CrystalLattice, n1: usize, n2: usize) -> Result<Self, GridError> {
        if n1 == 0 || n2 == 0 || n1 % 2 == 1 || n2 % 2 == 1 {
            return Err(GridError::BadDimensions(n1, n2));
        }
        let mut points = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                points.push(lattice.frac_to_cart(mp(i, n1), mp(j, n2)));
            }
        }
        let valleys = points.iter().map(|&k| valley_of(lattice, k)).collect();
        Ok(KGrid {
            lattice: lattice.clone(),
            n1,
            n2,
            weight: lattice.bz_area() / (n1 * n2) as f64,
            points,
            valleys,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        (i % self.n1) * self.n2 + (j % self.n2)
    }

    /// Flat index of the point at `−k`.
    pub fn mirror_index(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    /// Fractional step vectors `(Δk₁, Δk₂)` in Å⁻¹.
    pub fn steps(&self) -> (Vec2, Vec2) {
        let b1 = self.lattice.b1;
        let b2 = self.lattice.b2;
        (
            [b1[0] / self.n1 as f64, b1[1] / self.n1 as f64],
            [b2[0] / self.n2 as f64, b2[1] / self.n2 as f64],
        )
    }
}

fn mp(r: usize, n: usize) -> f64 {
    (2.0 * r as f64 + 1.0 - n as f64) / (2.0 * n as f64)
}

/// Voronoi assignment to K or K′ under the periodic metric. Points equally
/// distant from both valleys are split by the sign of `k·ê` for a fixed
/// direction `ê`, which keeps `label(−k) = opposite(label(k))`.
pub fn valley_of(lattice: &CrystalLattice, k: Vec2) -> Valley {
    let dk = lattice.periodic_distance(k, lattice.k_valley);
    let dkp = lattice.periodic_distance(k, lattice.k_prime);
    let scale = dot(lattice.b1, lattice.b1).sqrt();
    if (dk - dkp).abs() > 1e-10 * scale {
        return if dk < dkp { Valley::K } else { Valley::KPrime };
    }
    let kv = lattice.k_valley;
    let (s, c) = 0.1234f64.sin_cos();
    let dir = [c * kv[0] - s * kv[1], s * kv[0] + c * kv[1]];
    if dot(k, dir) >= 0.0 {
        Valley::K
    } else {
        Valley::KPrime
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_bz_area() {
        let l = CrystalLattice::hexagonal(2.5);
        let g = KGrid::new(&l, 24, 24).unwrap();
        let total = g.weight * g.len() as f64;
        assert!((total / l.bz_area() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mirror_index_maps_to_minus_k() {
        let l = CrystalLattice::hexagonal(2.5);
        let g = KGrid::new(&l, 12, 16).unwrap();
        for (i, k) in g.points.iter().enumerate() {
            let m = g.points[g.mirror_index(i)];
            assert!((k[0] + m[0]).abs() < 1e-12 && (k[1] + m[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn valleys_partition_and_flip_under_inversion() {
        let l = CrystalLattice::hexagonal(2.5);
        for n in [8, 24, 60] {
            let g = KGrid::new(&l, n, n).unwrap();
            let nk = g.valleys.iter().filter(|&&v| v == Valley::K).count();
            assert_eq!(nk * 2, g.len());
            for i in 0..g.len() {
                assert_eq!(g.valleys[g.mirror_index(i)], g.valleys[i].opposite());
            }
        }
        assert_eq!(valley_of(&l, l.k_valley), Valley::K);
        assert_eq!(valley_of(&l, l.k_prime), Valley::KPrime);
    }

    #[test]
    fn odd_grids_rejected() {
        let l = CrystalLattice::hexagonal(2.5);
        assert!(KGrid::new(&l, 9, 10).is_err());
        assert!(KGrid::new(&l, 0, 10).is_err());
    }
}
