//! Property tests over parsers, writers and symmetry invariants.

use std::path::Path;

use num_complex::Complex64;
use proptest::prelude::*;

use valleyswitch::config::RunConfig;
use valleyswitch::field::{Polarization, PulseSpec, PulseTrain};
use valleyswitch::grid::{KGrid, Valley};
use valleyswitch::io::{parse_delay_scan, parse_table, write_delay_scan, write_table, Cell, Provenance};
use valleyswitch::lattice::{BandModel, CMatrix, TwoBandModel};
use valleyswitch::observables::{berry_curvature, valley_asymmetry, vhc, PopulationMap};
use valleyswitch::scan::{delay_grid, fit_t2, DelayScan, FitOptions};
use valleyswitch::wannier::{parse_hr, parse_tb, write_hr, write_tb, WannierModel};

fn prov() -> Provenance {
    Provenance::new("0123abcd", (6, 6), "fs")
}

/// A random Hermitian-pair tight-binding model on a hexagonal cell.
fn random_wannier(nb: usize, seed: &[f64]) -> WannierModel {
    let a = 2.5;
    let cell = [[a, 0.0, 0.0], [0.5 * a, 0.5 * 3f64.sqrt() * a, 0.0], [0.0, 0.0, 15.0]];
    let rpoints = vec![[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]];
    let mut it = seed.iter().cycle();
    let mut next = || *it.next().unwrap();
    let mut h0 = CMatrix::zeros(nb, nb);
    for i in 0..nb {
        h0[(i, i)] = Complex64::new(4.0 * next(), 0.0);
        for j in 0..i {
            let z = Complex64::new(next(), next());
            h0[(i, j)] = z;
            h0[(j, i)] = z.conj();
        }
    }
    let mut blocks = vec![h0];
    for _ in 0..2 {
        let m = CMatrix::from_fn(nb, nb, |_, _| Complex64::new(next(), next()));
        blocks.push(m.clone());
        blocks.push(m.adjoint());
    }
    let pos = |m: &CMatrix| [m.clone(), m.clone() * Complex64::new(0.5, 0.0), CMatrix::zeros(nb, nb)];
    let mut r0 = CMatrix::zeros(nb, nb);
    for i in 0..nb {
        r0[(i, i)] = Complex64::new(next(), 0.0);
    }
    let r_r = (0..blocks.len())
        .map(|i| if i == 0 { pos(&r0) } else { pos(&CMatrix::zeros(nb, nb)) })
        .collect();
    WannierModel::new(cell, rpoints, vec![1; 5], blocks, Some(r_r))
        .unwrap()
        .with_comment("random")
}

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn table_parser_never_panics(text in "\\PC{0,200}") {
        let _ = parse_table(&text);
    }

    #[test]
    fn table_parser_never_panics_on_structured_noise(
        lines in proptest::collection::vec("(# [a-z]{1,4} = [0-9a-z.]{0,6}|[0-9eE+.,-]{0,20}|[a-z_,]{0,12})", 0..12)
    ) {
        let _ = parse_table(&lines.join("\n"));
    }

    #[test]
    fn config_parser_never_panics(text in "\\PC{0,200}") {
        let _ = RunConfig::from_toml_str(&text, "<prop>", Path::new("."));
    }

    #[test]
    fn table_write_then_parse_is_identity(
        rows in proptest::collection::vec((-1e6f64..1e6, -1000i64..1000, -1e-12f64..1e-12), 0..20)
    ) {
        let cells: Vec<Vec<Cell>> = rows.iter().map(|&(a, b, c)| vec![Cell::F(a), Cell::I(b), Cell::F(c)]).collect();
        let text = write_table(&prov(), &["a", "b", "c"], &cells);
        let t = parse_table(&text).unwrap();
        prop_assert_eq!(&t.provenance, &prov());
        prop_assert_eq!(t.rows.len(), rows.len());
        for (r, &(a, b, c)) in t.rows.iter().zip(&rows) {
            prop_assert!((r[0] - a).abs() <= 1e-8 * a.abs());
            prop_assert_eq!(r[1], b as f64);
            prop_assert!((r[2] - c).abs() <= 1e-8 * c.abs());
        }
        // a second pass reproduces the text exactly
        let again: Vec<Vec<Cell>> = t.rows.iter().map(|r| vec![Cell::F(r[0]), Cell::I(r[1] as i64), Cell::F(r[2])]).collect();
        prop_assert_eq!(write_table(&prov(), &["a", "b", "c"], &again), text);
    }

    #[test]
    fn delay_scan_roundtrip(sig in proptest::collection::vec(-1.0f64..1.0, 1..30), t2 in prop_oneof![Just(f64::INFINITY), 1.0f64..100.0]) {
        let taus: Vec<f64> = (0..sig.len()).map(|i| 2.0 + 0.08 * i as f64).collect();
        let s = DelayScan { taus_fs: taus, valley_asymmetry: sig.iter().map(|x| x * 0.5).collect(), sigma: sig, t2_fs: t2 };
        let text = write_delay_scan(&prov(), &s);
        let back = parse_delay_scan(&text).unwrap();
        prop_assert_eq!(write_delay_scan(&prov(), &back), text);
    }

    #[test]
    fn config_canonical_form_is_a_fixed_point(t2 in prop_oneof![Just(f64::INFINITY), 1.0f64..500.0], n in 1usize..40, dt in 0.05f64..0.18) {
        let mut cfg = RunConfig::hbn();
        cfg.set_t2(t2);
        cfg.set_grid(2 * n, 2 * n);
        cfg.set_dt(dt);
        let text = cfg.to_toml();
        let back = RunConfig::from_toml_str(&text, "<prop>", Path::new(".")).unwrap();
        prop_assert_eq!(back.to_toml(), text);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn wannier_files_roundtrip(nb in 1usize..4, seed in proptest::collection::vec(-1.0f64..1.0, 8..24)) {
        let m = random_wannier(nb, &seed);
        let tb = parse_tb(&write_tb(&m).unwrap()).unwrap();
        let hr = parse_hr(&write_hr(&m)).unwrap().with_cell(m.cell);
        for k in [[0.0, 0.0], [0.4, -1.1], [1.7, 0.3]] {
            let h = m.hamiltonian_at(k);
            prop_assert!(max_diff(&h, &tb.hamiltonian_at(k)) < 1e-9);
            prop_assert!(max_diff(&h, &hr.hamiltonian_at(k)) < 1e-9);
        }
        prop_assert_eq!(write_tb(&tb).unwrap(), write_tb(&m).unwrap());
    }

    #[test]
    fn delay_grid_is_increasing_and_bounded(start in -5.0f64..5.0, len in 0.0f64..20.0, step in 0.01f64..1.0) {
        let g = delay_grid(start, start + len, step);
        prop_assert!(!g.is_empty());
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(*g.last().unwrap() <= start + len + 1e-9);
        prop_assert!(start + len - g.last().unwrap() < step + 1e-9);
    }

    #[test]
    fn pulse_spectrum_is_linear_in_amplitude(f in 0.001f64..1.0, w in 3.0f64..9.0) {
        let p = PulseSpec::hbn(Polarization::SigmaMinus, 0.0);
        let a = p.spectrum_at(w);
        let b = p.clone().with_peak_field(f).spectrum_at(w);
        let base = p.peak_field;
        for i in 0..2 {
            prop_assert!((b[i] - a[i] * (f / base)).norm() <= 1e-9 * (1.0 + a[i].norm()));
        }
    }

    #[test]
    fn fit_recovers_synthetic_dephasing(t2 in 3.0f64..60.0) {
        let taus = delay_grid(2.0, 30.0, 0.1);
        let reference: Vec<f64> = taus.iter().map(|t| (t * 18.2).cos() / (1.0 + 0.2 * t)).collect();
        let mk = |sigma: Vec<f64>, t2_fs| DelayScan { taus_fs: taus.clone(), valley_asymmetry: vec![0.0; sigma.len()], sigma, t2_fs };
        let measured: Vec<f64> = taus.iter().zip(&reference).map(|(t, r)| r * (-t / t2).exp()).collect();
        let fit = fit_t2(&mk(measured, t2), &mk(reference, f64::INFINITY), &FitOptions::default()).unwrap();
        prop_assert!((fit.t2_fs - t2).abs() < 1e-3 * t2, "{} vs {}", fit.t2_fs, t2);
    }
}

fn hbn_grid(n: usize) -> (TwoBandModel, KGrid) {
    let m = TwoBandModel::hbn();
    let g = KGrid::new(&m.lattice, n, n).unwrap();
    (m, g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mirrored_populations_reverse_sigma_and_asymmetry(vals in proptest::collection::vec(0.0f64..1.0, 144)) {
        let (m, g) = hbn_grid(12);
        let berry = berry_curvature(&m, &g).unwrap();
        let mut map = PopulationMap::zeros(g.len(), 2);
        for (k, v) in vals.iter().enumerate() {
            map.set(k, 0, 1.0 - v);
            map.set(k, 1, *v);
        }
        let s = vhc(&map, &berry, &g, &[1]).unwrap();
        let sm = vhc(&map.mirrored(), &berry, &g, &[1]).unwrap();
        prop_assert!((s + sm).abs() <= 1e-12 * (1.0 + s.abs()));
        let a = valley_asymmetry(&map, &g, &[1]).unwrap().asymmetry;
        let am = valley_asymmetry(&map.mirrored(), &g, &[1]).unwrap().asymmetry;
        prop_assert!((a + am).abs() < 1e-12);
    }

    #[test]
    fn chern_numbers_are_integers(gap in 0.5f64..8.0, t in 0.5f64..3.0) {
        let m = TwoBandModel::new(2.5, gap, t);
        let g = KGrid::new(&m.lattice, 24, 24).unwrap();
        let b = berry_curvature(&m, &g).unwrap();
        for c in &b.chern {
            prop_assert!((c - c.round()).abs() < 1e-9, "{c}");
            prop_assert!(c.abs() < 1e-3);
        }
    }

    #[test]
    fn valley_labels_partition_the_grid(n in 1usize..20) {
        let (_, g) = hbn_grid(2 * n);
        let k = g.valleys.iter().filter(|&&v| v == Valley::K).count();
        prop_assert_eq!(2 * k, g.len());
        for i in 0..g.len() {
            prop_assert_eq!(g.valleys[g.mirror_index(i)], g.valleys[i].opposite());
        }
    }

    #[test]
    fn pulse_trains_superpose(c2 in 1.0f64..20.0) {
        let a = PulseSpec::hbn(Polarization::y(), 0.0);
        let b = PulseSpec::hbn(Polarization::x(), c2);
        let train = PulseTrain::new(vec![a.clone(), b.clone()]);
        for i in 0..40 {
            let t = -3.0 + i as f64 * 0.6;
            let (ea, eb, et) = (a.efield_at(t), b.efield_at(t), train.efield_at(t));
            prop_assert!((et[0] - ea[0] - eb[0]).abs() < 1e-14 && (et[1] - ea[1] - eb[1]).abs() < 1e-14);
        }
    }
}
