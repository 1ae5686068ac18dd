//! Density-matrix simulation of coherent valley-polarization control in 2D
//! hexagonal crystals driven by trains of few-cycle pulses.

pub mod cli;
pub mod config;
pub mod field;
pub mod fixtures;
pub mod grid;
pub mod io;
pub mod lattice;
pub mod lopt;
pub mod observables;
pub mod sbe;
pub mod scan;
pub mod units;
pub mod wannier;
