//! Few-cycle Gaussian pulses and pulse trains.
//!
//! A pulse centred at `t₀` has the field
//! `E(t) = F₀·exp(−4 ln2 (t−t₀)²/fwhm²)·Re[ê·exp(−i(ω(t−t₀)+φ))]`
//! with `ê` a unit (possibly complex) polarization vector. A Gaussian-windowed
//! cosine carries an exponentially small net area, so the propagator works
//! with a DC-free version of each pulse: the net area is removed with an
//! envelope-shaped correction, which makes `A(±∞) = 0` exactly while keeping
//! `E = −dA/dt`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use thiserror::Error;

use crate::units::HBAR_EV_FS;

/// Envelope half-width, in units of the FWHM, outside which a pulse is
/// treated as exactly zero (the envelope is below 4e-8 of its peak there).
pub const PULSE_SUPPORT_FWHM: f64 = 2.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error("cycle index N must be non-negative, got {0}")]
    NegativeCycle(i64),
    #[error("carrier frequency must be positive, got {0} eV")]
    NonPositiveFrequency(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Polarization {
    /// Real unit vector.
    Linear([f64; 2]),
    /// Counter-clockwise rotation, `ê = (x̂ + iŷ)/√2`.
    SigmaPlus,
    /// Clockwise rotation, `ê = (x̂ − iŷ)/√2`.
    SigmaMinus,
}

impl Polarization {
    pub fn x() -> Self {
        Polarization::Linear([1.0, 0.0])
    }

    pub fn y() -> Self {
        Polarization::Linear([0.0, 1.0])
    }

    pub fn angle_deg(deg: f64) -> Self {
        let r = deg.to_radians();
        Polarization::Linear([r.cos(), r.sin()])
    }

    pub fn vector(&self) -> [Complex64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match *self {
            Polarization::Linear([x, y]) => [Complex64::new(x, 0.0), Complex64::new(y, 0.0)],
            Polarization::SigmaPlus => [Complex64::new(s, 0.0), Complex64::new(0.0, s)],
            Polarization::SigmaMinus => [Complex64::new(s, 0.0), Complex64::new(0.0, -s)],
        }
    }
}

/// Where the carrier phase is referenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CarrierReference {
    /// Phase `ω(t − t₀) + φ`.
    #[default]
    PulseCenter,
    /// Phase `ωt + φ`, common to all pulses of a train.
    GlobalClock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSpec {
    pub carrier_ev: f64,
    /// Full width at half maximum of the field envelope (fs).
    pub fwhm_fs: f64,
    /// Peak field F₀ (V/Å).
    pub peak_field: f64,
    pub polarization: Polarization,
    pub cep_rad: f64,
    pub center_fs: f64,
    pub reference: CarrierReference,
}

impl PulseSpec {
    pub fn new(
        carrier_ev: f64,
        fwhm_fs: f64,
        peak_field: f64,
        polarization: Polarization,
        center_fs: f64,
    ) -> Result<Self, FieldError> {
        let p = PulseSpec {
            carrier_ev,
            fwhm_fs,
            peak_field,
            polarization,
            cep_rad: 0.0,
            center_fs,
            reference: CarrierReference::PulseCenter,
        };
        p.validate()?;
        Ok(p)
    }

    /// Resonant hBN pulse: 6 eV carrier, 1.15 fs FWHM, 0.1 V/Å.
    pub fn hbn(polarization: Polarization, center_fs: f64) -> Self {
        Self::new(6.0, 1.15, 0.1, polarization, center_fs).expect("valid preset")
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |m: String| Err(FieldError::InvalidPulse(m));
        if !(self.carrier_ev > 0.0 && self.carrier_ev.is_finite()) {
            return bad(format!("carrier must be positive, got {}", self.carrier_ev));
        }
        if !(self.fwhm_fs > 0.0 && self.fwhm_fs.is_finite()) {
            return bad(format!("fwhm must be positive, got {}", self.fwhm_fs));
        }
        if !(self.peak_field >= 0.0 && self.peak_field.is_finite()) {
            return bad(format!("peak field must be non-negative, got {}", self.peak_field));
        }
        if !self.center_fs.is_finite() || !self.cep_rad.is_finite() {
            return bad("center and CEP must be finite".into());
        }
        if let Polarization::Linear([x, y]) = self.polarization {
            if ((x * x + y * y).sqrt() - 1.0).abs() > 1e-12 {
                return bad(format!("linear polarization ({x}, {y}) is not normalized"));
            }
        }
        Ok(())
    }

    pub fn with_center(mut self, center_fs: f64) -> Self {
        self.center_fs = center_fs;
        self
    }

    pub fn with_polarization(mut self, polarization: Polarization) -> Self {
        self.polarization = polarization;
        self
    }

    pub fn with_peak_field(mut self, peak_field: f64) -> Self {
        self.peak_field = peak_field;
        self
    }

    /// Carrier angular frequency in rad/fs.
    pub fn omega(&self) -> f64 {
        self.carrier_ev / HBAR_EV_FS
    }

    /// Gaussian exponent `a` in `exp(−a s²)`.
    fn alpha(&self) -> f64 {
        4.0 * LN_2 / (self.fwhm_fs * self.fwhm_fs)
    }

    pub fn envelope(&self, t: f64) -> f64 {
        let s = t - self.center_fs;
        (-self.alpha() * s * s).exp()
    }

    /// `∫ envelope dt` (fs).
    fn envelope_area(&self) -> f64 {
        (PI / self.alpha()).sqrt()
    }

    /// Carrier phase at the pulse centre.
    fn phase_at_center(&self) -> f64 {
        match self.reference {
            CarrierReference::PulseCenter => self.cep_rad,
            CarrierReference::GlobalClock => self.cep_rad + self.omega() * self.center_fs,
        }
    }

    /// Time interval outside which the pulse is treated as zero.
    pub fn support(&self) -> (f64, f64) {
        let w = PULSE_SUPPORT_FWHM * self.fwhm_fs;
        (self.center_fs - w, self.center_fs + w)
    }

    /// Field from the defining formula (V/Å).
    pub fn efield_at(&self, t: f64) -> [f64; 2] {
        let s = t - self.center_fs;
        let env = self.peak_field * (-self.alpha() * s * s).exp();
        if env == 0.0 {
            return [0.0, 0.0];
        }
        let carrier = Complex64::from_polar(1.0, -(self.omega() * s + self.phase_at_center()));
        let e = self.polarization.vector();
        [env * (e[0] * carrier).re, env * (e[1] * carrier).re]
    }

    /// Net area `∫E dt` of the formula field (V·fs/Å).
    pub fn net_area(&self) -> [f64; 2] {
        let g = self.envelope_area() * (-self.omega().powi(2) / (4.0 * self.alpha())).exp();
        let rot = Complex64::from_polar(self.peak_field * g, -self.phase_at_center());
        let e = self.polarization.vector();
        [(e[0] * rot).re, (e[1] * rot).re]
    }

    /// DC-free field used for propagation (V/Å).
    pub fn propagation_field_at(&self, t: f64) -> [f64; 2] {
        let e = self.efield_at(t);
        let area = self.net_area();
        let w = self.envelope(t) / self.envelope_area();
        [e[0] - area[0] * w, e[1] - area[1] * w]
    }

    /// Vector potential `A(t) = −∫_{−∞}^t E_dc dt′` (V·fs/Å).
    pub fn afield_at(&self, t: f64) -> [f64; 2] {
        let (lo, hi) = self.support();
        if t <= lo {
            return [0.0, 0.0];
        }
        if t >= hi {
            return [0.0, 0.0];
        }
        let tol = 1e-13 * self.peak_field.max(1e-300) * self.fwhm_fs;
        [0, 1].map(|axis| {
            -adaptive_simpson(&|x| self.propagation_field_at(x)[axis], lo - self.fwhm_fs, t, tol)
        })
    }

    /// Complex spectrum `Ẽ(Ω) = ∫ E_dc(t) e^{iΩt/ħ} dt` (V·fs/Å), Ω in eV.
    pub fn spectrum_at(&self, omega_ev: f64) -> [Complex64; 2] {
        let nu = omega_ev / HBAR_EV_FS;
        let a = self.alpha();
        let g = |x: f64| self.envelope_area() * (-x * x / (4.0 * a)).exp();
        let w = self.omega();
        let shift = Complex64::from_polar(1.0, nu * self.center_fs);
        let phi = self.phase_at_center();
        let e = self.polarization.vector();
        let area = self.net_area();
        let dc = (-nu * nu / (4.0 * a)).exp();
        [0, 1].map(|i| {
            let plus = e[i] * Complex64::from_polar(1.0, -phi) * g(nu - w);
            let minus = e[i].conj() * Complex64::from_polar(1.0, phi) * g(nu + w);
            shift * ((plus + minus) * (0.5 * self.peak_field) - area[i] * dc)
        })
    }
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    // split into pieces no longer than a few carrier cycles so the first
    // Simpson estimate cannot alias
    let pieces = (((b - a).abs() / 0.05).ceil() as usize).max(1);
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    for i in 0..pieces {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == pieces { b } else { lo + h };
        let (flo, fhi) = (f(lo), f(hi));
        let (m, fm, whole) = simpson(f, lo, flo, hi, fhi);
        total += recurse(f, lo, flo, hi, fhi, whole, m, fm, tol / pieces as f64, 22);
    }
    total
}

/// Ordered list of pulses; the total field is their superposition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PulseTrain {
    pub pulses: Vec<PulseSpec>,
}

/// Field and vector potential at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub t: f64,
    /// DC-free field (V/Å).
    pub e: [f64; 2],
    /// Vector potential (V·fs/Å).
    pub a: [f64; 2],
}

impl PulseTrain {
    pub fn new(pulses: Vec<PulseSpec>) -> Self {
        PulseTrain { pulses }
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    pub fn efield_at(&self, t: f64) -> [f64; 2] {
        sum2(self.pulses.iter().map(|p| p.efield_at(t)))
    }

    pub fn propagation_field_at(&self, t: f64) -> [f64; 2] {
        sum2(self.pulses.iter().map(|p| p.propagation_field_at(t)))
    }

    pub fn afield_at(&self, t: f64) -> [f64; 2] {
        sum2(self.pulses.iter().map(|p| p.afield_at(t)))
    }

    pub fn sample(&self, t: f64) -> FieldSample {
        FieldSample {
            t,
            e: self.propagation_field_at(t),
            a: self.afield_at(t),
        }
    }

    pub fn spectrum_at(&self, omega_ev: f64) -> [Complex64; 2] {
        let mut out = [Complex64::new(0.0, 0.0); 2];
        for p in &self.pulses {
            let s = p.spectrum_at(omega_ev);
            out[0] += s[0];
            out[1] += s[1];
        }
        out
    }

    /// Merged support intervals of all pulses, in time order.
    pub fn active_windows(&self) -> Vec<(f64, f64)> {
        let mut w: Vec<(f64, f64)> = self
            .pulses
            .iter()
            .filter(|p| p.peak_field > 0.0)
            .map(|p| p.support())
            .collect();
        w.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (lo, hi) in w {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        merged
    }

    /// Samples `E` and `A` at `t_start + j·step` for `j = 0..n`. `A` is built
    /// by cumulative quadrature between consecutive samples.
    pub fn sample_grid(&self, t_start: f64, step: f64, n: usize) -> Vec<FieldSample> {
        let mut out = Vec::with_capacity(n);
        let mut a = self.afield_at(t_start);
        let tol = 1e-16 * self.pulses.iter().map(|p| p.peak_field).fold(0.0, f64::max).max(1e-300);
        for j in 0..n {
            let t = t_start + j as f64 * step;
            if j > 0 {
                let t_prev = t_start + (j - 1) as f64 * step;
                for axis in 0..2 {
                    a[axis] -= adaptive_simpson(&|x| self.propagation_field_at(x)[axis], t_prev, t, tol);
                }
            }
            out.push(FieldSample {
                t,
                e: self.propagation_field_at(t),
                a,
            });
        }
        out
    }
}

fn sum2(it: impl Iterator<Item = [f64; 2]>) -> [f64; 2] {
    it.fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelaySign {
    /// `+π/2`: synthesizes σ₋ light.
    Plus,
    /// `−π/2`: synthesizes σ₊ light.
    Minus,
}

/// Delay between a first ŷ pulse and a second x̂ pulse that makes the pair
/// circularly polarized at `ω_F`: `τ = (ħ/ω_F)(±π/2 + 2πN)` in fs.
pub fn two_pulse_delay_for_helicity(omega_f_ev: f64, n: i64, sign: DelaySign) -> Result<f64, FieldError> {
    if !(omega_f_ev > 0.0) {
        return Err(FieldError::NonPositiveFrequency(omega_f_ev));
    }
    if n < 0 {
        return Err(FieldError::NegativeCycle(n));
    }
    let quarter = match sign {
        DelaySign::Plus => 0.5 * PI,
        DelaySign::Minus => -0.5 * PI,
    };
    Ok(HBAR_EV_FS / omega_f_ev * (quarter + 2.0 * PI * n as f64))
}

/// Sign of the time-averaged `(E × dE/dt)_z` over `[t0, t1]`: +1 for
/// counter-clockwise rotation, −1 for clockwise.
pub fn lissajous_chirality(train: &PulseTrain, t0: f64, t1: f64, samples: usize) -> f64 {
    let h = (t1 - t0) / samples as f64;
    let mut acc = 0.0;
    for i in 1..samples {
        let t = t0 + i as f64 * h;
        let e = train.efield_at(t);
        let ep = train.efield_at(t + 1e-4);
        let em = train.efield_at(t - 1e-4);
        let de = [(ep[0] - em[0]) / 2e-4, (ep[1] - em[1]) / 2e-4];
        acc += e[0] * de[1] - e[1] * de[0];
    }
    acc.signum()
}

/// Helicity of the spectral component at `Ω`: `sign Im(Ẽx* Ẽy)`.
pub fn spectral_chirality(train: &PulseTrain, omega_ev: f64) -> f64 {
    let s = train.spectrum_at(omega_ev);
    (s[0].conj() * s[1]).im.signum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse(pol: Polarization) -> PulseSpec {
        PulseSpec::hbn(pol, 0.0)
    }

    #[test]
    fn peak_value_and_half_width() {
        let p = pulse(Polarization::x());
        assert_eq!(p.efield_at(0.0), [0.1, 0.0]);
        for t in [-0.575, 0.575] {
            assert!((p.envelope(t) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_minus_rotates_clockwise() {
        let train = PulseTrain::new(vec![pulse(Polarization::SigmaMinus)]);
        assert_eq!(lissajous_chirality(&train, -3.0, 3.0, 4000), -1.0);
        let train = PulseTrain::new(vec![pulse(Polarization::SigmaPlus)]);
        assert_eq!(lissajous_chirality(&train, -3.0, 3.0, 4000), 1.0);
    }

    #[test]
    fn vector_potential_vanishes_outside() {
        let p = pulse(Polarization::angle_deg(30.0));
        assert_eq!(p.afield_at(-10.0), [0.0, 0.0]);
        let near_end = p.afield_at(p.support().1 - 1e-9);
        assert!(near_end.iter().all(|v| v.abs() < 1e-10 * crate::units::FIELD_AU_V_PER_ANGSTROM * crate::units::TIME_AU_FS));
    }

    #[test]
    fn dc_removal_zeroes_net_area() {
        let p = pulse(Polarization::x());
        let (lo, hi) = p.support();
        let raw = adaptive_simpson(&|t| p.efield_at(t)[0], lo - 2.0, hi + 2.0, 1e-14);
        assert!((raw - p.net_area()[0]).abs() < 1e-11 * p.peak_field);
        let free = adaptive_simpson(&|t| p.propagation_field_at(t)[0], lo - 2.0, hi + 2.0, 1e-14);
        assert!(free.abs() < 1e-11 * p.peak_field);
    }

    #[test]
    fn delay_for_helicity_values() {
        let t = two_pulse_delay_for_helicity(6.0, 7, DelaySign::Plus).unwrap();
        assert!((t - 4.9973).abs() < 1e-3, "{t}");
        let t0 = two_pulse_delay_for_helicity(6.0, 0, DelaySign::Plus).unwrap();
        assert!((t0 - 0.1723).abs() < 1e-3);
        let t8 = two_pulse_delay_for_helicity(6.0, 8, DelaySign::Plus).unwrap();
        assert!((t8 - t - 0.6893).abs() < 1e-3);
        assert!(two_pulse_delay_for_helicity(6.0, -1, DelaySign::Plus).is_err());
        assert!(two_pulse_delay_for_helicity(0.0, 1, DelaySign::Plus).is_err());
    }

    #[test]
    fn rejects_invalid_pulses() {
        assert!(PulseSpec::new(-1.0, 1.0, 0.1, Polarization::x(), 0.0).is_err());
        assert!(PulseSpec::new(1.0, 0.0, 0.1, Polarization::x(), 0.0).is_err());
        assert!(PulseSpec::new(1.0, 1.0, -0.1, Polarization::x(), 0.0).is_err());
        assert!(PulseSpec::new(1.0, 1.0, 0.1, Polarization::Linear([1.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn active_windows_merge() {
        let train = PulseTrain::new(vec![
            pulse(Polarization::x()).with_center(10.0),
            pulse(Polarization::y()),
            pulse(Polarization::y()).with_center(1.0),
        ]);
        let w = train.active_windows();
        assert_eq!(w.len(), 2);
        assert!(w[0].0 < w[0].1 && w[0].1 < w[1].0);
    }
}
