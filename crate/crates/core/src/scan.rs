//! Delay scans σ(τ), the T₂ fit against a dephasing-free reference, and the
//! four-pulse valley switch.

use thiserror::Error;

use crate::field::{Polarization, PulseSpec, PulseTrain};
use crate::observables::{valley_asymmetry, vhc, ObservableError, PopulationMap, VhcTrace};
use crate::sbe::{band_extent, DensityMatrixGrid, PropagationConfig, PropagationError, PropagationResult, Simulation};
use crate::units::HBAR_EV_FS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("delays must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("delay spacing {spacing:.4} fs does not resolve the {period:.4} fs oscillation; use spacing < {limit:.4} fs")]
    UnderSampled { spacing: f64, period: f64, limit: f64 },
    #[error("at τ = {tau_fs} fs: {source}")]
    AtDelay { tau_fs: f64, source: PropagationError },
    #[error("fit window [{lo:.3}, {hi:.3}] fs holds {points} points; at least 8 are needed")]
    WindowTooSmall { lo: f64, hi: f64, points: usize },
    #[error("scans do not share a delay grid: {0}")]
    GridMismatch(String),
    #[error("switch protocol needs four pulses and three delays")]
    BadProtocol,
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
}

/// σ(τ) over a delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayScan {
    pub taus_fs: Vec<f64>,
    pub sigma: Vec<f64>,
    pub valley_asymmetry: Vec<f64>,
    /// Dephasing time used to generate the scan (fs).
    pub t2_fs: f64,
}

impl DelayScan {
    pub fn peak_abs(&self) -> f64 {
        self.sigma.iter().fold(0.0f64, |a, s| a.max(s.abs()))
    }

    /// σ divided by its largest magnitude.
    pub fn normalized(&self) -> Vec<f64> {
        let p = self.peak_abs();
        self.sigma.iter().map(|s| if p > 0.0 { s / p } else { 0.0 }).collect()
    }
}

/// Two pulses; the second is re-centred at `first.center_fs + τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulsePair {
    pub first: PulseSpec,
    pub second: PulseSpec,
}

impl PulsePair {
    /// Identical hBN pulses polarized along ŷ then x̂.
    pub fn hbn_perpendicular() -> Self {
        PulsePair {
            first: PulseSpec::hbn(Polarization::y(), 0.0),
            second: PulseSpec::hbn(Polarization::x(), 0.0),
        }
    }

    pub fn with_peak_field(self, f: f64) -> Self {
        PulsePair {
            first: self.first.with_peak_field(f),
            second: self.second.with_peak_field(f),
        }
    }

    pub fn train(&self, tau_fs: f64) -> PulseTrain {
        PulseTrain::new(vec![
            self.first.clone(),
            self.second.clone().with_center(self.first.center_fs + tau_fs),
        ])
    }
}

/// Uniform delay grid `start, start + step, … ≤ stop`.
pub fn delay_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

fn check_taus(taus: &[f64]) -> Result<(), ScanError> {
    for i in 1..taus.len() {
        if !(taus[i] > taus[i - 1]) {
            return Err(ScanError::NotIncreasing(i));
        }
    }
    Ok(())
}

/// One propagation per delay; σ is taken from the populations after the pair.
///
/// The state just before the second pulse switches on depends on the first
/// pulse alone, so a single first-pulse run is advanced through the sorted
/// delays and every delay branches from it, propagating only from the start
/// of the second pulse.
pub fn scan_delay(
    sim: &Simulation,
    pair: &PulsePair,
    taus_fs: &[f64],
    cfg: &PropagationConfig,
) -> Result<DelayScan, ScanError> {
    check_taus(taus_fs)?;
    let ext = band_extent(sim.model, sim.kgrid, cfg.filled_bands);
    let gap = ext.min_empty_ev - ext.max_filled_ev;
    if taus_fs.len() > 1 && gap > 0.0 {
        let limit = std::f64::consts::PI * HBAR_EV_FS / (2.0 * gap);
        let spacing = taus_fs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        if spacing >= limit {
            return Err(ScanError::UnderSampled {
                spacing,
                period: 2.0 * std::f64::consts::PI * HBAR_EV_FS / gap,
                limit,
            });
        }
    }
    let dt_fs = crate::units::au_to_fs(cfg.dt_au);
    let t0 = cfg.t_start_fs.unwrap_or(pair.first.support().0);
    let first = PulseTrain::new(vec![pair.first.clone()]);
    let conduction = cfg.conduction(sim.model.num_bands());
    let branch_cfg = PropagationConfig {
        t_start_fs: Some(t0),
        t_end_fs: None,
        snapshot_times_fs: Vec::new(),
        keep_final_state: false,
        ..cfg.clone()
    };
    let mut prefix: Option<DensityMatrixGrid> = None;
    let mut sigma = Vec::with_capacity(taus_fs.len());
    let mut asym = Vec::with_capacity(taus_fs.len());
    for &tau in taus_fs {
        let train = pair.train(tau);
        let lo2 = train.pulses[1].support().0;
        let n_branch = ((lo2 - t0) / dt_fs).floor();
        let at_delay = |source| ScanError::AtDelay { tau_fs: tau, source };
        let r = if n_branch >= 1.0 {
            let t_branch = t0 + n_branch * dt_fs;
            let current = prefix.as_ref().map_or(t0, |p| p.t_fs);
            if prefix.is_none() || t_branch > current + 1e-9 * dt_fs {
                let c = PropagationConfig {
                    t_start_fs: Some(t0),
                    t_end_fs: Some(t_branch),
                    record_stride: usize::MAX,
                    snapshot_times_fs: Vec::new(),
                    keep_final_state: true,
                    ..cfg.clone()
                };
                let next = sim.propagate_from(prefix.as_ref(), &first, &c).map_err(at_delay)?;
                prefix = next.final_state;
            }
            sim.propagate_from(prefix.as_ref(), &train, &branch_cfg)
        } else {
            sim.propagate(&train, &branch_cfg)
        }
        .map_err(at_delay)?;
        let a = valley_asymmetry(&r.final_populations, sim.kgrid, &conduction)?;
        sigma.push(r.sigma_final);
        asym.push(a.asymmetry);
    }
    Ok(DelayScan {
        taus_fs: taus_fs.to_vec(),
        sigma,
        valley_asymmetry: asym,
        t2_fs: cfg.t2_fs,
    })
}

/// Result of fitting `σ(τ) = σ_ref(τ)·e^{−τ/T₂}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T2FitResult {
    /// Fitted dephasing time (fs); `f64::INFINITY` when no decay is detected.
    pub t2_fs: f64,
    /// RMS of `σ − σ_ref e^{−τ/T₂}` over the window.
    pub residual_rms: f64,
    pub window_fs: (f64, f64),
    /// The measured/reference ratio shows no decay within the bracket.
    pub no_decay: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Window start; defaults to `max(2 fs, 2·pulse_fwhm)`.
    pub window_start_fs: Option<f64>,
    pub window_end_fs: Option<f64>,
    pub pulse_fwhm_fs: f64,
    pub bracket_fs: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            window_start_fs: None,
            window_end_fs: None,
            pulse_fwhm_fs: 1.15,
            bracket_fs: (0.5, 500.0),
        }
    }
}

/// One-parameter relative least-squares fit by golden-section search on
/// `ln T₂` within the bracket.
pub fn fit_t2(measured: &DelayScan, reference: &DelayScan, opts: &FitOptions) -> Result<T2FitResult, ScanError> {
    if measured.taus_fs.len() != reference.taus_fs.len()
        || measured
            .taus_fs
            .iter()
            .zip(&reference.taus_fs)
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        return Err(ScanError::GridMismatch(format!(
            "{} vs {} delays",
            measured.taus_fs.len(),
            reference.taus_fs.len()
        )));
    }
    let tau_max = measured.taus_fs.last().copied().unwrap_or(0.0);
    let lo = opts.window_start_fs.unwrap_or((2.0f64).max(2.0 * opts.pulse_fwhm_fs));
    let hi = opts.window_end_fs.unwrap_or(tau_max).min(4.0 * opts.bracket_fs.1).min(tau_max);
    let idx: Vec<usize> = (0..measured.taus_fs.len())
        .filter(|&i| measured.taus_fs[i] >= lo && measured.taus_fs[i] <= hi)
        .collect();
    if idx.len() < 8 {
        return Err(ScanError::WindowTooSmall { lo, hi, points: idx.len() });
    }
    let norm: f64 = idx.iter().map(|&i| measured.sigma[i].powi(2)).sum::<f64>().max(f64::MIN_POSITIVE);
    let sse = |t2: f64| -> f64 {
        idx.iter()
            .map(|&i| {
                let model = reference.sigma[i] * (-measured.taus_fs[i] / t2).exp();
                (measured.sigma[i] - model).powi(2)
            })
            .sum::<f64>()
    };
    let cost = |x: f64| sse(x.exp()) / norm;
    let (mut a, mut b) = (opts.bracket_fs.0.ln(), opts.bracket_fs.1.ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while b - a > 1e-12 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = cost(d);
        }
    }
    let x = 0.5 * (a + b);
    let best = x.exp();
    let rms = |t2: f64| (sse(t2) / idx.len() as f64).sqrt();
    let at_edge = x >= opts.bracket_fs.1.ln() - 1e-6;
    let flat = sse(f64::INFINITY) <= sse(best);
    if at_edge || flat {
        return Ok(T2FitResult {
            t2_fs: f64::INFINITY,
            residual_rms: rms(f64::INFINITY),
            window_fs: (lo, hi),
            no_decay: true,
        });
    }
    Ok(T2FitResult {
        t2_fs: best,
        residual_rms: rms(best),
        window_fs: (lo, hi),
        no_decay: false,
    })
}

/// Four-pulse valley switch: pulses at `t₁`, `t₁ + delays[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSpec {
    pub pulse: PulseSpec,
    pub polarizations: [Polarization; 4],
    /// Delays of pulses 2–4 relative to pulse 1 (fs).
    pub delays_fs: [f64; 3],
}

impl SwitchSpec {
    /// ŷ, x̂, ŷ, x̂ at 0, 4.8, 9.6 and 14.8 fs.
    pub fn hbn() -> Self {
        SwitchSpec {
            pulse: PulseSpec::hbn(Polarization::y(), 0.0),
            polarizations: [Polarization::y(), Polarization::x(), Polarization::y(), Polarization::x()],
            delays_fs: [4.8, 9.6, 14.8],
        }
    }

    pub fn pulses(&self) -> Vec<PulseSpec> {
        let t1 = self.pulse.center_fs;
        let centers = [t1, t1 + self.delays_fs[0], t1 + self.delays_fs[1], t1 + self.delays_fs[2]];
        centers
            .iter()
            .zip(&self.polarizations)
            .map(|(&c, pol)| self.pulse.clone().with_center(c).with_polarization(*pol))
            .collect()
    }

    pub fn train(&self) -> PulseTrain {
        PulseTrain::new(self.pulses())
    }
}

/// Populations and σ after each cumulative stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchResult {
    pub t2_fs: f64,
    /// σ(t) of the full four-pulse sequence.
    pub trace: VhcTrace,
    pub stage_maps: Vec<PopulationMap>,
    pub stage_sigma: Vec<f64>,
    pub stage_asymmetry: Vec<f64>,
    pub run: PropagationResult,
}

impl SwitchResult {
    pub fn final_sigma(&self) -> f64 {
        self.stage_sigma.last().copied().unwrap_or(0.0)
    }
}

/// Runs the cumulative one- to four-pulse sequences.
///
/// With disjoint pulse windows, stage `n` is identical to the state of the
/// full sequence at the end of pulse `n`, so a single run with snapshots
/// supplies every stage. Overlapping windows fall back to separate runs.
pub fn switch_protocol(sim: &Simulation, spec: &SwitchSpec, cfg: &PropagationConfig) -> Result<SwitchResult, ScanError> {
    let pulses = spec.pulses();
    let train = PulseTrain::new(pulses.clone());
    let supports: Vec<(f64, f64)> = pulses.iter().map(|p| p.support()).collect();
    let disjoint = supports.windows(2).all(|w| w[1].0 > w[0].1);
    let conduction = cfg.conduction(sim.model.num_bands());
    let t0 = cfg.t_start_fs.unwrap_or(supports[0].0);
    let dt_fs = crate::units::au_to_fs(cfg.dt_au);
    // stage ends snapped to the step grid
    let stage_end = |i: usize| t0 + ((supports[i].1 - t0) / dt_fs).ceil() * dt_fs;

    let full_cfg = PropagationConfig {
        t_start_fs: Some(t0),
        snapshot_times_fs: if disjoint { (0..4).map(stage_end).collect() } else { Vec::new() },
        ..cfg.clone()
    };
    let run = sim.propagate(&train, &full_cfg)?;
    let stage_maps: Vec<PopulationMap> = if disjoint {
        run.snapshots.clone()
    } else {
        let mut maps = Vec::with_capacity(4);
        for n in 1..4 {
            let c = PropagationConfig {
                t_start_fs: Some(t0),
                t_end_fs: Some(stage_end(n - 1)),
                snapshot_times_fs: Vec::new(),
                ..cfg.clone()
            };
            maps.push(sim.propagate(&PulseTrain::new(pulses[..n].to_vec()), &c)?.final_populations);
        }
        maps.push(run.final_populations.clone());
        maps
    };
    let mut stage_sigma = Vec::with_capacity(4);
    let mut stage_asymmetry = Vec::with_capacity(4);
    for m in &stage_maps {
        stage_sigma.push(vhc(m, &sim.berry, sim.kgrid, &conduction)?);
        stage_asymmetry.push(valley_asymmetry(m, sim.kgrid, &conduction)?.asymmetry);
    }
    Ok(SwitchResult {
        t2_fs: cfg.t2_fs,
        trace: run.trace.clone(),
        stage_maps,
        stage_sigma,
        stage_asymmetry,
        run,
    })
}

/// The switch protocol for several dephasing times.
pub fn switch_t2_sweep(
    sim: &Simulation,
    spec: &SwitchSpec,
    cfg: &PropagationConfig,
    t2s_fs: &[f64],
) -> Result<Vec<SwitchResult>, ScanError> {
    t2s_fs
        .iter()
        .map(|&t2| switch_protocol(sim, spec, &cfg.clone().with_t2(t2)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(t2: f64) -> (DelayScan, DelayScan) {
        let taus = delay_grid(0.0, 30.0, 0.08);
        let reference: Vec<f64> = taus
            .iter()
            .map(|t| (t * 9.1).cos() / (1.0 + 0.3 * t) + 0.05)
            .collect();
        let measured = taus
            .iter()
            .zip(&reference)
            .map(|(t, r)| r * (-t / t2).exp())
            .collect();
        let mk = |sigma: Vec<f64>, t2_fs| DelayScan {
            taus_fs: taus.clone(),
            valley_asymmetry: vec![0.0; sigma.len()],
            sigma,
            t2_fs,
        };
        (mk(measured, t2), mk(reference, f64::INFINITY))
    }

    #[test]
    fn exact_exponential_is_recovered() {
        for t2 in [3.0, 10.0, 30.0, 100.0] {
            let (m, r) = synthetic(t2);
            let fit = fit_t2(&m, &r, &FitOptions::default()).unwrap();
            assert!((fit.t2_fs - t2).abs() < 1e-6 * t2, "{} vs {t2}", fit.t2_fs);
            assert!(!fit.no_decay);
        }
    }

    #[test]
    fn identical_scans_report_no_decay() {
        let (_, r) = synthetic(10.0);
        let fit = fit_t2(&r, &r, &FitOptions::default()).unwrap();
        assert!(fit.no_decay && fit.t2_fs.is_infinite());
    }

    #[test]
    fn short_window_rejected() {
        let (m, r) = synthetic(10.0);
        let opts = FitOptions {
            window_start_fs: Some(2.0),
            window_end_fs: Some(2.4),
            ..Default::default()
        };
        assert!(matches!(fit_t2(&m, &r, &opts), Err(ScanError::WindowTooSmall { .. })));
    }

    #[test]
    fn delay_grid_is_inclusive() {
        let g = delay_grid(2.0, 10.0, 0.08);
        assert_eq!(g.len(), 101);
        assert!((g[100] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn hbn_switch_delays() {
        let p = SwitchSpec::hbn().pulses();
        assert_eq!(p.len(), 4);
        assert!((p[3].center_fs - 14.8).abs() < 1e-12);
        assert_eq!(p[2].polarization, Polarization::y());
    }
}
