//! Run configuration: a sectioned TOML document with units in the key names.
//!
//! ```toml
//! [model]
//! kind = "two_band"
//! lattice_constant_angstrom = 2.5
//! gap_ev = 6.0
//! hopping_ev = 2.3
//!
//! [grid]
//! n1 = 120
//! n2 = 120
//!
//! [[pulses]]
//! carrier_ev = 6.0
//! fwhm_fs = 1.15
//! field_v_per_angstrom = 0.1
//! polarization = "y"
//! center_fs = 0.0
//!
//! [propagation]
//! dt_au = 0.18
//! t2_fs = inf
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::{CarrierReference, Polarization, PulseSpec, PulseTrain};
use crate::grid::KGrid;
use crate::lattice::{BandModel, TwoBandModel, Vec2};
use crate::scan::{delay_grid, FitOptions, PulsePair, SwitchSpec};
use crate::sbe::{PropagationConfig, DEFAULT_DT_AU};
use crate::wannier::{read_hr, read_tb, WannierError, WannierModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: field `{field}`: {message}")]
    Field {
        origin: String,
        field: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Wannier {
        path: String,
        #[source]
        source: WannierError,
    },
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TwoBand,
    Wannier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WannierFormat {
    /// `seedname_tb.dat`: cell, Hamiltonian and position blocks.
    Tb,
    /// `seedname_hr.dat`: Hamiltonian blocks only.
    Hr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_lattice_constant")]
    pub lattice_constant_angstrom: f64,
    #[serde(default = "default_gap")]
    pub gap_ev: f64,
    #[serde(default = "default_hopping")]
    pub hopping_ev: f64,
    /// Relative paths are resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wannier_file: Option<PathBuf>,
    /// Inferred from the file name (`*_hr.dat` → hr) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wannier_format: Option<WannierFormat>,
    /// `_hr.dat` files carry no cell; a hexagonal cell with
    /// `lattice_constant_angstrom` is used unless this is false.
    #[serde(default = "yes")]
    pub hr_hexagonal_cell: bool,
    #[serde(default = "one")]
    pub filled_bands: usize,
    /// Bands entering σ and the valley asymmetry; every empty band when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conduction_bands: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Defaults: 240 for the two-band model, 96 for Wannier models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n2: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub carrier_ev: f64,
    pub fwhm_fs: f64,
    pub field_v_per_angstrom: f64,
    /// `x`, `y`, `sigma+`, `sigma-` or `linear` (with `polarization_angle_deg`).
    pub polarization: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarization_angle_deg: Option<f64>,
    #[serde(default)]
    pub cep_rad: f64,
    #[serde(default)]
    pub center_fs: f64,
    #[serde(default = "default_reference")]
    pub carrier_reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSection {
    #[serde(default = "default_dt")]
    pub dt_au: f64,
    #[serde(default = "infinity")]
    pub t2_fs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_start_fs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end_fs: Option<f64>,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub include_holes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(default = "default_tau_start")]
    pub tau_start_fs: f64,
    #[serde(default = "default_tau_stop")]
    pub tau_stop_fs: f64,
    #[serde(default = "default_tau_step")]
    pub tau_step_fs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window_start_fs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window_end_fs: Option<f64>,
    #[serde(default = "default_bracket")]
    pub fit_bracket_fs: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSection {
    /// Delays of pulses 2–4 relative to pulse 1.
    #[serde(default = "default_switch_delays")]
    pub delays_fs: [f64; 3],
    #[serde(default = "default_switch_polarizations")]
    pub polarizations: [String; 4],
    #[serde(default = "default_sweep")]
    pub t2_sweep_fs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsSection {
    /// Waypoint labels: `G`, `K`, `M`, `K'`.
    #[serde(default = "default_path")]
    pub path: Vec<String>,
    #[serde(default = "default_samples")]
    pub samples_per_segment: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub pulses: Vec<PulseSection>,
    #[serde(default)]
    pub propagation: PropagationSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub switch: SwitchSection,
    #[serde(default)]
    pub bands: BandsSection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    pub origin: String,
}

fn default_lattice_constant() -> f64 {
    2.5
}
fn default_gap() -> f64 {
    6.0
}
fn default_hopping() -> f64 {
    2.3
}
fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn default_reference() -> String {
    "pulse_center".into()
}
fn default_dt() -> f64 {
    DEFAULT_DT_AU
}
fn infinity() -> f64 {
    f64::INFINITY
}
fn default_stride() -> usize {
    10
}
fn default_tau_start() -> f64 {
    2.0
}
fn default_tau_stop() -> f64 {
    14.0
}
fn default_tau_step() -> f64 {
    0.08
}
fn default_bracket() -> [f64; 2] {
    [0.5, 500.0]
}
fn default_switch_delays() -> [f64; 3] {
    [4.8, 9.6, 14.8]
}
fn default_switch_polarizations() -> [String; 4] {
    ["y", "x", "y", "x"].map(String::from)
}
fn default_sweep() -> Vec<f64> {
    vec![f64::INFINITY, 100.0, 20.0, 7.0]
}
fn default_path() -> Vec<String> {
    ["G", "K", "M", "G"].map(String::from).to_vec()
}
fn default_samples() -> usize {
    100
}

impl Default for PropagationSection {
    fn default() -> Self {
        PropagationSection {
            dt_au: default_dt(),
            t2_fs: infinity(),
            t_start_fs: None,
            t_end_fs: None,
            record_stride: default_stride(),
            include_holes: false,
        }
    }
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            tau_start_fs: default_tau_start(),
            tau_stop_fs: default_tau_stop(),
            tau_step_fs: default_tau_step(),
            fit_window_start_fs: None,
            fit_window_end_fs: None,
            fit_bracket_fs: default_bracket(),
        }
    }
}

impl Default for SwitchSection {
    fn default() -> Self {
        SwitchSection {
            delays_fs: default_switch_delays(),
            polarizations: default_switch_polarizations(),
            t2_sweep_fs: default_sweep(),
        }
    }
}

impl Default for BandsSection {
    fn default() -> Self {
        BandsSection {
            path: default_path(),
            samples_per_segment: default_samples(),
        }
    }
}

impl PulseSection {
    pub fn from_spec(p: &PulseSpec) -> Self {
        let (polarization, polarization_angle_deg) = match p.polarization {
            Polarization::SigmaPlus => ("sigma+".to_string(), None),
            Polarization::SigmaMinus => ("sigma-".to_string(), None),
            Polarization::Linear([1.0, 0.0]) => ("x".to_string(), None),
            Polarization::Linear([0.0, 1.0]) => ("y".to_string(), None),
            Polarization::Linear([x, y]) => ("linear".to_string(), Some(y.atan2(x).to_degrees())),
        };
        PulseSection {
            carrier_ev: p.carrier_ev,
            fwhm_fs: p.fwhm_fs,
            field_v_per_angstrom: p.peak_field,
            polarization,
            polarization_angle_deg,
            cep_rad: p.cep_rad,
            center_fs: p.center_fs,
            carrier_reference: match p.reference {
                CarrierReference::PulseCenter => "pulse_center".into(),
                CarrierReference::GlobalClock => "global_clock".into(),
            },
        }
    }
}

/// A model built from a config.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    TwoBand(TwoBandModel),
    Wannier(WannierModel),
}

impl LoadedModel {
    pub fn as_dyn(&self) -> &dyn BandModel {
        match self {
            LoadedModel::TwoBand(m) => m,
            LoadedModel::Wannier(m) => m,
        }
    }
}

impl RunConfig {
    /// The hBN two-band model with a ŷ-then-x̂ pulse pair at 120×120.
    pub fn hbn() -> Self {
        let pair = PulsePair::hbn_perpendicular();
        RunConfig {
            model: ModelSection {
                kind: ModelKind::TwoBand,
                name: Some("hBN".into()),
                lattice_constant_angstrom: default_lattice_constant(),
                gap_ev: default_gap(),
                hopping_ev: default_hopping(),
                wannier_file: None,
                wannier_format: None,
                hr_hexagonal_cell: true,
                filled_bands: 1,
                conduction_bands: None,
            },
            grid: GridSection {
                n1: Some(120),
                n2: Some(120),
            },
            pulses: vec![
                PulseSection::from_spec(&pair.first),
                PulseSection::from_spec(&pair.second.clone().with_center(4.8)),
            ],
            propagation: PropagationSection::default(),
            scan: ScanSection::default(),
            switch: SwitchSection::default(),
            bands: BandsSection::default(),
            base_dir: PathBuf::from("."),
            origin: "<builtin hbn>".into(),
        }
    }

    pub fn from_toml_str(text: &str, origin: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string().trim_end().replace('\n', " | "),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.origin = origin.to_string();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &path.display().to_string(), &base)
    }

    /// Canonical TOML rendering; independent of the input's formatting.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical rendering, as hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn field_err(&self, field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Field {
            origin: self.origin.clone(),
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        match m.kind {
            ModelKind::TwoBand => {
                for (name, v) in [
                    ("model.lattice_constant_angstrom", m.lattice_constant_angstrom),
                    ("model.gap_ev", m.gap_ev),
                ] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(self.field_err(name, format!("must be positive, got {v}")));
                    }
                }
                if !m.hopping_ev.is_finite() {
                    return Err(self.field_err("model.hopping_ev", "must be finite"));
                }
            }
            ModelKind::Wannier => {
                if m.wannier_file.is_none() {
                    return Err(self.field_err("model.wannier_file", "required for kind = \"wannier\""));
                }
            }
        }
        for (name, n) in [("grid.n1", self.grid.n1), ("grid.n2", self.grid.n2)] {
            if let Some(n) = n {
                if n == 0 || n % 2 == 1 {
                    return Err(self.field_err(name, format!("must be even and positive, got {n}")));
                }
            }
        }
        for i in 0..self.pulses.len() {
            self.pulse(i)?;
        }
        let p = &self.propagation;
        if !(p.dt_au.is_finite() && p.dt_au > 0.0) {
            return Err(self.field_err("propagation.dt_au", format!("must be positive, got {}", p.dt_au)));
        }
        if !(p.t2_fs > 0.0) {
            return Err(self.field_err("propagation.t2_fs", format!("must be positive or inf, got {}", p.t2_fs)));
        }
        if p.record_stride == 0 {
            return Err(self.field_err("propagation.record_stride", "must be at least 1"));
        }
        let s = &self.scan;
        if !(s.tau_step_fs > 0.0) || !(s.tau_stop_fs >= s.tau_start_fs) {
            return Err(self.field_err("scan.tau_step_fs", "need tau_step_fs > 0 and tau_stop_fs ≥ tau_start_fs"));
        }
        if !(s.fit_bracket_fs[0] > 0.0 && s.fit_bracket_fs[1] > s.fit_bracket_fs[0]) {
            return Err(self.field_err("scan.fit_bracket_fs", "need 0 < lower < upper"));
        }
        for (i, pol) in self.switch.polarizations.iter().enumerate() {
            parse_polarization(pol, None).map_err(|m| self.field_err(&format!("switch.polarizations[{i}]"), m))?;
        }
        if self.switch.t2_sweep_fs.iter().any(|&t| !(t > 0.0)) {
            return Err(self.field_err("switch.t2_sweep_fs", "entries must be positive or inf"));
        }
        if self.bands.samples_per_segment < 2 {
            return Err(self.field_err("bands.samples_per_segment", "must be at least 2"));
        }
        if self.bands.path.len() < 2 {
            return Err(self.field_err("bands.path", "needs at least two waypoints"));
        }
        Ok(())
    }

    pub fn set_t2(&mut self, t2_fs: f64) {
        self.propagation.t2_fs = t2_fs;
    }

    pub fn set_grid(&mut self, n1: usize, n2: usize) {
        self.grid = GridSection {
            n1: Some(n1),
            n2: Some(n2),
        };
    }

    pub fn set_dt(&mut self, dt_au: f64) {
        self.propagation.dt_au = dt_au;
    }

    pub fn build_model(&self) -> Result<LoadedModel> {
        let m = &self.model;
        match m.kind {
            ModelKind::TwoBand => Ok(LoadedModel::TwoBand(TwoBandModel::new(
                m.lattice_constant_angstrom,
                m.gap_ev,
                m.hopping_ev,
            ))),
            ModelKind::Wannier => {
                let rel = m.wannier_file.as_ref().expect("validated");
                let path = if rel.is_absolute() { rel.clone() } else { self.base_dir.join(rel) };
                let shown = path.display().to_string();
                let file = std::fs::File::open(&path).map_err(|source| ConfigError::Io {
                    path: shown.clone(),
                    source,
                })?;
                let format = m.wannier_format.unwrap_or_else(|| {
                    if shown.ends_with("_hr.dat") {
                        WannierFormat::Hr
                    } else {
                        WannierFormat::Tb
                    }
                });
                let wrap = |source| ConfigError::Wannier {
                    path: shown.clone(),
                    source,
                };
                let model = match format {
                    WannierFormat::Tb => read_tb(std::io::BufReader::new(file)).map_err(wrap)?,
                    WannierFormat::Hr => {
                        let model = read_hr(std::io::BufReader::new(file)).map_err(wrap)?;
                        if m.hr_hexagonal_cell {
                            let a = m.lattice_constant_angstrom;
                            let h = 0.5 * 3f64.sqrt() * a;
                            model.with_cell([[a, 0.0, 0.0], [0.5 * a, h, 0.0], [0.0, 0.0, 20.0]])
                        } else {
                            model
                        }
                    }
                };
                Ok(LoadedModel::Wannier(model))
            }
        }
    }

    pub fn grid_size(&self) -> (usize, usize) {
        let default = match self.model.kind {
            ModelKind::TwoBand => 240,
            ModelKind::Wannier => 96,
        };
        let n1 = self.grid.n1.unwrap_or(default);
        (n1, self.grid.n2.unwrap_or(n1))
    }

    pub fn kgrid(&self, model: &dyn BandModel) -> Result<KGrid> {
        let (n1, n2) = self.grid_size();
        KGrid::new(model.lattice(), n1, n2).map_err(|e| self.field_err("grid", e.to_string()))
    }

    pub fn pulse(&self, i: usize) -> Result<PulseSpec> {
        let s = &self.pulses[i];
        let field = |name: &str| format!("pulses[{i}].{name}");
        let polarization =
            parse_polarization(&s.polarization, s.polarization_angle_deg).map_err(|m| self.field_err(&field("polarization"), m))?;
        let reference = match s.carrier_reference.as_str() {
            "pulse_center" => CarrierReference::PulseCenter,
            "global_clock" => CarrierReference::GlobalClock,
            other => {
                return Err(self.field_err(
                    &field("carrier_reference"),
                    format!("expected \"pulse_center\" or \"global_clock\", got {other:?}"),
                ))
            }
        };
        let mut p = PulseSpec::new(s.carrier_ev, s.fwhm_fs, s.field_v_per_angstrom, polarization, s.center_fs)
            .map_err(|e| self.field_err(&format!("pulses[{i}]"), e.to_string()))?;
        p.cep_rad = s.cep_rad;
        p.reference = reference;
        Ok(p)
    }

    pub fn pulses(&self) -> Result<Vec<PulseSpec>> {
        (0..self.pulses.len()).map(|i| self.pulse(i)).collect()
    }

    pub fn train(&self) -> Result<PulseTrain> {
        if self.pulses.is_empty() {
            return Err(self.field_err("pulses", "at least one [[pulses]] entry is required"));
        }
        Ok(PulseTrain::new(self.pulses()?))
    }

    /// The first two pulses; the second is re-centred at each delay.
    pub fn pulse_pair(&self) -> Result<PulsePair> {
        if self.pulses.len() < 2 {
            return Err(self.field_err("pulses", "a delay scan needs two [[pulses]] entries"));
        }
        Ok(PulsePair {
            first: self.pulse(0)?,
            second: self.pulse(1)?,
        })
    }

    /// The first pulse is the template for all four switch pulses.
    pub fn switch_spec(&self) -> Result<SwitchSpec> {
        if self.pulses.is_empty() {
            return Err(self.field_err("pulses", "the switch protocol needs a template [[pulses]] entry"));
        }
        let mut pols = [Polarization::x(); 4];
        for (i, s) in self.switch.polarizations.iter().enumerate() {
            pols[i] = parse_polarization(s, None).map_err(|m| self.field_err(&format!("switch.polarizations[{i}]"), m))?;
        }
        Ok(SwitchSpec {
            pulse: self.pulse(0)?,
            polarizations: pols,
            delays_fs: self.switch.delays_fs,
        })
    }

    pub fn propagation(&self) -> PropagationConfig {
        let p = &self.propagation;
        PropagationConfig {
            dt_au: p.dt_au,
            t2_fs: p.t2_fs,
            t_start_fs: p.t_start_fs,
            t_end_fs: p.t_end_fs,
            record_stride: p.record_stride,
            filled_bands: self.model.filled_bands,
            conduction_bands: self.model.conduction_bands.clone(),
            include_holes: p.include_holes,
            ..PropagationConfig::default()
        }
    }

    pub fn delays(&self) -> Vec<f64> {
        delay_grid(self.scan.tau_start_fs, self.scan.tau_stop_fs, self.scan.tau_step_fs)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            window_start_fs: self.scan.fit_window_start_fs,
            window_end_fs: self.scan.fit_window_end_fs,
            pulse_fwhm_fs: self.pulses.first().map_or(FitOptions::default().pulse_fwhm_fs, |p| p.fwhm_fs),
            bracket_fs: (self.scan.fit_bracket_fs[0], self.scan.fit_bracket_fs[1]),
        }
    }

    pub fn band_waypoints(&self, model: &dyn BandModel) -> Result<Vec<Vec2>> {
        let pts = model.lattice().high_symmetry_points();
        self.bands
            .path
            .iter()
            .enumerate()
            .map(|(i, label)| {
                pts.iter().find(|(n, _)| n == label).map(|p| p.1).ok_or_else(|| {
                    self.field_err(&format!("bands.path[{i}]"), format!("unknown point {label:?}; expected G, K, M or K'"))
                })
            })
            .collect()
    }
}

pub fn parse_polarization(s: &str, angle_deg: Option<f64>) -> std::result::Result<Polarization, String> {
    match (s, angle_deg) {
        ("x", None) => Ok(Polarization::x()),
        ("y", None) => Ok(Polarization::y()),
        ("sigma+", None) => Ok(Polarization::SigmaPlus),
        ("sigma-", None) => Ok(Polarization::SigmaMinus),
        ("linear", Some(a)) if a.is_finite() => Ok(Polarization::angle_deg(a)),
        ("linear", _) => Err("\"linear\" needs a finite polarization_angle_deg".into()),
        (_, Some(_)) => Err("polarization_angle_deg is only valid with polarization = \"linear\"".into()),
        (other, None) => Err(format!("expected x, y, sigma+, sigma- or linear, got {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_roundtrips_through_text() {
        let c = RunConfig::hbn();
        let back = RunConfig::from_toml_str(&c.to_toml(), "mem", Path::new(".")).unwrap();
        assert_eq!(back.to_toml(), c.to_toml());
        assert_eq!(back.hash(), c.hash());
        assert!(back.propagation.t2_fs.is_infinite());
    }

    #[test]
    fn unknown_key_names_the_field() {
        let text = "[model]\nkind = \"two_band\"\ngap = 6.0\n";
        let e = RunConfig::from_toml_str(text, "bad.toml", Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("bad.toml") && e.contains("gap"), "{e}");
    }

    #[test]
    fn invalid_value_names_the_field() {
        let text = "[model]\nkind = \"two_band\"\n[[pulses]]\ncarrier_ev = 6.0\nfwhm_fs = 1.15\nfield_v_per_angstrom = 0.1\npolarization = \"z\"\n";
        let e = RunConfig::from_toml_str(text, "p.toml", Path::new(".")).unwrap_err().to_string();
        assert!(e.contains("pulses[0].polarization"), "{e}");
    }

    #[test]
    fn overrides_change_the_hash() {
        let a = RunConfig::hbn();
        let mut b = a.clone();
        b.set_t2(10.0);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn linear_angle_roundtrips() {
        let p = PulseSpec::hbn(Polarization::angle_deg(30.0), 0.0);
        let s = PulseSection::from_spec(&p);
        assert_eq!(s.polarization, "linear");
        let q = parse_polarization(&s.polarization, s.polarization_angle_deg).unwrap();
        let (Polarization::Linear(a), Polarization::Linear(b)) = (q, p.polarization) else { panic!() };
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }
}
