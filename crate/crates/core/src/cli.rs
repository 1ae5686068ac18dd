//! Command-line front end. Each subcommand reads the run configuration,
//! applies flag overrides and writes its tables into the output directory.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::io::{self, Cell, IoError, Provenance};
use crate::lattice::band_path;
use crate::lopt::sigma_ref;
use crate::observables::{berry_curvature, select_bands, valley_asymmetry, ObservableError};
use crate::sbe::{PropagationError, Simulation};
use crate::scan::{fit_t2, scan_delay, switch_protocol, ScanError};

#[derive(Debug, Parser)]
#[command(name = "valleyswitch", version, about = "Coherent valley-polarization control with few-cycle pulse trains")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML). The built-in hBN configuration is used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, env = "VALLEYSWITCH_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Dephasing time in fs, or `inf`.
    #[arg(long, global = true)]
    pub t2: Option<f64>,
    /// k-grid as `N` or `N1xN2`.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Time step in atomic units.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Band energies along the configured high-symmetry path.
    Bands,
    /// Berry curvature map and Chern numbers.
    Berry,
    /// Propagates the configured pulse train: σ(t) and final populations.
    Propagate,
    /// σ(τ) for the first two configured pulses over the scan delays.
    ScanDelay,
    /// Fits T2 from a measured scan against a reference scan.
    FitT2 {
        measured: PathBuf,
        reference: PathBuf,
    },
    /// Four-pulse on/off/switch sequence.
    SwitchDemo {
        /// Repeat for every dephasing time in `switch.t2_sweep_fs`.
        #[arg(long)]
        sweep: bool,
    },
    /// Perturbative reference σ_ref(τ) over the scan delays.
    Lopt,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Propagation(_) => "propagation",
            CliError::Scan(_) => "scan",
            CliError::Observable(_) => "observable",
            CliError::Other(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            _ => 4,
        }
    }
}

/// Resolved configuration plus output location.
pub struct Context {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn new(global: &GlobalArgs) -> Result<Self, CliError> {
        let mut cfg = match &global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::hbn(),
        };
        if let Some(t2) = global.t2 {
            cfg.set_t2(t2);
        }
        if let Some((n1, n2)) = global.grid {
            cfg.set_grid(n1, n2);
        }
        if let Some(dt) = global.dt {
            cfg.set_dt(dt);
        }
        cfg.validate()?;
        Ok(Context {
            cfg,
            out_dir: global.out_dir.clone(),
        })
    }

    fn prov(&self, units: &str) -> Provenance {
        Provenance::for_config(&self.cfg, units)
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|source| IoError::File {
            path: self.out_dir.display().to_string(),
            source,
        })?;
        let path = self.out_dir.join(name);
        io::write_file(&path, text)?;
        Ok(path)
    }
}

/// Outcome of a subcommand: written files and a human-readable summary.
#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

pub fn run(cli: &Cli) -> Result<Report, CliError> {
    if let Some(n) = cli.global.workers {
        // A pool already exists when called twice in one process; the first setting stays.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let ctx = Context::new(&cli.global)?;
    match &cli.command {
        Command::Bands => bands(&ctx),
        Command::Berry => berry(&ctx),
        Command::Propagate => propagate(&ctx),
        Command::ScanDelay => scan(&ctx),
        Command::FitT2 { measured, reference } => fit(&ctx, measured, reference),
        Command::SwitchDemo { sweep } => switch(&ctx, *sweep),
        Command::Lopt => lopt(&ctx),
    }
}

fn bands(ctx: &Context) -> Result<Report, CliError> {
    let loaded = ctx.cfg.build_model()?;
    let model = loaded.as_dyn();
    let path = band_path(model, &ctx.cfg.band_waypoints(model)?, ctx.cfg.bands.samples_per_segment);
    let nb = model.num_bands();
    let names: Vec<String> = (0..nb).map(|b| format!("e{b}_ev")).collect();
    let mut columns = vec!["distance_inv_angstrom", "kx", "ky"];
    columns.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<Cell>> = path
        .iter()
        .map(|p| {
            let mut r = vec![Cell::F(p.distance), Cell::F(p.k[0]), Cell::F(p.k[1])];
            r.extend(p.energies.iter().map(|&e| Cell::F(e)));
            r
        })
        .collect();
    let prov = ctx.prov("k in 1/angstrom, energies in eV").with("path", ctx.cfg.bands.path.join("-"));
    let file = ctx.write("bands.csv", &io::write_table(&prov, &columns, &rows))?;
    let filled = ctx.cfg.model.filled_bands;
    let mut summary = Vec::new();
    if filled > 0 && filled < nb {
        let (gap, at) = path
            .iter()
            .map(|p| (p.energies[filled] - p.energies[filled - 1], p.k))
            .fold((f64::INFINITY, [0.0; 2]), |a, b| if b.0 < a.0 { b } else { a });
        summary.push(format!("minimum direct gap {gap:.6} eV at k = ({:.6}, {:.6}) 1/angstrom", at[0], at[1]));
    }
    Ok(Report {
        files: vec![file],
        summary,
    })
}

fn berry(ctx: &Context) -> Result<Report, CliError> {
    let loaded = ctx.cfg.build_model()?;
    let model = loaded.as_dyn();
    let grid = ctx.cfg.kgrid(model)?;
    let b = berry_curvature(model, &grid)?;
    let bands: Vec<usize> = (0..model.num_bands()).collect();
    let prov = ctx.prov("k in 1/angstrom, curvature in angstrom^2");
    let file = ctx.write("berry.csv", &io::write_kmap(&prov, &b.curvature, &grid, &bands))?;
    let summary = b
        .chern
        .iter()
        .enumerate()
        .map(|(n, c)| format!("band {n}: Chern number {c:+.6}"))
        .collect();
    Ok(Report {
        files: vec![file],
        summary,
    })
}

fn propagate(ctx: &Context) -> Result<Report, CliError> {
    let loaded = ctx.cfg.build_model()?;
    let model = loaded.as_dyn();
    let grid = ctx.cfg.kgrid(model)?;
    let sim = Simulation::new(model, &grid)?;
    let pcfg = ctx.cfg.propagation();
    let r = sim.propagate(&ctx.cfg.train()?, &pcfg)?;
    let cond = pcfg.conduction(model.num_bands());
    let a = valley_asymmetry(&r.final_populations, &grid, &cond)?;
    let prov = ctx.prov("time in fs, sigma in arbitrary units").with("t2_fs", io::format_float(pcfg.t2_fs));
    let trace = ctx.write("sigma_t.csv", &io::write_trace(&prov, &r.trace))?;
    let map = select_bands(&r.final_populations, &cond);
    let pops = ctx.write(
        "populations.csv",
        &io::write_kmap(&ctx.prov("k in 1/angstrom, occupation per state"), &map, &grid, &cond),
    )?;
    let d = r.diagnostics;
    Ok(Report {
        files: vec![trace, pops],
        summary: vec![
            format!("sigma = {:+.8e}", r.sigma_final),
            format!("valley asymmetry = {:+.6} (n_K = {:.6e}, n_K' = {:.6e})", a.asymmetry, a.n_k, a.n_kprime),
            format!(
                "hermiticity defect {:.2e}, trace drift {:.2e}, eigenvalues [{:.3e}, {:.6}]",
                d.max_hermiticity_defect, d.max_trace_drift, d.min_eigenvalue, d.max_eigenvalue
            ),
        ],
    })
}

fn scan(ctx: &Context) -> Result<Report, CliError> {
    let loaded = ctx.cfg.build_model()?;
    let model = loaded.as_dyn();
    let grid = ctx.cfg.kgrid(model)?;
    let sim = Simulation::new(model, &grid)?;
    let s = scan_delay(&sim, &ctx.cfg.pulse_pair()?, &ctx.cfg.delays(), &ctx.cfg.propagation())?;
    let file = ctx.write("scan.csv", &io::write_delay_scan(&ctx.prov("tau in fs, sigma in arbitrary units"), &s))?;
    Ok(Report {
        files: vec![file],
        summary: vec![format!("{} delays, peak |sigma| = {:.6e}", s.taus_fs.len(), s.peak_abs())],
    })
}

fn lopt(ctx: &Context) -> Result<Report, CliError> {
    let loaded = ctx.cfg.build_model()?;
    let model = loaded.as_dyn();
    let grid = ctx.cfg.kgrid(model)?;
    let berry = berry_curvature(model, &grid)?;
    let pcfg = ctx.cfg.propagation();
    let cond = pcfg.conduction(model.num_bands());
    let s = sigma_ref(
        model,
        &grid,
        &berry,
        &ctx.cfg.pulse_pair()?,
        &ctx.cfg.delays(),
        pcfg.filled_bands,
        &cond,
    )
    .map_err(|e| CliError::Other(e.to_string()))?;
    let file = ctx.write("lopt.csv", &io::write_delay_scan(&ctx.prov("tau in fs, sigma in arbitrary units"), &s))?;
    Ok(Report {
        files: vec![file],
        summary: vec![format!("{} delays, peak |sigma_ref| = {:.6e}", s.taus_fs.len(), s.peak_abs())],
    })
}

fn fit(ctx: &Context, measured: &Path, reference: &Path) -> Result<Report, CliError> {
    let m = io::parse_delay_scan(&io::read_file(measured)?)?;
    let r = io::parse_delay_scan(&io::read_file(reference)?)?;
    let f = fit_t2(&m, &r, &ctx.cfg.fit_options())?;
    let prov = ctx
        .prov("times in fs")
        .with("measured", measured.display())
        .with("reference", reference.display());
    let file = ctx.write("fit_t2.csv", &io::write_fit(&prov, &f))?;
    let line = if f.no_decay {
        "T2 = inf (no decay detected)".to_string()
    } else {
        format!("T2 = {:.6} fs (residual rms {:.3e})", f.t2_fs, f.residual_rms)
    };
    Ok(Report {
        files: vec![file],
        summary: vec![line],
    })
}

fn switch(ctx: &Context, sweep: bool) -> Result<Report, CliError> {
    let loaded = ctx.cfg.build_model()?;
    let model = loaded.as_dyn();
    let grid = ctx.cfg.kgrid(model)?;
    let sim = Simulation::new(model, &grid)?;
    let spec = ctx.cfg.switch_spec()?;
    let pcfg = ctx.cfg.propagation();
    let cond = pcfg.conduction(model.num_bands());
    let t2s = if sweep { ctx.cfg.switch.t2_sweep_fs.clone() } else { vec![pcfg.t2_fs] };
    let mut report = Report::default();
    let mut sweep_rows = Vec::new();
    for (i, &t2) in t2s.iter().enumerate() {
        let r = switch_protocol(&sim, &spec, &pcfg.clone().with_t2(t2))?;
        let suffix = if sweep { format!("_t2_{i}") } else { String::new() };
        let prov = ctx.prov("time in fs, sigma in arbitrary units").with("t2_fs", io::format_float(t2));
        report.files.push(ctx.write(&format!("sigma_t{suffix}.csv"), &io::write_trace(&prov, &r.trace))?);
        let rows: Vec<Vec<Cell>> = (0..4)
            .map(|s| vec![Cell::I(s as i64 + 1), Cell::F(r.stage_sigma[s]), Cell::F(r.stage_asymmetry[s])])
            .collect();
        report.files.push(ctx.write(
            &format!("stages{suffix}.csv"),
            &io::write_table(&prov, &["stage", "sigma", "valley_asymmetry"], &rows),
        )?);
        if !sweep {
            for (s, m) in r.stage_maps.iter().enumerate() {
                let map = select_bands(m, &cond);
                let prov = ctx.prov("k in 1/angstrom, occupation per state").with("stage", s + 1);
                report
                    .files
                    .push(ctx.write(&format!("stage{}_populations.csv", s + 1), &io::write_kmap(&prov, &map, &grid, &cond))?);
            }
        }
        report.summary.push(format!(
            "T2 = {}: stage sigma {}",
            io::format_float(t2),
            r.stage_sigma.iter().map(|s| format!("{s:+.4e}")).collect::<Vec<_>>().join(" ")
        ));
        let mut row = vec![Cell::F(t2)];
        row.extend(r.stage_sigma.iter().map(|&s| Cell::F(s)));
        sweep_rows.push(row);
    }
    if sweep {
        report.files.push(ctx.write(
            "switch_sweep.csv",
            &io::write_table(
                &ctx.prov("t2 in fs, sigma in arbitrary units"),
                &["t2_fs", "sigma_stage1", "sigma_stage2", "sigma_stage3", "sigma_stage4"],
                &sweep_rows,
            ),
        )?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_flag_forms() {
        assert_eq!(parse_grid("120"), Ok((120, 120)));
        assert_eq!(parse_grid("96x48"), Ok((96, 48)));
        assert!(parse_grid("ax3").is_err());
    }

    #[test]
    fn subcommand_names() {
        for name in ["bands", "berry", "propagate", "scan-delay", "switch-demo", "lopt"] {
            Cli::try_parse_from(["valleyswitch", name]).unwrap();
        }
        Cli::try_parse_from(["valleyswitch", "fit-t2", "a.csv", "b.csv", "--t2", "inf"]).unwrap();
    }
}
