//! Text output formats.
//!
//! Every file opens with `#`-prefixed provenance lines (`# key = value`),
//! followed by one comma-separated column-name row and numeric rows. Floats
//! carry 9 significant digits in scientific notation; integer columns are
//! written as integers. k-maps use the columns `kx, ky, band, value`.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::config::RunConfig;
use crate::grid::KGrid;
use crate::observables::{PopulationMap, VhcTrace};
use crate::scan::{DelayScan, T2FitResult};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("missing header key `{0}`")]
    MissingKey(String),
    #[error("k-map does not match the grid: {0}")]
    GridMismatch(String),
}

type Result<T> = std::result::Result<T, IoError>;

/// Header block written at the top of every output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub entries: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(config_hash: &str, grid: (usize, usize), units: &str) -> Self {
        Provenance {
            entries: vec![
                ("program".into(), format!("valleyswitch {}", env!("CARGO_PKG_VERSION"))),
                ("config_sha256".into(), config_hash.into()),
                ("grid".into(), format!("{}x{}", grid.0, grid.1)),
                ("units".into(), units.into()),
            ],
        }
    }

    pub fn for_config(cfg: &RunConfig, units: &str) -> Self {
        Self::new(&cfg.hash(), cfg.grid_size(), units)
    }

    pub fn with(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Column value: floats are printed with 9 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
}

pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A parsed table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub provenance: Provenance,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| IoError::MissingColumn(name.into()))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn write_table(prov: &Provenance, columns: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut s = String::new();
    for (k, v) in &prov.entries {
        let _ = writeln!(s, "# {k} = {v}");
    }
    let _ = writeln!(s, "{}", columns.join(","));
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .map(|c| match *c {
                Cell::F(x) => format_float(x),
                Cell::I(i) => i.to_string(),
            })
            .collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn parse_table(text: &str) -> Result<Table> {
    let mut entries = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if let Some(rest) = line.strip_prefix('#') {
            if columns.is_some() {
                return Err(IoError::Format {
                    line: line_no,
                    message: "header line after the column row".into(),
                });
            }
            let rest = rest.trim();
            let (k, v) = rest.split_once(" = ").ok_or_else(|| IoError::Format {
                line: line_no,
                message: "header lines must read `# key = value`".into(),
            })?;
            entries.push((k.to_string(), v.to_string()));
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match &columns {
            None => {
                let cols: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
                if cols.iter().any(|c| c.is_empty()) {
                    return Err(IoError::Format {
                        line: line_no,
                        message: "empty column name".into(),
                    });
                }
                columns = Some(cols);
            }
            Some(cols) => {
                let vals = line
                    .split(',')
                    .map(|c| {
                        c.trim().parse::<f64>().map_err(|e| IoError::Format {
                            line: line_no,
                            message: format!("{:?}: {e}", c.trim()),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if vals.len() != cols.len() {
                    return Err(IoError::Format {
                        line: line_no,
                        message: format!("{} values for {} columns", vals.len(), cols.len()),
                    });
                }
                rows.push(vals);
            }
        }
    }
    Ok(Table {
        provenance: Provenance { entries },
        columns: columns.ok_or(IoError::Format {
            line: text.lines().count(),
            message: "no column row".into(),
        })?,
        rows,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_delay_scan(prov: &Provenance, scan: &DelayScan) -> String {
    let prov = prov.clone().with("t2_fs", format_float(scan.t2_fs));
    let rows: Vec<Vec<Cell>> = (0..scan.taus_fs.len())
        .map(|i| vec![Cell::F(scan.taus_fs[i]), Cell::F(scan.sigma[i]), Cell::F(scan.valley_asymmetry[i])])
        .collect();
    write_table(&prov, &["tau_fs", "sigma", "valley_asymmetry"], &rows)
}

pub fn parse_delay_scan(text: &str) -> Result<DelayScan> {
    let t = parse_table(text)?;
    let t2 = t.provenance.get("t2_fs").ok_or_else(|| IoError::MissingKey("t2_fs".into()))?;
    let t2_fs = t2.parse::<f64>().map_err(|e| IoError::Format {
        line: 0,
        message: format!("t2_fs {t2:?}: {e}"),
    })?;
    Ok(DelayScan {
        taus_fs: t.column("tau_fs")?,
        sigma: t.column("sigma")?,
        valley_asymmetry: t.column("valley_asymmetry")?,
        t2_fs,
    })
}

pub fn write_trace(prov: &Provenance, trace: &VhcTrace) -> String {
    let rows: Vec<Vec<Cell>> = trace
        .times_fs
        .iter()
        .zip(&trace.sigma)
        .map(|(&t, &s)| vec![Cell::F(t), Cell::F(s)])
        .collect();
    write_table(prov, &["time_fs", "sigma"], &rows)
}

pub fn parse_trace(text: &str) -> Result<VhcTrace> {
    let t = parse_table(text)?;
    Ok(VhcTrace {
        times_fs: t.column("time_fs")?,
        sigma: t.column("sigma")?,
    })
}

/// `bands` lists the band index written for each map column.
pub fn write_kmap(prov: &Provenance, map: &PopulationMap, kgrid: &KGrid, bands: &[usize]) -> String {
    assert_eq!(bands.len(), map.nbands, "one band label per map column");
    let mut rows = Vec::with_capacity(map.values.len());
    for (ki, k) in kgrid.points.iter().enumerate() {
        for (bi, &b) in bands.iter().enumerate() {
            rows.push(vec![Cell::F(k[0]), Cell::F(k[1]), Cell::I(b as i64), Cell::F(map.get(ki, bi))]);
        }
    }
    write_table(prov, &["kx", "ky", "band", "value"], &rows)
}

/// Reads a k-map written for `kgrid`; returns the map and its band labels.
pub fn parse_kmap(text: &str, kgrid: &KGrid) -> Result<(PopulationMap, Vec<usize>)> {
    let t = parse_table(text)?;
    let (kx, ky, band, value) = (t.column("kx")?, t.column("ky")?, t.column("band")?, t.column("value")?);
    let nk = kgrid.len();
    if nk == 0 || kx.len() % nk != 0 {
        return Err(IoError::GridMismatch(format!("{} rows for {nk} k-points", kx.len())));
    }
    let nb = kx.len() / nk;
    let bands: Vec<usize> = band[..nb].iter().map(|&b| b as usize).collect();
    let scale = kgrid.lattice.b1[0].hypot(kgrid.lattice.b1[1]);
    let mut map = PopulationMap::zeros(nk, nb);
    for r in 0..kx.len() {
        let (ki, bi) = (r / nb, r % nb);
        let k = kgrid.points[ki];
        if (kx[r] - k[0]).abs() > 1e-7 * scale || (ky[r] - k[1]).abs() > 1e-7 * scale {
            return Err(IoError::GridMismatch(format!("row {r} at ({}, {}) expected ({}, {})", kx[r], ky[r], k[0], k[1])));
        }
        if band[r] as usize != bands[bi] {
            return Err(IoError::GridMismatch(format!("row {r}: band order differs between k-points")));
        }
        map.set(ki, bi, value[r]);
    }
    Ok((map, bands))
}

pub fn write_fit(prov: &Provenance, fit: &T2FitResult) -> String {
    write_table(
        prov,
        &["t2_fs", "residual_rms", "window_start_fs", "window_end_fs", "no_decay"],
        &[vec![
            Cell::F(fit.t2_fs),
            Cell::F(fit.residual_rms),
            Cell::F(fit.window_fs.0),
            Cell::F(fit.window_fs.1),
            Cell::I(fit.no_decay as i64),
        ]],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::CrystalLattice;

    fn prov() -> Provenance {
        Provenance::new("abc", (4, 4), "fs")
    }

    #[test]
    fn scan_roundtrip_is_textually_stable() {
        let s = DelayScan {
            taus_fs: vec![2.0, 2.08, 2.16],
            sigma: vec![1.0e-3, -2.5e-4, 3.3333333333e-5],
            valley_asymmetry: vec![0.1, -0.2, 0.3],
            t2_fs: f64::INFINITY,
        };
        let text = write_delay_scan(&prov(), &s);
        let back = parse_delay_scan(&text).unwrap();
        assert!(back.t2_fs.is_infinite());
        assert_eq!(write_delay_scan(&prov(), &back), text);
    }

    #[test]
    fn kmap_roundtrip() {
        let g = KGrid::new(&CrystalLattice::hexagonal(2.5), 4, 6).unwrap();
        let mut m = PopulationMap::zeros(g.len(), 2);
        for k in 0..g.len() {
            m.set(k, 0, k as f64 * 0.125);
            m.set(k, 1, -(k as f64));
        }
        let text = write_kmap(&prov(), &m, &g, &[1, 2]);
        let (back, bands) = parse_kmap(&text, &g).unwrap();
        assert_eq!(bands, vec![1, 2]);
        assert_eq!(back, m);
    }

    #[test]
    fn malformed_rows_are_reported_with_line() {
        let e = parse_table("# a = b\nx,y\n1,2\n3\n").unwrap_err();
        assert!(matches!(e, IoError::Format { line: 4, .. }));
        assert!(parse_table("x,y\n1,zz\n").is_err());
    }
}
