//! Real-space Wannier Hamiltonians: the model type plus readers and writers
//! for the `_hr.dat` and `_tb.dat` text formats.

use std::fmt::Write as _;
use std::io::Read;

use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::{dot, BandModel, CMatrix, CrystalLattice, Vec2};

/// Tolerance on `H(k=0) − H(k=0)†` accepted by the parsers (eV).
pub const HERMITICITY_TOLERANCE_EV: f64 = 1e-6;
/// Tolerance on the imaginary part of on-site position elements (Å).
pub const CENTER_IMAG_TOLERANCE: f64 = 1e-6;

const DEGENERACIES_PER_LINE: usize = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WannierError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("model has no position matrices; cannot write tb format")]
    MissingPositions,
    #[error("io error: {0}")]
    Io(String),
}

type Result<T> = std::result::Result<T, WannierError>;

/// Tight-binding model given by real-space matrices on a set of lattice vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WannierModel {
    pub num_bands: usize,
    /// Real-space lattice vectors as rows (Å).
    pub cell: [[f64; 3]; 3],
    pub rpoints: Vec<[i32; 3]>,
    pub degeneracies: Vec<u32>,
    /// Hamiltonian blocks `H(R)` (eV).
    pub h_r: Vec<CMatrix>,
    /// Position blocks `(x, y, z)(R)` (Å), when available.
    pub r_r: Option<Vec<[CMatrix; 3]>>,
    pub comment: String,
    lattice: CrystalLattice,
}

const IDENTITY_CELL: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl WannierModel {
    /// Assembles a model; validates shapes and Hermiticity of `H(0)`.
    pub fn new(
        cell: [[f64; 3]; 3],
        rpoints: Vec<[i32; 3]>,
        degeneracies: Vec<u32>,
        h_r: Vec<CMatrix>,
        r_r: Option<Vec<[CMatrix; 3]>>,
    ) -> Result<Self> {
        let num_bands = h_r.first().map(|m| m.nrows()).unwrap_or(0);
        if num_bands == 0 {
            return Err(WannierError::Schema("model has no bands".into()));
        }
        if rpoints.len() != h_r.len() || degeneracies.len() != h_r.len() {
            return Err(WannierError::Schema(format!(
                "{} rpoints, {} degeneracies, {} Hamiltonian blocks",
                rpoints.len(),
                degeneracies.len(),
                h_r.len()
            )));
        }
        if h_r.iter().any(|m| m.nrows() != num_bands || m.ncols() != num_bands) {
            return Err(WannierError::Schema("Hamiltonian blocks differ in size".into()));
        }
        if let Some(r) = &r_r {
            if r.len() != h_r.len()
                || r.iter()
                    .flatten()
                    .any(|m| m.nrows() != num_bands || m.ncols() != num_bands)
            {
                return Err(WannierError::Schema("position blocks do not match Hamiltonian blocks".into()));
            }
        }
        if let Some(&d) = degeneracies.iter().find(|&&d| d == 0) {
            return Err(WannierError::Validation(format!("degeneracy {d} is not a positive integer")));
        }
        let model = WannierModel {
            num_bands,
            cell,
            rpoints,
            degeneracies,
            h_r,
            r_r,
            comment: String::new(),
            lattice: lattice_from_cell(&cell),
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let h0 = self.hamiltonian_at([0.0, 0.0]);
        let defect = (&h0 - h0.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if defect > HERMITICITY_TOLERANCE_EV {
            return Err(WannierError::Validation(format!(
                "H(k=0) is not Hermitian (max |H - H†| = {defect:.3e} eV)"
            )));
        }
        if let Some(r) = &self.r_r {
            if let Some(i0) = self.rpoints.iter().position(|&r| r == [0, 0, 0]) {
                for (axis, m) in r[i0].iter().enumerate() {
                    for n in 0..self.num_bands {
                        if m[(n, n)].im.abs() > CENTER_IMAG_TOLERANCE {
                            return Err(WannierError::Validation(format!(
                                "on-site position element ({n},{n}) of component {axis} is not real"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Replaces the real-space cell (Å). `_hr.dat` files carry no lattice, so
    /// models read from them start on a unit square cell.
    pub fn with_cell(mut self, cell: [[f64; 3]; 3]) -> Self {
        self.cell = cell;
        self.lattice = lattice_from_cell(&cell);
        self
    }

    pub fn with_comment(mut self, comment: impl Into<String>) -> Self {
        self.comment = comment.into();
        self
    }

    fn cartesian(&self, r: [i32; 3]) -> Vec2 {
        let mut v = [0.0; 2];
        for (i, row) in self.cell.iter().enumerate() {
            v[0] += r[i] as f64 * row[0];
            v[1] += r[i] as f64 * row[1];
        }
        v
    }

    fn fourier(&self, blocks: &[&CMatrix], k: Vec2, weight: impl Fn(Vec2) -> Complex64) -> CMatrix {
        let mut out = CMatrix::zeros(self.num_bands, self.num_bands);
        for (i, block) in blocks.iter().enumerate() {
            let r = self.cartesian(self.rpoints[i]);
            let phase = Complex64::from_polar(1.0 / self.degeneracies[i] as f64, dot(k, r)) * weight(r);
            out += *block * phase;
        }
        out
    }

    /// In-plane Cartesian lattice vectors of the R-points (Å).
    pub fn r_vectors(&self) -> Vec<Vec2> {
        self.rpoints.iter().map(|&r| self.cartesian(r)).collect()
    }

    /// `H(k)`, `∇H(k)` and the in-plane position matrices assembled from
    /// per-R phase factors `e^{ik·R}/deg_R`.
    pub fn blocks_from_phases(&self, phases: &[Complex64], rvec: &[Vec2]) -> (CMatrix, [CMatrix; 2], Option<[CMatrix; 2]>) {
        let n = self.num_bands;
        let mut h = CMatrix::zeros(n, n);
        let mut gx = CMatrix::zeros(n, n);
        let mut gy = CMatrix::zeros(n, n);
        let mut pos = self.r_r.as_ref().map(|_| [CMatrix::zeros(n, n), CMatrix::zeros(n, n)]);
        for (i, (&ph, r)) in phases.iter().zip(rvec).enumerate() {
            let (ix, iy) = (Complex64::new(0.0, r[0]) * ph, Complex64::new(0.0, r[1]) * ph);
            for (j, &v) in self.h_r[i].iter().enumerate() {
                h[j] += v * ph;
                gx[j] += v * ix;
                gy[j] += v * iy;
            }
            if let (Some(p), Some(rr)) = (pos.as_mut(), self.r_r.as_ref()) {
                for axis in 0..2 {
                    for (j, &v) in rr[i][axis].iter().enumerate() {
                        p[axis][j] += v * ph;
                    }
                }
            }
        }
        (h, [gx, gy], pos)
    }

    /// On-site diagonal position elements at `R = 0` (Å), one triple per band.
    pub fn wannier_centers(&self) -> Option<Vec<[f64; 3]>> {
        let r = self.r_r.as_ref()?;
        let i0 = self.rpoints.iter().position(|&r| r == [0, 0, 0])?;
        Some(
            (0..self.num_bands)
                .map(|n| [r[i0][0][(n, n)].re, r[i0][1][(n, n)].re, r[i0][2][(n, n)].re])
                .collect(),
        )
    }
}

fn lattice_from_cell(cell: &[[f64; 3]; 3]) -> CrystalLattice {
    CrystalLattice::from_vectors([cell[0][0], cell[0][1]], [cell[1][0], cell[1][1]])
}

impl BandModel for WannierModel {
    fn num_bands(&self) -> usize {
        self.num_bands
    }

    fn lattice(&self) -> &CrystalLattice {
        &self.lattice
    }

    fn hamiltonian_at(&self, k: Vec2) -> CMatrix {
        let blocks: Vec<&CMatrix> = self.h_r.iter().collect();
        self.fourier(&blocks, k, |_| Complex64::new(1.0, 0.0))
    }

    fn hamiltonian_gradient_at(&self, k: Vec2) -> [CMatrix; 2] {
        let blocks: Vec<&CMatrix> = self.h_r.iter().collect();
        [0, 1].map(|axis| self.fourier(&blocks, k, |r| Complex64::new(0.0, r[axis])))
    }

    fn as_wannier(&self) -> Option<&WannierModel> {
        Some(self)
    }

    fn orbital_centers(&self) -> Option<Vec<Vec2>> {
        self.wannier_centers().map(|c| c.iter().map(|p| [p[0], p[1]]).collect())
    }

    fn position_matrices_at(&self, k: Vec2) -> Option<[CMatrix; 2]> {
        let r = self.r_r.as_ref()?;
        Some([0, 1].map(|axis| {
            let blocks: Vec<&CMatrix> = r.iter().map(|b| &b[axis]).collect();
            self.fourier(&blocks, k, |_| Complex64::new(1.0, 0.0))
        }))
    }
}

/// Line-oriented cursor that remembers 1-based line numbers.
struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            lines: text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect(),
            pos: 0,
        }
    }

    fn next_raw(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let l = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| WannierError::Schema(format!("unexpected end of file while reading {what}")))?;
        self.pos += 1;
        Ok(l)
    }

    fn next_nonblank(&mut self, what: &str) -> Result<(usize, &'a str)> {
        loop {
            let (n, l) = self.next_raw(what)?;
            if !l.trim().is_empty() {
                return Ok((n, l));
            }
        }
    }

    fn remaining_nonblank(&self) -> usize {
        self.lines[self.pos..].iter().filter(|(_, l)| !l.trim().is_empty()).count()
    }

    fn expect_end(&mut self) -> Result<()> {
        while let Some(&(n, l)) = self.lines.get(self.pos) {
            if !l.trim().is_empty() {
                return Err(WannierError::Parse {
                    line: n,
                    message: "unexpected content after the last record".into(),
                });
            }
            self.pos += 1;
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse::<T>().map_err(|_| WannierError::Parse {
        line,
        message: format!("cannot parse {what} from '{tok}'"),
    })
}

fn fields<'a>(line: &'a str, n: usize, lineno: usize) -> Result<Vec<&'a str>> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != n {
        return Err(WannierError::Parse {
            line: lineno,
            message: format!("expected {n} fields, found {}", toks.len()),
        });
    }
    Ok(toks)
}

fn parse_float(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = parse_num(tok, line, "a real number")?;
    if !v.is_finite() {
        return Err(WannierError::Parse {
            line,
            message: format!("non-finite value '{tok}'"),
        });
    }
    Ok(v)
}

fn parse_count(lines: &mut Lines, what: &str) -> Result<usize> {
    let (n, l) = lines.next_nonblank(what)?;
    let tok = fields(l, 1, n)?;
    let v: usize = parse_num(tok[0], n, what)?;
    if v == 0 {
        return Err(WannierError::Schema(format!("{what} must be positive (line {n})")));
    }
    Ok(v)
}

fn parse_degeneracies(lines: &mut Lines, count: usize) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(count.min(1 << 16));
    let nlines = count.div_ceil(DEGENERACIES_PER_LINE);
    for _ in 0..nlines {
        let (n, l) = lines.next_nonblank("degeneracies")?;
        for tok in l.split_whitespace() {
            let d: u32 = parse_num(tok, n, "a degeneracy")?;
            if d == 0 {
                return Err(WannierError::Validation(format!("line {n}: degeneracy must be positive")));
            }
            out.push(d);
        }
    }
    if out.len() != count {
        return Err(WannierError::Schema(format!(
            "expected {count} degeneracies, found {}",
            out.len()
        )));
    }
    Ok(out)
}

fn band_index(tok: &str, line: usize, nb: usize) -> Result<usize> {
    let i: usize = parse_num(tok, line, "a band index")?;
    if i == 0 || i > nb {
        return Err(WannierError::Parse {
            line,
            message: format!("band index {i} outside 1..={nb}"),
        });
    }
    Ok(i - 1)
}

fn guard_size(lines: &Lines, num_rpoints: usize, nb: usize, per_r: usize) -> Result<usize> {
    let records = nb
        .checked_mul(nb)
        .and_then(|b| b.checked_mul(num_rpoints))
        .ok_or_else(|| WannierError::Schema("declared sizes overflow".into()))?;
    let needed = records
        .checked_mul(per_r)
        .ok_or_else(|| WannierError::Schema("declared sizes overflow".into()))?;
    if lines.remaining_nonblank() < needed {
        return Err(WannierError::Schema(format!(
            "file declares {records} records but holds only {} data lines",
            lines.remaining_nonblank()
        )));
    }
    Ok(records)
}

/// Reads an `_hr.dat` stream. The resulting model sits on a unit square cell
/// until [`WannierModel::with_cell`] supplies the real lattice.
pub fn parse_hr(text: &str) -> Result<WannierModel> {
    let mut lines = Lines::new(text);
    let (_, comment) = lines.next_raw("comment line")?;
    let nb = parse_count(&mut lines, "num_bands")?;
    let nr = parse_count(&mut lines, "num_rpoints")?;
    let degeneracies = parse_degeneracies(&mut lines, nr)?;
    guard_size(&lines, nr, nb, 1)?;

    let mut rpoints = Vec::with_capacity(nr);
    let mut h_r = Vec::with_capacity(nr);
    for ir in 0..nr {
        let mut block = CMatrix::zeros(nb, nb);
        let mut seen = vec![false; nb * nb];
        let mut rvec: Option<[i32; 3]> = None;
        for _ in 0..nb * nb {
            let (n, l) = lines
                .next_nonblank("Hamiltonian records")
                .map_err(|_| WannierError::Schema(format!("missing records for R index {ir}")))?;
            let t = fields(l, 7, n)?;
            let r = [
                parse_num::<i32>(t[0], n, "R1")?,
                parse_num::<i32>(t[1], n, "R2")?,
                parse_num::<i32>(t[2], n, "R3")?,
            ];
            match rvec {
                None => rvec = Some(r),
                Some(prev) if prev != r => {
                    return Err(WannierError::Schema(format!(
                        "line {n}: R block {ir} mixes lattice vectors {prev:?} and {r:?}"
                    )))
                }
                _ => {}
            }
            let m = band_index(t[3], n, nb)?;
            let nn = band_index(t[4], n, nb)?;
            if std::mem::replace(&mut seen[m * nb + nn], true) {
                return Err(WannierError::Schema(format!(
                    "line {n}: duplicate record for R = {r:?}, ({}, {})",
                    m + 1,
                    nn + 1
                )));
            }
            block[(m, nn)] = Complex64::new(parse_float(t[5], n)?, parse_float(t[6], n)?);
        }
        let r = rvec.expect("at least one record per block");
        if rpoints.contains(&r) {
            return Err(WannierError::Schema(format!("lattice vector {r:?} appears in two blocks")));
        }
        rpoints.push(r);
        h_r.push(block);
    }
    lines.expect_end()?;
    Ok(WannierModel::new(IDENTITY_CELL, rpoints, degeneracies, h_r, None)?.with_comment(comment.trim()))
}

/// Reads a `_tb.dat` stream (lattice, Hamiltonian and position blocks).
pub fn parse_tb(text: &str) -> Result<WannierModel> {
    let mut lines = Lines::new(text);
    let (_, comment) = lines.next_raw("comment line")?;
    let mut cell = [[0.0; 3]; 3];
    for row in cell.iter_mut() {
        let (n, l) = lines.next_nonblank("lattice vectors")?;
        let t = fields(l, 3, n)?;
        for (c, tok) in row.iter_mut().zip(t) {
            *c = parse_float(tok, n)?;
        }
    }
    let nb = parse_count(&mut lines, "num_bands")?;
    let nr = parse_count(&mut lines, "num_rpoints")?;
    let degeneracies = parse_degeneracies(&mut lines, nr)?;
    guard_size(&lines, nr, nb, 2)?;

    let mut rpoints = Vec::with_capacity(nr);
    let mut h_r = Vec::with_capacity(nr);
    let mut r_r = Vec::with_capacity(nr);
    for ir in 0..nr {
        let missing = |_| WannierError::Schema(format!("missing block for R index {ir}"));
        let (n, l) = lines.next_nonblank("R header").map_err(missing)?;
        let t = fields(l, 3, n)?;
        let r = [
            parse_num::<i32>(t[0], n, "R1")?,
            parse_num::<i32>(t[1], n, "R2")?,
            parse_num::<i32>(t[2], n, "R3")?,
        ];
        if rpoints.contains(&r) {
            return Err(WannierError::Schema(format!("lattice vector {r:?} appears in two blocks")));
        }
        let mut h = CMatrix::zeros(nb, nb);
        let mut seen = vec![false; nb * nb];
        for _ in 0..nb * nb {
            let (n, l) = lines.next_nonblank("Hamiltonian block").map_err(missing)?;
            let t = fields(l, 4, n)?;
            let (m, nn) = (band_index(t[0], n, nb)?, band_index(t[1], n, nb)?);
            if std::mem::replace(&mut seen[m * nb + nn], true) {
                return Err(WannierError::Schema(format!("line {n}: duplicate Hamiltonian element")));
            }
            h[(m, nn)] = Complex64::new(parse_float(t[2], n)?, parse_float(t[3], n)?);
        }
        let mut pos = [CMatrix::zeros(nb, nb), CMatrix::zeros(nb, nb), CMatrix::zeros(nb, nb)];
        let mut seen = vec![false; nb * nb];
        for _ in 0..nb * nb {
            let (n, l) = lines.next_nonblank("position block").map_err(missing)?;
            let t = fields(l, 8, n)?;
            let (m, nn) = (band_index(t[0], n, nb)?, band_index(t[1], n, nb)?);
            if std::mem::replace(&mut seen[m * nb + nn], true) {
                return Err(WannierError::Schema(format!("line {n}: duplicate position element")));
            }
            for (axis, p) in pos.iter_mut().enumerate() {
                p[(m, nn)] = Complex64::new(parse_float(t[2 + 2 * axis], n)?, parse_float(t[3 + 2 * axis], n)?);
            }
        }
        rpoints.push(r);
        h_r.push(h);
        r_r.push(pos);
    }
    lines.expect_end()?;
    Ok(WannierModel::new(cell, rpoints, degeneracies, h_r, Some(r_r))?.with_comment(comment.trim()))
}

fn read_all(mut reader: impl Read) -> Result<String> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| WannierError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| WannierError::Parse {
        line: 0,
        message: format!("input is not valid UTF-8: {e}"),
    })
}

pub fn read_hr(reader: impl Read) -> Result<WannierModel> {
    parse_hr(&read_all(reader)?)
}

pub fn read_tb(reader: impl Read) -> Result<WannierModel> {
    parse_tb(&read_all(reader)?)
}

fn fmt_real(x: f64) -> String {
    format!("{:>19.11e}", x)
}

fn write_degeneracies(out: &mut String, degs: &[u32]) {
    for chunk in degs.chunks(DEGENERACIES_PER_LINE) {
        for d in chunk {
            let _ = write!(out, "{d:5}");
        }
        out.push('\n');
    }
}

fn comment_line(model: &WannierModel) -> String {
    let c = model.comment.lines().next().unwrap_or("").trim();
    if c.is_empty() {
        "written by valleyswitch".to_string()
    } else {
        c.to_string()
    }
}

/// Canonical `_hr.dat` text (12 significant digits).
pub fn write_hr(model: &WannierModel) -> String {
    let nb = model.num_bands;
    let mut out = String::new();
    let _ = writeln!(out, "{}", comment_line(model));
    let _ = writeln!(out, "{nb:12}");
    let _ = writeln!(out, "{:12}", model.rpoints.len());
    write_degeneracies(&mut out, &model.degeneracies);
    for (r, h) in model.rpoints.iter().zip(&model.h_r) {
        for n in 0..nb {
            for m in 0..nb {
                let v = h[(m, n)];
                let _ = writeln!(
                    out,
                    "{:5}{:5}{:5}{:5}{:5} {} {}",
                    r[0],
                    r[1],
                    r[2],
                    m + 1,
                    n + 1,
                    fmt_real(v.re),
                    fmt_real(v.im)
                );
            }
        }
    }
    out
}

/// Canonical `_tb.dat` text (12 significant digits).
pub fn write_tb(model: &WannierModel) -> Result<String> {
    let pos = model.r_r.as_ref().ok_or(WannierError::MissingPositions)?;
    let nb = model.num_bands;
    let mut out = String::new();
    let _ = writeln!(out, "{}", comment_line(model));
    for row in &model.cell {
        let _ = writeln!(out, "{} {} {}", fmt_real(row[0]), fmt_real(row[1]), fmt_real(row[2]));
    }
    let _ = writeln!(out, "{nb:12}");
    let _ = writeln!(out, "{:12}", model.rpoints.len());
    write_degeneracies(&mut out, &model.degeneracies);
    for ((r, h), p) in model.rpoints.iter().zip(&model.h_r).zip(pos) {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:5}{:5}{:5}", r[0], r[1], r[2]);
        for n in 0..nb {
            for m in 0..nb {
                let v = h[(m, n)];
                let _ = writeln!(out, "{:5}{:5} {} {}", m + 1, n + 1, fmt_real(v.re), fmt_real(v.im));
            }
        }
        for n in 0..nb {
            for m in 0..nb {
                let _ = write!(out, "{:5}{:5}", m + 1, n + 1);
                for axis in p {
                    let v = axis[(m, n)];
                    let _ = write!(out, " {} {}", fmt_real(v.re), fmt_real(v.im));
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}
