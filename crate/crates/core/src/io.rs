//! File formats: chains, single copulas and CSV datasets.
//!
//! Text chain layout:
//!
//! ```text
//! gridcop-chain v1 <records>
//! grid <cuts of axis 0> / <cuts of axis 1> / ...
//! <mass vector of sample 1>
//! ...
//! ```
//!
//! Masses are written with 17 significant digits in cell enumeration order.
//! The binary variant stores the same header fields little-endian and ends
//! with the record count again, so truncation is detected either way.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::config::ColumnSel;
use crate::copula::{GridCopula, TRANSFORM_TOL};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::likelihood::Dataset;

pub const CHAIN_MAGIC: &str = "gridcop-chain";
pub const COPULA_MAGIC: &str = "gridcop-copula";
pub const FORMAT_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 8] = b"GRIDCOPB";

/// Kept mass vectors of a chain, concatenated.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainRecords {
    pub grid: Grid,
    pub masses: Vec<f64>,
}

impl ChainRecords {
    pub fn new(grid: Grid, masses: Vec<f64>) -> Result<Self> {
        if !masses.len().is_multiple_of(grid.n_cells()) {
            return Err(Error::DimensionMismatch { expected: grid.n_cells(), got: masses.len() % grid.n_cells() });
        }
        Ok(ChainRecords { grid, masses })
    }

    pub fn len(&self) -> usize {
        self.masses.len() / self.grid.n_cells()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.masses.chunks_exact(self.grid.n_cells())
    }

    pub fn posterior_mean(&self) -> Result<GridCopula> {
        if self.is_empty() {
            return Err(Error::EmptyChain);
        }
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.grid.n_cells()];
        for s in self.samples() {
            for (m, x) in mean.iter_mut().zip(s) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let c = GridCopula::from_parts(self.grid.clone(), mean);
        c.validate(TRANSFORM_TOL)?;
        Ok(c)
    }
}

fn fmt_value(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn grid_line(g: &Grid) -> String {
    let axes: Vec<String> =
        g.all_cuts().iter().map(|c| c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")).collect();
    format!("grid {}", axes.join(" / "))
}

pub fn parse_grid_line(line: &str, lineno: usize) -> Result<Grid> {
    let rest = line
        .strip_prefix("grid ")
        .ok_or_else(|| Error::Format { line: lineno, msg: "expected a 'grid' line".into() })?;
    let cuts = rest
        .split('/')
        .map(|axis| {
            axis.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Format { line: lineno, msg: format!("bad cut point '{t}'") }))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Grid::new(cuts).map_err(|e| Error::Format { line: lineno, msg: e.to_string() })
}

fn parse_header(line: &str, magic: &str, lineno: usize) -> Result<Vec<String>> {
    let mut it = line.split_whitespace();
    if it.next() != Some(magic) {
        return Err(Error::Format { line: lineno, msg: format!("missing '{magic}' header") });
    }
    let version = it.next().unwrap_or("");
    if version != format!("v{FORMAT_VERSION}") {
        return Err(Error::Format { line: lineno, msg: format!("unsupported format version '{version}'") });
    }
    Ok(it.map(str::to_string).collect())
}

fn parse_masses(line: &str, n: usize, lineno: usize) -> Result<Vec<f64>> {
    let v = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Format { line: lineno, msg: format!("bad value '{t}'") }))
        .collect::<Result<Vec<f64>>>()?;
    if v.len() != n {
        return Err(Error::Format { line: lineno, msg: format!("expected {n} values, found {}", v.len()) });
    }
    Ok(v)
}

pub fn write_chain_text<W: Write>(w: &mut W, grid: &Grid, samples: &[f64]) -> std::io::Result<()> {
    let n = grid.n_cells();
    writeln!(w, "{CHAIN_MAGIC} v{FORMAT_VERSION} {}", samples.len() / n)?;
    writeln!(w, "{}", grid_line(grid))?;
    for s in samples.chunks_exact(n) {
        let line: Vec<String> = s.iter().map(|&x| fmt_value(x)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_chain_binary<W: Write>(w: &mut W, grid: &Grid, samples: &[f64]) -> std::io::Result<()> {
    let n = grid.n_cells();
    let records = (samples.len() / n) as u64;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&records.to_le_bytes())?;
    w.write_all(&(grid.dims() as u32).to_le_bytes())?;
    for cuts in grid.all_cuts() {
        w.write_all(&(cuts.len() as u32).to_le_bytes())?;
        for c in cuts {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    for x in &samples[..records as usize * n] {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&records.to_le_bytes())
}

pub fn read_chain_text<R: BufRead>(r: R) -> Result<ChainRecords> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((i, Ok(l))) => Ok(Some((i, l))),
            Some((i, Err(e))) => Err(Error::Format { line: i, msg: format!("cannot read {what}: {e}") }),
            None => Ok(None),
        }
    };
    let (_, head) = next("header")?.ok_or(Error::Format { line: 1, msg: "empty chain file".into() })?;
    let rest = parse_header(&head, CHAIN_MAGIC, 1)?;
    let declared: usize = match rest.as_slice() {
        [n] => n.parse().map_err(|_| Error::Format { line: 1, msg: format!("bad record count '{n}'") })?,
        _ => return Err(Error::Format { line: 1, msg: "header must end with the record count".into() }),
    };
    let (gi, gl) = next("grid")?.ok_or(Error::Format { line: 2, msg: "missing grid line".into() })?;
    let grid = parse_grid_line(&gl, gi)?;
    let n = grid.n_cells();
    let mut masses = Vec::with_capacity(declared.saturating_mul(n).min(1 << 24));
    let mut found = 0usize;
    while let Some((i, l)) = next("record")? {
        if l.trim().is_empty() {
            continue;
        }
        masses.extend(parse_masses(&l, n, i)?);
        found += 1;
    }
    if found != declared {
        return Err(Error::Format { line: 1, msg: format!("header declares {declared} records, file holds {found}") });
    }
    ChainRecords::new(grid, masses)
}

fn take<const N: usize>(buf: &[u8], pos: &mut usize) -> Result<[u8; N]> {
    let end = *pos + N;
    let s = buf.get(*pos..end).ok_or(Error::Format { line: 0, msg: format!("binary chain truncated at byte {}", *pos) })?;
    *pos = end;
    Ok(s.try_into().expect("slice of length N"))
}

pub fn read_chain_binary(buf: &[u8]) -> Result<ChainRecords> {
    let mut pos = 0;
    if &take::<8>(buf, &mut pos)? != BINARY_MAGIC {
        return Err(Error::Format { line: 0, msg: "not a binary chain".into() });
    }
    let version = u32::from_le_bytes(take(buf, &mut pos)?);
    if version != FORMAT_VERSION {
        return Err(Error::Format { line: 0, msg: format!("unsupported format version {version}") });
    }
    let declared = u64::from_le_bytes(take(buf, &mut pos)?) as usize;
    let d = u32::from_le_bytes(take(buf, &mut pos)?) as usize;
    let mut cuts = Vec::with_capacity(d.min(64));
    for _ in 0..d {
        let m = u32::from_le_bytes(take(buf, &mut pos)?) as usize;
        let mut axis = Vec::with_capacity(m.min(1 << 16));
        for _ in 0..m {
            axis.push(f64::from_le_bytes(take(buf, &mut pos)?));
        }
        cuts.push(axis);
    }
    let grid = Grid::new(cuts).map_err(|e| Error::Format { line: 0, msg: e.to_string() })?;
    let body = buf.len().saturating_sub(pos + 8);
    let expected = declared.checked_mul(grid.n_cells() * 8);
    if expected != Some(body) {
        return Err(Error::Format {
            line: 0,
            msg: format!("binary chain declares {declared} records but holds {body} bytes of samples"),
        });
    }
    let masses: Vec<f64> =
        buf[pos..pos + body].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    pos += body;
    let trailer = u64::from_le_bytes(take(buf, &mut pos)?) as usize;
    if trailer != declared {
        return Err(Error::Format { line: 0, msg: format!("trailing record count {trailer} differs from header {declared}") });
    }
    ChainRecords::new(grid, masses)
}

pub fn write_chain(path: &Path, grid: &Grid, samples: &[f64], binary: bool) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let res = if binary { write_chain_binary(&mut w, grid, samples) } else { write_chain_text(&mut w, grid, samples) };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Reads either chain variant, told apart by the leading bytes.
pub fn read_chain(path: &Path) -> Result<ChainRecords> {
    let mut buf = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| Error::io(path, e))?;
    if buf.starts_with(BINARY_MAGIC) {
        read_chain_binary(&buf)
    } else {
        read_chain_text(BufReader::new(buf.as_slice()))
    }
}

pub fn write_copula<W: Write>(w: &mut W, c: &GridCopula) -> std::io::Result<()> {
    writeln!(w, "{COPULA_MAGIC} v{FORMAT_VERSION}")?;
    writeln!(w, "{}", grid_line(c.grid()))?;
    let line: Vec<String> = c.mass().iter().map(|&x| fmt_value(x)).collect();
    writeln!(w, "{}", line.join(" "))
}

pub fn read_copula<R: BufRead>(r: R) -> Result<GridCopula> {
    let lines: Vec<String> = r
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::Format { line: 0, msg: e.to_string() })?;
    let mut it = lines.iter().enumerate().map(|(i, l)| (i + 1, l.as_str())).filter(|(_, l)| !l.trim().is_empty());
    let (hi, head) = it.next().ok_or(Error::Format { line: 1, msg: "empty copula file".into() })?;
    if !parse_header(head, COPULA_MAGIC, hi)?.is_empty() {
        return Err(Error::Format { line: hi, msg: "unexpected tokens after the version".into() });
    }
    let (gi, gl) = it.next().ok_or(Error::Format { line: hi + 1, msg: "missing grid line".into() })?;
    let grid = parse_grid_line(gl, gi)?;
    let (mi, ml) = it.next().ok_or(Error::Format { line: gi + 1, msg: "missing mass line".into() })?;
    let mass = parse_masses(ml, grid.n_cells(), mi)?;
    if let Some((i, _)) = it.next() {
        return Err(Error::Format { line: i, msg: "trailing content after the mass line".into() });
    }
    let c = GridCopula::from_parts(grid, mass);
    c.validate(TRANSFORM_TOL).map_err(|e| Error::Format { line: mi, msg: e.to_string() })?;
    Ok(c)
}

pub fn save_copula(path: &Path, c: &GridCopula) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_copula(&mut w, c).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_copula(path: &Path) -> Result<GridCopula> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_copula(BufReader::new(f))
}

/// Parses a CSV dataset. Numbers use a dot decimal separator regardless of
/// locale; errors name the 1-based data row and column.
pub fn read_csv<R: Read>(r: R, header: bool, columns: Option<&[ColumnSel]>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(header).trim(csv::Trim::All).from_reader(r);
    let names: Vec<String> = if header {
        rdr.headers().map_err(|e| Error::Data(format!("cannot read header: {e}")))?.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };
    let pick: Option<Vec<usize>> = match columns {
        None => None,
        Some(sel) => Some(
            sel.iter()
                .map(|s| match s {
                    ColumnSel::Number(0) => Err(Error::Config("data.columns are numbered from 1".into())),
                    ColumnSel::Number(k) => Ok(k - 1),
                    ColumnSel::Name(n) => names
                        .iter()
                        .position(|h| h == n)
                        .ok_or_else(|| Error::Data(format!("no column named '{n}' in the header"))),
                })
                .collect::<Result<_>>()?,
        ),
    };
    let mut dims = pick.as_ref().map(Vec::len);
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        let idx: Vec<usize> = pick.clone().unwrap_or_else(|| (0..rec.len()).collect());
        let d = *dims.get_or_insert(idx.len());
        if idx.len() != d {
            return Err(Error::Data(format!("row {row} has {} columns, expected {d}", rec.len())));
        }
        for &k in &idx {
            let field = rec.get(k).ok_or_else(|| Error::Data(format!("row {row} has no column {}", k + 1)))?;
            let x: f64 = field
                .parse()
                .map_err(|_| Error::Data(format!("row {row}, column {}: cannot parse '{field}' as a number", k + 1)))?;
            if !x.is_finite() {
                return Err(Error::Data(format!("row {row}, column {}: non-finite value", k + 1)));
            }
            values.push(x);
        }
    }
    let d = dims.unwrap_or(names.len().max(1));
    Dataset::new(d, values)
}

pub fn load_csv(path: &Path, header: bool, columns: Option<&[ColumnSel]>) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })?;
    read_csv(f, header, columns).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_csv<W: Write>(w: W, data: &Dataset, names: &[String]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let res = (|| -> csv::Result<()> {
        wtr.write_record(names)?;
        for i in 0..data.len() {
            wtr.write_record(data.row(i).iter().map(|x| format!("{x:.17e}")))?;
        }
        wtr.flush()?;
        Ok(())
    })();
    res.map_err(|e| Error::Io { path: "<csv>".into(), msg: e.to_string() })
}

/// Reads a whole file as UTF-8, mapping failures to [`Error::Io`].
pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
