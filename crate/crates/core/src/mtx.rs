//! MatrixMarket I/O.
//!
//! Observed matrices are read from the coordinate format (1-based indices,
//! `real` or `integer` field, `general` or `symmetric` symmetry). Dense
//! factors are written and read in the array format, column-major.
//!
//! Readers accept untrusted input: sizes are validated before anything is
//! allocated in proportion to them.

use nalgebra::DMatrix;
use std::io::{self, BufRead, Write};
use thiserror::Error;

use crate::error::LinalgError;
use crate::masked_linalg::ObservedMatrix;

#[derive(Debug, Error)]
pub enum MtxError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unsupported {what} '{value}'")]
    Unsupported { line: usize, what: &'static str, value: String },
    #[error("line {line}: entry ({row}, {col}) outside a {m}x{n} matrix")]
    OutOfRange { line: usize, row: usize, col: usize, m: usize, n: usize },
    #[error("line {line}: entry ({row}, {col}) repeats an earlier entry")]
    Duplicate { line: usize, row: usize, col: usize },
    #[error("expected {expected} entries, found {found}")]
    Count { expected: usize, found: usize },
    #[error("unexpected end of input: {0}")]
    Truncated(&'static str),
    #[error(transparent)]
    Invalid(#[from] LinalgError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn syntax(line: usize, msg: impl Into<String>) -> MtxError {
    MtxError::Syntax { line, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Header {
    layout: Layout,
    symmetry: Symmetry,
}

/// Numbered, non-comment, non-blank lines.
struct Lines<R> {
    inner: R,
    line: usize,
    buf: String,
}

impl<R: BufRead> Lines<R> {
    fn new(inner: R) -> Self {
        Lines { inner, line: 0, buf: String::new() }
    }

    fn raw(&mut self) -> Result<Option<&str>, MtxError> {
        self.buf.clear();
        if self.inner.read_line(&mut self.buf)? == 0 {
            return Ok(None);
        }
        self.line += 1;
        Ok(Some(self.buf.trim()))
    }

    fn data(&mut self) -> Result<Option<(usize, &str)>, MtxError> {
        loop {
            self.buf.clear();
            if self.inner.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            let t = self.buf.trim();
            if !t.is_empty() && !t.starts_with('%') {
                return Ok(Some((self.line, self.buf.trim())));
            }
        }
    }
}

fn parse_header<R: BufRead>(lines: &mut Lines<R>) -> Result<Header, MtxError> {
    let first = lines.raw()?.ok_or(MtxError::Truncated("missing header"))?.to_string();
    let line = lines.line;
    let mut tok = first.split_whitespace();
    if !tok.next().is_some_and(|t| t.eq_ignore_ascii_case("%%MatrixMarket")) {
        return Err(syntax(line, "header must start with %%MatrixMarket"));
    }
    let object = tok.next().ok_or_else(|| syntax(line, "missing object"))?;
    if !object.eq_ignore_ascii_case("matrix") {
        return Err(MtxError::Unsupported { line, what: "object", value: object.into() });
    }
    let format = tok.next().ok_or_else(|| syntax(line, "missing format"))?;
    let layout = match format.to_ascii_lowercase().as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        _ => return Err(MtxError::Unsupported { line, what: "format", value: format.into() }),
    };
    let field = tok.next().ok_or_else(|| syntax(line, "missing field"))?;
    match field.to_ascii_lowercase().as_str() {
        "real" | "integer" | "double" => {}
        _ => return Err(MtxError::Unsupported { line, what: "field", value: field.into() }),
    }
    let sym = tok.next().ok_or_else(|| syntax(line, "missing symmetry"))?;
    let symmetry = match sym.to_ascii_lowercase().as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        _ => return Err(MtxError::Unsupported { line, what: "symmetry", value: sym.into() }),
    };
    if tok.next().is_some() {
        return Err(syntax(line, "trailing tokens in header"));
    }
    Ok(Header { layout, symmetry })
}

fn parse_usize(line: usize, tok: Option<&str>, what: &str) -> Result<usize, MtxError> {
    let t = tok.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    t.parse().map_err(|_| syntax(line, format!("invalid {what} '{t}'")))
}

fn parse_value(line: usize, tok: Option<&str>) -> Result<f64, MtxError> {
    let t = tok.ok_or_else(|| syntax(line, "missing value"))?;
    let v: f64 = t.parse().map_err(|_| syntax(line, format!("invalid value '{t}'")))?;
    if !v.is_finite() {
        return Err(syntax(line, format!("non-finite value '{t}'")));
    }
    Ok(v)
}

fn no_trailing<'a>(line: usize, mut tok: impl Iterator<Item = &'a str>) -> Result<(), MtxError> {
    match tok.next() {
        Some(t) => Err(syntax(line, format!("unexpected token '{t}'"))),
        None => Ok(()),
    }
}

/// Reads an observed matrix from MatrixMarket coordinate format.
pub fn read_coordinate<R: BufRead>(reader: R) -> Result<ObservedMatrix, MtxError> {
    let mut lines = Lines::new(reader);
    let header = parse_header(&mut lines)?;
    if header.layout != Layout::Coordinate {
        return Err(MtxError::Unsupported { line: 1, what: "format", value: "array".into() });
    }
    let (line, size) = lines.data()?.ok_or(MtxError::Truncated("missing size line"))?;
    let mut tok = size.split_whitespace();
    let m = parse_usize(line, tok.next(), "row count")?;
    let n = parse_usize(line, tok.next(), "column count")?;
    let nnz = parse_usize(line, tok.next(), "entry count")?;
    no_trailing(line, tok)?;
    if m == 0 || n == 0 {
        return Err(syntax(line, "dimensions must be positive"));
    }
    if m.checked_mul(n).is_none_or(|total| nnz > total) {
        return Err(syntax(line, format!("{nnz} entries cannot fit a {m}x{n} matrix")));
    }
    if header.symmetry == Symmetry::Symmetric && m != n {
        return Err(syntax(line, "symmetric matrix must be square"));
    }

    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz.min(1 << 16));
    let mut origin: Vec<usize> = Vec::with_capacity(nnz.min(1 << 16));
    let mut found = 0usize;
    while let Some((line, text)) = lines.data()? {
        found += 1;
        if found > nnz {
            return Err(MtxError::Count { expected: nnz, found });
        }
        let mut tok = text.split_whitespace();
        let i = parse_usize(line, tok.next(), "row index")?;
        let j = parse_usize(line, tok.next(), "column index")?;
        let v = parse_value(line, tok.next())?;
        no_trailing(line, tok)?;
        if i == 0 || j == 0 || i > m || j > n {
            return Err(MtxError::OutOfRange { line, row: i, col: j, m, n });
        }
        if header.symmetry == Symmetry::Symmetric && j > i {
            return Err(syntax(line, "symmetric input must list the lower triangle only"));
        }
        entries.push((i - 1, j - 1, v));
        origin.push(line);
        if header.symmetry == Symmetry::Symmetric && i != j {
            entries.push((j - 1, i - 1, v));
            origin.push(line);
        }
    }
    if found != nnz {
        return Err(MtxError::Count { expected: nnz, found });
    }

    // stable sort keeps the first occurrence ahead of its duplicate
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&k| (entries[k].0, entries[k].1));
    for w in order.windows(2) {
        let (a, b) = (entries[w[0]], entries[w[1]]);
        if (a.0, a.1) == (b.0, b.1) {
            return Err(MtxError::Duplicate { line: origin[w[1]], row: b.0 + 1, col: b.1 + 1 });
        }
    }
    Ok(ObservedMatrix::from_entries(m, n, entries)?)
}

/// Writes an observed matrix in coordinate format, canonical order.
pub fn write_coordinate<W: Write>(mut w: W, x: &ObservedMatrix) -> io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", x.nrows(), x.ncols(), x.len())?;
    for (i, j, v) in x.entries() {
        writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Writes a dense matrix in array format (column-major).
///
/// Values use the shortest representation that round-trips exactly.
pub fn write_array<W: Write>(mut w: W, a: &DMatrix<f64>) -> io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    for v in a.iter() {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

/// Reads a dense `general` array-format matrix.
pub fn read_array<R: BufRead>(reader: R) -> Result<DMatrix<f64>, MtxError> {
    let mut lines = Lines::new(reader);
    let header = parse_header(&mut lines)?;
    if header.layout != Layout::Array {
        return Err(MtxError::Unsupported { line: 1, what: "format", value: "coordinate".into() });
    }
    if header.symmetry != Symmetry::General {
        return Err(MtxError::Unsupported { line: 1, what: "symmetry", value: "symmetric".into() });
    }
    let (line, size) = lines.data()?.ok_or(MtxError::Truncated("missing size line"))?;
    let mut tok = size.split_whitespace();
    let m = parse_usize(line, tok.next(), "row count")?;
    let n = parse_usize(line, tok.next(), "column count")?;
    no_trailing(line, tok)?;
    let total = m.checked_mul(n).ok_or_else(|| syntax(line, "dimensions overflow"))?;

    let mut values = Vec::with_capacity(total.min(1 << 16));
    while let Some((line, text)) = lines.data()? {
        if values.len() == total {
            return Err(MtxError::Count { expected: total, found: total + 1 });
        }
        let mut tok = text.split_whitespace();
        values.push(parse_value(line, tok.next())?);
        no_trailing(line, tok)?;
    }
    if values.len() != total {
        return Err(MtxError::Count { expected: total, found: values.len() });
    }
    Ok(DMatrix::from_vec(m, n, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<ObservedMatrix, MtxError> {
        read_coordinate(s.as_bytes())
    }

    #[test]
    fn reads_general() {
        let x = read("%%MatrixMarket matrix coordinate real general\n% comment\n\n3 2 3\n3 1 -1.5\n1 2 2e0\n2 2 4\n")
            .unwrap();
        assert_eq!((x.nrows(), x.ncols()), (3, 2));
        assert_eq!(x.entries().collect::<Vec<_>>(), vec![(0, 1, 2.0), (1, 1, 4.0), (2, 0, -1.5)]);
    }

    #[test]
    fn reads_symmetric_lower_triangle() {
        let x = read("%%MatrixMarket matrix coordinate integer symmetric\n2 2 2\n1 1 1\n2 1 5\n").unwrap();
        assert_eq!(x.entries().collect::<Vec<_>>(), vec![(0, 0, 1.0), (0, 1, 5.0), (1, 0, 5.0)]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = read("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n1 x 2\n").unwrap_err();
        assert!(matches!(e, MtxError::Syntax { line: 4, .. }), "{e}");
        let e = read("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n\n3 1 2\n").unwrap_err();
        assert!(matches!(e, MtxError::OutOfRange { line: 5, .. }), "{e}");
        let e = read("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n1 1 2\n").unwrap_err();
        assert!(matches!(e, MtxError::Duplicate { line: 4, row: 1, col: 1 }), "{e}");
        assert!(e.to_string().starts_with("line 4"));
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "",
            "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n",
            "%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n",
            "%%MatrixMarket tensor coordinate real general\n",
            "%%MatrixMarket matrix coordinate real hermitian\n",
            "%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1\n",
            "%%MatrixMarket matrix coordinate real general\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1\n2 2 2\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 0\n",
            "%%MatrixMarket matrix coordinate real general\n0 2 0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 5\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 nan\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1 7\n",
            "%%MatrixMarket matrix coordinate real general\n99999999999 99999999999 1\n1 1 1\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 3 1\n1 1 1\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1\n",
            "%%MatrixMarket matrix array real general\n1 1\n1\n",
        ] {
            assert!(read(bad).is_err(), "accepted: {bad:?}");
        }
    }

    #[test]
    fn coordinate_round_trip() {
        let x = ObservedMatrix::from_entries(3, 4, vec![(2, 3, 0.1), (0, 0, -7.25e-9), (1, 2, 1e300)]).unwrap();
        let mut buf = Vec::new();
        write_coordinate(&mut buf, &x).unwrap();
        assert_eq!(read_coordinate(buf.as_slice()).unwrap(), x);
    }

    #[test]
    fn array_round_trip_is_exact() {
        let a = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) - 1e-17);
        let mut buf = Vec::new();
        write_array(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix array real general\n3 2\n"));
        assert_eq!(read_array(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn array_rejects_wrong_count() {
        assert!(read_array("%%MatrixMarket matrix array real general\n2 1\n1\n".as_bytes()).is_err());
        assert!(read_array("%%MatrixMarket matrix array real general\n1 1\n1\n2\n".as_bytes()).is_err());
        assert!(read_array("%%MatrixMarket matrix array real general\n99999999999 99999999999\n".as_bytes()).is_err());
    }
}
