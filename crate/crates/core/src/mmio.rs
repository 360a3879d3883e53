//! Matrix Market reader and writer for dense real matrices.
//!
//! Reads `array` and `coordinate` files with `general` or `symmetric`
//! symmetry. Writes `array` (symmetric files store the lower triangle) or
//! `coordinate` (nonzeros of the lower triangle for symmetric input). Every
//! value is printed with 17 significant digits, which round-trips any f64.

use std::fs;
use std::path::Path;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Array,
    Coordinate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("Matrix Market line {line}: {msg}"))
}

pub fn parse_matrix_market(text: &str) -> Result<Mat<f64>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market input".into()))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, format!("bad header {header:?}")));
    }
    let layout = match tokens[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(parse_err(1, format!("unsupported format {other:?}"))),
    };
    match tokens[3].as_str() {
        "real" | "double" | "integer" => {}
        other => return Err(parse_err(1, format!("unsupported field {other:?}"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry {other:?}"))),
    };

    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (size_line, size) = body.next().ok_or_else(|| Error::Parse("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| parse_err(size_line, e)))
        .collect::<Result<_>>()?;
    let expected = if layout == Layout::Array { 2 } else { 3 };
    if dims.len() != expected {
        return Err(parse_err(size_line, format!("expected {expected} sizes, got {size:?}")));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if symmetry == Symmetry::Symmetric && rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }

    let value = |line: usize, tok: &str| tok.parse::<f64>().map_err(|e| parse_err(line, format!("{tok:?}: {e}")));
    let mut m = Mat::<f64>::zeros(rows, cols);
    match layout {
        Layout::Array => {
            // column-major; symmetric files list the lower triangle only
            let mut slots = (0..cols).flat_map(|j| {
                let start = if symmetry == Symmetry::Symmetric { j } else { 0 };
                (start..rows).map(move |i| (i, j))
            });
            let mut seen = 0usize;
            let total = if symmetry == Symmetry::Symmetric {
                rows * (rows + 1) / 2
            } else {
                rows * cols
            };
            for (line, text) in body {
                for tok in text.split_whitespace() {
                    let (i, j) = slots
                        .next()
                        .ok_or_else(|| parse_err(line, "more entries than the size line declares"))?;
                    let v = value(line, tok)?;
                    m[(i, j)] = v;
                    if symmetry == Symmetry::Symmetric {
                        m[(j, i)] = v;
                    }
                    seen += 1;
                }
            }
            if seen != total {
                return Err(Error::Parse(format!("expected {total} entries, found {seen}")));
            }
        }
        Layout::Coordinate => {
            let nnz = dims[2];
            let mut seen = 0usize;
            for (line, text) in body {
                let toks: Vec<&str> = text.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(parse_err(line, format!("expected `i j value`, got {text:?}")));
                }
                let idx = |t: &str, max: usize| -> Result<usize> {
                    let i: usize = t.parse().map_err(|e| parse_err(line, e))?;
                    if i == 0 || i > max {
                        return Err(parse_err(line, format!("index {i} outside 1..={max}")));
                    }
                    Ok(i - 1)
                };
                let (i, j) = (idx(toks[0], rows)?, idx(toks[1], cols)?);
                let v = value(line, toks[2])?;
                m[(i, j)] = v;
                if symmetry == Symmetry::Symmetric {
                    m[(j, i)] = v;
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(Error::Parse(format!("expected {nnz} entries, found {seen}")));
            }
        }
    }
    Ok(m)
}

pub fn read_matrix_market(path: &Path) -> Result<Mat<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_matrix_market(&text)
}

pub fn format_matrix_market(m: MatRef<'_, f64>, layout: Layout, symmetry: Symmetry) -> Result<String> {
    let (rows, cols) = (m.nrows(), m.ncols());
    if symmetry == Symmetry::Symmetric && rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let lower = |j: usize| if symmetry == Symmetry::Symmetric { j } else { 0 };
    let mut out = format!(
        "%%MatrixMarket matrix {} real {}\n",
        if layout == Layout::Array { "array" } else { "coordinate" },
        if symmetry == Symmetry::Symmetric {
            "symmetric"
        } else {
            "general"
        }
    );
    match layout {
        Layout::Array => {
            out.push_str(&format!("{rows} {cols}\n"));
            for j in 0..cols {
                for i in lower(j)..rows {
                    out.push_str(&fmt_f64(m[(i, j)]));
                    out.push('\n');
                }
            }
        }
        Layout::Coordinate => {
            let entries: Vec<(usize, usize, f64)> = (0..cols)
                .flat_map(|j| (lower(j)..rows).map(move |i| (i, j)))
                .map(|(i, j)| (i, j, m[(i, j)]))
                .filter(|e| e.2 != 0.0)
                .collect();
            out.push_str(&format!("{rows} {cols} {}\n", entries.len()));
            for (i, j, v) in entries {
                out.push_str(&format!("{} {} {}\n", i + 1, j + 1, fmt_f64(v)));
            }
        }
    }
    Ok(out)
}

pub fn write_matrix_market(path: &Path, m: MatRef<'_, f64>, layout: Layout, symmetry: Symmetry) -> Result<()> {
    let text = format_matrix_market(m, layout, symmetry)?;
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Mat<f64> {
        let mut m = Mat::from_fn(4, 4, |i, j| {
            ((i + 1) * (j + 1)) as f64 / 7.0 + if i == j { 0.1 } else { 0.0 }
        });
        m[(3, 0)] = 0.0;
        m[(0, 3)] = 0.0;
        m
    }

    #[test]
    fn round_trip_all_variants() {
        let m = sample();
        for layout in [Layout::Array, Layout::Coordinate] {
            for symmetry in [Symmetry::General, Symmetry::Symmetric] {
                let text = format_matrix_market(m.as_ref(), layout, symmetry).unwrap();
                assert_eq!(parse_matrix_market(&text).unwrap(), m, "{layout:?} {symmetry:?}");
            }
        }
    }

    #[test]
    fn reads_comments_and_integer_fields() {
        let text = "%%MatrixMarket matrix coordinate integer symmetric\n% note\n\n2 2 2\n1 1 3\n2 1 -1\n";
        let m = parse_matrix_market(text).unwrap();
        assert_eq!(m[(0, 1)], -1.0);
        assert_eq!(m[(1, 1)], 0.0);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_matrix_market("").is_err());
        assert!(parse_matrix_market("%%MatrixMarket matrix array complex general\n1 1\n1\n").is_err());
        assert!(parse_matrix_market("%%MatrixMarket matrix array real general\n2 2\n1 2 3\n").is_err());
        assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").is_err());
        assert!(parse_matrix_market("%%MatrixMarket matrix array real symmetric\n2 3\n").is_err());
        assert!(parse_matrix_market("%%MatrixMarket matrix array real general\n1 1\nabc\n").is_err());
    }
}
