//! Field files: whitespace-separated text matrices and 16-bit binary PGM
//! with a `key=value` sidecar holding the value range.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{GridField, Shape};

const PGM_MAX: u32 = 65535;

/// Text matrix, one grid row per line, preceded by `# key=value` lines.
pub fn format_text(u: &GridField, header: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in header {
        s.push_str(&format!("# {k}={v}\n"));
    }
    for i in 0..u.rows() {
        let row: Vec<String> = (0..u.cols()).map(|j| u.at(i, j).to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_text(path: &Path, u: &GridField, header: &[(String, String)]) -> Result<()> {
    fs::write(path, format_text(u, header)).map_err(|e| Error::io(path, e))
}

/// Parses a text matrix; `#` starts a comment, blank lines are skipped.
pub fn parse_text(text: &str, origin: &Path) -> Result<GridField> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let before = data.len();
        for tok in content.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(origin, idx + 1, format!("not a number: '{tok}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, idx + 1, format!("non-finite value '{tok}'")));
            }
            data.push(v);
        }
        let n = data.len() - before;
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::parse(
                    origin,
                    idx + 1,
                    format!("row has {n} values, expected {c}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::parse(origin, 0, "no data rows"))?;
    GridField::new(Shape::new(rows, cols), data)
}

pub fn read_text(path: &Path) -> Result<GridField> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_text(&text, path)
}

/// Sidecar path for a PGM file: `name.pgm` → `name.pgm.meta`.
pub fn sidecar_path(pgm: &Path) -> PathBuf {
    let mut s = pgm.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes a P5 image with maxval 65535 (big-endian samples) mapping
/// `[min, max]` linearly onto `[0, 65535]`, plus the sidecar with the range.
pub fn write_pgm(path: &Path, u: &GridField, header: &[(String, String)]) -> Result<()> {
    let (lo, hi) = (u.min(), u.max());
    let span = hi - lo;
    let mut out = Vec::with_capacity(u.len() * 2 + 256);
    let io = |e| Error::io(path, e);
    writeln!(out, "P5").map_err(io)?;
    for (k, v) in header {
        writeln!(out, "# {k}={v}").map_err(io)?;
    }
    writeln!(out, "{} {}", u.cols(), u.rows()).map_err(io)?;
    writeln!(out, "{PGM_MAX}").map_err(io)?;
    for &x in u.values() {
        let q = if span > 0.0 {
            ((x - lo) / span * PGM_MAX as f64).round() as u16
        } else {
            0
        };
        out.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, out).map_err(io)?;

    let mut meta = String::new();
    for (k, v) in header {
        meta.push_str(&format!("# {k}={v}\n"));
    }
    meta.push_str(&format!("rows={}\ncols={}\nmin={lo}\nmax={hi}\n", u.rows(), u.cols()));
    let side = sidecar_path(path);
    fs::write(&side, meta).map_err(|e| Error::io(&side, e))
}

fn pgm_header(bytes: &[u8], origin: &Path) -> Result<(Vec<usize>, usize)> {
    let mut pos = 0;
    let mut fields = Vec::new();
    let mut magic = None;
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(origin, 0, "truncated PGM header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::parse(origin, 0, "PGM header is not ASCII"))?;
        if magic.is_none() {
            if tok != "P5" {
                return Err(Error::parse(origin, 0, format!("expected P5, got '{tok}'")));
            }
            magic = Some(());
            continue;
        }
        fields.push(
            tok.parse()
                .map_err(|_| Error::parse(origin, 0, format!("bad PGM header value '{tok}'")))?,
        );
    }
    // exactly one whitespace byte separates the header from the samples
    Ok((fields, pos + 1))
}

/// Reads a P5 PGM; values are mapped back through the sidecar range when
/// it exists, otherwise scaled to `[0, 1]`.
pub fn read_pgm(path: &Path) -> Result<GridField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (h, start) = pgm_header(&bytes, path)?;
    let (cols, rows, maxval) = (h[0], h[1], h[2]);
    if maxval == 0 || maxval > PGM_MAX as usize {
        return Err(Error::parse(path, 0, format!("unsupported maxval {maxval}")));
    }
    let wide = maxval > 255;
    let n = rows * cols;
    let need = start + n * if wide { 2 } else { 1 };
    if bytes.len() < need {
        return Err(Error::parse(path, 0, "PGM sample data is truncated"));
    }
    let body = &bytes[start..need];
    let raw: Vec<f64> = if wide {
        body.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64)
            .collect()
    } else {
        body.iter().map(|&b| b as f64 / maxval as f64).collect()
    };
    let side = sidecar_path(path);
    let (lo, hi) = if side.exists() {
        read_range(&side)?
    } else {
        (0.0, 1.0)
    };
    let data = raw.into_iter().map(|r| lo + r * (hi - lo)).collect();
    GridField::new(Shape::new(rows, cols), data)
}

fn read_range(side: &Path) -> Result<(f64, f64)> {
    let text = fs::read_to_string(side).map_err(|e| Error::io(side, e))?;
    let (mut lo, mut hi) = (None, None);
    for (idx, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        let Some((k, v)) = content.split_once('=') else {
            continue;
        };
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(side, idx + 1, format!("bad number '{v}'")))
        };
        match k.trim() {
            "min" => lo = Some(parse(v)?),
            "max" => hi = Some(parse(v)?),
            _ => {}
        }
    }
    match (lo, hi) {
        (Some(l), Some(h)) => Ok((l, h)),
        _ => Err(Error::parse(side, 0, "sidecar lacks min/max")),
    }
}

/// Reads a field file, choosing the format by extension.
pub fn read_field(path: &Path) -> Result<GridField> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pgm") => read_pgm(path),
        _ => read_text(path),
    }
}
