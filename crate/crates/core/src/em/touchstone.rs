//! Touchstone (`.sNp`, real/imaginary) and CSV matrix files.

use super::network::CMatrix;
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::fmt::Write as _;

/// One frequency point of an `N`-port parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPoint {
    pub freq_hz: f64,
    pub matrix: CMatrix,
}

/// Touchstone v1 text with `# HZ S RI R <z0>` options.
pub fn write_touchstone(points: &[FrequencyPoint], z0: f64) -> Result<String> {
    let ports = points.first().map(|p| p.matrix.nrows()).unwrap_or(0);
    if points
        .iter()
        .any(|p| p.matrix.nrows() != ports || p.matrix.ncols() != ports)
    {
        return Err(Error::validation(
            "all frequency points must share one square port count",
        ));
    }
    let mut out = String::new();
    writeln!(
        out,
        "! {ports}-port scattering parameters, port order TX, elements, RX"
    )
    .unwrap();
    writeln!(out, "# HZ S RI R {z0}").unwrap();
    for p in points {
        let m = &p.matrix;
        if ports == 2 {
            // two-port files list S11 S21 S12 S22 on one line
            write!(out, "{:.12e}", p.freq_hz).unwrap();
            for (i, j) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                write!(out, " {:.15e} {:.15e}", m[(i, j)].re, m[(i, j)].im).unwrap();
            }
            out.push('\n');
            continue;
        }
        for i in 0..ports {
            for (chunk_idx, chunk) in (0..ports).collect::<Vec<_>>().chunks(4).enumerate() {
                if i == 0 && chunk_idx == 0 {
                    write!(out, "{:.12e}", p.freq_hz).unwrap();
                } else {
                    out.push_str("   ");
                }
                for &j in chunk {
                    write!(out, " {:.15e} {:.15e}", m[(i, j)].re, m[(i, j)].im).unwrap();
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Parses Touchstone v1 text holding `ports`-port data in RI, MA or DB
/// format. Returns the points and the reference impedance.
pub fn read_touchstone(text: &str, ports: usize) -> Result<(Vec<FrequencyPoint>, f64)> {
    if ports == 0 {
        return Err(Error::validation("port count must be positive"));
    }
    let mut scale = 1.0;
    let mut format = "MA".to_string();
    let mut z0 = 50.0;
    let mut seen_options = false;
    let mut numbers: Vec<(usize, f64)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(opts) = line.strip_prefix('#') {
            if seen_options {
                continue;
            }
            seen_options = true;
            let toks: Vec<String> = opts
                .split_whitespace()
                .map(|t| t.to_ascii_uppercase())
                .collect();
            let mut it = toks.iter();
            while let Some(t) = it.next() {
                match t.as_str() {
                    "HZ" => scale = 1.0,
                    "KHZ" => scale = 1e3,
                    "MHZ" => scale = 1e6,
                    "GHZ" => scale = 1e9,
                    "S" => {}
                    "Y" | "Z" | "H" | "G" => {
                        return Err(Error::parse(
                            line_no,
                            format!("unsupported parameter type {t}"),
                        ))
                    }
                    "RI" | "MA" | "DB" => format = t.clone(),
                    "R" => {
                        let v = it
                            .next()
                            .ok_or_else(|| Error::parse(line_no, "missing reference impedance"))?;
                        z0 = v
                            .parse()
                            .map_err(|_| Error::parse(line_no, format!("bad impedance '{v}'")))?;
                    }
                    other => {
                        return Err(Error::parse(line_no, format!("unknown option '{other}'")))
                    }
                }
            }
            continue;
        }
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(line_no, format!("not a number: '{tok}'")))?;
            numbers.push((line_no, v));
        }
    }
    let per_point = 1 + 2 * ports * ports;
    if numbers.len() % per_point != 0 {
        let line = numbers.last().map(|n| n.0).unwrap_or(0);
        return Err(Error::parse(
            line,
            format!(
                "{} values do not form whole {ports}-port records",
                numbers.len()
            ),
        ));
    }
    let to_complex = |a: f64, b: f64| match format.as_str() {
        "RI" => Complex64::new(a, b),
        "MA" => Complex64::from_polar(a, b.to_radians()),
        _ => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
    };
    let mut points = Vec::with_capacity(numbers.len() / per_point);
    for rec in numbers.chunks(per_point) {
        let freq_hz = rec[0].1 * scale;
        let vals: Vec<Complex64> = rec[1..]
            .chunks(2)
            .map(|c| to_complex(c[0].1, c[1].1))
            .collect();
        let matrix = if ports == 2 {
            CMatrix::from_column_slice(2, 2, &vals)
        } else {
            CMatrix::from_row_slice(ports, ports, &vals)
        };
        if let Some(prev) = points.last().map(|p: &FrequencyPoint| p.freq_hz) {
            if freq_hz <= prev {
                return Err(Error::parse(rec[0].0, "frequencies must increase"));
            }
        }
        points.push(FrequencyPoint { freq_hz, matrix });
    }
    Ok((points, z0))
}

/// CSV with header `row,col,re,im`, one line per entry, row-major.
pub fn write_matrix_csv(m: &CMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            writeln!(out, "{i},{j},{:.17e},{:.17e}", m[(i, j)].re, m[(i, j)].im).unwrap();
        }
    }
    out
}

pub fn read_matrix_csv(text: &str) -> Result<CMatrix> {
    let mut entries = Vec::new();
    let (mut rows, mut cols) = (0usize, 0usize);
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("row")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::parse(line_no, "expected row,col,re,im"));
        }
        let i: usize = f[0]
            .parse()
            .map_err(|_| Error::parse(line_no, "bad row index"))?;
        let j: usize = f[1]
            .parse()
            .map_err(|_| Error::parse(line_no, "bad column index"))?;
        let re: f64 = f[2]
            .parse()
            .map_err(|_| Error::parse(line_no, "bad real part"))?;
        let im: f64 = f[3]
            .parse()
            .map_err(|_| Error::parse(line_no, "bad imaginary part"))?;
        rows = rows.max(i + 1);
        cols = cols.max(j + 1);
        entries.push((line_no, i, j, Complex64::new(re, im)));
    }
    if entries.len() != rows * cols {
        return Err(Error::parse(
            text.lines().count(),
            format!("{} entries for a {rows}×{cols} matrix", entries.len()),
        ));
    }
    let mut m = CMatrix::from_element(rows, cols, Complex64::new(f64::NAN, 0.0));
    for (line_no, i, j, v) in entries {
        if !m[(i, j)].re.is_nan() {
            return Err(Error::parse(line_no, format!("duplicate entry ({i}, {j})")));
        }
        m[(i, j)] = v;
    }
    Ok(m)
}
