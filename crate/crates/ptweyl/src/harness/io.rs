//! Deterministic writers for run artifacts.  All floating-point values are
//! written with 17 significant digits so CSV output is bit-reproducible and
//! round-trips exactly.

use ndarray::Array2;
use num_complex::Complex64;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::classical::{PassageTimeGrid, NEVER};
use crate::spectra::{Histogram, Spectrum};
use crate::{Error, Result};

/// Shortest exact decimal form of a value, for filenames and task keys.
pub fn float_label(x: f64) -> String {
    format!("{x}")
}

/// Full-precision form used in every CSV cell.
pub fn format_float(x: f64) -> String {
    format!("{x:.17e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per eigenvalue: eigenvalue and quasienergy E = i ln(lambda).
pub fn write_spectrum_csv(path: &Path, spectrum: &Spectrum) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "re_lambda,im_lambda,re_E,im_E").map_err(io_err)?;
    for (lambda, e) in spectrum.lambdas.iter().zip(spectrum.quasienergies.iter()) {
        writeln!(
            w,
            "{},{},{},{}",
            format_float(lambda.re),
            format_float(lambda.im),
            format_float(e.re),
            format_float(e.im)
        )
        .map_err(io_err)?;
    }
    finish(w, path)
}

/// Read back (eigenvalue, quasienergy) rows written by `write_spectrum_csv`.
pub fn read_spectrum_csv(path: &Path) -> Result<Vec<(Complex64, Complex64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "re_lambda,im_lambda,re_E,im_E" {
                return Err(Error::Config(format!(
                    "{}: unexpected header {line:?}",
                    path.display()
                )));
            }
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}: bad float {s:?} on line {}", path.display(), i + 1))
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() != 4 {
            return Err(Error::Config(format!(
                "{}: expected 4 columns on line {}",
                path.display(),
                i + 1
            )));
        }
        rows.push((
            Complex64::new(fields[0], fields[1]),
            Complex64::new(fields[2], fields[3]),
        ));
    }
    Ok(rows)
}

pub fn write_histogram_csv(path: &Path, histogram: &Histogram) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "center,count,density").map_err(io_err)?;
    for i in 0..histogram.centers.len() {
        writeln!(
            w,
            "{},{},{}",
            format_float(histogram.centers[i]),
            histogram.counts[i],
            format_float(histogram.densities[i])
        )
        .map_err(io_err)?;
    }
    finish(w, path)
}

/// Seed statistics of the above-threshold fraction at one gain/loss rate.
#[derive(Debug, Clone)]
pub struct FractionRow {
    pub m: usize,
    pub n: usize,
    pub mean_fraction: f64,
    pub stderr: f64,
    pub n_seeds: usize,
}

pub fn write_fractions_csv(path: &Path, rows: &[FractionRow]) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "m,n,mean_fraction,stderr,n_seeds").map_err(io_err)?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.m,
            row.n,
            format_float(row.mean_fraction),
            format_float(row.stderr),
            row.n_seeds
        )
        .map_err(io_err)?;
    }
    finish(w, path)
}

/// Power-law fit of the above-threshold fraction against resonator size.
#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub mu: f64,
    pub n_points: usize,
    pub exponent_a: f64,
    pub stderr_a: f64,
    pub intercept: f64,
    pub fractal_dim: f64,
    pub stderr_dim: f64,
}

pub fn write_scaling_csv(path: &Path, row: &ScalingRow) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(
        w,
        "mu,n_points,exponent_a,stderr_a,intercept,fractal_dim,stderr_dim"
    )
    .map_err(io_err)?;
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        format_float(row.mu),
        row.n_points,
        format_float(row.exponent_a),
        format_float(row.stderr_a),
        format_float(row.intercept),
        format_float(row.fractal_dim),
        format_float(row.stderr_dim)
    )
    .map_err(io_err)?;
    finish(w, path)
}

/// Headerless matrix CSV; row index is the q cell, column index the p cell.
pub fn write_grid_csv(path: &Path, grid: &Array2<f64>) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    for row in grid.rows() {
        let mut first = true;
        for &v in row {
            if !first {
                write!(w, ",").map_err(io_err)?;
            }
            write!(w, "{}", format_float(v)).map_err(io_err)?;
            first = false;
        }
        writeln!(w).map_err(io_err)?;
    }
    finish(w, path)
}

/// Binary PGM preview of a non-negative grid, max-normalized to 255 (an
/// all-zero grid stays black).  Image columns follow q; the top image row is
/// the largest p cell.
pub fn write_grid_pgm(path: &Path, grid: &Array2<f64>) -> Result<()> {
    let (n_q, n_p) = grid.dim();
    let max = grid.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut bytes = Vec::with_capacity(n_q * n_p + 32);
    bytes.extend_from_slice(format!("P5\n{n_q} {n_p}\n255\n").as_bytes());
    for row in 0..n_p {
        let ip = n_p - 1 - row;
        for iq in 0..n_q {
            let v = if max > 0.0 { grid[(iq, ip)] / max } else { 0.0 };
            bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Headerless integer matrix of first-passage times; -1 marks cells that
/// never reached the strip within the horizon.
pub fn write_passage_csv(path: &Path, grid: &PassageTimeGrid) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    for row in grid.first_passage.rows() {
        let mut first = true;
        for &t in row {
            if !first {
                write!(w, ",").map_err(io_err)?;
            }
            if t == NEVER {
                write!(w, "-1").map_err(io_err)?;
            } else {
                write!(w, "{t}").map_err(io_err)?;
            }
            first = false;
        }
        writeln!(w).map_err(io_err)?;
    }
    finish(w, path)
}

/// Classical-run summary line: passage statistics and, when computed, the
/// box-counting dimension of the resolution-limited trapped set.
#[derive(Debug, Clone)]
pub struct ClassicalRow {
    pub direction: String,
    pub strip_width: f64,
    pub t_max: u32,
    pub n_q: usize,
    pub n_p: usize,
    pub trapped_fraction: f64,
    pub box_dim: Option<(f64, f64)>,
}

pub fn write_classical_summary_csv(path: &Path, rows: &[ClassicalRow]) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(
        w,
        "direction,strip_width,t_max,n_q,n_p,trapped_fraction,box_dim,box_dim_stderr"
    )
    .map_err(io_err)?;
    for row in rows {
        let (dim, err) = match row.box_dim {
            Some((d, e)) => (format_float(d), format_float(e)),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.direction,
            format_float(row.strip_width),
            row.t_max,
            row.n_q,
            row.n_p,
            format_float(row.trapped_fraction),
            dim,
            err
        )
        .map_err(io_err)?;
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::Direction;
    use crate::linalg::CVec;

    #[test]
    fn float_labels_are_shortest_exact() {
        assert_eq!(float_label(0.4), "0.4");
        assert_eq!(float_label(0.0), "0");
        assert_eq!(float_label(0.1 + 0.2), "0.30000000000000004");
    }

    #[test]
    fn spectrum_csv_round_trips_bit_exactly() {
        let lambdas: CVec = vec![
            Complex64::new(1.0 / 3.0, -2.0 / 7.0),
            Complex64::new(-1e-17, 0.123456789012345678),
        ]
        .into();
        let quasienergies: CVec = vec![
            Complex64::new(0.3, 1.0 / 11.0),
            Complex64::new(-3.1, 2e-300),
        ]
        .into();
        let spectrum = Spectrum {
            lambdas: lambdas.clone(),
            quasienergies: quasienergies.clone(),
            eigenvectors: None,
            max_residual: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spectrum.csv");
        write_spectrum_csv(&path, &spectrum).unwrap();
        let rows = read_spectrum_csv(&path).unwrap();
        assert_eq!(rows.len(), 2);
        for (i, (lambda, e)) in rows.iter().enumerate() {
            assert_eq!(lambda.re.to_bits(), lambdas[i].re.to_bits());
            assert_eq!(lambda.im.to_bits(), lambdas[i].im.to_bits());
            assert_eq!(e.re.to_bits(), quasienergies[i].re.to_bits());
            assert_eq!(e.im.to_bits(), quasienergies[i].im.to_bits());
        }
    }

    #[test]
    fn zero_grid_pgm_is_black() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.pgm");
        write_grid_pgm(&path, &Array2::zeros((4, 3))).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n4 3\n255\n";
        assert!(bytes.starts_with(header));
        assert_eq!(bytes.len(), header.len() + 12);
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn pgm_puts_large_p_on_top() {
        let mut grid = Array2::zeros((2, 3));
        grid[(1, 2)] = 2.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("peak.pgm");
        write_grid_pgm(&path, &grid).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n2 3\n255\n".len();
        // top image row = ip 2, columns follow iq
        assert_eq!(bytes[header], 0);
        assert_eq!(bytes[header + 1], 255);
        assert!(bytes[header + 2..].iter().all(|&b| b == 0));
    }

    #[test]
    fn passage_csv_marks_never_as_minus_one() {
        let mut first_passage = Array2::from_elem((2, 2), NEVER);
        first_passage[(0, 1)] = 3;
        let grid = PassageTimeGrid {
            n_q: 2,
            n_p: 2,
            strip_width: 0.2,
            t_max: 5,
            direction: Direction::Forward,
            first_passage,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("passage.csv");
        write_passage_csv(&path, &grid).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "-1,3\n-1,-1\n");
    }

    #[test]
    fn classical_summary_handles_missing_box_dim() {
        let rows = vec![ClassicalRow {
            direction: "backward".into(),
            strip_width: 0.2,
            t_max: 4,
            n_q: 10,
            n_p: 10,
            trapped_fraction: 0.5,
            box_dim: None,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        write_classical_summary_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with(",,\n"), "got {text:?}");
    }
}
