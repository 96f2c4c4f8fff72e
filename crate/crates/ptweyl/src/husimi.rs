//! Torus coherent states and summed Husimi phase-space densities of spectral
//! subspaces, kept separate for the absorbing (first M amplitudes) and
//! amplifying (last M) resonator halves.

use ndarray::prelude::*;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

use crate::linalg::{CMat, CVec};
use crate::{Error, Result};

/// Minimal-uncertainty wavepacket on the discrete torus, symmetric in q and p
/// (squeezing ratio 1, cell area 1/M):
///
///   c_m ~ sum_{|nu| <= 3} exp[-pi M (m/M - q0 - nu)^2 + 2 pi i M p0 (m/M - nu)]
///
/// normalized to unit 2-norm.
#[derive(Debug, Clone)]
pub struct CoherentState {
    pub q0: f64,
    pub p0: f64,
    pub amplitudes: CVec,
}

/// Winding cutoff of the periodized Gaussian; truncation error below
/// exp(-9 pi M) relative for centers in the fundamental domain.
const WINDING_CUTOFF: i64 = 3;

pub fn coherent_state(m: usize, q0: f64, p0: f64) -> Result<CoherentState> {
    if m == 0 {
        return Err(Error::InvalidParam("resonator size M must be >= 1".into()));
    }
    if !q0.is_finite() || !p0.is_finite() {
        return Err(Error::InvalidParam(format!(
            "coherent-state center must be finite, got ({q0}, {p0})"
        )));
    }
    let mf = m as f64;
    let mut amplitudes: CVec = Array1::from_elem(m, Complex64::new(0.0, 0.0));
    for site in 0..m {
        let x = site as f64 / mf;
        let mut acc = Complex64::new(0.0, 0.0);
        for nu in -WINDING_CUTOFF..=WINDING_CUTOFF {
            let dx = x - q0 - nu as f64;
            let weight = (-PI * mf * dx * dx).exp();
            // phase 2 pi M p0 (m/M - nu) = 2 pi p0 (site - M nu)
            let phase = TAU * p0 * (site as f64 - mf * nu as f64);
            acc += Complex64::from_polar(weight, phase);
        }
        amplitudes[site] = acc;
    }
    let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidParam(format!(
            "coherent-state center ({q0}, {p0}) lies too far outside the fundamental domain"
        )));
    }
    amplitudes.mapv_inplace(|z| z / norm);
    Ok(CoherentState { q0, p0, amplitudes })
}

/// Orthonormalize subspace vectors (columns) by a QR factorization.
///
/// Fails when the columns are not independent to working precision; the
/// error reports how many independent directions were found.
pub fn orthonormal_subspace_basis(vectors: &CMat) -> Result<CMat> {
    use ndarray_linalg::QR;
    let (rows, cols) = vectors.dim();
    if cols == 0 {
        return Ok(vectors.clone());
    }
    if cols > rows {
        return Err(Error::DimensionMismatch(format!(
            "{cols} vectors cannot be independent in dimension {rows}"
        )));
    }
    crate::linalg::ensure_finite(vectors, "subspace vectors")?;
    let (q, r) = vectors.qr().map_err(|source| Error::Solver {
        descriptor: format!("{rows}x{cols} QR"),
        source,
    })?;
    let diag: Vec<f64> = (0..cols).map(|j| r[(j, j)].norm()).collect();
    let largest = diag.iter().fold(0.0f64, |a, &b| a.max(b));
    let independent = diag.iter().filter(|&&d| d > largest * 1e-12).count();
    if independent < cols {
        return Err(Error::RankDeficient {
            independent,
            total: cols,
        });
    }
    Ok(q)
}

/// Summed Husimi densities of a subspace, on a uniform grid of cell centers
/// ((iq + 0.5)/n_q, (ip + 0.5)/n_p), one array per resonator half.
#[derive(Debug, Clone)]
pub struct HusimiGrid {
    pub n_q: usize,
    pub n_p: usize,
    /// Absorbing half: values_l[(iq, ip)] = sum_n |<c(q,p)|phi_n restricted to
    /// the first M amplitudes>|^2.
    pub values_l: Array2<f64>,
    /// Amplifying half, from the last M amplitudes.
    pub values_r: Array2<f64>,
    /// Half dimension M of the underlying states.
    pub m: usize,
}

impl HusimiGrid {
    pub fn cell_area(&self) -> f64 {
        1.0 / (self.n_q * self.n_p) as f64
    }

    /// Phase-space integral over the absorbing half; approximates the total
    /// squared norm the basis carries there (coherent-frame identity).
    pub fn mass_l(&self) -> f64 {
        self.values_l.sum() * self.cell_area() * self.m as f64
    }

    pub fn mass_r(&self) -> f64 {
        self.values_r.sum() * self.cell_area() * self.m as f64
    }
}

/// Contributions of one grid column q0: every integer ell with
/// |ell/M - q0| <= radius, as (site, gaussian weight, ell).
fn column_window(m: usize, q0: f64, radius: f64) -> Vec<(usize, f64, i64)> {
    let mf = m as f64;
    let lo = ((q0 - radius) * mf).floor() as i64;
    let hi = ((q0 + radius) * mf).ceil() as i64;
    (lo..=hi)
        .map(|ell| {
            let dx = ell as f64 / mf - q0;
            let site = ell.rem_euclid(m as i64) as usize;
            (site, (-PI * mf * dx * dx).exp(), ell)
        })
        .collect()
}

/// Summed Husimi map of an orthonormal basis (columns, dimension 2M each).
///
/// The overlap against each half uses the raw sub-vector without
/// renormalization, so values_l + values_r masses reflect how the basis
/// splits across the resonators.
pub fn husimi_map(basis: &CMat, m: usize, resolution: (usize, usize)) -> Result<HusimiGrid> {
    let (n_q, n_p) = resolution;
    if n_q == 0 || n_p == 0 {
        return Err(Error::InvalidParam("grid resolution must be positive".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParam("resonator size M must be >= 1".into()));
    }
    let (rows, n_states) = basis.dim();
    if rows != 2 * m {
        return Err(Error::DimensionMismatch(format!(
            "basis vectors have dimension {rows}, expected {} for half size {m}",
            2 * m
        )));
    }
    crate::linalg::ensure_finite(basis, "husimi basis")?;

    let mut values_l = Array2::zeros((n_q, n_p));
    let mut values_r = Array2::zeros((n_q, n_p));
    if n_states == 0 {
        return Ok(HusimiGrid {
            n_q,
            n_p,
            values_l,
            values_r,
            m,
        });
    }

    // Gaussian contributions below exp(-45) are invisible at f64 precision.
    let radius = (45.0 / (PI * m as f64)).sqrt();

    let row_pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n_q)
        .into_par_iter()
        .map(|iq| {
            let q0 = (iq as f64 + 0.5) / n_q as f64;
            let window = column_window(m, q0, radius);
            let mut sites: Vec<usize> = window.iter().map(|&(s, _, _)| s).collect();
            sites.sort_unstable();
            sites.dedup();

            let mut amps = vec![Complex64::new(0.0, 0.0); m];
            let mut row_l = vec![0.0f64; n_p];
            let mut row_r = vec![0.0f64; n_p];
            for ip in 0..n_p {
                let p0 = (ip as f64 + 0.5) / n_p as f64;
                for &site in &sites {
                    amps[site] = Complex64::new(0.0, 0.0);
                }
                for &(site, weight, ell) in &window {
                    amps[site] += Complex64::from_polar(weight, TAU * p0 * ell as f64);
                }
                let norm = sites
                    .iter()
                    .map(|&s| amps[s].norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let inv_norm = 1.0 / norm;

                let mut sum_l = 0.0;
                let mut sum_r = 0.0;
                for n in 0..n_states {
                    let mut overlap_l = Complex64::new(0.0, 0.0);
                    let mut overlap_r = Complex64::new(0.0, 0.0);
                    for &site in &sites {
                        let c = amps[site].conj();
                        overlap_l += c * basis[(site, n)];
                        overlap_r += c * basis[(m + site, n)];
                    }
                    sum_l += overlap_l.norm_sqr();
                    sum_r += overlap_r.norm_sqr();
                }
                row_l[ip] = sum_l * inv_norm * inv_norm;
                row_r[ip] = sum_r * inv_norm * inv_norm;
            }
            (row_l, row_r)
        })
        .collect();

    for (iq, (row_l, row_r)) in row_pairs.into_iter().enumerate() {
        for ip in 0..n_p {
            values_l[(iq, ip)] = row_l[ip];
            values_r[(iq, ip)] = row_r[ip];
        }
    }

    Ok(HusimiGrid {
        n_q,
        n_p,
        values_l,
        values_r,
        m,
    })
}

/// Combined parity and time-reversal action on a grid: swap the halves and
/// send p to -p (an exact cell-index flip on center-sampled grids).
pub fn pt_transform_grid(grid: &HusimiGrid) -> HusimiGrid {
    let flip = |src: &Array2<f64>| {
        Array2::from_shape_fn((grid.n_q, grid.n_p), |(iq, ip)| {
            src[(iq, grid.n_p - 1 - ip)]
        })
    };
    HusimiGrid {
        n_q: grid.n_q,
        n_p: grid.n_p,
        values_l: flip(&grid.values_r),
        values_r: flip(&grid.values_l),
        m: grid.m,
    }
}

/// Relative L1 distance over both halves, normalized by the mean total mass
/// of the two grids.  Zero for identical grids; 0 by convention when both
/// are empty.
pub fn rel_l1_distance(a: &HusimiGrid, b: &HusimiGrid) -> Result<f64> {
    if a.n_q != b.n_q || a.n_p != b.n_p {
        return Err(Error::DimensionMismatch(format!(
            "grid resolutions differ: {}x{} vs {}x{}",
            a.n_q, a.n_p, b.n_q, b.n_p
        )));
    }
    let mut diff = 0.0;
    let mut mass = 0.0;
    for (x, y) in a.values_l.iter().zip(b.values_l.iter()) {
        diff += (x - y).abs();
        mass += x + y;
    }
    for (x, y) in a.values_r.iter().zip(b.values_r.iter()) {
        diff += (x - y).abs();
        mass += x + y;
    }
    if mass == 0.0 {
        return Ok(0.0);
    }
    Ok(diff / (0.5 * mass))
}
