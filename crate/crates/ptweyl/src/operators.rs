//! Matrix constructors for the coupled-resonator model.
//!
//! The composite Hilbert space is C^{2M}: the first M amplitudes live on the
//! absorbing resonator (damped by e^{-mu} per step), the last M on the
//! amplifying one (boosted by e^{mu}).  The resonators exchange amplitude
//! through N interface channels, taken to be the first N basis states of each
//! half.  One time step is
//!
//! ```text
//! map = sqrtC . blockdiag(e^{-mu} F, e^{mu} F^T) . sqrtC
//! ```
//!
//! where F is the internal single-resonator dynamics (kicked rotator or a COE
//! sample) and sqrtC is the unitary square root of the coupling matrix.

use ndarray::prelude::*;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI, TAU};

use crate::linalg::{ensure_finite, ensure_square, CMat, CVec};
use crate::{Error, Result};

/// Internal dynamics of a single resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    KickedRotator { k: f64 },
    Coe,
}

/// Complete parameter set of one coupled-resonator system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Dimension of each resonator half (inverse effective Planck constant).
    pub m: usize,
    /// Number of interface channels, 1 <= n <= m.
    pub n: usize,
    /// Amplification/absorption rate per step, >= 0.
    pub mu: f64,
    pub dynamics: Dynamics,
    /// RNG seed; only consumed by COE dynamics.
    pub seed: u64,
}

impl SystemParams {
    pub fn new(m: usize, n: usize, mu: f64, dynamics: Dynamics, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParam("resonator size M must be >= 1".into()));
        }
        if n == 0 || n > m {
            return Err(Error::InvalidParam(format!(
                "channel count must satisfy 1 <= N <= M, got N={n}, M={m}"
            )));
        }
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::InvalidParam(format!(
                "gain/loss rate must be finite and non-negative, got {mu}"
            )));
        }
        if let Dynamics::KickedRotator { k } = dynamics {
            if !k.is_finite() {
                return Err(Error::InvalidParam(format!("kick strength must be finite, got {k}")));
            }
        }
        Ok(SystemParams { m, n, mu, dynamics, seed })
    }

    /// Construct with N = round(E_T * M) for a target coupling ratio E_T.
    pub fn with_coupling_ratio(
        m: usize,
        e_t: f64,
        mu: f64,
        dynamics: Dynamics,
        seed: u64,
    ) -> Result<Self> {
        if !(e_t > 0.0 && e_t <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "coupling ratio must lie in (0, 1], got {e_t}"
            )));
        }
        let n = (e_t * m as f64).round() as usize;
        if n == 0 {
            return Err(Error::InvalidParam(format!(
                "coupling ratio {e_t} rounds to zero channels at M={m}"
            )));
        }
        Self::new(m, n.min(m), mu, dynamics, seed)
    }

    /// Coupling ratio N/M (the inverse mean dwell time).
    pub fn coupling_ratio(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    /// sqrt(N)/M, the gain/loss scale where a random-matrix spectrum turns
    /// essentially complex.
    pub fn critical_gain(&self) -> f64 {
        (self.n as f64).sqrt() / self.m as f64
    }

    pub fn map_dim(&self) -> usize {
        2 * self.m
    }
}

/// Kicked-rotator step matrix
/// F_{mm'} = (iM)^{-1/2} exp[(i pi/M)(m-m')^2 - (iMk/4pi)(cos(2pi m/M) + cos(2pi m'/M))]
/// on sites m, m' in {0, ..., M-1}.  Unitary for every M, and exactly
/// symmetric as built.
pub fn build_kicked_rotator(m: usize, k: f64) -> Result<CMat> {
    if m == 0 {
        return Err(Error::InvalidParam("matrix size M must be >= 1".into()));
    }
    if !k.is_finite() {
        return Err(Error::InvalidParam(format!("kick strength must be finite, got {k}")));
    }
    let mf = m as f64;
    let prefactor = Complex64::from_polar(1.0 / mf.sqrt(), -FRAC_PI_4);
    let kick: Vec<f64> = (0..m)
        .map(|j| mf * k / (4.0 * PI) * (TAU * j as f64 / mf).cos())
        .collect();
    let two_m = 2 * m as i64;
    let f = Array2::from_shape_fn((m, m), |(r, c)| {
        // (m-m')^2 enters a phase of period 2M; reduce in integers so large
        // sites lose no precision.
        let d = r as i64 - c as i64;
        let quad = ((d * d) % two_m) as f64 * PI / mf;
        // kick[r] + kick[c] is symmetric in (r, c) bit-for-bit, so F = F^T holds
        // exactly.
        prefactor * Complex64::cis(quad - (kick[r] + kick[c]))
    });
    Ok(f)
}

/// Haar-distributed unitary via QR of an i.i.d. complex Gaussian matrix with
/// the R-diagonal phase correction.
pub fn haar_unitary<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<CMat> {
    use ndarray_linalg::QR;
    if m == 0 {
        return Err(Error::InvalidParam("matrix size M must be >= 1".into()));
    }
    let mut z = Array2::zeros((m, m));
    // Explicit row-major fill fixes the stream-consumption order.
    for i in 0..m {
        for j in 0..m {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            z[(i, j)] = Complex64::new(re, im);
        }
    }
    let (q, r) = z.qr().map_err(|source| Error::Solver {
        descriptor: format!("{m}x{m} complex QR"),
        source,
    })?;
    let mut u = q;
    for j in 0..m {
        let rjj = r[(j, j)];
        // rjj = 0 has probability zero; fall back to phase 1 for safety.
        let phase = if rjj.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            rjj / rjj.norm()
        };
        u.column_mut(j).mapv_inplace(|x| x * phase);
    }
    Ok(u)
}

/// Circular-orthogonal-ensemble sample F = U^T U with U Haar unitary.
/// Symmetric by construction and deterministic for a given stream.
pub fn sample_coe<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<CMat> {
    let u = haar_unitary(m, rng)?;
    Ok(u.t().dot(&u))
}

/// COE sample from a fixed seed (ChaCha stream).
pub fn sample_coe_seeded(m: usize, seed: u64) -> Result<CMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_coe(m, &mut rng)
}

/// Coupling matrix C = [[Q, -iP], [-iP, Q]] and its unitary square root,
/// where P projects onto the first N sites of each half and Q = 1 - P.
pub fn build_coupling(m: usize, n: usize) -> Result<(CMat, CMat)> {
    if m == 0 {
        return Err(Error::InvalidParam("resonator size M must be >= 1".into()));
    }
    if n == 0 || n > m {
        return Err(Error::InvalidParam(format!(
            "channel count must satisfy 1 <= N <= M, got N={n}, M={m}"
        )));
    }
    let dim = 2 * m;
    let one = Complex64::new(1.0, 0.0);
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let mis = Complex64::new(0.0, -FRAC_1_SQRT_2);
    let mut c = Array2::zeros((dim, dim));
    let mut sqrt_c = Array2::zeros((dim, dim));
    for i in 0..m {
        if i < n {
            c[(i, m + i)] = Complex64::new(0.0, -1.0);
            c[(m + i, i)] = Complex64::new(0.0, -1.0);
            sqrt_c[(i, i)] = s;
            sqrt_c[(m + i, m + i)] = s;
            sqrt_c[(i, m + i)] = mis;
            sqrt_c[(m + i, i)] = mis;
        } else {
            c[(i, i)] = one;
            c[(m + i, m + i)] = one;
            sqrt_c[(i, i)] = one;
            sqrt_c[(m + i, m + i)] = one;
        }
    }
    Ok((c, sqrt_c))
}

/// Compose the full 2Mx2M one-step map sqrtC . blockdiag(e^{-mu}F, e^{mu}F^T) . sqrtC.
///
/// F must be the unitary internal dynamics (the amplifying half uses F^T,
/// which represents time-reversed motion only when F is unitary).  sqrtC must
/// carry the two-band structure produced by `build_coupling`; the band values
/// are read off and the product is formed in O(M^2) without dense
/// multiplication.
pub fn assemble_pt_map(f: &CMat, mu: f64, sqrt_c: &CMat) -> Result<CMat> {
    let m = ensure_square(f, "internal dynamics F")?;
    ensure_finite(f, "internal dynamics F")?;
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::InvalidParam(format!(
            "gain/loss rate must be finite and non-negative, got {mu}"
        )));
    }
    let dim = ensure_square(sqrt_c, "sqrt-coupling")?;
    if dim != 2 * m {
        return Err(Error::DimensionMismatch(format!(
            "sqrt-coupling is {dim}x{dim} but internal dynamics of size {m} needs {}x{}",
            2 * m,
            2 * m
        )));
    }

    let structure_err =
        || Error::InvalidParam("sqrt-coupling lacks the two-band interface structure".into());
    let a: Vec<Complex64> = (0..m).map(|i| sqrt_c[(i, i)]).collect();
    let d: Vec<Complex64> = (0..m).map(|i| sqrt_c[(i, m + i)]).collect();
    for i in 0..m {
        if sqrt_c[(m + i, m + i)] != a[i] || sqrt_c[(m + i, i)] != d[i] {
            return Err(structure_err());
        }
    }
    let zero = Complex64::new(0.0, 0.0);
    for r in 0..dim {
        for c in 0..dim {
            if c != r && c != (r + m) % dim && sqrt_c[(r, c)] != zero {
                return Err(structure_err());
            }
        }
    }

    let g_loss = (-mu).exp();
    let g_gain = mu.exp();
    let mut out = Array2::zeros((dim, dim));
    for i in 0..m {
        for j in 0..m {
            let loss = g_loss * f[(i, j)];
            let gain = g_gain * f[(j, i)];
            out[(i, j)] = a[i] * loss * a[j] + d[i] * gain * d[j];
            out[(i, m + j)] = a[i] * loss * d[j] + d[i] * gain * a[j];
            out[(m + i, j)] = d[i] * loss * a[j] + a[i] * gain * d[j];
            out[(m + i, m + j)] = d[i] * loss * d[j] + a[i] * gain * a[j];
        }
    }
    ensure_finite(&out, "assembled map")?;
    Ok(out)
}

/// Internal dynamics F selected by the system parameters.
pub fn build_internal_dynamics(params: &SystemParams) -> Result<CMat> {
    match params.dynamics {
        Dynamics::KickedRotator { k } => build_kicked_rotator(params.m, k),
        Dynamics::Coe => sample_coe_seeded(params.m, params.seed),
    }
}

/// Full map for the given parameters: internal dynamics plus coupling.
pub fn build_map(params: &SystemParams) -> Result<CMat> {
    let f = build_internal_dynamics(params)?;
    let (_, sqrt_c) = build_coupling(params.m, params.n)?;
    assemble_pt_map(&f, params.mu, &sqrt_c)
}

/// Parity matrix [[0, 1], [1, 0]] in the half-block decomposition.
pub fn parity_matrix(m: usize) -> CMat {
    let dim = 2 * m;
    Array2::from_shape_fn((dim, dim), |(i, j)| {
        if (i + m) % dim == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Swap the two resonator halves of a state.
pub fn parity_apply(state: &CVec) -> Result<CVec> {
    let dim = state.len();
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "parity acts on even-dimensional states, got length {dim}"
        )));
    }
    let m = dim / 2;
    Ok(Array1::from_shape_fn(dim, |i| state[(i + m) % dim]))
}

/// Conjugate a matrix by the parity: swaps both block rows and block columns.
pub fn parity_conjugate(mat: &CMat) -> Result<CMat> {
    let dim = ensure_square(mat, "parity conjugation input")?;
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "parity acts on even dimensions, got {dim}"
        )));
    }
    let m = dim / 2;
    Ok(Array2::from_shape_fn((dim, dim), |(i, j)| {
        mat[((i + m) % dim, (j + m) % dim)]
    }))
}
