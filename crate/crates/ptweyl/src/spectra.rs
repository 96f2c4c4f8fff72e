//! Complex spectra of the assembled map: quasienergies, inverse-conjugate
//! eigenvalue pairing, amplification classes, histograms, and the power-law
//! fit of the amplified-state fraction against matrix size.

use ndarray::prelude::*;
use ndarray_linalg::{Eig, EigVals};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::linalg::{ensure_finite, ensure_square, CMat, CVec};
use crate::operators::{assemble_pt_map, build_coupling, build_internal_dynamics, SystemParams};
use crate::stats::fit_line;
use crate::{Error, Result};

/// Slack added to the Im E > mu/2 comparisons so that eigensolver noise at
/// the unitary point (|Im E| ~ 1e-15 when mu = 0) never counts as
/// amplification.  States within this distance of a threshold are neutral.
pub const BOUNDARY_EPS: f64 = 1e-12;

/// Eigenvalues and quasienergies of one map, canonically sorted by
/// (Re lambda, Im lambda).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub lambdas: CVec,
    /// E_n = i ln(lambda_n): Re E in (-pi, pi] is the phase per step,
    /// Im E = ln|lambda_n| the amplification rate per step.
    pub quasienergies: CVec,
    /// Column n is the right eigenvector of lambdas[n].
    pub eigenvectors: Option<CMat>,
    /// Largest 2-norm of (map v - lambda v) over unit-norm eigenvectors;
    /// only available when vectors were requested.
    pub max_residual: Option<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Amplification rates Im E_n in canonical order.
    pub fn im_e(&self) -> Vec<f64> {
        self.quasienergies.iter().map(|e| e.im).collect()
    }
}

fn quasienergy(lambda: Complex64) -> Complex64 {
    let mut re = -lambda.arg();
    // arg lies in (-pi, pi], so -arg lies in [-pi, pi); fold the single
    // boundary point to keep Re E in (-pi, pi].
    if re == -PI {
        re = PI;
    }
    Complex64::new(re, lambda.norm().ln())
}

fn solver_error(dim: usize, source: ndarray_linalg::error::LinalgError) -> Error {
    Error::Solver {
        descriptor: format!("{dim}x{dim} dense complex eigenproblem"),
        source,
    }
}

/// Dense non-symmetric eigendecomposition of the map.
pub fn eigendecompose(map: &CMat, want_vectors: bool) -> Result<Spectrum> {
    let dim = ensure_square(map, "spectral input")?;
    if dim == 0 {
        return Err(Error::EmptyInput("cannot decompose an empty matrix".into()));
    }
    ensure_finite(map, "spectral input")?;

    let (raw_values, raw_vectors) = if want_vectors {
        let (vals, vecs) = map.eig().map_err(|e| solver_error(dim, e))?;
        (vals, Some(vecs))
    } else {
        let vals = map.eigvals().map_err(|e| solver_error(dim, e))?;
        (vals, None)
    };

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        raw_values[i]
            .re
            .total_cmp(&raw_values[j].re)
            .then(raw_values[i].im.total_cmp(&raw_values[j].im))
    });

    let lambdas: CVec = Array1::from_iter(order.iter().map(|&i| raw_values[i]));
    let quasienergies: CVec = lambdas.mapv(quasienergy);
    let eigenvectors =
        raw_vectors.map(|v| Array2::from_shape_fn((dim, dim), |(r, c)| v[(r, order[c])]));

    let max_residual = eigenvectors.as_ref().map(|vecs| {
        let image = map.dot(vecs);
        let mut worst = 0.0f64;
        for n in 0..dim {
            let mut err_sq = 0.0;
            let mut norm_sq = 0.0;
            for r in 0..dim {
                err_sq += (image[(r, n)] - lambdas[n] * vecs[(r, n)]).norm_sqr();
                norm_sq += vecs[(r, n)].norm_sqr();
            }
            worst = worst.max((err_sq / norm_sq).sqrt());
        }
        worst
    });

    Ok(Spectrum {
        lambdas,
        quasienergies,
        eigenvectors,
        max_residual,
    })
}

/// Match every eigenvalue with its inverse-conjugate partner 1/lambda*.
///
/// Returns the pairing as an involution on indices: out[n] = n_bar with
/// out[n_bar] = n; self-paired indices are the unimodular eigenvalues.
/// Matching is greedy nearest-neighbor on the multiset, so degenerate
/// clusters may pair ambiguously, but the pairing count statistics are
/// well defined.
pub fn pair_match(lambdas: &[Complex64], tol: f64) -> Result<Vec<usize>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParam(format!(
            "pairing tolerance must be positive, got {tol}"
        )));
    }
    let n = lambdas.len();
    if n == 0 {
        return Err(Error::EmptyInput("no eigenvalues to pair".into()));
    }
    if lambdas.iter().any(|l| l.norm() == 0.0) {
        return Err(Error::InvalidParam(
            "zero eigenvalue has no inverse-conjugate partner".into(),
        ));
    }

    const UNSET: usize = usize::MAX;
    let mut pairing = vec![UNSET; n];
    let mut unmatched = 0usize;
    let mut worst = 0.0f64;
    for i in 0..n {
        if pairing[i] != UNSET {
            continue;
        }
        let target = Complex64::new(1.0, 0.0) / lambdas[i].conj();
        let mut best = i;
        let mut best_dist = f64::INFINITY;
        for (j, lam) in lambdas.iter().enumerate() {
            if pairing[j] == UNSET {
                let dist = (lam - target).norm();
                if dist < best_dist {
                    best = j;
                    best_dist = dist;
                }
            }
        }
        if best_dist <= tol {
            pairing[i] = best;
            pairing[best] = i;
        } else {
            unmatched += 1;
            worst = worst.max(best_dist);
            pairing[i] = i; // keep the involution total; the error reports the failure
        }
    }
    if unmatched > 0 {
        return Err(Error::PairingViolation {
            unmatched,
            total: n,
            tol,
            worst,
        });
    }
    Ok(pairing)
}

/// Index sets of one spectrum split by amplification rate.
#[derive(Debug, Clone)]
pub struct SpectralClassification {
    /// Im E > mu/2.
    pub amplified: Vec<usize>,
    /// |Im E| <= mu/2.
    pub neutral: Vec<usize>,
    /// Im E < -mu/2.
    pub decaying: Vec<usize>,
    /// |Im E| < delta_real.
    pub real_states: Vec<usize>,
    pub delta_real: f64,
}

/// Partition states by the amplification thresholds +-mu/2.
pub fn classify(spectrum: &Spectrum, mu: f64, delta_real: f64) -> Result<SpectralClassification> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::InvalidParam(format!(
            "gain/loss rate must be finite and non-negative, got {mu}"
        )));
    }
    if !(delta_real > 0.0) {
        return Err(Error::InvalidParam(format!(
            "real-state tolerance must be positive, got {delta_real}"
        )));
    }
    let threshold = mu / 2.0 + BOUNDARY_EPS;
    let mut out = SpectralClassification {
        amplified: Vec::new(),
        neutral: Vec::new(),
        decaying: Vec::new(),
        real_states: Vec::new(),
        delta_real,
    };
    for (idx, e) in spectrum.quasienergies.iter().enumerate() {
        if e.im > threshold {
            out.amplified.push(idx);
        } else if e.im < -threshold {
            out.decaying.push(idx);
        } else {
            out.neutral.push(idx);
        }
        if e.im.abs() < delta_real {
            out.real_states.push(idx);
        }
    }
    Ok(out)
}

/// Fraction of strongly amplified states, |{n : Im E_n > mu/2}| / (2M).
pub fn fraction_amplified(spectrum: &Spectrum, mu: f64) -> Result<f64> {
    let classes = classify(spectrum, mu, f64::MIN_POSITIVE)?;
    Ok(classes.amplified.len() as f64 / spectrum.len() as f64)
}

/// Fraction of states with |Im E| < delta_real.
pub fn fraction_real(spectrum: &Spectrum, delta_real: f64) -> Result<f64> {
    if !(delta_real > 0.0) {
        return Err(Error::InvalidParam(format!(
            "real-state tolerance must be positive, got {delta_real}"
        )));
    }
    let count = spectrum
        .quasienergies
        .iter()
        .filter(|e| e.im.abs() < delta_real)
        .count();
    Ok(count as f64 / spectrum.len() as f64)
}

/// Histogram of amplification rates, binned symmetrically around zero so the
/// Im E = 0 peak occupies the single central bin.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub counts: Vec<usize>,
    /// counts / (total * bin_width); integrates to one.
    pub densities: Vec<f64>,
    pub bin_width: f64,
    pub total: usize,
}

impl Histogram {
    /// Mass fraction of the bin centered at zero.
    pub fn central_mass(&self) -> f64 {
        let idx = self
            .centers
            .iter()
            .position(|&c| c == 0.0)
            .expect("central bin always present");
        self.counts[idx] as f64 / self.total as f64
    }
}

/// Aggregate the Im E values of several spectra into one normalized
/// histogram.
pub fn im_e_histogram(spectra: &[Spectrum], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::InvalidParam(format!(
            "bin width must be positive and finite, got {bin_width}"
        )));
    }
    let values: Vec<f64> = spectra.iter().flat_map(|s| s.im_e()).collect();
    if values.is_empty() {
        return Err(Error::EmptyInput("no spectra to histogram".into()));
    }
    let bins: Vec<i64> = values
        .iter()
        .map(|v| (v / bin_width).round() as i64)
        .collect();
    let lo = bins.iter().copied().min().unwrap().min(0);
    let hi = bins.iter().copied().max().unwrap().max(0);
    let n_bins = (hi - lo + 1) as usize;
    let mut counts = vec![0usize; n_bins];
    for b in bins {
        counts[(b - lo) as usize] += 1;
    }
    let total = values.len();
    let densities = counts
        .iter()
        .map(|&c| c as f64 / (total as f64 * bin_width))
        .collect();
    let centers = (lo..=hi).map(|k| k as f64 * bin_width).collect();
    Ok(Histogram {
        centers,
        counts,
        densities,
        bin_width,
        total,
    })
}

/// Power-law fit f_> = c * M^{-a} on log-log axes.
#[derive(Debug, Clone)]
pub struct ScalingFit {
    pub points: Vec<(f64, f64)>,
    pub exponent_a: f64,
    pub stderr_a: f64,
    /// Intercept of the log-log line, ln c.
    pub intercept: f64,
}

/// Ordinary least squares of ln f_> against ln M.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParam(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for &(m, f) in points {
        if !(m >= 1.0) || !m.is_finite() {
            return Err(Error::InvalidParam(format!(
                "matrix size must be a finite value >= 1, got {m}"
            )));
        }
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::InvalidParam(format!(
                "fraction at M={m} is {f}; every point must be positive \
                 (use a larger ensemble or a smaller threshold rate)"
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|&(m, _)| m.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, f)| f.ln()).collect();
    let fit = fit_line(&xs, &ys);
    Ok(ScalingFit {
        points: points.to_vec(),
        exponent_a: -fit.slope,
        stderr_a: fit.stderr_slope,
        intercept: fit.intercept,
    })
}

/// Dimension estimate d_H = 2 - a with the fit's standard error.
pub fn estimate_fractal_dimension(fit: &ScalingFit) -> (f64, f64) {
    (2.0 - fit.exponent_a, fit.stderr_a)
}

/// Fraction of real quasienergies as a function of the gain/loss rate, for a
/// fixed internal dynamics realization.
pub fn critical_mu_scan(
    params: &SystemParams,
    mu_grid: &[f64],
    delta_real: f64,
) -> Result<Vec<f64>> {
    if mu_grid.is_empty() {
        return Err(Error::EmptyInput("empty gain/loss grid".into()));
    }
    for pair in mu_grid.windows(2) {
        if !(pair[0] <= pair[1]) {
            return Err(Error::InvalidParam(
                "gain/loss grid must be sorted ascending".into(),
            ));
        }
    }
    let f = build_internal_dynamics(params)?;
    let (_, sqrt_c) = build_coupling(params.m, params.n)?;
    let mut fractions = Vec::with_capacity(mu_grid.len());
    for &mu in mu_grid {
        let map = assemble_pt_map(&f, mu, &sqrt_c)?;
        let spectrum = eigendecompose(&map, false)?;
        fractions.push(fraction_real(&spectrum, delta_real)?);
    }
    Ok(fractions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_map, Dynamics};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kr_params(m: usize, n: usize, mu: f64) -> SystemParams {
        SystemParams::new(m, n, mu, Dynamics::KickedRotator { k: 8.0 }, 1).unwrap()
    }

    /// Spectrum with prescribed amplification rates and unit phases.
    fn synthetic_spectrum(im_e: &[f64]) -> Spectrum {
        let lambdas: CVec = im_e.iter().map(|&y| Complex64::new(y.exp(), 0.0)).collect();
        let quasienergies: CVec = lambdas.mapv(quasienergy);
        Spectrum {
            lambdas,
            quasienergies,
            eigenvectors: None,
            max_residual: None,
        }
    }

    #[test]
    fn diagonal_map_decomposes_exactly() {
        let map = Array2::from_diag(&Array1::from(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(0.5, 0.0),
        ]));
        let spec = eigendecompose(&map, false).unwrap();
        assert!((spec.lambdas[0] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((spec.lambdas[1] - Complex64::new(2.0, 0.0)).norm() < 1e-14);
        assert!((spec.quasienergies[0].im + 2f64.ln()).abs() < 1e-14);
        assert!((spec.quasienergies[1].im - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn unitary_map_has_unimodular_spectrum() {
        let map = build_map(&kr_params(100, 20, 0.0)).unwrap();
        let spec = eigendecompose(&map, false).unwrap();
        assert_eq!(spec.len(), 200);
        for l in spec.lambdas.iter() {
            assert!((l.norm() - 1.0).abs() < 1e-10);
        }
        // |det| = 1 means the rates sum to zero.
        let rate_sum: f64 = spec.im_e().iter().sum();
        assert!(rate_sum.abs() < 1e-8);
    }

    #[test]
    fn eigenvector_residuals_are_small() {
        let map = build_map(&kr_params(100, 20, 0.4)).unwrap();
        let spec = eigendecompose(&map, true).unwrap();
        assert!(spec.max_residual.unwrap() < 1e-8);
        for (l, e) in spec.lambdas.iter().zip(spec.quasienergies.iter()) {
            assert!((l.norm() - e.im.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn quasienergy_phase_stays_in_half_open_interval() {
        let e = quasienergy(Complex64::new(-1.0, 0.0));
        assert_eq!(e.re, PI);
        let e2 = quasienergy(Complex64::cis(-0.3));
        assert!((e2.re - 0.3).abs() < 1e-14);
        assert!(e2.im.abs() < 1e-14);
    }

    #[test]
    fn unimodular_eigenvalues_self_pair() {
        let lambdas = vec![
            Complex64::cis(0.3),
            Complex64::cis(-1.1),
            Complex64::new(1.0, 0.0),
        ];
        let pairing = pair_match(&lambdas, 1e-10).unwrap();
        assert_eq!(pairing, vec![0, 1, 2]);
    }

    #[test]
    fn inverse_conjugate_pair_is_mutual() {
        let lambdas = vec![
            Complex64::from_polar(2.0, PI / 3.0),
            Complex64::from_polar(0.5, PI / 3.0),
        ];
        let pairing = pair_match(&lambdas, 1e-12).unwrap();
        assert_eq!(pairing, vec![1, 0]);
    }

    #[test]
    fn pairing_violation_is_reported() {
        let lambdas = vec![Complex64::new(2.0, 0.0), Complex64::new(3.0, 0.0)];
        match pair_match(&lambdas, 1e-6) {
            Err(Error::PairingViolation { unmatched, worst, .. }) => {
                assert!(unmatched > 0);
                assert!(worst > 1.0);
            }
            other => panic!("expected pairing violation, got {other:?}"),
        }
    }

    #[test]
    fn assembled_map_spectrum_pairs_completely() {
        let map = build_map(&kr_params(60, 12, 0.3)).unwrap();
        let spec = eigendecompose(&map, false).unwrap();
        let lam: Vec<Complex64> = spec.lambdas.to_vec();
        let pairing = pair_match(&lam, 1e-8).unwrap();
        for (i, &j) in pairing.iter().enumerate() {
            assert_eq!(pairing[j], i);
            let target = Complex64::new(1.0, 0.0) / lam[i].conj();
            assert!((lam[j] - target).norm() <= 1e-8);
            if i == j {
                assert!((lam[i].norm() - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn classify_thresholds() {
        let spec = synthetic_spectrum(&[0.3, -0.3, 0.05]);
        let classes = classify(&spec, 0.4, 1e-8).unwrap();
        assert_eq!(classes.amplified, vec![0]);
        assert_eq!(classes.decaying, vec![1]);
        assert_eq!(classes.neutral, vec![2]);
        assert!(classes.real_states.is_empty());
    }

    #[test]
    fn classify_unitary_case_all_neutral_real() {
        let map = build_map(&kr_params(50, 10, 0.0)).unwrap();
        let spec = eigendecompose(&map, false).unwrap();
        let classes = classify(&spec, 0.0, 1e-8).unwrap();
        assert!(classes.amplified.is_empty());
        assert!(classes.decaying.is_empty());
        assert_eq!(classes.neutral.len(), 100);
        assert_eq!(classes.real_states.len(), 100);
    }

    #[test]
    fn classify_amplified_decaying_counts_balance() {
        let map = build_map(&kr_params(120, 24, 0.4)).unwrap();
        let spec = eigendecompose(&map, false).unwrap();
        let classes = classify(&spec, 0.4, 1e-8).unwrap();
        assert_eq!(classes.amplified.len(), classes.decaying.len());
        assert!(!classes.amplified.is_empty());
        let covered = classes.amplified.len() + classes.neutral.len() + classes.decaying.len();
        assert_eq!(covered, spec.len());
    }

    #[test]
    fn fraction_amplified_examples() {
        let map = build_map(&kr_params(60, 12, 0.0)).unwrap();
        let spec = eigendecompose(&map, false).unwrap();
        assert_eq!(fraction_amplified(&spec, 0.0).unwrap(), 0.0);

        let synth = synthetic_spectrum(&[0.3, -0.3, 0.05, -0.05]);
        assert!((fraction_amplified(&synth, 0.4).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn histogram_of_unitary_spectrum_is_central() {
        let map = build_map(&kr_params(60, 12, 0.0)).unwrap();
        let spec = eigendecompose(&map, false).unwrap();
        let hist = im_e_histogram(&[spec], 0.01).unwrap();
        assert!((hist.central_mass() - 1.0).abs() < 1e-15);
        let mass: f64 = hist
            .densities
            .iter()
            .map(|d| d * hist.bin_width)
            .sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_symmetric_input_gives_symmetric_bins() {
        let spec = synthetic_spectrum(&[0.03, -0.03, 0.07, -0.07, 0.0]);
        let hist = im_e_histogram(&[spec], 0.01).unwrap();
        let n = hist.counts.len();
        for i in 0..n {
            assert_eq!(hist.counts[i], hist.counts[n - 1 - i]);
        }
        assert_eq!(hist.central_mass(), 0.2);
    }

    #[test]
    fn histogram_rejects_empty_input() {
        assert!(im_e_histogram(&[], 0.01).is_err());
    }

    #[test]
    fn power_law_fit_recovers_exact_exponent() {
        let points: Vec<(f64, f64)> = [100.0, 200.0, 400.0, 800.0]
            .iter()
            .map(|&m: &f64| (m, 0.5 * m.powf(-0.1)))
            .collect();
        let fit = fit_power_law(&points).unwrap();
        assert!((fit.exponent_a - 0.1).abs() < 1e-12);
        assert!(fit.stderr_a < 1e-12);
        assert!((fit.intercept - 0.5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn power_law_fit_rejects_bad_input() {
        assert!(fit_power_law(&[(100.0, 0.1), (200.0, 0.05)]).is_err());
        assert!(fit_power_law(&[(100.0, 0.1), (200.0, 0.0), (400.0, 0.01)]).is_err());
    }

    #[test]
    fn fractal_dimension_from_exponent() {
        let fit = ScalingFit {
            points: vec![(1.0, 1.0); 3],
            exponent_a: 0.102,
            stderr_a: 0.009,
            intercept: 0.0,
        };
        let (d, err) = estimate_fractal_dimension(&fit);
        assert!((d - 1.898).abs() < 1e-12);
        assert!((err - 0.009).abs() < 1e-15);
        let flat = ScalingFit {
            points: vec![(1.0, 1.0); 3],
            exponent_a: 0.0,
            stderr_a: 0.004,
            intercept: 0.0,
        };
        assert!((estimate_fractal_dimension(&flat).0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mu_zero_scan_is_fully_real() {
        let params = kr_params(40, 8, 0.0);
        let fractions = critical_mu_scan(&params, &[0.0], 1e-8).unwrap();
        assert_eq!(fractions, vec![1.0]);
    }

    #[test]
    fn scan_rejects_unsorted_grid() {
        let params = kr_params(10, 2, 0.0);
        assert!(critical_mu_scan(&params, &[0.2, 0.1], 1e-8).is_err());
    }

    #[test]
    fn kicked_rotator_real_fraction_drops_past_critical_gain() {
        let params = kr_params(400, 80, 0.0);
        let mu_c = params.critical_gain();
        let fractions = critical_mu_scan(&params, &[0.5 * mu_c, 5.0 * mu_c], 1e-8).unwrap();
        assert!(
            fractions[1] < fractions[0],
            "real fraction should decrease: {fractions:?}"
        );
    }

    #[test]
    fn channel_relabeling_preserves_spectrum() {
        // Permutations acting within the channel block and within its
        // complement commute with the coupling, so the composed map is
        // similar to the original.
        let m = 20;
        let n = 4;
        let mu = 0.25;
        let f = crate::operators::build_kicked_rotator(m, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut rest: Vec<usize> = (n..m).collect();
        rest.shuffle(&mut rng);
        perm.extend(rest);

        let f_perm = Array2::from_shape_fn((m, m), |(i, j)| f[(perm[i], perm[j])]);
        let (_, sqrt_c) = build_coupling(m, n).unwrap();
        let spec_a = eigendecompose(&assemble_pt_map(&f, mu, &sqrt_c).unwrap(), false).unwrap();
        let spec_b =
            eigendecompose(&assemble_pt_map(&f_perm, mu, &sqrt_c).unwrap(), false).unwrap();

        // Multiset comparison by greedy nearest matching; canonical sort alone
        // may swap near-degenerate entries.
        let mut used = vec![false; spec_a.len()];
        for lb in spec_b.lambdas.iter() {
            let mut best = usize::MAX;
            let mut best_dist = f64::INFINITY;
            for (i, la) in spec_a.lambdas.iter().enumerate() {
                if !used[i] {
                    let dist = (la - lb).norm();
                    if dist < best_dist {
                        best = i;
                        best_dist = dist;
                    }
                }
            }
            assert!(best_dist < 1e-10, "unmatched eigenvalue, distance {best_dist}");
            used[best] = true;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn quasienergy_round_trip(re in -3.0f64..3.0, im in -3.0f64..3.0) {
            prop_assume!(re.abs() > 1e-6 || im.abs() > 1e-6);
            let lambda = Complex64::new(re, im);
            let e = quasienergy(lambda);
            prop_assert!(e.re > -PI && e.re <= PI);
            // lambda = exp(-iE)
            let back = (Complex64::new(0.0, -1.0) * e).exp();
            prop_assert!((back - lambda).norm() < 1e-12 * lambda.norm());
        }

        #[test]
        fn shuffled_inverse_conjugate_multisets_pair(seed in 0u64..1000, half in 1usize..24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut lambdas = Vec::with_capacity(2 * half);
            for _ in 0..half {
                let r = rng.random_range(0.3f64..3.0);
                let th = rng.random_range(-PI..PI);
                let l = Complex64::from_polar(r, th);
                lambdas.push(l);
                lambdas.push(Complex64::new(1.0, 0.0) / l.conj());
            }
            lambdas.shuffle(&mut rng);
            let pairing = pair_match(&lambdas, 1e-9).unwrap();
            for (i, &j) in pairing.iter().enumerate() {
                prop_assert_eq!(pairing[j], i);
                let target = Complex64::new(1.0, 0.0) / lambdas[i].conj();
                prop_assert!((lambdas[j] - target).norm() <= 1e-9);
            }
        }
    }
}
