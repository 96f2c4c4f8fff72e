//! TOML-backed experiment configuration with strict validation and a stable
//! content hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::operators::Dynamics;
use crate::{Error, Result};

/// Largest resonator size that runs without the explicit opt-in flag; a
/// single eigendecomposition beyond this point takes minutes.
pub const LARGE_M_THRESHOLD: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    KickedRotator,
    Coe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Full complex spectrum per (M, mu, seed), written as CSV.
    Spectrum,
    /// Amplification-rate histograms per (M, mu), aggregated over seeds.
    Histogram,
    /// Above-threshold fractions per (M, mu), with seed statistics.
    Fraction,
    /// Power-law fit of the fraction against M, per mu.
    Scaling,
    /// Summed Husimi grids of the amplified, neutral, and decaying subspaces.
    Husimi,
    /// First-passage grids of the classical map and box-counting dimension.
    Classical,
}

impl Observable {
    pub fn needs_spectra(self) -> bool {
        matches!(
            self,
            Observable::Spectrum
                | Observable::Histogram
                | Observable::Fraction
                | Observable::Scaling
        )
    }
}

fn default_husimi_resolution() -> [usize; 2] {
    [200, 200]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HusimiSection {
    #[serde(default = "default_husimi_resolution")]
    pub resolution: [usize; 2],
}

impl Default for HusimiSection {
    fn default() -> Self {
        HusimiSection {
            resolution: default_husimi_resolution(),
        }
    }
}

fn default_classical_resolution() -> [usize; 2] {
    [1000, 1000]
}

fn default_t_max() -> u32 {
    20
}

fn default_box_scales() -> Vec<usize> {
    vec![1, 2, 4, 5, 8, 10, 20, 25, 40, 50]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSection {
    #[serde(default = "default_classical_resolution")]
    pub resolution: [usize; 2],
    #[serde(default = "default_t_max")]
    pub t_max: u32,
    /// Box edge lengths (in cells) for the dimension fit; empty disables it.
    #[serde(default = "default_box_scales")]
    pub box_scales: Vec<usize>,
}

impl Default for ClassicalSection {
    fn default() -> Self {
        ClassicalSection {
            resolution: default_classical_resolution(),
            t_max: default_t_max(),
            box_scales: default_box_scales(),
        }
    }
}

fn default_bin_width() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSection {
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
}

impl Default for HistogramSection {
    fn default() -> Self {
        HistogramSection {
            bin_width: default_bin_width(),
        }
    }
}

fn default_delta_real() -> f64 {
    1e-8
}

fn default_pair_tol() -> f64 {
    1e-7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    /// |Im E| below which a quasienergy counts as real.
    #[serde(default = "default_delta_real")]
    pub delta_real: f64,
    /// Relative tolerance of the inverse-conjugate pairing check.
    #[serde(default = "default_pair_tol")]
    pub pair_tol: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection {
            delta_real: default_delta_real(),
            pair_tol: default_pair_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dynamics: DynamicsKind,
    /// Kick strength; required for the kicked rotator, rejected otherwise.
    #[serde(default)]
    pub k: Option<f64>,
    /// Coupling ratio N/M; the channel count is N = round(e_t * M) per M.
    pub e_t: f64,
    pub m_list: Vec<usize>,
    pub mu_list: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Ensemble seeds for random internal dynamics; one task per seed.
    /// Rejected for the kicked rotator, whose dynamics is deterministic.
    #[serde(default)]
    pub ensemble_seeds: Option<Vec<u64>>,
    pub observables: BTreeSet<Observable>,
    pub output_dir: PathBuf,
    /// Opt-in for M beyond LARGE_M_THRESHOLD.
    #[serde(default)]
    pub allow_large: bool,
    #[serde(default)]
    pub husimi: HusimiSection,
    #[serde(default)]
    pub classical: ClassicalSection,
    #[serde(default)]
    pub histogram: HistogramSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Channel count for one resonator size, rounded from the coupling ratio.
    pub fn n_for(&self, m: usize) -> Result<usize> {
        let n = (self.e_t * m as f64).round() as usize;
        if n == 0 || n > m {
            return Err(Error::Config(format!(
                "coupling ratio {} gives {n} channels at M={m}, outside 1..=M",
                self.e_t
            )));
        }
        Ok(n)
    }

    /// Seeds of the internal-dynamics ensemble (always a single entry for
    /// deterministic dynamics).
    pub fn seeds(&self) -> Vec<u64> {
        match (&self.dynamics, &self.ensemble_seeds) {
            (DynamicsKind::Coe, Some(seeds)) => seeds.clone(),
            _ => vec![self.seed],
        }
    }

    pub fn dynamics(&self) -> Dynamics {
        match self.dynamics {
            DynamicsKind::KickedRotator => Dynamics::KickedRotator {
                k: self.k.unwrap_or(f64::NAN),
            },
            DynamicsKind::Coe => Dynamics::Coe,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.dynamics {
            DynamicsKind::KickedRotator => {
                let k = self
                    .k
                    .ok_or_else(|| Error::Config("kicked rotator requires a kick strength k".into()))?;
                if !k.is_finite() {
                    return Err(Error::Config(format!("kick strength must be finite, got {k}")));
                }
                if self.ensemble_seeds.is_some() {
                    return Err(Error::Config(
                        "ensemble_seeds is only meaningful for random internal dynamics; \
                         the kicked rotator takes the single top-level seed"
                            .into(),
                    ));
                }
            }
            DynamicsKind::Coe => {
                if self.k.is_some() {
                    return Err(Error::Config(
                        "k is only meaningful for the kicked rotator".into(),
                    ));
                }
                if let Some(seeds) = &self.ensemble_seeds {
                    if seeds.is_empty() {
                        return Err(Error::Config("ensemble_seeds must not be empty".into()));
                    }
                    let mut sorted = seeds.clone();
                    sorted.sort_unstable();
                    sorted.dedup();
                    if sorted.len() != seeds.len() {
                        return Err(Error::Config("ensemble_seeds contains duplicates".into()));
                    }
                }
            }
        }
        if !(self.e_t > 0.0 && self.e_t <= 1.0) {
            return Err(Error::Config(format!(
                "coupling ratio must lie in (0, 1], got {}",
                self.e_t
            )));
        }
        if self.m_list.is_empty() {
            return Err(Error::Config("m_list must not be empty".into()));
        }
        {
            let mut sorted = self.m_list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.m_list.len() {
                return Err(Error::Config("m_list contains duplicates".into()));
            }
        }
        for &m in &self.m_list {
            self.n_for(m)?;
            if m > LARGE_M_THRESHOLD && !self.allow_large {
                return Err(Error::Config(format!(
                    "M={m} exceeds {LARGE_M_THRESHOLD}; set allow_large = true to opt in"
                )));
            }
        }
        if self.mu_list.is_empty() {
            return Err(Error::Config("mu_list must not be empty".into()));
        }
        for &mu in &self.mu_list {
            if !mu.is_finite() || mu < 0.0 {
                return Err(Error::Config(format!(
                    "gain/loss rates must be finite and non-negative, got {mu}"
                )));
            }
        }
        for (i, &mu) in self.mu_list.iter().enumerate() {
            if self.mu_list[..i].contains(&mu) {
                return Err(Error::Config(format!("mu_list repeats {mu}")));
            }
        }
        if self.observables.is_empty() {
            return Err(Error::Config("observables must not be empty".into()));
        }
        if self.observables.contains(&Observable::Scaling) && self.m_list.len() < 3 {
            return Err(Error::Config(
                "the scaling fit needs at least three resonator sizes in m_list".into(),
            ));
        }
        if self.observables.contains(&Observable::Classical) {
            if self.dynamics != DynamicsKind::KickedRotator {
                return Err(Error::Config(
                    "the classical observable requires the kicked rotator".into(),
                ));
            }
            let [n_q, n_p] = self.classical.resolution;
            if n_q == 0 || n_p == 0 {
                return Err(Error::Config("classical resolution must be positive".into()));
            }
            if !self.classical.box_scales.is_empty() {
                if n_q != n_p {
                    return Err(Error::Config(
                        "box counting needs a square classical grid".into(),
                    ));
                }
                for &s in &self.classical.box_scales {
                    if s == 0 || n_q % s != 0 {
                        return Err(Error::Config(format!(
                            "box scale {s} does not divide the grid resolution {n_q}"
                        )));
                    }
                }
            }
        }
        if self.observables.contains(&Observable::Husimi) {
            let [n_q, n_p] = self.husimi.resolution;
            if n_q == 0 || n_p == 0 {
                return Err(Error::Config("husimi resolution must be positive".into()));
            }
        }
        if !(self.histogram.bin_width > 0.0 && self.histogram.bin_width.is_finite()) {
            return Err(Error::Config(format!(
                "histogram bin width must be positive, got {}",
                self.histogram.bin_width
            )));
        }
        if !(self.tolerances.delta_real > 0.0) || !(self.tolerances.pair_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialization; stable across reruns and
    /// field-order permutations of the input file.
    pub fn config_hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serialization cannot fail");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
