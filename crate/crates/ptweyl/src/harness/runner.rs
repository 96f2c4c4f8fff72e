//! Fail-soft parallel task runner.  Every configured computation becomes one
//! task; a task failure is recorded in the manifest instead of aborting the
//! run.  All data files are byte-deterministic for a fixed config; only the
//! wall times in manifest.json vary between reruns.

use ndarray::prelude::*;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{ExperimentConfig, Observable};
use super::io::{self, ClassicalRow, FractionRow, ScalingRow};
use crate::classical::{self, Direction};
use crate::husimi;
use crate::linalg::CMat;
use crate::operators::{build_map, SystemParams};
use crate::spectra::{self, Spectrum};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TaskStatus {
    Completed,
    Failed { message: String },
}

impl TaskStatus {
    pub fn is_failed(&self) -> bool {
        matches!(self, TaskStatus::Failed { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub key: String,
    pub status: TaskStatus,
    pub wall_secs: f64,
    /// Largest numerical residual observed by the task: eigenpair residual
    /// when eigenvectors were computed, trace/determinant consistency of the
    /// spectrum otherwise.
    pub max_residual: Option<f64>,
    /// Files written, relative to the run directory.
    pub outputs: Vec<String>,
}

/// Channel count per resonator size.  The classical strip widths are taken
/// from these same rows, so the quantum opening and the classical strip
/// cannot drift apart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingRow {
    pub m: usize,
    pub n: usize,
    pub strip_width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub e_t: f64,
    pub coupling: Vec<CouplingRow>,
    pub n_failed: usize,
    pub tasks: Vec<TaskOutcome>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub output_dir: PathBuf,
    pub manifest_path: PathBuf,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TaskSpec {
    Spectral {
        m: usize,
        n: usize,
        mu_index: usize,
        seed: u64,
    },
    Husimi {
        m: usize,
        n: usize,
        mu_index: usize,
        seed: u64,
    },
    Classical {
        num: usize,
        den: usize,
        direction: Direction,
    },
}

impl TaskSpec {
    fn sort_key(&self) -> (u8, usize, usize, u64, u8) {
        match *self {
            TaskSpec::Spectral { m, mu_index, seed, .. } => (0, m, mu_index, seed, 0),
            TaskSpec::Husimi { m, mu_index, seed, .. } => (1, m, mu_index, seed, 0),
            TaskSpec::Classical { num, den, direction } => {
                (2, den, num, 0, u8::from(direction == Direction::Backward))
            }
        }
    }

    fn key(&self, config: &ExperimentConfig) -> String {
        match *self {
            TaskSpec::Spectral { m, mu_index, seed, .. } => format!(
                "spectrum m={m} mu={} seed={seed}",
                io::float_label(config.mu_list[mu_index])
            ),
            TaskSpec::Husimi { m, mu_index, seed, .. } => format!(
                "husimi m={m} mu={} seed={seed}",
                io::float_label(config.mu_list[mu_index])
            ),
            TaskSpec::Classical { num, den, direction } => {
                format!("classical {} width={num}/{den}", direction.label())
            }
        }
    }
}

enum TaskData {
    Spectrum {
        m: usize,
        mu_index: usize,
        spectrum: Spectrum,
    },
    Classical(ClassicalRow),
}

fn build_task_specs(config: &ExperimentConfig) -> Result<Vec<TaskSpec>> {
    let mut sorted_m = config.m_list.clone();
    sorted_m.sort_unstable();
    let seeds = config.seeds();
    let needs_spectra = config.observables.iter().any(|o| o.needs_spectra());

    let mut specs = Vec::new();
    for &m in &sorted_m {
        let n = config.n_for(m)?;
        for mu_index in 0..config.mu_list.len() {
            if needs_spectra {
                for &seed in &seeds {
                    specs.push(TaskSpec::Spectral { m, n, mu_index, seed });
                }
            }
            if config.observables.contains(&Observable::Husimi) {
                specs.push(TaskSpec::Husimi {
                    m,
                    n,
                    mu_index,
                    seed: seeds[0],
                });
            }
        }
    }
    if config.observables.contains(&Observable::Classical) {
        let mut widths = BTreeSet::new();
        for &m in &sorted_m {
            let n = config.n_for(m)?;
            let g = gcd(n, m);
            widths.insert((n / g, m / g));
        }
        for (num, den) in widths {
            for direction in [Direction::Forward, Direction::Backward] {
                specs.push(TaskSpec::Classical { num, den, direction });
            }
        }
    }
    specs.sort_by_key(TaskSpec::sort_key);
    Ok(specs)
}

fn system_params(config: &ExperimentConfig, m: usize, n: usize, mu: f64, seed: u64) -> Result<SystemParams> {
    SystemParams::new(m, n, mu, config.dynamics(), seed)
}

/// Trace and log-determinant consistency of a computed spectrum: the
/// eigenvalue sum must reproduce the matrix trace and the amplification
/// rates must sum to ln|det| = 0.
fn spectrum_consistency(map: &CMat, spectrum: &Spectrum) -> f64 {
    let trace: Complex64 = map.diag().iter().sum();
    let total: Complex64 = spectrum.lambdas.iter().sum();
    let trace_residual = (total - trace).norm() / trace.norm().max(1.0);
    let log_det: f64 = spectrum.im_e().iter().sum();
    trace_residual.max(log_det.abs())
}

type TaskResult = (Option<f64>, Vec<String>, Option<TaskData>);

fn run_spectral(
    config: &ExperimentConfig,
    out_dir: &Path,
    m: usize,
    n: usize,
    mu_index: usize,
    seed: u64,
) -> Result<TaskResult> {
    let mu = config.mu_list[mu_index];
    let params = system_params(config, m, n, mu, seed)?;
    let map = build_map(&params)?;
    let spectrum = spectra::eigendecompose(&map, false)?;

    let max_lambda = spectrum.lambdas.iter().map(|z| z.norm()).fold(0.0, f64::max);
    spectra::pair_match(
        spectrum.lambdas.as_slice().expect("standard layout"),
        config.tolerances.pair_tol * max_lambda,
    )?;
    let residual = spectrum_consistency(&map, &spectrum);

    let mut outputs = Vec::new();
    if config.observables.contains(&Observable::Spectrum) {
        let name = format!("spectrum_m{m}_mu{}_s{seed}.csv", io::float_label(mu));
        io::write_spectrum_csv(&out_dir.join(&name), &spectrum)?;
        outputs.push(name);
    }
    Ok((
        Some(residual),
        outputs,
        Some(TaskData::Spectrum { m, mu_index, spectrum }),
    ))
}

fn run_husimi(
    config: &ExperimentConfig,
    out_dir: &Path,
    m: usize,
    n: usize,
    mu_index: usize,
    seed: u64,
) -> Result<TaskResult> {
    let mu = config.mu_list[mu_index];
    let params = system_params(config, m, n, mu, seed)?;
    let map = build_map(&params)?;
    let spectrum = spectra::eigendecompose(&map, true)?;
    let classes = spectra::classify(&spectrum, mu, config.tolerances.delta_real)?;
    let vecs = spectrum.eigenvectors.as_ref().expect("vectors were requested");
    let [n_q, n_p] = config.husimi.resolution;

    let mut outputs = Vec::new();
    for (label, indices) in [
        ("amplified", &classes.amplified),
        ("neutral", &classes.neutral),
        ("decaying", &classes.decaying),
    ] {
        if indices.is_empty() {
            continue;
        }
        let mut sub: CMat = Array2::zeros((2 * m, indices.len()));
        for (c, &i) in indices.iter().enumerate() {
            sub.column_mut(c).assign(&vecs.column(i));
        }
        let basis = husimi::orthonormal_subspace_basis(&sub)?;
        let grid = husimi::husimi_map(&basis, m, (n_q, n_p))?;
        let stem = format!("husimi_{label}_m{m}_mu{}_s{seed}", io::float_label(mu));
        for (half, values) in [("L", &grid.values_l), ("R", &grid.values_r)] {
            let csv = format!("{stem}_{half}.csv");
            io::write_grid_csv(&out_dir.join(&csv), values)?;
            outputs.push(csv);
            let pgm = format!("{stem}_{half}.pgm");
            io::write_grid_pgm(&out_dir.join(&pgm), values)?;
            outputs.push(pgm);
        }
    }
    Ok((spectrum.max_residual, outputs, None))
}

fn run_classical(
    config: &ExperimentConfig,
    out_dir: &Path,
    num: usize,
    den: usize,
    direction: Direction,
) -> Result<TaskResult> {
    let k = config
        .k
        .ok_or_else(|| Error::Config("classical runs require a kick strength".into()))?;
    let width = num as f64 / den as f64;
    let [n_q, n_p] = config.classical.resolution;
    let grid = classical::coupled_regions(k, width, config.classical.t_max, (n_q, n_p), direction)?;

    let mut outputs = Vec::new();
    let wlabel = io::float_label(width);
    let passage_name = format!("passage_{}_w{wlabel}.csv", direction.label());
    io::write_passage_csv(&out_dir.join(&passage_name), &grid)?;
    outputs.push(passage_name);

    let indicator = classical::trapped_set_indicator(&grid);
    let pgm_name = format!("trapped_{}_w{wlabel}.pgm", direction.label());
    io::write_grid_pgm(&out_dir.join(&pgm_name), &indicator.mapv(f64::from))?;
    outputs.push(pgm_name);

    let occupied = indicator.iter().filter(|&&v| v != 0).count();
    let box_dim = if config.classical.box_scales.is_empty() || occupied == 0 {
        None
    } else {
        Some(classical::box_counting_dimension(
            &indicator,
            &config.classical.box_scales,
        )?)
    };
    let row = ClassicalRow {
        direction: direction.label().to_string(),
        strip_width: width,
        t_max: config.classical.t_max,
        n_q,
        n_p,
        trapped_fraction: grid.trapped_fraction(),
        box_dim,
    };
    Ok((None, outputs, Some(TaskData::Classical(row))))
}

fn run_task(
    spec: &TaskSpec,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> (TaskOutcome, Option<TaskData>) {
    let key = spec.key(config);
    let start = Instant::now();
    let result = match *spec {
        TaskSpec::Spectral { m, n, mu_index, seed } => {
            run_spectral(config, out_dir, m, n, mu_index, seed)
        }
        TaskSpec::Husimi { m, n, mu_index, seed } => {
            run_husimi(config, out_dir, m, n, mu_index, seed)
        }
        TaskSpec::Classical { num, den, direction } => {
            run_classical(config, out_dir, num, den, direction)
        }
    };
    let wall_secs = start.elapsed().as_secs_f64();
    match result {
        Ok((max_residual, outputs, data)) => (
            TaskOutcome {
                key,
                status: TaskStatus::Completed,
                wall_secs,
                max_residual,
                outputs,
            },
            data,
        ),
        Err(e) => (
            TaskOutcome {
                key,
                status: TaskStatus::Failed {
                    message: e.to_string(),
                },
                wall_secs,
                max_residual: None,
                outputs: Vec::new(),
            },
            None,
        ),
    }
}

fn timed_outcome(key: String, body: impl FnOnce() -> Result<Vec<String>>) -> TaskOutcome {
    let start = Instant::now();
    let result = body();
    let wall_secs = start.elapsed().as_secs_f64();
    match result {
        Ok(outputs) => TaskOutcome {
            key,
            status: TaskStatus::Completed,
            wall_secs,
            max_residual: None,
            outputs,
        },
        Err(e) => TaskOutcome {
            key,
            status: TaskStatus::Failed {
                message: e.to_string(),
            },
            wall_secs,
            max_residual: None,
            outputs: Vec::new(),
        },
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn aggregate_outcomes(
    config: &ExperimentConfig,
    out_dir: &Path,
    data: &[TaskData],
) -> Vec<TaskOutcome> {
    let mut outcomes = Vec::new();

    let mut spectra_by_group: BTreeMap<(usize, usize), Vec<&Spectrum>> = BTreeMap::new();
    for item in data {
        if let TaskData::Spectrum { m, mu_index, spectrum } = item {
            spectra_by_group
                .entry((*mu_index, *m))
                .or_default()
                .push(spectrum);
        }
    }

    let fraction_table =
        |mu_index: usize| -> Result<Vec<FractionRow>> {
            let mu = config.mu_list[mu_index];
            let mut rows = Vec::new();
            for (&(gi, m), group) in &spectra_by_group {
                if gi != mu_index {
                    continue;
                }
                let fractions: Vec<f64> = group
                    .iter()
                    .map(|s| spectra::fraction_amplified(s, mu))
                    .collect::<Result<_>>()?;
                let (mean_fraction, stderr) = mean_and_stderr(&fractions);
                rows.push(FractionRow {
                    m,
                    n: config.n_for(m)?,
                    mean_fraction,
                    stderr,
                    n_seeds: fractions.len(),
                });
            }
            if rows.is_empty() {
                return Err(Error::EmptyInput(
                    "no spectra available for aggregation".into(),
                ));
            }
            Ok(rows)
        };

    if config.observables.contains(&Observable::Fraction) {
        for mu_index in 0..config.mu_list.len() {
            let mu_label = io::float_label(config.mu_list[mu_index]);
            let key = format!("aggregate fractions mu={mu_label}");
            outcomes.push(timed_outcome(key, || {
                let rows = fraction_table(mu_index)?;
                let name = format!("fractions_mu{mu_label}.csv");
                io::write_fractions_csv(&out_dir.join(&name), &rows)?;
                Ok(vec![name])
            }));
        }
    }

    if config.observables.contains(&Observable::Histogram) {
        for (&(mu_index, m), group) in &spectra_by_group {
            let mu_label = io::float_label(config.mu_list[mu_index]);
            let key = format!("aggregate histogram m={m} mu={mu_label}");
            outcomes.push(timed_outcome(key, || {
                let cloned: Vec<Spectrum> = group.iter().map(|s| (*s).clone()).collect();
                let histogram = spectra::im_e_histogram(&cloned, config.histogram.bin_width)?;
                let name = format!("histogram_m{m}_mu{mu_label}.csv");
                io::write_histogram_csv(&out_dir.join(&name), &histogram)?;
                Ok(vec![name])
            }));
        }
    }

    if config.observables.contains(&Observable::Scaling) {
        for mu_index in 0..config.mu_list.len() {
            let mu = config.mu_list[mu_index];
            let mu_label = io::float_label(mu);
            let key = format!("aggregate scaling mu={mu_label}");
            outcomes.push(timed_outcome(key, || {
                let mut points = Vec::new();
                for (&(gi, m), group) in &spectra_by_group {
                    if gi != mu_index {
                        continue;
                    }
                    for s in group {
                        points.push((m as f64, spectra::fraction_amplified(s, mu)?));
                    }
                }
                let fit = spectra::fit_power_law(&points)?;
                let (fractal_dim, stderr_dim) = spectra::estimate_fractal_dimension(&fit);
                let row = ScalingRow {
                    mu,
                    n_points: fit.points.len(),
                    exponent_a: fit.exponent_a,
                    stderr_a: fit.stderr_a,
                    intercept: fit.intercept,
                    fractal_dim,
                    stderr_dim,
                };
                let name = format!("scaling_mu{mu_label}.csv");
                io::write_scaling_csv(&out_dir.join(&name), &row)?;
                Ok(vec![name])
            }));
        }
    }

    if config.observables.contains(&Observable::Classical) {
        let mut rows: Vec<ClassicalRow> = data
            .iter()
            .filter_map(|d| match d {
                TaskData::Classical(row) => Some(row.clone()),
                _ => None,
            })
            .collect();
        rows.sort_by(|a, b| {
            (&a.direction, a.strip_width)
                .partial_cmp(&(&b.direction, b.strip_width))
                .expect("finite widths")
        });
        outcomes.push(timed_outcome("aggregate classical".into(), || {
            if rows.is_empty() {
                return Err(Error::EmptyInput(
                    "no classical results available for aggregation".into(),
                ));
            }
            let name = "classical_summary.csv".to_string();
            io::write_classical_summary_csv(&out_dir.join(&name), &rows)?;
            Ok(vec![name])
        }));
    }

    outcomes
}

/// Execute all tasks a config describes, in parallel on the ambient rayon
/// pool.  Individual task failures are recorded in the returned manifest
/// (`n_failed`); only setup errors abort the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let out_dir = config.output_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let mut coupling = Vec::new();
    {
        let mut sorted_m = config.m_list.clone();
        sorted_m.sort_unstable();
        for &m in &sorted_m {
            let n = config.n_for(m)?;
            let strip_width = n as f64 / m as f64;
            if (strip_width - config.e_t).abs() > 0.5 / m as f64 + 1e-12 {
                return Err(Error::Manifest(format!(
                    "channel rounding drifted: N/M = {strip_width} at M={m} vs configured ratio {}",
                    config.e_t
                )));
            }
            coupling.push(CouplingRow { m, n, strip_width });
        }
    }

    let specs = build_task_specs(config)?;
    let results: Vec<(TaskOutcome, Option<TaskData>)> = specs
        .par_iter()
        .map(|spec| run_task(spec, config, &out_dir))
        .collect();

    let mut tasks = Vec::with_capacity(results.len());
    let mut data = Vec::new();
    for (outcome, task_data) in results {
        tasks.push(outcome);
        if let Some(d) = task_data {
            data.push(d);
        }
    }
    tasks.extend(aggregate_outcomes(config, &out_dir, &data));

    let n_failed = tasks.iter().filter(|t| t.status.is_failed()).count();
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.config_hash(),
        e_t: config.e_t,
        coupling,
        n_failed,
        tasks,
    };
    let manifest_path = out_dir.join("manifest.json");
    let json =
        serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
    std::fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    validate_outputs(&manifest, &out_dir)?;

    Ok(RunSummary {
        manifest,
        output_dir: out_dir,
        manifest_path,
    })
}

/// Check that every completed task's outputs exist on disk and the failure
/// count is consistent.
pub fn validate_outputs(manifest: &RunManifest, dir: &Path) -> Result<()> {
    for task in &manifest.tasks {
        if task.status == TaskStatus::Completed {
            for rel in &task.outputs {
                let path = dir.join(rel);
                if !path.is_file() {
                    return Err(Error::Manifest(format!(
                        "completed task '{}' lists missing output {}",
                        task.key,
                        path.display()
                    )));
                }
            }
        }
    }
    let failed = manifest.tasks.iter().filter(|t| t.status.is_failed()).count();
    if failed != manifest.n_failed {
        return Err(Error::Manifest(format!(
            "n_failed records {} but {} tasks failed",
            manifest.n_failed, failed
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_from(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text).unwrap()
    }

    fn base() -> ExperimentConfig {
        config_from(
            r#"
                dynamics = "kicked_rotator"
                k = 8.0
                e_t = 0.2
                m_list = [400, 1000, 2000]
                mu_list = [0.0, 0.4]
                seed = 1
                observables = ["spectrum", "classical"]
                output_dir = "out"
            "#,
        )
    }

    #[test]
    fn equal_coupling_ratios_collapse_to_one_classical_strip() {
        let specs = build_task_specs(&base()).unwrap();
        let classical: Vec<_> = specs
            .iter()
            .filter(|s| matches!(s, TaskSpec::Classical { .. }))
            .collect();
        assert_eq!(classical.len(), 2);
        for spec in classical {
            if let TaskSpec::Classical { num, den, .. } = *spec {
                assert_eq!((num, den), (1, 5));
            }
        }
    }

    #[test]
    fn task_order_is_sorted_and_stable() {
        let specs = build_task_specs(&base()).unwrap();
        let keys: Vec<_> = specs.iter().map(|s| s.sort_key()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        // 3 sizes x 2 rates spectral + 2 classical directions
        assert_eq!(specs.len(), 8);
    }

    #[test]
    fn ensemble_seeds_multiply_spectral_tasks() {
        let config = config_from(
            r#"
                dynamics = "coe"
                e_t = 0.2
                m_list = [100]
                mu_list = [0.1]
                seed = 1
                ensemble_seeds = [3, 4, 5]
                observables = ["fraction"]
                output_dir = "out"
            "#,
        );
        let specs = build_task_specs(&config).unwrap();
        assert_eq!(specs.len(), 3);
        let seeds: Vec<u64> = specs
            .iter()
            .map(|s| match s {
                TaskSpec::Spectral { seed, .. } => *seed,
                _ => panic!("unexpected task"),
            })
            .collect();
        assert_eq!(seeds, vec![3, 4, 5]);
    }

    #[test]
    fn husimi_uses_first_seed_only() {
        let config = config_from(
            r#"
                dynamics = "coe"
                e_t = 0.2
                m_list = [100]
                mu_list = [0.1]
                seed = 1
                ensemble_seeds = [7, 8]
                observables = ["husimi"]
                output_dir = "out"
            "#,
        );
        let specs = build_task_specs(&config).unwrap();
        assert_eq!(specs.len(), 1);
        assert!(matches!(
            specs[0],
            TaskSpec::Husimi { seed: 7, m: 100, n: 20, .. }
        ));
    }

    #[test]
    fn mean_and_stderr_match_hand_values() {
        let (mean, stderr) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert!((mean - 2.5).abs() < 1e-15);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        let (mean, stderr) = mean_and_stderr(&[0.7]);
        assert_eq!((mean, stderr), (0.7, 0.0));
    }

    #[test]
    fn validate_outputs_flags_missing_files_and_bad_counts() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest {
            version: "0".into(),
            config_hash: String::new(),
            e_t: 0.2,
            coupling: vec![],
            n_failed: 0,
            tasks: vec![TaskOutcome {
                key: "t".into(),
                status: TaskStatus::Completed,
                wall_secs: 0.0,
                max_residual: None,
                outputs: vec!["missing.csv".into()],
            }],
        };
        assert!(matches!(
            validate_outputs(&manifest, dir.path()),
            Err(Error::Manifest(_))
        ));
        std::fs::write(dir.path().join("missing.csv"), "x").unwrap();
        validate_outputs(&manifest, dir.path()).unwrap();
        manifest.n_failed = 1;
        assert!(validate_outputs(&manifest, dir.path()).is_err());
    }
}
