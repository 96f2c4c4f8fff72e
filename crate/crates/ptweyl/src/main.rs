//! Command-line front end: single spectra, configured sweeps, Husimi and
//! classical phase-space grids, and random-matrix ensemble scans.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ptweyl::classical::{self, Direction};
use ptweyl::harness::config::LARGE_M_THRESHOLD;
use ptweyl::harness::{self, io, ExperimentConfig};
use ptweyl::husimi::{self, HusimiGrid};
use ptweyl::operators::{build_map, Dynamics, SystemParams};
use ptweyl::spectra;

#[derive(Parser)]
#[command(
    name = "ptweyl",
    version,
    about = "Non-unitary quantum maps of coupled gain/loss resonators: \
             spectra, phase-space supports, and fractal Weyl scaling"
)]
struct Cli {
    /// Worker threads for task-parallel commands (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one full spectrum and write it as CSV
    Spectrum(SpectrumArgs),
    /// Run every task of a TOML-configured experiment
    Sweep(SweepArgs),
    /// Husimi grids of the amplified, neutral, and decaying subspaces
    Husimi(HusimiArgs),
    /// First-passage grids of the classical map and box-counting dimension
    Classical(ClassicalArgs),
    /// Random-matrix ensemble scan of the real-quasienergy fraction
    Rmt(RmtArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DynamicsArg {
    KickedRotator,
    Coe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Forward,
    Backward,
    Both,
}

impl DirectionArg {
    fn directions(self) -> Vec<Direction> {
        match self {
            DirectionArg::Forward => vec![Direction::Forward],
            DirectionArg::Backward => vec![Direction::Backward],
            DirectionArg::Both => vec![Direction::Forward, Direction::Backward],
        }
    }
}

#[derive(Args)]
struct SpectrumArgs {
    /// Resonator size M; the map acts on 2M amplitudes
    #[arg(long)]
    m: usize,
    /// Coupling ratio; the channel count becomes round(e_t * M)
    #[arg(long, required_unless_present = "n", conflicts_with = "n")]
    e_t: Option<f64>,
    /// Explicit channel count N
    #[arg(long)]
    n: Option<usize>,
    /// Gain/loss rate
    #[arg(long)]
    mu: f64,
    #[arg(long, value_enum, default_value_t = DynamicsArg::KickedRotator)]
    dynamics: DynamicsArg,
    /// Kick strength (kicked rotator only)
    #[arg(long)]
    k: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also compute eigenvectors and report the worst eigenpair residual
    #[arg(long)]
    vectors: bool,
    /// Output CSV file
    #[arg(long)]
    out: PathBuf,
    /// Allow resonator sizes beyond the interactive limit
    #[arg(long)]
    allow_large: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment description (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HusimiArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, required_unless_present = "n", conflicts_with = "n")]
    e_t: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    mu: f64,
    #[arg(long, value_enum, default_value_t = DynamicsArg::KickedRotator)]
    dynamics: DynamicsArg,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Cells per phase-space axis
    #[arg(long, default_value_t = 200)]
    res: usize,
    /// |Im E| below which a quasienergy counts as real
    #[arg(long, default_value_t = 1e-8)]
    delta_real: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    allow_large: bool,
}

#[derive(Args)]
struct ClassicalArgs {
    /// Kick strength of the underlying map
    #[arg(long)]
    k: f64,
    /// Strip width in (0, 1)
    #[arg(long, conflicts_with_all = ["e_t", "m"])]
    strip: Option<f64>,
    /// Coupling ratio; with --m, the strip width becomes round(e_t*M)/M
    #[arg(long, requires = "m")]
    e_t: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Iteration horizon
    #[arg(long, default_value_t = 20)]
    t_max: u32,
    /// Cells per phase-space axis
    #[arg(long, default_value_t = 1000)]
    res: usize,
    #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
    direction: DirectionArg,
    /// Box edge lengths in cells for the dimension fit (each must divide
    /// the resolution); pass an empty string to disable
    #[arg(
        long,
        value_delimiter = ',',
        default_values_t = vec![1usize, 2, 4, 5, 8, 10, 20, 25, 40, 50]
    )]
    box_scales: Vec<usize>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RmtArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, required_unless_present = "n", conflicts_with = "n")]
    e_t: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Ensemble size; members use seeds base+1 ..= base+count
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Seed base offset
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gain/loss rates to scan
    #[arg(long, value_delimiter = ',', conflicts_with = "mu_factors")]
    mu_list: Vec<f64>,
    /// Rates as multiples of the critical gain sqrt(N)/M
    #[arg(long, value_delimiter = ',')]
    mu_factors: Vec<f64>,
    #[arg(long, default_value_t = 1e-8)]
    delta_real: f64,
    /// Output CSV file
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    allow_large: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // The parallelism here is task-level; keep the BLAS single-threaded
    // unless the caller decided otherwise.
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Husimi(args) => cmd_husimi(args),
        Command::Classical(args) => cmd_classical(args),
        Command::Rmt(args) => cmd_rmt(args),
    }
}

fn check_size(m: usize, allow_large: bool) -> Result<()> {
    if m > LARGE_M_THRESHOLD && !allow_large {
        bail!("M={m} exceeds {LARGE_M_THRESHOLD}; pass --allow-large to opt in");
    }
    Ok(())
}

fn to_dynamics(arg: DynamicsArg, k: Option<f64>) -> Result<Dynamics> {
    match arg {
        DynamicsArg::KickedRotator => {
            let k = k.context("--dynamics kicked-rotator requires --k")?;
            Ok(Dynamics::KickedRotator { k })
        }
        DynamicsArg::Coe => {
            if k.is_some() {
                bail!("--k is only meaningful for the kicked rotator");
            }
            Ok(Dynamics::Coe)
        }
    }
}

fn build_params(
    m: usize,
    n: Option<usize>,
    e_t: Option<f64>,
    mu: f64,
    dynamics: Dynamics,
    seed: u64,
) -> Result<SystemParams> {
    let params = match (n, e_t) {
        (Some(n), _) => SystemParams::new(m, n, mu, dynamics, seed)?,
        (None, Some(e_t)) => SystemParams::with_coupling_ratio(m, e_t, mu, dynamics, seed)?,
        (None, None) => bail!("pass either --n or --e-t"),
    };
    Ok(params)
}

fn ensure_parent_dir(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    Ok(())
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

fn cmd_spectrum(args: SpectrumArgs) -> Result<ExitCode> {
    check_size(args.m, args.allow_large)?;
    let dynamics = to_dynamics(args.dynamics, args.k)?;
    let params = build_params(args.m, args.n, args.e_t, args.mu, dynamics, args.seed)?;
    let map = build_map(&params)?;
    let spectrum = spectra::eigendecompose(&map, args.vectors)?;

    let moduli: Vec<f64> = spectrum.lambdas.iter().map(|z| z.norm()).collect();
    let max_lambda = moduli.iter().fold(0.0f64, |a, &b| a.max(b));
    let min_lambda = moduli.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    spectra::pair_match(
        spectrum.lambdas.as_slice().expect("standard layout"),
        1e-7 * max_lambda,
    )?;

    ensure_parent_dir(&args.out)?;
    io::write_spectrum_csv(&args.out, &spectrum)?;

    println!(
        "spectrum: M={} N={} mu={} -> {} eigenvalues -> {}",
        params.m,
        params.n,
        params.mu,
        spectrum.len(),
        args.out.display()
    );
    println!(
        "  |lambda| in [{min_lambda:.6}, {max_lambda:.6}]  (e^mu = {:.6})",
        params.mu.exp()
    );
    println!("  inverse-conjugate pairing holds at 1e-7 relative");
    if let Some(r) = spectrum.max_residual {
        println!("  worst eigenpair residual {r:.3e}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    let summary = harness::run_experiment(&config)?;
    for task in &summary.manifest.tasks {
        match &task.status {
            harness::TaskStatus::Completed => {
                println!("ok   {} ({:.2}s)", task.key, task.wall_secs)
            }
            harness::TaskStatus::Failed { message } => {
                println!("FAIL {}: {message}", task.key)
            }
        }
    }
    let n_failed = summary.manifest.n_failed;
    println!(
        "{} tasks, {} failed -> {}",
        summary.manifest.tasks.len(),
        n_failed,
        summary.manifest_path.display()
    );
    Ok(ExitCode::from(n_failed.min(255) as u8))
}

fn cmd_husimi(args: HusimiArgs) -> Result<ExitCode> {
    check_size(args.m, args.allow_large)?;
    let dynamics = to_dynamics(args.dynamics, args.k)?;
    let params = build_params(args.m, args.n, args.e_t, args.mu, dynamics, args.seed)?;
    let map = build_map(&params)?;
    let spectrum = spectra::eigendecompose(&map, true)?;
    let classes = spectra::classify(&spectrum, params.mu, args.delta_real)?;
    let vecs = spectrum.eigenvectors.as_ref().expect("vectors were requested");

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut grids: BTreeMap<&str, HusimiGrid> = BTreeMap::new();
    for (label, indices) in [
        ("amplified", &classes.amplified),
        ("neutral", &classes.neutral),
        ("decaying", &classes.decaying),
    ] {
        if indices.is_empty() {
            println!("{label}: no states");
            continue;
        }
        let mut sub = ndarray::Array2::zeros((params.map_dim(), indices.len()));
        for (c, &i) in indices.iter().enumerate() {
            sub.column_mut(c).assign(&vecs.column(i));
        }
        let basis = husimi::orthonormal_subspace_basis(&sub)?;
        let grid = husimi::husimi_map(&basis, params.m, (args.res, args.res))?;
        let stem = format!(
            "husimi_{label}_m{}_mu{}_s{}",
            params.m,
            io::float_label(params.mu),
            params.seed
        );
        for (half, values) in [("L", &grid.values_l), ("R", &grid.values_r)] {
            io::write_grid_csv(&args.out.join(format!("{stem}_{half}.csv")), values)?;
            io::write_grid_pgm(&args.out.join(format!("{stem}_{half}.pgm")), values)?;
        }
        println!(
            "{label}: {} states, mass L {:.4}, mass R {:.4} -> {stem}_{{L,R}}.{{csv,pgm}}",
            indices.len(),
            grid.mass_l(),
            grid.mass_r()
        );
        grids.insert(label, grid);
    }
    if let (Some(up), Some(down)) = (grids.get("amplified"), grids.get("decaying")) {
        let mirrored = husimi::pt_transform_grid(up);
        let dist = husimi::rel_l1_distance(down, &mirrored)?;
        println!("mirror distance |decaying - PT(amplified)|_1 = {dist:.3e}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_classical(args: ClassicalArgs) -> Result<ExitCode> {
    let width = match (args.strip, args.e_t, args.m) {
        (Some(w), None, None) => w,
        (None, Some(e_t), Some(m)) => {
            let n = (e_t * m as f64).round() as usize;
            if n == 0 || n > m {
                bail!("coupling ratio {e_t} gives {n} channels at M={m}");
            }
            n as f64 / m as f64
        }
        _ => bail!("pass either --strip or both --e-t and --m"),
    };
    if args.res == 0 {
        bail!("--res must be positive");
    }
    for &s in &args.box_scales {
        if s == 0 || args.res % s != 0 {
            bail!("box scale {s} does not divide the resolution {}", args.res);
        }
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut rows = Vec::new();
    for direction in args.direction.directions() {
        let grid = classical::coupled_regions(
            args.k,
            width,
            args.t_max,
            (args.res, args.res),
            direction,
        )?;
        let wlabel = io::float_label(width);
        let passage = format!("passage_{}_w{wlabel}.csv", direction.label());
        io::write_passage_csv(&args.out.join(&passage), &grid)?;
        let indicator = classical::trapped_set_indicator(&grid);
        let pgm = format!("trapped_{}_w{wlabel}.pgm", direction.label());
        io::write_grid_pgm(&args.out.join(&pgm), &indicator.mapv(f64::from))?;

        let occupied = indicator.iter().filter(|&&v| v != 0).count();
        let box_dim = if args.box_scales.is_empty() || occupied == 0 {
            None
        } else {
            Some(classical::box_counting_dimension(
                &indicator,
                &args.box_scales,
            )?)
        };
        println!(
            "{}: trapped fraction {:.6} at t_max={} ({} cells)",
            direction.label(),
            grid.trapped_fraction(),
            args.t_max,
            occupied
        );
        match box_dim {
            Some((d, e)) => println!("  box-counting dimension {d:.4} +- {e:.4}"),
            None => println!("  box-counting dimension not computed"),
        }
        rows.push(io::ClassicalRow {
            direction: direction.label().to_string(),
            strip_width: width,
            t_max: args.t_max,
            n_q: args.res,
            n_p: args.res,
            trapped_fraction: grid.trapped_fraction(),
            box_dim,
        });
    }
    io::write_classical_summary_csv(&args.out.join("classical_summary.csv"), &rows)?;
    println!("summary -> {}", args.out.join("classical_summary.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_rmt(args: RmtArgs) -> Result<ExitCode> {
    check_size(args.m, args.allow_large)?;
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let reference = build_params(args.m, args.n, args.e_t, 0.0, Dynamics::Coe, 1)?;
    let mu_c = reference.critical_gain();

    let mut grid: Vec<f64> = if !args.mu_list.is_empty() {
        args.mu_list.clone()
    } else if !args.mu_factors.is_empty() {
        args.mu_factors.iter().map(|f| f * mu_c).collect()
    } else {
        bail!("pass --mu-list or --mu-factors");
    };
    for &mu in &grid {
        if !mu.is_finite() || mu < 0.0 {
            bail!("gain/loss rates must be finite and non-negative, got {mu}");
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let seeds: Vec<u64> = (1..=args.seeds).map(|i| args.seed + i).collect();
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let params = SystemParams::new(
                reference.m,
                reference.n,
                0.0,
                Dynamics::Coe,
                seed,
            )?;
            spectra::critical_mu_scan(&params, &grid, args.delta_real)
        })
        .collect::<ptweyl::Result<_>>()?;

    ensure_parent_dir(&args.out)?;
    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = std::io::BufWriter::new(file);
    use std::io::Write;
    writeln!(w, "mu,mu_over_mu_c,mean_real_fraction,stderr,n_seeds")?;
    println!(
        "COE M={} N={}: critical gain sqrt(N)/M = {mu_c:.6}, {} members",
        reference.m,
        reference.n,
        seeds.len()
    );
    for (i, &mu) in grid.iter().enumerate() {
        let values: Vec<f64> = per_seed.iter().map(|row| row[i]).collect();
        let (mean, stderr) = mean_and_stderr(&values);
        writeln!(
            w,
            "{},{},{},{},{}",
            io::format_float(mu),
            io::format_float(mu / mu_c),
            io::format_float(mean),
            io::format_float(stderr),
            values.len()
        )?;
        println!(
            "  mu = {mu:.6} ({:.3} mu_c): real fraction {mean:.4} +- {stderr:.4}",
            mu / mu_c
        );
    }
    w.flush()?;
    println!("table -> {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}
