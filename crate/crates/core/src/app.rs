//! Subcommand implementations behind the `acon` binary. Each returns the
//! process exit code; see the `EXIT_*` constants.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::constraint::max_volume_residual;
use crate::diagnostics::{
    check_h1_bound, check_hls_identity, energy_derivatives, gradient_check, DiagnosticsError,
};
use crate::dynamics::{step_count, RunError, Scheme, Simulation};
use crate::energy::PhaseState;
use crate::grid::{PeriodicGrid, ScalarField};
use crate::init::{generate, InitError};
use crate::io::{format_float, write_snapshot, IoError, LogWriter};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DYNAMICS: i32 = 4;

/// Largest points-per-axis used by `check`.
pub const CHECK_POINTS: usize = 16;
const GRADIENT_TOL: f64 = 1e-5;
const GRADIENT_STEP: f64 = 1e-5;
const GRADIENT_DIRECTIONS: usize = 10;
const HLS_TOL: f64 = 1e-10;
const INIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Replaces `[init] seed`.
    pub seed: Option<u64>,
    pub quiet: bool,
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Init(#[from] InitError),
    #[error(transparent)]
    Run(#[from] RunError),
}

impl AppError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Config(_) => "ConfigError",
            Self::Io(_) => "IoError",
            Self::Init(InitError::UnreachableTarget { .. }) => "UnreachableTarget",
            Self::Init(InitError::InvalidSpec(_)) => "ConfigError",
            Self::Init(InitError::Constraint(_)) => "ProjectionFailed",
            Self::Run(e) => e.source.name(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Init(InitError::InvalidSpec(_)) => EXIT_CONFIG,
            Self::Io(_) => EXIT_IO,
            Self::Init(_) | Self::Run(_) => EXIT_DYNAMICS,
        }
    }
}

fn report(err: &AppError) -> i32 {
    eprintln!("error: {}: {err}", err.name());
    err.exit_code()
}

fn load(path: &Path, opts: &Options) -> Result<RunConfig, AppError> {
    let src = fs::read_to_string(path).map_err(|e| IoError::at(path, e))?;
    let mut cfg = RunConfig::from_toml_str(&src)?;
    if let Some(seed) = opts.seed {
        cfg.init.seed = seed;
    }
    Ok(cfg)
}

fn output_dir(config_path: &Path) -> Result<PathBuf, AppError> {
    let base = config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let dir = RunConfig::output_dir(base);
    fs::create_dir_all(&dir).map_err(|e| IoError::at(&dir, e))?;
    Ok(dir)
}

fn initial_state(cfg: &RunConfig, grid: &PeriodicGrid) -> Result<PhaseState, AppError> {
    let params = cfg.params().map_err(|e| ConfigError {
        line: None,
        message: e.to_string(),
    })?;
    Ok(generate(&cfg.init_spec(), grid, &params)?)
}

fn config_grid(cfg: &RunConfig) -> Result<PeriodicGrid, AppError> {
    cfg.grid().map_err(|e| {
        AppError::Config(ConfigError {
            line: None,
            message: e.to_string(),
        })
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, AppError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| IoError::at(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| IoError::at(path, e))?))
}

/// `acon run`: integrate to the configured horizon, writing the CSV log and
/// snapshots (`snap_<step>.bin` every `snapshot_every` steps plus `final.bin`).
pub fn cmd_run(config_path: &Path, opts: &Options) -> i32 {
    match run_inner(config_path, opts) {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

fn run_inner(config_path: &Path, opts: &Options) -> Result<(), AppError> {
    let cfg = load(config_path, opts)?;
    let grid = config_grid(&cfg)?;
    let state = initial_state(&cfg, &grid)?;
    let out_dir = output_dir(config_path)?;
    let log_path = cfg.log_path(&out_dir);
    let snap_dir = cfg.snapshot_dir(&out_dir);
    let every = cfg.output.snapshot_every;
    let step_cfg = cfg.step_config();
    let steps = step_count(cfg.stepping.horizon, step_cfg.tau);

    let io_err = |e| AppError::Io(IoError::at(&log_path, e));
    let mut log = LogWriter::new(create(&log_path)?, cfg.output.precision).map_err(io_err)?;
    let snapshot = |step: usize, state: &PhaseState, name: Option<&str>| -> Result<(), AppError> {
        fs::create_dir_all(&snap_dir).map_err(|e| IoError::at(&snap_dir, e))?;
        let file = match name {
            Some(n) => snap_dir.join(n),
            None => snap_dir.join(format!("snap_{step:06}.bin")),
        };
        Ok(write_snapshot(&file, state)?)
    };
    if every > 0 {
        snapshot(0, &state, None)?;
    }

    let e0 = crate::energy::energy(&state).total;
    let mut sim = Simulation::new(state, step_cfg).map_err(|source| RunError { step: 0, source })?;
    let mut audit: f64 = 0.0;
    let mut max_res: f64 = 0.0;
    for _ in 0..steps {
        let r = match sim.advance() {
            Ok(r) => r,
            Err(e) => {
                log.flush().map_err(io_err)?;
                return Err(e.into());
            }
        };
        audit = audit.max(r.energy_after - r.energy_before);
        max_res = max_res.max(r.volume_residuals[0].abs().max(r.volume_residuals[1].abs()));
        log.row(sim.steps_done(), sim.time(), &r).map_err(io_err)?;
        if every > 0 && sim.steps_done() % every == 0 {
            snapshot(sim.steps_done(), sim.state(), None)?;
        }
    }
    log.flush().map_err(io_err)?;
    snapshot(steps, sim.state(), Some("final.bin"))?;

    let e1 = crate::energy::energy(sim.state()).total;
    log::info!("energy audit (largest increase per step): {audit:e}");
    if !opts.quiet {
        println!(
            "{} steps of {} (tau = {}): energy {} -> {}, largest energy increase {:e}, max volume residual {:e}",
            steps,
            step_cfg.scheme,
            step_cfg.tau,
            format_float(e0, 10),
            format_float(e1, 10),
            audit,
            max_res
        );
        println!("log: {}", log_path.display());
    }
    Ok(())
}

/// One row of the `check` table. `pass = None` means skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: Option<bool>,
    pub note: String,
}

/// Runs the diagnostics on the configured problem, shrunk to at most
/// [`CHECK_POINTS`] points per axis. `corrupt_gradient` perturbs the
/// variational derivative (negative control for the gradient check).
pub fn run_checks(cfg: &RunConfig, corrupt_gradient: bool) -> Result<Vec<CheckRow>, AppError> {
    let full = config_grid(cfg)?;
    let points: Vec<usize> = full.points().iter().map(|&n| n.min(CHECK_POINTS)).collect();
    let grid = PeriodicGrid::new(&points, full.half_lengths()).map_err(|e| ConfigError {
        line: None,
        message: e.to_string(),
    })?;
    let state = initial_state(cfg, &grid)?;
    let mut rows = Vec::new();

    let residual = max_volume_residual(&state);
    rows.push(CheckRow {
        name: "initial_volume_residual",
        lhs: residual,
        rhs: INIT_TOL,
        pass: Some(residual <= INIT_TOL),
        note: String::new(),
    });

    let derivative = |s: &PhaseState| {
        let mut d = energy_derivatives(s);
        if corrupt_gradient {
            d[0] = d[0].map(|v| 1.01 * v + 0.1);
        }
        d
    };
    let g = gradient_check(&state, GRADIENT_DIRECTIONS, GRADIENT_STEP, cfg.init.seed, derivative);
    rows.push(CheckRow {
        name: "gradient_vs_finite_difference",
        lhs: g.max_error,
        rhs: GRADIENT_TOL,
        pass: Some(g.max_error <= GRADIENT_TOL),
        note: format!("{} directions, h = {GRADIENT_STEP:e}", g.directions),
    });

    let omega = state.params().omega();
    for (i, name) in [(0, "hls_identity_phase1"), (1, "hls_identity_phase2")] {
        let w: ScalarField = state.phi(i).map(|v| crate::chem::f(v) - omega[i]);
        let (lhs, rhs) = check_hls_identity(&w);
        let ok = (lhs - rhs).abs() <= HLS_TOL * lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        rows.push(CheckRow {
            name,
            lhs,
            rhs,
            pass: Some(ok),
            note: String::new(),
        });
    }

    rows.push(match check_h1_bound(&state) {
        Ok(b) => CheckRow {
            name: "h1_bound",
            lhs: b.lhs,
            rhs: b.rhs,
            pass: Some(b.ok),
            note: String::new(),
        },
        Err(e @ DiagnosticsError::ConfigMismatch(_)) => CheckRow {
            name: "h1_bound",
            lhs: f64::NAN,
            rhs: f64::NAN,
            pass: None,
            note: format!("skipped ({}): {e}", e.name()),
        },
        Err(e) => CheckRow {
            name: "h1_bound",
            lhs: f64::NAN,
            rhs: f64::NAN,
            pass: Some(false),
            note: format!("{}: {e}", e.name()),
        },
    });
    Ok(rows)
}

/// `acon check`: prints `check, lhs, rhs, pass` and exits 0 iff nothing failed.
pub fn cmd_check(config_path: &Path, opts: &Options, corrupt_gradient: bool) -> i32 {
    let rows = match load(config_path, opts).and_then(|cfg| run_checks(&cfg, corrupt_gradient)) {
        Ok(rows) => rows,
        Err(e) => return report(&e),
    };
    println!("{:<32} {:>24} {:>24}  pass", "check", "lhs", "rhs");
    for r in &rows {
        let pass = match r.pass {
            Some(true) => "yes",
            Some(false) => "NO",
            None => "skipped",
        };
        let note = if r.note.is_empty() { String::new() } else { format!("  {}", r.note) };
        println!(
            "{:<32} {:>24} {:>24}  {pass}{note}",
            r.name,
            format_float(r.lhs, 12),
            format_float(r.rhs, 12)
        );
    }
    if rows.iter().any(|r| r.pass == Some(false)) {
        eprintln!("error: CheckFailed: at least one diagnostic failed");
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    }
}

/// Column labels: the scheme name, suffixed with its position when repeated.
fn labels(schemes: &[Scheme]) -> Vec<String> {
    schemes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if schemes.iter().filter(|t| *t == s).count() > 1 {
                format!("{s}_{}", i + 1)
            } else {
                s.to_string()
            }
        })
        .collect()
}

/// `acon compare`: runs `schemes` in lockstep from the same initial state
/// and writes `compare.csv` with per-scheme energies and residuals plus
/// pairwise L² distances.
pub fn cmd_compare(config_path: &Path, schemes: &[Scheme], opts: &Options) -> i32 {
    match compare_inner(config_path, schemes, opts) {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

fn compare_inner(config_path: &Path, schemes: &[Scheme], opts: &Options) -> Result<(), AppError> {
    if schemes.len() < 2 {
        return Err(ConfigError {
            line: None,
            message: format!("compare needs at least two schemes, got {}", schemes.len()),
        }
        .into());
    }
    let cfg = load(config_path, opts)?;
    let grid = config_grid(&cfg)?;
    let state = initial_state(&cfg, &grid)?;
    let out_dir = output_dir(config_path)?;
    let path = out_dir.join("compare.csv");
    let digits = cfg.output.precision;
    let base = cfg.step_config();
    let steps = step_count(cfg.stepping.horizon, base.tau);

    let mut sims = schemes
        .iter()
        .map(|&scheme| {
            let mut c = base;
            c.scheme = scheme;
            Simulation::new(state.clone(), c).map_err(|source| RunError { step: 0, source })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let names = labels(schemes);
    let pairs: Vec<(usize, usize)> = (0..sims.len())
        .flat_map(|a| (a + 1..sims.len()).map(move |b| (a, b)))
        .collect();
    let mut header = vec!["step".to_string(), "time".to_string()];
    for n in &names {
        header.extend([format!("{n}_energy"), format!("{n}_volres1"), format!("{n}_volres2")]);
    }
    for &(a, b) in &pairs {
        header.push(format!("dist_{}_{}", names[a], names[b]));
    }
    let mut out = create(&path)?;
    let io_err = |e| AppError::Io(IoError::at(&path, e));
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;

    let write_row = |out: &mut BufWriter<File>, sims: &[Simulation]| -> std::io::Result<Vec<f64>> {
        let mut cols = vec![sims[0].steps_done().to_string(), format_float(sims[0].time(), digits)];
        for s in sims {
            let r = s.state().volume_residuals();
            let e = crate::energy::energy(s.state()).total;
            cols.extend([e, r[0], r[1]].iter().map(|&v| format_float(v, digits)));
        }
        let dists: Vec<f64> = pairs
            .iter()
            .map(|&(a, b)| sims[a].state().distance(sims[b].state()))
            .collect();
        cols.extend(dists.iter().map(|&d| format_float(d, digits)));
        writeln!(out, "{}", cols.join(","))?;
        Ok(dists)
    };

    let mut dists = write_row(&mut out, &sims).map_err(io_err)?;
    for _ in 0..steps {
        // Schemes are independent; advance them side by side.
        let results: Vec<Result<(), RunError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = sims
                .iter_mut()
                .map(|sim| scope.spawn(move || sim.advance().map(|_| ())))
                .collect();
            handles.into_iter().map(|h| h.join().expect("stepper thread panicked")).collect()
        });
        for r in results {
            if let Err(e) = r {
                out.flush().map_err(io_err)?;
                return Err(e.into());
            }
        }
        dists = write_row(&mut out, &sims).map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;

    if !opts.quiet {
        for (&(a, b), d) in pairs.iter().zip(&dists) {
            println!("terminal L2 distance {} vs {}: {:e}", names[a], names[b], d);
        }
        println!("comparison: {}", path.display());
    }
    Ok(())
}
