//! Command-line front end: argument parsing, subcommand dispatch, artifact
//! emission, and the exit-code contract (0 success, 1 check failure,
//! 2 usage or config error).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::blowup::analyze_trajectory;
use crate::config::{load_config, Config};
use crate::error::{Error, Result};
use crate::integrator::{run_to_blowup, run_to_blowup_with, RunOptions};
use crate::mesh::Grid;
use crate::model::validate_spec;
use crate::output;
use crate::selfsim::{energy_report, frame_grid, to_selfsimilar_frame, SelfSimilarFrame};
use crate::sweep::{check_peak_concentration, check_time_asymptotics, run_sweep};

/// Exit code for a completed command whose scientific checks all passed.
pub const EXIT_OK: i32 = 0;
/// Exit code for a completed command with a failed check or failed analysis.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit code for usage, config, or I/O problems.
pub const EXIT_USAGE: i32 = 2;

/// Environment variable that overrides the configured output directory
/// (the `--out` flag overrides both).
pub const OUT_DIR_VARIABLE: &str = "BLOWUP_LAB_OUT";

/// Relative tolerance applied to the final scaled-time margin in `sweep`.
const SCALED_TIME_TOLERANCE: f64 = 0.1;

#[derive(Parser)]
#[command(
    name = "blowup-lab",
    about = "Numerical laboratory for finite-time blow-up in a semilinear heat equation",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write its blow-up record.
    Run(CommonArgs),
    /// Sweep the initial amplitude and check the scaling trends.
    Sweep(CommonArgs),
    /// Rescale a stored run into self-similar frames and write the energy table.
    Energy(CommonArgs),
    /// Print a digest of the artifacts in the output directory.
    Report(CommonArgs),
    /// Run the built-in oracle suite.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and the environment.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Accepted for interface uniformity; the oracle suite does not read it.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Parse arguments (the first one is the program name) and run the chosen
/// command, returning the process exit code.
pub fn dispatch<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outcomes, not usage errors.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run(args) => run_command(&args, cmd_run),
        Command::Sweep(args) => run_command(&args, cmd_sweep),
        Command::Energy(args) => run_command(&args, cmd_energy),
        Command::Report(args) => run_command(&args, cmd_report),
        Command::Selftest(args) => cmd_selftest(&args),
    }
}

/// Load the config, resolve the output directory, delegate, and map errors
/// to the exit-code contract.
fn run_command(
    args: &CommonArgs,
    body: fn(&Config, &Path, &CommonArgs) -> Result<i32>,
) -> i32 {
    let config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_USAGE;
        }
    };
    let out_dir = resolve_out_dir(args, &config);
    match body(&config, &out_dir, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            exit_code_for(&e)
        }
    }
}

fn resolve_out_dir(args: &CommonArgs, config: &Config) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    if let Ok(dir) = std::env::var(OUT_DIR_VARIABLE) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(&config.output_dir)
}

/// Setup problems (bad config values, missing or unreadable files) exit 2;
/// failures of the science (no blow-up, unusable data) exit 1.
fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::Config { .. }
        | Error::Io(_)
        | Error::InvalidArgument(_)
        | Error::InvalidProblem(_)
        | Error::OutOfDomain { .. }
        | Error::UnsupportedMoment { .. } => EXIT_USAGE,
        Error::NanState { .. }
        | Error::LikelyGlobalSolution { .. }
        | Error::NotBlowingUp { .. }
        | Error::InsufficientData(_)
        | Error::AmbiguousLocation { .. }
        | Error::InvalidTime(_)
        | Error::EmptySweep(_)
        | Error::SupercriticalExponent { .. } => EXIT_CHECK_FAILED,
    }
}

fn solver_grid(config: &Config) -> Result<Arc<Grid>> {
    let grid = Arc::new(config.problem.solver_grid(config.solver_cells)?);
    let report = validate_spec(&config.problem, &grid)?;
    for hypothesis in report.hypotheses.iter().filter(|h| !h.passed) {
        println!("note: hypothesis `{}` not met: {}", hypothesis.name, hypothesis.detail);
    }
    Ok(grid)
}

fn cmd_run(config: &Config, out_dir: &Path, _args: &CommonArgs) -> Result<i32> {
    let grid = solver_grid(config)?;
    let trajectory =
        run_to_blowup(&config.problem, config.amplitude, &grid, &config.solver)?;
    let record = analyze_trajectory(&trajectory)?;
    let written = output::write_run_artifacts(
        out_dir,
        &trajectory,
        &record,
        &config.output_formats,
    )?;
    println!(
        "run: amplitude {} stopped at t = {:.6e} after {} series entries",
        config.amplitude,
        trajectory.final_entry().time,
        trajectory.series.len()
    );
    println!(
        "  blow-up time {:.12e} (uncertainty {:.2e}), location {:.6e}{}",
        record.blowup_time,
        record.time_uncertainty,
        record.location,
        if record.location_flagged { " (drifting)" } else { "" }
    );
    println!(
        "  rate exponent {:.4} (expected {:.4}), scaled-amplitude plateau {:.6}",
        record.rate_exponent,
        config.problem.scaling_exponent(),
        record.type_one_sup
    );
    for path in &written {
        println!("  wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(config: &Config, out_dir: &Path, args: &CommonArgs) -> Result<i32> {
    let grid = solver_grid(config)?;
    let workers = args.workers.unwrap_or(config.workers);
    let report = run_sweep(
        &config.problem,
        &grid,
        &config.solver,
        &config.sweep_amplitudes,
        workers,
    )?;
    for skipped in &report.skipped {
        println!("skipped amplitude {}: {}", skipped.amplitude, skipped.note);
    }
    let times = check_time_asymptotics(&report, SCALED_TIME_TOLERANCE)?;
    let concentration = if config.problem.is_subcritical() {
        Some(check_peak_concentration(&config.problem, &report)?)
    } else {
        println!(
            "note: p = {} is supercritical (critical exponent {:.4}); concentration checks skipped",
            config.problem.exponent,
            config.problem.critical_exponent()
        );
        None
    };
    let summary = output::build_summary(&report, &times, concentration.as_ref());
    let written =
        output::write_sweep_artifacts(out_dir, &report, &summary, &config.output_formats)?;

    println!(
        "sweep: {} amplitudes, target scaled time {:.9e} (time scale {:.9e})",
        report.rows.len(),
        report.target,
        report.time_scale
    );
    println!("  M        T*M^(p-1) margin      peak margin");
    for (index, row) in report.rows.iter().enumerate() {
        let peak = concentration
            .as_ref()
            .map(|c| format!("{:.6e}", c.margins[index]))
            .unwrap_or_else(|| "-".into());
        println!(
            "  {:<8} {:+.6e}       {}{}",
            row.amplitude,
            summary.margins2[index],
            peak,
            if row.location_flagged { "  (location drifting)" } else { "" }
        );
    }
    println!(
        "  checks: final margin {}, margin trend {}",
        verdict(summary.checks.final_margin_ok),
        verdict(summary.checks.trend_ok)
    );
    if let Some(c) = &concentration {
        println!(
            "  concentration: nonnegative {}, shrinking {}, locations {}{}",
            verdict(c.nonnegative_ok),
            verdict(c.shrinking_ok),
            verdict(c.locations_ok),
            c.fitted_decay_exponent
                .map(|e| format!(", fitted margin decay exponent {:.3}", e))
                .unwrap_or_default()
        );
    }
    for path in &written {
        println!("  wrote {}", path.display());
    }
    Ok(if summary.checks.all_ok() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// Log-time window for the energy pass. The late end keeps clear of three
/// floors: two estimated-time gaps above the last stored instant, a
/// relative 1e-8 of the blow-up time (where the time variable itself runs
/// out of floating-point resolution), and the zoom depth at which the
/// shrinking core width sqrt(T - t) falls under four solver cells (beyond
/// which frames would interpolate an unresolved peak). From there the
/// window spans two decades of amplitude growth, but never starts before
/// three quarters of the way to blow-up.
fn energy_window(
    config: &Config,
    record: &output::StoredRecord,
    solver_spacing: f64,
) -> Result<(f64, f64)> {
    let blowup_time = record.blowup_time;
    let gap_end = blowup_time - record.fit_window.1;
    if !(gap_end > 0.0) {
        return Err(Error::InvalidTime(format!(
            "stored fit window end {} is not below the stored blow-up time {}",
            record.fit_window.1, blowup_time
        )));
    }
    let resolved_width = 4.0 * solver_spacing;
    let tau_min = (2.0 * gap_end)
        .max(1e-8 * blowup_time)
        .max(resolved_width * resolved_width);
    let s_hi = -tau_min.ln();
    let span = 2.0 * (config.problem.exponent - 1.0) * std::f64::consts::LN_10;
    let s_lo = (s_hi - span).max(-(0.75 * blowup_time).ln());
    if !(s_lo < s_hi) {
        return Err(Error::InsufficientData(format!(
            "stored run leaves no usable log-time window (s range [{:.3}, {:.3}])",
            s_lo, s_hi
        )));
    }
    Ok((s_lo, s_hi))
}

fn cmd_energy(config: &Config, out_dir: &Path, _args: &CommonArgs) -> Result<i32> {
    let record = output::read_record(out_dir)?;
    let grid = solver_grid(config)?;
    let (s_lo, s_hi) = energy_window(config, &record, grid.h)?;
    let count = config.frame_count;
    let frame_times: Vec<f64> = (0..count)
        .map(|j| {
            let s = s_lo + (s_hi - s_lo) * j as f64 / (count - 1) as f64;
            record.blowup_time - (-s).exp()
        })
        .collect();
    let options = RunOptions { snapshot_times: frame_times.clone(), ..RunOptions::default() };
    let trajectory = run_to_blowup_with(
        &config.problem,
        config.amplitude,
        &grid,
        &config.solver,
        &options,
    )?;
    let y_grid = frame_grid(&config.problem, config.frame_extent, config.frame_cells)?;
    let mut frames: Vec<SelfSimilarFrame> = Vec::with_capacity(count);
    for &t in &frame_times {
        let snapshot = trajectory
            .snapshots
            .iter()
            .min_by(|a, b| {
                (a.time - t).abs().partial_cmp(&(b.time - t).abs()).unwrap()
            })
            .filter(|s| (s.time - t).abs() <= 1e-9 * record.blowup_time)
            .ok_or_else(|| {
                Error::InsufficientData(format!(
                    "no snapshot recorded at requested time {:.12e}",
                    t
                ))
            })?;
        frames.push(to_selfsimilar_frame(
            snapshot,
            &config.problem,
            record.location,
            record.blowup_time,
            &y_grid,
        )?);
    }
    let report = energy_report(&frames, &config.problem)?;
    let written = output::write_energy_artifacts(
        out_dir,
        &report,
        &frames,
        &config.moment_orders,
        &config.output_formats,
    )?;
    let first = report.frames.first().expect("at least three frames");
    let last = report.frames.last().expect("at least three frames");
    println!(
        "energy: {} frames over s in [{:.3}, {:.3}] about location {:.6e}",
        report.frames.len(),
        first.s,
        last.s,
        record.location
    );
    println!(
        "  energy {:.6e} -> {:.6e}, core deviation {:.3e} -> {:.3e}",
        first.energy, last.energy, first.core_deviation, last.core_deviation
    );
    if let Some(c) = report.pohozaev_coefficient {
        println!("  fitted radial-balance coefficient {:.6e}", c);
    }
    for path in &written {
        println!("  wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

fn cmd_report(_config: &Config, out_dir: &Path, _args: &CommonArgs) -> Result<i32> {
    let mut printed_any = false;
    if let Ok(record) = output::read_record(out_dir) {
        printed_any = true;
        println!("record.json:");
        println!(
            "  blow-up time {:.12e} +- {:.2e}, location {:.6e}",
            record.blowup_time, record.time_uncertainty, record.location
        );
        println!(
            "  rate exponent {:.4}, scaled-amplitude plateau {:.6}, fit window [{:.6e}, {:.6e}]",
            record.rate_exponent,
            record.type_one_sup,
            record.fit_window.0,
            record.fit_window.1
        );
    }
    if let Ok(summary) = output::read_summary(out_dir) {
        printed_any = true;
        println!("summary.json:");
        println!(
            "  time scale {:.9e}, target scaled time {:.9e}",
            summary.time_scale, summary.target
        );
        println!("  scaled-time margins: {:?}", summary.margins2);
        if !summary.margins3.is_empty() {
            println!("  peak margins: {:?}", summary.margins3);
        }
        if let Some(e) = summary.fitted_decay_exponent {
            println!("  fitted margin decay exponent: {:.3}", e);
        }
        println!(
            "  checks: final margin {}, trend {}{}",
            verdict(summary.checks.final_margin_ok),
            verdict(summary.checks.trend_ok),
            match (
                summary.checks.nonnegative_ok,
                summary.checks.shrinking_ok,
                summary.checks.locations_ok,
            ) {
                (Some(n), Some(s), Some(l)) => format!(
                    ", nonnegative {}, shrinking {}, locations {}",
                    verdict(n),
                    verdict(s),
                    verdict(l)
                ),
                _ => String::new(),
            }
        );
    }
    let energy_path = out_dir.join("energy.csv");
    if energy_path.exists() {
        let table = output::read_csv(&energy_path)?;
        printed_any = true;
        println!("energy.csv: {} frames", table.rows.len());
        if let (Some(first), Some(last)) = (table.rows.first(), table.rows.last()) {
            println!(
                "  s {:.3} -> {:.3}, energy {:.6e} -> {:.6e}, core deviation {:.3e} -> {:.3e}",
                first[0], last[0], first[1], last[1], first[10], last[10]
            );
        }
    }
    let trajectory_path = out_dir.join("trajectory.csv");
    if trajectory_path.exists() {
        let table = output::read_csv(&trajectory_path)?;
        printed_any = true;
        println!("trajectory.csv: {} series entries", table.rows.len());
    }
    if !printed_any {
        return Err(Error::Io(format!(
            "no artifacts found in {}; run `run`, `sweep`, or `energy` first",
            out_dir.display()
        )));
    }
    Ok(EXIT_OK)
}

fn cmd_selftest(args: &SelftestArgs) -> i32 {
    if let Some(path) = &args.config {
        // Validate for uniformity even though the suite does not use it.
        if let Err(e) = load_config(path) {
            eprintln!("error: {}", e);
            return EXIT_USAGE;
        }
    }
    let report = crate::selftest::run_selftest();
    for check in &report.checks {
        println!(
            "[{}] {}: {}",
            if check.passed { "ok" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    println!(
        "selftest: {}/{} checks passed in {:.2} s",
        report.checks.iter().filter(|c| c.passed).count(),
        report.checks.len(),
        report.elapsed_seconds
    );
    if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}
