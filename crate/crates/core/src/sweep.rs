//! Amplitude-sweep harness: integrate a family of initial amplitudes to
//! blow-up, tabulate the fitted blow-up data, and check the two asymptotic
//! trends — the scaled blow-up time approaching its amplitude-free limit,
//! and the blow-up point concentrating where the profile-weighted potential
//! peaks.

use std::sync::Arc;

use rayon::prelude::*;

use crate::blowup::analyze_trajectory;
use crate::error::{Error, Result};
use crate::integrator::{run_to_blowup, SolverParams};
use crate::mesh::Grid;
use crate::model::{blowup_time_scale, ProblemSpec};

/// One completed blow-up run in a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub amplitude: f64,
    pub blowup_time: f64,
    pub time_uncertainty: f64,
    /// Blow-up time scaled by amplitude^(p-1); tends to the target as the
    /// amplitude grows.
    pub scaled_time: f64,
    pub location: f64,
    /// profile^(p-1) * potential at the located blow-up point.
    pub weighted_potential_at_location: f64,
    pub rate_exponent: f64,
    /// True when the argmax drifted too much to certify the location.
    pub location_flagged: bool,
}

/// An amplitude that did not blow up within the step budget.
#[derive(Clone, Debug, PartialEq)]
pub struct SkippedAmplitude {
    pub amplitude: f64,
    pub note: String,
}

/// Results of a whole sweep, with the scale constants the trends are
/// measured against.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    /// One row per blowing-up amplitude, ascending.
    pub rows: Vec<SweepRow>,
    /// Amplitudes skipped as likely-global solutions.
    pub skipped: Vec<SkippedAmplitude>,
    /// Reciprocal of the peak weighted potential.
    pub time_scale: f64,
    /// Limit of the scaled blow-up time: time_scale / (p - 1).
    pub target: f64,
    /// Where the weighted potential peaks.
    pub maximizer: f64,
    /// Solver grid spacing, for location tolerances.
    pub grid_h: f64,
}

/// Run the solver once per amplitude (in a worker pool of the given size)
/// and assemble the report. Row order and content are deterministic for
/// fixed inputs regardless of worker count. Amplitudes whose runs exhaust
/// the step budget without growing are recorded as skipped; any other
/// failure aborts the sweep.
pub fn run_sweep(
    spec: &ProblemSpec,
    grid: &Arc<Grid>,
    params: &SolverParams,
    amplitudes: &[f64],
    workers: usize,
) -> Result<SweepReport> {
    if amplitudes.is_empty() {
        return Err(Error::EmptySweep("no amplitudes requested".into()));
    }
    if workers == 0 {
        return Err(Error::InvalidArgument("worker count must be at least 1".into()));
    }
    for pair in amplitudes.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::InvalidArgument(format!(
                "amplitudes must be strictly ascending, got {} before {}",
                pair[0], pair[1]
            )));
        }
    }
    if !(amplitudes[0] > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "amplitudes must be positive, got {}",
            amplitudes[0]
        )));
    }
    let (time_scale, maximizer) = blowup_time_scale(spec, grid)?;
    let exponent_gap = spec.exponent - 1.0;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {}", e)))?;
    let outcomes: Vec<Result<SweepRow>> = pool.install(|| {
        amplitudes
            .par_iter()
            .map(|&amplitude| {
                let trajectory = run_to_blowup(spec, amplitude, grid, params)?;
                let record = analyze_trajectory(&trajectory)?;
                Ok(SweepRow {
                    amplitude,
                    blowup_time: record.blowup_time,
                    time_uncertainty: record.time_uncertainty,
                    scaled_time: record.blowup_time * amplitude.powf(exponent_gap),
                    location: record.location,
                    weighted_potential_at_location: spec.weighted_potential_at(record.location),
                    rate_exponent: record.rate_exponent,
                    location_flagged: record.location_flagged,
                })
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (outcome, &amplitude) in outcomes.into_iter().zip(amplitudes) {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e @ Error::LikelyGlobalSolution { .. }) => {
                skipped.push(SkippedAmplitude { amplitude, note: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptySweep(format!(
            "none of the {} amplitudes blew up within the step budget",
            amplitudes.len()
        )));
    }
    Ok(SweepReport {
        rows,
        skipped,
        time_scale,
        target: time_scale / exponent_gap,
        maximizer,
        grid_h: grid.h,
    })
}

/// Outcome of the scaled-time trend check.
#[derive(Clone, Debug)]
pub struct TimeAsymptoticsCheck {
    /// scaled_time − target, per row.
    pub margins: Vec<f64>,
    /// |margin| at the largest amplitude within the given relative
    /// tolerance of the target.
    pub final_margin_ok: bool,
    /// |margin| non-increasing across the last three rows, within the
    /// fit-uncertainty noise of each row.
    pub trend_ok: bool,
}

/// Check that the scaled blow-up time approaches its limit: the margin at
/// the largest amplitude is small, and the margins shrink across the last
/// three rows (within the scaled time-fit uncertainties).
pub fn check_time_asymptotics(report: &SweepReport, tol_rel: f64) -> Result<TimeAsymptoticsCheck> {
    if report.rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} sweep rows; the trend check needs 3",
            report.rows.len()
        )));
    }
    let margins: Vec<f64> = report.rows.iter().map(|r| r.scaled_time - report.target).collect();
    let final_margin_ok = margins.last().unwrap().abs() <= tol_rel * report.target;
    // scaled_time / blowup_time is exactly the amplitude power that scales
    // the row, so it converts the time-fit uncertainty to margin units.
    let scaled_noise: Vec<f64> = report
        .rows
        .iter()
        .map(|r| r.time_uncertainty * (r.scaled_time / r.blowup_time))
        .collect();
    let last3 = margins.len() - 3;
    let mut trend_ok = true;
    for j in last3..margins.len() - 1 {
        let slack = scaled_noise[j] + scaled_noise[j + 1];
        if margins[j + 1].abs() > margins[j].abs() + slack {
            trend_ok = false;
        }
    }
    Ok(TimeAsymptoticsCheck { margins, final_margin_ok, trend_ok })
}

/// Outcome of the blow-up-point concentration check.
#[derive(Clone, Debug)]
pub struct PeakConcentrationCheck {
    /// 1/time_scale − weighted potential at the located point, per row;
    /// nonnegative and shrinking when the point concentrates at the peak.
    pub margins: Vec<f64>,
    /// Every margin at least the small negative slack allowed for grid
    /// resolution of the maximizer.
    pub nonnegative_ok: bool,
    /// Margin at the largest amplitude strictly below the margin at the
    /// smallest.
    pub shrinking_ok: bool,
    /// Log-log fitted decay exponent of margin against amplitude, over rows
    /// with positive margins; None when fewer than two such rows.
    pub fitted_decay_exponent: Option<f64>,
    /// The located point at the largest amplitude sits within five grid
    /// spacings of the maximizer (smaller amplitudes concentrate more
    /// loosely and are not constrained).
    pub locations_ok: bool,
}

/// Predicted decay exponent of the concentration margin in the amplitude:
/// (p − 1) / 4.
pub fn predicted_margin_decay(spec: &ProblemSpec) -> f64 {
    (spec.exponent - 1.0) / 4.0
}

/// Check that blow-up concentrates where the weighted potential peaks. Only
/// meaningful for subcritical exponents; supercritical specs are rejected.
pub fn check_peak_concentration(
    spec: &ProblemSpec,
    report: &SweepReport,
) -> Result<PeakConcentrationCheck> {
    if !spec.is_subcritical() {
        return Err(Error::SupercriticalExponent {
            p: spec.exponent,
            critical: spec.critical_exponent(),
        });
    }
    if report.rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} sweep rows; the concentration check needs 3",
            report.rows.len()
        )));
    }
    let peak = 1.0 / report.time_scale;
    let margins: Vec<f64> =
        report.rows.iter().map(|r| peak - r.weighted_potential_at_location).collect();
    // The maximizer itself is resolved on a refined scan; allow a sliver of
    // negative margin for interpolation of the potential between nodes.
    let slack = 1e-4 * peak;
    let nonnegative_ok = margins.iter().all(|&m| m >= -slack);
    let shrinking_ok = margins.last().unwrap() < margins.first().unwrap()
        || margins.iter().all(|&m| m.abs() <= slack);
    let fit: Vec<(f64, f64)> = report
        .rows
        .iter()
        .zip(&margins)
        .filter(|(_, &m)| m > 0.0)
        .map(|(r, &m)| (r.amplitude.ln(), m.ln()))
        .collect();
    let fitted_decay_exponent = if fit.len() >= 2 {
        let n = fit.len() as f64;
        let xm = fit.iter().map(|f| f.0).sum::<f64>() / n;
        let ym = fit.iter().map(|f| f.1).sum::<f64>() / n;
        let sxx: f64 = fit.iter().map(|f| (f.0 - xm) * (f.0 - xm)).sum();
        let sxy: f64 = fit.iter().map(|f| (f.0 - xm) * (f.1 - ym)).sum();
        Some(-sxy / sxx)
    } else {
        None
    };
    let locations_ok = report
        .rows
        .last()
        .map(|r| (r.location - report.maximizer).abs() <= 5.0 * report.grid_h)
        .unwrap_or(false);
    Ok(PeakConcentrationCheck {
        margins,
        nonnegative_ok,
        shrinking_ok,
        fitted_decay_exponent,
        locations_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, GridKind};
    use crate::model::{Domain, DomainKind, FunctionSpec};

    fn interval_spec() -> ProblemSpec {
        ProblemSpec {
            dim: 1,
            exponent: 2.0,
            domain: Domain { kind: DomainKind::Interval, extent: 1.0 },
            potential: FunctionSpec::Constant { value: 1.0 },
            profile: FunctionSpec::CosineCap,
            potential_floor: 0.5,
        }
    }

    fn quick_params() -> SolverParams {
        SolverParams { max_steps: 200_000, ..Default::default() }
    }

    /// Hand-built report with scaled_time = target + 1/M: margins halve as
    /// the amplitude doubles.
    fn synthetic_report(target: f64, margin_of: impl Fn(f64) -> f64) -> SweepReport {
        let amplitudes = [8.0, 16.0, 32.0, 64.0];
        let rows: Vec<SweepRow> = amplitudes
            .iter()
            .map(|&m| SweepRow {
                amplitude: m,
                blowup_time: (target + margin_of(m)) / m,
                time_uncertainty: 1e-12,
                scaled_time: target + margin_of(m),
                location: 0.0,
                weighted_potential_at_location: 1.0,
                rate_exponent: 1.0,
                location_flagged: false,
            })
            .collect();
        SweepReport {
            rows,
            skipped: Vec::new(),
            time_scale: 1.0,
            target,
            maximizer: 0.0,
            grid_h: 1e-3,
        }
    }

    #[test]
    fn halving_margins_pass_the_time_trend() {
        let report = synthetic_report(0.5, |m| 1.0 / m);
        let check = check_time_asymptotics(&report, 0.1).unwrap();
        assert!(check.final_margin_ok, "final margin {:?}", check.margins.last());
        assert!(check.trend_ok);
        for (a, b) in check.margins.iter().zip(check.margins.iter().skip(1)) {
            assert!(
                (a - 2.0 * b).abs() < 1e-12,
                "margins should halve: {} then {}",
                a,
                b
            );
        }
    }

    #[test]
    fn growing_margins_fail_the_time_trend() {
        let report = synthetic_report(0.5, |m| 1e-3 * m);
        let check = check_time_asymptotics(&report, 0.1).unwrap();
        assert!(!check.trend_ok, "margins grow with amplitude; trend must fail");
    }

    #[test]
    fn exact_rows_give_zero_margins() {
        let report = synthetic_report(0.5, |_| 0.0);
        let check = check_time_asymptotics(&report, 0.01).unwrap();
        assert!(check.final_margin_ok && check.trend_ok);
        assert!(check.margins.iter().all(|&m| m == 0.0));
    }

    /// Concentration margins with a known power-law decay are refitted to
    /// the same exponent.
    #[test]
    fn concentration_fit_recovers_the_decay_exponent() {
        let spec = interval_spec();
        let decay = predicted_margin_decay(&spec); // 1/4 for p = 2
        assert!((decay - 0.25).abs() < 1e-15);
        let mut report = synthetic_report(1.0, |_| 0.0);
        for row in &mut report.rows {
            row.weighted_potential_at_location = 1.0 - 0.3 * row.amplitude.powf(-decay);
        }
        let check = check_peak_concentration(&spec, &report).unwrap();
        let fitted = check.fitted_decay_exponent.expect("positive margins must fit");
        assert!(
            (fitted - decay).abs() <= 1e-6,
            "fitted {} vs predicted {}",
            fitted,
            decay
        );
        assert!(check.nonnegative_ok && check.shrinking_ok && check.locations_ok);
        // Dropping the largest amplitude keeps the fit meaningful.
        report.rows.pop();
        let shorter = check_peak_concentration(&spec, &report).unwrap();
        let refitted = shorter.fitted_decay_exponent.expect("three rows still fit");
        assert!(refitted > 0.0, "refitted exponent {} should stay positive", refitted);
    }

    #[test]
    fn concentration_check_rejects_supercritical_exponents() {
        let mut spec = interval_spec();
        spec.dim = 3;
        spec.domain.kind = DomainKind::Ball;
        spec.exponent = 6.0; // critical is 5 in three dimensions
        let report = synthetic_report(0.5, |m| 1.0 / m);
        match check_peak_concentration(&spec, &report) {
            Err(Error::SupercriticalExponent { .. }) => {}
            other => panic!("expected supercritical rejection, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn negative_margins_beyond_slack_fail_the_sign_check() {
        let spec = interval_spec();
        let mut report = synthetic_report(1.0, |_| 0.0);
        for row in &mut report.rows {
            row.weighted_potential_at_location = 1.01; // above the peak: impossible
        }
        let check = check_peak_concentration(&spec, &report).unwrap();
        assert!(!check.nonnegative_ok);
    }

    #[test]
    fn sweep_rejects_bad_amplitude_lists() {
        let spec = interval_spec();
        let grid = Arc::new(spec.solver_grid(64).unwrap());
        let params = quick_params();
        assert!(run_sweep(&spec, &grid, &params, &[], 2).is_err(), "empty list");
        assert!(
            run_sweep(&spec, &grid, &params, &[16.0, 8.0], 2).is_err(),
            "descending list"
        );
        assert!(
            run_sweep(&spec, &grid, &params, &[-1.0, 8.0], 2).is_err(),
            "negative amplitude"
        );
        assert!(
            run_sweep(&spec, &grid, &params, &[8.0], 0).is_err(),
            "zero workers"
        );
    }

    #[test]
    fn sweep_is_deterministic_across_worker_counts() {
        let spec = interval_spec();
        let grid = Arc::new(spec.solver_grid(64).unwrap());
        let params = quick_params();
        let amplitudes = [30.0, 40.0];
        let serial = run_sweep(&spec, &grid, &params, &amplitudes, 1).unwrap();
        let parallel = run_sweep(&spec, &grid, &params, &amplitudes, 2).unwrap();
        let again = run_sweep(&spec, &grid, &params, &amplitudes, 2).unwrap();
        assert_eq!(serial, parallel, "worker count must not change the report");
        assert_eq!(parallel, again, "repeat runs must be identical");
        assert_eq!(serial.rows.len(), 2);
        // Sampled potential at the located point can never beat the peak.
        for row in &serial.rows {
            assert!(
                row.weighted_potential_at_location <= 1.0 / serial.time_scale + 1e-9,
                "weighted potential {} exceeds the peak {}",
                row.weighted_potential_at_location,
                1.0 / serial.time_scale
            );
        }
    }

    #[test]
    fn tiny_amplitudes_are_skipped_and_alone_empty_the_sweep() {
        let spec = interval_spec();
        let grid = Arc::new(spec.solver_grid(64).unwrap());
        let params = SolverParams { max_steps: 20_000, ..Default::default() };
        let report = run_sweep(&spec, &grid, &params, &[1e-6, 30.0], 2).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].amplitude, 1e-6);
        match run_sweep(&spec, &grid, &params, &[1e-6], 1) {
            Err(Error::EmptySweep(_)) => {}
            other => panic!("expected empty sweep, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn report_carries_the_scale_constants() {
        let spec = interval_spec();
        let grid = Arc::new(build_grid(GridKind::Interval, 1, 1.0, 64).unwrap());
        let params = quick_params();
        let report = run_sweep(&spec, &grid, &params, &[30.0], 1).unwrap();
        // Constant potential, peak profile 1 at the center: scale is 1.
        assert!((report.time_scale - 1.0).abs() < 1e-9);
        assert!((report.target - 1.0).abs() < 1e-9);
        assert!(report.maximizer.abs() < 1e-9);
        assert_eq!(report.grid_h, grid.h);
    }
}
