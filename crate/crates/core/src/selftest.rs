//! Built-in oracle suite: fast closed-form checks of the quadrature, the
//! reaction-only limit, the blow-up-time estimator, and linear heat decay.
//! Every check compares the numerics against an independently known answer.

use std::sync::Arc;
use std::time::Instant;

use crate::blowup::fit_blowup_time;
use crate::error::Result;
use crate::integrator::{
    choose_dt, run_field_to_blowup, step_once_with, RunOptions, SeriesEntry, SolverParams,
};
use crate::mesh::{build_grid, integrate_gauss, Field, GridKind};
use crate::model::{Domain, DomainKind, FunctionSpec, ProblemSpec};

/// Outcome of one oracle check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Measured value, reference value, and the tolerance applied.
    pub detail: String,
}

/// Outcome of the whole suite.
#[derive(Clone, Debug)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
    pub elapsed_seconds: f64,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check_close(
    name: &'static str,
    measured: f64,
    reference: f64,
    rel_tol: f64,
) -> CheckResult {
    let scale = reference.abs().max(f64::MIN_POSITIVE);
    let rel = (measured - reference).abs() / scale;
    CheckResult {
        name,
        passed: rel <= rel_tol,
        detail: format!(
            "measured {:.12e}, reference {:.12e}, relative error {:.3e} (tolerance {:.1e})",
            measured, reference, rel, rel_tol
        ),
    }
}

fn fail(name: &'static str, message: String) -> CheckResult {
    CheckResult { name, passed: false, detail: message }
}

/// Gaussian quadrature oracle: the grid's trapezoid rule applied to
/// exp(-|y|^2/4) must reproduce the closed-form integral over the line
/// (2 sqrt(pi)) and over three-dimensional space ((4 pi)^{3/2}); the
/// truncation tail at radius 16 is far below the tolerance.
fn quadrature_checks(results: &mut Vec<CheckResult>) {
    let cases: [(&'static str, GridKind, u32, f64); 2] = [
        ("quadrature_gaussian_line", GridKind::Interval, 1, 2.0 * std::f64::consts::PI.sqrt()),
        (
            "quadrature_gaussian_space",
            GridKind::Radial,
            3,
            (4.0 * std::f64::consts::PI).powf(1.5),
        ),
    ];
    for (name, kind, dim, reference) in cases {
        match build_grid(kind, dim, 16.0, 2048) {
            Ok(grid) => {
                let ones = vec![1.0; grid.nodes.len()];
                let measured = integrate_gauss(&grid, &ones);
                results.push(check_close(name, measured, reference, 1e-6));
            }
            Err(e) => results.push(fail(name, format!("grid construction failed: {}", e))),
        }
    }
}

/// Reaction-only oracle: with diffusion switched off, every interior node
/// follows the scalar equation du/dt = V u^p, whose blow-up time from
/// amplitude u0 is u0^{1-p} / ((p-1) V). The fitted blow-up time of the
/// integrated trajectory must match to relative error 1e-6.
fn ode_limit_check(exponent: f64) -> CheckResult {
    let name: &'static str = if exponent == 2.0 { "ode_limit_p2" } else { "ode_limit_p3" };
    let amplitude: f64 = 2.0;
    let potential_value = 1.0;
    let spec = ProblemSpec {
        dim: 1,
        exponent,
        domain: Domain { kind: DomainKind::Interval, extent: 1.0 },
        potential: FunctionSpec::Constant { value: potential_value },
        profile: FunctionSpec::Constant { value: 1.0 },
        potential_floor: 1e-6,
    };
    let grid = match spec.solver_grid(8) {
        Ok(g) => Arc::new(g),
        Err(e) => return fail(name, format!("grid construction failed: {}", e)),
    };
    // Stop at 1e6 rather than the solver default 1e8: with p = 3 the
    // step sizes needed beyond that amplitude drop below the floating-point
    // resolution of the time variable, which would corrupt the tail fit.
    let params = SolverParams {
        reaction_safety: 0.0015,
        stop_threshold: 1e6,
        ..SolverParams::default()
    };
    let options = RunOptions { diffusion: false, ..RunOptions::default() };
    let reference =
        amplitude.powf(1.0 - exponent) / ((exponent - 1.0) * potential_value);
    // A spatially constant state is not an admissible Dirichlet profile, so
    // build the field directly; with diffusion off the interior nodes evolve
    // independently of the zeroed boundary.
    let mut initial = match Field::new(
        Arc::clone(&grid),
        vec![amplitude; grid.nodes.len()],
        0.0,
    ) {
        Ok(f) => f,
        Err(e) => return fail(name, format!("initial field invalid: {}", e)),
    };
    initial.impose_dirichlet();
    match run_field_to_blowup(&spec, &initial, &params, &options)
        .and_then(|trajectory| crate::blowup::estimate_blowup_time(&trajectory))
    {
        Ok(estimate) => check_close(name, estimate.value, reference, 1e-6),
        Err(e) => fail(name, format!("integration failed: {}", e)),
    }
}

/// Estimator exactness oracle: on a series following an exact power law,
/// the transformed fit is a straight line and the recovered blow-up time
/// must be exact to 1e-10.
fn estimator_check(
    name: &'static str,
    exponent: f64,
    blowup_time: f64,
    prefactor: f64,
) -> CheckResult {
    let rate = 1.0 / (exponent - 1.0);
    let samples = 400;
    let sup_lo = prefactor * blowup_time.powf(-rate);
    let series: Vec<SeriesEntry> = (0..samples)
        .map(|j| {
            let sup = sup_lo * 10f64.powf(4.0 * j as f64 / (samples - 1) as f64);
            let time = blowup_time - (prefactor / sup).powf(exponent - 1.0);
            SeriesEntry { time, sup, argmax: 0.0 }
        })
        .collect();
    match fit_blowup_time(&series, exponent) {
        Ok(estimate) => check_close(name, estimate.value, blowup_time, 1e-10),
        Err(e) => fail(name, format!("fit failed: {}", e)),
    }
}

/// Linear-heat oracle: with the reaction switched off, the first odd
/// Dirichlet eigenmode sin(pi x) on the interval (-1, 1) decays by exactly
/// exp(-pi^2 t); the discrete amplitude at t = 0.1 must match to 1e-4.
fn heat_decay_check() -> CheckResult {
    let name = "heat_decay";
    let spec = ProblemSpec {
        dim: 1,
        exponent: 2.0,
        domain: Domain { kind: DomainKind::Interval, extent: 1.0 },
        potential: FunctionSpec::Constant { value: 1.0 },
        profile: FunctionSpec::CosineCap,
        potential_floor: 1e-6,
    };
    let grid = match spec.solver_grid(512) {
        Ok(g) => Arc::new(g),
        Err(e) => return fail(name, format!("grid construction failed: {}", e)),
    };
    let values: Vec<f64> =
        grid.nodes.iter().map(|x| (std::f64::consts::PI * x).sin()).collect();
    let mut field = match Field::new(Arc::clone(&grid), values, 0.0) {
        Ok(f) => f,
        Err(e) => return fail(name, format!("initial field invalid: {}", e)),
    };
    field.impose_dirichlet();
    let params = SolverParams::default();
    let options = RunOptions { reaction: false, ..RunOptions::default() };
    let horizon = 0.1;
    let result: Result<()> = (|| {
        while field.time < horizon {
            let dt = choose_dt(&field, &spec, &params).min(horizon - field.time);
            field = step_once_with(&field, dt, &spec, &options)?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        return fail(name, format!("integration failed: {}", e));
    }
    let (sup, _) = field.max_abs();
    let reference = (-std::f64::consts::PI.powi(2) * horizon).exp();
    // The initial amplitude is exactly 1 at the nodes +-1/2, so the final
    // sup is directly the decay factor. Absolute comparison at tolerance
    // 1e-4 per the oracle contract.
    let error = (sup - reference).abs();
    CheckResult {
        name,
        passed: error <= 1e-4,
        detail: format!(
            "measured {:.12e}, reference {:.12e}, absolute error {:.3e} (tolerance 1.0e-4)",
            sup, reference, error
        ),
    }
}

/// Run the full oracle suite. Total runtime is a few seconds.
pub fn run_selftest() -> SelftestReport {
    let start = Instant::now();
    let mut checks = Vec::new();
    quadrature_checks(&mut checks);
    checks.push(ode_limit_check(2.0));
    checks.push(ode_limit_check(3.0));
    checks.push(estimator_check("estimator_exact_p2", 2.0, 1.0, 1.0));
    checks.push(estimator_check("estimator_exact_p3", 3.0, 0.5, 2.0));
    checks.push(heat_decay_check());
    SelftestReport { checks, elapsed_seconds: start.elapsed().as_secs_f64() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_oracle_suite_passes_quickly() {
        let report = run_selftest();
        for check in &report.checks {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
        assert_eq!(report.checks.len(), 7);
        assert!(
            report.elapsed_seconds < 10.0,
            "suite took {:.1} s",
            report.elapsed_seconds
        );
    }
}
