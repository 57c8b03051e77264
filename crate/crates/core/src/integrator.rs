//! Explicit time integration of u_t = lap(u) + V(x) |u|^(p-1) u.
//!
//! Method of lines with the second-order midpoint rule in time. The step size
//! follows two safety limits re-evaluated every step: the diffusion stability
//! bound cfl_safety * h^2 / (2 * dim_factor), and a reaction limit
//! reaction_safety / (p * max V * sup^(p-1)) that shrinks as the solution
//! grows. Near the stopping threshold an extra cap keeps at least 30 recorded
//! steps in the final decade of growth, which the blow-up-time fit needs.
//!
//! Every accepted step appends (t, sup|u|, argmax) to a dense series; full
//! spatial snapshots are kept each time sup|u| doubles, plus the final state.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Field, Grid, Stencil};
use crate::model::{validate_spec, ProblemSpec};

/// Tunable integration limits. The defaults are the ones every check in this
/// crate is calibrated against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    /// Fraction of the explicit diffusion stability limit to use (0, 1].
    pub cfl_safety: f64,
    /// Cap on the per-step relative reaction growth (divided by p).
    pub reaction_safety: f64,
    /// sup|u| value that counts as blow-up.
    pub stop_threshold: f64,
    /// Hard cap on the number of time steps.
    pub max_steps: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            cfl_safety: 0.4,
            reaction_safety: 0.05,
            stop_threshold: 1e8,
            max_steps: 50_000_000,
        }
    }
}

/// Smallest stopping threshold that still leaves a few decades of growth to
/// fit rates on.
pub const MIN_STOP_THRESHOLD: f64 = 1e4;

/// Per-step growth cap inside the final decade: ln(10)/36 guarantees more
/// than 30 steps per decade of sup growth.
const TAIL_GROWTH_CAP: f64 = core::f64::consts::LN_10 / 36.0;

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety must be in (0, 1], got {}", self.cfl_safety));
        }
        if !(self.reaction_safety > 0.0) || !self.reaction_safety.is_finite() {
            return bad(format!(
                "reaction_safety must be positive, got {}",
                self.reaction_safety
            ));
        }
        if !(self.stop_threshold >= MIN_STOP_THRESHOLD) {
            return bad(format!(
                "stop threshold must be at least {:e}, got {}",
                MIN_STOP_THRESHOLD, self.stop_threshold
            ));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        Ok(())
    }
}

/// Why an integration loop ended.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StopReason {
    /// sup|u| reached the stopping threshold: blow-up detected.
    Threshold,
    /// Step budget exhausted while the solution was still growing.
    MaxSteps,
    /// The state stopped being finite (step size too aggressive).
    NonFinite,
}

/// One recorded instant: time, sup|u|, and the coordinate attaining it.
#[derive(Clone, Copy, Debug)]
pub struct SeriesEntry {
    pub time: f64,
    pub sup: f64,
    pub argmax: f64,
}

/// Everything one run produces.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub spec: ProblemSpec,
    pub amplitude: f64,
    pub params: SolverParams,
    /// Full fields at sup-doubling times (plus initial, requested, and final).
    pub snapshots: Vec<Field>,
    /// Dense per-step record.
    pub series: Vec<SeriesEntry>,
    pub stop_reason: StopReason,
}

impl Trajectory {
    pub fn final_entry(&self) -> &SeriesEntry {
        self.series.last().expect("series is never empty")
    }

    pub fn final_snapshot(&self) -> &Field {
        self.snapshots.last().expect("snapshots are never empty")
    }

    /// Index of the first entry of the contiguous tail block whose sup stays
    /// within a factor 10 of the final one. A backward walk, not a binary
    /// search: sup histories may dip before they grow.
    pub fn final_decade_start(&self) -> usize {
        let cut = self.final_entry().sup / 10.0;
        let mut idx = self.series.len() - 1;
        while idx > 0 && self.series[idx - 1].sup >= cut {
            idx -= 1;
        }
        idx
    }
}

/// Integration switches used by tests and diagnostics; the default runs the
/// full equation.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub diffusion: bool,
    pub reaction: bool,
    /// Extra times (strictly increasing) at which to record snapshots; the
    /// stepper lands on each one exactly. Times never reached are ignored.
    pub snapshot_times: Vec<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { diffusion: true, reaction: true, snapshot_times: Vec::new() }
    }
}

/// Reaction power fast paths: |u|^(p-1) u with the two common exponents
/// special-cased (they dominate the run time of every sweep).
#[derive(Clone, Copy, PartialEq)]
enum PowPath {
    Square,
    Cube,
    General,
}

/// Precomputed per-run data: stencil, nodal potential, exponent path.
struct Engine {
    stencil: Stencil,
    potential: Vec<f64>,
    potential_max: f64,
    exponent: f64,
    path: PowPath,
    diffusion: bool,
    reaction: bool,
}

impl Engine {
    fn new(spec: &ProblemSpec, grid: &Grid, diffusion: bool, reaction: bool) -> Engine {
        let potential: Vec<f64> = grid.nodes.iter().map(|&x| spec.potential_at(x)).collect();
        let potential_max = potential.iter().cloned().fold(0.0_f64, f64::max);
        let path = if spec.exponent == 2.0 {
            PowPath::Square
        } else if spec.exponent == 3.0 {
            PowPath::Cube
        } else {
            PowPath::General
        };
        Engine {
            stencil: grid.laplacian_stencil(),
            potential,
            potential_max,
            exponent: spec.exponent,
            path,
            diffusion,
            reaction,
        }
    }

    /// Right-hand side lap(u) + V |u|^(p-1) u into `out`. Boundary rows stay
    /// zero because the stencil writes zero there and u vanishes there.
    fn rhs_into(&self, u: &[f64], out: &mut [f64]) {
        if self.diffusion {
            self.stencil.apply(u, out);
        } else {
            for o in out.iter_mut() {
                *o = 0.0;
            }
        }
        if self.reaction {
            let n = u.len();
            match self.path {
                PowPath::Square => {
                    for i in 0..n {
                        out[i] += self.potential[i] * u[i].abs() * u[i];
                    }
                }
                PowPath::Cube => {
                    for i in 0..n {
                        out[i] += self.potential[i] * u[i] * u[i] * u[i];
                    }
                }
                PowPath::General => {
                    let q = self.exponent - 1.0;
                    for i in 0..n {
                        out[i] += self.potential[i] * u[i].abs().powf(q) * u[i];
                    }
                }
            }
        }
    }

    /// One midpoint step of size `dt` from `u` into `out`. Returns
    /// (sup, argmax index, all-finite flag).
    fn step(
        &self,
        u: &[f64],
        dt: f64,
        work: &mut [f64],
        mid: &mut [f64],
        out: &mut [f64],
    ) -> (f64, usize, bool) {
        let n = u.len();
        self.rhs_into(u, work);
        let half = 0.5 * dt;
        for i in 0..n {
            mid[i] = u[i] + half * work[i];
        }
        self.rhs_into(mid, work);
        let mut sup = 0.0_f64;
        let mut argmax = 0usize;
        let mut acc = 0.0_f64;
        for i in 0..n {
            let v = u[i] + dt * work[i];
            out[i] = v;
            acc += v;
            let a = v.abs();
            if a > sup {
                sup = a;
                argmax = i;
            }
        }
        // acc goes NaN/inf as soon as any node does, even one the sup
        // comparison would skip (NaN compares false).
        (sup, argmax, acc.is_finite())
    }

    fn reaction_dt(&self, sup: f64, params: &SolverParams, in_tail: bool) -> f64 {
        if !self.reaction || sup <= 0.0 || self.potential_max <= 0.0 {
            return f64::INFINITY;
        }
        let growth_rate = self.potential_max * sup.powf(self.exponent - 1.0);
        let mut dt = params.reaction_safety / (self.exponent * growth_rate);
        if in_tail {
            // At least 30 recorded entries in the final decade of growth.
            dt = dt.min(TAIL_GROWTH_CAP / growth_rate);
        }
        dt
    }
}

/// Step limit for the current state: the smaller of the diffusion stability
/// bound and the reaction growth bound.
pub fn choose_dt(u: &Field, spec: &ProblemSpec, params: &SolverParams) -> f64 {
    let engine = Engine::new(spec, &u.grid, true, true);
    let dt_diff = params.cfl_safety * u.grid.h * u.grid.h / (2.0 * u.grid.dim_factor());
    let (sup, _) = u.max_abs();
    let in_tail = sup >= params.stop_threshold / 10.0;
    dt_diff.min(engine.reaction_dt(sup, params, in_tail))
}

/// One explicit midpoint step with optional term switches. The Dirichlet
/// boundary of the output is exactly zero.
pub fn step_once_with(
    u: &Field,
    dt: f64,
    spec: &ProblemSpec,
    options: &RunOptions,
) -> Result<Field> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {}", dt)));
    }
    let engine = Engine::new(spec, &u.grid, options.diffusion, options.reaction);
    let n = u.values.len();
    let mut work = vec![0.0; n];
    let mut mid = vec![0.0; n];
    let mut out = vec![0.0; n];
    let (_, _, finite) = engine.step(&u.values, dt, &mut work, &mut mid, &mut out);
    if !finite {
        return Err(Error::NanState { step: 0, time: u.time + dt });
    }
    let mut field = Field {
        grid: Arc::clone(&u.grid),
        values: out,
        time: u.time + dt,
    };
    field.impose_dirichlet();
    Ok(field)
}

/// [`step_once_with`] running the full equation.
pub fn step_once(u: &Field, dt: f64, spec: &ProblemSpec) -> Result<Field> {
    step_once_with(u, dt, spec, &RunOptions::default())
}

/// Integrate from an explicit initial field until the stopping threshold,
/// the step budget, or loss of finiteness. See [`run_to_blowup`] for the
/// standard amplitude * profile entry point.
pub fn run_field_to_blowup(
    spec: &ProblemSpec,
    initial: &Field,
    params: &SolverParams,
    options: &RunOptions,
) -> Result<Trajectory> {
    params.validate()?;
    if options.snapshot_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTime(
            "requested snapshot times must be strictly increasing".into(),
        ));
    }
    let grid = Arc::clone(&initial.grid);
    let engine = Engine::new(spec, &grid, options.diffusion, options.reaction);
    let dt_diffusion = if options.diffusion {
        params.cfl_safety * grid.h * grid.h / (2.0 * grid.dim_factor())
    } else {
        f64::INFINITY
    };

    let mut u = initial.values.clone();
    for i in grid.boundary_indices() {
        u[i] = 0.0;
    }
    let n = u.len();
    let mut work = vec![0.0; n];
    let mut mid = vec![0.0; n];
    let mut next = vec![0.0; n];

    let (sup0, arg0) = {
        let mut sup = 0.0_f64;
        let mut arg = 0usize;
        for (i, &v) in u.iter().enumerate() {
            if v.abs() > sup {
                sup = v.abs();
                arg = i;
            }
        }
        (sup, arg)
    };
    if sup0 <= 0.0 {
        return Err(Error::InvalidArgument("initial data is identically zero".into()));
    }

    let mut time = 0.0_f64;
    let mut sup = sup0;
    let mut series = vec![SeriesEntry { time, sup: sup0, argmax: grid.nodes[arg0] }];
    let mut snapshots = vec![Field {
        grid: Arc::clone(&grid),
        values: u.clone(),
        time,
    }];
    let mut next_doubling = 2.0 * sup0;
    let mut requested = options.snapshot_times.iter().cloned().peekable();
    let mut stop_reason = StopReason::MaxSteps;

    let tail_cut = params.stop_threshold / 10.0;
    let mut step_index: u64 = 0;
    while step_index < params.max_steps {
        step_index += 1;
        let mut dt = dt_diffusion.min(engine.reaction_dt(sup, params, sup >= tail_cut));
        if !dt.is_finite() {
            return Err(Error::InvalidArgument(
                "both diffusion and reaction are disabled: no step scale".into(),
            ));
        }
        // Land exactly on the next requested snapshot time.
        let mut take_requested = false;
        while let Some(&target) = requested.peek() {
            if target <= time {
                requested.next();
                continue;
            }
            if target <= time + dt {
                dt = target - time;
                take_requested = true;
            }
            break;
        }

        let (new_sup, argmax, finite) = engine.step(&u, dt, &mut work, &mut mid, &mut next);
        if !finite {
            stop_reason = StopReason::NonFinite;
            break;
        }
        std::mem::swap(&mut u, &mut next);
        time = if take_requested { *requested.peek().unwrap() } else { time + dt };
        if take_requested {
            requested.next();
        }
        sup = new_sup;
        series.push(SeriesEntry { time, sup, argmax: grid.nodes[argmax] });

        let mut want_snapshot = take_requested;
        while sup >= next_doubling {
            next_doubling *= 2.0;
            want_snapshot = true;
        }
        let stopping = sup >= params.stop_threshold;
        if want_snapshot || stopping {
            if snapshots.last().map(|s| s.time) != Some(time) {
                snapshots.push(Field { grid: Arc::clone(&grid), values: u.clone(), time });
            }
        }
        if stopping {
            stop_reason = StopReason::Threshold;
            break;
        }
    }

    if stop_reason == StopReason::MaxSteps {
        if sup < 10.0 * sup0 {
            return Err(Error::LikelyGlobalSolution { amplitude: sup0, u_max: sup });
        }
        // Still growing: keep the final state for inspection.
        if snapshots.last().map(|s| s.time) != Some(time) {
            snapshots.push(Field { grid: Arc::clone(&grid), values: u.clone(), time });
        }
    }

    Ok(Trajectory {
        spec: spec.clone(),
        amplitude: sup0,
        params: *params,
        snapshots,
        series,
        stop_reason,
    })
}

/// Integrate amplitude * profile to blow-up on `grid`. The spec is validated
/// first (a supercritical exponent is allowed; structural failures are not).
pub fn run_to_blowup(
    spec: &ProblemSpec,
    amplitude: f64,
    grid: &Arc<Grid>,
    params: &SolverParams,
) -> Result<Trajectory> {
    run_to_blowup_with(spec, amplitude, grid, params, &RunOptions::default())
}

/// [`run_to_blowup`] with explicit run options.
pub fn run_to_blowup_with(
    spec: &ProblemSpec,
    amplitude: f64,
    grid: &Arc<Grid>,
    params: &SolverParams,
    options: &RunOptions,
) -> Result<Trajectory> {
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "amplitude must be positive and finite, got {}",
            amplitude
        )));
    }
    validate_spec(spec, grid)?;
    let mut initial = Field::sample(grid, 0.0, |x| amplitude * spec.profile_at(x))?;
    initial.impose_dirichlet();
    let mut trajectory = run_field_to_blowup(spec, &initial, params, options)?;
    trajectory.amplitude = amplitude;
    Ok(trajectory)
}
