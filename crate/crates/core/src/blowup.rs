//! Post-processing of a blow-up trajectory: the blow-up time and its
//! uncertainty, the blow-up location, the singular rate, the scale-invariant
//! sup statistic, a proxy for the blow-up set, and the concentration-of-mass
//! diagnostic on a fixed ball.
//!
//! The time estimate rests on the transform sup^(1-p), which is asymptotically
//! linear in t for rate-(T-t)^(-1/(p-1)) blow-up: a least-squares line through
//! the final decade of growth crosses zero at the blow-up time. Everything
//! else reuses that estimate.

use crate::error::{Error, Result};
use crate::integrator::{SeriesEntry, StopReason, Trajectory};
use crate::mesh::{gradient_sq, integrate, unit_sphere_area};
use crate::model::DomainKind;

/// Fewest series entries the final decade must hold before a time fit is
/// attempted.
pub const MIN_TAIL_SAMPLES: usize = 30;

/// Fitted blow-up time with an uncertainty band and the time window used.
#[derive(Clone, Copy, Debug)]
pub struct TimeEstimate {
    /// Root of the fitted sup^(1-p) line: the blow-up time.
    pub value: f64,
    /// Residual envelope over the final two decades, divided by the slope:
    /// how far the crossing could plausibly move.
    pub uncertainty: f64,
    /// (first, last) time of the fitted window.
    pub fit_window: (f64, f64),
}

/// Start index of the contiguous tail whose sup stays within `factor` of the
/// final sup.
fn tail_start(series: &[SeriesEntry], factor: f64) -> usize {
    let cut = series.last().unwrap().sup / factor;
    let mut idx = series.len() - 1;
    while idx > 0 && series[idx - 1].sup >= cut {
        idx -= 1;
    }
    idx
}

/// Least-squares line through (t, z), centered for conditioning.
/// Returns (t_mean, z_mean, slope).
fn centered_line(samples: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let t_mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let z_mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stz = 0.0;
    for &(t, z) in samples {
        let dt = t - t_mean;
        stt += dt * dt;
        stz += dt * (z - z_mean);
    }
    (t_mean, z_mean, stz / stt)
}

/// Fit the blow-up time from a sup series: transform to sup^(1-p), fit a line
/// over the final decade of growth, return its zero crossing. The uncertainty
/// is the residual envelope of that line over the final two decades.
pub fn fit_blowup_time(series: &[SeriesEntry], exponent: f64) -> Result<TimeEstimate> {
    let start = tail_start(series, 10.0);
    let tail = &series[start..];
    if tail.len() < MIN_TAIL_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} entries in the final decade of growth, need {}",
            tail.len(),
            MIN_TAIL_SAMPLES
        )));
    }
    let q = 1.0 - exponent;
    let fit: Vec<(f64, f64)> = tail.iter().map(|e| (e.time, e.sup.powf(q))).collect();
    let (t_mean, z_mean, slope) = centered_line(&fit);
    if !(slope < 0.0) {
        return Err(Error::NotBlowingUp { slope });
    }
    let value = t_mean - z_mean / slope;
    let t_last = series.last().unwrap().time;
    if !(value > t_last) || !value.is_finite() {
        return Err(Error::InsufficientData(format!(
            "fitted blow-up time {} does not lie beyond the data (last t = {})",
            value, t_last
        )));
    }
    // Envelope over the wider two-decade tail measures how non-linear the
    // transform still is; pure-shift errors the line absorbs are invisible to
    // it, so this is an optimistic but honest band.
    let wide_start = tail_start(series, 100.0);
    let mut envelope = 0.0_f64;
    for e in &series[wide_start..] {
        let residual = e.sup.powf(q) - (z_mean + slope * (e.time - t_mean));
        envelope = envelope.max(residual.abs());
    }
    Ok(TimeEstimate {
        value,
        uncertainty: envelope / slope.abs(),
        fit_window: (tail[0].time, t_last),
    })
}

/// Blow-up time of a threshold-terminated trajectory.
pub fn estimate_blowup_time(trajectory: &Trajectory) -> Result<TimeEstimate> {
    if trajectory.stop_reason != StopReason::Threshold {
        return Err(Error::InsufficientData(format!(
            "trajectory stopped with {:?}, not at the blow-up threshold",
            trajectory.stop_reason
        )));
    }
    fit_blowup_time(&trajectory.series, trajectory.spec.exponent)
}

/// Blow-up location: the final argmax, cross-checked against the argmax
/// drift over the final decade. A drift beyond 10 grid spacings is an
/// ambiguous location; radial problems report the radius.
pub fn locate_blowup_point(trajectory: &Trajectory) -> Result<f64> {
    if trajectory.stop_reason != StopReason::Threshold {
        return Err(Error::InsufficientData(
            "location is only meaningful for threshold-terminated runs".into(),
        ));
    }
    let series = &trajectory.series;
    let location = series.last().unwrap().argmax;
    let start = tail_start(series, 10.0);
    let mut drift = 0.0_f64;
    for e in &series[start..] {
        drift = drift.max((e.argmax - location).abs());
    }
    let h = trajectory.final_snapshot().grid.h;
    if drift > 10.0 * h {
        return Err(Error::AmbiguousLocation { drift, spacing: h });
    }
    Ok(location)
}

/// Fit the singular-rate exponent: the slope of log sup against
/// -log(T - t) over the window sup in [threshold/1000, threshold/10].
pub fn fit_rate_exponent(trajectory: &Trajectory, blowup_time: f64) -> Result<f64> {
    let t_last = trajectory.final_entry().time;
    if !(blowup_time > t_last) {
        return Err(Error::InvalidTime(format!(
            "blow-up time {} must exceed the last sample time {}",
            blowup_time, t_last
        )));
    }
    let stop = trajectory.params.stop_threshold;
    let (lo, hi) = (stop / 1e3, stop / 10.0);
    let fit: Vec<(f64, f64)> = trajectory
        .series
        .iter()
        .filter(|e| e.sup >= lo && e.sup <= hi)
        .map(|e| (-(blowup_time - e.time).ln(), e.sup.ln()))
        .collect();
    if fit.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} samples in the rate-fit window [{:e}, {:e}]",
            fit.len(),
            lo,
            hi
        )));
    }
    let (_, _, slope) = centered_line(&fit);
    Ok(slope)
}

/// Largest value of (T - t)^(1/(p-1)) * sup|u| along the trajectory. Finite
/// and plateauing means the singular rate is the self-similar one.
pub fn type_one_sup(trajectory: &Trajectory, blowup_time: f64) -> Result<f64> {
    let t_last = trajectory.final_entry().time;
    if !(blowup_time > t_last) {
        return Err(Error::InvalidTime(format!(
            "blow-up time {} must exceed the last sample time {}",
            blowup_time, t_last
        )));
    }
    let beta = trajectory.spec.scaling_exponent();
    let mut sup = 0.0_f64;
    for e in &trajectory.series {
        sup = sup.max((blowup_time - e.time).powf(beta) * e.sup);
    }
    Ok(sup)
}

/// Overall maximum of the scale-invariant statistic divided by its maximum
/// over the final decade. Near 1 means the statistic has plateaued (no early
/// transient dominates).
pub fn type_one_plateau_ratio(trajectory: &Trajectory, blowup_time: f64) -> Result<f64> {
    let overall = type_one_sup(trajectory, blowup_time)?;
    let beta = trajectory.spec.scaling_exponent();
    let start = tail_start(&trajectory.series, 10.0);
    let mut tail_sup = 0.0_f64;
    for e in &trajectory.series[start..] {
        tail_sup = tail_sup.max((blowup_time - e.time).powf(beta) * e.sup);
    }
    if tail_sup <= 0.0 {
        return Err(Error::InsufficientData("empty tail for the plateau ratio".into()));
    }
    Ok(overall / tail_sup)
}

/// Grid points still carrying a definite fraction of the singular amplitude
/// in the final frame: where (T - t_final)^(1/(p-1)) u exceeds
/// `threshold` times the scale-invariant sup.
pub fn blowup_set_proxy(
    trajectory: &Trajectory,
    blowup_time: f64,
    threshold: f64,
) -> Result<Vec<f64>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "proxy threshold must be in (0, 1], got {}",
            threshold
        )));
    }
    let overall = type_one_sup(trajectory, blowup_time)?;
    let frame = trajectory.final_snapshot();
    let beta = trajectory.spec.scaling_exponent();
    let scale = (blowup_time - frame.time).powf(beta);
    let cut = threshold * overall;
    Ok(frame
        .grid
        .nodes
        .iter()
        .zip(&frame.values)
        .filter(|(_, &u)| scale * u.abs() >= cut)
        .map(|(&x, _)| x)
        .collect())
}

/// One sample of the ball-concentration diagnostic.
#[derive(Clone, Copy, Debug)]
pub struct ConcentrationSample {
    pub time: f64,
    /// Half the squared mass in the ball.
    pub mass: f64,
    /// Frozen-coefficient energy on the ball.
    pub energy: f64,
    /// mass' - ((p+1)/(p-1)) * C * mass^((1+p)/2) with the closed-form
    /// constant C; nonnegative once concentration sets in.
    pub defect: f64,
}

/// The closed-form constant in the concentration inequality:
/// ((p-1)/(p+1)) * v_floor * |B|^((1-p)/2) * 2^((1-p)/2).
pub fn concentration_constant(exponent: f64, v_floor: f64, ball_volume: f64) -> f64 {
    let q = (1.0 - exponent) / 2.0;
    (exponent - 1.0) / (exponent + 1.0) * v_floor * ball_volume.powf(q) * 2.0_f64.powf(q)
}

/// Track mass concentration on the fixed ball B(center, delta) across the
/// stored snapshots. Needs at least three snapshots (the derivative is a
/// centered difference on the nonuniform snapshot times); endpoints are
/// dropped. Nodes are binned whole: align `delta` with the grid for clean
/// quadrature.
pub fn ball_concentration_diagnostic(
    trajectory: &Trajectory,
    center: f64,
    delta: f64,
    v_floor: f64,
) -> Result<Vec<ConcentrationSample>> {
    let spec = &trajectory.spec;
    let domain = &spec.domain;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {}", delta)));
    }
    if domain.kind == DomainKind::Ball && center != 0.0 {
        return Err(Error::InvalidArgument(
            "radial runs only support balls centered at the origin".into(),
        ));
    }
    let inside = match domain.kind {
        DomainKind::Interval => center - delta >= -domain.extent && center + delta <= domain.extent,
        DomainKind::Ball => delta <= domain.extent,
    };
    if !inside {
        return Err(Error::InvalidArgument(format!(
            "ball of radius {} at {} sticks out of the domain",
            delta, center
        )));
    }
    if trajectory.snapshots.len() < 3 {
        return Err(Error::InsufficientData(
            "need at least three snapshots for a time derivative".into(),
        ));
    }
    let grid = &trajectory.snapshots[0].grid;
    let in_ball: Vec<bool> = grid.nodes.iter().map(|&x| (x - center).abs() <= delta).collect();
    let p = spec.exponent;

    let ball_volume = match domain.kind {
        DomainKind::Interval => 2.0 * delta,
        DomainKind::Ball => {
            unit_sphere_area(spec.dim) * delta.powi(spec.dim as i32) / spec.dim as f64
        }
    };
    let constant = concentration_constant(p, v_floor, ball_volume);

    let mut masses = Vec::with_capacity(trajectory.snapshots.len());
    let mut energies = Vec::with_capacity(trajectory.snapshots.len());
    for snap in &trajectory.snapshots {
        let masked_sq: Vec<f64> = snap
            .values
            .iter()
            .zip(&in_ball)
            .map(|(&u, &b)| if b { u * u } else { 0.0 })
            .collect();
        let mass = 0.5 * integrate(grid, &masked_sq);
        let grad_sq = gradient_sq(snap);
        let masked_grad: Vec<f64> = grad_sq
            .values
            .iter()
            .zip(&in_ball)
            .map(|(&g, &b)| if b { g } else { 0.0 })
            .collect();
        let masked_pow: Vec<f64> = snap
            .values
            .iter()
            .zip(&in_ball)
            .map(|(&u, &b)| if b { u.abs().powf(p + 1.0) } else { 0.0 })
            .collect();
        let energy = 0.5 * integrate(grid, &masked_grad)
            - v_floor / (p + 1.0) * integrate(grid, &masked_pow);
        masses.push(mass);
        energies.push(energy);
    }

    let times: Vec<f64> = trajectory.snapshots.iter().map(|s| s.time).collect();
    let mut samples = Vec::with_capacity(times.len() - 2);
    for j in 1..times.len() - 1 {
        let (t0, t1, t2) = (times[j - 1], times[j], times[j + 1]);
        let (m0, m1, m2) = (masses[j - 1], masses[j], masses[j + 1]);
        // Nonuniform centered difference: weighted mix of the two one-sided
        // slopes, exact on quadratics in t.
        let left = (m1 - m0) / (t1 - t0);
        let right = (m2 - m1) / (t2 - t1);
        let derivative =
            (left * (t2 - t1) + right * (t1 - t0)) / (t2 - t0);
        let defect = derivative
            - (p + 1.0) / (p - 1.0) * constant * m1.powf((1.0 + p) / 2.0);
        samples.push(ConcentrationSample {
            time: t1,
            mass: m1,
            energy: energies[j],
            defect,
        });
    }
    Ok(samples)
}

/// Summary record for one blow-up run.
#[derive(Clone, Debug)]
pub struct BlowupRecord {
    pub blowup_time: f64,
    pub time_uncertainty: f64,
    /// Blow-up location (radius on radial domains).
    pub location: f64,
    /// True when the argmax drifted too much to certify the location and the
    /// final argmax was kept anyway.
    pub location_flagged: bool,
    pub rate_exponent: f64,
    pub type_one_sup: f64,
    pub set_proxy: Vec<f64>,
    pub fit_window: (f64, f64),
}

/// Run the whole post-processing chain on a threshold-terminated trajectory.
/// An ambiguous location is flagged rather than fatal; anything else
/// propagates.
pub fn analyze_trajectory(trajectory: &Trajectory) -> Result<BlowupRecord> {
    let time = estimate_blowup_time(trajectory)?;
    let (location, location_flagged) = match locate_blowup_point(trajectory) {
        Ok(x) => (x, false),
        Err(Error::AmbiguousLocation { .. }) => {
            (trajectory.final_entry().argmax, true)
        }
        Err(e) => return Err(e),
    };
    let rate_exponent = fit_rate_exponent(trajectory, time.value)?;
    let sup = type_one_sup(trajectory, time.value)?;
    let set_proxy = blowup_set_proxy(trajectory, time.value, 0.5)?;
    Ok(BlowupRecord {
        blowup_time: time.value,
        time_uncertainty: time.uncertainty,
        location,
        location_flagged,
        rate_exponent,
        type_one_sup: sup,
        set_proxy,
        fit_window: time.fit_window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::SolverParams;
    use crate::mesh::{build_grid, Field, GridKind};
    use crate::model::{Domain, FunctionSpec, ProblemSpec};
    use std::sync::Arc;

    fn spec_with_p(p: f64) -> ProblemSpec {
        ProblemSpec {
            dim: 3,
            exponent: p,
            domain: Domain { kind: DomainKind::Ball, extent: 1.0 },
            potential: FunctionSpec::Constant { value: 1.0 },
            profile: FunctionSpec::CosineCap,
            potential_floor: 0.5,
        }
    }

    /// Trajectory wrapper around a synthetic series, with threshold stop and
    /// a placeholder snapshot.
    fn synthetic_trajectory(p: f64, series: Vec<SeriesEntry>) -> Trajectory {
        let spec = spec_with_p(p);
        let grid = Arc::new(build_grid(GridKind::Radial, 3, 1.0, 8).unwrap());
        let last = *series.last().unwrap();
        let snapshot = Field {
            grid,
            values: vec![0.0; 9],
            time: last.time,
        };
        Trajectory {
            spec,
            amplitude: series[0].sup,
            params: SolverParams { stop_threshold: last.sup, ..Default::default() },
            snapshots: vec![snapshot.clone(), snapshot.clone(), snapshot],
            series,
            stop_reason: StopReason::Threshold,
        }
    }

    /// Exact power-law series sup = k (T - t)^(-1/(p-1)) with a geometric
    /// approach to T: enough tail samples in every decade.
    fn power_law_series(t_blowup: f64, p: f64, k: f64, decades: f64, count: usize) -> Vec<SeriesEntry> {
        (0..count)
            .map(|i| {
                let tau = t_blowup * 10.0_f64.powf(-decades * i as f64 / (count - 1) as f64);
                let time = t_blowup - tau;
                SeriesEntry {
                    time,
                    sup: k * tau.powf(-1.0 / (p - 1.0)),
                    argmax: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn exact_power_law_time_is_recovered_to_ten_digits() {
        for p in [1.5, 2.0, 3.0, 4.5] {
            let t_blowup = 0.75;
            let series = power_law_series(t_blowup, p, 1.0, 5.0, 400);
            let est = fit_blowup_time(&series, p).unwrap();
            assert!(
                (est.value - t_blowup).abs() <= 1e-10 * t_blowup,
                "p = {}: fitted {} vs {}",
                p,
                est.value,
                t_blowup
            );
            assert!(est.uncertainty < 1e-9, "p = {}: uncertainty {}", p, est.uncertainty);
            assert!(est.value > series.last().unwrap().time);
        }
    }

    #[test]
    fn time_fit_is_translation_covariant() {
        let p = 2.0;
        let series = power_law_series(0.5, p, 2.0, 5.0, 400);
        let shift = 0.3;
        let shifted: Vec<SeriesEntry> = series
            .iter()
            .map(|e| SeriesEntry { time: e.time + shift, ..*e })
            .collect();
        let a = fit_blowup_time(&series, p).unwrap();
        let b = fit_blowup_time(&shifted, p).unwrap();
        assert!(
            ((b.value - a.value) - shift).abs() < 1e-12,
            "shift not reproduced: {} vs {}",
            b.value - a.value,
            shift
        );
    }

    #[test]
    fn decaying_tail_is_not_blowing_up() {
        // Artificial series whose sup decreases toward the end.
        let series: Vec<SeriesEntry> = (0..100)
            .map(|i| SeriesEntry {
                time: i as f64 * 0.01,
                sup: 1e6 * (1.0 - 0.3 * i as f64 / 100.0),
                argmax: 0.0,
            })
            .collect();
        match fit_blowup_time(&series, 2.0) {
            Err(Error::NotBlowingUp { slope }) => assert!(slope >= 0.0),
            other => panic!("expected not-blowing-up, got {:?}", other.map(|e| e.value)),
        }
    }

    #[test]
    fn sparse_tail_is_insufficient() {
        let series = power_law_series(0.5, 2.0, 1.0, 5.0, 40); // ~8 per decade
        match fit_blowup_time(&series, 2.0) {
            Err(Error::InsufficientData(_)) => {}
            other => panic!("expected insufficient-data, got {:?}", other.map(|e| e.value)),
        }
    }

    #[test]
    fn rate_exponent_recovered_exactly_on_synthetic_data() {
        for p in [2.0, 3.0] {
            let t_blowup = 0.4;
            let series = power_law_series(t_blowup, p, 1.7, 5.0, 500);
            let mut traj = synthetic_trajectory(p, series);
            // Window [stop/1e3, stop/10] must hold plenty of samples.
            traj.params.stop_threshold = traj.final_entry().sup;
            let beta = 1.0 / (p - 1.0);
            let slope = fit_rate_exponent(&traj, t_blowup).unwrap();
            assert!(
                (slope - beta).abs() <= 1e-12 * beta.max(1.0),
                "p = {}: slope {} vs {}",
                p,
                slope,
                beta
            );
        }
    }

    #[test]
    fn rate_fit_is_invariant_under_amplitude_scaling() {
        let p = 2.0;
        let t_blowup = 0.4;
        let base = power_law_series(t_blowup, p, 1.0, 5.0, 500);
        let scaled: Vec<SeriesEntry> = base
            .iter()
            .map(|e| SeriesEntry { sup: 3.7 * e.sup, ..*e })
            .collect();
        let mut ta = synthetic_trajectory(p, base);
        ta.params.stop_threshold = ta.final_entry().sup;
        let mut tb = synthetic_trajectory(p, scaled);
        tb.params.stop_threshold = tb.final_entry().sup;
        let sa = fit_rate_exponent(&ta, t_blowup).unwrap();
        let sb = fit_rate_exponent(&tb, t_blowup).unwrap();
        assert!((sa - sb).abs() < 1e-12, "slopes {} vs {}", sa, sb);
    }

    #[test]
    fn type_one_sup_is_the_plateau_constant_on_exact_data() {
        let p = 2.0;
        let k = 2.5;
        let series = power_law_series(0.6, p, k, 5.0, 400);
        let traj = synthetic_trajectory(p, series);
        let sup = type_one_sup(&traj, 0.6).unwrap();
        assert!((sup - k).abs() <= 1e-10 * k, "sup {} vs constant {}", sup, k);
        let ratio = type_one_plateau_ratio(&traj, 0.6).unwrap();
        assert!((ratio - 1.0).abs() <= 1e-10, "plateau ratio {}", ratio);
        // Linear scaling in the amplitude.
        let scaled: Vec<SeriesEntry> = traj
            .series
            .iter()
            .map(|e| SeriesEntry { sup: 2.0 * e.sup, ..*e })
            .collect();
        let traj2 = synthetic_trajectory(p, scaled);
        let sup2 = type_one_sup(&traj2, 0.6).unwrap();
        assert!((sup2 - 2.0 * sup).abs() <= 1e-10 * sup2);
    }

    #[test]
    fn rate_fit_rejects_inconsistent_blowup_times() {
        let series = power_law_series(0.5, 2.0, 1.0, 5.0, 400);
        let traj = synthetic_trajectory(2.0, series);
        let t_last = traj.final_entry().time;
        assert!(fit_rate_exponent(&traj, t_last * 0.5).is_err());
        assert!(type_one_sup(&traj, t_last).is_err());
    }

    #[test]
    fn concentration_constant_closed_form() {
        // p = 3, v_floor = 2, |B| = 8: (2/4) * 2 * 8^(-1) * 2^(-1) = 1/16.
        let c = concentration_constant(3.0, 2.0, 8.0);
        assert!((c - 1.0 / 16.0).abs() < 1e-15, "constant {}", c);
    }

    #[test]
    fn concentration_diagnostic_validates_its_ball() {
        let series = power_law_series(0.5, 2.0, 1.0, 5.0, 400);
        let traj = synthetic_trajectory(2.0, series);
        assert!(ball_concentration_diagnostic(&traj, 0.0, 2.0, 0.5).is_err(), "too wide");
        assert!(ball_concentration_diagnostic(&traj, 0.5, 0.2, 0.5).is_err(), "off-center");
        assert!(ball_concentration_diagnostic(&traj, 0.0, -0.1, 0.5).is_err(), "negative");
        assert!(ball_concentration_diagnostic(&traj, 0.0, 0.5, 0.5).is_ok());
    }
}
