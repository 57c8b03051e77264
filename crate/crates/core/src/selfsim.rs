//! Self-similar frames around the singularity and the weighted-energy
//! machinery evaluated on them: the zoomed field w on a truncated y-grid,
//! Gaussian-weighted energies with |y|^{2k} moments, cutoff-localized
//! energies, and discrete residuals of the energy identities that a genuine
//! self-similar solution satisfies.
//!
//! The change of variables is algebraic: for any constant substituted as the
//! blow-up time, the rescaled field solves the rescaled equation, so the
//! identity residuals are legitimate diagnostics even when the time estimate
//! carries error. Only the approach of w to its plateau constant needs the
//! true blow-up time.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{
    gradient, gradient_sq, interpolate, unit_sphere_area, weighted_moment_integral, Field, Grid,
    GridKind,
};
use crate::model::{plateau_constant, DomainKind, ProblemSpec};

/// Highest |y|^{2k} moment used by the energy diagnostics.
pub const MAX_ENERGY_MOMENT: u32 = 3;

/// The zoomed field w(y) = (T-t)^beta u(a + y sqrt(T-t), t) at one rescaled
/// time s = -log(T-t).
#[derive(Clone, Debug)]
pub struct SelfSimilarFrame {
    /// Rescaled time, -log(T - t).
    pub s: f64,
    /// Zoom center a (a radius of 0 on radial grids).
    pub location: f64,
    /// Blow-up time used by the rescaling.
    pub blowup_time: f64,
    /// w on the y-grid; the field's time slot carries s.
    pub w: Field,
    /// Image of the domain boundary under the zoom: nearest boundary
    /// distance divided by sqrt(T - t). w is 0 beyond this radius.
    pub omega_s_radius: f64,
}

/// Build the y-grid a frame lives on: same geometry as the problem domain,
/// truncated at `y_extent`.
pub fn frame_grid(spec: &ProblemSpec, y_extent: f64, m: usize) -> Result<Arc<Grid>> {
    Ok(Arc::new(crate::mesh::build_grid(
        spec.domain.grid_kind(),
        spec.dim,
        y_extent,
        m,
    )?))
}

/// Rescale one snapshot into self-similar variables around `location`.
///
/// Nodes whose preimage leaves the domain get w = 0, consistent with the
/// boundary condition. The truncation radius uses the nearest boundary
/// distance, which is exact for centered and radial zooms; off-center
/// interval zooms are truncated conservatively on the far side.
pub fn to_selfsimilar_frame(
    snapshot: &Field,
    spec: &ProblemSpec,
    location: f64,
    blowup_time: f64,
    y_grid: &Arc<Grid>,
) -> Result<SelfSimilarFrame> {
    if !(blowup_time > snapshot.time) {
        return Err(Error::InvalidTime(format!(
            "blow-up time {} must exceed the snapshot time {}",
            blowup_time, snapshot.time
        )));
    }
    if y_grid.kind != spec.domain.grid_kind() || y_grid.dim != spec.dim {
        return Err(Error::InvalidArgument(
            "y-grid geometry does not match the problem domain".into(),
        ));
    }
    if spec.domain.kind == DomainKind::Ball && location != 0.0 {
        return Err(Error::InvalidArgument(
            "radial zooms must center on the origin".into(),
        ));
    }
    if spec.domain.boundary_distance(location) <= 0.0 {
        return Err(Error::OutOfDomain {
            x: location,
            lo: -spec.domain.extent,
            hi: spec.domain.extent,
        });
    }
    let tau = blowup_time - snapshot.time;
    let s = -tau.ln();
    let scale = tau.powf(spec.scaling_exponent());
    let stretch = tau.sqrt();
    let omega_s_radius = spec.domain.boundary_distance(location) / stretch;
    let (lo, hi) = (snapshot.grid.lo(), snapshot.grid.hi());
    let mut w = Vec::with_capacity(y_grid.nodes.len());
    for &y in &y_grid.nodes {
        if y.abs() <= omega_s_radius {
            let x = (location + y * stretch).clamp(lo, hi);
            w.push(scale * interpolate(snapshot, x)?);
        } else {
            w.push(0.0);
        }
    }
    Ok(SelfSimilarFrame {
        s,
        location,
        blowup_time,
        w: Field::new(Arc::clone(y_grid), w, s)?,
        omega_s_radius,
    })
}

/// The potential seen through the zoom: V(a + y e^{-s/2}) on the y-grid,
/// clamped to the domain (values beyond the truncation radius multiply a
/// zero w and are inert).
pub fn effective_potential(spec: &ProblemSpec, frame: &SelfSimilarFrame) -> Vec<f64> {
    let stretch = (-frame.s / 2.0).exp();
    let (lo, hi) = spec.domain.scan_range();
    frame
        .w
        .grid
        .nodes
        .iter()
        .map(|&y| spec.potential_at((frame.location + y * stretch).clamp(lo, hi)))
        .collect()
}

/// Moment integral against the Gaussian weight, wrapped in a Field for the
/// grid measure.
fn moment(grid: &Arc<Grid>, values: Vec<f64>, s: f64, k: u32) -> Result<f64> {
    weighted_moment_integral(&Field::new(Arc::clone(grid), values, s)?, k)
}

fn check_vbar(frame: &SelfSimilarFrame, vbar: &[f64]) -> Result<()> {
    if vbar.len() != frame.w.values.len() {
        return Err(Error::InvalidArgument(format!(
            "effective potential has {} samples for a {}-node grid",
            vbar.len(),
            frame.w.values.len()
        )));
    }
    Ok(())
}

/// Weighted energy of order k: (1/2) ∫ (|∇w|² + β w²) |y|^{2k} ρ
/// − 1/(p+1) ∫ V̄ |w|^{p+1} |y|^{2k} ρ. Order 0 is the plain energy.
pub fn energy_moment(
    frame: &SelfSimilarFrame,
    vbar: &[f64],
    spec: &ProblemSpec,
    k: u32,
) -> Result<f64> {
    if k > MAX_ENERGY_MOMENT {
        return Err(Error::UnsupportedMoment { k, max: MAX_ENERGY_MOMENT });
    }
    check_vbar(frame, vbar)?;
    let beta = spec.scaling_exponent();
    let p = spec.exponent;
    let grad_sq = gradient_sq(&frame.w);
    let integrand: Vec<f64> = frame
        .w
        .values
        .iter()
        .zip(&grad_sq.values)
        .zip(vbar)
        .map(|((&w, &g), &v)| {
            0.5 * (g + beta * w * w) - v / (p + 1.0) * w.abs().powf(p + 1.0)
        })
        .collect();
    moment(&frame.w.grid, integrand, frame.s, k)
}

/// Second-moment energy minus the scaling-virial correction
/// (1/2) ∫ (|y|²/2 − N) w² ρ.
pub fn corrected_second_energy(
    frame: &SelfSimilarFrame,
    vbar: &[f64],
    spec: &ProblemSpec,
) -> Result<f64> {
    let second = energy_moment(frame, vbar, spec, 1)?;
    Ok(second - virial_correction(frame, spec)?)
}

/// The subtracted term of the corrected second energy:
/// (1/2) ∫ (|y|²/2 − N) w² ρ.
pub fn virial_correction(frame: &SelfSimilarFrame, spec: &ProblemSpec) -> Result<f64> {
    let w_sq: Vec<f64> = frame.w.values.iter().map(|&w| w * w).collect();
    let m0 = moment(&frame.w.grid, w_sq.clone(), frame.s, 0)?;
    let m1 = moment(&frame.w.grid, w_sq, frame.s, 1)?;
    Ok(0.25 * m1 - 0.5 * spec.dim as f64 * m0)
}

/// C² window: 1 inside |y − center| ≤ radius, 0 outside twice the radius,
/// quintic smoothstep in between.
#[derive(Clone, Copy, Debug)]
pub struct CutoffSpec {
    pub center: f64,
    pub radius: f64,
}

impl CutoffSpec {
    /// Outer edge of the support.
    pub fn support_radius(&self) -> f64 {
        2.0 * self.radius
    }

    /// Window value at y.
    pub fn value(&self, y: f64) -> f64 {
        let r = (y - self.center).abs();
        if r <= self.radius {
            1.0
        } else if r >= 2.0 * self.radius {
            0.0
        } else {
            let t = (r - self.radius) / self.radius;
            1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
        }
    }

    /// Analytic derivative of the window at y.
    pub fn slope(&self, y: f64) -> f64 {
        let d = y - self.center;
        let r = d.abs();
        if r <= self.radius || r >= 2.0 * self.radius {
            0.0
        } else {
            let t = (r - self.radius) / self.radius;
            let magnitude = 30.0 * t * t * (1.0 - t) * (1.0 - t) / self.radius;
            -magnitude * d.signum()
        }
    }
}

/// The two localized energies and their coupling term.
#[derive(Clone, Copy, Debug)]
pub struct LocalEnergies {
    /// Energy assembled from the gradient of the windowed field ψw, with the
    /// window-gradient compensation in the quadratic term.
    pub windowed_field_energy: f64,
    /// Energy with the window squared applied to the integrands directly.
    pub masked_energy: f64,
    /// Cross term ∫ ψ w (ψ' w') ρ linking the two.
    pub coupling: f64,
    /// |windowed_field_energy − masked_energy − coupling|: the three
    /// quadratures are algebraically dependent, so this is rounding-level
    /// for a consistent assembly.
    pub mismatch: f64,
}

/// Compute both localized energies. The windowed-field form expands
/// |∇(ψw)|² with the discrete w-gradient and the analytic window slope, so
/// the identity windowed = masked + coupling holds to rounding by
/// construction of the quadratures (each is still summed independently).
pub fn local_energies(
    frame: &SelfSimilarFrame,
    vbar: &[f64],
    spec: &ProblemSpec,
    cutoff: &CutoffSpec,
) -> Result<LocalEnergies> {
    check_vbar(frame, vbar)?;
    let grid = &frame.w.grid;
    if grid.kind == GridKind::Radial && cutoff.center != 0.0 {
        return Err(Error::InvalidArgument(
            "radial windows must center on the origin".into(),
        ));
    }
    let reach = cutoff.center.abs() + cutoff.support_radius();
    if reach > grid.hi() {
        return Err(Error::InvalidArgument(format!(
            "window support reaches {} but the grid ends at {}",
            reach,
            grid.hi()
        )));
    }
    let beta = spec.scaling_exponent();
    let p = spec.exponent;
    let grad = gradient(&frame.w);
    let n = frame.w.values.len();
    let mut windowed = Vec::with_capacity(n);
    let mut masked = Vec::with_capacity(n);
    let mut coupling = Vec::with_capacity(n);
    for i in 0..n {
        let y = grid.nodes[i];
        let w = frame.w.values[i];
        let g = grad.values[i];
        let psi = cutoff.value(y);
        let dpsi = cutoff.slope(y);
        let nonlinear = vbar[i] / (p + 1.0) * psi * psi * w.abs().powf(p + 1.0);
        // |∇(ψw)|² expanded: ψ²g² + 2ψw ψ'g + w²ψ'², then the quadratic term
        // carries (βψ² − ψ'²) w².
        let grad_product = psi * psi * g * g + 2.0 * psi * w * dpsi * g + w * w * dpsi * dpsi;
        windowed.push(
            0.5 * (grad_product + (beta * psi * psi - dpsi * dpsi) * w * w) - nonlinear,
        );
        masked.push(0.5 * psi * psi * (g * g + beta * w * w) - nonlinear);
        coupling.push(psi * w * dpsi * g);
    }
    let windowed_field_energy = moment(grid, windowed, frame.s, 0)?;
    let masked_energy = moment(grid, masked, frame.s, 0)?;
    let coupling = moment(grid, coupling, frame.s, 0)?;
    let mismatch = (windowed_field_energy - masked_energy - coupling).abs();
    Ok(LocalEnergies { windowed_field_energy, masked_energy, coupling, mismatch })
}

/// Which energy identity a residual is measured against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IdentityKind {
    /// Rate of change of (1/2) ∫ w² ρ against energy and reaction terms.
    Variance,
    /// The |y|^{2k}-weighted variance identity, k in 1..=3.
    WeightedVariance(u32),
    /// Dissipation balance: ∫ w_s² ρ against −dE/ds, the boundary flux, and
    /// the drift of the zoomed potential.
    Dissipation,
    /// Scaling identity with an undetermined coefficient on ∫ |∇w|² ρ; the
    /// coefficient is fitted externally and passed in.
    Pohozaev { linear_coefficient: f64 },
}

/// Residual of one identity on one frame triple.
#[derive(Clone, Copy, Debug)]
pub struct IdentityCheck {
    /// |left side − right side| with d/ds by centered differences.
    pub residual: f64,
    /// True when the boundary-flux term was dropped because the domain image
    /// lies beyond the grid (the Gaussian weight makes it negligible there).
    pub boundary_dropped: bool,
}

fn check_frame_pair(a: &SelfSimilarFrame, b: &SelfSimilarFrame) -> Result<()> {
    let (ga, gb) = (&a.w.grid, &b.w.grid);
    if ga.kind != gb.kind || ga.dim != gb.dim || ga.h != gb.h || ga.nodes.len() != gb.nodes.len()
    {
        return Err(Error::InvalidArgument("frames live on different y-grids".into()));
    }
    if (a.location - b.location).abs() > 1e-12 * (1.0 + a.location.abs()) {
        return Err(Error::InvalidArgument("frames zoom on different centers".into()));
    }
    Ok(())
}

fn check_triple_spacing(
    prev: &SelfSimilarFrame,
    mid: &SelfSimilarFrame,
    next: &SelfSimilarFrame,
) -> Result<f64> {
    check_frame_pair(prev, mid)?;
    check_frame_pair(mid, next)?;
    let d0 = mid.s - prev.s;
    let d1 = next.s - mid.s;
    if !(d0 > 0.0 && d1 > 0.0) {
        return Err(Error::InvalidTime(format!(
            "frame times must increase: s = {}, {}, {}",
            prev.s, mid.s, next.s
        )));
    }
    // Tolerance accommodates round-off from mapping stored f64 times back to
    // log-time coordinates very close to blow-up; genuinely mismatched
    // spacings (a skipped or doubled frame) are orders of magnitude larger.
    if (d1 - d0).abs() > 1e-6 * d0.max(d1) {
        return Err(Error::InvalidArgument(format!(
            "frames are unequally spaced in s: gaps {} and {}",
            d0, d1
        )));
    }
    Ok(0.5 * (d0 + d1))
}

/// ∮ |∇w|² (y·γ) ρ dσ over the image of the domain boundary, and whether it
/// was dropped as beyond the grid. Radial frames integrate over the sphere
/// at the truncation radius; interval frames sum the two symmetric edge
/// points of the conservative truncation.
fn boundary_flux(frame: &SelfSimilarFrame, grad: &Field) -> Result<(f64, bool)> {
    let b = frame.omega_s_radius;
    let grid = &frame.w.grid;
    if !(b <= grid.hi()) {
        return Ok((0.0, true));
    }
    let rho = (-b * b / 4.0).exp();
    match grid.kind {
        GridKind::Radial => {
            let g = interpolate(grad, b)?;
            let area = unit_sphere_area(grid.dim) * b.powi(grid.dim as i32 - 1);
            Ok((g * g * b * rho * area, false))
        }
        GridKind::Interval => {
            let gp = interpolate(grad, b)?;
            let gm = interpolate(grad, -b)?;
            Ok(((gp * gp + gm * gm) * b * rho, false))
        }
    }
}

/// ∫ (y · ∇V̄) |w|^{p+1} ρ with the potential gradient by centered
/// differences on the y-grid.
fn potential_drift_integral(
    frame: &SelfSimilarFrame,
    vbar: &[f64],
    exponent: f64,
) -> Result<f64> {
    let grid = &frame.w.grid;
    let vbar_field = Field::new(Arc::clone(grid), vbar.to_vec(), frame.s)?;
    let dv = gradient(&vbar_field);
    let integrand: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&dv.values)
        .zip(&frame.w.values)
        .map(|((&y, &dvi), &w)| y * dvi * w.abs().powf(exponent + 1.0))
        .collect();
    moment(grid, integrand, frame.s, 0)
}

fn squared(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| v * v).collect()
}

/// Discrete residual of one energy identity on a consecutive, equally
/// s-spaced frame triple. s-derivatives are centered differences of frame
/// quantities, never the equation's own right side, so the check is
/// independent of the solver.
pub fn identity_residual(
    prev: &SelfSimilarFrame,
    mid: &SelfSimilarFrame,
    next: &SelfSimilarFrame,
    vbar_prev: &[f64],
    vbar_mid: &[f64],
    vbar_next: &[f64],
    spec: &ProblemSpec,
    kind: IdentityKind,
) -> Result<IdentityCheck> {
    let ds = check_triple_spacing(prev, mid, next)?;
    check_vbar(prev, vbar_prev)?;
    check_vbar(mid, vbar_mid)?;
    check_vbar(next, vbar_next)?;
    let grid = &mid.w.grid;
    let p = spec.exponent;
    let dim = spec.dim as f64;
    match kind {
        IdentityKind::Variance => {
            let mass_prev = moment(grid, squared(&prev.w.values), prev.s, 0)?;
            let mass_next = moment(grid, squared(&next.w.values), next.s, 0)?;
            let lhs = 0.5 * (mass_next - mass_prev) / (2.0 * ds);
            let reaction: Vec<f64> = mid
                .w
                .values
                .iter()
                .zip(vbar_mid)
                .map(|(&w, &v)| v * w.abs().powf(p + 1.0))
                .collect();
            let rhs = -2.0 * energy_moment(mid, vbar_mid, spec, 0)?
                + (p - 1.0) / (p + 1.0) * moment(grid, reaction, mid.s, 0)?;
            Ok(IdentityCheck { residual: (lhs - rhs).abs(), boundary_dropped: false })
        }
        IdentityKind::WeightedVariance(k) => {
            if k == 0 || k > MAX_ENERGY_MOMENT {
                return Err(Error::UnsupportedMoment { k, max: MAX_ENERGY_MOMENT });
            }
            let mass_prev = moment(grid, squared(&prev.w.values), prev.s, k)?;
            let mass_next = moment(grid, squared(&next.w.values), next.s, k)?;
            let lhs = 0.5 * (mass_next - mass_prev) / (2.0 * ds);
            let reaction: Vec<f64> = mid
                .w
                .values
                .iter()
                .zip(vbar_mid)
                .map(|(&w, &v)| v * w.abs().powf(p + 1.0))
                .collect();
            let w_sq = squared(&mid.w.values);
            let kf = k as f64;
            let rhs = -2.0 * energy_moment(mid, vbar_mid, spec, k)?
                + (p - 1.0) / (p + 1.0) * moment(grid, reaction, mid.s, k)?
                + kf * (dim + 2.0 * kf - 2.0) * moment(grid, w_sq.clone(), mid.s, k - 1)?
                - 0.5 * kf * moment(grid, w_sq, mid.s, k)?;
            Ok(IdentityCheck { residual: (lhs - rhs).abs(), boundary_dropped: false })
        }
        IdentityKind::Dissipation => {
            let w_s: Vec<f64> = next
                .w
                .values
                .iter()
                .zip(&prev.w.values)
                .map(|(&a, &b)| (a - b) / (2.0 * ds))
                .collect();
            let lhs = moment(grid, squared(&w_s), mid.s, 0)?;
            let e_prev = energy_moment(prev, vbar_prev, spec, 0)?;
            let e_next = energy_moment(next, vbar_next, spec, 0)?;
            let grad = gradient(&mid.w);
            let (flux, boundary_dropped) = boundary_flux(mid, &grad)?;
            let drift = potential_drift_integral(mid, vbar_mid, p)?;
            let rhs = -(e_next - e_prev) / (2.0 * ds) - 0.25 * flux
                + drift / (2.0 * (p + 1.0));
            Ok(IdentityCheck { residual: (lhs - rhs).abs(), boundary_dropped })
        }
        IdentityKind::Pohozaev { linear_coefficient } => {
            let parts = pohozaev_parts(prev, mid, next, vbar_mid, spec)?;
            Ok(IdentityCheck {
                residual: (parts.imbalance - linear_coefficient * parts.gradient_mass).abs(),
                boundary_dropped: parts.boundary_dropped,
            })
        }
    }
}

/// Pieces of the scaling identity on one triple: everything except the
/// undetermined multiple of ∫ |∇w|² ρ.
#[derive(Clone, Copy, Debug)]
pub struct PohozaevParts {
    /// Left side minus the determined right-side terms.
    pub imbalance: f64,
    /// ∫ |∇w|² ρ, the weight the undetermined coefficient multiplies.
    pub gradient_mass: f64,
    pub boundary_dropped: bool,
}

/// Assemble the scaling-identity pieces on a radial frame triple. Interval
/// frames are rejected: the boundary trace has no unambiguous discrete
/// analogue at a truncated interval edge.
pub fn pohozaev_parts(
    prev: &SelfSimilarFrame,
    mid: &SelfSimilarFrame,
    next: &SelfSimilarFrame,
    vbar_mid: &[f64],
    spec: &ProblemSpec,
) -> Result<PohozaevParts> {
    let ds = check_triple_spacing(prev, mid, next)?;
    check_vbar(mid, vbar_mid)?;
    let grid = &mid.w.grid;
    if grid.kind != GridKind::Radial {
        return Err(Error::InvalidArgument(
            "the scaling identity is checked on radial frames only".into(),
        ));
    }
    let p = spec.exponent;
    let dim = spec.dim as f64;
    let virial = |frame: &SelfSimilarFrame| -> Result<f64> {
        let w_sq = squared(&frame.w.values);
        Ok(0.25 * moment(grid, w_sq.clone(), frame.s, 1)?
            - 0.5 * dim * moment(grid, w_sq, frame.s, 0)?)
    };
    let w_s: Vec<f64> = next
        .w
        .values
        .iter()
        .zip(&prev.w.values)
        .map(|(&a, &b)| (a - b) / (2.0 * ds))
        .collect();
    let grad = gradient(&mid.w);
    let advect: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&grad.values)
        .zip(&w_s)
        .map(|((&y, &g), &ws)| y * g * ws)
        .collect();
    let lhs = (virial(next)? - virial(prev)?) / (2.0 * ds)
        - (p + 1.0) * moment(grid, advect, mid.s, 0)?;
    let grad_sq = gradient_sq(&mid.w);
    let (flux, boundary_dropped) = boundary_flux(mid, &grad)?;
    let determined = (p - 1.0) / 4.0 * weighted_moment_integral(
        &Field::new(Arc::clone(grid), grad_sq.values.clone(), mid.s)?,
        1,
    )? - (p + 1.0) / 2.0 * flux
        + potential_drift_integral(mid, vbar_mid, p)?;
    let gradient_mass =
        weighted_moment_integral(&Field::new(Arc::clone(grid), grad_sq.values, mid.s)?, 0)?;
    Ok(PohozaevParts { imbalance: lhs - determined, gradient_mass, boundary_dropped })
}

/// Least-squares fit of the undetermined coefficient over a collection of
/// triples: minimizes Σ (imbalance − c · gradient_mass)². 0 when every
/// gradient mass vanishes (steady constant frames).
pub fn fit_pohozaev_coefficient(parts: &[PohozaevParts]) -> f64 {
    let num: f64 = parts.iter().map(|p| p.imbalance * p.gradient_mass).sum();
    let den: f64 = parts.iter().map(|p| p.gradient_mass * p.gradient_mass).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Largest increase across an energy sequence that should be
/// non-increasing; 0 when it is monotone. For constant potentials the
/// energy decreases along genuine solutions, so the defect measures
/// discretization error.
pub fn monotonicity_defect(energies: &[f64]) -> f64 {
    energies
        .windows(2)
        .map(|pair| pair[1] - pair[0])
        .fold(0.0, f64::max)
        .max(0.0)
}

/// Largest deviation of w from the plateau constant on the core |y| ≤ 1.
pub fn core_deviation(frame: &SelfSimilarFrame, spec: &ProblemSpec) -> f64 {
    let plateau = plateau_constant(spec, frame.location);
    frame
        .w
        .grid
        .nodes
        .iter()
        .zip(&frame.w.values)
        .filter(|(&y, _)| y.abs() <= 1.0)
        .map(|(_, &w)| (w - plateau).abs())
        .fold(0.0, f64::max)
}

/// Per-frame core deviation series (s, max over |y| ≤ 1 of |w − plateau|),
/// for trend checks against the plateau limit.
pub fn limit_convergence_series(
    frames: &[SelfSimilarFrame],
    spec: &ProblemSpec,
) -> Vec<(f64, f64)> {
    frames.iter().map(|f| (f.s, core_deviation(f, spec))).collect()
}

/// All energies and residuals for one frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameEnergies {
    pub s: f64,
    /// Plain weighted energy.
    pub energy: f64,
    /// Moment energies of order 1, 2, 3.
    pub weighted: [f64; 3],
    /// Second-moment energy minus the scaling-virial correction.
    pub corrected_second: f64,
    /// Core deviation from the plateau constant.
    pub core_deviation: f64,
    /// Identity residuals; None at sequence endpoints where no centered
    /// difference exists.
    pub residual_variance: Option<f64>,
    pub residual_weighted_variance: Option<f64>,
    pub residual_dissipation: Option<f64>,
    pub residual_pohozaev: Option<f64>,
    /// True when a boundary-flux term was dropped as beyond the grid.
    pub boundary_dropped: bool,
}

/// Energies and identity residuals across an equally s-spaced frame
/// sequence.
#[derive(Clone, Debug)]
pub struct EnergyReport {
    pub frames: Vec<FrameEnergies>,
    /// Fitted coefficient of the scaling identity (radial frames only).
    pub pohozaev_coefficient: Option<f64>,
}

/// Evaluate every diagnostic across a frame sequence: per-frame energies,
/// and identity residuals on interior frames by centered s-differences.
pub fn energy_report(frames: &[SelfSimilarFrame], spec: &ProblemSpec) -> Result<EnergyReport> {
    if frames.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} frames; identity residuals need at least 3",
            frames.len()
        )));
    }
    for pair in frames.windows(2) {
        check_frame_pair(&pair[0], &pair[1])?;
    }
    for triple in frames.windows(3) {
        check_triple_spacing(&triple[0], &triple[1], &triple[2])?;
    }
    let radial = frames[0].w.grid.kind == GridKind::Radial;
    let vbars: Vec<Vec<f64>> = frames.iter().map(|f| effective_potential(spec, f)).collect();

    let mut rows: Vec<FrameEnergies> = Vec::with_capacity(frames.len());
    for (frame, vbar) in frames.iter().zip(&vbars) {
        rows.push(FrameEnergies {
            s: frame.s,
            energy: energy_moment(frame, vbar, spec, 0)?,
            weighted: [
                energy_moment(frame, vbar, spec, 1)?,
                energy_moment(frame, vbar, spec, 2)?,
                energy_moment(frame, vbar, spec, 3)?,
            ],
            corrected_second: corrected_second_energy(frame, vbar, spec)?,
            core_deviation: core_deviation(frame, spec),
            residual_variance: None,
            residual_weighted_variance: None,
            residual_dissipation: None,
            residual_pohozaev: None,
            boundary_dropped: false,
        });
    }

    let mut parts = Vec::new();
    if radial {
        for j in 1..frames.len() - 1 {
            parts.push(pohozaev_parts(
                &frames[j - 1],
                &frames[j],
                &frames[j + 1],
                &vbars[j],
                spec,
            )?);
        }
    }
    let pohozaev_coefficient = if radial { Some(fit_pohozaev_coefficient(&parts)) } else { None };

    for j in 1..frames.len() - 1 {
        let (prev, mid, next) = (&frames[j - 1], &frames[j], &frames[j + 1]);
        let (vp, vm, vn) = (&vbars[j - 1], &vbars[j], &vbars[j + 1]);
        let var = identity_residual(prev, mid, next, vp, vm, vn, spec, IdentityKind::Variance)?;
        let wvar = identity_residual(
            prev,
            mid,
            next,
            vp,
            vm,
            vn,
            spec,
            IdentityKind::WeightedVariance(1),
        )?;
        let diss =
            identity_residual(prev, mid, next, vp, vm, vn, spec, IdentityKind::Dissipation)?;
        rows[j].residual_variance = Some(var.residual);
        rows[j].residual_weighted_variance = Some(wvar.residual);
        rows[j].residual_dissipation = Some(diss.residual);
        rows[j].boundary_dropped = diss.boundary_dropped;
        if let Some(c) = pohozaev_coefficient {
            let po = &parts[j - 1];
            rows[j].residual_pohozaev = Some((po.imbalance - c * po.gradient_mass).abs());
            rows[j].boundary_dropped |= po.boundary_dropped;
        }
    }
    Ok(EnergyReport { frames: rows, pohozaev_coefficient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;
    use crate::model::{Domain, FunctionSpec};
    use std::f64::consts::PI;

    fn interval_spec(p: f64) -> ProblemSpec {
        ProblemSpec {
            dim: 1,
            exponent: p,
            domain: Domain { kind: DomainKind::Interval, extent: 1.0 },
            potential: FunctionSpec::Constant { value: 1.0 },
            profile: FunctionSpec::CosineCap,
            potential_floor: 0.5,
        }
    }

    fn ball_spec(p: f64) -> ProblemSpec {
        ProblemSpec {
            dim: 3,
            exponent: p,
            domain: Domain { kind: DomainKind::Ball, extent: 1.0 },
            potential: FunctionSpec::Constant { value: 1.0 },
            profile: FunctionSpec::CosineCap,
            potential_floor: 0.5,
        }
    }

    /// Frame holding an explicit w on a fresh y-grid, not derived from any
    /// snapshot; the truncation radius is pushed beyond the grid.
    fn synthetic_frame(
        spec: &ProblemSpec,
        y_extent: f64,
        m: usize,
        s: f64,
        f: impl Fn(f64) -> f64,
    ) -> SelfSimilarFrame {
        let grid = frame_grid(spec, y_extent, m).unwrap();
        let w: Vec<f64> = grid.nodes.iter().map(|&y| f(y)).collect();
        SelfSimilarFrame {
            s,
            location: 0.0,
            blowup_time: 1.0,
            w: Field::new(grid, w, s).unwrap(),
            omega_s_radius: f64::INFINITY,
        }
    }

    fn constant_vbar(frame: &SelfSimilarFrame, v: f64) -> Vec<f64> {
        vec![v; frame.w.values.len()]
    }

    #[test]
    fn constant_field_energy_matches_the_gaussian_oracle() {
        // p = 3, V = 1, one dimension: the plateau constant is 1/sqrt(2),
        // and the energy of the constant field is
        // (beta/2 - V k^{p-1}/(p+1)) k^2 m_{2j} per moment order j, with
        // m_0 = 2 sqrt(pi) and m_2 = 4 sqrt(pi).
        let spec = interval_spec(3.0);
        let plateau = 1.0 / 2.0_f64.sqrt();
        let frame = synthetic_frame(&spec, 16.0, 4096, 0.0, |_| plateau);
        let vbar = constant_vbar(&frame, 1.0);
        let m0 = 2.0 * PI.sqrt();
        let expect0 = m0 / 16.0; // 0.2215567...
        let e0 = energy_moment(&frame, &vbar, &spec, 0).unwrap();
        assert!(
            (e0 - expect0).abs() < 1e-8,
            "plain energy {} vs closed form {}",
            e0,
            expect0
        );
        let expect1 = 2.0 * m0 / 16.0; // m_2 = 2 * 1 * m_0 in one dimension
        let e1 = energy_moment(&frame, &vbar, &spec, 1).unwrap();
        assert!(
            (e1 - expect1).abs() < 1e-8,
            "second-moment energy {} vs closed form {}",
            e1,
            expect1
        );
    }

    #[test]
    fn zero_field_has_zero_energy_for_every_moment() {
        let spec = interval_spec(2.0);
        let frame = synthetic_frame(&spec, 16.0, 512, 0.0, |_| 0.0);
        let vbar = constant_vbar(&frame, 1.0);
        for k in 0..=MAX_ENERGY_MOMENT {
            assert_eq!(energy_moment(&frame, &vbar, &spec, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn moment_order_above_three_is_rejected() {
        let spec = interval_spec(2.0);
        let frame = synthetic_frame(&spec, 16.0, 512, 0.0, |_| 1.0);
        let vbar = constant_vbar(&frame, 1.0);
        match energy_moment(&frame, &vbar, &spec, 4) {
            Err(Error::UnsupportedMoment { k: 4, max: 3 }) => {}
            other => panic!("expected unsupported moment, got {:?}", other),
        }
    }

    #[test]
    fn quadratic_part_scales_with_the_square_of_the_amplitude() {
        let spec = interval_spec(2.0);
        let frame = synthetic_frame(&spec, 16.0, 1024, 0.0, |y| (-y * y / 2.0).exp());
        let scaled = synthetic_frame(&spec, 16.0, 1024, 0.0, |y| 3.0 * (-y * y / 2.0).exp());
        let zeros = constant_vbar(&frame, 0.0);
        let base = energy_moment(&frame, &zeros, &spec, 0).unwrap();
        let nine = energy_moment(&scaled, &zeros, &spec, 0).unwrap();
        assert!(
            (nine - 9.0 * base).abs() <= 1e-12 * nine.abs(),
            "quadratic form not homogeneous: {} vs {}",
            nine,
            9.0 * base
        );
    }

    #[test]
    fn corrected_second_energy_is_consistent_to_rounding() {
        let spec = ball_spec(2.0);
        let frame = synthetic_frame(&spec, 16.0, 2048, 0.0, |y| (-y * y / 3.0).exp() * (1.0 + y));
        let vbar = constant_vbar(&frame, 1.0);
        let corrected = corrected_second_energy(&frame, &vbar, &spec).unwrap();
        let second = energy_moment(&frame, &vbar, &spec, 1).unwrap();
        let correction = virial_correction(&frame, &spec).unwrap();
        let scale = second.abs().max(correction.abs()).max(1.0);
        assert!(
            (corrected - (second - correction)).abs() <= 1e-12 * scale,
            "corrected {} vs {} - {}",
            corrected,
            second,
            correction
        );
    }

    #[test]
    fn truncating_the_grid_at_sixteen_or_twentyfour_changes_nothing() {
        let spec = interval_spec(2.0);
        // Same spacing h = 1/64 on both grids.
        let narrow = synthetic_frame(&spec, 16.0, 2048, 0.0, |y| (-y * y / 2.0).exp());
        let wide = synthetic_frame(&spec, 24.0, 3072, 0.0, |y| (-y * y / 2.0).exp());
        let vn = constant_vbar(&narrow, 1.0);
        let vw = constant_vbar(&wide, 1.0);
        for k in 0..=MAX_ENERGY_MOMENT {
            let a = energy_moment(&narrow, &vn, &spec, k).unwrap();
            let b = energy_moment(&wide, &vw, &spec, k).unwrap();
            assert!(
                (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
                "moment {}: {} vs {}",
                k,
                a,
                b
            );
        }
    }

    #[test]
    fn frame_evaluation_at_the_center_matches_the_snapshot() {
        let spec = interval_spec(2.0);
        let grid = Arc::new(build_grid(GridKind::Interval, 1, 1.0, 64).unwrap());
        let u = Field::sample(&grid, 0.1, |x| (PI * x / 2.0).cos() * 7.0).unwrap();
        let y_grid = frame_grid(&spec, 16.0, 512).unwrap();
        let t_blowup = 0.35;
        let frame = to_selfsimilar_frame(&u, &spec, 0.0, t_blowup, &y_grid).unwrap();
        let tau: f64 = t_blowup - 0.1;
        let beta = spec.scaling_exponent();
        // y = 0 is a node of the frame grid and x = 0 is a node of the
        // snapshot grid, so this composition is two exact node reads.
        let center_index = y_grid.nodes.iter().position(|&y| y == 0.0).unwrap();
        let expect = tau.powf(beta) * 7.0;
        let got = frame.w.values[center_index];
        assert!(
            (got - expect).abs() <= 1e-15 * expect.abs(),
            "center value {} vs {}",
            got,
            expect
        );
        assert_eq!(frame.s, -tau.ln());
    }

    #[test]
    fn exact_selfsimilar_constant_maps_to_a_constant_frame() {
        // u(x, t) = kappa (T-t)^{-beta}, constant in x (whole-space
        // idealization, boundary condition ignored on purpose).
        let spec = interval_spec(3.0);
        let grid = Arc::new(build_grid(GridKind::Interval, 1, 1.0, 64).unwrap());
        let t_blowup = 0.5;
        let kappa = 2.2;
        let beta = spec.scaling_exponent();
        for &t in &[0.1_f64, 0.3, 0.45] {
            let amplitude = kappa * (t_blowup - t).powf(-beta);
            let u = Field::sample(&grid, t, |_| amplitude).unwrap();
            let y_grid = frame_grid(&spec, 16.0, 256).unwrap();
            let frame = to_selfsimilar_frame(&u, &spec, 0.0, t_blowup, &y_grid).unwrap();
            for (&y, &w) in y_grid.nodes.iter().zip(&frame.w.values) {
                if y.abs() <= frame.omega_s_radius {
                    assert!(
                        (w - kappa).abs() <= 1e-12 * kappa,
                        "t = {}: w({}) = {} (kappa = {})",
                        t,
                        y,
                        w,
                        kappa
                    );
                } else {
                    assert_eq!(w, 0.0, "beyond the domain image w must vanish");
                }
            }
        }
    }

    #[test]
    fn zero_snapshot_maps_to_the_zero_frame() {
        let spec = ball_spec(2.0);
        let grid = Arc::new(build_grid(GridKind::Radial, 3, 1.0, 64).unwrap());
        let u = Field::sample(&grid, 0.0, |_| 0.0).unwrap();
        let y_grid = frame_grid(&spec, 16.0, 256).unwrap();
        let frame = to_selfsimilar_frame(&u, &spec, 0.0, 0.25, &y_grid).unwrap();
        assert!(frame.w.values.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn frame_rejects_times_at_or_past_blowup() {
        let spec = interval_spec(2.0);
        let grid = Arc::new(build_grid(GridKind::Interval, 1, 1.0, 64).unwrap());
        let u = Field::sample(&grid, 0.5, |x| 1.0 - x * x).unwrap();
        let y_grid = frame_grid(&spec, 16.0, 256).unwrap();
        assert!(to_selfsimilar_frame(&u, &spec, 0.0, 0.5, &y_grid).is_err());
        assert!(to_selfsimilar_frame(&u, &spec, 0.0, 0.4, &y_grid).is_err());
    }

    /// Deterministic pseudo-random smooth field: a short sine series with
    /// xorshift-drawn coefficients under a Gaussian envelope.
    fn wavy(seed: u64) -> impl Fn(f64) -> f64 {
        let mut state = seed.max(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1000) as f64 / 1000.0 - 0.5
        };
        let coefficients: Vec<f64> = (0..6).map(|_| next()).collect();
        move |y: f64| {
            let mut acc = 0.0;
            for (j, c) in coefficients.iter().enumerate() {
                acc += c * ((j as f64 + 1.0) * 0.7 * y + 0.3 * j as f64).sin();
            }
            acc * (-y * y / 8.0).exp()
        }
    }

    #[test]
    fn window_identity_links_the_two_local_energies() {
        let spec = interval_spec(2.0);
        for seed in [3, 71, 1234] {
            let frame = synthetic_frame(&spec, 16.0, 2048, 0.0, wavy(seed));
            let vbar = constant_vbar(&frame, 1.0);
            let cutoff = CutoffSpec { center: 0.5, radius: 3.0 };
            let local = local_energies(&frame, &vbar, &spec, &cutoff).unwrap();
            let scale = local.windowed_field_energy.abs().max(1.0);
            assert!(
                local.mismatch <= 1e-10 * scale,
                "seed {}: mismatch {} at scale {}",
                seed,
                local.mismatch,
                scale
            );
            assert!(local.coupling.abs() > 0.0, "coupling should be generically nonzero");
        }
    }

    #[test]
    fn trivial_window_recovers_the_global_energy() {
        let spec = ball_spec(2.0);
        let frame = synthetic_frame(&spec, 16.0, 1024, 0.0, |y| (-y * y / 4.0).exp());
        let vbar = constant_vbar(&frame, 1.0);
        // Window flat at 1 out to |y| = 8; the transition shell [8, 16]
        // only sees the doubly-Gaussian tail of the integrands.
        let cutoff = CutoffSpec { center: 0.0, radius: 8.0 };
        let local = local_energies(&frame, &vbar, &spec, &cutoff).unwrap();
        let global = energy_moment(&frame, &vbar, &spec, 0).unwrap();
        assert!(
            (local.masked_energy - global).abs() <= 1e-12 * (1.0 + global.abs()),
            "masked {} vs global {}",
            local.masked_energy,
            global
        );
        assert!(
            (local.windowed_field_energy - global).abs() <= 1e-12 * (1.0 + global.abs()),
            "windowed {} vs global {}",
            local.windowed_field_energy,
            global
        );
        assert!(local.coupling.abs() <= 1e-15, "tail coupling {}", local.coupling);
    }

    #[test]
    fn window_support_must_fit_the_grid() {
        let spec = interval_spec(2.0);
        let frame = synthetic_frame(&spec, 16.0, 512, 0.0, |_| 1.0);
        let vbar = constant_vbar(&frame, 1.0);
        let cutoff = CutoffSpec { center: 4.0, radius: 7.0 };
        assert!(local_energies(&frame, &vbar, &spec, &cutoff).is_err());
    }

    #[test]
    fn window_profile_is_a_partition_between_one_and_zero() {
        let cutoff = CutoffSpec { center: 0.0, radius: 2.0 };
        assert_eq!(cutoff.value(1.99), 1.0);
        assert_eq!(cutoff.value(-1.5), 1.0);
        assert_eq!(cutoff.value(4.01), 0.0);
        assert_eq!(cutoff.slope(1.0), 0.0);
        assert_eq!(cutoff.slope(5.0), 0.0);
        let mid = cutoff.value(3.0);
        assert!((mid - 0.5).abs() < 1e-12, "half-way value {}", mid);
        // Slope is continuous at the seams.
        for &edge in &[2.0, 4.0] {
            let inner = cutoff.slope(edge - 1e-7);
            let outer = cutoff.slope(edge + 1e-7);
            assert!(
                (inner - outer).abs() < 1e-5,
                "slope jumps at {}: {} vs {}",
                edge,
                inner,
                outer
            );
        }
        // Odd symmetry of the slope.
        assert!((cutoff.slope(3.1) + cutoff.slope(-3.1)).abs() < 1e-15);
    }

    /// Steady constant frames: w equals the plateau constant at every s.
    fn steady_frames(spec: &ProblemSpec, count: usize, ds: f64) -> Vec<SelfSimilarFrame> {
        let plateau = plateau_constant(spec, 0.0);
        (0..count)
            .map(|j| synthetic_frame(spec, 16.0, 1024, 1.0 + j as f64 * ds, |_| plateau))
            .collect()
    }

    #[test]
    fn steady_frames_satisfy_every_identity_to_rounding() {
        let spec = ball_spec(2.0);
        let frames = steady_frames(&spec, 3, 0.25);
        let vbars: Vec<Vec<f64>> =
            frames.iter().map(|f| effective_potential(&spec, f)).collect();
        for kind in [
            IdentityKind::Variance,
            IdentityKind::WeightedVariance(1),
            IdentityKind::WeightedVariance(2),
            IdentityKind::WeightedVariance(3),
            IdentityKind::Dissipation,
            IdentityKind::Pohozaev { linear_coefficient: 0.0 },
        ] {
            let check = identity_residual(
                &frames[0], &frames[1], &frames[2], &vbars[0], &vbars[1], &vbars[2], &spec,
                kind,
            )
            .unwrap();
            assert!(
                check.residual <= 1e-10,
                "{:?}: steady residual {}",
                kind,
                check.residual
            );
            let has_flux_term = matches!(
                kind,
                IdentityKind::Dissipation | IdentityKind::Pohozaev { .. }
            );
            assert_eq!(
                check.boundary_dropped, has_flux_term,
                "{:?}: infinite domain image must drop the flux term if the identity has one",
                kind
            );
        }
    }

    #[test]
    fn identity_checks_reject_unequal_spacing_and_mismatched_grids() {
        let spec = ball_spec(2.0);
        let frames = steady_frames(&spec, 3, 0.25);
        let vbars: Vec<Vec<f64>> =
            frames.iter().map(|f| effective_potential(&spec, f)).collect();
        let mut skewed = frames.clone();
        skewed[2].s += 0.1;
        assert!(identity_residual(
            &skewed[0], &skewed[1], &skewed[2], &vbars[0], &vbars[1], &vbars[2], &spec,
            IdentityKind::Variance,
        )
        .is_err());
        let mut alien = frames.clone();
        alien[2] = synthetic_frame(&spec, 16.0, 512, frames[2].s, |_| 1.0);
        assert!(identity_residual(
            &alien[0], &alien[1], &alien[2], &vbars[0], &vbars[1], &vbars[2], &spec,
            IdentityKind::Variance,
        )
        .is_err());
    }

    #[test]
    fn pohozaev_parts_reject_interval_frames() {
        let spec = interval_spec(2.0);
        let frames = steady_frames(&spec, 3, 0.25);
        let vbar = effective_potential(&spec, &frames[1]);
        assert!(pohozaev_parts(&frames[0], &frames[1], &frames[2], &vbar, &spec).is_err());
    }

    #[test]
    fn pohozaev_fit_is_zero_on_gradient_free_frames() {
        assert_eq!(fit_pohozaev_coefficient(&[]), 0.0);
        let degenerate = PohozaevParts { imbalance: 0.3, gradient_mass: 0.0, boundary_dropped: true };
        assert_eq!(fit_pohozaev_coefficient(&[degenerate]), 0.0);
        // With gradient mass, the one-triple fit is exact.
        let one = PohozaevParts { imbalance: 1.5, gradient_mass: 0.5, boundary_dropped: false };
        assert!((fit_pohozaev_coefficient(&[one]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn monotonicity_defect_flags_increases_only() {
        assert_eq!(monotonicity_defect(&[3.0, 2.0, 1.5, 1.5]), 0.0);
        let defect = monotonicity_defect(&[3.0, 2.0, 2.4, 1.0]);
        assert!((defect - 0.4).abs() < 1e-15, "defect {}", defect);
    }

    #[test]
    fn synthetic_relaxation_has_the_exact_core_deviation() {
        let spec = ball_spec(2.0);
        let plateau = plateau_constant(&spec, 0.0);
        let frames: Vec<SelfSimilarFrame> = (0..4)
            .map(|j| {
                let s = 1.0 + 0.5 * j as f64;
                let value = plateau * (1.0 + (-s / 2.0).exp());
                synthetic_frame(&spec, 16.0, 512, s, move |_| value)
            })
            .collect();
        let series = limit_convergence_series(&frames, &spec);
        for (s, deviation) in series {
            let expect = plateau * (-s / 2.0).exp();
            assert!(
                (deviation - expect).abs() <= 1e-12 * expect,
                "s = {}: deviation {} vs {}",
                s,
                deviation,
                expect
            );
        }
    }

    #[test]
    fn energy_report_on_steady_frames_is_flat_with_vanishing_residuals() {
        let spec = ball_spec(2.0);
        let frames = steady_frames(&spec, 5, 0.25);
        let report = energy_report(&frames, &spec).unwrap();
        assert_eq!(report.frames.len(), 5);
        assert!(report.frames[0].residual_variance.is_none());
        assert!(report.frames[4].residual_variance.is_none());
        let e0 = report.frames[0].energy;
        for row in &report.frames {
            assert!((row.energy - e0).abs() <= 1e-12 * e0.abs());
            assert!(row.core_deviation <= 1e-12);
            if let Some(r) = row.residual_variance {
                assert!(r <= 1e-10, "variance residual {}", r);
            }
            if let Some(r) = row.residual_weighted_variance {
                assert!(r <= 1e-10, "weighted variance residual {}", r);
            }
            if let Some(r) = row.residual_dissipation {
                assert!(r <= 1e-10, "dissipation residual {}", r);
            }
            if let Some(r) = row.residual_pohozaev {
                assert!(r <= 1e-10, "scaling residual {}", r);
            }
        }
        let energies: Vec<f64> = report.frames.iter().map(|f| f.energy).collect();
        assert!(monotonicity_defect(&energies) <= 1e-12);
        assert_eq!(report.pohozaev_coefficient, Some(0.0));
    }
}
